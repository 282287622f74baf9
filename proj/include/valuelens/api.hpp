#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "valuelens/common.hpp"
#include "valuelens/platform.hpp"

namespace valuelens {

struct ApiRequest {
    std::string method = "GET";
    std::string path;
    std::multimap<std::string, std::string> params;
    std::map<std::string, std::string> headers;  // lower-case names
    std::string body;
};

struct ApiResponse {
    int status = 200;
    json body;
};

int http_status(ErrorCode code);
json error_body(ErrorCode code, const std::string& message);

// "dim=w,dim=w" -> pairs; weights must sum to 1 within 1e-6 and are then rescaled to
// sum exactly 1.
std::vector<std::pair<std::string, double>> parse_weights(const std::string& text);

struct ServiceOptions {
    std::optional<std::string> operator_token;  // POST /runs disabled when unset
    std::shared_ptr<HttpTransport> transport;
};

// Request handler for the /api/v1 surface. Read endpoints always answer from the
// last complete run; POST /runs is single-writer.
class ApiService {
public:
    ApiService(DataStore& store, const TaxonomyRegistry& taxonomy, ServiceOptions options = {});

    ApiResponse handle(const ApiRequest& request);

private:
    ApiResponse systems(const ApiRequest& r);
    ApiResponse models(const ApiRequest& r);
    ApiResponse leaderboard_view(const ApiRequest& r);
    ApiResponse model_detail(const ApiRequest& r, const std::string& model_id);
    ApiResponse compare(const ApiRequest& r);
    ApiResponse culture_correlations(const ApiRequest& r);
    ApiResponse culture_projection(const ApiRequest& r);
    ApiResponse items(const ApiRequest& r);
    ApiResponse post_run(const ApiRequest& r);

    DataStore& store_;
    const TaxonomyRegistry& taxonomy_;
    ServiceOptions options_;
    std::mutex writer_;
};

// Socket front end for ApiService.
class ApiServer {
public:
    explicit ApiServer(ApiService& service);
    ~ApiServer();

    // "host:port"; an empty host means 127.0.0.1 and port 0 picks a free port.
    // Returns the bound address as "host:port".
    std::string bind(const std::string& address);
    void listen();  // blocks until stop()
    void start();   // listen() on a background thread
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace valuelens
