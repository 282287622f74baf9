#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/items.hpp"

namespace valuelens {

struct SamplingConfig {
    double temperature = 0.7;
    int max_tokens = 512;

    bool operator==(const SamplingConfig&) const = default;
};

struct ModelMetadata {
    std::string developer;
    std::string release_date;

    bool operator==(const ModelMetadata&) const = default;
};

// Offline "respond by table" / "respond by rule" backend definition. Response texts
// may contain {item_id}, {item_text} and {sample_index} placeholders.
struct ScriptRule {
    std::string keyword;  // case-insensitive substring of the item text
    std::vector<std::string> responses;

    bool operator==(const ScriptRule&) const = default;
};

struct ResponseScript {
    std::map<std::string, std::vector<std::string>> table;
    std::vector<ScriptRule> rules;  // first match wins
    std::vector<std::string> fallback;

    bool operator==(const ResponseScript&) const = default;
};

enum class BackendKind { remote, scripted };

struct ModelBackend {
    std::string model_id;
    BackendKind kind = BackendKind::scripted;
    std::optional<std::string> endpoint;  // base URL, e.g. https://api.example.com
    std::string path = "/v1/chat/completions";
    std::string remote_model;  // model name sent on the wire; defaults to model_id
    std::optional<std::string> auth_env;
    SamplingConfig sampling;
    int rate_limit_rpm = 60;
    int max_in_flight = 4;
    int retry_attempts = 3;
    int retry_backoff_ms = 1000;
    int rate_wait_ms = 60000;
    ModelMetadata metadata;
    std::optional<ResponseScript> script;

    bool operator==(const ModelBackend&) const = default;
};

void to_json(json& j, const ResponseScript& script);
void from_json(const json& j, ResponseScript& script);
void to_json(json& j, const ModelBackend& backend);
// Does not resolve "script_path"; callers that read config files do that.
void from_json(const json& j, ModelBackend& backend);

struct ModelResponse {
    std::string model_id;
    std::string item_id;
    int sample_index = 0;
    std::string text;
    std::int64_t seed = 0;
    std::int64_t created_at = 0;

    bool operator==(const ModelResponse&) const = default;
};

void to_json(json& j, const ModelResponse& r);
void from_json(const json& j, ModelResponse& r);

// Deterministic scripted reply for (item, sample_index, seed).
std::string scripted_reply(const ResponseScript& script, const TestItem& item, int sample_index, std::int64_t seed);

// ---------------------------------------------------------------------------
// HTTP plumbing shared by every remote component.

struct HttpRequest {
    std::string base_url;
    std::string path;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

struct HttpResponse {
    int status = 0;  // 0: connection failure
    std::string body;
    std::optional<double> retry_after_seconds;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

std::shared_ptr<HttpTransport> make_http_transport();

using SecondsClock = std::function<double()>;
SecondsClock steady_seconds_clock();

// Sliding one-minute window. acquire() throws RateLimitedError when exhausted.
class RateLimiter {
public:
    RateLimiter(int requests_per_minute, SecondsClock clock);
    void acquire();

private:
    int limit_;
    SecondsClock clock_;
    std::mutex mu_;
    std::deque<double> stamps_;
};

// Bounds concurrently running requests; blocks until a slot frees up.
class InFlightLimiter {
public:
    explicit InFlightLimiter(int max_in_flight);
    void acquire();
    void release();

private:
    int max_;
    int active_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatEndpoint {
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model;
    std::optional<std::string> auth_env;
    SamplingConfig sampling;
    int rate_limit_rpm = 60;
    int max_in_flight = 4;
    int retry_attempts = 3;
    int retry_backoff_ms = 1000;
    // Longest wait for a free rate-limit slot before surfacing RateLimitedError.
    int rate_wait_ms = 60000;
};

void to_json(json& j, const ChatEndpoint& e);
void from_json(const json& j, ChatEndpoint& e);

// Chat-completion client: bearer auth, bounded retries with exponential backoff,
// rate limiting and in-flight bounding.
class ChatClient {
public:
    ChatClient(ChatEndpoint endpoint, std::shared_ptr<HttpTransport> transport,
               SecondsClock clock = steady_seconds_clock());

    std::string complete(const std::vector<ChatMessage>& messages, std::int64_t seed);

    const ChatEndpoint& endpoint() const { return endpoint_; }

private:
    ChatEndpoint endpoint_;
    std::shared_ptr<HttpTransport> transport_;
    RateLimiter rate_;
    InFlightLimiter in_flight_;
};

// ---------------------------------------------------------------------------

struct CacheKey {
    std::string model_id;
    std::string item_id;
    int sample_index = 0;
    std::int64_t seed = 0;
    std::string sampling_hash;

    auto operator<=>(const CacheKey&) const = default;
};

// Concurrent readers, serialized writers.
class ResponseCache {
public:
    ResponseCache() = default;
    ResponseCache(ResponseCache&& other) noexcept;
    ResponseCache& operator=(ResponseCache&& other) noexcept;

    std::optional<std::string> get(const CacheKey& key) const;
    void put(const CacheKey& key, std::string text);
    std::size_t size() const;

    // One JSON record per line, sorted by key.
    void save(const std::filesystem::path& path) const;
    static ResponseCache load(const std::filesystem::path& path);

private:
    mutable std::shared_mutex mu_;
    std::map<CacheKey, std::string> entries_;
};

std::string sampling_hash(const SamplingConfig& sampling);

// The evaluated model pool.
class ModelPool {
public:
    explicit ModelPool(std::shared_ptr<HttpTransport> transport = nullptr);

    void register_backend(ModelBackend config);
    // Replaces an existing backend's configuration (e.g. sampling change).
    void update_backend(ModelBackend config);

    std::size_t size() const;
    std::vector<std::string> model_ids() const;
    ModelBackend backend(const std::string& model_id) const;
    bool contains(const std::string& model_id) const;

    // Hash of the sorted model ids together with their sampling configurations.
    std::string fingerprint() const;

    std::vector<ModelResponse> sample_responses(const std::string& model_id, const TestItem& item, int n,
                                                std::int64_t seed);

    ResponseCache& cache() { return cache_; }
    const ResponseCache& cache() const { return cache_; }
    void set_cache(ResponseCache&& cache);

    // Remote completions actually issued (cache misses).
    std::size_t remote_requests() const { return remote_requests_.load(); }

private:
    struct Entry {
        ModelBackend config;
        std::shared_ptr<ChatClient> client;
    };
    Entry make_entry(ModelBackend config) const;

    std::shared_ptr<HttpTransport> transport_;
    mutable std::shared_mutex mu_;
    std::map<std::string, Entry> backends_;
    ResponseCache cache_;
    std::atomic<std::size_t> remote_requests_{0};
};

}  // namespace valuelens
