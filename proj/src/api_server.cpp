#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <algorithm>
#include <cctype>

#include "valuelens/api.hpp"

namespace valuelens {

struct ApiServer::Impl {
    ApiService& service;
    httplib::Server server;
    std::thread thread;
    bool bound = false;

    explicit Impl(ApiService& s) : service(s) {
        auto handler = [this](const httplib::Request& req, httplib::Response& res) {
            ApiRequest r;
            r.method = req.method;
            r.path = req.path;
            for (const auto& [k, v] : req.params) r.params.emplace(k, v);
            for (const auto& [k, v] : req.headers) {
                std::string key = k;
                std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
                r.headers[key] = v;
            }
            r.body = req.body;
            auto out = service.handle(r);
            res.status = out.status;
            res.set_content(out.body.dump(), "application/json");
        };
        server.Get(".*", handler);
        server.Post(".*", handler);
    }
};

ApiServer::ApiServer(ApiService& service) : impl_(std::make_unique<Impl>(service)) {}

ApiServer::~ApiServer() { stop(); }

std::string ApiServer::bind(const std::string& address) {
    auto colon = address.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::invalid_argument, "address must be host:port");
    std::string host = address.substr(0, colon);
    if (host.empty()) host = "127.0.0.1";
    int port = 0;
    try {
        port = std::stoi(address.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "bad port in '" + address + "'");
    }
    if (port < 0 || port > 65535) throw Error(ErrorCode::invalid_argument, "bad port in '" + address + "'");
    if (port == 0) {
        port = impl_->server.bind_to_any_port(host);
        if (port < 0) throw Error(ErrorCode::io, "cannot bind " + host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    impl_->bound = true;
    return host + ":" + std::to_string(port);
}

void ApiServer::listen() {
    if (!impl_->bound) throw Error(ErrorCode::invalid_argument, "server not bound");
    impl_->server.listen_after_bind();
}

void ApiServer::start() {
    if (!impl_->bound) throw Error(ErrorCode::invalid_argument, "server not bound");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void ApiServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace valuelens
