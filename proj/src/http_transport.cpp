#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "valuelens/gateway.hpp"

namespace valuelens {

namespace {

class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const HttpRequest& request) override {
        httplib::Client client(request.base_url);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : request.headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                headers.emplace(k, v);
            }
        }
        auto res = client.Post(request.path, headers, request.body, content_type);
        HttpResponse out;
        if (!res) return out;
        out.status = res->status;
        out.body = res->body;
        if (res->has_header("Retry-After")) {
            try {
                out.retry_after_seconds = std::stod(res->get_header_value("Retry-After"));
            } catch (const std::exception&) {
            }
        }
        return out;
    }
};

}  // namespace

std::shared_ptr<HttpTransport> make_http_transport() { return std::make_shared<HttplibTransport>(); }

}  // namespace valuelens
