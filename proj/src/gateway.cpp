#include "valuelens/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace valuelens {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

BackendKind parse_kind(const std::string& s) {
    if (s == "remote") return BackendKind::remote;
    if (s == "scripted") return BackendKind::scripted;
    throw Error(ErrorCode::parse, "unknown backend kind '" + s + "'");
}

}  // namespace

void to_json(json& j, const ResponseScript& script) {
    json rules = json::array();
    for (const auto& r : script.rules) rules.push_back({{"keyword", r.keyword}, {"responses", r.responses}});
    j = json{{"table", script.table}, {"rules", rules}, {"fallback", script.fallback}};
}

void from_json(const json& j, ResponseScript& script) {
    script = {};
    if (auto t = j.find("table"); t != j.end()) {
        for (const auto& [item_id, texts] : t->items()) {
            script.table[item_id] = texts.is_string() ? std::vector<std::string>{texts.get<std::string>()}
                                                      : texts.get<std::vector<std::string>>();
        }
    }
    if (auto r = j.find("rules"); r != j.end()) {
        for (const auto& rule : *r) {
            ScriptRule sr;
            rule.at("keyword").get_to(sr.keyword);
            rule.at("responses").get_to(sr.responses);
            script.rules.push_back(std::move(sr));
        }
    }
    if (auto f = j.find("fallback"); f != j.end()) {
        script.fallback = f->is_string() ? std::vector<std::string>{f->get<std::string>()}
                                         : f->get<std::vector<std::string>>();
    }
}

void to_json(json& j, const ModelBackend& b) {
    j = json{{"model_id", b.model_id},
             {"kind", b.kind == BackendKind::remote ? "remote" : "scripted"},
             {"path", b.path},
             {"remote_model", b.remote_model},
             {"sampling", {{"temperature", b.sampling.temperature}, {"max_tokens", b.sampling.max_tokens}}},
             {"rate_limit", b.rate_limit_rpm},
             {"max_in_flight", b.max_in_flight},
             {"retry_attempts", b.retry_attempts},
             {"retry_backoff_ms", b.retry_backoff_ms},
             {"rate_wait_ms", b.rate_wait_ms},
             {"metadata", {{"developer", b.metadata.developer}, {"release_date", b.metadata.release_date}}}};
    if (b.endpoint) j["endpoint"] = *b.endpoint;
    if (b.auth_env) j["auth_env"] = *b.auth_env;
    if (b.script) j["script"] = *b.script;
}

void from_json(const json& j, ModelBackend& b) {
    b = {};
    j.at("model_id").get_to(b.model_id);
    b.kind = parse_kind(j.value("kind", std::string("scripted")));
    if (auto e = j.find("endpoint"); e != j.end() && !e->is_null()) b.endpoint = e->get<std::string>();
    b.path = j.value("path", b.path);
    b.remote_model = j.value("remote_model", std::string());
    if (auto a = j.find("auth_env"); a != j.end() && !a->is_null()) b.auth_env = a->get<std::string>();
    if (auto s = j.find("sampling"); s != j.end()) {
        b.sampling.temperature = s->value("temperature", b.sampling.temperature);
        b.sampling.max_tokens = s->value("max_tokens", b.sampling.max_tokens);
    }
    b.rate_limit_rpm = j.value("rate_limit", b.rate_limit_rpm);
    b.max_in_flight = j.value("max_in_flight", b.max_in_flight);
    b.retry_attempts = j.value("retry_attempts", b.retry_attempts);
    b.retry_backoff_ms = j.value("retry_backoff_ms", b.retry_backoff_ms);
    b.rate_wait_ms = j.value("rate_wait_ms", b.rate_wait_ms);
    if (auto m = j.find("metadata"); m != j.end()) {
        b.metadata.developer = m->value("developer", std::string());
        b.metadata.release_date = m->value("release_date", std::string());
    }
    if (auto s = j.find("script"); s != j.end() && !s->is_null()) b.script = s->get<ResponseScript>();
}

void to_json(json& j, const ModelResponse& r) {
    j = json{{"model_id", r.model_id}, {"item_id", r.item_id}, {"sample_index", r.sample_index},
             {"text", r.text},         {"seed", r.seed},       {"created_at", r.created_at}};
}

void from_json(const json& j, ModelResponse& r) {
    j.at("model_id").get_to(r.model_id);
    j.at("item_id").get_to(r.item_id);
    j.at("sample_index").get_to(r.sample_index);
    j.at("text").get_to(r.text);
    j.at("seed").get_to(r.seed);
    r.created_at = j.value("created_at", std::int64_t{0});
}

std::string scripted_reply(const ResponseScript& script, const TestItem& item, int sample_index, std::int64_t seed) {
    const std::vector<std::string>* options = nullptr;
    if (auto it = script.table.find(item.item_id); it != script.table.end()) {
        options = &it->second;
    } else {
        auto text = lower(item.text);
        for (const auto& rule : script.rules) {
            if (text.find(lower(rule.keyword)) != std::string::npos) {
                options = &rule.responses;
                break;
            }
        }
    }
    if (options == nullptr) options = &script.fallback;
    if (options->empty()) return {};

    // Consecutive sample indices walk the list, starting at a seed/item-dependent offset.
    auto offset = stable_hash64(std::to_string(seed) + "|" + item.item_id) % options->size();
    auto reply = (*options)[(offset + static_cast<std::size_t>(sample_index)) % options->size()];
    replace_all(reply, "{item_id}", item.item_id);
    replace_all(reply, "{item_text}", item.text);
    replace_all(reply, "{sample_index}", std::to_string(sample_index));
    return reply;
}

// ---------------------------------------------------------------------------

SecondsClock steady_seconds_clock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

RateLimiter::RateLimiter(int requests_per_minute, SecondsClock clock)
    : limit_(requests_per_minute), clock_(std::move(clock)) {
    if (limit_ <= 0) throw Error(ErrorCode::invalid_argument, "rate limit must be positive");
}

void RateLimiter::acquire() {
    std::lock_guard lock(mu_);
    double now = clock_();
    while (!stamps_.empty() && now - stamps_.front() >= 60.0) stamps_.pop_front();
    if (static_cast<int>(stamps_.size()) >= limit_) {
        throw RateLimitedError("rate limit of " + std::to_string(limit_) + " requests/minute exhausted",
                               stamps_.front() + 60.0 - now);
    }
    stamps_.push_back(now);
}

InFlightLimiter::InFlightLimiter(int max_in_flight) : max_(max_in_flight) {
    if (max_ <= 0) throw Error(ErrorCode::invalid_argument, "in-flight bound must be positive");
}

void InFlightLimiter::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < max_; });
    ++active_;
}

void InFlightLimiter::release() {
    {
        std::lock_guard lock(mu_);
        --active_;
    }
    cv_.notify_one();
}

void to_json(json& j, const ChatEndpoint& e) {
    j = json{{"endpoint", e.base_url},
             {"path", e.path},
             {"model", e.model},
             {"sampling", {{"temperature", e.sampling.temperature}, {"max_tokens", e.sampling.max_tokens}}},
             {"rate_limit", e.rate_limit_rpm},
             {"max_in_flight", e.max_in_flight},
             {"retry_attempts", e.retry_attempts},
             {"retry_backoff_ms", e.retry_backoff_ms},
             {"rate_wait_ms", e.rate_wait_ms}};
    if (e.auth_env) j["auth_env"] = *e.auth_env;
}

void from_json(const json& j, ChatEndpoint& e) {
    e = {};
    j.at("endpoint").get_to(e.base_url);
    e.path = j.value("path", e.path);
    e.model = j.value("model", std::string());
    if (auto a = j.find("auth_env"); a != j.end() && !a->is_null()) e.auth_env = a->get<std::string>();
    if (auto s = j.find("sampling"); s != j.end()) {
        e.sampling.temperature = s->value("temperature", e.sampling.temperature);
        e.sampling.max_tokens = s->value("max_tokens", e.sampling.max_tokens);
    }
    e.rate_limit_rpm = j.value("rate_limit", e.rate_limit_rpm);
    e.max_in_flight = j.value("max_in_flight", e.max_in_flight);
    e.retry_attempts = j.value("retry_attempts", e.retry_attempts);
    e.retry_backoff_ms = j.value("retry_backoff_ms", e.retry_backoff_ms);
    e.rate_wait_ms = j.value("rate_wait_ms", e.rate_wait_ms);
}

ChatClient::ChatClient(ChatEndpoint endpoint, std::shared_ptr<HttpTransport> transport, SecondsClock clock)
    : endpoint_(std::move(endpoint)),
      transport_(std::move(transport)),
      rate_(endpoint_.rate_limit_rpm, std::move(clock)),
      in_flight_(endpoint_.max_in_flight) {
    if (!transport_) throw Error(ErrorCode::invalid_argument, "chat client requires a transport");
    if (endpoint_.retry_attempts < 1) endpoint_.retry_attempts = 1;
}

std::string ChatClient::complete(const std::vector<ChatMessage>& messages, std::int64_t seed) {
    json body{{"model", endpoint_.model},
              {"temperature", endpoint_.sampling.temperature},
              {"max_tokens", endpoint_.sampling.max_tokens},
              {"seed", seed}};
    body["messages"] = json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});

    HttpRequest req;
    req.base_url = endpoint_.base_url;
    req.path = endpoint_.path;
    req.body = body.dump();
    req.headers.emplace_back("Content-Type", "application/json");
    if (endpoint_.auth_env) {
        const char* token = std::getenv(endpoint_.auth_env->c_str());
        if (token == nullptr) throw Error(ErrorCode::auth_missing, "environment variable " + *endpoint_.auth_env + " not set");
        req.headers.emplace_back("Authorization", std::string("Bearer ") + token);
    }

    std::string last_error;
    std::optional<double> last_retry_after;
    bool last_was_rate_limit = false;
    auto backoff = std::chrono::milliseconds(endpoint_.retry_backoff_ms);
    for (int attempt = 1; attempt <= endpoint_.retry_attempts; ++attempt) {
        double waited_ms = 0;
        for (;;) {
            try {
                rate_.acquire();
                break;
            } catch (const RateLimitedError& e) {
                double wait_ms = e.retry_after_seconds() * 1000.0;
                if (waited_ms + wait_ms > endpoint_.rate_wait_ms) throw;
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(wait_ms));
                waited_ms += wait_ms;
            }
        }

        in_flight_.acquire();
        HttpResponse resp;
        try {
            resp = transport_->post(req);
        } catch (...) {
            in_flight_.release();
            throw;
        }
        in_flight_.release();

        if (resp.status == 200) {
            try {
                auto reply = json::parse(resp.body);
                return reply.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const std::exception& e) {
                throw Error(ErrorCode::unparseable, "malformed completion body: " + std::string(e.what()));
            }
        }
        last_was_rate_limit = resp.status == 429;
        last_retry_after = resp.retry_after_seconds;
        last_error = resp.status == 0 ? "connection failed" : "HTTP " + std::to_string(resp.status);
        bool retryable = resp.status == 0 || resp.status == 429 || resp.status >= 500;
        if (!retryable) {
            throw TransportError(endpoint_.base_url + endpoint_.path + ": " + last_error, attempt);
        }
        if (attempt < endpoint_.retry_attempts) {
            auto wait = backoff;
            if (last_retry_after) {
                wait = std::max(wait, std::chrono::milliseconds(static_cast<long>(*last_retry_after * 1000.0)));
            }
            spdlog::debug("{}: {} (attempt {}), retrying in {} ms", endpoint_.base_url, last_error, attempt,
                          wait.count());
            std::this_thread::sleep_for(wait);
            backoff *= 2;
        }
    }
    if (last_was_rate_limit) {
        throw RateLimitedError(endpoint_.base_url + ": rate limited after " +
                                   std::to_string(endpoint_.retry_attempts) + " attempts",
                               last_retry_after.value_or(0.0));
    }
    throw TransportError(endpoint_.base_url + endpoint_.path + ": " + last_error + " after " +
                             std::to_string(endpoint_.retry_attempts) + " attempts",
                         endpoint_.retry_attempts);
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(ResponseCache&& other) noexcept {
    std::unique_lock lock(other.mu_);
    entries_ = std::move(other.entries_);
}

ResponseCache& ResponseCache::operator=(ResponseCache&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mu_, other.mu_);
        entries_ = std::move(other.entries_);
    }
    return *this;
}

std::optional<std::string> ResponseCache::get(const CacheKey& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(const CacheKey& key, std::string text) {
    std::unique_lock lock(mu_);
    entries_.insert_or_assign(key, std::move(text));
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

void ResponseCache::save(const std::filesystem::path& path) const {
    std::shared_lock lock(mu_);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        for (const auto& [k, text] : entries_) {
            json rec{{"model_id", k.model_id},   {"item_id", k.item_id},
                     {"sample_index", k.sample_index}, {"seed", k.seed},
                     {"sampling_hash", k.sampling_hash}, {"text", text}};
            out << rec.dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

ResponseCache ResponseCache::load(const std::filesystem::path& path) {
    ResponseCache cache;
    std::ifstream in(path);
    if (!in) return cache;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto rec = json::parse(line);
            CacheKey k{rec.at("model_id"), rec.at("item_id"), rec.at("sample_index"), rec.at("seed"),
                       rec.at("sampling_hash")};
            cache.entries_[k] = rec.at("text").get<std::string>();
        } catch (const std::exception& e) {
            throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cache;
}

std::string sampling_hash(const SamplingConfig& sampling) {
    json j{{"temperature", sampling.temperature}, {"max_tokens", sampling.max_tokens}};
    return sha256_hex(j.dump()).substr(0, 16);
}

// ---------------------------------------------------------------------------

ModelPool::ModelPool(std::shared_ptr<HttpTransport> transport) : transport_(std::move(transport)) {}

ModelPool::Entry ModelPool::make_entry(ModelBackend config) const {
    if (config.model_id.empty()) throw Error(ErrorCode::invalid_argument, "model_id must be non-empty");
    if (config.sampling.temperature < 0) throw Error(ErrorCode::invalid_argument, config.model_id + ": temperature < 0");
    if (config.sampling.max_tokens <= 0) throw Error(ErrorCode::invalid_argument, config.model_id + ": max_tokens <= 0");
    if (config.rate_limit_rpm <= 0) throw Error(ErrorCode::invalid_argument, config.model_id + ": rate_limit <= 0");

    Entry entry;
    if (config.kind == BackendKind::remote) {
        if (!config.endpoint || config.endpoint->empty()) {
            throw Error(ErrorCode::invalid_argument, config.model_id + ": remote backend requires an endpoint");
        }
        if (config.auth_env && std::getenv(config.auth_env->c_str()) == nullptr) {
            throw Error(ErrorCode::auth_missing,
                        config.model_id + ": environment variable " + *config.auth_env + " not set");
        }
        ChatEndpoint ep;
        ep.base_url = *config.endpoint;
        ep.path = config.path;
        ep.model = config.remote_model.empty() ? config.model_id : config.remote_model;
        ep.auth_env = config.auth_env;
        ep.sampling = config.sampling;
        ep.rate_limit_rpm = config.rate_limit_rpm;
        ep.max_in_flight = config.max_in_flight;
        ep.retry_attempts = config.retry_attempts;
        ep.retry_backoff_ms = config.retry_backoff_ms;
        ep.rate_wait_ms = config.rate_wait_ms;
        auto transport = transport_ ? transport_ : make_http_transport();
        entry.client = std::make_shared<ChatClient>(std::move(ep), std::move(transport));
    } else if (!config.script) {
        throw Error(ErrorCode::invalid_argument, config.model_id + ": scripted backend requires a script");
    }
    entry.config = std::move(config);
    return entry;
}

void ModelPool::register_backend(ModelBackend config) {
    auto entry = make_entry(std::move(config));
    std::unique_lock lock(mu_);
    auto id = entry.config.model_id;
    if (backends_.count(id)) throw Error(ErrorCode::duplicate, "model '" + id + "' already registered");
    backends_.emplace(id, std::move(entry));
}

void ModelPool::update_backend(ModelBackend config) {
    auto entry = make_entry(std::move(config));
    std::unique_lock lock(mu_);
    auto it = backends_.find(entry.config.model_id);
    if (it == backends_.end()) throw Error(ErrorCode::not_found, "unknown model '" + entry.config.model_id + "'");
    it->second = std::move(entry);
}

std::size_t ModelPool::size() const {
    std::shared_lock lock(mu_);
    return backends_.size();
}

std::vector<std::string> ModelPool::model_ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, _] : backends_) ids.push_back(id);
    return ids;
}

ModelBackend ModelPool::backend(const std::string& model_id) const {
    std::shared_lock lock(mu_);
    auto it = backends_.find(model_id);
    if (it == backends_.end()) throw Error(ErrorCode::not_found, "unknown model '" + model_id + "'");
    return it->second.config;
}

bool ModelPool::contains(const std::string& model_id) const {
    std::shared_lock lock(mu_);
    return backends_.count(model_id) > 0;
}

std::string ModelPool::fingerprint() const {
    std::shared_lock lock(mu_);
    json j = json::array();
    for (const auto& [id, e] : backends_) {
        j.push_back({id, e.config.sampling.temperature, e.config.sampling.max_tokens});
    }
    return sha256_hex(j.dump()).substr(0, 32);
}

void ModelPool::set_cache(ResponseCache&& cache) { cache_ = std::move(cache); }

std::vector<ModelResponse> ModelPool::sample_responses(const std::string& model_id, const TestItem& item, int n,
                                                       std::int64_t seed) {
    if (n <= 0) throw Error(ErrorCode::invalid_argument, "sample count must be positive");
    if (item.text.empty()) throw Error(ErrorCode::invalid_argument, "item " + item.item_id + " has empty text");

    ModelBackend config;
    std::shared_ptr<ChatClient> client;
    {
        std::shared_lock lock(mu_);
        auto it = backends_.find(model_id);
        if (it == backends_.end()) throw Error(ErrorCode::not_found, "unknown model '" + model_id + "'");
        config = it->second.config;
        client = it->second.client;
    }
    auto shash = sampling_hash(config.sampling);
    auto created = now_seconds();

    std::vector<ModelResponse> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        CacheKey key{model_id, item.item_id, k, seed, shash};
        ModelResponse r{model_id, item.item_id, k, {}, seed, created};
        // Scripted replies are pure and cheap; caching them would only go stale when a
        // script is edited.
        if (config.kind == BackendKind::scripted) {
            r.text = scripted_reply(*config.script, item, k, seed);
        } else if (auto hit = cache_.get(key)) {
            r.text = std::move(*hit);
        } else {
            auto wire_seed = static_cast<std::int64_t>(
                stable_hash64(std::to_string(seed) + "|" + item.item_id + "|" + std::to_string(k)) >> 1);
            ++remote_requests_;
            r.text = client->complete({{"user", item.text}}, wire_seed);
            cache_.put(key, r.text);
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace valuelens
