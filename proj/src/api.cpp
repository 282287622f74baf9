#include "valuelens/api.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace valuelens {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(text);
    while (std::getline(in, cur, sep)) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

// Rejects unknown and repeated parameters.
void allow_params(const ApiRequest& r, std::initializer_list<std::string_view> allowed) {
    std::set<std::string> seen;
    for (const auto& [k, _] : r.params) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            throw Error(ErrorCode::invalid_argument, "unknown query parameter '" + k + "'");
        }
        if (!seen.insert(k).second) throw Error(ErrorCode::invalid_argument, "repeated query parameter '" + k + "'");
    }
}

std::optional<std::string> param(const ApiRequest& r, const std::string& name) {
    auto it = r.params.find(name);
    if (it == r.params.end()) return std::nullopt;
    return it->second;
}

std::string required(const ApiRequest& r, const std::string& name) {
    auto v = param(r, name);
    if (!v || v->empty()) throw Error(ErrorCode::invalid_argument, "missing query parameter '" + name + "'");
    return *v;
}

json score_json(const std::optional<double>& s) { return s ? json(*s) : json(nullptr); }

json model_card(const ModelBackend& m, const std::string& status) {
    return json{{"model_id", m.model_id},
                {"developer", m.metadata.developer},
                {"release_date", m.metadata.release_date},
                {"status", status}};
}

// Everything a read endpoint needs from the last complete run covering a system.
struct RunView {
    RunArtifacts artifacts;
    std::string pool_id;
    std::vector<ValueVector> vectors;
    std::map<std::string, ModelMetadata> metadata;
};

RunView run_view(const DataStore& store, const TaxonomyRegistry& taxonomy, const std::string& system_id) {
    if (!taxonomy.contains(system_id)) throw Error(ErrorCode::not_found, "unknown value system '" + system_id + "'");
    auto run_id = latest_complete_run(store, system_id);
    if (!run_id) throw Error(ErrorCode::not_found, "no complete run covers system '" + system_id + "'");
    RunView v;
    v.artifacts = load_run_artifacts(store, *run_id);
    v.pool_id = v.artifacts.record.pools.at(system_id);
    const auto& system = taxonomy.system(system_id);
    v.vectors = value_vectors(system, v.artifacts.record.model_ids, v.artifacts.scores.at(system_id));
    for (const auto& m : v.artifacts.record.config.models) v.metadata[m.model_id] = m.metadata;
    return v;
}

}  // namespace

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::not_found: return 404;
        case ErrorCode::parse:
        case ErrorCode::invalid_argument:
        case ErrorCode::duplicate:
        case ErrorCode::dangling_parent:
        case ErrorCode::count_mismatch: return 400;
        case ErrorCode::auth_missing: return 401;
        case ErrorCode::busy:
        case ErrorCode::stale_pool: return 409;
        case ErrorCode::undefined:
        case ErrorCode::estimation:
        case ErrorCode::run_failed: return 422;
        case ErrorCode::rate_limited: return 429;
        case ErrorCode::transport: return 502;
        default: return 500;
    }
}

json error_body(ErrorCode code, const std::string& message) {
    return json{{"error", {{"code", to_string(code)}, {"message", message}}}};
}

std::vector<std::pair<std::string, double>> parse_weights(const std::string& text) {
    std::vector<std::pair<std::string, double>> out;
    std::set<std::string> seen;
    double sum = 0.0;
    for (const auto& pair : split(text, ',')) {
        auto eq = pair.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw Error(ErrorCode::invalid_argument, "weights entry '" + pair + "' is not dimension=weight");
        }
        auto dim = pair.substr(0, eq);
        auto num = pair.substr(eq + 1);
        double w = 0.0;
        auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), w);
        if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(w) || w < 0.0) {
            throw Error(ErrorCode::invalid_argument, "weight for '" + dim + "' is not a non-negative number");
        }
        if (!seen.insert(dim).second) throw Error(ErrorCode::invalid_argument, "dimension '" + dim + "' weighted twice");
        out.emplace_back(dim, w);
        sum += w;
    }
    if (out.empty()) throw Error(ErrorCode::invalid_argument, "empty weights");
    if (std::abs(sum - 1.0) > 1e-6) {
        throw Error(ErrorCode::invalid_argument, "weights sum to " + std::to_string(sum) + ", expected 1 within 1e-6");
    }
    for (auto& [_, w] : out) w /= sum;
    return out;
}

ApiService::ApiService(DataStore& store, const TaxonomyRegistry& taxonomy, ServiceOptions options)
    : store_(store), taxonomy_(taxonomy), options_(std::move(options)) {}

ApiResponse ApiService::handle(const ApiRequest& request) {
    static const std::string prefix = "/api/v1";
    try {
        if (request.path.rfind(prefix, 0) != 0) throw Error(ErrorCode::not_found, "no such endpoint " + request.path);
        auto route = request.path.substr(prefix.size());
        if (route.size() > 1 && route.back() == '/') route.pop_back();
        const bool get = request.method == "GET";

        if (get && route == "/systems") return systems(request);
        if (get && route == "/models") return models(request);
        if (get && route == "/leaderboard") return leaderboard_view(request);
        if (get && route == "/compare") return compare(request);
        if (get && route == "/culture/correlations") return culture_correlations(request);
        if (get && route == "/culture/projection") return culture_projection(request);
        if (get && route == "/items") return items(request);
        if (request.method == "POST" && route == "/runs") return post_run(request);
        static const std::string models_prefix = "/models/", detail_suffix = "/detail";
        if (get && route.rfind(models_prefix, 0) == 0 && route.size() > models_prefix.size() + detail_suffix.size() &&
            route.compare(route.size() - detail_suffix.size(), detail_suffix.size(), detail_suffix) == 0) {
            auto id = route.substr(models_prefix.size(), route.size() - models_prefix.size() - detail_suffix.size());
            if (id.find('/') == std::string::npos) return model_detail(request, id);
        }
        throw Error(ErrorCode::not_found, "no such endpoint " + request.method + " " + request.path);
    } catch (const Error& e) {
        return {http_status(e.code()), error_body(e.code(), e.what())};
    } catch (const json::exception& e) {
        return {400, error_body(ErrorCode::parse, e.what())};
    } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", request.method, request.path, e.what());
        return {500, error_body(ErrorCode::io, e.what())};
    }
}

ApiResponse ApiService::systems(const ApiRequest& r) {
    allow_params(r, {});
    json list = json::array();
    for (const auto& id : taxonomy_.system_ids()) {
        const auto& s = taxonomy_.system(id);
        json j = s;
        j["scoring_dimensions"] = s.scoring_dimension_ids();
        list.push_back(std::move(j));
    }
    return {200, json{{"systems", list}}};
}

ApiResponse ApiService::models(const ApiRequest& r) {
    allow_params(r, {});
    auto run_id = latest_complete_run(store_);
    json body{{"run_id", nullptr}, {"pools", json::object()}, {"models", json::array()}};
    if (run_id) {
        auto rec = load_run_record(store_, *run_id);
        body["run_id"] = rec.run_id;
        body["pools"] = rec.pools;
        for (const auto& m : rec.config.models) body["models"].push_back(model_card(m, "evaluated"));
    }
    return {200, body};
}

ApiResponse ApiService::leaderboard_view(const ApiRequest& r) {
    allow_params(r, {"system", "dims", "swf", "weights"});
    auto system_id = required(r, "system");
    auto v = run_view(store_, taxonomy_, system_id);
    const auto& system = taxonomy_.system(system_id);

    auto form = SwfForm::utilitarian;
    if (auto s = param(r, "swf")) form = parse_swf_form(*s);
    std::optional<std::vector<std::string>> dims;
    if (auto d = param(r, "dims")) {
        dims = split(*d, ',');
        if (dims->empty()) throw Error(ErrorCode::invalid_argument, "empty dimension selection");
    }
    std::optional<SwfSpec> spec;
    if (auto w = param(r, "weights")) {
        spec = SwfSpec{form, parse_weights(*w)};
        if (dims) {
            std::set<std::string> a(dims->begin(), dims->end());
            auto wd = spec->dimensions();
            if (a != std::set<std::string>(wd.begin(), wd.end())) {
                throw Error(ErrorCode::invalid_argument, "dims and weights name different dimensions");
            }
        }
    }
    auto board = leaderboard(system, v.vectors, v.metadata, dims, spec, form);
    json body = board;
    body["run_id"] = v.artifacts.record.run_id;
    body["pool_id"] = v.pool_id;
    return {200, body};
}

ApiResponse ApiService::model_detail(const ApiRequest& r, const std::string& model_id) {
    allow_params(r, {"system"});
    auto system_id = required(r, "system");
    auto v = run_view(store_, taxonomy_, system_id);
    const auto& rec = v.artifacts.record;
    auto mit = std::find_if(rec.config.models.begin(), rec.config.models.end(),
                            [&](const ModelBackend& m) { return m.model_id == model_id; });
    if (mit == rec.config.models.end()) {
        throw Error(ErrorCode::not_found, "model '" + model_id + "' is not in run " + rec.run_id);
    }
    auto pool = store_.load_pool(v.pool_id);
    const auto& system = taxonomy_.system(system_id);

    std::map<std::pair<std::string, int>, std::string> texts;
    for (const auto& j : v.artifacts.responses) {
        if (j.at("system_id") != system_id) continue;
        auto resp = j.at("response").get<ModelResponse>();
        if (resp.model_id == model_id) texts[{resp.item_id, resp.sample_index}] = resp.text;
    }

    struct Case {
        std::string item_id;
        int sample_index;
        double relevance;
    };
    json cases = json::array();
    for (const auto& dim : system.scoring_dimension_ids()) {
        std::set<std::string> targeting;
        if (auto it = pool.items.find(dim); it != pool.items.end()) {
            for (const auto& item : it->second) targeting.insert(item.item_id);
        }
        std::vector<Case> supports, violates;
        for (const auto& rr : v.artifacts.recognitions) {
            if (rr.system_id != system_id || rr.model_id != model_id || !rr.result || !targeting.contains(rr.item_id)) {
                continue;
            }
            const auto* e = rr.result->entry(dim);
            if (e == nullptr || e->stance == Stance::not_relevant) continue;
            (e->stance == Stance::supports ? supports : violates).push_back({rr.item_id, rr.sample_index, e->relevance});
        }
        auto top2 = [&](std::vector<Case>& list, Stance stance) {
            std::sort(list.begin(), list.end(), [](const Case& a, const Case& b) {
                if (a.relevance != b.relevance) return a.relevance > b.relevance;
                if (a.item_id != b.item_id) return a.item_id < b.item_id;
                return a.sample_index < b.sample_index;
            });
            json out = json::array();
            for (std::size_t i = 0; i < list.size() && i < 2; ++i) {
                const auto* item = pool.find(list[i].item_id);
                out.push_back(json{{"item_id", list[i].item_id},
                                   {"item_text", item ? item->text : std::string()},
                                   {"sample_index", list[i].sample_index},
                                   {"response", texts[{list[i].item_id, list[i].sample_index}]},
                                   {"stance", to_string(stance)},
                                   {"relevance", list[i].relevance}});
            }
            return out;
        };
        cases.push_back(json{{"dimension_id", dim},
                             {"supports", top2(supports, Stance::supports)},
                             {"violates", top2(violates, Stance::violates)}});
    }

    auto vit = std::find_if(v.vectors.begin(), v.vectors.end(), [&](const ValueVector& x) { return x.model_id == model_id; });
    json scores = json::array();
    for (const auto& s : v.artifacts.scores.at(system_id)) {
        if (s.model_id == model_id) scores.push_back(s);
    }
    return {200, json{{"run_id", rec.run_id},
                      {"pool_id", v.pool_id},
                      {"system_id", system_id},
                      {"model", model_card(*mit, "evaluated")},
                      {"vector", *vit},
                      {"scores", scores},
                      {"cases", cases}}};
}

ApiResponse ApiService::compare(const ApiRequest& r) {
    allow_params(r, {"models", "system"});
    auto system_id = required(r, "system");
    auto ids = split(required(r, "models"), ',');
    if (ids.size() < 2 || ids.size() > 4) throw Error(ErrorCode::invalid_argument, "compare takes 2 to 4 models");
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
        throw Error(ErrorCode::invalid_argument, "compare models must be distinct");
    }
    auto v = run_view(store_, taxonomy_, system_id);
    const auto& system = taxonomy_.system(system_id);
    std::vector<ValueVector> chosen;
    for (const auto& id : ids) {
        auto it = std::find_if(v.vectors.begin(), v.vectors.end(), [&](const ValueVector& x) { return x.model_id == id; });
        if (it == v.vectors.end()) {
            throw Error(ErrorCode::not_found, "model '" + id + "' is not in run " + v.artifacts.record.run_id);
        }
        chosen.push_back(*it);
    }
    // Deltas are taken against the first listed model.
    json deltas = json::array();
    for (const auto& dim : system.scoring_dimension_ids()) {
        json values = json::array(), diff = json::array();
        auto base = chosen.front().score(dim);
        for (const auto& c : chosen) {
            auto s = c.score(dim);
            values.push_back(score_json(s));
            diff.push_back(s && base ? json(*s - *base) : json(nullptr));
        }
        deltas.push_back(json{{"dimension_id", dim}, {"values", values}, {"delta", diff}});
    }
    return {200, json{{"run_id", v.artifacts.record.run_id},
                      {"pool_id", v.pool_id},
                      {"system_id", system_id},
                      {"models", ids},
                      {"dimension_ids", system.scoring_dimension_ids()},
                      {"vectors", chosen},
                      {"deltas", deltas}}};
}

ApiResponse ApiService::culture_correlations(const ApiRequest& r) {
    allow_params(r, {"method"});
    auto method = CorrelationMethod::pearson;
    if (auto m = param(r, "method")) method = parse_correlation_method(*m);
    auto v = run_view(store_, taxonomy_, "schwartz");
    auto cultures = load_culture_profiles(store_, taxonomy_.system("schwartz"));

    json matrix = json::array(), notes = json::array(), culture_list = json::array();
    for (const auto& c : cultures) {
        culture_list.push_back(json{{"culture_id", c.culture_id}, {"label", c.label}, {"source", c.source}});
    }
    std::vector<std::string> model_ids;
    for (const auto& vec : v.vectors) {
        model_ids.push_back(vec.model_id);
        json row = json::array();
        for (const auto& c : cultures) {
            try {
                row.push_back(correlate(vec, c, method));
            } catch (const Error& e) {
                row.push_back(nullptr);
                notes.push_back(vec.model_id + " / " + c.culture_id + ": " + e.what());
            }
        }
        matrix.push_back(std::move(row));
    }
    return {200, json{{"run_id", v.artifacts.record.run_id},
                      {"pool_id", v.pool_id},
                      {"method", to_string(method)},
                      {"models", model_ids},
                      {"cultures", culture_list},
                      {"matrix", matrix},
                      {"notes", notes}}};
}

ApiResponse ApiService::culture_projection(const ApiRequest& r) {
    allow_params(r, {});
    auto v = run_view(store_, taxonomy_, "schwartz");
    auto cultures = load_culture_profiles(store_, taxonomy_.system("schwartz"));

    std::vector<std::pair<std::string, std::vector<double>>> entities;
    std::vector<std::string> kinds;
    json excluded = json::array();
    for (const auto& vec : v.vectors) {
        if (!vec.fully_defined()) {
            excluded.push_back(json{{"entity_id", vec.model_id}, {"reason", "undefined dimensions"}});
            continue;
        }
        std::vector<double> x;
        for (const auto& s : vec.scores) x.push_back(*s);
        entities.emplace_back(vec.model_id, std::move(x));
        kinds.push_back("model");
    }
    for (const auto& c : cultures) {
        entities.emplace_back(c.culture_id, c.vector);
        kinds.push_back("culture");
    }
    if (entities.size() < 4) {
        throw Error(ErrorCode::undefined,
                    "projection needs at least 4 entities, have " + std::to_string(entities.size()));
    }
    auto p = project(entities);
    json list = json::array();
    for (std::size_t i = 0; i < entities.size(); ++i) {
        const auto& c = p.coordinates[i];
        list.push_back(json{{"entity_id", p.entity_ids[i]}, {"kind", kinds[i]}, {"x", c[0]}, {"y", c[1]}, {"z", c[2]}});
    }
    return {200, json{{"run_id", v.artifacts.record.run_id},
                      {"pool_id", v.pool_id},
                      {"entities", list},
                      {"explained_variance", p.explained_variance},
                      {"rank", p.rank},
                      {"degenerate", p.degenerate},
                      {"excluded", excluded}}};
}

ApiResponse ApiService::items(const ApiRequest& r) {
    allow_params(r, {"system", "dim", "pool"});
    auto system_id = param(r, "system");
    auto pool_id = param(r, "pool");
    if (!system_id && !pool_id) throw Error(ErrorCode::invalid_argument, "items needs 'system' or 'pool'");
    json run_id = nullptr;
    if (!pool_id) {
        if (!taxonomy_.contains(*system_id)) throw Error(ErrorCode::not_found, "unknown value system '" + *system_id + "'");
        if (auto run = latest_complete_run(store_, *system_id)) {
            auto rec = load_run_record(store_, *run);
            pool_id = rec.pools.at(*system_id);
            run_id = rec.run_id;
        } else {
            pool_id = store_.latest_pool(*system_id);
            if (!pool_id) throw Error(ErrorCode::not_found, "no pool stored for system '" + *system_id + "'");
        }
    }
    auto pool = store_.load_pool(*pool_id);
    if (system_id && pool.system_id != *system_id) {
        throw Error(ErrorCode::invalid_argument, "pool '" + *pool_id + "' belongs to system '" + pool.system_id + "'");
    }
    json list = json::array();
    if (auto dim = param(r, "dim")) {
        if (!taxonomy_.system(pool.system_id).is_scoring_dimension(*dim)) {
            throw Error(ErrorCode::invalid_argument, "'" + *dim + "' is not a scoring dimension of " + pool.system_id);
        }
        if (auto it = pool.items.find(*dim); it != pool.items.end()) {
            for (const auto& item : it->second) list.push_back(item);
        }
    } else {
        for (const auto& item : pool.all_items()) list.push_back(item);
    }
    return {200, json{{"run_id", run_id},
                      {"pool_id", pool.pool_id},
                      {"system_id", pool.system_id},
                      {"pool_fingerprint", pool.pool_fingerprint},
                      {"items", list}}};
}

ApiResponse ApiService::post_run(const ApiRequest& r) {
    allow_params(r, {});
    if (!options_.operator_token || options_.operator_token->empty()) {
        return {403, error_body(ErrorCode::auth_missing, "run submission is disabled: no operator token configured")};
    }
    auto it = r.headers.find("x-operator-token");
    if (it == r.headers.end() || it->second != *options_.operator_token) {
        return {401, error_body(ErrorCode::auth_missing, "missing or wrong operator token")};
    }
    std::unique_lock lock(writer_, std::try_to_lock);
    if (!lock.owns_lock()) throw Error(ErrorCode::busy, "an evaluation run is already in progress");
    json body;
    try {
        body = json::parse(r.body);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("run config: ") + e.what());
    }
    auto config = parse_run_config(body, store_.root());
    auto record = run_evaluation(store_, taxonomy_, config, options_.transport);
    return {201, json{{"run_id", record.run_id}, {"status", to_string(record.status)}, {"pools", record.pools}}};
}

}  // namespace valuelens
