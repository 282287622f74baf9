#include "valuelens/platform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "valuelens/parallel.hpp"

namespace valuelens {

namespace {

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

unsigned worker_count(int configured) {
    if (configured > 0) return static_cast<unsigned>(configured);
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string relative_to(const DataStore& store, const std::filesystem::path& p) {
    return p.lexically_relative(store.root()).generic_string();
}

bool close(double a, double b, double tol = 1e-9) { return std::abs(a - b) <= tol; }

bool same_score(const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || close(*a, *b);
}

}  // namespace

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("VALUELENS_DATA_DIR"); env != nullptr && *env != '\0') return env;
    return "valuelens-data";
}

std::vector<ModelBackend> load_model_backends(const json& models, const std::filesystem::path& base_dir) {
    if (!models.is_array()) throw Error(ErrorCode::parse, "\"models\" must be an array");
    std::vector<ModelBackend> out;
    for (auto m : models) {
        if (m.contains("script_path")) {
            m["script"] = read_json_file(resolve(base_dir, m.at("script_path").get<std::string>()));
            m.erase("script_path");
        }
        try {
            out.push_back(m.get<ModelBackend>());
        } catch (const json::exception& e) {
            throw Error(ErrorCode::parse, std::string("model backend: ") + e.what());
        }
    }
    return out;
}

json resolve_component_paths(json config, const std::filesystem::path& base_dir) {
    if (!config.is_object()) return config;
    for (auto& [key, value] : config.items()) {
        if (value.is_string() && (ends_with(key, "_path") || ends_with(key, "_dir"))) {
            value = resolve(base_dir, value.get<std::string>()).generic_string();
        } else if (value.is_object()) {
            value = resolve_component_paths(value, base_dir);
        }
    }
    return config;
}

// ---------------------------------------------------------------------------
// Run configuration and records

void to_json(json& j, const RunConfig& c) {
    j = json{{"pools", c.pools},
             {"models", c.models},
             {"recognizer", c.recognizer},
             {"n_samples", c.n_samples},
             {"seed", c.seed},
             {"stance_map", c.stance_map},
             {"allow_stale", c.allow_stale},
             {"max_unrecognized_fraction", c.max_unrecognized_fraction},
             {"workers", c.workers}};
}

void from_json(const json& j, RunConfig& c) {
    c = RunConfig{};
    j.at("pools").get_to(c.pools);
    j.at("models").get_to(c.models);
    c.recognizer = j.value("recognizer", c.recognizer);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.seed = j.value("seed", c.seed);
    if (j.contains("stance_map")) j.at("stance_map").get_to(c.stance_map);
    c.allow_stale = j.value("allow_stale", c.allow_stale);
    c.max_unrecognized_fraction = j.value("max_unrecognized_fraction", c.max_unrecognized_fraction);
    c.workers = j.value("workers", c.workers);
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw Error(ErrorCode::parse, "run config must be an object");
    RunConfig c;
    try {
        json copy = j;
        copy["models"] = json(load_model_backends(j.at("models"), base_dir));
        if (copy.contains("recognizer")) copy["recognizer"] = resolve_component_paths(copy["recognizer"], base_dir);
        c = copy.get<RunConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, std::string("run config: ") + e.what());
    }
    if (c.pools.empty()) throw Error(ErrorCode::invalid_argument, "run config names no pools");
    if (c.models.empty()) throw Error(ErrorCode::invalid_argument, "run config names no models");
    if (c.n_samples < 1) throw Error(ErrorCode::invalid_argument, "n_samples must be >= 1");
    if (c.max_unrecognized_fraction < 0.0 || c.max_unrecognized_fraction > 1.0) {
        throw Error(ErrorCode::invalid_argument, "max_unrecognized_fraction must be in [0,1]");
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return parse_run_config(read_json_file(path), path.parent_path());
}

std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::running: return "running";
        case RunStatus::complete: return "complete";
        case RunStatus::failed: return "failed";
    }
    return "unknown";
}

RunStatus parse_run_status(std::string_view s) {
    if (s == "running") return RunStatus::running;
    if (s == "complete") return RunStatus::complete;
    if (s == "failed") return RunStatus::failed;
    throw Error(ErrorCode::parse, "unknown run status '" + std::string(s) + "'");
}

void to_json(json& j, const RunRecord& r) {
    j = json{{"run_id", r.run_id},
             {"pools", r.pools},
             {"model_ids", r.model_ids},
             {"system_ids", r.system_ids},
             {"config", r.config},
             {"status", to_string(r.status)},
             {"started_at", r.started_at},
             {"finished_at", r.finished_at},
             {"artifacts", r.artifacts},
             {"n_responses", r.n_responses},
             {"n_unrecognized", r.n_unrecognized},
             {"diagnostics", r.diagnostics}};
}

void from_json(const json& j, RunRecord& r) {
    j.at("run_id").get_to(r.run_id);
    j.at("pools").get_to(r.pools);
    j.at("model_ids").get_to(r.model_ids);
    j.at("system_ids").get_to(r.system_ids);
    j.at("config").get_to(r.config);
    r.status = parse_run_status(j.at("status").get<std::string>());
    j.at("started_at").get_to(r.started_at);
    j.at("finished_at").get_to(r.finished_at);
    j.at("artifacts").get_to(r.artifacts);
    j.at("n_responses").get_to(r.n_responses);
    j.at("n_unrecognized").get_to(r.n_unrecognized);
    j.at("diagnostics").get_to(r.diagnostics);
}

void save_run_record(const DataStore& store, const RunRecord& record) {
    write_document(store.run_dir(record.run_id) / "run.json", "run_record", json(record));
}

RunRecord load_run_record(const DataStore& store, const std::string& run_id) {
    auto path = store.run_dir(run_id) / "run.json";
    if (run_id.empty() || run_id.find('/') != std::string::npos || !std::filesystem::exists(path)) {
        throw Error(ErrorCode::not_found, "unknown run '" + run_id + "'");
    }
    return read_document(path, "run_record").get<RunRecord>();
}

std::vector<std::string> complete_runs(const DataStore& store) {
    std::vector<std::string> order;
    std::map<std::string, std::string> last;
    for (const auto& ev : store.run_events()) {
        auto id = ev.at("run_id").get<std::string>();
        if (!last.contains(id)) order.push_back(id);
        last[id] = ev.at("status").get<std::string>();
    }
    std::vector<std::string> out;
    for (const auto& id : order) {
        if (last[id] == "complete") out.push_back(id);
    }
    return out;
}

std::optional<std::string> latest_complete_run(const DataStore& store, const std::optional<std::string>& system_id) {
    std::vector<std::string> order;
    std::map<std::string, json> last;
    for (const auto& ev : store.run_events()) {
        auto id = ev.at("run_id").get<std::string>();
        if (!last.contains(id)) order.push_back(id);
        last[id] = ev;
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& ev = last[*it];
        if (ev.at("status") != "complete") continue;
        if (system_id) {
            auto systems = ev.value("system_ids", std::vector<std::string>{});
            if (std::find(systems.begin(), systems.end(), *system_id) == systems.end()) continue;
        }
        return *it;
    }
    return std::nullopt;
}

void to_json(json& j, const RecognitionRecord& r) {
    j = json{{"system_id", r.system_id},
             {"model_id", r.model_id},
             {"item_id", r.item_id},
             {"sample_index", r.sample_index}};
    if (r.result) {
        j["result"] = *r.result;
    } else {
        j["error"] = r.error;
    }
}

void from_json(const json& j, RecognitionRecord& r) {
    j.at("system_id").get_to(r.system_id);
    j.at("model_id").get_to(r.model_id);
    j.at("item_id").get_to(r.item_id);
    j.at("sample_index").get_to(r.sample_index);
    r.result.reset();
    r.error.clear();
    if (j.contains("result")) {
        r.result = j.at("result").get<RecognitionResult>();
    } else {
        r.error = j.value("error", std::string());
    }
}

RunArtifacts load_run_artifacts(const DataStore& store, const std::string& run_id) {
    RunArtifacts a;
    a.record = load_run_record(store, run_id);
    auto dir = store.run_dir(run_id);
    for (auto& rec : read_records(dir / "responses.jsonl")) a.responses.push_back(std::move(rec));
    for (const auto& rec : read_records(dir / "recognitions.jsonl")) a.recognitions.push_back(rec.get<RecognitionRecord>());
    if (std::filesystem::exists(dir / "scores.json")) {
        auto scores = read_document(dir / "scores.json", "scores");
        for (const auto& [sid, list] : scores.items()) a.scores[sid] = list.get<std::vector<ConformityScore>>();
    }
    return a;
}

std::vector<ConformityScore> compute_scores(const ValueSystem& system, const ItemPool& pool,
                                            const std::vector<std::string>& model_ids,
                                            const std::vector<RecognitionRecord>& recognitions,
                                            const StanceMap& stance_map) {
    std::map<std::string, std::string> dim_of;
    for (const auto& [dim, items] : pool.items) {
        for (const auto& item : items) dim_of[item.item_id] = dim;
    }
    // (model, dimension) -> results / unrecognized count
    std::map<std::pair<std::string, std::string>, std::vector<RecognitionResult>> results;
    std::map<std::pair<std::string, std::string>, int> unrecognized;
    for (const auto& rec : recognitions) {
        if (rec.system_id != system.id) continue;
        auto it = dim_of.find(rec.item_id);
        if (it == dim_of.end()) continue;
        auto key = std::make_pair(rec.model_id, it->second);
        if (rec.result) {
            results[key].push_back(*rec.result);
        } else {
            ++unrecognized[key];
        }
    }
    std::vector<ConformityScore> out;
    for (const auto& model : model_ids) {
        for (const auto& dim : system.scoring_dimension_ids()) {
            auto key = std::make_pair(model, dim);
            const auto& rs = results[key];
            out.push_back(conformity_score(model, dim, rs, stance_map, unrecognized[key]));
        }
    }
    return out;
}

std::vector<ValueVector> value_vectors(const ValueSystem& system, const std::vector<std::string>& model_ids,
                                       const std::vector<ConformityScore>& scores) {
    ScoreTable table;
    for (const auto& s : scores) table.add(s);
    std::vector<ValueVector> out;
    for (const auto& m : model_ids) out.push_back(table.value_vector(m, system));
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

RunRecord run_evaluation(DataStore& store, const TaxonomyRegistry& taxonomy, const RunConfig& config,
                         std::shared_ptr<HttpTransport> transport) {
    RunConfig cfg = config;
    for (auto& [sid, pid] : cfg.pools) {
        if (!taxonomy.contains(sid)) throw Error(ErrorCode::not_found, "unknown value system '" + sid + "'");
        if (pid == "latest") {
            auto latest = store.latest_pool(sid);
            if (!latest) throw Error(ErrorCode::not_found, "no stored pool for system '" + sid + "'");
            pid = *latest;
        }
        if (!store.has_pool(pid)) throw Error(ErrorCode::not_found, "unknown pool '" + pid + "'");
    }

    ModelPool models(transport);
    for (const auto& m : cfg.models) models.register_backend(m);
    if (std::filesystem::exists(store.cache_path())) models.set_cache(ResponseCache::load(store.cache_path()));

    std::map<std::string, ItemPool> pools;
    for (const auto& [sid, pid] : cfg.pools) {
        auto pool = store.load_pool(pid);
        if (pool.system_id != sid) {
            throw Error(ErrorCode::invalid_argument, "pool '" + pid + "' belongs to system '" + pool.system_id + "'");
        }
        if (pool_stale(pool, models) && !cfg.allow_stale) {
            throw Error(ErrorCode::stale_pool,
                        "pool '" + pid + "' was evolved against a different model pool; re-evolve or set allow_stale");
        }
        pools.emplace(sid, std::move(pool));
    }
    auto recognizer = make_recognizer(cfg.recognizer, store.root(), transport);

    std::set<std::string> seen;
    for (const auto& ev : store.run_events()) seen.insert(ev.at("run_id").get<std::string>());
    const json snapshot = cfg;

    RunRecord record;
    record.run_id = "run-" + sha256_hex(snapshot.dump() + "#" + std::to_string(seen.size())).substr(0, 16);
    record.pools = cfg.pools;
    record.model_ids = models.model_ids();
    for (const auto& [sid, _] : pools) record.system_ids.push_back(sid);
    record.config = cfg;
    record.started_at = now_seconds();
    auto dir = store.run_dir(record.run_id);
    record.artifacts = {{"record", relative_to(store, dir / "run.json")},
                        {"responses", relative_to(store, dir / "responses.jsonl")},
                        {"recognitions", relative_to(store, dir / "recognitions.jsonl")},
                        {"scores", relative_to(store, dir / "scores.json")}};
    save_run_record(store, record);
    auto event = [&](const RunRecord& r) {
        store.append_run_event(json{{"run_id", r.run_id},
                                    {"status", to_string(r.status)},
                                    {"at", now_seconds()},
                                    {"system_ids", r.system_ids}});
    };
    event(record);

    std::vector<json> response_records;
    std::vector<RecognitionRecord> recognition_records;
    std::vector<std::string> errors;
    for (const auto& [sid, pool] : pools) {
        const auto& system = taxonomy.system(sid);
        auto items = pool.all_items();
        const std::size_t pairs = record.model_ids.size() * items.size();
        std::vector<std::vector<ModelResponse>> responses(pairs);
        std::vector<std::vector<RecognitionRecord>> recognized(pairs);
        std::vector<std::string> pair_error(pairs);

        parallel_for(
            pairs,
            [&](std::size_t i) {
                const auto& model_id = record.model_ids[i / items.size()];
                const auto& item = items[i % items.size()];
                try {
                    responses[i] = models.sample_responses(model_id, item, cfg.n_samples, cfg.seed);
                } catch (const Error& e) {
                    pair_error[i] = std::string(to_string(e.code())) + ": " + e.what();
                    for (int k = 0; k < cfg.n_samples; ++k) {
                        recognized[i].push_back({sid, model_id, item.item_id, k, std::nullopt, pair_error[i]});
                    }
                    return;
                }
                for (const auto& resp : responses[i]) {
                    RecognitionRecord rec{sid, model_id, item.item_id, resp.sample_index, std::nullopt, {}};
                    try {
                        rec.result = recognizer->recognize(item, resp, system);
                    } catch (const Error& e) {
                        rec.error = std::string(to_string(e.code())) + ": " + e.what();
                    }
                    recognized[i].push_back(std::move(rec));
                }
            },
            worker_count(cfg.workers));

        for (std::size_t i = 0; i < pairs; ++i) {
            for (auto& r : responses[i]) response_records.push_back(json{{"system_id", sid}, {"response", std::move(r)}});
            for (auto& r : recognized[i]) {
                if (!r.result) {
                    ++record.n_unrecognized;
                    if (errors.size() < 20) errors.push_back(r.model_id + " / " + r.item_id + " #" +
                                                             std::to_string(r.sample_index) + ": " + r.error);
                }
                recognition_records.push_back(std::move(r));
            }
        }
    }
    record.n_responses = recognition_records.size();

    std::vector<json> rec_payloads;
    rec_payloads.reserve(recognition_records.size());
    for (const auto& r : recognition_records) rec_payloads.emplace_back(r);
    write_records(dir / "responses.jsonl", response_records);
    write_records(dir / "recognitions.jsonl", rec_payloads);
    models.cache().save(store.cache_path());

    const double fraction =
        record.n_responses == 0 ? 0.0 : static_cast<double>(record.n_unrecognized) / static_cast<double>(record.n_responses);
    if (fraction > cfg.max_unrecognized_fraction) {
        record.status = RunStatus::failed;
        record.finished_at = now_seconds();
        std::ostringstream msg;
        msg << record.n_unrecognized << " of " << record.n_responses << " responses unrecognized, over the "
            << cfg.max_unrecognized_fraction * 100.0 << "% budget";
        record.diagnostics.push_back(msg.str());
        record.diagnostics.insert(record.diagnostics.end(), errors.begin(), errors.end());
        save_run_record(store, record);
        event(record);
        throw Error(ErrorCode::run_failed, record.run_id + ": " + msg.str());
    }
    if (record.n_unrecognized > 0) {
        record.diagnostics.push_back(std::to_string(record.n_unrecognized) + " responses unrecognized and excluded");
        record.diagnostics.insert(record.diagnostics.end(), errors.begin(), errors.end());
    }

    json scores = json::object();
    for (const auto& [sid, pool] : pools) {
        scores[sid] = compute_scores(taxonomy.system(sid), pool, record.model_ids, recognition_records, cfg.stance_map);
    }
    write_document(dir / "scores.json", "scores", scores);

    record.status = RunStatus::complete;
    record.finished_at = now_seconds();
    save_run_record(store, record);
    event(record);
    spdlog::info("run {} complete: {} responses, {} unrecognized", record.run_id, record.n_responses,
                 record.n_unrecognized);
    return record;
}

// ---------------------------------------------------------------------------
// Evolution

EvolveConfig load_evolve_config(const std::filesystem::path& path) {
    auto j = read_json_file(path);
    auto base = path.parent_path();
    EvolveConfig c;
    try {
        j.at("system_id").get_to(c.system_id);
        json seeds;
        if (j.contains("seeds_path")) {
            seeds = read_json_file(resolve(base, j.at("seeds_path").get<std::string>()));
        } else {
            seeds = j.at("seeds");
        }
        if (seeds.is_object()) seeds = seeds.at("items");
        for (const auto& s : seeds) {
            auto item = s.get<TestItem>();
            item.system_id = c.system_id;
            c.seeds.push_back(std::move(item));
        }
        c.models = load_model_backends(j.at("models"), base);
        if (j.contains("recognizer")) c.recognizer = resolve_component_paths(j.at("recognizer"), base);
        c.evolution = j.get<EvolutionConfig>();
        c.evolution.mutator = resolve_component_paths(c.evolution.mutator, base);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
    return c;
}

EvolutionResult run_evolution(DataStore& store, const TaxonomyRegistry& taxonomy, const EvolveConfig& config,
                              std::shared_ptr<HttpTransport> transport) {
    const auto& system = taxonomy.system(config.system_id);
    ModelPool models(transport);
    for (const auto& m : config.models) models.register_backend(m);
    if (std::filesystem::exists(store.cache_path())) models.set_cache(ResponseCache::load(store.cache_path()));
    auto recognizer = make_recognizer(config.recognizer, store.root(), transport);
    auto mutator = make_mutator(config.evolution.mutator, store.root(), transport);

    ItemPool seeds;
    seeds.system_id = config.system_id;
    for (const auto& item : config.seeds) {
        if (!system.is_scoring_dimension(item.target_dimension)) {
            throw Error(ErrorCode::invalid_argument,
                        "seed '" + item.item_id + "' targets non-scoring dimension '" + item.target_dimension + "'");
        }
        seeds.items[item.target_dimension].push_back(item);
    }
    EvalContext ctx{models, *recognizer, system};
    auto result = evolve(ctx, seeds, config.evolution, *mutator);
    store.save_pool(result.pool);
    store.save_trace(result.pool.pool_id, result.trace);
    models.cache().save(store.cache_path());
    return result;
}

std::vector<CultureProfile> load_culture_profiles(const DataStore& store, const ValueSystem& schwartz) {
    if (!std::filesystem::exists(store.culture_profiles_path())) return {};
    return ingest_culture_profiles(read_text_file(store.culture_profiles_path()), schwartz);
}

// ---------------------------------------------------------------------------
// Audit

void to_json(json& j, const AuditReport& r) {
    j = json{{"ok", r.ok()},
             {"runs", r.runs},
             {"pools", r.pools},
             {"checks", r.checks},
             {"discrepancies", r.discrepancies},
             {"notes", r.notes}};
}

AuditReport audit(const DataStore& store, const TaxonomyRegistry& taxonomy, const std::optional<std::string>& run_id) {
    AuditReport report;
    auto runs = run_id ? std::vector<std::string>{*run_id} : complete_runs(store);
    std::set<std::string> pools_seen;

    for (const auto& id : runs) {
        report.runs.push_back(id);
        auto a = load_run_artifacts(store, id);
        const auto& rec = a.record;
        auto bad = [&](const std::string& what) { report.discrepancies.push_back(id + ": " + what); };
        if (rec.status != RunStatus::complete) {
            bad("run is not complete");
            continue;
        }

        // Responses and recognitions must pair up one to one.
        std::map<std::tuple<std::string, std::string, std::string, int>, ModelResponse> responses;
        for (const auto& r : a.responses) {
            auto resp = r.at("response").get<ModelResponse>();
            responses[{r.at("system_id").get<std::string>(), resp.model_id, resp.item_id, resp.sample_index}] = resp;
        }
        ++report.checks;
        std::size_t expected = 0;
        for (const auto& [sid, pid] : rec.pools) {
            expected += store.load_pool(pid).total_items() * rec.model_ids.size() *
                        static_cast<std::size_t>(rec.config.n_samples);
        }
        if (a.recognitions.size() != expected) {
            bad("expected " + std::to_string(expected) + " recognitions, found " + std::to_string(a.recognitions.size()));
        }

        std::shared_ptr<Recognizer> recognizer;
        auto kind = rec.config.recognizer.value("kind", std::string("tags"));
        if (kind == "tags" || kind == "lexicon") {
            recognizer = make_recognizer(rec.config.recognizer, store.root());
        } else {
            report.notes.push_back(id + ": recognizer '" + kind +
                                   "' is not replayed offline; scores are checked against persisted recognitions");
        }

        std::map<std::string, ItemPool> pools;
        for (const auto& [sid, pid] : rec.pools) pools.emplace(sid, store.load_pool(pid));

        std::vector<RecognitionRecord> replayed;
        for (const auto& r : a.recognitions) {
            auto it = responses.find({r.system_id, r.model_id, r.item_id, r.sample_index});
            if (it == responses.end()) {
                if (r.result) bad("recognition without response: " + r.model_id + "/" + r.item_id);
                replayed.push_back(r);
                continue;
            }
            if (!recognizer) {
                replayed.push_back(r);
                continue;
            }
            const auto* item = pools.at(r.system_id).find(r.item_id);
            if (item == nullptr) {
                bad("recognition for unknown item " + r.item_id);
                continue;
            }
            const auto& system = taxonomy.system(r.system_id);
            RecognitionRecord again{r.system_id, r.model_id, r.item_id, r.sample_index, std::nullopt, {}};
            try {
                again.result = recognizer->recognize(*item, it->second, system);
            } catch (const Error& e) {
                again.error = std::string(to_string(e.code())) + ": " + e.what();
            }
            ++report.checks;
            if (again.result != r.result) {
                bad("recognition of " + r.model_id + "/" + r.item_id + " #" + std::to_string(r.sample_index) +
                    " does not replay");
            }
            replayed.push_back(std::move(again));
        }

        for (const auto& [sid, pid] : rec.pools) {
            const auto& system = taxonomy.system(sid);
            const auto& pool = pools.at(sid);
            auto recomputed = compute_scores(system, pool, rec.model_ids, replayed, rec.config.stance_map);
            const auto& stored = a.scores[sid];
            ++report.checks;
            if (stored.size() != recomputed.size()) {
                bad(sid + ": score count differs");
                continue;
            }
            for (std::size_t i = 0; i < stored.size(); ++i) {
                ++report.checks;
                const auto& s = stored[i];
                const auto& r = recomputed[i];
                if (s.model_id != r.model_id || s.dimension_id != r.dimension_id || !same_score(s.score, r.score) ||
                    s.n_items != r.n_items || s.n_responses != r.n_responses || s.n_excluded != r.n_excluded) {
                    bad(sid + ": score " + s.model_id + "/" + s.dimension_id + " does not recompute");
                }
            }

            // Leaderboard aggregates served from stored scores vs recomputed ones.
            auto served = leaderboard(system, value_vectors(system, rec.model_ids, stored), {});
            auto again = leaderboard(system, value_vectors(system, rec.model_ids, recomputed), {});
            ++report.checks;
            if (served.rows.size() != again.rows.size()) {
                bad(sid + ": leaderboard row count differs");
            } else {
                for (std::size_t i = 0; i < served.rows.size(); ++i) {
                    const auto& x = served.rows[i];
                    const auto& y = again.rows[i];
                    if (x.model_id != y.model_id || x.rank != y.rank || !same_score(x.aggregate, y.aggregate)) {
                        bad(sid + ": leaderboard row " + std::to_string(i) + " does not recompute");
                    }
                }
            }

            if (sid == "schwartz") {
                auto cultures = load_culture_profiles(store, system);
                auto sv = value_vectors(system, rec.model_ids, stored);
                auto rv = value_vectors(system, rec.model_ids, recomputed);
                for (std::size_t m = 0; m < sv.size(); ++m) {
                    for (const auto& c : cultures) {
                        for (auto method : {CorrelationMethod::pearson, CorrelationMethod::spearman}) {
                            std::optional<double> x, y;
                            try { x = correlate(sv[m], c, method); } catch (const Error&) {}
                            try { y = correlate(rv[m], c, method); } catch (const Error&) {}
                            ++report.checks;
                            if (!same_score(x, y)) bad("correlation " + sv[m].model_id + "/" + c.culture_id);
                        }
                    }
                }
            }
        }
        for (const auto& [sid, pid] : rec.pools) pools_seen.insert(pid);
    }

    // Evolution traces: every persisted objective must follow from its samples.
    for (const auto& pid : pools_seen) {
        report.pools.push_back(pid);
        for (const auto& t : store.load_trace(pid)) {
            ++report.checks;
            auto again = recompute_objective(t.estimate);
            const auto& e = t.estimate;
            bool ok = close(again.informativeness, e.informativeness) && close(again.elicitation, e.elicitation) &&
                      close(again.combined, e.combined) && again.per_model.size() == e.per_model.size();
            for (std::size_t m = 0; ok && m < e.per_model.size(); ++m) {
                ok = close(again.per_model[m].elicitation, e.per_model[m].elicitation);
            }
            if (!ok) {
                report.discrepancies.push_back(pid + ": trace objective for " + e.item_id + " (generation " +
                                               std::to_string(t.generation) + ") does not recompute");
            }
        }
        // Pool ids are content hashes.
        auto pool = store.load_pool(pid);
        ++report.checks;
        if (compute_pool_id(pool) != pool.pool_id) {
            report.discrepancies.push_back(pid + ": pool content hash mismatch");
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Export

std::vector<std::filesystem::path> export_run(const DataStore& store, const TaxonomyRegistry& taxonomy,
                                              const std::string& run_id, const std::optional<std::string>& system_id,
                                              const std::filesystem::path& out_dir) {
    auto a = load_run_artifacts(store, run_id);
    if (a.record.status != RunStatus::complete) {
        throw Error(ErrorCode::invalid_argument, "run '" + run_id + "' is " + std::string(to_string(a.record.status)));
    }
    std::map<std::string, ModelMetadata> metadata;
    for (const auto& m : a.record.config.models) metadata[m.model_id] = m.metadata;
    std::vector<std::filesystem::path> written;
    std::filesystem::create_directories(out_dir);
    for (const auto& sid : a.record.system_ids) {
        if (system_id && sid != *system_id) continue;
        const auto& system = taxonomy.system(sid);
        auto vectors = value_vectors(system, a.record.model_ids, a.scores.at(sid));
        auto board = leaderboard(system, vectors, metadata);
        auto path = out_dir / ("leaderboard-" + sid + ".csv");
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
        out << export_leaderboard_table(board, vectors, system);
        written.push_back(path);
    }
    if (system_id && written.empty()) {
        throw Error(ErrorCode::not_found, "run '" + run_id + "' did not cover system '" + *system_id + "'");
    }
    return written;
}

}  // namespace valuelens
