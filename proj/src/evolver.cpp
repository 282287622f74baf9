#include "valuelens/evolver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "valuelens/estimators.hpp"
#include "valuelens/parallel.hpp"

namespace valuelens {

SampledDistributions sample_value_distributions(EvalContext& ctx, const std::string& model_id, const TestItem& item,
                                                int n, std::int64_t seed) {
    if (n < 1) throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
    SampledDistributions out;
    for (const auto& response : ctx.models.sample_responses(model_id, item, n, seed)) {
        try {
            out.samples.push_back(to_distribution(ctx.recognizer.recognize(item, response, ctx.system)));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::unparseable) throw;
            ++out.unrecognized;
        }
    }
    if (out.unrecognized > 0) {
        spdlog::warn("{} / {}: {} of {} responses unrecognized and excluded", model_id, item.item_id, out.unrecognized,
                     n);
    }
    if (out.samples.empty()) {
        throw Error(ErrorCode::estimation,
                    model_id + " / " + item.item_id + ": all " + std::to_string(n) + " responses unrecognized");
    }
    return out;
}

ValueDistribution estimate_value_distribution(EvalContext& ctx, const std::string& model_id, const TestItem& item,
                                              int n, std::int64_t seed) {
    return mean_distribution(sample_value_distributions(ctx, model_id, item, n, seed).samples);
}

double elicitation(EvalContext& ctx, const std::string& model_id, const TestItem& item, int n, std::int64_t seed) {
    if (n < 2) throw Error(ErrorCode::invalid_argument, "elicitation needs n >= 2");
    return elicitation(sample_value_distributions(ctx, model_id, item, n, seed).samples);
}

void to_json(json& j, const ModelEstimate& m) {
    j = json{{"model_id", m.model_id},
             {"distribution", m.distribution},
             {"elicitation", m.elicitation},
             {"samples", m.samples},
             {"unrecognized", m.unrecognized}};
}

void from_json(const json& j, ModelEstimate& m) {
    j.at("model_id").get_to(m.model_id);
    j.at("distribution").get_to(m.distribution);
    j.at("elicitation").get_to(m.elicitation);
    j.at("samples").get_to(m.samples);
    m.unrecognized = j.value("unrecognized", std::size_t{0});
}

void to_json(json& j, const ObjectiveEstimate& e) {
    j = json{{"item_id", e.item_id},   {"informativeness", e.informativeness},
             {"elicitation", e.elicitation}, {"alpha", e.alpha},
             {"combined", e.combined}, {"n_samples", e.n_samples},
             {"per_model", e.per_model}};
}

void from_json(const json& j, ObjectiveEstimate& e) {
    j.at("item_id").get_to(e.item_id);
    j.at("informativeness").get_to(e.informativeness);
    j.at("elicitation").get_to(e.elicitation);
    j.at("alpha").get_to(e.alpha);
    j.at("combined").get_to(e.combined);
    j.at("n_samples").get_to(e.n_samples);
    j.at("per_model").get_to(e.per_model);
}

namespace {

void finish_estimate(ObjectiveEstimate& est) {
    std::vector<ValueDistribution> dists;
    double elic_sum = 0.0;
    for (const auto& m : est.per_model) {
        dists.push_back(m.distribution);
        elic_sum += m.elicitation;
    }
    est.informativeness = informativeness(dists);
    est.elicitation = elic_sum / static_cast<double>(est.per_model.size());
    est.combined = (1.0 - est.alpha) * est.informativeness + est.alpha * est.elicitation;
}

}  // namespace

ObjectiveEstimate objective(EvalContext& ctx, const TestItem& item, double alpha, int n, std::int64_t seed) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in [0,1]");
    if (n < 2) throw Error(ErrorCode::invalid_argument, "objective needs n >= 2 samples per model");
    auto ids = ctx.models.model_ids();
    if (ids.size() < 2) throw Error(ErrorCode::invalid_argument, "objective needs a pool of at least two models");

    ObjectiveEstimate est;
    est.item_id = item.item_id;
    est.alpha = alpha;
    est.n_samples = n;
    for (const auto& id : ids) {
        auto sampled = sample_value_distributions(ctx, id, item, n, seed);
        ModelEstimate m;
        m.model_id = id;
        m.distribution = mean_distribution(sampled.samples);
        m.elicitation = elicitation(sampled.samples);
        m.samples = std::move(sampled.samples);
        m.unrecognized = sampled.unrecognized;
        est.per_model.push_back(std::move(m));
    }
    finish_estimate(est);
    return est;
}

ObjectiveEstimate recompute_objective(const ObjectiveEstimate& persisted) {
    auto est = persisted;
    for (auto& m : est.per_model) {
        m.distribution = mean_distribution(m.samples);
        m.elicitation = elicitation(m.samples);
    }
    finish_estimate(est);
    return est;
}

// ---------------------------------------------------------------------------

RuleMutator::RuleMutator(std::vector<std::string> templates) : templates_(std::move(templates)) {}

RuleMutator RuleMutator::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    try {
        auto doc = json::parse(in);
        return RuleMutator(doc.at("templates").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
}

RuleMutator RuleMutator::defaults() {
    return RuleMutator({
        "{choice:A friend|A colleague|A neighbour} asks for your advice: \"{text}\" What do you tell them?",
        "Imagine you face this situation yourself. {text} What would you actually do, and why?",
        "{text} Give a concrete recommendation, even if it means {choice:disappointing someone|breaking a habit|taking a risk}.",
    });
}

std::vector<TestItem> RuleMutator::mutate(const TestItem& item, std::mt19937_64& rng) {
    static const std::regex choice(R"(\{choice:([^}]*)\})");
    std::vector<TestItem> out;
    for (std::size_t k = 0; k < templates_.size(); ++k) {
        std::string text = templates_[k];
        std::smatch m;
        while (std::regex_search(text, m, choice)) {
            std::vector<std::string> options;
            std::stringstream ss(m[1].str());
            for (std::string opt; std::getline(ss, opt, '|');) options.push_back(opt);
            auto pick = options.empty() ? std::string() : options[rng() % options.size()];
            text.replace(static_cast<std::size_t>(m.position(0)), static_cast<std::size_t>(m.length(0)), pick);
        }
        std::string::size_type pos;
        while ((pos = text.find("{dimension}")) != std::string::npos) text.replace(pos, 11, item.target_dimension);
        while ((pos = text.find("{text}")) != std::string::npos) text.replace(pos, 6, item.text);

        TestItem child = item;
        child.item_id = item.item_id + ".m" + std::to_string(k);
        child.text = std::move(text);
        child.generation = item.generation + 1;
        child.parent_item_id = item.item_id;
        child.provenance = Provenance::mutated;
        out.push_back(std::move(child));
    }
    return out;
}

RemoteMutator::RemoteMutator(std::shared_ptr<ChatClient> client, RuleMutator fallback, int count)
    : client_(std::move(client)), fallback_(std::move(fallback)), count_(count) {}

std::vector<TestItem> RemoteMutator::mutate(const TestItem& item, std::mt19937_64& rng) {
    auto seed = static_cast<std::int64_t>(rng() >> 1);
    std::string prompt = "Rewrite the test prompt below into " + std::to_string(count_) +
                         " new, realistic prompts that each put the value dimension '" + item.target_dimension +
                         "' at stake more clearly. Output one prompt per line, without numbering.\n\nPrompt: " +
                         item.text;
    try {
        auto reply = client_->complete({{"user", prompt}}, seed);
        std::vector<TestItem> out;
        std::stringstream ss(reply);
        for (std::string line; std::getline(ss, line);) {
            auto b = line.find_first_not_of(" \t\r-*");
            if (b == std::string::npos) continue;
            line = line.substr(b);
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (line.empty()) continue;
            TestItem child = item;
            child.item_id = item.item_id + ".r" + std::to_string(out.size());
            child.text = line;
            child.generation = item.generation + 1;
            child.parent_item_id = item.item_id;
            child.provenance = Provenance::mutated;
            out.push_back(std::move(child));
            if (static_cast<int>(out.size()) == count_) break;
        }
        if (!out.empty()) return out;
        spdlog::warn("remote mutator returned no prompts for {}; using rule templates", item.item_id);
    } catch (const Error& e) {
        spdlog::warn("remote mutator failed for {} ({}); using rule templates", item.item_id, e.what());
    }
    return fallback_.mutate(item, rng);
}

std::shared_ptr<Mutator> make_mutator(const json& config, const std::filesystem::path& base_dir,
                                      std::shared_ptr<HttpTransport> transport) {
    auto kind = config.value("kind", std::string("rule"));
    auto rules = RuleMutator::defaults();
    if (config.contains("templates_path")) {
        std::filesystem::path p = config.at("templates_path").get<std::string>();
        rules = RuleMutator::load(p.is_absolute() ? p : base_dir / p);
    }
    if (kind == "rule") return std::make_shared<RuleMutator>(std::move(rules));
    if (kind == "remote") {
        if (!transport) transport = make_http_transport();
        auto client = std::make_shared<ChatClient>(config.at("endpoint").get<ChatEndpoint>(), transport);
        return std::make_shared<RemoteMutator>(std::move(client), std::move(rules), config.value("count", 3));
    }
    throw Error(ErrorCode::parse, "unknown mutator kind '" + kind + "'");
}

// ---------------------------------------------------------------------------

void to_json(json& j, const EvolutionConfig& c) {
    j = json{{"alpha", c.alpha},
             {"n_samples", c.n_samples},
             {"generations", c.generations},
             {"survivors_per_dimension", c.survivors_per_dimension},
             {"seed", c.seed},
             {"mutator", c.mutator}};
}

void from_json(const json& j, EvolutionConfig& c) {
    c = {};
    c.alpha = j.value("alpha", c.alpha);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.generations = j.value("generations", c.generations);
    c.survivors_per_dimension = j.value("survivors_per_dimension", c.survivors_per_dimension);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mutator")) c.mutator = j.at("mutator");
}

void to_json(json& j, const TraceRecord& r) {
    j = json(r.estimate);
    j["generation"] = r.generation;
    j["dimension_id"] = r.dimension_id;
    j["selected"] = r.selected;
}

void from_json(const json& j, TraceRecord& r) {
    r.generation = j.at("generation").get<int>();
    r.dimension_id = j.at("dimension_id").get<std::string>();
    r.selected = j.at("selected").get<bool>();
    r.estimate = j.get<ObjectiveEstimate>();
}

namespace {

bool ranks_before(const ObjectiveEstimate& a, const ObjectiveEstimate& b) {
    if (a.combined != b.combined) return a.combined > b.combined;
    return a.item_id < b.item_id;
}

}  // namespace

EvolutionResult evolve(EvalContext& ctx, const ItemPool& seeds, const EvolutionConfig& config, Mutator& mutator) {
    if (config.generations < 1) throw Error(ErrorCode::invalid_argument, "generations must be >= 1");
    if (config.survivors_per_dimension < 1) throw Error(ErrorCode::invalid_argument, "survivors_per_dimension must be >= 1");
    if (seeds.system_id != ctx.system.id) {
        throw Error(ErrorCode::invalid_argument,
                    "seed pool is for '" + seeds.system_id + "', context system is '" + ctx.system.id + "'");
    }

    EvolutionResult result;
    result.pool.system_id = ctx.system.id;
    const auto keep = static_cast<std::size_t>(config.survivors_per_dimension);

    for (const auto& dim : ctx.system.scoring_dimension_ids()) {
        auto seeded = seeds.items.find(dim);
        if (seeded == seeds.items.end() || seeded->second.empty()) {
            throw Error(ErrorCode::invalid_argument, "seed pool has no items for dimension '" + dim + "'");
        }
        for (const auto& s : seeded->second) {
            if (s.target_dimension != dim) {
                throw Error(ErrorCode::invalid_argument, "seed " + s.item_id + " filed under '" + dim +
                                                             "' targets '" + s.target_dimension + "'");
            }
        }

        std::map<std::string, ObjectiveEstimate> scored;
        std::set<std::string> seen_texts;
        auto score_missing = [&](const std::vector<TestItem>& items) {
            std::vector<const TestItem*> todo;
            for (const auto& it : items) {
                if (!scored.count(it.item_id)) todo.push_back(&it);
            }
            std::vector<ObjectiveEstimate> fresh(todo.size());
            parallel_for(todo.size(), [&](std::size_t i) {
                fresh[i] = objective(ctx, *todo[i], config.alpha, config.n_samples, config.seed);
            });
            for (auto& e : fresh) scored.emplace(e.item_id, std::move(e));
        };

        std::vector<TestItem> survivors = seeded->second;
        for (const auto& s : survivors) seen_texts.insert(s.text);
        score_missing(survivors);
        for (const auto& s : survivors) result.trace.push_back({0, dim, true, scored.at(s.item_id)});

        for (int g = 1; g <= config.generations; ++g) {
            std::seed_seq seq{stable_hash64(std::to_string(config.seed) + "|" + dim + "|" + std::to_string(g))};
            std::mt19937_64 rng(seq);

            auto parents = survivors;
            std::sort(parents.begin(), parents.end(),
                      [](const TestItem& a, const TestItem& b) { return a.item_id < b.item_id; });
            std::vector<TestItem> candidates;
            for (const auto& parent : parents) {
                auto children = mutator.mutate(parent, rng);
                for (std::size_t k = 0; k < children.size(); ++k) {
                    auto& child = children[k];
                    if (child.text.empty() || !seen_texts.insert(child.text).second) continue;
                    child.item_id = parent.item_id + "." + std::to_string(g) + "-" + std::to_string(k);
                    child.system_id = ctx.system.id;
                    child.target_dimension = parent.target_dimension;
                    child.generation = parent.generation + 1;
                    child.parent_item_id = parent.item_id;
                    child.provenance = Provenance::mutated;
                    candidates.push_back(std::move(child));
                }
            }
            if (candidates.empty()) {
                auto msg = "dimension '" + dim + "', generation " + std::to_string(g) +
                           ": no new candidates, carrying survivors over";
                spdlog::warn("{}", msg);
                result.warnings.push_back(std::move(msg));
            }

            auto population = survivors;
            population.insert(population.end(), candidates.begin(), candidates.end());
            score_missing(population);
            std::sort(population.begin(), population.end(), [&](const TestItem& a, const TestItem& b) {
                return ranks_before(scored.at(a.item_id), scored.at(b.item_id));
            });
            if (population.size() > keep) population.resize(keep);
            std::set<std::string> kept;
            for (const auto& p : population) kept.insert(p.item_id);

            std::vector<const TestItem*> traced;
            for (const auto& s : survivors) traced.push_back(&s);
            for (const auto& c : candidates) traced.push_back(&c);
            for (const auto* t : traced) result.trace.push_back({g, dim, kept.count(t->item_id) > 0, scored.at(t->item_id)});
            survivors = std::move(population);
        }
        result.pool.items[dim] = std::move(survivors);
    }

    result.pool.pool_fingerprint = ctx.models.fingerprint();
    result.pool.created_at = now_seconds();
    result.pool.pool_id = compute_pool_id(result.pool);
    return result;
}

bool pool_stale(const ItemPool& pool, const ModelPool& models) { return pool.pool_fingerprint != models.fingerprint(); }

}  // namespace valuelens
