#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/gateway.hpp"
#include "valuelens/items.hpp"
#include "valuelens/recognizer.hpp"
#include "valuelens/taxonomy.hpp"

namespace valuelens {

// What every estimator needs: the model pool, a recognizer and the active system.
struct EvalContext {
    ModelPool& models;
    Recognizer& recognizer;
    const ValueSystem& system;
};

struct SampledDistributions {
    std::vector<ValueDistribution> samples;  // recognized responses only
    std::size_t unrecognized = 0;
};

SampledDistributions sample_value_distributions(EvalContext& ctx, const std::string& model_id, const TestItem& item,
                                                int n, std::int64_t seed);

// Mean of the recognizer distributions over n sampled responses.
ValueDistribution estimate_value_distribution(EvalContext& ctx, const std::string& model_id, const TestItem& item,
                                              int n, std::int64_t seed);

double elicitation(EvalContext& ctx, const std::string& model_id, const TestItem& item, int n, std::int64_t seed);

struct ModelEstimate {
    std::string model_id;
    ValueDistribution distribution;
    double elicitation = 0.0;
    std::vector<ValueDistribution> samples;
    std::size_t unrecognized = 0;

    bool operator==(const ModelEstimate&) const = default;
};

struct ObjectiveEstimate {
    std::string item_id;
    double informativeness = 0.0;
    double elicitation = 0.0;  // pool mean
    double alpha = 0.5;
    double combined = 0.0;
    int n_samples = 0;
    std::vector<ModelEstimate> per_model;

    bool operator==(const ObjectiveEstimate&) const = default;
};

void to_json(json& j, const ModelEstimate& m);
void from_json(const json& j, ModelEstimate& m);
void to_json(json& j, const ObjectiveEstimate& e);
void from_json(const json& j, ObjectiveEstimate& e);

// (1−alpha)·informativeness + alpha·(pool-mean elicitation) for one item.
ObjectiveEstimate objective(EvalContext& ctx, const TestItem& item, double alpha, int n, std::int64_t seed);

// Rebuilds all derived fields from the persisted per-sample distributions.
ObjectiveEstimate recompute_objective(const ObjectiveEstimate& persisted);

class Mutator {
public:
    virtual ~Mutator() = default;
    virtual std::vector<TestItem> mutate(const TestItem& item, std::mt19937_64& rng) = 0;
};

// Template rewrites. Placeholders: {text}, {dimension}, and {choice:a|b|c} which
// picks one alternative with the rng.
class RuleMutator final : public Mutator {
public:
    explicit RuleMutator(std::vector<std::string> templates);
    static RuleMutator load(const std::filesystem::path& path);
    static RuleMutator defaults();

    std::vector<TestItem> mutate(const TestItem& item, std::mt19937_64& rng) override;
    std::size_t size() const { return templates_.size(); }

private:
    std::vector<std::string> templates_;
};

// Asks a chat backend for rewrites (one per line); falls back to the rule mutator
// on any failure.
class RemoteMutator final : public Mutator {
public:
    RemoteMutator(std::shared_ptr<ChatClient> client, RuleMutator fallback, int count = 3);
    std::vector<TestItem> mutate(const TestItem& item, std::mt19937_64& rng) override;

private:
    std::shared_ptr<ChatClient> client_;
    RuleMutator fallback_;
    int count_;
};

std::shared_ptr<Mutator> make_mutator(const json& config, const std::filesystem::path& base_dir,
                                      std::shared_ptr<HttpTransport> transport = nullptr);

struct EvolutionConfig {
    double alpha = 0.5;
    int n_samples = 5;
    int generations = 3;
    int survivors_per_dimension = 10;
    std::int64_t seed = 0;
    json mutator = json{{"kind", "rule"}};
};

void to_json(json& j, const EvolutionConfig& c);
void from_json(const json& j, EvolutionConfig& c);

struct TraceRecord {
    int generation = 0;
    std::string dimension_id;
    bool selected = false;
    ObjectiveEstimate estimate;

    bool operator==(const TraceRecord&) const = default;
};

void to_json(json& j, const TraceRecord& r);
void from_json(const json& j, TraceRecord& r);

struct EvolutionResult {
    ItemPool pool;
    std::vector<TraceRecord> trace;
    std::vector<std::string> warnings;
};

// Per dimension: score the seeds (generation 0), then G times mutate the survivors,
// pool them with their parents, score, and keep the top N_v by combined objective
// (ties by item_id).
EvolutionResult evolve(EvalContext& ctx, const ItemPool& seeds, const EvolutionConfig& config, Mutator& mutator);

bool pool_stale(const ItemPool& pool, const ModelPool& models);

}  // namespace valuelens
