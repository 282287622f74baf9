#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/culture.hpp"
#include "valuelens/evolver.hpp"
#include "valuelens/gateway.hpp"
#include "valuelens/recognizer.hpp"
#include "valuelens/scoring.hpp"
#include "valuelens/storage.hpp"
#include "valuelens/taxonomy.hpp"

namespace valuelens {

std::filesystem::path default_data_dir();

// Reads model backends from a config array. "script_path" entries are resolved
// against base_dir and inlined, so snapshots are self-contained.
std::vector<ModelBackend> load_model_backends(const json& models, const std::filesystem::path& base_dir);

// Makes relative path fields of a recognizer or mutator config absolute.
json resolve_component_paths(json config, const std::filesystem::path& base_dir);

struct RunConfig {
    // system_id -> pool_id; "latest" picks the newest stored pool for the system.
    std::map<std::string, std::string> pools;
    std::vector<ModelBackend> models;
    json recognizer = json{{"kind", "tags"}};
    int n_samples = 5;
    std::int64_t seed = 0;
    StanceMap stance_map;
    bool allow_stale = false;
    double max_unrecognized_fraction = 0.05;
    int workers = 0;  // 0: hardware concurrency

    bool operator==(const RunConfig&) const = default;
};

void to_json(json& j, const RunConfig& c);
void from_json(const json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir);

enum class RunStatus { running, complete, failed };

std::string_view to_string(RunStatus s);
RunStatus parse_run_status(std::string_view s);

struct RunRecord {
    std::string run_id;
    std::map<std::string, std::string> pools;  // system_id -> pool_id
    std::vector<std::string> model_ids;
    std::vector<std::string> system_ids;
    RunConfig config;
    RunStatus status = RunStatus::running;
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
    std::map<std::string, std::string> artifacts;  // name -> data-dir-relative path
    std::size_t n_responses = 0;
    std::size_t n_unrecognized = 0;
    std::vector<std::string> diagnostics;

    bool operator==(const RunRecord&) const = default;
};

void to_json(json& j, const RunRecord& r);
void from_json(const json& j, RunRecord& r);

void save_run_record(const DataStore& store, const RunRecord& record);
RunRecord load_run_record(const DataStore& store, const std::string& run_id);

// Latest run whose final event is "complete", optionally restricted to runs that
// covered the system.
std::optional<std::string> latest_complete_run(const DataStore& store,
                                               const std::optional<std::string>& system_id = std::nullopt);
std::vector<std::string> complete_runs(const DataStore& store);

// One recognition outcome as persisted: either a result or an unrecognized marker.
struct RecognitionRecord {
    std::string system_id;
    std::string model_id;
    std::string item_id;
    int sample_index = 0;
    std::optional<RecognitionResult> result;
    std::string error;  // set when result is empty

    bool operator==(const RecognitionRecord&) const = default;
};

void to_json(json& j, const RecognitionRecord& r);
void from_json(const json& j, RecognitionRecord& r);

struct RunArtifacts {
    RunRecord record;
    std::vector<json> responses;  // {"system_id", "response"}
    std::vector<RecognitionRecord> recognitions;
    std::map<std::string, std::vector<ConformityScore>> scores;  // per system
};

RunArtifacts load_run_artifacts(const DataStore& store, const std::string& run_id);

// Scores for one system rebuilt from recognition records and the item pool.
std::vector<ConformityScore> compute_scores(const ValueSystem& system, const ItemPool& pool,
                                            const std::vector<std::string>& model_ids,
                                            const std::vector<RecognitionRecord>& recognitions,
                                            const StanceMap& stance_map);

std::vector<ValueVector> value_vectors(const ValueSystem& system, const std::vector<std::string>& model_ids,
                                       const std::vector<ConformityScore>& scores);

// Samples, recognizes and scores every (model, item) pair of every referenced pool.
// A failed run is still persisted; the error is rethrown as run_failed.
RunRecord run_evaluation(DataStore& store, const TaxonomyRegistry& taxonomy, const RunConfig& config,
                         std::shared_ptr<HttpTransport> transport = nullptr);

struct EvolveConfig {
    std::string system_id;
    std::vector<TestItem> seeds;
    std::vector<ModelBackend> models;
    json recognizer = json{{"kind", "tags"}};
    EvolutionConfig evolution;
};

EvolveConfig load_evolve_config(const std::filesystem::path& path);

// Runs the evolver and persists the pool and its trace.
EvolutionResult run_evolution(DataStore& store, const TaxonomyRegistry& taxonomy, const EvolveConfig& config,
                              std::shared_ptr<HttpTransport> transport = nullptr);

std::vector<CultureProfile> load_culture_profiles(const DataStore& store, const ValueSystem& schwartz);

struct AuditReport {
    std::vector<std::string> runs;
    std::vector<std::string> pools;
    std::size_t checks = 0;
    std::vector<std::string> discrepancies;
    std::vector<std::string> notes;

    bool ok() const { return discrepancies.empty(); }
};

void to_json(json& j, const AuditReport& r);

// Recomputes every served number from raw artifacts and compares it with what the
// service would report.
AuditReport audit(const DataStore& store, const TaxonomyRegistry& taxonomy,
                  const std::optional<std::string>& run_id = std::nullopt);

// Writes leaderboard-<system>.csv files; returns the written paths.
std::vector<std::filesystem::path> export_run(const DataStore& store, const TaxonomyRegistry& taxonomy,
                                              const std::string& run_id, const std::optional<std::string>& system_id,
                                              const std::filesystem::path& out_dir);

}  // namespace valuelens
