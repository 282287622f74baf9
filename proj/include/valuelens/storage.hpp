#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/evolver.hpp"
#include "valuelens/items.hpp"

namespace valuelens {

inline constexpr int kSchemaVersion = 1;

// Snapshot document:
//   {"schema_version":1,"kind":"...","checksum":"<sha256 of payload>","payload":{...}}
void write_document(const std::filesystem::path& path, std::string_view kind, const json& payload);
json read_document(const std::filesystem::path& path, std::string_view kind);

// Record files hold one {"schema_version","checksum","payload"} object per line.
json wrap_record(const json& payload);
json unwrap_record(const json& record, const std::string& where);
void write_records(const std::filesystem::path& path, const std::vector<json>& payloads);
void append_record(const std::filesystem::path& path, const json& payload);
std::vector<json> read_records(const std::filesystem::path& path);

// Directory layout of a data dir:
//   pools/index.jsonl, pools/<pool_id>.json, traces/<pool_id>.jsonl,
//   runs/index.jsonl, runs/<run_id>/{run.json,responses.jsonl,recognitions.jsonl,scores.json},
//   cache/responses.jsonl, culture/profiles.csv
class DataStore {
public:
    explicit DataStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }

    void save_pool(const ItemPool& pool);
    ItemPool load_pool(const std::string& pool_id) const;
    bool has_pool(const std::string& pool_id) const;
    // Most recently saved pool for the system, if any.
    std::optional<std::string> latest_pool(const std::string& system_id) const;

    void save_trace(const std::string& pool_id, const std::vector<TraceRecord>& trace);
    std::vector<TraceRecord> load_trace(const std::string& pool_id) const;

    std::filesystem::path run_dir(const std::string& run_id) const;
    std::filesystem::path runs_index() const { return root_ / "runs" / "index.jsonl"; }
    std::filesystem::path cache_path() const { return root_ / "cache" / "responses.jsonl"; }
    std::filesystem::path culture_profiles_path() const { return root_ / "culture" / "profiles.csv"; }

    // Append-only run event log.
    void append_run_event(const json& event);
    std::vector<json> run_events() const;

private:
    std::filesystem::path root_;
    mutable std::mutex mu_;
};

}  // namespace valuelens
