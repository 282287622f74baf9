#include "valuelens/storage.hpp"

#include <fstream>
#include <sstream>

namespace valuelens {

namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::io, "cannot write " + tmp.string());
        out << text;
        if (!out) throw Error(ErrorCode::io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void check_version(const json& obj, const std::string& where) {
    auto it = obj.find("schema_version");
    if (it == obj.end() || !it->is_number_integer()) {
        throw Error(ErrorCode::schema_version, where + ": missing schema_version");
    }
    int v = it->get<int>();
    if (v != kSchemaVersion) {
        throw Error(ErrorCode::schema_version, where + ": schema_version " + std::to_string(v) +
                                                   " requires migration to " + std::to_string(kSchemaVersion));
    }
}

void check_sum(const json& obj, const std::string& where) {
    auto payload = obj.find("payload");
    auto sum = obj.find("checksum");
    if (payload == obj.end() || sum == obj.end() || !sum->is_string()) {
        throw Error(ErrorCode::checksum, where + ": corrupt record (missing payload or checksum)");
    }
    if (sha256_hex(payload->dump()) != sum->get<std::string>()) {
        throw Error(ErrorCode::checksum, where + ": checksum mismatch");
    }
}

json parse_or_corrupt(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        throw Error(ErrorCode::checksum, where + ": corrupt record (not valid JSON)");
    }
}

}  // namespace

void write_document(const std::filesystem::path& path, std::string_view kind, const json& payload) {
    json doc{{"schema_version", kSchemaVersion},
             {"kind", kind},
             {"checksum", sha256_hex(payload.dump())},
             {"payload", payload}};
    write_atomic(path, doc.dump(1) + "\n");
}

json read_document(const std::filesystem::path& path, std::string_view kind) {
    auto where = path.string();
    auto doc = parse_or_corrupt(read_text(path), where);
    if (!doc.is_object()) throw Error(ErrorCode::checksum, where + ": corrupt document");
    check_version(doc, where);
    check_sum(doc, where);
    if (doc.value("kind", std::string()) != kind) {
        throw Error(ErrorCode::parse, where + ": expected a '" + std::string(kind) + "' document");
    }
    return doc.at("payload");
}

json wrap_record(const json& payload) {
    return json{{"schema_version", kSchemaVersion}, {"checksum", sha256_hex(payload.dump())}, {"payload", payload}};
}

json unwrap_record(const json& record, const std::string& where) {
    if (!record.is_object()) throw Error(ErrorCode::checksum, where + ": corrupt record");
    check_version(record, where);
    check_sum(record, where);
    return record.at("payload");
}

void write_records(const std::filesystem::path& path, const std::vector<json>& payloads) {
    std::string text;
    for (const auto& p : payloads) text += wrap_record(p).dump() + "\n";
    write_atomic(path, text);
}

void append_record(const std::filesystem::path& path, const json& payload) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::io, "cannot append to " + path.string());
    out << wrap_record(payload).dump() << "\n";
    out.flush();
}

std::vector<json> read_records(const std::filesystem::path& path) {
    std::vector<json> out;
    if (!std::filesystem::exists(path)) return out;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto where = path.string() + ":" + std::to_string(lineno);
        out.push_back(unwrap_record(parse_or_corrupt(line, where), where));
    }
    return out;
}

// ---------------------------------------------------------------------------

DataStore::DataStore(std::filesystem::path root) : root_(std::move(root)) {}

void DataStore::save_pool(const ItemPool& pool) {
    std::lock_guard lock(mu_);
    write_document(root_ / "pools" / (pool.pool_id + ".json"), "item_pool", json(pool));
    append_record(root_ / "pools" / "index.jsonl",
                  json{{"pool_id", pool.pool_id}, {"system_id", pool.system_id}, {"created_at", pool.created_at}});
}

ItemPool DataStore::load_pool(const std::string& pool_id) const {
    auto path = root_ / "pools" / (pool_id + ".json");
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::not_found, "unknown pool '" + pool_id + "'");
    return read_document(path, "item_pool").get<ItemPool>();
}

bool DataStore::has_pool(const std::string& pool_id) const {
    return std::filesystem::exists(root_ / "pools" / (pool_id + ".json"));
}

std::optional<std::string> DataStore::latest_pool(const std::string& system_id) const {
    std::optional<std::string> latest;
    for (const auto& rec : read_records(root_ / "pools" / "index.jsonl")) {
        if (rec.at("system_id") == system_id) latest = rec.at("pool_id").get<std::string>();
    }
    return latest;
}

void DataStore::save_trace(const std::string& pool_id, const std::vector<TraceRecord>& trace) {
    std::vector<json> payloads;
    payloads.reserve(trace.size());
    for (const auto& t : trace) payloads.emplace_back(t);
    write_records(root_ / "traces" / (pool_id + ".jsonl"), payloads);
}

std::vector<TraceRecord> DataStore::load_trace(const std::string& pool_id) const {
    std::vector<TraceRecord> out;
    for (const auto& rec : read_records(root_ / "traces" / (pool_id + ".jsonl"))) out.push_back(rec.get<TraceRecord>());
    return out;
}

std::filesystem::path DataStore::run_dir(const std::string& run_id) const { return root_ / "runs" / run_id; }

void DataStore::append_run_event(const json& event) {
    std::lock_guard lock(mu_);
    append_record(runs_index(), event);
}

std::vector<json> DataStore::run_events() const { return read_records(runs_index()); }

}  // namespace valuelens
