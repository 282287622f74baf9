#include "valuelens/items.hpp"

namespace valuelens {

std::size_t ItemPool::total_items() const {
    std::size_t n = 0;
    for (const auto& [_, v] : items) n += v.size();
    return n;
}

std::vector<TestItem> ItemPool::all_items() const {
    std::vector<TestItem> out;
    for (const auto& [_, v] : items) out.insert(out.end(), v.begin(), v.end());
    return out;
}

const TestItem* ItemPool::find(const std::string& item_id) const {
    for (const auto& [_, v] : items) {
        for (const auto& it : v) {
            if (it.item_id == item_id) return &it;
        }
    }
    return nullptr;
}

std::string compute_pool_id(const ItemPool& pool) {
    json j = pool;
    j.erase("pool_id");
    j.erase("created_at");
    return "pool-" + sha256_hex(j.dump()).substr(0, 16);
}

void to_json(json& j, const TestItem& item) {
    j = json{{"item_id", item.item_id},
             {"text", item.text},
             {"system_id", item.system_id},
             {"target_dimension", item.target_dimension},
             {"generation", item.generation},
             {"provenance", item.provenance == Provenance::seed ? "seed" : "mutated"}};
    if (item.parent_item_id) j["parent_item_id"] = *item.parent_item_id;
}

void from_json(const json& j, TestItem& item) {
    j.at("item_id").get_to(item.item_id);
    j.at("text").get_to(item.text);
    item.system_id = j.value("system_id", "");
    j.at("target_dimension").get_to(item.target_dimension);
    item.generation = j.value("generation", 0);
    item.parent_item_id.reset();
    if (auto p = j.find("parent_item_id"); p != j.end() && !p->is_null()) item.parent_item_id = p->get<std::string>();
    auto prov = j.value("provenance", std::string("seed"));
    if (prov == "seed") {
        item.provenance = Provenance::seed;
    } else if (prov == "mutated") {
        item.provenance = Provenance::mutated;
    } else {
        throw Error(ErrorCode::parse, "item " + item.item_id + ": unknown provenance '" + prov + "'");
    }
    if (item.text.empty()) throw Error(ErrorCode::parse, "item " + item.item_id + ": empty text");
}

void to_json(json& j, const ItemPool& pool) {
    json items = json::object();
    for (const auto& [dim, list] : pool.items) items[dim] = list;
    j = json{{"pool_id", pool.pool_id},
             {"system_id", pool.system_id},
             {"pool_fingerprint", pool.pool_fingerprint},
             {"created_at", pool.created_at},
             {"items", items}};
}

void from_json(const json& j, ItemPool& pool) {
    pool.pool_id = j.value("pool_id", "");
    j.at("system_id").get_to(pool.system_id);
    pool.pool_fingerprint = j.value("pool_fingerprint", "");
    pool.created_at = j.value("created_at", std::int64_t{0});
    pool.items.clear();
    for (const auto& [dim, list] : j.at("items").items()) {
        pool.items[dim] = list.get<std::vector<TestItem>>();
    }
}

void to_json(json& j, const McqItem& item) {
    j = json{{"item_id", item.item_id},
             {"text", item.text},
             {"choices", item.choices},
             {"correct_choice", item.correct_choice},
             {"dimension_id", item.dimension_id}};
}

void from_json(const json& j, McqItem& item) {
    j.at("item_id").get_to(item.item_id);
    j.at("text").get_to(item.text);
    j.at("choices").get_to(item.choices);
    j.at("correct_choice").get_to(item.correct_choice);
    j.at("dimension_id").get_to(item.dimension_id);
}

}  // namespace valuelens
