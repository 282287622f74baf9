#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "valuelens/common.hpp"

namespace valuelens {

enum class Provenance { seed, mutated };

// A value-evoking prompt aimed at one scoring-level dimension.
struct TestItem {
    std::string item_id;
    std::string text;
    std::string system_id;
    std::string target_dimension;
    int generation = 0;
    std::optional<std::string> parent_item_id;
    Provenance provenance = Provenance::seed;

    bool operator==(const TestItem&) const = default;
};

// Items per dimension, stamped with the fingerprint of the model pool they were
// selected against.
struct ItemPool {
    std::string pool_id;
    std::string system_id;
    std::map<std::string, std::vector<TestItem>> items;
    std::string pool_fingerprint;
    std::int64_t created_at = 0;

    bool operator==(const ItemPool&) const = default;

    std::size_t total_items() const;
    std::vector<TestItem> all_items() const;
    const TestItem* find(const std::string& item_id) const;
};

// Content hash over everything except pool_id.
std::string compute_pool_id(const ItemPool& pool);

void to_json(json& j, const TestItem& item);
void from_json(const json& j, TestItem& item);
void to_json(json& j, const ItemPool& pool);
void from_json(const json& j, ItemPool& pool);

// Multiple-choice item for the discriminative harness.
struct McqItem {
    std::string item_id;
    std::string text;
    std::vector<std::string> choices;
    std::string correct_choice;  // choice label, e.g. "A"
    std::string dimension_id;

    bool operator==(const McqItem&) const = default;
};

void to_json(json& j, const McqItem& item);
void from_json(const json& j, McqItem& item);

}  // namespace valuelens
