#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "valuelens/common.hpp"

namespace valuelens {

struct ValueDimension {
    std::string id;
    std::string system_id;
    std::string name;
    std::string description;
    std::optional<std::string> parent_id;
    int level = 0;

    bool operator==(const ValueDimension&) const = default;
};

struct ValueSystem {
    std::string id;
    std::string name;
    int scoring_level = 0;
    std::vector<ValueDimension> dimensions;
    // Declared number of dimensions per level, checked at load time when present.
    std::map<int, int> level_counts;

    bool operator==(const ValueSystem&) const = default;

    // Dimensions at the scoring level, in declared order.
    std::vector<ValueDimension> scoring_dimensions() const;
    std::vector<std::string> scoring_dimension_ids() const;
    const ValueDimension* find(std::string_view dimension_id) const;
    bool is_scoring_dimension(std::string_view dimension_id) const;
};

// Parses and validates one value-system document (JSON text).
ValueSystem load_value_system(std::string_view spec_document);
ValueSystem load_value_system_file(const std::filesystem::path& path);

void to_json(json& j, const ValueSystem& system);
std::string serialize_value_system(const ValueSystem& system);

// Immutable once populated; concurrent readers need no locking.
class TaxonomyRegistry {
public:
    void add(ValueSystem system);

    // Loads every *.json in the directory, sorted by file name.
    static TaxonomyRegistry load_directory(const std::filesystem::path& dir);

    const ValueSystem& system(std::string_view system_id) const;
    bool contains(std::string_view system_id) const;
    std::vector<std::string> system_ids() const;

    std::vector<ValueDimension> list_dimensions(std::string_view system_id,
                                                std::optional<int> level = std::nullopt) const;

private:
    std::map<std::string, ValueSystem, std::less<>> systems_;
};

// Directory holding the shipped taxonomy files (compile-time default, overridable
// with VALUELENS_TAXONOMY_DIR).
std::filesystem::path default_taxonomy_dir();

}  // namespace valuelens
