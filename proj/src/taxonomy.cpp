#include "valuelens/taxonomy.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace valuelens {

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw Error(ErrorCode::parse, where + ": missing string field '" + key + "'");
    }
    return it->get<std::string>();
}

}  // namespace

std::vector<ValueDimension> ValueSystem::scoring_dimensions() const {
    std::vector<ValueDimension> out;
    for (const auto& d : dimensions) {
        if (d.level == scoring_level) out.push_back(d);
    }
    return out;
}

std::vector<std::string> ValueSystem::scoring_dimension_ids() const {
    std::vector<std::string> out;
    for (const auto& d : dimensions) {
        if (d.level == scoring_level) out.push_back(d.id);
    }
    return out;
}

const ValueDimension* ValueSystem::find(std::string_view dimension_id) const {
    for (const auto& d : dimensions) {
        if (d.id == dimension_id) return &d;
    }
    return nullptr;
}

bool ValueSystem::is_scoring_dimension(std::string_view dimension_id) const {
    const auto* d = find(dimension_id);
    return d != nullptr && d->level == scoring_level;
}

ValueSystem load_value_system(std::string_view spec_document) {
    json doc;
    try {
        doc = json::parse(spec_document);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, std::string("value system document: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::parse, "value system document must be an object");

    ValueSystem sys;
    sys.id = require_string(doc, "id", "value system");
    sys.name = require_string(doc, "name", sys.id);
    if (auto it = doc.find("scoring_level"); it != doc.end()) {
        if (!it->is_number_integer()) throw Error(ErrorCode::parse, sys.id + ": scoring_level must be an integer");
        sys.scoring_level = it->get<int>();
    }
    auto dims = doc.find("dimensions");
    if (dims == doc.end() || !dims->is_array() || dims->empty()) {
        throw Error(ErrorCode::parse, sys.id + ": 'dimensions' must be a non-empty array");
    }
    if (auto it = doc.find("level_counts"); it != doc.end()) {
        if (!it->is_object()) throw Error(ErrorCode::parse, sys.id + ": level_counts must be an object");
        for (const auto& [level, count] : it->items()) {
            try {
                sys.level_counts[std::stoi(level)] = count.get<int>();
            } catch (const std::exception&) {
                throw Error(ErrorCode::parse, sys.id + ": bad level_counts entry '" + level + "'");
            }
        }
    }

    std::map<std::string, int> levels;
    for (const auto& d : *dims) {
        if (!d.is_object()) throw Error(ErrorCode::parse, sys.id + ": dimension entries must be objects");
        ValueDimension dim;
        dim.system_id = sys.id;
        dim.id = require_string(d, "id", sys.id + " dimension");
        dim.name = require_string(d, "name", sys.id + "/" + dim.id);
        dim.description = require_string(d, "description", sys.id + "/" + dim.id);
        if (dim.description.empty()) {
            throw Error(ErrorCode::parse, sys.id + "/" + dim.id + ": description must be non-empty");
        }
        if (auto p = d.find("parent_id"); p != d.end() && !p->is_null()) {
            dim.parent_id = p->get<std::string>();
        }
        auto lvl = d.find("level");
        if (lvl == d.end() || !lvl->is_number_integer() || lvl->get<int>() < 0) {
            throw Error(ErrorCode::parse, sys.id + "/" + dim.id + ": level must be an integer >= 0");
        }
        dim.level = lvl->get<int>();
        if (!levels.emplace(dim.id, dim.level).second) {
            throw Error(ErrorCode::duplicate, sys.id + ": duplicate dimension id '" + dim.id + "'");
        }
        sys.dimensions.push_back(std::move(dim));
    }

    for (const auto& dim : sys.dimensions) {
        if (dim.parent_id) {
            auto it = levels.find(*dim.parent_id);
            if (it == levels.end()) {
                throw Error(ErrorCode::dangling_parent,
                            sys.id + "/" + dim.id + ": parent '" + *dim.parent_id + "' does not exist");
            }
            if (it->second != dim.level - 1) {
                throw Error(ErrorCode::dangling_parent,
                            sys.id + "/" + dim.id + ": parent '" + *dim.parent_id + "' is not one level up");
            }
        } else if (dim.level != 0) {
            throw Error(ErrorCode::dangling_parent,
                        sys.id + "/" + dim.id + ": non-root dimension without parent_id");
        }
    }

    std::map<int, int> actual;
    for (const auto& dim : sys.dimensions) ++actual[dim.level];
    for (const auto& [level, expected] : sys.level_counts) {
        if (actual[level] != expected) {
            throw Error(ErrorCode::count_mismatch,
                        sys.id + ": level " + std::to_string(level) + " declares " + std::to_string(expected) +
                            " dimensions, found " + std::to_string(actual[level]));
        }
    }
    if (actual.find(sys.scoring_level) == actual.end()) {
        throw Error(ErrorCode::count_mismatch, sys.id + ": no dimensions at scoring level");
    }
    return sys;
}

ValueSystem load_value_system_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_value_system(ss.str());
}

void to_json(json& j, const ValueSystem& system) {
    json dims = json::array();
    for (const auto& d : system.dimensions) {
        json entry{{"id", d.id}, {"name", d.name}, {"description", d.description}, {"level", d.level}};
        if (d.parent_id) entry["parent_id"] = *d.parent_id;
        dims.push_back(std::move(entry));
    }
    json out{{"id", system.id}, {"name", system.name}, {"scoring_level", system.scoring_level}, {"dimensions", dims}};
    if (!system.level_counts.empty()) {
        json counts = json::object();
        for (const auto& [level, n] : system.level_counts) counts[std::to_string(level)] = n;
        out["level_counts"] = counts;
    }
    j = std::move(out);
}

std::string serialize_value_system(const ValueSystem& system) { return json(system).dump(2); }

void TaxonomyRegistry::add(ValueSystem system) {
    auto id = system.id;
    if (!systems_.emplace(id, std::move(system)).second) {
        throw Error(ErrorCode::duplicate, "value system '" + id + "' already registered");
    }
}

TaxonomyRegistry TaxonomyRegistry::load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::io, "taxonomy directory missing: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    TaxonomyRegistry reg;
    for (const auto& f : files) reg.add(load_value_system_file(f));
    return reg;
}

const ValueSystem& TaxonomyRegistry::system(std::string_view system_id) const {
    auto it = systems_.find(system_id);
    if (it == systems_.end()) throw Error(ErrorCode::not_found, "unknown value system '" + std::string(system_id) + "'");
    return it->second;
}

bool TaxonomyRegistry::contains(std::string_view system_id) const { return systems_.find(system_id) != systems_.end(); }

std::vector<std::string> TaxonomyRegistry::system_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : systems_) ids.push_back(id);
    return ids;
}

std::vector<ValueDimension> TaxonomyRegistry::list_dimensions(std::string_view system_id,
                                                              std::optional<int> level) const {
    const auto& sys = system(system_id);
    std::vector<ValueDimension> out;
    for (const auto& d : sys.dimensions) {
        if (!level || d.level == *level) out.push_back(d);
    }
    return out;
}

std::filesystem::path default_taxonomy_dir() {
    if (const char* dir = std::getenv("VALUELENS_TAXONOMY_DIR"); dir && *dir) return dir;
#ifdef VALUELENS_DATA_ROOT
    return std::filesystem::path(VALUELENS_DATA_ROOT) / "taxonomy";
#else
    return "data/taxonomy";
#endif
}

}  // namespace valuelens
