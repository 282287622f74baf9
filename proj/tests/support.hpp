#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "valuelens/gateway.hpp"
#include "valuelens/taxonomy.hpp"

namespace vltest {

using namespace valuelens;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "valuelens-test-XXXXXX").string();
        if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

inline const TaxonomyRegistry& shipped_taxonomy() {
    static const TaxonomyRegistry registry = TaxonomyRegistry::load_directory(default_taxonomy_dir());
    return registry;
}

inline std::filesystem::path samples_dir() { return VALUELENS_SAMPLES_DIR; }

inline ModelBackend scripted(const std::string& id, ResponseScript script, double temperature = 0.7) {
    ModelBackend b;
    b.model_id = id;
    b.kind = BackendKind::scripted;
    b.script = std::move(script);
    b.sampling.temperature = temperature;
    return b;
}

inline ResponseScript always(const std::string& text) {
    ResponseScript s;
    s.fallback = {text};
    return s;
}

inline TestItem item(const std::string& id, const std::string& text, const std::string& system,
                     const std::string& dim) {
    TestItem t;
    t.item_id = id;
    t.text = text;
    t.system_id = system;
    t.target_dimension = dim;
    return t;
}

// Random point on the K-simplex, sometimes with exact zeros.
inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t k) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(k);
    double sum = 0.0;
    for (auto& x : p) {
        x = u(rng) < 0.2 ? 0.0 : -std::log(1.0 - u(rng));
        sum += x;
    }
    if (sum == 0.0) {
        p[0] = 1.0;
        return p;
    }
    for (auto& x : p) x /= sum;
    return p;
}

}  // namespace vltest

namespace vltest {

// Three scripted models with distinct, fully recognizable Schwartz profiles. Items
// carry a "#<dimension>" marker the scripts key on.
inline std::vector<ModelBackend> profile_models() {
    const auto dims = shipped_taxonomy().system("schwartz").scoring_dimension_ids();
    std::vector<ModelBackend> out;
    const std::vector<std::string> ids{"atlas", "borealis", "cirrus"};
    for (std::size_t m = 0; m < ids.size(); ++m) {
        ResponseScript s;
        for (std::size_t d = 0; d < dims.size(); ++d) {
            // Number of supporting replies out of four differs per model and dimension.
            std::size_t support = (d * (m + 1) + m) % 5;
            std::vector<std::string> replies;
            for (std::size_t k = 0; k < 4; ++k) {
                replies.push_back(k < support ? "[supports:" + dims[d] + "]" : "[violates:" + dims[d] + "=0.5]");
            }
            s.rules.push_back({"#" + dims[d], replies});
        }
        s.fallback = {"[unrecognizable]"};
        auto b = scripted(ids[m], s);
        b.metadata = {"Lab " + ids[m], "2024-0" + std::to_string(m + 1) + "-01"};
        out.push_back(std::move(b));
    }
    return out;
}

// Schwartz pool with `per_dim` items per dimension, stamped for `models`.
inline ItemPool schwartz_pool(const std::vector<ModelBackend>& models, int per_dim = 2) {
    ItemPool pool;
    pool.system_id = "schwartz";
    for (const auto& d : shipped_taxonomy().system("schwartz").scoring_dimension_ids()) {
        for (int i = 0; i < per_dim; ++i) {
            pool.items[d].push_back(
                item(d + "-" + std::to_string(i), "Scenario " + std::to_string(i) + " about #" + d, "schwartz", d));
        }
    }
    ModelPool mp;
    for (const auto& m : models) mp.register_backend(m);
    pool.pool_fingerprint = mp.fingerprint();
    pool.created_at = 1700000000;
    pool.pool_id = compute_pool_id(pool);
    return pool;
}

}  // namespace vltest
