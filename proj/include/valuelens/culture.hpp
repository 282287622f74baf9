#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/scoring.hpp"
#include "valuelens/taxonomy.hpp"

namespace valuelens {

struct CultureProfile {
    std::string culture_id;
    std::string label;
    std::string source;
    std::vector<double> vector;  // Schwartz scoring order

    bool operator==(const CultureProfile&) const = default;
};

void to_json(json& j, const CultureProfile& p);

// Delimited text with header `culture_id,label,source,<schwartz dimension ids>`. The
// dimension columns may come in any order; vectors are returned in taxonomy order.
std::vector<CultureProfile> ingest_culture_profiles(std::string_view csv_text, const ValueSystem& schwartz);

enum class CorrelationMethod { pearson, spearman };

std::string_view to_string(CorrelationMethod m);
CorrelationMethod parse_correlation_method(std::string_view s);

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

double correlate(std::span<const double> a, std::span<const double> b, CorrelationMethod method);
double correlate(const ValueVector& model, const CultureProfile& culture, CorrelationMethod method);

struct ProjectionResult {
    std::vector<std::string> entity_ids;
    std::vector<std::array<double, 3>> coordinates;
    std::array<double, 3> explained_variance{};
    int rank = 0;             // non-degenerate components found (≤ 3)
    bool degenerate = false;  // fewer than 3 components carry variance
};

// PCA to three components. Component signs are fixed so each component's
// largest-magnitude loading is positive.
ProjectionResult project(const std::vector<std::pair<std::string, std::vector<double>>>& vectors);

}  // namespace valuelens
