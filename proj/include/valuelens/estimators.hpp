#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/recognizer.hpp"

namespace valuelens {

// Shannon entropy in nats; 0·log 0 = 0.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double x : p) {
        if (x > 0.0) h -= x * std::log(x);
    }
    return h;
}

// H(mean of rows) − mean of H(rows): the generalized Jensen–Shannon divergence with
// uniform weights. Both the pool informativeness and the plug-in mutual information
// between value label and sampled response reduce to this quantity.
inline double mixture_entropy_gap(const std::vector<ValueDistribution>& rows) {
    if (rows.empty()) throw Error(ErrorCode::invalid_argument, "no distributions");
    const auto& ids = rows.front().dimension_ids;
    const std::size_t k = ids.size();
    std::vector<double> mean(k, 0.0);
    double mean_h = 0.0;
    for (const auto& r : rows) {
        if (r.dimension_ids != ids || r.probabilities.size() != k) {
            throw Error(ErrorCode::invalid_argument, "distributions are over different dimension sets");
        }
        for (std::size_t i = 0; i < k; ++i) mean[i] += r.probabilities[i];
        mean_h += entropy(r.probabilities);
    }
    const double m = static_cast<double>(rows.size());
    for (auto& x : mean) x /= m;
    mean_h /= m;
    double gap = entropy(mean) - mean_h;
    // Cancellation can leave a value a few ulps below zero.
    return gap < 0.0 ? 0.0 : gap;
}

// Divergence among the per-model value distributions of one item (M >= 2).
inline double informativeness(const std::vector<ValueDistribution>& per_model) {
    if (per_model.size() < 2) throw Error(ErrorCode::invalid_argument, "informativeness needs at least two models");
    return mixture_entropy_gap(per_model);
}

// Plug-in I(v; y | x) with the sampled responses as the support of y.
inline double elicitation(const std::vector<ValueDistribution>& per_sample) {
    return mixture_entropy_gap(per_sample);
}

inline ValueDistribution mean_distribution(const std::vector<ValueDistribution>& rows) {
    if (rows.empty()) throw Error(ErrorCode::estimation, "no distributions to average");
    ValueDistribution out{rows.front().dimension_ids, std::vector<double>(rows.front().probabilities.size(), 0.0)};
    for (const auto& r : rows) {
        if (r.dimension_ids != out.dimension_ids) {
            throw Error(ErrorCode::invalid_argument, "distributions are over different dimension sets");
        }
        for (std::size_t i = 0; i < r.probabilities.size(); ++i) out.probabilities[i] += r.probabilities[i];
    }
    for (auto& p : out.probabilities) p /= static_cast<double>(rows.size());
    return out;
}

}  // namespace valuelens
