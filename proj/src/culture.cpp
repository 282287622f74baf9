#include "valuelens/culture.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>

namespace valuelens {

namespace {

std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

}  // namespace

void to_json(json& j, const CultureProfile& p) {
    j = json{{"culture_id", p.culture_id}, {"label", p.label}, {"source", p.source}, {"vector", p.vector}};
}

std::vector<CultureProfile> ingest_culture_profiles(std::string_view csv_text, const ValueSystem& schwartz) {
    auto dims = schwartz.scoring_dimension_ids();
    std::istringstream in{std::string(csv_text)};
    std::string line;
    std::size_t lineno = 0;

    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!trim(line).empty()) {
            header = split_csv(line);
            break;
        }
    }
    if (header.size() < 3 || header[0] != "culture_id" || header[1] != "label" || header[2] != "source") {
        throw Error(ErrorCode::parse, "culture file header must start with culture_id,label,source");
    }
    if (header.size() != 3 + dims.size()) {
        throw Error(ErrorCode::parse, "culture file header has " + std::to_string(header.size() - 3) +
                                          " dimension columns, expected " + std::to_string(dims.size()));
    }
    std::vector<std::size_t> column_of(dims.size());
    for (std::size_t d = 0; d < dims.size(); ++d) {
        auto it = std::find(header.begin() + 3, header.end(), dims[d]);
        if (it == header.end()) throw Error(ErrorCode::parse, "culture file header lacks dimension '" + dims[d] + "'");
        column_of[d] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<CultureProfile> out;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv(line);
        auto where = "line " + std::to_string(lineno);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::parse, where + ": " + std::to_string(cells.size()) + " columns, expected " +
                                              std::to_string(header.size()));
        }
        CultureProfile p{cells[0], cells[1], cells[2], {}};
        if (p.culture_id.empty()) throw Error(ErrorCode::parse, where + ": empty culture_id");
        if (!ids.insert(p.culture_id).second) {
            throw Error(ErrorCode::duplicate, where + ": duplicate culture_id '" + p.culture_id + "'");
        }
        for (auto col : column_of) {
            const auto& cell = cells[col];
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || cell.empty() || !std::isfinite(v)) {
                throw Error(ErrorCode::parse, where + ": non-numeric value '" + cell + "' in column " + header[col]);
            }
            p.vector.push_back(v);
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::string_view to_string(CorrelationMethod m) { return m == CorrelationMethod::pearson ? "pearson" : "spearman"; }

CorrelationMethod parse_correlation_method(std::string_view s) {
    if (s == "pearson") return CorrelationMethod::pearson;
    if (s == "spearman") return CorrelationMethod::spearman;
    throw Error(ErrorCode::invalid_argument, "unknown correlation method '" + std::string(s) + "'");
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double correlate(std::span<const double> a, std::span<const double> b, CorrelationMethod method) {
    if (a.size() != b.size() || a.size() < 2) {
        throw Error(ErrorCode::invalid_argument, "correlation needs two vectors of equal length >= 2");
    }
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    if (method == CorrelationMethod::spearman) {
        x = average_ranks(a);
        y = average_ranks(b);
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::undefined, "correlation undefined for a zero-variance vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double correlate(const ValueVector& model, const CultureProfile& culture, CorrelationMethod method) {
    if (model.scores.size() != culture.vector.size()) {
        throw Error(ErrorCode::invalid_argument, "model vector and culture vector differ in length");
    }
    std::vector<double> m;
    for (std::size_t i = 0; i < model.scores.size(); ++i) {
        if (!model.scores[i]) {
            throw Error(ErrorCode::undefined, model.model_id + ": dimension '" + model.dimension_ids[i] + "' undefined");
        }
        m.push_back(*model.scores[i]);
    }
    return correlate(m, culture.vector, method);
}

ProjectionResult project(const std::vector<std::pair<std::string, std::vector<double>>>& vectors) {
    if (vectors.size() < 4) throw Error(ErrorCode::invalid_argument, "projection needs at least 4 entities");
    const auto n = static_cast<Eigen::Index>(vectors.size());
    const auto d = static_cast<Eigen::Index>(vectors.front().second.size());
    if (d < 1) throw Error(ErrorCode::invalid_argument, "projection needs non-empty vectors");

    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = vectors[static_cast<std::size_t>(i)].second;
        if (static_cast<Eigen::Index>(v.size()) != d) throw Error(ErrorCode::invalid_argument, "vectors differ in length");
        for (Eigen::Index k = 0; k < d; ++k) {
            if (!std::isfinite(v[static_cast<std::size_t>(k)])) {
                throw Error(ErrorCode::invalid_argument, vectors[static_cast<std::size_t>(i)].first + ": non-finite value");
            }
            x(i, k) = v[static_cast<std::size_t>(k)];
        }
    }
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    Eigen::VectorXd values = solver.eigenvalues();  // ascending
    Eigen::MatrixXd vecs = solver.eigenvectors();
    const double total = std::max(0.0, values.sum());
    const double largest = values.size() ? std::max(0.0, values(values.size() - 1)) : 0.0;
    const double tol = std::max(1e-12, 1e-10 * largest);

    ProjectionResult out;
    for (const auto& [id, _] : vectors) out.entity_ids.push_back(id);
    out.coordinates.assign(vectors.size(), {0.0, 0.0, 0.0});
    for (int c = 0; c < 3; ++c) {
        Eigen::Index idx = values.size() - 1 - c;
        if (idx < 0 || values(idx) <= tol) break;
        Eigen::VectorXd comp = vecs.col(idx);
        Eigen::Index arg = 0;
        for (Eigen::Index k = 1; k < comp.size(); ++k) {
            if (std::abs(comp(k)) > std::abs(comp(arg)) + 1e-12) arg = k;
        }
        if (comp(arg) < 0) comp = -comp;
        Eigen::VectorXd scores = x * comp;
        for (Eigen::Index i = 0; i < n; ++i) out.coordinates[static_cast<std::size_t>(i)][c] = scores(i);
        out.explained_variance[c] = values(idx) / total;
        ++out.rank;
    }
    out.degenerate = out.rank < 3;
    return out;
}

}  // namespace valuelens
