#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "support.hpp"
#include "valuelens/culture.hpp"

using namespace valuelens;

namespace {

const ValueSystem& schwartz() { return vltest::shipped_taxonomy().system("schwartz"); }

std::string header() {
    std::string h = "culture_id,label,source";
    for (const auto& d : schwartz().scoring_dimension_ids()) h += "," + d;
    return h + "\n";
}

std::string row(const std::string& id, double base) {
    std::string r = id + ",Culture " + id + ",survey";
    for (int i = 0; i < 10; ++i) r += "," + std::to_string(base + i * 0.1 * (i % 3));
    return r + "\n";
}

const oracle::Rows kRank3 = {{1, 0, 0, 2}, {0, 1, 0, 1}, {0, 0, 1, 3}, {1, 1, 1, 0}, {2, 0, 1, 1}};

std::vector<std::pair<std::string, std::vector<double>>> named(const oracle::Rows& rows) {
    std::vector<std::pair<std::string, std::vector<double>>> out;
    for (std::size_t i = 0; i < rows.size(); ++i) out.emplace_back("e" + std::to_string(i), rows[i]);
    return out;
}

}  // namespace

TEST(Culture, IngestReordersColumns) {
    auto dims = schwartz().scoring_dimension_ids();
    std::string h = "culture_id,label,source";
    for (auto it = dims.rbegin(); it != dims.rend(); ++it) h += "," + *it;
    std::string line = "xx,\"Land, of X\",wvs";
    for (int i = 0; i < 10; ++i) line += "," + std::to_string(9 - i);  // reversed order: value = index
    auto profiles = ingest_culture_profiles(h + "\n" + line + "\n\n", schwartz());
    ASSERT_EQ(profiles.size(), 1u);
    EXPECT_EQ(profiles[0].label, "Land, of X");
    for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(profiles[0].vector[i], i);
}

TEST(Culture, IngestRejectsBadInput) {
    auto expect_code = [](const std::string& text, ErrorCode code) {
        try {
            ingest_culture_profiles(text, schwartz());
            ADD_FAILURE() << "accepted: " << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), code) << e.what();
        }
    };
    expect_code("id,label,source\n", ErrorCode::parse);
    expect_code(header() + row("a", 1) + row("a", 2), ErrorCode::duplicate);
    auto bad = row("b", 1);
    bad.replace(bad.rfind(','), std::string::npos, ",abc\n");
    expect_code(header() + bad, ErrorCode::parse);
    expect_code(header() + "c,C,s,1,2\n", ErrorCode::parse);
    auto short_header = header();
    short_header.replace(short_header.rfind(','), std::string::npos, "\n");
    expect_code(short_header, ErrorCode::parse);
}

TEST(Culture, ShippedSampleLoads) {
    std::ifstream in(vltest::samples_dir() / "cultures.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    auto profiles = ingest_culture_profiles(ss.str(), schwartz());
    EXPECT_EQ(profiles.size(), 6u);
}

TEST(Culture, FrozenCorrelations) {
    std::vector<double> a{1.0, 2.0, 3.5, 4.0, 7.0}, b{2.0, 1.0, 4.0, 3.0, 9.0};
    EXPECT_NEAR(correlate(a, b, CorrelationMethod::pearson), 0.9283684306639848, 1e-12);
    EXPECT_NEAR(correlate(a, b, CorrelationMethod::spearman), 0.8, 1e-12);
    std::vector<double> c{1, 2, 2, 3, 5}, d{5, 3, 3, 1, 0};
    EXPECT_NEAR(correlate(c, d, CorrelationMethod::spearman), -1.0, 1e-12);
    EXPECT_EQ(average_ranks(std::vector<double>{3, 1, 3, 2}), (std::vector<double>{3.5, 1, 3.5, 2}));
}

TEST(Culture, CorrelationsMatchOracle) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> g(50.0, 15.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(10), y(10);
        for (int i = 0; i < 10; ++i) {
            x[i] = g(rng);
            y[i] = 0.3 * x[i] + g(rng);
        }
        EXPECT_NEAR(correlate(x, y, CorrelationMethod::pearson), static_cast<double>(oracle::pearson(x, y)), 1e-9);
        EXPECT_NEAR(correlate(x, y, CorrelationMethod::spearman),
                    static_cast<double>(oracle::spearman_no_ties(x, y)), 1e-9);
    }
}

TEST(Culture, CorrelationProperties) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x(10), y(10);
        for (int i = 0; i < 10; ++i) {
            x[i] = u(rng);
            y[i] = u(rng);
        }
        for (auto m : {CorrelationMethod::pearson, CorrelationMethod::spearman}) {
            double r = correlate(x, y, m);
            EXPECT_GE(r, -1.0);
            EXPECT_LE(r, 1.0);
            EXPECT_NEAR(r, correlate(y, x, m), 1e-12);
            EXPECT_NEAR(correlate(x, x, m), 1.0, 1e-12);
        }
        // Pearson is invariant to positive affine maps.
        std::vector<double> z(10);
        for (int i = 0; i < 10; ++i) z[i] = 3.0 * y[i] + 7.0;
        EXPECT_NEAR(correlate(x, y, CorrelationMethod::pearson), correlate(x, z, CorrelationMethod::pearson), 1e-9);
    }
}

TEST(Culture, UndefinedCorrelation) {
    std::vector<double> flat(10, 50.0), x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    try {
        correlate(flat, x, CorrelationMethod::pearson);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::undefined);
    }
    ValueVector v{"m", "schwartz", schwartz().scoring_dimension_ids(), std::vector<std::optional<double>>(10, 50.0)};
    v.scores[3].reset();
    CultureProfile p{"c", "C", "s", x};
    EXPECT_THROW(correlate(v, p, CorrelationMethod::pearson), Error);
}

TEST(Culture, ProjectionFrozenRank3Fixture) {
    auto p = project(named(kRank3));
    EXPECT_EQ(p.rank, 3);
    EXPECT_FALSE(p.degenerate);
    EXPECT_NEAR(p.explained_variance[0], 8.0 / 13.0, 1e-9);
    EXPECT_NEAR(p.explained_variance[1], 15.0 / 52.0, 1e-9);
    EXPECT_NEAR(p.explained_variance[2], 5.0 / 52.0, 1e-9);
    // Rank-3 data: the projection keeps every pairwise distance.
    std::vector<double> frozen{std::sqrt(3.0), std::sqrt(3.0), std::sqrt(6.0), std::sqrt(3.0), std::sqrt(6.0),
                               std::sqrt(3.0), std::sqrt(6.0), std::sqrt(11.0), std::sqrt(8.0), std::sqrt(3.0)};
    std::size_t k = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = i + 1; j < 5; ++j) {
            std::vector<double> a(p.coordinates[i].begin(), p.coordinates[i].end());
            std::vector<double> b(p.coordinates[j].begin(), p.coordinates[j].end());
            EXPECT_NEAR(oracle::distance(a, b), frozen[k++], 1e-9);
        }
    }
}

TEST(Culture, ProjectionMatchesJacobiOracle) {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int t = 0; t < 30; ++t) {
        oracle::Rows rows(9, std::vector<double>(10));
        for (auto& r : rows) {
            for (auto& x : r) x = u(rng);
        }
        auto p = project(named(rows));
        auto ref = oracle::pca3(rows);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.coordinates[i][c], ref[i][c], 1e-6) << t << " " << i << " " << c;
        }
    }
}

TEST(Culture, ProjectionDegenerateAndGuards) {
    oracle::Rows collinear{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    auto p = project(named(collinear));
    EXPECT_EQ(p.rank, 1);
    EXPECT_TRUE(p.degenerate);
    for (const auto& c : p.coordinates) {
        EXPECT_EQ(c[1], 0.0);
        EXPECT_EQ(c[2], 0.0);
    }
    // Sign convention: the dominant loading is positive, so the last point is on the + side.
    EXPECT_GT(p.coordinates[3][0], 0.0);
    EXPECT_THROW(project(named({{1, 2}, {3, 4}, {5, 6}})), Error);
    EXPECT_THROW(project(named({{1, 2}, {3, 4}, {5, 6}, {7}})), Error);
}
