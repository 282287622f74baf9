#include <gtest/gtest.h>

#include "support.hpp"
#include "valuelens/scoring.hpp"

using namespace valuelens;
using vltest::item;

namespace {

RecognitionResult result(const std::string& model, const std::string& item_id, int k,
                         std::vector<DimensionEntry> entries) {
    RecognitionResult r;
    r.model_id = model;
    r.item_id = item_id;
    r.sample_index = k;
    r.entries = std::move(entries);
    return r;
}

ValueVector vec(const std::string& id, std::vector<std::string> dims, std::vector<std::optional<double>> scores) {
    return {id, "toy", std::move(dims), std::move(scores)};
}

ValueSystem toy_system() {
    return load_value_system(R"({"id":"toy","name":"Toy","scoring_level":0,"level_counts":{"0":3},"dimensions":[
        {"id":"a","name":"A","description":"a","level":0},
        {"id":"b","name":"B","description":"b","level":0},
        {"id":"c","name":"C","description":"c","level":0}]})");
}

const std::vector<std::string> kDims{"a", "b", "c"};

}  // namespace

TEST(Scoring, ConformityClosedForm) {
    std::vector<RecognitionResult> rs{
        result("m", "i1", 0, {{"a", Stance::supports, 1.0}, {"b", Stance::not_relevant, 0.0}}),
        result("m", "i1", 1, {{"a", Stance::supports, 0.3}, {"b", Stance::violates, 1.0}}),
        result("m", "i2", 0, {{"a", Stance::violates, 0.5}, {"b", Stance::not_relevant, 0.0}}),
        result("m", "i2", 1, {{"a", Stance::not_relevant, 0.0}, {"b", Stance::not_relevant, 0.0}}),
        result("other", "i1", 0, {{"a", Stance::violates, 1.0}, {"b", Stance::violates, 1.0}}),
    };
    auto a = conformity_score("m", "a", rs, {}, 1);
    // Stances +1, +1, -1 -> mean 1/3 -> 66.666...
    ASSERT_TRUE(a.score);
    EXPECT_NEAR(*a.score, 200.0 / 3.0, 1e-12);
    EXPECT_EQ(a.n_items, 2);
    EXPECT_EQ(a.n_responses, 5);
    EXPECT_EQ(a.n_excluded, 2);
    auto b = conformity_score("m", "b", rs);
    EXPECT_DOUBLE_EQ(*b.score, 0.0);
    auto none = conformity_score("m", "c", rs);
    EXPECT_FALSE(none.score);

    StanceMap soft{0.5, -0.5};
    EXPECT_NEAR(*conformity_score("m", "a", rs, soft).score, (0.5 / 3.0 + 1.0) / 2.0 * 100.0, 1e-12);
    EXPECT_THROW(json({{"supports", 2.0}}).get<StanceMap>(), Error);
}

TEST(Scoring, ConformityStaysInRange) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 200; ++t) {
        std::vector<RecognitionResult> rs;
        for (int i = 0; i < 10; ++i) {
            auto s = static_cast<Stance>(rng() % 3);
            rs.push_back(result("m", "i" + std::to_string(i), 0, {{"a", s, s == Stance::not_relevant ? 0.0 : 1.0}}));
        }
        auto c = conformity_score("m", "a", rs);
        if (c.score) {
            EXPECT_GE(*c.score, 0.0);
            EXPECT_LE(*c.score, 100.0);
        }
    }
}

TEST(Scoring, SwfClosedForms) {
    auto v = vec("m", kDims, {80.0, 50.0, 20.0});
    SwfSpec w{SwfForm::utilitarian, {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}}};
    EXPECT_NEAR(aggregate_swf(v, w), 100.0 * (0.5 * 0.8 + 0.3 * 0.5 + 0.2 * 0.2), 1e-12);
    w.form = SwfForm::rawlsian;
    EXPECT_NEAR(aggregate_swf(v, w), 20.0, 1e-12);
    w.form = SwfForm::nash;
    EXPECT_NEAR(aggregate_swf(v, w), 100.0 * std::pow(0.8, 0.5) * std::pow(0.5, 0.3) * std::pow(0.2, 0.2), 1e-12);
    // Frozen: 100 * 0.8^0.5 * 0.5^0.3 * 0.2^0.2
    EXPECT_NEAR(aggregate_swf(v, w), 52.655288173369506, 1e-9);

    SwfSpec sel{SwfForm::rawlsian, {{"a", 0.5}, {"b", 0.5}, {"c", 0.0}}};
    EXPECT_NEAR(aggregate_swf(v, sel), 50.0, 1e-12);
    sel.form = SwfForm::nash;
    EXPECT_NEAR(aggregate_swf(v, sel), 100.0 * std::sqrt(0.8 * 0.5), 1e-12);

    auto zero = vec("z", kDims, {0.0, 90.0, 90.0});
    EXPECT_EQ(aggregate_swf(zero, SwfSpec::equal_weights(SwfForm::nash, kDims)), 0.0);
}

TEST(Scoring, SwfValidation) {
    auto v = vec("m", kDims, {80.0, std::nullopt, 20.0});
    EXPECT_THROW(aggregate_swf(v, SwfSpec{SwfForm::utilitarian, {}}), Error);
    EXPECT_THROW(aggregate_swf(v, SwfSpec{SwfForm::utilitarian, {{"a", 0.6}, {"c", 0.6}}}), Error);
    EXPECT_THROW(aggregate_swf(v, SwfSpec{SwfForm::utilitarian, {{"a", 1.5}, {"c", -0.5}}}), Error);
    EXPECT_THROW(aggregate_swf(v, SwfSpec{SwfForm::utilitarian, {{"a", 0.5}, {"a", 0.5}}}), Error);
    try {
        aggregate_swf(v, SwfSpec{SwfForm::utilitarian, {{"a", 0.5}, {"b", 0.5}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::undefined);
    }
    EXPECT_THROW(parse_swf_form("egalitarian"), Error);
}

TEST(Scoring, SwfParetoAndAnonymity) {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    for (int t = 0; t < 1000; ++t) {
        for (auto form : {SwfForm::utilitarian, SwfForm::rawlsian, SwfForm::nash}) {
            auto spec = SwfSpec::equal_weights(form, kDims);
            std::vector<std::optional<double>> s{u(rng), u(rng), u(rng)};
            auto better = s;
            better[rng() % 3] = std::min(100.0, *better[rng() % 3] + u(rng) / 4.0);
            for (std::size_t i = 0; i < 3; ++i) better[i] = std::max(*better[i], *s[i]);
            EXPECT_GE(aggregate_swf(vec("x", kDims, better), spec) + 1e-9, aggregate_swf(vec("x", kDims, s), spec));

            auto perm = s;
            std::shuffle(perm.begin(), perm.end(), rng);
            EXPECT_NEAR(aggregate_swf(vec("x", kDims, perm), spec), aggregate_swf(vec("x", kDims, s), spec), 1e-9);
        }
    }
}

TEST(Scoring, LeaderboardRanksWithTiesAndUnranked) {
    auto sys = toy_system();
    std::vector<ValueVector> vs{
        vec("beta", kDims, {60.0, 60.0, 60.0}),
        vec("alpha", kDims, {60.0, 60.0, 60.0}),
        vec("gamma", kDims, {10.0, 20.0, 30.0}),
        vec("delta", kDims, {std::nullopt, 99.0, 99.0}),
    };
    std::map<std::string, ModelMetadata> meta{{"alpha", {"Lab A", "2024-01-01"}}};
    auto board = leaderboard(sys, vs, meta);
    ASSERT_EQ(board.rows.size(), 4u);
    EXPECT_EQ(board.rows[0].model_id, "alpha");
    EXPECT_EQ(board.rows[1].model_id, "beta");
    EXPECT_EQ(board.rows[0].rank, 1);
    EXPECT_EQ(board.rows[1].rank, 1);
    EXPECT_EQ(board.rows[2].model_id, "gamma");
    EXPECT_EQ(board.rows[2].rank, 3);
    EXPECT_EQ(board.rows[3].model_id, "delta");
    EXPECT_FALSE(board.rows[3].rank);
    EXPECT_NE(board.rows[3].unranked_reason.find("a"), std::string::npos);
    EXPECT_EQ(board.rows[0].metadata.developer, "Lab A");

    auto by_b = leaderboard(sys, vs, meta, std::vector<std::string>{"b", "c"}, std::nullopt, SwfForm::rawlsian);
    EXPECT_EQ(by_b.rows[0].model_id, "delta");
    EXPECT_NEAR(*by_b.rows[0].aggregate, 99.0, 1e-12);

    EXPECT_THROW(leaderboard(sys, vs, meta, std::vector<std::string>{"zzz"}), Error);
    EXPECT_THROW(leaderboard(sys, vs, meta, std::vector<std::string>{}), Error);
}

TEST(Scoring, DefaultLeaderboardSkipsAllUndefinedDimension) {
    auto sys = toy_system();
    std::vector<ValueVector> vs{vec("x", kDims, {50.0, 70.0, std::nullopt}), vec("y", kDims, {40.0, 90.0, std::nullopt})};
    auto board = leaderboard(sys, vs, {});
    EXPECT_EQ(board.swf.dimensions(), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(board.rows[0].model_id, "y");
    EXPECT_NEAR(*board.rows[0].aggregate, 65.0, 1e-12);
}

TEST(Scoring, ExportTableFormat) {
    auto sys = toy_system();
    std::vector<ValueVector> vs{vec("m,1", kDims, {50.0, std::nullopt, 25.0})};
    auto board = leaderboard(sys, vs, {{"m,1", {"Lab \"Q\"", "2024-02-02"}}}, std::vector<std::string>{"a", "c"});
    auto csv = export_leaderboard_table(board, vs, sys);
    EXPECT_EQ(csv,
              "model_id,developer,release_date,aggregate,rank,a,b,c\n"
              "\"m,1\",\"Lab \"\"Q\"\"\",2024-02-02,37.500000,1,50.000000,,25.000000\n");
}

TEST(Scoring, ScoreTableVectors) {
    auto sys = toy_system();
    ScoreTable table;
    table.add({"m", "a", 75.0, 1, 2, 0});
    table.add({"m", "c", std::nullopt, 1, 2, 2});
    auto v = table.value_vector("m", sys);
    EXPECT_EQ(v.dimension_ids, kDims);
    EXPECT_EQ(v.scores[0], 75.0);
    EXPECT_FALSE(v.scores[1]);
    EXPECT_FALSE(v.fully_defined());
    EXPECT_EQ(json(v).get<ValueVector>(), v);
    ConformityScore s{"m", "a", 75.0, 1, 2, 0};
    EXPECT_EQ(json(s).get<ConformityScore>(), s);
    EXPECT_EQ(json(s).at("status"), "defined");
}

TEST(Scoring, AnswerExtraction) {
    EXPECT_EQ(extract_answer("I think... Answer: B"), "B");
    EXPECT_EQ(extract_answer("answer: b"), std::nullopt);
    EXPECT_EQ(extract_answer("Answer: (c) because"), "C");
    EXPECT_EQ(extract_answer("no idea"), std::nullopt);
}

TEST(Scoring, DiscriminativeHarness) {
    ResponseScript s;
    s.rules.push_back({"honesty", {"Answer: A"}});
    s.rules.push_back({"loyalty", {"Answer: C"}});
    s.fallback = {"I would rather not say."};
    ModelPool pool;
    pool.register_backend(vltest::scripted("mcq", s));
    std::vector<McqItem> items{
        {"q1", "Is honesty important?", {"Yes", "No"}, "A", "x"},
        {"q2", "Is loyalty important?", {"Yes", "No", "Maybe"}, "A", "x"},
        {"q3", "Something else?", {"Yes", "No"}, "A", "x"},
    };
    auto r = discriminative_score(pool, "mcq", items, 0);
    EXPECT_EQ(r.n_items, 3);
    EXPECT_EQ(r.n_correct, 1);
    EXPECT_EQ(r.n_unextractable, 1);
    EXPECT_NEAR(r.score, 100.0 / 3.0, 1e-12);
    auto prompt = mcq_prompt(items[1], "s");
    EXPECT_NE(prompt.text.find("C. Maybe"), std::string::npos);
    EXPECT_THROW(discriminative_score(pool, "mcq", std::vector<McqItem>{}, 0), Error);
}
