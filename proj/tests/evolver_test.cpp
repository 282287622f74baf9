#include <gtest/gtest.h>

#include <deque>

#include "support.hpp"
#include "valuelens/evolver.hpp"

using namespace valuelens;
using vltest::item;

namespace {

const ValueSystem& mft() { return vltest::shipped_taxonomy().system("mft"); }

// Three models that disagree on items mentioning "duty" and agree elsewhere.
void fill_pool(ModelPool& pool) {
    auto make = [&](const std::string& id, const std::string& on_duty) {
        ResponseScript s;
        s.rules.push_back({"duty", {on_duty}});
        s.fallback = {"[supports:care]"};
        pool.register_backend(vltest::scripted(id, s));
    };
    make("m1", "[supports:loyalty]");
    make("m2", "[violates:authority]");
    make("m3", "[supports:sanctity=0.6][supports:care=0.4]");
}

ItemPool seed_pool() {
    ItemPool seeds;
    seeds.system_id = "mft";
    int n = 0;
    for (const auto& d : mft().scoring_dimension_ids()) {
        seeds.items[d].push_back(item("seed-" + d + "-a", "A plain question about " + d + ".", "mft", d));
        seeds.items[d].push_back(item("seed-" + d + "-b", "Is it your duty to uphold " + d + "?", "mft", d));
        if (n++ % 2 == 0) seeds.items[d].push_back(item("seed-" + d + "-c", "Tell me about " + d + ".", "mft", d));
    }
    return seeds;
}

class QueueTransport : public HttpTransport {
public:
    explicit QueueTransport(std::deque<HttpResponse> replies) : replies_(std::move(replies)) {}
    HttpResponse post(const HttpRequest&) override {
        std::lock_guard lock(mu_);
        if (replies_.empty()) return {500, "", std::nullopt};
        auto r = replies_.front();
        replies_.pop_front();
        return r;
    }

private:
    std::mutex mu_;
    std::deque<HttpResponse> replies_;
};

HttpResponse completion(const std::string& content) {
    return {200, json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(), std::nullopt};
}

}  // namespace

TEST(Evolver, RuleMutatorFillsPlaceholders) {
    RuleMutator m({"{choice:X|Y} says: {text} ({dimension})", "plain {text}"});
    std::mt19937_64 rng(1);
    auto parent = item("p", "Be kind?", "mft", "care");
    auto kids = m.mutate(parent, rng);
    ASSERT_EQ(kids.size(), 2u);
    EXPECT_TRUE(kids[0].text == "X says: Be kind? (care)" || kids[0].text == "Y says: Be kind? (care)");
    EXPECT_EQ(kids[1].text, "plain Be kind?");
    for (const auto& k : kids) {
        EXPECT_EQ(k.parent_item_id, "p");
        EXPECT_EQ(k.generation, 1);
        EXPECT_EQ(k.provenance, Provenance::mutated);
        EXPECT_EQ(k.target_dimension, "care");
    }
    EXPECT_EQ(RuleMutator::defaults().size(), 3u);
}

TEST(Evolver, RemoteMutatorParsesLinesAndFallsBack) {
    ChatEndpoint e;
    e.base_url = "http://example.invalid";
    e.model = "writer";
    e.retry_attempts = 1;
    e.retry_backoff_ms = 1;
    auto ok = std::make_shared<QueueTransport>(std::deque<HttpResponse>{completion("- First rewrite\n\n2nd rewrite  \n")});
    RemoteMutator remote(std::make_shared<ChatClient>(e, ok), RuleMutator({"fallback {text}"}), 3);
    std::mt19937_64 rng(0);
    auto kids = remote.mutate(item("p", "Base", "mft", "care"), rng);
    ASSERT_EQ(kids.size(), 2u);
    EXPECT_EQ(kids[0].text, "First rewrite");
    EXPECT_EQ(kids[1].text, "2nd rewrite");

    auto down = std::make_shared<QueueTransport>(std::deque<HttpResponse>{});
    RemoteMutator failing(std::make_shared<ChatClient>(e, down), RuleMutator({"fallback {text}"}), 3);
    auto fb = failing.mutate(item("p", "Base", "mft", "care"), rng);
    ASSERT_EQ(fb.size(), 1u);
    EXPECT_EQ(fb[0].text, "fallback Base");
}

TEST(Evolver, ProducesPoolWithLineageAndTrace) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    auto mutator = RuleMutator::defaults();
    EvolutionConfig cfg;
    cfg.generations = 2;
    cfg.survivors_per_dimension = 2;
    cfg.n_samples = 2;
    cfg.seed = 3;
    auto result = evolve(ctx, seed_pool(), cfg, mutator);

    EXPECT_EQ(result.pool.system_id, "mft");
    EXPECT_EQ(result.pool.pool_fingerprint, pool.fingerprint());
    EXPECT_EQ(result.pool.pool_id, compute_pool_id(result.pool));
    EXPECT_FALSE(pool_stale(result.pool, pool));
    for (const auto& d : mft().scoring_dimension_ids()) {
        const auto& items = result.pool.items.at(d);
        ASSERT_EQ(items.size(), 2u) << d;
        for (const auto& it : items) {
            EXPECT_EQ(it.target_dimension, d);
            // The duty seeds split the pool; everything kept descends from them.
            auto root = it.item_id.substr(0, it.item_id.find('.'));
            EXPECT_EQ(root, "seed-" + d + "-b") << it.item_id;
            if (it.provenance == Provenance::mutated) {
                ASSERT_TRUE(it.parent_item_id.has_value());
                EXPECT_EQ(it.generation, 1 + std::count(it.parent_item_id->begin(), it.parent_item_id->end(), '.'));
            }
        }
    }
    for (const auto& t : result.trace) EXPECT_EQ(recompute_objective(t.estimate), t.estimate);
}

TEST(Evolver, SurvivorsNeverGetWorse) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    auto mutator = RuleMutator::defaults();
    for (std::int64_t seed = 0; seed < 6; ++seed) {
        EvolutionConfig cfg;
        cfg.generations = 3;
        cfg.survivors_per_dimension = 2;
        cfg.n_samples = 2;
        cfg.seed = seed;
        auto result = evolve(ctx, seed_pool(), cfg, mutator);
        std::map<std::pair<std::string, int>, double> best;
        for (const auto& t : result.trace) {
            if (!t.selected) continue;
            auto& b = best[{t.dimension_id, t.generation}];
            b = std::max(b, t.estimate.combined);
        }
        for (const auto& d : mft().scoring_dimension_ids()) {
            for (int g = 1; g <= 3; ++g) EXPECT_GE((best[{d, g}]), (best[{d, g - 1}])) << d << " g" << g;
        }
    }
}

TEST(Evolver, DeterministicForFixedSeed) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    auto mutator = RuleMutator::defaults();
    EvolutionConfig cfg;
    cfg.generations = 2;
    cfg.survivors_per_dimension = 3;
    cfg.n_samples = 3;
    cfg.seed = 9;
    auto a = evolve(ctx, seed_pool(), cfg, mutator);
    auto b = evolve(ctx, seed_pool(), cfg, mutator);
    EXPECT_EQ(a.pool, b.pool);
    EXPECT_EQ(a.trace, b.trace);
}

TEST(Evolver, NoCandidatesCarriesSurvivorsOver) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    RuleMutator identity({"{text}"});
    EvolutionConfig cfg;
    cfg.generations = 1;
    cfg.survivors_per_dimension = 1;
    cfg.n_samples = 2;
    auto result = evolve(ctx, seed_pool(), cfg, identity);
    EXPECT_EQ(result.warnings.size(), mft().scoring_dimension_ids().size());
    // Survivors are still cut down to N_v.
    for (const auto& [d, items] : result.pool.items) EXPECT_EQ(items.size(), 1u) << d;
    EXPECT_EQ(result.pool.items.at("care")[0].item_id, "seed-care-b");
}

TEST(Evolver, InvalidInputsRejected) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    auto mutator = RuleMutator::defaults();
    EvolutionConfig cfg;
    cfg.generations = 0;
    EXPECT_THROW(evolve(ctx, seed_pool(), cfg, mutator), Error);
    cfg = {};
    cfg.survivors_per_dimension = 0;
    EXPECT_THROW(evolve(ctx, seed_pool(), cfg, mutator), Error);
    cfg = {};
    auto missing = seed_pool();
    missing.items.erase("care");
    EXPECT_THROW(evolve(ctx, missing, cfg, mutator), Error);
    auto wrong = seed_pool();
    wrong.items["care"][0].target_dimension = "fairness";
    EXPECT_THROW(evolve(ctx, wrong, cfg, mutator), Error);
    auto other = seed_pool();
    other.system_id = "schwartz";
    EXPECT_THROW(evolve(ctx, other, cfg, mutator), Error);
}

TEST(Evolver, PoolGoesStaleWhenModelsChange) {
    ModelPool pool;
    fill_pool(pool);
    TagRecognizer rec;
    EvalContext ctx{pool, rec, mft()};
    auto mutator = RuleMutator::defaults();
    EvolutionConfig cfg;
    cfg.generations = 1;
    cfg.survivors_per_dimension = 1;
    cfg.n_samples = 2;
    auto result = evolve(ctx, seed_pool(), cfg, mutator);
    EXPECT_FALSE(pool_stale(result.pool, pool));
    pool.register_backend(vltest::scripted("m4", vltest::always("[supports:care]")));
    EXPECT_TRUE(pool_stale(result.pool, pool));
}

TEST(Evolver, ConfigAndTraceJson) {
    EvolutionConfig cfg;
    cfg.alpha = 0.25;
    cfg.generations = 4;
    auto back = json(cfg).get<EvolutionConfig>();
    EXPECT_EQ(back.alpha, 0.25);
    EXPECT_EQ(back.generations, 4);
    EXPECT_EQ(back.mutator, cfg.mutator);
    EXPECT_THROW(make_mutator(json{{"kind", "magic"}}, "."), Error);
}
