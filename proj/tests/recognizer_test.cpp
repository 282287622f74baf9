#include <gtest/gtest.h>

#include <deque>

#include "support.hpp"
#include "valuelens/recognizer.hpp"

using namespace valuelens;
using vltest::item;

namespace {

ModelResponse response(const std::string& text, int k = 0) {
    ModelResponse r;
    r.model_id = "m";
    r.item_id = "i";
    r.sample_index = k;
    r.text = text;
    return r;
}

const ValueSystem& schwartz() { return vltest::shipped_taxonomy().system("schwartz"); }

// Answers chat completions from a queue of reply contents and records each request body.
class QueueTransport : public HttpTransport {
public:
    explicit QueueTransport(std::deque<std::string> replies) : replies_(std::move(replies)) {}
    HttpResponse post(const HttpRequest& request) override {
        std::lock_guard lock(mu_);
        requests.push_back(json::parse(request.body));
        std::string content = replies_.empty() ? "{}" : replies_.front();
        if (!replies_.empty()) replies_.pop_front();
        json body{{"choices", {{{"message", {{"content", content}}}}}}};
        return {200, body.dump(), std::nullopt};
    }
    std::vector<json> requests;

private:
    std::mutex mu_;
    std::deque<std::string> replies_;
};

std::shared_ptr<ChatClient> client_for(std::shared_ptr<HttpTransport> t) {
    ChatEndpoint e;
    e.base_url = "http://example.invalid";
    e.model = "judge";
    e.retry_backoff_ms = 1;
    e.rate_limit_rpm = 10000;
    return std::make_shared<ChatClient>(e, std::move(t));
}

PromptTemplate tiny_prompt() { return {"Item: {item}\nResponse: {response}\nDims:\n{system_dimensions}{concepts}"}; }

}  // namespace

TEST(Recognizer, TagsProduceOneEntryPerDimension) {
    TagRecognizer rec;
    auto r = rec.recognize(item("i", "q", "schwartz", "achievement"),
                           response("Sure. [supports:achievement] [violates:power=0.4]"), schwartz());
    validate_result(r, schwartz());
    ASSERT_EQ(r.entries.size(), 10u);
    EXPECT_EQ(r.entry("achievement")->stance, Stance::supports);
    EXPECT_DOUBLE_EQ(r.entry("achievement")->relevance, 1.0);
    EXPECT_EQ(r.entry("power")->stance, Stance::violates);
    EXPECT_DOUBLE_EQ(r.entry("power")->relevance, 0.4);
    EXPECT_EQ(r.entry("hedonism")->stance, Stance::not_relevant);
    EXPECT_EQ(r.entry("hedonism")->relevance, 0.0);
    EXPECT_EQ(r.concepts.size(), 2u);
}

TEST(Recognizer, TagVotesTieToViolates) {
    TagRecognizer rec;
    auto r = rec.recognize(item("i", "q", "schwartz", "achievement"),
                           response("[supports:achievement=0.2][violates:achievement=0.6]"), schwartz());
    EXPECT_EQ(r.entry("achievement")->stance, Stance::violates);
    EXPECT_DOUBLE_EQ(r.entry("achievement")->relevance, 0.6);
}

TEST(Recognizer, TagsBelowScoringLevelRollUp) {
    const auto& safety = vltest::shipped_taxonomy().system("safety");
    TagRecognizer rec;
    auto r = rec.recognize(item("i", "q", "safety", "representation_toxicity"), response("[violates:hate_speech]"),
                           safety);
    EXPECT_EQ(r.entry("representation_toxicity")->stance, Stance::violates);
    EXPECT_EQ(scoring_ancestor(safety, "hate_speech"), "representation_toxicity");
    EXPECT_EQ(scoring_ancestor(safety, "nope"), "");
    const auto& llm = vltest::shipped_taxonomy().system("llm_unique");
    EXPECT_EQ(scoring_ancestor(llm, "competence"), "");
}

TEST(Recognizer, UnrecognizableAndBadRelevance) {
    TagRecognizer rec;
    auto it = item("i", "q", "schwartz", "achievement");
    try {
        rec.recognize(it, response("[unrecognizable]"), schwartz());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unparseable);
    }
    EXPECT_THROW(rec.recognize(it, response("[supports:power=1.5]"), schwartz()), Error);
}

TEST(Recognizer, EmptyResponseIsAllNotRelevant) {
    TagRecognizer rec;
    auto r = rec.recognize(item("i", "q", "schwartz", "achievement"), response(""), schwartz());
    for (const auto& e : r.entries) {
        EXPECT_EQ(e.stance, Stance::not_relevant);
        EXPECT_EQ(e.relevance, 0.0);
    }
    auto lex = make_recognizer(json{{"kind", "lexicon"}, {"lexicon_path", (std::filesystem::path(VALUELENS_DATA_ROOT) / "lexicon/default.json").string()}}, ".");
    auto r2 = lex->recognize(item("i", "q", "schwartz", "achievement"), response("   "), schwartz());
    for (const auto& e : r2.entries) EXPECT_EQ(e.stance, Stance::not_relevant);
}

TEST(Recognizer, ValidateResultContract) {
    auto r = empty_result(item("i", "q", "schwartz", "achievement"), response("x"), schwartz());
    validate_result(r, schwartz());
    auto bad = r;
    bad.entries[0].relevance = 0.5;  // not_relevant with positive relevance
    EXPECT_THROW(validate_result(bad, schwartz()), Error);
    bad = r;
    bad.entries[0].stance = Stance::supports;  // relevant with zero relevance
    EXPECT_THROW(validate_result(bad, schwartz()), Error);
    bad = r;
    bad.entries.pop_back();
    EXPECT_THROW(validate_result(bad, schwartz()), Error);
    bad = r;
    std::swap(bad.entries[0], bad.entries[1]);
    EXPECT_THROW(validate_result(bad, schwartz()), Error);
    bad = r;
    bad.entries[0] = {bad.entries[0].dimension_id, Stance::supports, 1.5};
    EXPECT_THROW(validate_result(bad, schwartz()), Error);
}

TEST(Recognizer, DistributionProperties) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        auto r = empty_result(item("i", "q", "schwartz", "achievement"), response("x"), schwartz());
        for (auto& e : r.entries) {
            if (u(rng) < 0.5) e = {e.dimension_id, u(rng) < 0.5 ? Stance::supports : Stance::violates, 0.01 + 0.99 * u(rng)};
        }
        auto d = to_distribution(r);
        double sum = 0.0;
        for (std::size_t i = 0; i < d.probabilities.size(); ++i) {
            EXPECT_GE(d.probabilities[i], 0.0);
            sum += d.probabilities[i];
            if (r.entries[i].relevance == 0.0 &&
                std::any_of(r.entries.begin(), r.entries.end(), [](const auto& e) { return e.relevance > 0; })) {
                EXPECT_EQ(d.probabilities[i], 0.0);
            }
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    auto none = empty_result(item("i", "q", "schwartz", "achievement"), response("x"), schwartz());
    for (double p : to_distribution(none).probabilities) EXPECT_DOUBLE_EQ(p, 0.1);
}

TEST(Recognizer, LexiconTwoStage) {
    auto rec = make_recognizer(
        json{{"kind", "lexicon"},
             {"lexicon_path", (std::filesystem::path(VALUELENS_DATA_ROOT) / "lexicon/default.json").string()}},
        ".");
    auto two = std::dynamic_pointer_cast<TwoStageRecognizer>(rec);
    ASSERT_TRUE(two);
    auto it = item("i", "How should I handle the exam?", "schwartz", "achievement");
    auto resp = response("I encourage human to succeed; work hard to succeed, and follow the rules.");
    auto concepts = two->extract_concepts(it, resp, schwartz());
    ASSERT_EQ(concepts.size(), 3u);
    EXPECT_EQ(concepts[0].text, "Encourage human to succeed");
    EXPECT_EQ(concepts[0].linked_dimension, "achievement");
    auto r = two->classify(it, resp, concepts, schwartz());
    EXPECT_EQ(r.entry("achievement")->stance, Stance::supports);
    EXPECT_NEAR(r.entry("achievement")->relevance, 2.0 / 3.0, 1e-12);
    EXPECT_EQ(r.entry("conformity")->stance, Stance::supports);
    EXPECT_NEAR(r.entry("conformity")->relevance, 1.0 / 3.0, 1e-12);
    EXPECT_EQ(r, rec->recognize(it, resp, schwartz()));
}

TEST(Recognizer, VoteClassifierTies) {
    VoteClassifier c;
    std::vector<ValueConcept> concepts{{"a", "power", Stance::supports}, {"b", "power", Stance::violates}};
    auto r = c.classify(item("i", "q", "schwartz", "power"), response("x"), concepts, schwartz());
    EXPECT_EQ(r.entry("power")->stance, Stance::violates);
    EXPECT_DOUBLE_EQ(r.entry("power")->relevance, 1.0);
}

TEST(Recognizer, RemoteTwoStageParsesReplies) {
    auto transport = std::make_shared<QueueTransport>(std::deque<std::string>{
        R"(Here you go: {"concepts":[{"text":"Encourage human to succeed","dimension":"achievement","polarity":"supports"},
            {"text":"Odd","dimension":"no_such_dim","polarity":"supports"}]})",
        R"({"entries":[{"dimension":"achievement","stance":"supports","relevance":0.9},
            {"dimension":"power","stance":"not_relevant"}]})"});
    TwoStageRecognizer rec(std::make_shared<RemoteConceptExtractor>(client_for(transport), tiny_prompt()),
                           std::make_shared<RemoteClassifier>(client_for(transport), tiny_prompt()));
    auto it = item("i", "Should I aim high?", "schwartz", "achievement");
    auto r = rec.recognize(it, response("Yes, go for it."), schwartz());
    EXPECT_EQ(r.entry("achievement")->stance, Stance::supports);
    EXPECT_DOUBLE_EQ(r.entry("achievement")->relevance, 0.9);
    EXPECT_EQ(r.concepts.size(), 1u);
    ASSERT_EQ(transport->requests.size(), 2u);
    auto first_prompt = transport->requests[0].at("messages")[0].at("content").get<std::string>();
    EXPECT_NE(first_prompt.find("Should I aim high?"), std::string::npos);
    EXPECT_NE(first_prompt.find("Yes, go for it."), std::string::npos);
    EXPECT_NE(first_prompt.find("achievement"), std::string::npos);
    auto second_prompt = transport->requests[1].at("messages")[0].at("content").get<std::string>();
    EXPECT_NE(second_prompt.find("Encourage human to succeed"), std::string::npos);
}

TEST(Recognizer, RemoteRepromptsThenFails) {
    auto transport = std::make_shared<QueueTransport>(
        std::deque<std::string>{"not json", R"({"concepts":[]})"});
    RemoteConceptExtractor ok(client_for(transport), tiny_prompt(), 2);
    auto concepts = ok.extract(item("i", "q", "schwartz", "achievement"), response("r"), schwartz());
    EXPECT_TRUE(concepts.empty());
    ASSERT_EQ(transport->requests.size(), 2u);
    // The re-prompt carries the failed reply and a correction turn.
    EXPECT_EQ(transport->requests[1].at("messages").size(), 3u);

    auto bad = std::make_shared<QueueTransport>(std::deque<std::string>{"x", "y", "z", "w"});
    RemoteConceptExtractor failing(client_for(bad), tiny_prompt(), 2);
    try {
        failing.extract(item("i", "q", "schwartz", "achievement"), response("r"), schwartz());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::unparseable);
    }
    EXPECT_EQ(bad->requests.size(), 3u);
}

TEST(Recognizer, RemoteClassifierRejectsBadRelevance) {
    auto transport = std::make_shared<QueueTransport>(std::deque<std::string>(
        3, R"({"entries":[{"dimension":"achievement","stance":"supports","relevance":0}]})"));
    RemoteClassifier c(client_for(transport), tiny_prompt(), 2);
    std::vector<ValueConcept> concepts{{"c", "achievement", Stance::supports}};
    EXPECT_THROW(c.classify(item("i", "q", "schwartz", "achievement"), response("r"), concepts, schwartz()), Error);
}

TEST(Recognizer, ResultJsonRoundTrip) {
    TagRecognizer rec;
    auto r = rec.recognize(item("i", "q", "schwartz", "achievement"), response("[supports:benevolence=0.3]", 2),
                           schwartz());
    EXPECT_EQ(json(r).get<RecognitionResult>(), r);
}

TEST(Recognizer, UnknownKindRejected) {
    EXPECT_THROW(make_recognizer(json{{"kind", "oracle"}}, "."), Error);
}

TEST(Recognizer, ShippedPromptsHavePlaceholders) {
    auto extract = PromptTemplate::load(default_prompt_dir() / "extract_concepts.txt");
    auto classify = PromptTemplate::load(default_prompt_dir() / "classify.txt");
    for (const auto* p : {&extract.text, &classify.text}) {
        EXPECT_NE(p->find("{item}"), std::string::npos);
        EXPECT_NE(p->find("{response}"), std::string::npos);
        EXPECT_NE(p->find("{system_dimensions}"), std::string::npos);
    }
    EXPECT_NE(classify.text.find("{concepts}"), std::string::npos);
}
