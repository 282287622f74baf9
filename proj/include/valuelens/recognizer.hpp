#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "valuelens/common.hpp"
#include "valuelens/gateway.hpp"
#include "valuelens/items.hpp"
#include "valuelens/taxonomy.hpp"

namespace valuelens {

enum class Stance { supports, violates, not_relevant };

std::string_view to_string(Stance s);
Stance parse_stance(std::string_view s);

// Short generalized description of value-laden behaviour, e.g. "Encourage human
// to succeed" linked to achievement.
struct ValueConcept {
    std::string text;
    std::string linked_dimension;
    Stance polarity = Stance::supports;

    bool operator==(const ValueConcept&) const = default;
};

struct DimensionEntry {
    std::string dimension_id;
    Stance stance = Stance::not_relevant;
    double relevance = 0.0;

    bool operator==(const DimensionEntry&) const = default;
};

struct RecognitionResult {
    std::string item_id;
    std::string model_id;
    int sample_index = 0;
    std::vector<DimensionEntry> entries;  // one per scoring-level dimension, taxonomy order
    std::vector<ValueConcept> concepts;

    bool operator==(const RecognitionResult&) const = default;

    const DimensionEntry* entry(std::string_view dimension_id) const;
};

struct ValueDistribution {
    std::vector<std::string> dimension_ids;
    std::vector<double> probabilities;

    bool operator==(const ValueDistribution&) const = default;
};

void to_json(json& j, const ValueConcept& c);
void from_json(const json& j, ValueConcept& c);
void to_json(json& j, const DimensionEntry& e);
void from_json(const json& j, DimensionEntry& e);
void to_json(json& j, const RecognitionResult& r);
void from_json(const json& j, RecognitionResult& r);
void to_json(json& j, const ValueDistribution& d);
void from_json(const json& j, ValueDistribution& d);

// Throws invalid_argument if the result breaks the per-dimension contract.
void validate_result(const RecognitionResult& result, const ValueSystem& system);

// Result with every scoring dimension marked not_relevant.
RecognitionResult empty_result(const TestItem& item, const ModelResponse& response, const ValueSystem& system);

// Probabilities proportional to relevance; uniform when every relevance is 0.
ValueDistribution to_distribution(const RecognitionResult& result);

// Walks parent links up to the scoring level; empty if the id is unknown or sits
// above the scoring level.
std::string scoring_ancestor(const ValueSystem& system, std::string_view dimension_id);

// Maps (item, response) to per-dimension stance and relevance. Implementations are
// stateless per call and safe to share between threads.
class Recognizer {
public:
    virtual ~Recognizer() = default;
    virtual RecognitionResult recognize(const TestItem& item, const ModelResponse& response,
                                        const ValueSystem& system) = 0;
};

// Deterministic mock driven by inline tags: "[supports:achievement]",
// "[violates:care=0.4]". A "[unrecognizable]" tag raises an unparseable error.
class TagRecognizer final : public Recognizer {
public:
    RecognitionResult recognize(const TestItem& item, const ModelResponse& response,
                                const ValueSystem& system) override;
};

class ConceptExtractor {
public:
    virtual ~ConceptExtractor() = default;
    virtual std::vector<ValueConcept> extract(const TestItem& item, const ModelResponse& response,
                                              const ValueSystem& system) = 0;
};

class ConceptClassifier {
public:
    virtual ~ConceptClassifier() = default;
    virtual RecognitionResult classify(const TestItem& item, const ModelResponse& response,
                                       const std::vector<ValueConcept>& concepts, const ValueSystem& system) = 0;
};

struct LexiconEntry {
    std::string system_id;
    std::string phrase;  // case-insensitive substring trigger
    std::string concept_text;
    std::string dimension_id;
    Stance polarity = Stance::supports;
};

// Offline stage one: phrase lexicon lookup.
class LexiconExtractor final : public ConceptExtractor {
public:
    explicit LexiconExtractor(std::vector<LexiconEntry> entries);
    static LexiconExtractor load(const std::filesystem::path& path);

    std::vector<ValueConcept> extract(const TestItem& item, const ModelResponse& response,
                                      const ValueSystem& system) override;

private:
    std::vector<LexiconEntry> entries_;
};

// Offline stage two: per-dimension majority vote over concept polarities, ties go
// to violates; relevance is the dimension's share of the concepts.
class VoteClassifier final : public ConceptClassifier {
public:
    RecognitionResult classify(const TestItem& item, const ModelResponse& response,
                               const std::vector<ValueConcept>& concepts, const ValueSystem& system) override;
};

// Prompt template with {item}, {response}, {system_dimensions}, {concepts} placeholders.
struct PromptTemplate {
    std::string text;

    static PromptTemplate load(const std::filesystem::path& path);
    std::string render(const TestItem& item, const ModelResponse& response, const ValueSystem& system,
                       const std::vector<ValueConcept>& concepts = {}) const;
};

std::filesystem::path default_prompt_dir();

// Stage one against a chat-completion backend. Reply schema:
// {"concepts":[{"text":..., "dimension":..., "polarity":"supports"|"violates"}]}
class RemoteConceptExtractor final : public ConceptExtractor {
public:
    RemoteConceptExtractor(std::shared_ptr<ChatClient> client, PromptTemplate prompt, int max_reprompts = 2);
    std::vector<ValueConcept> extract(const TestItem& item, const ModelResponse& response,
                                      const ValueSystem& system) override;

private:
    std::shared_ptr<ChatClient> client_;
    PromptTemplate prompt_;
    int max_reprompts_;
};

// Stage two against a chat-completion backend. Reply schema:
// {"entries":[{"dimension":..., "stance":"supports"|"violates"|"not_relevant", "relevance":0..1}]}
class RemoteClassifier final : public ConceptClassifier {
public:
    RemoteClassifier(std::shared_ptr<ChatClient> client, PromptTemplate prompt, int max_reprompts = 2);
    RecognitionResult classify(const TestItem& item, const ModelResponse& response,
                               const std::vector<ValueConcept>& concepts, const ValueSystem& system) override;

private:
    std::shared_ptr<ChatClient> client_;
    PromptTemplate prompt_;
    int max_reprompts_;
};

class TwoStageRecognizer final : public Recognizer {
public:
    TwoStageRecognizer(std::shared_ptr<ConceptExtractor> extractor, std::shared_ptr<ConceptClassifier> classifier);

    std::vector<ValueConcept> extract_concepts(const TestItem& item, const ModelResponse& response,
                                               const ValueSystem& system);
    RecognitionResult classify(const TestItem& item, const ModelResponse& response,
                               const std::vector<ValueConcept>& concepts, const ValueSystem& system);
    RecognitionResult recognize(const TestItem& item, const ModelResponse& response,
                                const ValueSystem& system) override;

private:
    std::shared_ptr<ConceptExtractor> extractor_;
    std::shared_ptr<ConceptClassifier> classifier_;
};

// Recognizer selection as stored in run configs:
//   {"kind":"tags"}
//   {"kind":"lexicon", "lexicon_path":...}
//   {"kind":"two_stage", "extractor":<ChatEndpoint>, "classifier":<ChatEndpoint>, "prompt_dir":...}
std::shared_ptr<Recognizer> make_recognizer(const json& config, const std::filesystem::path& base_dir,
                                            std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace valuelens
