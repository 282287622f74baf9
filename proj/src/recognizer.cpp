#include "valuelens/recognizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <spdlog/spdlog.h>

namespace valuelens {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

// Backends often wrap JSON in prose or code fences; take the outermost object.
json parse_reply_object(const std::string& reply) {
    auto first = reply.find('{');
    auto last = reply.rfind('}');
    if (first == std::string::npos || last == std::string::npos || last < first) {
        throw Error(ErrorCode::unparseable, "reply contains no JSON object");
    }
    try {
        return json::parse(reply.substr(first, last - first + 1));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::unparseable, std::string("reply is not valid JSON: ") + e.what());
    }
}

// Majority vote over polarities; ties (including 1-1) resolve to violates.
Stance vote(int supports, int violates) {
    if (supports == 0 && violates == 0) return Stance::not_relevant;
    return supports > violates ? Stance::supports : Stance::violates;
}

template <class Parse>
auto ask_with_reprompts(ChatClient& client, const std::string& prompt, int max_reprompts, std::int64_t seed,
                        Parse parse) {
    std::vector<ChatMessage> messages{{"user", prompt}};
    std::string last_error;
    for (int attempt = 0; attempt <= max_reprompts; ++attempt) {
        auto reply = client.complete(messages, seed);
        try {
            return parse(reply);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::unparseable) throw;
            last_error = e.what();
            messages.push_back({"assistant", reply});
            messages.push_back({"user", "Your reply could not be parsed (" + last_error +
                                            "). Answer again with only the JSON object described above."});
        }
    }
    throw Error(ErrorCode::unparseable,
                "recognizer output unparseable after " + std::to_string(max_reprompts) + " re-prompts: " + last_error);
}

}  // namespace

std::string_view to_string(Stance s) {
    switch (s) {
        case Stance::supports: return "supports";
        case Stance::violates: return "violates";
        case Stance::not_relevant: return "not_relevant";
    }
    return "not_relevant";
}

Stance parse_stance(std::string_view s) {
    if (s == "supports") return Stance::supports;
    if (s == "violates") return Stance::violates;
    if (s == "not_relevant") return Stance::not_relevant;
    throw Error(ErrorCode::unparseable, "unknown stance '" + std::string(s) + "'");
}

const DimensionEntry* RecognitionResult::entry(std::string_view dimension_id) const {
    for (const auto& e : entries) {
        if (e.dimension_id == dimension_id) return &e;
    }
    return nullptr;
}

void to_json(json& j, const ValueConcept& c) {
    j = json{{"text", c.text}, {"dimension", c.linked_dimension}, {"polarity", to_string(c.polarity)}};
}

void from_json(const json& j, ValueConcept& c) {
    j.at("text").get_to(c.text);
    j.at("dimension").get_to(c.linked_dimension);
    c.polarity = parse_stance(j.value("polarity", std::string("supports")));
}

void to_json(json& j, const DimensionEntry& e) {
    j = json{{"dimension_id", e.dimension_id}, {"stance", to_string(e.stance)}, {"relevance", e.relevance}};
}

void from_json(const json& j, DimensionEntry& e) {
    j.at("dimension_id").get_to(e.dimension_id);
    e.stance = parse_stance(j.at("stance").get<std::string>());
    j.at("relevance").get_to(e.relevance);
}

void to_json(json& j, const RecognitionResult& r) {
    j = json{{"item_id", r.item_id},   {"model_id", r.model_id}, {"sample_index", r.sample_index},
             {"entries", r.entries},   {"concepts", r.concepts}};
}

void from_json(const json& j, RecognitionResult& r) {
    j.at("item_id").get_to(r.item_id);
    j.at("model_id").get_to(r.model_id);
    j.at("sample_index").get_to(r.sample_index);
    j.at("entries").get_to(r.entries);
    r.concepts = j.value("concepts", std::vector<ValueConcept>{});
}

void to_json(json& j, const ValueDistribution& d) {
    j = json{{"dimension_ids", d.dimension_ids}, {"probabilities", d.probabilities}};
}

void from_json(const json& j, ValueDistribution& d) {
    j.at("dimension_ids").get_to(d.dimension_ids);
    j.at("probabilities").get_to(d.probabilities);
}

void validate_result(const RecognitionResult& result, const ValueSystem& system) {
    auto dims = system.scoring_dimension_ids();
    if (result.entries.size() != dims.size()) {
        throw Error(ErrorCode::invalid_argument, "recognition result has " + std::to_string(result.entries.size()) +
                                                     " entries, system has " + std::to_string(dims.size()));
    }
    for (std::size_t i = 0; i < dims.size(); ++i) {
        const auto& e = result.entries[i];
        if (e.dimension_id != dims[i]) {
            throw Error(ErrorCode::invalid_argument, "entry " + std::to_string(i) + " is '" + e.dimension_id +
                                                         "', expected '" + dims[i] + "'");
        }
        if (!(e.relevance >= 0.0 && e.relevance <= 1.0)) {
            throw Error(ErrorCode::invalid_argument, e.dimension_id + ": relevance outside [0,1]");
        }
        if ((e.stance == Stance::not_relevant) != (e.relevance == 0.0)) {
            throw Error(ErrorCode::invalid_argument, e.dimension_id + ": stance/relevance mismatch");
        }
    }
}

RecognitionResult empty_result(const TestItem& item, const ModelResponse& response, const ValueSystem& system) {
    RecognitionResult r;
    r.item_id = item.item_id;
    r.model_id = response.model_id;
    r.sample_index = response.sample_index;
    for (const auto& id : system.scoring_dimension_ids()) r.entries.push_back({id, Stance::not_relevant, 0.0});
    return r;
}

ValueDistribution to_distribution(const RecognitionResult& result) {
    ValueDistribution d;
    double total = 0.0;
    for (const auto& e : result.entries) {
        d.dimension_ids.push_back(e.dimension_id);
        d.probabilities.push_back(e.relevance);
        total += e.relevance;
    }
    const auto k = d.probabilities.size();
    for (auto& p : d.probabilities) p = total > 0.0 ? p / total : 1.0 / static_cast<double>(k);
    return d;
}

std::string scoring_ancestor(const ValueSystem& system, std::string_view dimension_id) {
    const auto* d = system.find(dimension_id);
    while (d != nullptr && d->level > system.scoring_level) {
        if (!d->parent_id) return {};
        d = system.find(*d->parent_id);
    }
    if (d == nullptr || d->level != system.scoring_level) return {};
    return d->id;
}

// ---------------------------------------------------------------------------

RecognitionResult TagRecognizer::recognize(const TestItem& item, const ModelResponse& response,
                                           const ValueSystem& system) {
    auto result = empty_result(item, response, system);
    if (response.text.find("[unrecognizable]") != std::string::npos) {
        throw Error(ErrorCode::unparseable, "response " + response.item_id + "#" +
                                                std::to_string(response.sample_index) + " marked unrecognizable");
    }
    static const std::regex tag(R"(\[(supports|violates):([A-Za-z0-9_\-]+)(?:=([0-9]*\.?[0-9]+))?\])");

    struct Tally {
        int supports = 0;
        int violates = 0;
        double relevance = 0.0;
    };
    std::map<std::string, Tally> tallies;
    for (auto it = std::sregex_iterator(response.text.begin(), response.text.end(), tag); it != std::sregex_iterator();
         ++it) {
        const auto& m = *it;
        auto dim = scoring_ancestor(system, m[2].str());
        if (dim.empty()) continue;
        double rel = m[3].matched ? std::stod(m[3].str()) : 1.0;
        if (!(rel > 0.0 && rel <= 1.0)) {
            throw Error(ErrorCode::unparseable, "tag relevance must lie in (0,1]: " + m.str());
        }
        auto& t = tallies[dim];
        (m[1].str() == "supports" ? t.supports : t.violates) += 1;
        t.relevance = std::max(t.relevance, rel);
        result.concepts.push_back({m.str(), dim, m[1].str() == "supports" ? Stance::supports : Stance::violates});
    }
    for (auto& e : result.entries) {
        auto it = tallies.find(e.dimension_id);
        if (it == tallies.end()) continue;
        e.stance = vote(it->second.supports, it->second.violates);
        e.relevance = it->second.relevance;
    }
    return result;
}

// ---------------------------------------------------------------------------

LexiconExtractor::LexiconExtractor(std::vector<LexiconEntry> entries) : entries_(std::move(entries)) {
    for (auto& e : entries_) e.phrase = lower(e.phrase);
}

LexiconExtractor LexiconExtractor::load(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse, path.string() + ": " + e.what());
    }
    std::vector<LexiconEntry> entries;
    for (const auto& e : doc.at("entries")) {
        LexiconEntry le;
        e.at("system").get_to(le.system_id);
        e.at("phrase").get_to(le.phrase);
        e.at("concept").get_to(le.concept_text);
        e.at("dimension").get_to(le.dimension_id);
        le.polarity = parse_stance(e.value("polarity", std::string("supports")));
        entries.push_back(std::move(le));
    }
    return LexiconExtractor(std::move(entries));
}

std::vector<ValueConcept> LexiconExtractor::extract(const TestItem&, const ModelResponse& response,
                                                    const ValueSystem& system) {
    std::vector<ValueConcept> out;
    auto text = lower(response.text);
    for (const auto& e : entries_) {
        if (e.system_id != system.id || system.find(e.dimension_id) == nullptr) continue;
        if (text.find(e.phrase) != std::string::npos) out.push_back({e.concept_text, e.dimension_id, e.polarity});
    }
    return out;
}

RecognitionResult VoteClassifier::classify(const TestItem& item, const ModelResponse& response,
                                           const std::vector<ValueConcept>& concepts, const ValueSystem& system) {
    auto result = empty_result(item, response, system);
    std::map<std::string, std::pair<int, int>> votes;
    std::size_t linked = 0;
    for (const auto& c : concepts) {
        auto dim = scoring_ancestor(system, c.linked_dimension);
        if (dim.empty() || c.polarity == Stance::not_relevant) continue;
        auto& [sup, vio] = votes[dim];
        (c.polarity == Stance::supports ? sup : vio) += 1;
        ++linked;
        result.concepts.push_back({c.text, dim, c.polarity});
    }
    for (auto& e : result.entries) {
        auto it = votes.find(e.dimension_id);
        if (it == votes.end()) continue;
        e.stance = vote(it->second.first, it->second.second);
        e.relevance = static_cast<double>(it->second.first + it->second.second) / static_cast<double>(linked);
    }
    return result;
}

// ---------------------------------------------------------------------------

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return {read_file(path)}; }

std::string PromptTemplate::render(const TestItem& item, const ModelResponse& response, const ValueSystem& system,
                                   const std::vector<ValueConcept>& concepts) const {
    std::string dims;
    for (const auto& d : system.scoring_dimensions()) dims += "- " + d.id + " (" + d.name + "): " + d.description + "\n";
    std::string concept_lines;
    for (const auto& c : concepts) {
        concept_lines += "- \"" + c.text + "\" -> " + c.linked_dimension + " (" + std::string(to_string(c.polarity)) + ")\n";
    }
    if (concept_lines.empty()) concept_lines = "(none)\n";
    auto out = text;
    replace_all(out, "{item}", item.text);
    replace_all(out, "{response}", response.text);
    replace_all(out, "{system_dimensions}", dims);
    replace_all(out, "{concepts}", concept_lines);
    return out;
}

std::filesystem::path default_prompt_dir() {
    if (const char* dir = std::getenv("VALUELENS_PROMPT_DIR"); dir && *dir) return dir;
#ifdef VALUELENS_DATA_ROOT
    return std::filesystem::path(VALUELENS_DATA_ROOT) / "prompts";
#else
    return "data/prompts";
#endif
}

RemoteConceptExtractor::RemoteConceptExtractor(std::shared_ptr<ChatClient> client, PromptTemplate prompt,
                                               int max_reprompts)
    : client_(std::move(client)), prompt_(std::move(prompt)), max_reprompts_(max_reprompts) {}

std::vector<ValueConcept> RemoteConceptExtractor::extract(const TestItem& item, const ModelResponse& response,
                                                          const ValueSystem& system) {
    if (blank(response.text)) return {};
    auto seed = static_cast<std::int64_t>(stable_hash64(response.model_id + "|" + item.item_id + "|" +
                                                        std::to_string(response.sample_index)) >> 1);
    return ask_with_reprompts(*client_, prompt_.render(item, response, system), max_reprompts_, seed,
                              [&](const std::string& reply) {
                                  auto obj = parse_reply_object(reply);
                                  auto list = obj.find("concepts");
                                  if (list == obj.end() || !list->is_array()) {
                                      throw Error(ErrorCode::unparseable, "reply lacks a 'concepts' array");
                                  }
                                  std::vector<ValueConcept> out;
                                  for (const auto& c : *list) {
                                      ValueConcept vc;
                                      try {
                                          vc = c.get<ValueConcept>();
                                      } catch (const json::exception& e) {
                                          throw Error(ErrorCode::unparseable, std::string("bad concept: ") + e.what());
                                      }
                                      if (vc.text.empty()) continue;
                                      if (system.find(vc.linked_dimension) == nullptr) {
                                          spdlog::warn("dropping concept linked to unknown dimension '{}'",
                                                       vc.linked_dimension);
                                          continue;
                                      }
                                      out.push_back(std::move(vc));
                                  }
                                  return out;
                              });
}

RemoteClassifier::RemoteClassifier(std::shared_ptr<ChatClient> client, PromptTemplate prompt, int max_reprompts)
    : client_(std::move(client)), prompt_(std::move(prompt)), max_reprompts_(max_reprompts) {}

RecognitionResult RemoteClassifier::classify(const TestItem& item, const ModelResponse& response,
                                             const std::vector<ValueConcept>& concepts, const ValueSystem& system) {
    auto base = empty_result(item, response, system);
    if (concepts.empty()) return base;
    base.concepts = concepts;
    auto seed = static_cast<std::int64_t>(stable_hash64("classify|" + response.model_id + "|" + item.item_id + "|" +
                                                        std::to_string(response.sample_index)) >> 1);
    return ask_with_reprompts(
        *client_, prompt_.render(item, response, system, concepts), max_reprompts_, seed,
        [&](const std::string& reply) {
            auto obj = parse_reply_object(reply);
            auto list = obj.find("entries");
            if (list == obj.end() || !list->is_array()) {
                throw Error(ErrorCode::unparseable, "reply lacks an 'entries' array");
            }
            auto result = base;
            for (const auto& e : *list) {
                std::string dim;
                Stance stance;
                double relevance;
                try {
                    dim = e.at("dimension").get<std::string>();
                    stance = parse_stance(e.at("stance").get<std::string>());
                    relevance = stance == Stance::not_relevant ? 0.0 : e.at("relevance").get<double>();
                } catch (const json::exception& ex) {
                    throw Error(ErrorCode::unparseable, std::string("bad entry: ") + ex.what());
                }
                auto slot = std::find_if(result.entries.begin(), result.entries.end(),
                                         [&](const DimensionEntry& de) { return de.dimension_id == dim; });
                if (slot == result.entries.end()) continue;
                if (stance != Stance::not_relevant && !(relevance > 0.0 && relevance <= 1.0)) {
                    throw Error(ErrorCode::unparseable, dim + ": relevance must lie in (0,1]");
                }
                slot->stance = stance;
                slot->relevance = relevance;
            }
            return result;
        });
}

TwoStageRecognizer::TwoStageRecognizer(std::shared_ptr<ConceptExtractor> extractor,
                                       std::shared_ptr<ConceptClassifier> classifier)
    : extractor_(std::move(extractor)), classifier_(std::move(classifier)) {
    if (!extractor_ || !classifier_) throw Error(ErrorCode::invalid_argument, "two-stage recognizer needs both stages");
}

std::vector<ValueConcept> TwoStageRecognizer::extract_concepts(const TestItem& item, const ModelResponse& response,
                                                               const ValueSystem& system) {
    if (blank(response.text)) return {};
    return extractor_->extract(item, response, system);
}

RecognitionResult TwoStageRecognizer::classify(const TestItem& item, const ModelResponse& response,
                                               const std::vector<ValueConcept>& concepts, const ValueSystem& system) {
    auto result = classifier_->classify(item, response, concepts, system);
    validate_result(result, system);
    return result;
}

RecognitionResult TwoStageRecognizer::recognize(const TestItem& item, const ModelResponse& response,
                                                const ValueSystem& system) {
    return classify(item, response, extract_concepts(item, response, system), system);
}

std::shared_ptr<Recognizer> make_recognizer(const json& config, const std::filesystem::path& base_dir,
                                            std::shared_ptr<HttpTransport> transport) {
    auto kind = config.value("kind", std::string("tags"));
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };
    if (kind == "tags") return std::make_shared<TagRecognizer>();
    if (kind == "lexicon") {
        auto extractor = std::make_shared<LexiconExtractor>(LexiconExtractor::load(resolve(config.at("lexicon_path"))));
        return std::make_shared<TwoStageRecognizer>(extractor, std::make_shared<VoteClassifier>());
    }
    if (kind == "two_stage") {
        if (!transport) transport = make_http_transport();
        auto prompt_dir = config.contains("prompt_dir") ? resolve(config.at("prompt_dir")) : default_prompt_dir();
        auto extractor = std::make_shared<RemoteConceptExtractor>(
            std::make_shared<ChatClient>(config.at("extractor").get<ChatEndpoint>(), transport),
            PromptTemplate::load(prompt_dir / "extract_concepts.txt"));
        auto classifier = std::make_shared<RemoteClassifier>(
            std::make_shared<ChatClient>(config.at("classifier").get<ChatEndpoint>(), transport),
            PromptTemplate::load(prompt_dir / "classify.txt"));
        return std::make_shared<TwoStageRecognizer>(extractor, classifier);
    }
    throw Error(ErrorCode::parse, "unknown recognizer kind '" + kind + "'");
}

}  // namespace valuelens
