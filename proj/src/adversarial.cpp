#include "llmcipher/adversarial.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <sstream>

#include "llmcipher/errors.hpp"
#include "llmcipher/io.hpp"
#include "llmcipher/numerics.hpp"

namespace llmcipher {

using nlohmann::json;

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

/// Letters, digits, and any non-ASCII byte (keeps UTF-8 sequences inside the core).
bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u) != 0;
}

bool ends_with(const std::string& s, std::string_view suffix) {
    return s.size() > suffix.size() + 1 && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string match_case(const std::string& original, const std::string& replacement) {
    const bool has_alpha = std::any_of(original.begin(), original.end(),
                                       [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; });
    const bool all_upper = has_alpha && original.size() > 1 &&
                           std::none_of(original.begin(), original.end(),
                                        [](char c) { return std::islower(static_cast<unsigned char>(c)) != 0; });
    std::string out = replacement;
    if (all_upper) {
        for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    } else if (!original.empty() && std::isupper(static_cast<unsigned char>(original.front())) && !out.empty()) {
        out.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(out.front())));
    }
    return out;
}

}  // namespace

std::string normalize_word(const std::string& word) {
    std::string out = word;
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

TokenizedText tokenize(const std::string& text) {
    TokenizedText out;
    std::size_t i = 0;
    std::string sep;
    while (i < text.size() && is_space(text[i])) sep += text[i++];
    out.separators.push_back(sep);
    while (i < text.size()) {
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        const std::string chunk = text.substr(start, i - start);
        WordToken token;
        const auto first = std::find_if(chunk.begin(), chunk.end(), is_word_char);
        if (first == chunk.end()) {
            token.prefix = chunk;
        } else {
            const auto last = std::find_if(chunk.rbegin(), chunk.rend(), is_word_char).base();
            token.prefix.assign(chunk.begin(), first);
            token.core.assign(first, last);
            token.suffix.assign(last, chunk.end());
        }
        out.words.push_back(std::move(token));
        sep.clear();
        while (i < text.size() && is_space(text[i])) sep += text[i++];
        out.separators.push_back(sep);
    }
    return out;
}

std::string TokenizedText::str() const {
    std::string out = separators.front();
    for (std::size_t i = 0; i < words.size(); ++i) {
        out += words[i].prefix + words[i].core + words[i].suffix;
        out += separators[i + 1];
    }
    return out;
}

std::vector<std::string> TokenizedText::keys() const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(normalize_word(w.core));
    return out;
}

std::size_t word_count(const std::string& text) { return tokenize(text).words.size(); }

// ---------------------------------------------------------------------------

TableConfidenceOracle::TableConfidenceOracle(std::map<std::string, double> table, double fallback)
    : table_(std::move(table)), fallback_(fallback) {}

double TableConfidenceOracle::word_confidence(std::span<const std::string> words, std::size_t position) const {
    if (position >= words.size()) throw InputError("word_confidence: position out of range");
    const auto it = table_.find(words[position]);
    return it == table_.end() ? fallback_ : it->second;
}

NgramConfidenceOracle NgramConfidenceOracle::fit(const std::string& corpus, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("n-gram interpolation weight must lie in [0, 1]");
    NgramConfidenceOracle oracle;
    oracle.lambda_ = lambda;
    std::istringstream lines(corpus);
    std::string line;
    while (std::getline(lines, line)) {
        const auto keys = tokenize(line).keys();
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (keys[i].empty()) continue;
            ++oracle.unigrams_[keys[i]];
            ++oracle.total_;
            if (i > 0 && !keys[i - 1].empty()) ++oracle.bigrams_[keys[i - 1] + '\x1f' + keys[i]];
        }
    }
    return oracle;
}

NgramConfidenceOracle NgramConfidenceOracle::load(const std::filesystem::path& corpus_path, double lambda) {
    return fit(read_file(corpus_path), lambda);
}

double NgramConfidenceOracle::word_confidence(std::span<const std::string> words, std::size_t position) const {
    if (position >= words.size()) throw InputError("word_confidence: position out of range");
    const std::string& word = words[position];
    if (word.empty()) return 0.0;
    auto count = [](const auto& map, const std::string& key) -> double {
        const auto it = map.find(key);
        return it == map.end() ? 0.0 : static_cast<double>(it->second);
    };
    const double unigram =
        (count(unigrams_, word) + 1.0) / (static_cast<double>(total_) + static_cast<double>(unigrams_.size()) + 1.0);
    if (position == 0 || words[position - 1].empty()) return unigram;
    const std::string& prev = words[position - 1];
    const double prev_count = count(unigrams_, prev);
    const double bigram = prev_count > 0.0 ? count(bigrams_, prev + '\x1f' + word) / prev_count : 0.0;
    return lambda_ * bigram + (1.0 - lambda_) * unigram;
}

// ---------------------------------------------------------------------------

EmbeddingTableSynonyms::EmbeddingTableSynonyms(std::map<std::string, std::vector<float>> rows,
                                               std::size_t max_candidates)
    : max_candidates_(max_candidates) {
    std::size_t dim = 0;
    for (auto& [word, vec] : rows) {
        if (dim == 0) dim = vec.size();
        if (vec.size() != dim || dim == 0)
            throw DimensionError("embedding table row '" + word + "' has width " + std::to_string(vec.size()));
        if (!all_finite<float>(vec)) throw DataError("embedding table row '" + word + "' is not finite");
        double norm = 0.0;
        for (const float v : vec) norm += static_cast<double>(v) * v;
        index_[word] = words_.size();
        words_.push_back(word);
        norms_.push_back(std::sqrt(norm));
        vectors_.push_back(std::move(vec));
    }
}

EmbeddingTableSynonyms EmbeddingTableSynonyms::parse(const std::string& text, std::size_t max_candidates) {
    std::map<std::string, std::vector<float>> rows;
    std::istringstream in(text);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        std::istringstream fields(line);
        std::string word;
        if (!(fields >> word) || word.front() == '#') continue;
        std::vector<float> vec;
        std::string value;
        while (fields >> value) {
            try {
                std::size_t used = 0;
                vec.push_back(std::stof(value, &used));
                if (used != value.size()) throw std::invalid_argument(value);
            } catch (const std::exception&) {
                throw ParseError("bad embedding value '" + value + "'", line_number);
            }
        }
        if (vec.empty()) throw ParseError("embedding row '" + word + "' has no values", line_number);
        if (!rows.emplace(normalize_word(word), std::move(vec)).second)
            throw DataError("line " + std::to_string(line_number) + ": duplicate embedding row '" + word + "'");
    }
    return EmbeddingTableSynonyms(std::move(rows), max_candidates);
}

EmbeddingTableSynonyms EmbeddingTableSynonyms::load(const std::filesystem::path& path, std::size_t max_candidates) {
    return parse(read_file(path), max_candidates);
}

std::vector<SynonymCandidate> EmbeddingTableSynonyms::candidates(const std::string& word) const {
    const auto it = index_.find(word);
    if (it == index_.end() || norms_[it->second] == 0.0) return {};
    const auto& query = vectors_[it->second];
    std::vector<SynonymCandidate> out;
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (i == it->second || norms_[i] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d) dot += static_cast<double>(query[d]) * vectors_[i][d];
        out.push_back({words_[i], std::clamp(dot / (norms_[i] * norms_[it->second]), -1.0, 1.0)});
    }
    std::sort(out.begin(), out.end(), [](const SynonymCandidate& a, const SynonymCandidate& b) {
        return a.similarity != b.similarity ? a.similarity > b.similarity : a.word < b.word;
    });
    if (out.size() > max_candidates_) out.resize(max_candidates_);
    return out;
}

const std::vector<float>* EmbeddingTableSynonyms::embedding(const std::string& word) const {
    const auto it = index_.find(word);
    return it == index_.end() ? nullptr : &vectors_[it->second];
}

// ---------------------------------------------------------------------------

CoarseTag coarse_tag(const std::string& word) {
    static constexpr std::array<std::string_view, 48> kFunctionWords = {
        "a",    "an",    "and",  "are",  "as",   "at",    "be",   "been", "but",   "by",    "can",   "could",
        "do",   "does",  "for",  "from", "had",  "has",   "have", "he",   "her",   "his",   "i",     "if",
        "in",   "is",    "it",   "its",  "may",  "might", "not",  "of",   "on",    "or",    "our",   "she",
        "that", "the",   "their", "they", "this", "to",   "was",  "we",   "were",  "which", "will",  "with"};
    if (word.empty()) return CoarseTag::unknown;
    if (std::find(kFunctionWords.begin(), kFunctionWords.end(), word) != kFunctionWords.end())
        return CoarseTag::function;
    if (ends_with(word, "ly")) return CoarseTag::adverb;
    for (const std::string_view s : {"tion", "sion", "ness", "ment", "ity", "ism", "ist", "ance", "ence", "ship", "hood"})
        if (ends_with(word, s)) return CoarseTag::noun;
    for (const std::string_view s : {"ous", "ful", "ive", "able", "ible", "less", "ish", "ical", "ary"})
        if (ends_with(word, s)) return CoarseTag::adjective;
    for (const std::string_view s : {"ing", "ed", "ize", "ise", "ify"})
        if (ends_with(word, s)) return CoarseTag::verb;
    return CoarseTag::unknown;
}

bool tags_compatible(CoarseTag a, CoarseTag b) {
    return a == b || a == CoarseTag::unknown || b == CoarseTag::unknown;
}

// ---------------------------------------------------------------------------

void PerturbationConfig::validate() const {
    for (const double t : {low_prob_threshold, synonym_similarity_threshold, sentence_similarity_floor})
        if (!(t > 0.0 && t <= 1.0)) throw ConfigError("perturbation thresholds must lie in (0, 1]");
    if (max_word_perturbations < 1) throw ConfigError("max_word_perturbations must be at least 1");
}

json PerturbationConfig::to_json() const {
    return {{"low_prob_threshold", low_prob_threshold},
            {"synonym_similarity_threshold", synonym_similarity_threshold},
            {"max_word_perturbations", max_word_perturbations},
            {"sentence_similarity_floor", sentence_similarity_floor},
            {"pos_check", pos_check}};
}

std::vector<std::size_t> rank_target_words(std::span<const std::string> words, const ConfidenceOracle& oracle,
                                           const PerturbationConfig& config) {
    if (words.empty()) throw InputError("rank_target_words: text has no words");
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i].empty()) continue;
        const double c = oracle.word_confidence(words, i);
        if (c >= config.low_prob_threshold) scored.emplace_back(c, i);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::size_t> out;
    out.reserve(scored.size());
    for (const auto& [_, i] : scored) out.push_back(i);
    return out;
}

std::vector<std::size_t> rank_target_words(const std::string& text, const ConfidenceOracle& oracle,
                                           const PerturbationConfig& config) {
    const auto keys = tokenize(text).keys();
    return rank_target_words(keys, oracle, config);
}

namespace {

/// Mean of the available word vectors; empty when no word has one.
std::vector<double> mean_embedding(std::span<const std::string> words, const SynonymProvider& provider) {
    std::vector<double> mean;
    std::size_t n = 0;
    for (const auto& w : words) {
        const auto* v = provider.embedding(w);
        if (v == nullptr) continue;
        if (mean.empty()) mean.assign(v->size(), 0.0);
        if (v->size() != mean.size()) continue;
        for (std::size_t d = 0; d < v->size(); ++d) mean[d] += (*v)[d];
        ++n;
    }
    for (auto& x : mean) x /= static_cast<double>(n);
    return mean;
}

bool sentence_similar_enough(const std::vector<double>& reference_mean, std::span<const std::string> candidate_words,
                             const SynonymProvider& provider, double floor) {
    if (reference_mean.empty() || std::all_of(reference_mean.begin(), reference_mean.end(), [](double x) { return x == 0.0; }))
        return true;
    const auto candidate_mean = mean_embedding(candidate_words, provider);
    if (candidate_mean.size() != reference_mean.size()) return false;
    try {
        return cosine_similarity<double>(reference_mean, candidate_mean) >= floor;
    } catch (const DomainError&) {
        return false;
    }
}

}  // namespace

std::vector<SynonymCandidate> candidate_synonyms(std::span<const std::string> words, std::size_t position,
                                                 std::span<const std::string> reference,
                                                 const SynonymProvider& provider, const PerturbationConfig& config) {
    if (position >= words.size()) throw InputError("candidate_synonyms: position out of range");
    const std::string& word = words[position];
    if (word.empty()) return {};
    const CoarseTag tag = coarse_tag(word);
    const auto reference_mean = mean_embedding(reference, provider);
    std::vector<std::string> trial(words.begin(), words.end());
    std::vector<SynonymCandidate> out;
    for (const auto& c : provider.candidates(word)) {
        if (c.word == word || c.word.empty()) continue;
        if (c.similarity < config.synonym_similarity_threshold) continue;
        if (config.pos_check && !tags_compatible(tag, coarse_tag(c.word))) continue;
        trial[position] = c.word;
        if (!sentence_similar_enough(reference_mean, trial, provider, config.sentence_similarity_floor)) continue;
        out.push_back(c);
    }
    return out;
}

std::vector<SynonymCandidate> candidate_synonyms(const std::string& word, const SynonymProvider& provider,
                                                 const PerturbationConfig& config) {
    const std::vector<std::string> words{normalize_word(word)};
    return candidate_synonyms(words, 0, words, provider, config);
}

PerturbationResult perturb_text(const std::string& text, const PerturbationConfig& config,
                                const ConfidenceOracle& confidence, const SynonymProvider& synonyms) {
    config.validate();
    TokenizedText tokens = tokenize(text);
    if (tokens.words.empty()) throw InputError("perturb_text: text has no words");
    const std::vector<std::string> original = tokens.keys();
    std::vector<std::string> current = original;

    PerturbationResult result;
    for (const std::size_t pos : rank_target_words(original, confidence, config)) {
        if (result.substitutions.size() >= config.max_word_perturbations) break;
        const double before = confidence.word_confidence(current, pos);
        const auto admissible = candidate_synonyms(current, pos, original, synonyms, config);

        const SynonymCandidate* best = nullptr;
        double best_confidence = before;
        std::vector<std::string> trial = current;
        for (const auto& c : admissible) {
            trial[pos] = c.word;
            const double after = confidence.word_confidence(trial, pos);
            if (after < best_confidence) {
                best_confidence = after;
                best = &c;
            }
        }
        if (best == nullptr) continue;

        auto& token = tokens.words[pos];
        result.substitutions.push_back({pos, token.core, match_case(token.core, best->word), best->similarity, before,
                                        best_confidence});
        token.core = result.substitutions.back().replacement;
        current[pos] = best->word;
    }
    result.perturbed_text = tokens.str();
    return result;
}

json perturbation_to_json(const std::string& id, const PerturbationResult& result) {
    json subs = json::array();
    for (const auto& s : result.substitutions)
        subs.push_back({{"position", s.position},
                        {"original", s.original},
                        {"replacement", s.replacement},
                        {"similarity", s.similarity},
                        {"confidence_before", s.confidence_before},
                        {"confidence_after", s.confidence_after}});
    return {{"id", id}, {"text", result.perturbed_text}, {"substitutions", subs}};
}

}  // namespace llmcipher
