#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace llmcipher {

// Tokenisation ---------------------------------------------------------------

/// A whitespace-delimited word split into leading punctuation, the lookup
/// core, and trailing punctuation.
struct WordToken {
    std::string prefix;
    std::string core;
    std::string suffix;
};

/// Words plus the exact whitespace around them, so text round-trips.
struct TokenizedText {
    std::vector<std::string> separators;  // words.size() + 1 entries
    std::vector<WordToken> words;

    std::string str() const;
    /// Lower-cased cores; empty for punctuation-only words.
    std::vector<std::string> keys() const;
};

TokenizedText tokenize(const std::string& text);
std::string normalize_word(const std::string& word);

/// Number of whitespace-separated words.
std::size_t word_count(const std::string& text);

// Oracles --------------------------------------------------------------------

/// Probability that a language model assigns to `words[position]` in context.
class ConfidenceOracle {
public:
    virtual ~ConfidenceOracle() = default;
    virtual double word_confidence(std::span<const std::string> words, std::size_t position) const = 0;
};

/// Fixed per-word probabilities; unknown words get `fallback`.
class TableConfidenceOracle final : public ConfidenceOracle {
public:
    explicit TableConfidenceOracle(std::map<std::string, double> table, double fallback = 0.0);
    double word_confidence(std::span<const std::string> words, std::size_t position) const override;

private:
    std::map<std::string, double> table_;
    double fallback_;
};

/// Interpolated bigram/unigram model:
///   P(w | prev) = lambda * c(prev, w) / c(prev) + (1 - lambda) * (c(w) + 1) / (N + V + 1)
/// The bigram term is dropped at the start of the text and after punctuation-only words.
class NgramConfidenceOracle final : public ConfidenceOracle {
public:
    static NgramConfidenceOracle fit(const std::string& corpus, double lambda = 0.7);
    static NgramConfidenceOracle load(const std::filesystem::path& corpus_path, double lambda = 0.7);

    double word_confidence(std::span<const std::string> words, std::size_t position) const override;

    std::size_t vocabulary_size() const noexcept { return unigrams_.size(); }
    std::size_t token_count() const noexcept { return total_; }

private:
    double lambda_ = 0.7;
    std::size_t total_ = 0;
    std::unordered_map<std::string, std::size_t> unigrams_;
    std::unordered_map<std::string, std::size_t> bigrams_;  // "prev\x1fword"
};

struct SynonymCandidate {
    std::string word;
    double similarity = 0.0;
    bool operator==(const SynonymCandidate&) const = default;
};

/// Supplies replacement candidates ordered by descending similarity, then word.
class SynonymProvider {
public:
    virtual ~SynonymProvider() = default;
    virtual std::vector<SynonymCandidate> candidates(const std::string& word) const = 0;
    /// Word vector used for the sentence-similarity check; nullptr when unknown.
    virtual const std::vector<float>* embedding(const std::string& /*word*/) const { return nullptr; }
};

/// Static word-embedding table; candidates are every other row ranked by cosine.
class EmbeddingTableSynonyms final : public SynonymProvider {
public:
    explicit EmbeddingTableSynonyms(std::map<std::string, std::vector<float>> rows, std::size_t max_candidates = 50);
    /// Whitespace-separated `word v1 v2 ...` rows; blank lines and `#` comments skipped.
    static EmbeddingTableSynonyms load(const std::filesystem::path& path, std::size_t max_candidates = 50);
    static EmbeddingTableSynonyms parse(const std::string& text, std::size_t max_candidates = 50);

    std::vector<SynonymCandidate> candidates(const std::string& word) const override;
    const std::vector<float>* embedding(const std::string& word) const override;
    std::size_t size() const noexcept { return words_.size(); }

private:
    std::vector<std::string> words_;  // sorted
    std::vector<std::vector<float>> vectors_;
    std::vector<double> norms_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t max_candidates_;
};

// Part of speech ---------------------------------------------------------------

enum class CoarseTag { noun, verb, adjective, adverb, function, unknown };

/// Suffix-heuristic tag for a lower-cased word.
CoarseTag coarse_tag(const std::string& word);
/// Equal tags are compatible; `unknown` is compatible with anything.
bool tags_compatible(CoarseTag a, CoarseTag b);

// Perturbation -----------------------------------------------------------------

struct PerturbationConfig {
    double low_prob_threshold = 0.01;
    double synonym_similarity_threshold = 0.7;
    std::size_t max_word_perturbations = 10;
    double sentence_similarity_floor = 0.8;
    bool pos_check = true;

    void validate() const;
    nlohmann::json to_json() const;
};

struct Substitution {
    std::size_t position = 0;  // word index
    std::string original;
    std::string replacement;
    double similarity = 0.0;
    double confidence_before = 0.0;
    double confidence_after = 0.0;
};

struct PerturbationResult {
    std::string perturbed_text;
    std::vector<Substitution> substitutions;
};

/// Word positions with confidence >= the low-probability threshold, by
/// descending confidence (ties keep text order). Throws InputError when the
/// text has no words.
std::vector<std::size_t> rank_target_words(std::span<const std::string> words, const ConfidenceOracle& oracle,
                                           const PerturbationConfig& config);
std::vector<std::size_t> rank_target_words(const std::string& text, const ConfidenceOracle& oracle,
                                           const PerturbationConfig& config);

/// Candidates for `words[position]` passing the similarity threshold, the
/// part-of-speech check, and the sentence-similarity floor measured against
/// `reference` (the unperturbed words).
std::vector<SynonymCandidate> candidate_synonyms(std::span<const std::string> words, std::size_t position,
                                                 std::span<const std::string> reference,
                                                 const SynonymProvider& provider, const PerturbationConfig& config);
std::vector<SynonymCandidate> candidate_synonyms(const std::string& word, const SynonymProvider& provider,
                                                 const PerturbationConfig& config);

/// Substitutes confidently predicted words with admissible synonyms that the
/// oracle predicts with lower confidence. Takes no detector.
PerturbationResult perturb_text(const std::string& text, const PerturbationConfig& config,
                                const ConfidenceOracle& confidence, const SynonymProvider& synonyms);

nlohmann::json perturbation_to_json(const std::string& id, const PerturbationResult& result);

}  // namespace llmcipher
