#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igaiva/corpus.hpp"

namespace igaiva::features {

enum class Stopwords { none, spanish, english, spanish_english };

std::string to_string(Stopwords set);
Stopwords parse_stopwords(const std::string& text);

struct TokenizerConfig {
    bool lowercase = true;
    Stopwords stopwords = Stopwords::spanish_english;
    /// Tokens shorter than this many code points are dropped.
    std::size_t min_token_length = 2;

    bool operator==(const TokenizerConfig&) const = default;
};

bool is_stopword(const std::string& token, Stopwords set);

/// Splits on non-word code points, lowercases and filters.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {});

struct TfidfConfig {
    std::size_t min_df = 1;
    std::size_t max_features = 30000;
    TokenizerConfig tokenizer;

    bool operator==(const TfidfConfig&) const = default;
};

/// Sparse vector with strictly increasing indices.
struct FeatureVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;
    std::size_t dim = 0;

    std::size_t nnz() const { return indices.size(); }
    double dot(std::span<const double> dense) const;
    double squared_norm() const;
    bool operator==(const FeatureVector&) const = default;
};

struct Vocabulary {
    /// Terms in index order (lexicographic).
    std::vector<std::string> terms;
    std::vector<std::size_t> document_frequency;
    std::map<std::string, std::uint32_t> index;
    std::string fitted_on;

    std::size_t size() const { return terms.size(); }
    std::optional<std::uint32_t> find(const std::string& term) const;
};

/// Smoothed-idf TF-IDF model: idf(t) = ln((1 + N) / (1 + df(t))) + 1,
/// raw counts for tf, L2-normalised rows.
class TfidfModel {
public:
    TfidfModel() = default;
    TfidfModel(Vocabulary vocabulary, std::vector<double> idf, std::size_t num_documents,
               TfidfConfig config);

    const Vocabulary& vocabulary() const { return vocabulary_; }
    const std::vector<double>& idf() const { return idf_; }
    std::size_t num_documents() const { return num_documents_; }
    const TfidfConfig& config() const { return config_; }
    std::size_t dim() const { return vocabulary_.size(); }

    FeatureVector transform(std::string_view text) const;

    std::string serialize() const;
    static TfidfModel deserialize(const std::string& content);
    void save(const std::string& path) const;
    static TfidfModel load(const std::string& path);

    bool operator==(const TfidfModel&) const;

private:
    Vocabulary vocabulary_;
    std::vector<double> idf_;
    std::size_t num_documents_ = 0;
    TfidfConfig config_;
};

TfidfModel fit_tfidf(std::span<const std::string> train_texts, const TfidfConfig& config = {},
                     std::string fitted_on = {});

/// Fits on the split's training messages only.
TfidfModel fit_tfidf(const corpus::Dataset& dataset, const corpus::SplitAssignment& split,
                     const TfidfConfig& config = {});

/// Rows of feature vectors keyed by message id.
struct FeatureMatrix {
    std::vector<std::string> ids;
    std::vector<FeatureVector> rows;
    std::size_t dim = 0;

    std::size_t size() const { return rows.size(); }
};

FeatureMatrix featurize(const TfidfModel& model, const corpus::Dataset& dataset);
FeatureMatrix featurize(const TfidfModel& model, const corpus::Dataset& dataset,
                        const std::vector<std::string>& ids);

struct KeywordEntry {
    std::string term;
    std::size_t count = 0;
    double weight = 0.0;

    bool operator==(const KeywordEntry&) const = default;
};

struct KeywordStats {
    std::vector<KeywordEntry> entries;
    std::size_t subset_size = 0;
};

/// Top-k terms by total token count over the subset; ties broken
/// lexicographically. Weights are renormalised over the retained terms.
KeywordStats keyword_stats(std::span<const corpus::Message> messages, std::size_t top_k,
                           const TokenizerConfig& tokenizer = {});

}  // namespace igaiva::features
