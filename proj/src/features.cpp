#include "igaiva/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "igaiva/error.hpp"
#include "igaiva/text.hpp"
#include "igaiva/util.hpp"

namespace igaiva::features {

namespace {

const std::unordered_set<std::string>& spanish_stopwords() {
    static const std::unordered_set<std::string> words{
        "de", "la", "que", "el", "en", "y", "a", "los", "del", "se", "las", "por", "un", "para",
        "con", "no", "una", "su", "al", "lo", "como", "más", "mas", "pero", "sus", "le", "ya",
        "o", "u", "e", "este", "sí", "si", "porque", "esta", "entre", "cuando", "muy", "sin",
        "sobre", "también", "tambien", "me", "hasta", "hay", "donde", "quien", "desde", "todo",
        "nos", "durante", "todos", "uno", "les", "ni", "contra", "otros", "ese", "eso", "ante",
        "ellos", "esto", "mí", "mi", "antes", "algunos", "qué", "unos", "yo", "otro", "otras",
        "otra", "él", "tanto", "esa", "estos", "mucho", "quienes", "nada", "muchos", "cual",
        "cuales", "cuál", "poco", "ella", "estar", "estas", "algunas", "algo", "nosotros", "mis",
        "tú", "tu", "te", "ti", "tus", "ellas", "vosotros", "os", "mío", "mía", "tuyo", "suyo",
        "suya", "suyos", "nuestro", "nuestra", "esos", "esas", "estoy", "está", "estan", "están",
        "es", "son", "ser", "soy", "fue", "era", "eran", "sido", "ha", "han", "he", "has",
        "hemos", "había", "habia", "haber", "tiene", "tengo", "tienen", "hace", "hacer", "puede",
        "cada", "todas", "aunque", "así", "asi", "ahora", "luego", "bien", "vez", "aquí", "aqui",
        "allí", "alli", "sea", "sean", "fueron", "será", "sera", "hoy", "ayer", "mañana"};
    return words;
}

const std::unordered_set<std::string>& english_stopwords() {
    static const std::unordered_set<std::string> words{
        "a", "an", "the", "and", "or", "but", "if", "then", "else", "of", "at", "by", "for",
        "with", "about", "against", "between", "into", "through", "during", "before", "after",
        "above", "below", "to", "from", "up", "down", "in", "out", "on", "off", "over", "under",
        "again", "further", "once", "here", "there", "when", "where", "why", "how", "all", "any",
        "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
        "only", "own", "same", "so", "than", "too", "very", "can", "will", "just", "should",
        "now", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having",
        "do", "does", "did", "doing", "would", "could", "i", "me", "my", "myself", "we", "our",
        "ours", "you", "your", "yours", "he", "him", "his", "she", "her", "hers", "it", "its",
        "they", "them", "their", "what", "which", "who", "whom", "this", "that", "these", "those",
        "am", "as", "until", "while", "because", "also", "please"};
    return words;
}

std::string train_fingerprint(const corpus::SplitAssignment& split) {
    std::uint64_t h = fnv1a64("igaiva-train-set");
    for (const auto& id : split.train_ids) {
        h = fnv1a64(id, h);
        h = fnv1a64("\n", h);
    }
    return to_hex(h);
}

}  // namespace

std::string to_string(Stopwords set) {
    switch (set) {
        case Stopwords::none: return "none";
        case Stopwords::spanish: return "es";
        case Stopwords::english: return "en";
        case Stopwords::spanish_english: return "es+en";
    }
    return "none";
}

Stopwords parse_stopwords(const std::string& text) {
    if (text == "none") return Stopwords::none;
    if (text == "es") return Stopwords::spanish;
    if (text == "en") return Stopwords::english;
    if (text == "es+en") return Stopwords::spanish_english;
    throw UsageError("unknown stopword set '" + text + "' (expected none, es, en, es+en)");
}

bool is_stopword(const std::string& token, Stopwords set) {
    switch (set) {
        case Stopwords::none: return false;
        case Stopwords::spanish: return spanish_stopwords().count(token) != 0;
        case Stopwords::english: return english_stopwords().count(token) != 0;
        case Stopwords::spanish_english:
            return spanish_stopwords().count(token) != 0 || english_stopwords().count(token) != 0;
    }
    return false;
}

std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config) {
    std::vector<std::string> tokens;
    const auto cps = text::decode_utf8(text);
    std::u32string word;
    auto flush = [&] {
        if (word.size() >= config.min_token_length && !word.empty()) {
            auto token = text::encode_utf8(word);
            if (!is_stopword(config.lowercase ? token : text::lowercase(token), config.stopwords))
                tokens.push_back(std::move(token));
        }
        word.clear();
    };
    for (char32_t cp : cps) {
        if (text::is_word_char(cp)) {
            word.push_back(config.lowercase ? text::to_lower(cp) : cp);
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

double FeatureVector::dot(std::span<const double> dense) const {
    double s = 0.0;
    for (std::size_t k = 0; k < indices.size(); ++k) s += values[k] * dense[indices[k]];
    return s;
}

double FeatureVector::squared_norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return s;
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& term) const {
    const auto it = index.find(term);
    if (it == index.end()) return std::nullopt;
    return it->second;
}

TfidfModel::TfidfModel(Vocabulary vocabulary, std::vector<double> idf, std::size_t num_documents,
                       TfidfConfig config)
    : vocabulary_(std::move(vocabulary)),
      idf_(std::move(idf)),
      num_documents_(num_documents),
      config_(std::move(config)) {
    if (idf_.size() != vocabulary_.size()) throw DataError("idf length does not match vocabulary");
    vocabulary_.index.clear();
    for (std::size_t i = 0; i < vocabulary_.terms.size(); ++i)
        vocabulary_.index.emplace(vocabulary_.terms[i], static_cast<std::uint32_t>(i));
}

FeatureVector TfidfModel::transform(std::string_view text) const {
    std::map<std::uint32_t, double> counts;
    for (const auto& tok : tokenize(text, config_.tokenizer)) {
        if (auto idx = vocabulary_.find(tok)) counts[*idx] += 1.0;
    }
    FeatureVector v;
    v.dim = dim();
    v.indices.reserve(counts.size());
    v.values.reserve(counts.size());
    double norm2 = 0.0;
    for (const auto& [idx, tf] : counts) {
        const double w = tf * idf_[idx];
        v.indices.push_back(idx);
        v.values.push_back(w);
        norm2 += w * w;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& w : v.values) w *= inv;
    }
    return v;
}

bool TfidfModel::operator==(const TfidfModel& other) const {
    return vocabulary_.terms == other.vocabulary_.terms &&
           vocabulary_.document_frequency == other.vocabulary_.document_frequency &&
           vocabulary_.fitted_on == other.vocabulary_.fitted_on && idf_ == other.idf_ &&
           num_documents_ == other.num_documents_ && config_ == other.config_;
}

std::string TfidfModel::serialize() const {
    std::ostringstream out;
    out << "igaiva-tfidf 1\n";
    out << "documents " << num_documents_ << "\n";
    out << "min_df " << config_.min_df << "\n";
    out << "max_features " << config_.max_features << "\n";
    out << "lowercase " << (config_.tokenizer.lowercase ? 1 : 0) << "\n";
    out << "stopwords " << to_string(config_.tokenizer.stopwords) << "\n";
    out << "min_token_length " << config_.tokenizer.min_token_length << "\n";
    out << "fitted_on " << vocabulary_.fitted_on << "\n";
    out << "terms " << vocabulary_.size() << "\n";
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
        out << vocabulary_.terms[i] << '\t' << vocabulary_.document_frequency[i] << '\t'
            << format_double(idf_[i]) << '\n';
    }
    return out.str();
}

TfidfModel TfidfModel::deserialize(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    auto expect = [&](const std::string& key) {
        if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
            throw DataError("tfidf model: expected '" + key + "' line");
        return line.substr(key.size() + 1);
    };
    if (!std::getline(in, line) || line != "igaiva-tfidf 1")
        throw DataError("tfidf model: unsupported header");
    TfidfConfig config;
    const auto docs = std::stoull(expect("documents"));
    config.min_df = std::stoull(expect("min_df"));
    config.max_features = std::stoull(expect("max_features"));
    config.tokenizer.lowercase = expect("lowercase") == "1";
    config.tokenizer.stopwords = parse_stopwords(expect("stopwords"));
    config.tokenizer.min_token_length = std::stoull(expect("min_token_length"));
    Vocabulary vocab;
    vocab.fitted_on = expect("fitted_on");
    const auto n_terms = std::stoull(expect("terms"));
    std::vector<double> idf;
    idf.reserve(n_terms);
    for (std::size_t i = 0; i < n_terms; ++i) {
        if (!std::getline(in, line)) throw DataError("tfidf model: truncated term table");
        const auto parts = split(line, '\t');
        if (parts.size() != 3) throw DataError("tfidf model: malformed term line " + std::to_string(i));
        vocab.terms.push_back(parts[0]);
        vocab.document_frequency.push_back(std::stoull(parts[1]));
        idf.push_back(std::strtod(parts[2].c_str(), nullptr));
    }
    return TfidfModel(std::move(vocab), std::move(idf), docs, config);
}

void TfidfModel::save(const std::string& path) const { write_file(path, serialize()); }

TfidfModel TfidfModel::load(const std::string& path) { return deserialize(read_file(path)); }

TfidfModel fit_tfidf(std::span<const std::string> train_texts, const TfidfConfig& config,
                     std::string fitted_on) {
    if (config.min_df < 1) throw UsageError("min_df must be at least 1");
    if (config.max_features < 1) throw UsageError("max_features must be at least 1");
    std::map<std::string, std::size_t> df;
    bool any_tokens = false;
    for (const auto& text : train_texts) {
        const auto toks = tokenize(text, config.tokenizer);
        std::set<std::string> unique(toks.begin(), toks.end());
        any_tokens = any_tokens || !unique.empty();
        for (const auto& t : unique) ++df[t];
    }
    if (train_texts.empty() || !any_tokens) throw DataError("cannot fit TF-IDF on an empty corpus");

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [term, f] : df) {
        if (f >= config.min_df) kept.emplace_back(term, f);
    }
    if (kept.empty()) throw DataError("empty vocabulary: no term reaches min_df");
    if (kept.size() > config.max_features) {
        // Highest document frequency first; std::map order breaks ties by term.
        std::stable_sort(kept.begin(), kept.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        kept.resize(config.max_features);
        std::sort(kept.begin(), kept.end());
    }

    const auto N = static_cast<double>(train_texts.size());
    Vocabulary vocab;
    vocab.fitted_on = std::move(fitted_on);
    std::vector<double> idf;
    for (const auto& [term, f] : kept) {
        vocab.terms.push_back(term);
        vocab.document_frequency.push_back(f);
        idf.push_back(std::log((1.0 + N) / (1.0 + static_cast<double>(f))) + 1.0);
    }
    return TfidfModel(std::move(vocab), std::move(idf), train_texts.size(), config);
}

TfidfModel fit_tfidf(const corpus::Dataset& dataset, const corpus::SplitAssignment& split,
                     const TfidfConfig& config) {
    std::vector<std::string> texts;
    for (const auto& m : dataset.messages()) {
        if (split.train_ids.count(m.id)) texts.push_back(m.text);
    }
    return fit_tfidf(texts, config, dataset.name() + "@" + train_fingerprint(split));
}

FeatureMatrix featurize(const TfidfModel& model, const corpus::Dataset& dataset) {
    FeatureMatrix fm;
    fm.dim = model.dim();
    for (const auto& m : dataset.messages()) {
        fm.ids.push_back(m.id);
        fm.rows.push_back(model.transform(m.text));
    }
    return fm;
}

FeatureMatrix featurize(const TfidfModel& model, const corpus::Dataset& dataset,
                        const std::vector<std::string>& ids) {
    FeatureMatrix fm;
    fm.dim = model.dim();
    for (const auto& id : ids) {
        fm.ids.push_back(id);
        fm.rows.push_back(model.transform(dataset.at(id).text));
    }
    return fm;
}

KeywordStats keyword_stats(std::span<const corpus::Message> messages, std::size_t top_k,
                           const TokenizerConfig& tokenizer) {
    if (top_k < 1) throw UsageError("top_k must be at least 1");
    KeywordStats stats;
    stats.subset_size = messages.size();
    std::map<std::string, std::size_t> counts;
    for (const auto& m : messages) {
        for (const auto& t : tokenize(m.text, tokenizer)) ++counts[t];
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > top_k) ranked.resize(top_k);
    double total = 0.0;
    for (const auto& r : ranked) total += static_cast<double>(r.second);
    for (const auto& [term, count] : ranked) {
        stats.entries.push_back({term, count, static_cast<double>(count) / total});
    }
    return stats;
}

}  // namespace igaiva::features
