#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igaiva/corpus.hpp"

namespace igaiva::corpus {

/// A class's vocabulary: groups of interchangeable keywords.
struct Topic {
    std::string label;
    std::string name;
    std::vector<std::vector<std::string>> keyword_groups;
    /// Context words shared with the neighbouring topic.
    std::vector<std::string> shared_words;
};

/// The fifteen built-in support-ticket topics (labels T1..T15).
const std::vector<Topic>& builtin_topics();

/// Every keyword group of every topic plus generic ticket vocabulary;
/// the default synonym table of the mock generator.
std::vector<std::vector<std::string>> lexicon_synonym_groups();

/// Per-class message counts of the fifteen-class ticket corpus (39,100 total).
std::vector<std::size_t> reference_class_sizes();

struct TemplateCorpusConfig {
    std::uint64_t seed = 7;
    std::size_t num_classes = 5;
    /// Messages per class; a single entry applies to every class.
    std::vector<std::size_t> class_sizes{250};
    /// Optionally shrink one class to a fixed number of messages.
    std::optional<std::pair<std::string, std::size_t>> downsample;
    std::string name = "template";
};

/// Deterministic templated corpus. Class i's messages combine one keyword of
/// its own groups, context words shared with classes i-1 and i+1 and generic
/// ticket phrases, so that neighbouring classes overlap.
Dataset generate_template_corpus(const TemplateCorpusConfig& config);

}  // namespace igaiva::corpus
