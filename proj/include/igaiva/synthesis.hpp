#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "igaiva/corpus.hpp"
#include "igaiva/features.hpp"
#include "igaiva/heatmap.hpp"
#include "igaiva/projection.hpp"

namespace igaiva::synthesis {

struct GenerationParams {
    double temperature = 0.7;
    std::size_t max_tokens = 550;
    double top_p = 0.5;
    double frequency_penalty = 0.3;
    double presence_penalty = 0.0;
    /// Variants requested per example.
    std::size_t k = 5;

    void validate() const;
    bool operator==(const GenerationParams&) const = default;
};

// -- example selection ------------------------------------------------------
//
// All selectors draw from the split's training ids only and return ids in
// dataset order. A test id in a result raises LeakageError.

/// Training ids (optionally of one class) whose embedded point lies in `region`.
std::vector<std::string> select_examples_in_region(const corpus::Dataset& dataset,
                                                   const corpus::SplitAssignment& split,
                                                   const projection::Embedding2D& embedding,
                                                   const heatmap::Region& region,
                                                   const std::optional<std::string>& class_filter = {});

/// Training messages of `label` sharing at least one token with `terms`.
std::vector<std::string> select_examples_by_keywords(const corpus::Dataset& dataset,
                                                     const corpus::SplitAssignment& split,
                                                     const std::string& label,
                                                     std::span<const std::string> terms,
                                                     const features::TokenizerConfig& tokenizer = {});

/// `n` distinct training ids of `label`, uniform under `seed`.
std::vector<std::string> select_examples_random(const corpus::Dataset& dataset,
                                                const corpus::SplitAssignment& split,
                                                const std::string& label, std::size_t n,
                                                std::uint64_t seed);

// -- generators -------------------------------------------------------------

struct GenerationResult {
    std::vector<std::string> texts;
    std::string prompt_hash;
    /// Set when the generator produced nothing usable for this example.
    std::optional<std::string> failure;
};

class Generator {
public:
    virtual ~Generator() = default;
    /// Short kind name ("mock", "remote").
    virtual std::string kind() const = 0;
    /// Identifier recorded in provenance.
    virtual std::string id() const = 0;
    /// Maximum concurrent generate() calls synthesize may issue.
    virtual std::size_t parallelism() const { return 1; }
    /// Throws GeneratorError on transport failure.
    virtual GenerationResult generate(const corpus::Message& example, const GenerationParams& params) const = 0;
};

/// Offline generator: synonym substitution plus clause shuffling.
///
/// Variants are a function of (seed, example id, example text, variant
/// number), so a request always produces the same batch. Each accepted
/// variant differs from the example and from every earlier variant.
class MockGenerator final : public Generator {
public:
    explicit MockGenerator(std::uint64_t seed = 1);
    MockGenerator(std::uint64_t seed, std::vector<std::vector<std::string>> synonym_groups);

    std::string kind() const override { return "mock"; }
    std::string id() const override;
    GenerationResult generate(const corpus::Message& example, const GenerationParams& params) const override;

    double substitution_probability = 0.5;
    int max_attempts = 64;

private:
    std::uint64_t seed_;
    std::vector<std::vector<std::string>> groups_;
    std::map<std::string, std::size_t> group_of_;
};

/// System prompt sent with every remote request.
std::string system_prompt(std::size_t k);

/// Splits a completion into candidate messages: one per non-blank line,
/// trimmed, with list markers such as "1." or "-" removed.
std::vector<std::string> parse_completion_lines(const std::string& content);

struct RemoteConfig {
    std::string base_url;
    std::string api_key;
    std::string model;
    /// Retries after the first failed attempt.
    int retries = 3;
    std::chrono::milliseconds backoff{500};
    std::chrono::seconds timeout{120};
    std::size_t parallelism = 4;

    /// Reads IGAIVA_LLM_BASE_URL, IGAIVA_LLM_API_KEY and IGAIVA_LLM_MODEL.
    static RemoteConfig from_env();
};

/// Chat-completions client (POST {base_url}/chat/completions).
class ChatCompletionGenerator final : public Generator {
public:
    explicit ChatCompletionGenerator(RemoteConfig config);

    std::string kind() const override { return "remote"; }
    std::string id() const override { return "remote:" + config_.model; }
    std::size_t parallelism() const override { return config_.parallelism; }
    GenerationResult generate(const corpus::Message& example, const GenerationParams& params) const override;

    /// JSON request body for one example.
    std::string request_body(const corpus::Message& example, const GenerationParams& params) const;

private:
    RemoteConfig config_;
    std::string scheme_host_;
    std::string path_prefix_;
};

// -- batches ----------------------------------------------------------------

struct SynthesisRequest {
    std::string label;
    std::vector<std::string> example_ids;
    GenerationParams params;
    std::string generator = "mock";
    std::string run_id;
};

struct Rejection {
    std::string example_id;
    std::string text;
    std::string reason;
};

struct SyntheticBatch {
    std::string run_id;
    std::string generator_id;
    SynthesisRequest request;
    std::vector<corpus::Message> messages;
    std::vector<Rejection> rejected;

    std::size_t size() const { return messages.size(); }
    corpus::Dataset dataset() const;

    std::string manifest_json() const;
    /// Writes the messages as JSONL at `path` and the manifest next to it.
    void save(const std::string& path) const;
    static SyntheticBatch load(const std::string& path);
};

std::string manifest_path_for(const std::string& batch_path);

/// Generates up to |examples| * k messages labelled request.label with ids
/// "<run_id>/<n>".
SyntheticBatch synthesize(const SynthesisRequest& request, const corpus::Dataset& dataset,
                          const corpus::SplitAssignment& split, const Generator& generator);

}  // namespace igaiva::synthesis
