#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace igaiva::corpus {

enum class Origin { collected, synthetic };

std::string to_string(Origin origin);
Origin parse_origin(const std::string& text);

/// Where a synthetic message came from.
struct Provenance {
    std::string generator_id;
    std::vector<std::string> example_ids;
    std::string prompt_hash;

    bool operator==(const Provenance&) const = default;
};

struct Message {
    std::string id;
    std::string text;
    std::string label;
    Origin origin = Origin::collected;
    std::optional<Provenance> provenance;

    bool operator==(const Message&) const = default;
};

/// Immutable, validated collection of labeled messages.
///
/// Ids are unique, texts and labels non-empty, and synthetic messages carry
/// provenance. Labels are reported in order of first appearance.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::string name, std::vector<Message> messages);

    const std::string& name() const { return name_; }
    const std::vector<Message>& messages() const { return messages_; }
    std::size_t size() const { return messages_.size(); }
    bool empty() const { return messages_.empty(); }

    const std::vector<std::string>& labels() const { return labels_; }
    /// label -> message ids in dataset order.
    const std::map<std::string, std::vector<std::string>>& class_index() const { return class_index_; }

    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
    const Message& at(const std::string& id) const;
    std::size_t count(Origin origin) const;

    /// Messages whose id is in `ids`, in dataset order.
    Dataset subset(const std::set<std::string>& ids, std::string name) const;

private:
    std::string name_;
    std::vector<Message> messages_;
    std::vector<std::string> labels_;
    std::map<std::string, std::vector<std::string>> class_index_;
    std::map<std::string, std::size_t> by_id_;
};

enum class Format { jsonl, csv };

Format format_from_path(const std::string& path);
Dataset load_dataset(const std::string& path, Format format);
Dataset load_dataset(const std::string& path);
Dataset parse_jsonl(const std::string& content, std::string name);
Dataset parse_csv(const std::string& content, std::string name);
std::string to_jsonl(const Dataset& dataset);
void save_jsonl(const Dataset& dataset, const std::string& path);

/// Train / test partition of the collected messages of one dataset.
struct SplitAssignment {
    std::set<std::string> train_ids;
    std::set<std::string> test_ids;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;

    /// Stable fingerprint of the test id set.
    std::string test_fingerprint() const;
    bool operator==(const SplitAssignment&) const = default;
};

/// round(fraction * n) clamped to [1, n - 1].
std::size_t stratified_test_count(std::size_t class_size, double test_fraction);

SplitAssignment stratified_split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

/// Throws DataError unless `split` partitions the collected ids of `dataset`
/// and keeps synthetic ids out of the test side.
void validate_split(const Dataset& dataset, const SplitAssignment& split);

std::string split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(const std::string& content);

/// Keep only `keep` randomly chosen training messages of `label`; the
/// other training messages of that class are dropped from dataset and split.
std::pair<Dataset, SplitAssignment> downsample_training_class(const Dataset& dataset,
                                                              const SplitAssignment& split,
                                                              const std::string& label,
                                                              std::size_t keep, std::uint64_t seed);

struct MergeResult {
    Dataset dataset;
    /// Labels present in additions but absent from the base.
    std::vector<std::string> new_labels;
};

MergeResult merge_datasets(const Dataset& base, std::span<const Dataset> additions,
                           std::string name = {});

struct ClassCount {
    std::string label;
    std::size_t count = 0;
};

struct ClassSummary {
    std::vector<ClassCount> classes;
    std::size_t total = 0;

    std::size_t count_of(const std::string& label) const;
};

ClassSummary class_summary(const Dataset& dataset);

}  // namespace igaiva::corpus
