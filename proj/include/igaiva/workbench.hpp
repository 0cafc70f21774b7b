#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "igaiva/classifier.hpp"
#include "igaiva/corpus.hpp"
#include "igaiva/features.hpp"
#include "igaiva/heatmap.hpp"
#include "igaiva/projection.hpp"
#include "igaiva/synthesis.hpp"

namespace igaiva::workbench {

// -- dataset cache ----------------------------------------------------------

struct CacheEntry {
    std::string name;
    std::size_t size = 0;
    std::size_t collected = 0;
    std::size_t synthetic = 0;
    bool main = false;
    std::string origin() const;
};

/// Bounded LRU working set of datasets. The main dataset is pinned and
/// never evicted.
class DatasetCache {
public:
    using Journal = std::function<void(const std::string&)>;

    explicit DatasetCache(std::size_t capacity = 20, Journal journal = {});

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }

    /// Inserts or replaces `name`, marking it most recently used. Returns
    /// the names evicted to make room.
    std::vector<std::string> put(const std::string& name, std::shared_ptr<const corpus::Dataset> dataset,
                                 bool main = false);
    /// Touches and returns the entry, or null when absent.
    std::shared_ptr<const corpus::Dataset> get(const std::string& name);
    bool contains(const std::string& name) const;
    /// Entries from most to least recently used.
    std::vector<CacheEntry> list() const;
    /// Removes an entry; refuses the main dataset.
    void erase(const std::string& name);
    /// Evicts the least recently used non-main entry, if any.
    std::optional<std::string> evict();
    std::optional<std::string> main_name() const;

private:
    struct Slot {
        CacheEntry entry;
        std::shared_ptr<const corpus::Dataset> data;
        std::uint64_t tick = 0;
    };
    std::size_t capacity_;
    Journal journal_;
    std::uint64_t clock_ = 0;
    std::map<std::string, Slot> entries_;
};

// -- jobs -------------------------------------------------------------------

enum class JobKind { train, synthesize, project };
enum class JobState { queued, running, done, failed };

std::string to_string(JobKind kind);
std::string to_string(JobState state);

struct JobEvent {
    std::size_t seq = 0;
    double fraction = 0.0;
    std::string message;
};

struct Job {
    std::string id;
    JobKind kind = JobKind::train;
    JobState state = JobState::queued;
    double progress = 0.0;
    std::vector<JobEvent> events;
    std::string error;
    std::string experiment_id;
    std::string result;
};

/// Handed to running work to report progress.
class JobContext {
public:
    /// Fractions are clamped so that progress never decreases.
    void progress(double fraction, const std::string& message = {});
    void set_result(std::string result);

private:
    friend class JobQueue;
    JobContext(class JobQueue& queue, std::string id) : queue_(queue), id_(std::move(id)) {}
    class JobQueue& queue_;
    std::string id_;
};

/// FIFO job runner with a single executor, so train jobs never overlap.
class JobQueue {
public:
    using Work = std::function<void(JobContext&)>;

    JobQueue() = default;
    ~JobQueue();
    JobQueue(const JobQueue&) = delete;
    JobQueue& operator=(const JobQueue&) = delete;

    std::string submit(JobKind kind, Work work, std::string experiment_id = {});
    /// Runs the oldest queued job on the calling thread; false when none is queued.
    bool run_next();
    /// Runs queued jobs until the queue is empty.
    void run_all();
    /// Starts a background executor that drains the queue as jobs arrive.
    void start();
    void stop();

    Job status(const std::string& id) const;
    std::vector<Job> list() const;
    /// Blocks until the job has events beyond `after_seq` or has finished,
    /// or until the timeout; returns the events after `after_seq`.
    std::vector<JobEvent> wait_events(const std::string& id, std::size_t after_seq,
                                      std::chrono::milliseconds timeout) const;
    /// Blocks until the job is done or failed.
    Job wait(const std::string& id) const;

private:
    friend class JobContext;
    void execute(const std::string& id);
    void append_event(const std::string& id, double fraction, const std::string& message);

    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, Job> jobs_;
    std::map<std::string, Work> work_;
    std::deque<std::string> queue_;
    std::size_t serial_ = 0;
    bool running_job_ = false;
    bool stop_ = false;
    std::thread worker_;
};

// -- run store --------------------------------------------------------------

enum class ExperimentStatus { queued, running, complete, incomplete };

std::string to_string(ExperimentStatus status);

struct Experiment {
    std::string id;
    std::string name;
    std::string base_dataset;
    std::string split_ref;
    std::vector<std::string> batches;
    std::string feature_ref;
    std::string model_ref;
    std::string report_ref;
    std::string baseline_ref;
    std::string notes;
    classifier::TrainConfig train_config;
    features::TfidfConfig tfidf_config;
    ExperimentStatus status = ExperimentStatus::queued;
    std::string test_fingerprint;
    std::size_t train_size = 0;
    std::vector<std::string> new_labels;
    std::string error;
    bool archived = false;

    std::string to_json() const;
    static Experiment from_json(const std::string& content);
    bool operator==(const Experiment&) const = default;
};

/// Directory-tree store:
///   store.json, journal.log,
///   datasets/<name>.jsonl, splits/<name>.json, batches/<run>.jsonl (+ manifest),
///   models/<exp>.tfidf, models/<exp>.model.json, reports/<exp>.json,
///   runs/<exp>/manifest.json
class RunStore {
public:
    /// Opens (creating when `create`) and validates the store. A store whose
    /// manifests do not parse or reference missing files is refused.
    static RunStore open(const std::filesystem::path& root, bool create = true);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path dataset_path(const std::string& name) const;
    std::filesystem::path split_path(const std::string& name) const;
    std::filesystem::path batch_path(const std::string& run_id) const;
    std::filesystem::path feature_path(const std::string& exp_id) const;
    std::filesystem::path model_path(const std::string& exp_id) const;
    std::filesystem::path report_path(const std::string& exp_id) const;
    std::filesystem::path manifest_path(const std::string& exp_id) const;
    std::filesystem::path journal_path() const;

    std::size_t cache_capacity() const { return cache_capacity_; }
    const std::string& main_dataset() const { return main_dataset_; }
    void set_main_dataset(const std::string& name);

    void journal(const std::string& line) const;
    /// FNV-1a over every file except the journal, in path order.
    std::string hash() const;

    std::vector<std::string> dataset_names() const;
    std::vector<std::string> experiment_ids() const;
    void verify() const;

private:
    void write_config() const;
    std::filesystem::path root_;
    std::size_t cache_capacity_ = 20;
    std::string main_dataset_;
};

/// Names one experiment for create_experiment.
struct ExperimentSpec {
    std::string name;
    std::string base_dataset;
    std::string split_ref;
    std::vector<std::string> batches;
    std::string baseline;
    classifier::TrainConfig train_config;
    features::TfidfConfig tfidf_config;
    std::string notes;
};

struct Comparison {
    std::string baseline;
    std::vector<classifier::DeltaTable> columns;
    std::string markdown;
    std::string csv;
};

/// Coordinator for store, cache and jobs; every store mutation goes
/// through it under one lock.
class Workbench {
public:
    explicit Workbench(const std::filesystem::path& store_root, std::optional<std::size_t> cache_capacity = {});
    ~Workbench();

    RunStore& store() { return store_; }
    JobQueue& jobs() { return jobs_; }

    // Data view.
    void import_dataset(const std::string& name, const corpus::Dataset& dataset, bool main = false);
    std::shared_ptr<const corpus::Dataset> dataset(const std::string& name);
    bool has_dataset(const std::string& name) const;
    std::vector<CacheEntry> list_datasets() const;
    /// Deleting a dataset an un-archived experiment uses needs `force`.
    void delete_dataset(const std::string& name, bool force = false);
    /// Stores base + others as `name`; returns labels new to the base.
    std::vector<std::string> merge(const std::string& name, const std::string& base,
                                   const std::vector<std::string>& others);

    std::string make_split(const std::string& dataset, double test_fraction, std::uint64_t seed,
                           std::string name = {});
    corpus::SplitAssignment split(const std::string& ref) const;

    // Synthesis view.
    void save_batch(const synthesis::SyntheticBatch& batch);
    synthesis::SyntheticBatch batch(const std::string& run_id) const;
    std::vector<std::string> batch_ids() const;

    // Model view.
    /// Validates references and records the experiment; returns it with the
    /// id of the queued train job in `job_id`.
    Experiment create_experiment(const ExperimentSpec& spec, std::string* job_id = nullptr);
    Experiment experiment(const std::string& id) const;
    std::vector<Experiment> experiments() const;
    classifier::EvalReport report(const std::string& experiment_id) const;
    features::TfidfModel feature_model(const std::string& experiment_id) const;
    classifier::ClassifierModel model(const std::string& experiment_id) const;
    void archive_experiment(const std::string& id);

    // Results view.
    Comparison compare_experiments(const std::string& baseline, const std::vector<std::string>& ids) const;
    /// Writes a deterministic ustar archive with the experiment's files.
    void export_experiment(const std::string& id, const std::filesystem::path& archive) const;

    std::vector<std::string> test_ids(const std::string& split_ref) const;

private:
    void run_training(const std::string& exp_id, JobContext& ctx);
    void write_experiment(const Experiment& e) const;
    std::vector<std::string> referencing_experiments(const std::string& dataset) const;

    mutable std::recursive_mutex mutex_;
    RunStore store_;
    mutable DatasetCache cache_;
    JobQueue jobs_;
};

// -- shared pipeline steps ----------------------------------------------------

struct ProjectionSpec {
    /// "pca" or "tsne".
    std::string method = "pca";
    std::size_t dim_x = 0;
    std::size_t dim_y = 1;
    std::size_t components = 20;
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;

    std::string key() const;
};

/// Embeds every message of `dataset`. PCA axes are fitted on the training
/// rows only; t-SNE embeds all rows jointly.
projection::Embedding2D embed(const corpus::Dataset& dataset, const corpus::SplitAssignment& split,
                              const features::TfidfModel& features, const ProjectionSpec& spec);

/// Test verdicts of `report` placed at their embedded positions.
std::vector<heatmap::CorrectnessSample> correctness_samples(const classifier::EvalReport& report,
                                                            const projection::Embedding2D& embedding);

}  // namespace igaiva::workbench
