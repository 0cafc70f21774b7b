#include "igaiva/workbench.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace fs = std::filesystem;

namespace igaiva::workbench {

using nlohmann::json;

namespace {

void check_name(const std::string& name, const char* what) {
    if (name.empty()) throw UsageError(std::string(what) + " name must not be empty");
    for (char c : name) {
        const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        if (!ok) throw UsageError(std::string(what) + " name '" + name + "' may only use letters, digits, '-', '_', '.'");
    }
    if (name[0] == '.') throw UsageError(std::string(what) + " name must not start with '.'");
}

}  // namespace

// ---------------------------------------------------------------------------
// DatasetCache

std::string CacheEntry::origin() const {
    if (synthetic == 0) return "collected";
    if (collected == 0) return "synthetic";
    return "mixed";
}

DatasetCache::DatasetCache(std::size_t capacity, Journal journal) : capacity_(capacity), journal_(std::move(journal)) {
    if (capacity_ < 2) throw UsageError("cache capacity must be at least 2");
}

std::vector<std::string> DatasetCache::put(const std::string& name, std::shared_ptr<const corpus::Dataset> dataset,
                                           bool main) {
    std::vector<std::string> evicted;
    if (!entries_.count(name)) {
        while (entries_.size() >= capacity_) {
            auto e = evict();
            if (!e) break;
            evicted.push_back(*e);
        }
    }
    if (main) {
        for (auto& [n, slot] : entries_) slot.entry.main = false;
    }
    Slot slot;
    slot.entry.name = name;
    slot.entry.size = dataset->size();
    slot.entry.collected = dataset->count(corpus::Origin::collected);
    slot.entry.synthetic = dataset->count(corpus::Origin::synthetic);
    const auto it = entries_.find(name);
    slot.entry.main = main || (it != entries_.end() && it->second.entry.main);
    slot.data = std::move(dataset);
    slot.tick = ++clock_;
    entries_[name] = std::move(slot);
    if (journal_) journal_("cache put " + name + (main ? " (main)" : ""));
    return evicted;
}

std::shared_ptr<const corpus::Dataset> DatasetCache::get(const std::string& name) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) return nullptr;
    it->second.tick = ++clock_;
    return it->second.data;
}

bool DatasetCache::contains(const std::string& name) const { return entries_.count(name) != 0; }

std::vector<CacheEntry> DatasetCache::list() const {
    std::vector<const Slot*> slots;
    for (const auto& [n, s] : entries_) slots.push_back(&s);
    std::sort(slots.begin(), slots.end(), [](const Slot* a, const Slot* b) { return a->tick > b->tick; });
    std::vector<CacheEntry> out;
    for (const auto* s : slots) out.push_back(s->entry);
    return out;
}

void DatasetCache::erase(const std::string& name) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) return;
    if (it->second.entry.main) throw UsageError("the main dataset '" + name + "' cannot be removed");
    entries_.erase(it);
    if (journal_) journal_("cache delete " + name);
}

std::optional<std::string> DatasetCache::evict() {
    const Slot* victim = nullptr;
    for (const auto& [n, s] : entries_) {
        if (s.entry.main) continue;
        if (!victim || s.tick < victim->tick) victim = &s;
    }
    if (!victim) return std::nullopt;
    auto name = victim->entry.name;
    entries_.erase(name);
    if (journal_) journal_("cache evict " + name);
    return name;
}

std::optional<std::string> DatasetCache::main_name() const {
    for (const auto& [n, s] : entries_) {
        if (s.entry.main) return n;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Jobs

std::string to_string(JobKind kind) {
    switch (kind) {
        case JobKind::train: return "train";
        case JobKind::synthesize: return "synthesize";
        case JobKind::project: return "project";
    }
    return "?";
}

std::string to_string(JobState state) {
    switch (state) {
        case JobState::queued: return "queued";
        case JobState::running: return "running";
        case JobState::done: return "done";
        case JobState::failed: return "failed";
    }
    return "?";
}

void JobContext::progress(double fraction, const std::string& message) { queue_.append_event(id_, fraction, message); }

void JobContext::set_result(std::string result) {
    std::lock_guard lock(queue_.mutex_);
    queue_.jobs_.at(id_).result = std::move(result);
}

JobQueue::~JobQueue() { stop(); }

std::string JobQueue::submit(JobKind kind, Work work, std::string experiment_id) {
    std::lock_guard lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof(id), "job-%04zu", ++serial_);
    Job job;
    job.id = id;
    job.kind = kind;
    job.experiment_id = std::move(experiment_id);
    job.events.push_back({0, 0.0, "queued"});
    jobs_[id] = std::move(job);
    work_[id] = std::move(work);
    queue_.push_back(id);
    changed_.notify_all();
    return id;
}

void JobQueue::append_event(const std::string& id, double fraction, const std::string& message) {
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    job.progress = std::max(job.progress, std::clamp(fraction, 0.0, 1.0));
    job.events.push_back({job.events.size(), job.progress, message});
    changed_.notify_all();
}

void JobQueue::execute(const std::string& id) {
    Work work;
    {
        std::lock_guard lock(mutex_);
        auto& job = jobs_.at(id);
        job.state = JobState::running;
        job.events.push_back({job.events.size(), job.progress, "running"});
        work = std::move(work_.at(id));
        work_.erase(id);
        changed_.notify_all();
    }
    JobContext ctx(*this, id);
    std::string error;
    try {
        work(ctx);
    } catch (const std::exception& e) {
        error = e.what();
        if (error.empty()) error = "job failed";
    } catch (...) {
        error = "job failed with an unknown exception";
    }
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(id);
    if (error.empty()) {
        job.progress = 1.0;
        job.state = JobState::done;
        job.events.push_back({job.events.size(), 1.0, "done"});
    } else {
        job.state = JobState::failed;
        job.error = error;
        job.events.push_back({job.events.size(), job.progress, "failed: " + error});
    }
    running_job_ = false;
    changed_.notify_all();
}

bool JobQueue::run_next() {
    std::string id;
    {
        std::unique_lock lock(mutex_);
        changed_.wait(lock, [&] { return !running_job_; });
        if (queue_.empty()) return false;
        id = queue_.front();
        queue_.pop_front();
        running_job_ = true;
    }
    execute(id);
    return true;
}

void JobQueue::run_all() {
    while (run_next()) {
    }
}

void JobQueue::start() {
    std::lock_guard lock(mutex_);
    if (worker_.joinable()) return;
    stop_ = false;
    worker_ = std::thread([this] {
        for (;;) {
            std::string id;
            {
                std::unique_lock lock(mutex_);
                changed_.wait(lock, [&] { return stop_ || (!queue_.empty() && !running_job_); });
                if (stop_) return;
                id = queue_.front();
                queue_.pop_front();
                running_job_ = true;
            }
            execute(id);
        }
    });
}

void JobQueue::stop() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
        changed_.notify_all();
    }
    if (worker_.joinable()) worker_.join();
}

Job JobQueue::status(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = jobs_.find(id);
    if (it == jobs_.end()) throw UsageError("unknown job '" + id + "'");
    return it->second;
}

std::vector<Job> JobQueue::list() const {
    std::lock_guard lock(mutex_);
    std::vector<Job> out;
    for (const auto& [id, j] : jobs_) out.push_back(j);
    return out;
}

std::vector<JobEvent> JobQueue::wait_events(const std::string& id, std::size_t after_seq,
                                            std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    if (!jobs_.count(id)) throw UsageError("unknown job '" + id + "'");
    auto ready = [&] {
        const auto& j = jobs_.at(id);
        return j.events.size() > after_seq + 1 || j.state == JobState::done || j.state == JobState::failed;
    };
    changed_.wait_for(lock, timeout, ready);
    const auto& events = jobs_.at(id).events;
    std::vector<JobEvent> out;
    for (const auto& e : events) {
        if (e.seq > after_seq) out.push_back(e);
    }
    return out;
}

Job JobQueue::wait(const std::string& id) const {
    std::unique_lock lock(mutex_);
    if (!jobs_.count(id)) throw UsageError("unknown job '" + id + "'");
    changed_.wait(lock, [&] {
        const auto s = jobs_.at(id).state;
        return s == JobState::done || s == JobState::failed;
    });
    return jobs_.at(id);
}

// ---------------------------------------------------------------------------
// Experiment manifest

std::string to_string(ExperimentStatus status) {
    switch (status) {
        case ExperimentStatus::queued: return "queued";
        case ExperimentStatus::running: return "running";
        case ExperimentStatus::complete: return "complete";
        case ExperimentStatus::incomplete: return "incomplete";
    }
    return "?";
}

namespace {

ExperimentStatus parse_status(const std::string& s) {
    for (auto st : {ExperimentStatus::queued, ExperimentStatus::running, ExperimentStatus::complete,
                    ExperimentStatus::incomplete}) {
        if (to_string(st) == s) return st;
    }
    throw DataError("unknown experiment status '" + s + "'");
}

}  // namespace

std::string Experiment::to_json() const {
    const auto& tk = tfidf_config.tokenizer;
    json j{{"schema", "igaiva.experiment/1"},
           {"id", id},
           {"name", name},
           {"base_dataset", base_dataset},
           {"split_ref", split_ref},
           {"batches", batches},
           {"feature_ref", feature_ref},
           {"model_ref", model_ref},
           {"report_ref", report_ref},
           {"baseline_ref", baseline_ref},
           {"notes", notes},
           {"train_config",
            {{"epochs", train_config.epochs},
             {"learning_rate", train_config.learning_rate},
             {"l2", train_config.l2},
             {"batch_size", train_config.batch_size},
             {"seed", train_config.seed}}},
           {"tfidf_config",
            {{"min_df", tfidf_config.min_df},
             {"max_features", tfidf_config.max_features},
             {"lowercase", tk.lowercase},
             {"stopwords", features::to_string(tk.stopwords)},
             {"min_token_length", tk.min_token_length}}},
           {"status", workbench::to_string(status)},
           {"test_fingerprint", test_fingerprint},
           {"train_size", train_size},
           {"new_labels", new_labels},
           {"error", error},
           {"archived", archived}};
    return j.dump(1) + "\n";
}

Experiment Experiment::from_json(const std::string& content) {
    try {
        const auto j = json::parse(content);
        if (j.value("schema", std::string{}) != "igaiva.experiment/1")
            throw DataError("unsupported experiment manifest schema");
        Experiment e;
        e.id = j.at("id").get<std::string>();
        e.name = j.at("name").get<std::string>();
        e.base_dataset = j.at("base_dataset").get<std::string>();
        e.split_ref = j.at("split_ref").get<std::string>();
        e.batches = j.at("batches").get<std::vector<std::string>>();
        e.feature_ref = j.at("feature_ref").get<std::string>();
        e.model_ref = j.at("model_ref").get<std::string>();
        e.report_ref = j.at("report_ref").get<std::string>();
        e.baseline_ref = j.at("baseline_ref").get<std::string>();
        e.notes = j.at("notes").get<std::string>();
        const auto& tc = j.at("train_config");
        e.train_config.epochs = tc.at("epochs").get<int>();
        e.train_config.learning_rate = tc.at("learning_rate").get<double>();
        e.train_config.l2 = tc.at("l2").get<double>();
        e.train_config.batch_size = tc.at("batch_size").get<std::size_t>();
        e.train_config.seed = tc.at("seed").get<std::uint64_t>();
        const auto& fc = j.at("tfidf_config");
        e.tfidf_config.min_df = fc.at("min_df").get<std::size_t>();
        e.tfidf_config.max_features = fc.at("max_features").get<std::size_t>();
        e.tfidf_config.tokenizer.lowercase = fc.at("lowercase").get<bool>();
        e.tfidf_config.tokenizer.stopwords = features::parse_stopwords(fc.at("stopwords").get<std::string>());
        e.tfidf_config.tokenizer.min_token_length = fc.at("min_token_length").get<std::size_t>();
        e.status = parse_status(j.at("status").get<std::string>());
        e.test_fingerprint = j.at("test_fingerprint").get<std::string>();
        e.train_size = j.at("train_size").get<std::size_t>();
        e.new_labels = j.at("new_labels").get<std::vector<std::string>>();
        e.error = j.at("error").get<std::string>();
        e.archived = j.at("archived").get<bool>();
        return e;
    } catch (const json::exception& ex) {
        throw DataError(std::string("malformed experiment manifest: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// RunStore

fs::path RunStore::dataset_path(const std::string& name) const { return root_ / "datasets" / (name + ".jsonl"); }
fs::path RunStore::split_path(const std::string& name) const { return root_ / "splits" / (name + ".json"); }
fs::path RunStore::batch_path(const std::string& run_id) const { return root_ / "batches" / (run_id + ".jsonl"); }
fs::path RunStore::feature_path(const std::string& id) const { return root_ / "models" / (id + ".tfidf"); }
fs::path RunStore::model_path(const std::string& id) const { return root_ / "models" / (id + ".model.json"); }
fs::path RunStore::report_path(const std::string& id) const { return root_ / "reports" / (id + ".json"); }
fs::path RunStore::manifest_path(const std::string& id) const { return root_ / "runs" / id / "manifest.json"; }
fs::path RunStore::journal_path() const { return root_ / "journal.log"; }

void RunStore::write_config() const {
    json j{{"schema", "igaiva.store/1"}, {"cache_capacity", cache_capacity_}, {"main_dataset", main_dataset_}};
    write_file((root_ / "store.json").string(), j.dump(1) + "\n");
}

RunStore RunStore::open(const fs::path& root, bool create) {
    RunStore s;
    s.root_ = root;
    const auto config = root / "store.json";
    if (!fs::exists(config)) {
        if (!create) throw DataError("no run store at '" + root.string() + "'");
        for (const char* d : {"datasets", "splits", "batches", "models", "reports", "runs"})
            fs::create_directories(root / d);
        s.write_config();
        return s;
    }
    try {
        const auto j = json::parse(read_file(config.string()));
        if (j.value("schema", std::string{}) != "igaiva.store/1")
            throw DataError("corrupt run store '" + root.string() + "': unsupported schema");
        s.cache_capacity_ = j.at("cache_capacity").get<std::size_t>();
        s.main_dataset_ = j.at("main_dataset").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError("corrupt run store '" + root.string() + "': " + e.what());
    }
    for (const char* d : {"datasets", "splits", "batches", "models", "reports", "runs"}) fs::create_directories(root / d);
    s.verify();
    return s;
}

void RunStore::set_main_dataset(const std::string& name) {
    main_dataset_ = name;
    write_config();
}

void RunStore::journal(const std::string& line) const {
    std::ofstream out(journal_path(), std::ios::app);
    out << utc_timestamp() << " " << line << "\n";
}

std::string RunStore::hash() const {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root_)) {
        if (e.is_regular_file() && e.path() != journal_path()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("");
    for (const auto& f : files) {
        h = fnv1a64(fs::relative(f, root_).generic_string(), h);
        h = fnv1a64(std::string_view("\0", 1), h);
        h = fnv1a64(read_file(f.string()), h);
    }
    return to_hex(h);
}

std::vector<std::string> RunStore::dataset_names() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_ / "datasets")) {
        if (e.path().extension() == ".jsonl") out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> RunStore::experiment_ids() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root_ / "runs")) {
        if (e.is_directory()) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void RunStore::verify() const {
    if (!main_dataset_.empty() && !fs::exists(dataset_path(main_dataset_)))
        throw DataError("corrupt run store: main dataset '" + main_dataset_ + "' is missing");
    for (const auto& id : experiment_ids()) {
        const auto mp = manifest_path(id);
        if (!fs::exists(mp)) throw DataError("corrupt run store: experiment '" + id + "' has no manifest");
        Experiment e;
        try {
            e = Experiment::from_json(read_file(mp.string()));
        } catch (const Error& err) {
            throw DataError("corrupt run store: experiment '" + id + "': " + err.what());
        }
        auto need = [&](const fs::path& p, const std::string& what) {
            if (!fs::exists(p))
                throw DataError("corrupt run store: experiment '" + id + "' references missing " + what + " '" +
                                p.string() + "'");
        };
        need(split_path(e.split_ref), "split");
        if (!e.archived) need(dataset_path(e.base_dataset), "dataset");
        for (const auto& b : e.batches) need(batch_path(b), "batch");
        if (e.status == ExperimentStatus::complete) {
            need(feature_path(e.id), "feature model");
            need(model_path(e.id), "classifier");
            need(report_path(e.id), "report");
        }
    }
}

// ---------------------------------------------------------------------------
// Workbench

Workbench::Workbench(const fs::path& store_root, std::optional<std::size_t> cache_capacity)
    : store_(RunStore::open(store_root)),
      cache_(cache_capacity.value_or(store_.cache_capacity()), [this](const std::string& line) { store_.journal(line); }) {}

Workbench::~Workbench() { jobs_.stop(); }

void Workbench::import_dataset(const std::string& name, const corpus::Dataset& dataset, bool main) {
    check_name(name, "dataset");
    std::lock_guard lock(mutex_);
    corpus::save_jsonl(dataset, store_.dataset_path(name).string());
    const bool is_main = main || store_.main_dataset().empty() || store_.main_dataset() == name;
    if (is_main && store_.main_dataset() != name) store_.set_main_dataset(name);
    cache_.put(name, std::make_shared<const corpus::Dataset>(name, dataset.messages()), is_main);
    store_.journal("import dataset " + name + " (" + std::to_string(dataset.size()) + " messages)");
}

std::shared_ptr<const corpus::Dataset> Workbench::dataset(const std::string& name) {
    std::lock_guard lock(mutex_);
    if (auto d = cache_.get(name)) return d;
    const auto path = store_.dataset_path(name);
    if (!fs::exists(path)) throw UsageError("unknown dataset '" + name + "'");
    auto d = std::make_shared<const corpus::Dataset>(corpus::load_dataset(path.string(), corpus::Format::jsonl));
    auto loaded = std::make_shared<const corpus::Dataset>(name, d->messages());
    cache_.put(name, loaded, name == store_.main_dataset());
    return loaded;
}

bool Workbench::has_dataset(const std::string& name) const {
    std::lock_guard lock(mutex_);
    return fs::exists(store_.dataset_path(name));
}

std::vector<CacheEntry> Workbench::list_datasets() const {
    std::lock_guard lock(mutex_);
    return cache_.list();
}

std::vector<std::string> Workbench::referencing_experiments(const std::string& dataset) const {
    std::vector<std::string> out;
    for (const auto& id : store_.experiment_ids()) {
        const auto e = experiment(id);
        if (e.archived) continue;
        if (e.base_dataset == dataset || std::count(e.batches.begin(), e.batches.end(), dataset)) out.push_back(id);
    }
    return out;
}

void Workbench::delete_dataset(const std::string& name, bool force) {
    std::lock_guard lock(mutex_);
    if (name == store_.main_dataset()) throw UsageError("the main dataset '" + name + "' cannot be deleted");
    const auto path = store_.dataset_path(name);
    if (!fs::exists(path)) throw UsageError("unknown dataset '" + name + "'");
    const auto users = referencing_experiments(name);
    if (!users.empty() && !force)
        throw UsageError("dataset '" + name + "' is used by experiment " + join(users, ", ") +
                         "; pass force to delete it anyway");
    cache_.erase(name);
    fs::remove(path);
    store_.journal("delete dataset " + name + (force ? " (forced)" : ""));
}

std::vector<std::string> Workbench::merge(const std::string& name, const std::string& base,
                                          const std::vector<std::string>& others) {
    const auto b = dataset(base);
    std::vector<corpus::Dataset> adds;
    for (const auto& o : others) {
        if (has_dataset(o)) {
            adds.push_back(*dataset(o));
        } else {
            adds.push_back(batch(o).dataset());
        }
    }
    auto merged = corpus::merge_datasets(*b, adds, name);
    import_dataset(name, merged.dataset);
    return merged.new_labels;
}

std::string Workbench::make_split(const std::string& dataset_name, double test_fraction, std::uint64_t seed,
                                  std::string name) {
    const auto d = dataset(dataset_name);
    if (name.empty()) name = dataset_name + "-split" + std::to_string(seed);
    check_name(name, "split");
    const auto s = corpus::stratified_split(*d, test_fraction, seed);
    std::lock_guard lock(mutex_);
    write_file(store_.split_path(name).string(), corpus::split_to_json(s));
    store_.journal("split " + dataset_name + " -> " + name + " fraction=" + format_double(test_fraction) +
                   " seed=" + std::to_string(seed));
    return name;
}

corpus::SplitAssignment Workbench::split(const std::string& ref) const {
    std::lock_guard lock(mutex_);
    const auto p = store_.split_path(ref);
    if (!fs::exists(p)) throw UsageError("unknown split '" + ref + "'");
    return corpus::split_from_json(read_file(p.string()));
}

std::vector<std::string> Workbench::test_ids(const std::string& split_ref) const {
    const auto s = split(split_ref);
    return {s.test_ids.begin(), s.test_ids.end()};
}

void Workbench::save_batch(const synthesis::SyntheticBatch& batch) {
    check_name(batch.run_id, "batch");
    std::lock_guard lock(mutex_);
    if (fs::exists(store_.batch_path(batch.run_id)))
        throw UsageError("batch '" + batch.run_id + "' already exists");
    batch.save(store_.batch_path(batch.run_id).string());
    cache_.put(batch.run_id, std::make_shared<const corpus::Dataset>(batch.dataset()));
    store_.journal("save batch " + batch.run_id + " (" + std::to_string(batch.size()) + " messages, label " +
                   batch.request.label + ")");
}

synthesis::SyntheticBatch Workbench::batch(const std::string& run_id) const {
    std::lock_guard lock(mutex_);
    const auto p = store_.batch_path(run_id);
    if (!fs::exists(p)) throw DataError("unknown batch '" + run_id + "'");
    return synthesis::SyntheticBatch::load(p.string());
}

std::vector<std::string> Workbench::batch_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(store_.root() / "batches")) {
        const auto n = e.path().filename().string();
        if (n.size() > 6 && n.compare(n.size() - 6, 6, ".jsonl") == 0) out.push_back(n.substr(0, n.size() - 6));
    }
    std::sort(out.begin(), out.end());
    return out;
}

void Workbench::write_experiment(const Experiment& e) const {
    write_file(store_.manifest_path(e.id).string(), e.to_json());
}

Experiment Workbench::create_experiment(const ExperimentSpec& spec, std::string* job_id) {
    spec.train_config.validate();
    const auto base = dataset(spec.base_dataset);
    const auto s = split(spec.split_ref);
    corpus::validate_split(*base, s);
    std::set<std::string> base_labels(base->labels().begin(), base->labels().end());
    std::vector<std::string> new_labels;
    for (const auto& b : spec.batches) {
        const auto batch_data = batch(b).dataset();
        for (const auto& l : batch_data.labels()) {
            if (!base_labels.count(l) && std::find(new_labels.begin(), new_labels.end(), l) == new_labels.end())
                new_labels.push_back(l);
        }
    }
    if (!spec.baseline.empty()) {
        const auto reference = experiment(spec.baseline);
        if (reference.test_fingerprint != s.test_fingerprint())
            throw DataError("baseline '" + spec.baseline + "' was evaluated on a different test set");
    }

    std::lock_guard lock(mutex_);
    char id[32];
    std::snprintf(id, sizeof(id), "exp-%04zu", store_.experiment_ids().size() + 1);
    Experiment e;
    e.id = id;
    e.name = spec.name.empty() ? e.id : spec.name;
    e.base_dataset = spec.base_dataset;
    e.split_ref = spec.split_ref;
    e.batches = spec.batches;
    e.baseline_ref = spec.baseline;
    e.notes = spec.notes;
    e.train_config = spec.train_config;
    e.tfidf_config = spec.tfidf_config;
    e.test_fingerprint = s.test_fingerprint();
    e.new_labels = new_labels;
    write_experiment(e);
    store_.journal("create experiment " + e.id + " base=" + e.base_dataset + " split=" + e.split_ref +
                   " batches=" + std::to_string(e.batches.size()));
    const auto jid = jobs_.submit(JobKind::train, [this, exp = e.id](JobContext& ctx) { run_training(exp, ctx); }, e.id);
    if (job_id) *job_id = jid;
    return e;
}

void Workbench::run_training(const std::string& exp_id, JobContext& ctx) {
    Experiment e = experiment(exp_id);
    {
        std::lock_guard lock(mutex_);
        e.status = ExperimentStatus::running;
        write_experiment(e);
    }
    try {
        const auto base = dataset(e.base_dataset);
        const auto s = split(e.split_ref);
        corpus::validate_split(*base, s);
        std::vector<corpus::Dataset> additions;
        for (const auto& b : e.batches) additions.push_back(batch(b).dataset());
        const auto train_base = base->subset(s.train_ids, base->name() + "/train");
        auto merged = corpus::merge_datasets(train_base, additions, e.id + "/train").dataset;
        const auto test = base->subset(s.test_ids, base->name() + "/test");

        const auto fingerprint = classifier::test_set_fingerprint(test);
        if (fingerprint != e.test_fingerprint || fingerprint != s.test_fingerprint())
            throw LeakageError("test set of experiment '" + e.id + "' changed since it was created");
        if (!e.baseline_ref.empty() && experiment(e.baseline_ref).test_fingerprint != fingerprint)
            throw LeakageError("test set of experiment '" + e.id + "' differs from its baseline");

        ctx.progress(0.02, "fitting features on " + std::to_string(merged.size()) + " training messages");
        std::vector<std::string> texts;
        for (const auto& m : merged.messages()) texts.push_back(m.text);
        const auto tfidf = features::fit_tfidf(texts, e.tfidf_config, e.id + "@" + s.test_fingerprint());
        ctx.progress(0.05, "vocabulary of " + std::to_string(tfidf.dim()) + " terms");

        auto model = classifier::train(merged, tfidf, e.train_config, [&](const classifier::ProgressEvent& ev) {
            ctx.progress(0.05 + 0.9 * ev.fraction,
                         "epoch " + std::to_string(ev.epoch) + "/" + std::to_string(ev.epochs) +
                             " loss " + format_double(ev.mean_loss));
        });
        auto report = classifier::evaluate(model, test, tfidf);
        report.model_ref = e.id;
        report.dataset_ref = e.base_dataset;
        ctx.progress(0.99, "recall " + format_double(report.overall_recall));

        std::lock_guard lock(mutex_);
        tfidf.save(store_.feature_path(e.id).string());
        model.save(store_.model_path(e.id).string());
        report.save(store_.report_path(e.id).string());
        e.feature_ref = e.id;
        e.model_ref = e.id;
        e.report_ref = e.id;
        e.train_size = merged.size();
        e.status = ExperimentStatus::complete;
        write_experiment(e);
        store_.journal("trained experiment " + e.id + " overall_recall=" + format_double(report.overall_recall));
        ctx.set_result(e.id);
    } catch (const std::exception& ex) {
        std::lock_guard lock(mutex_);
        e.status = ExperimentStatus::incomplete;
        e.error = ex.what();
        write_experiment(e);
        store_.journal("experiment " + e.id + " failed: " + ex.what());
        throw;
    }
}

Experiment Workbench::experiment(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto p = store_.manifest_path(id);
    if (!fs::exists(p)) throw UsageError("unknown experiment '" + id + "'");
    return Experiment::from_json(read_file(p.string()));
}

std::vector<Experiment> Workbench::experiments() const {
    std::lock_guard lock(mutex_);
    std::vector<Experiment> out;
    for (const auto& id : store_.experiment_ids()) out.push_back(experiment(id));
    return out;
}

classifier::EvalReport Workbench::report(const std::string& id) const {
    const auto e = experiment(id);
    if (e.status != ExperimentStatus::complete) throw UsageError("experiment '" + id + "' has no report yet");
    std::lock_guard lock(mutex_);
    return classifier::EvalReport::load(store_.report_path(e.report_ref).string());
}

features::TfidfModel Workbench::feature_model(const std::string& id) const {
    const auto e = experiment(id);
    if (e.status != ExperimentStatus::complete) throw UsageError("experiment '" + id + "' is not trained");
    std::lock_guard lock(mutex_);
    return features::TfidfModel::load(store_.feature_path(e.feature_ref).string());
}

classifier::ClassifierModel Workbench::model(const std::string& id) const {
    const auto e = experiment(id);
    if (e.status != ExperimentStatus::complete) throw UsageError("experiment '" + id + "' is not trained");
    std::lock_guard lock(mutex_);
    return classifier::ClassifierModel::load(store_.model_path(e.model_ref).string());
}

void Workbench::archive_experiment(const std::string& id) {
    std::lock_guard lock(mutex_);
    auto e = experiment(id);
    e.archived = true;
    write_experiment(e);
    store_.journal("archive experiment " + id);
}

Comparison Workbench::compare_experiments(const std::string& baseline, const std::vector<std::string>& ids) const {
    if (ids.empty()) throw UsageError("compare needs at least one experiment");
    Comparison c;
    c.baseline = baseline;
    const auto base = report(baseline);
    for (const auto& id : ids) c.columns.push_back(classifier::compare(report(id), base, experiment(id).name));
    c.markdown = classifier::delta_markdown(base, c.columns);
    c.csv = classifier::delta_csv(c.columns);
    return c;
}

namespace {

void tar_entry(std::string& out, const std::string& name, const std::string& content) {
    char header[512];
    std::memset(header, 0, sizeof(header));
    std::string prefix, base = name;
    if (name.size() > 99) {
        const auto cut = name.rfind('/', 154);
        if (cut == std::string::npos || name.size() - cut - 1 > 99)
            throw UsageError("archive path too long: " + name);
        prefix = name.substr(0, cut);
        base = name.substr(cut + 1);
    }
    std::memcpy(header, base.data(), base.size());
    std::snprintf(header + 100, 8, "%07o", 0644);
    std::snprintf(header + 108, 8, "%07o", 0);
    std::snprintf(header + 116, 8, "%07o", 0);
    std::snprintf(header + 124, 12, "%011llo", static_cast<unsigned long long>(content.size()));
    std::snprintf(header + 136, 12, "%011o", 0);
    std::memset(header + 148, ' ', 8);
    header[156] = '0';
    std::memcpy(header + 257, "ustar", 6);
    std::memcpy(header + 263, "00", 2);
    std::memcpy(header + 345, prefix.data(), prefix.size());
    unsigned sum = 0;
    for (unsigned char ch : header) sum += ch;
    std::snprintf(header + 148, 8, "%06o", sum);
    header[155] = ' ';
    out.append(header, sizeof(header));
    out += content;
    out.append((512 - content.size() % 512) % 512, '\0');
}

}  // namespace

void Workbench::export_experiment(const std::string& id, const fs::path& archive) const {
    const auto e = experiment(id);
    std::lock_guard lock(mutex_);
    std::vector<fs::path> files{store_.manifest_path(id), store_.split_path(e.split_ref)};
    if (fs::exists(store_.dataset_path(e.base_dataset))) files.push_back(store_.dataset_path(e.base_dataset));
    for (const auto& b : e.batches) {
        files.push_back(store_.batch_path(b));
        files.push_back(synthesis::manifest_path_for(store_.batch_path(b).string()));
    }
    if (e.status == ExperimentStatus::complete) {
        files.push_back(store_.feature_path(id));
        files.push_back(store_.model_path(id));
        files.push_back(store_.report_path(id));
    }
    std::string out;
    for (const auto& f : files)
        tar_entry(out, id + "/" + fs::relative(f, store_.root()).generic_string(), read_file(f.string()));
    out.append(1024, '\0');
    write_file(archive.string(), out);
    store_.journal("export experiment " + id + " -> " + archive.string());
}

// ---------------------------------------------------------------------------
// Pipeline steps

std::string ProjectionSpec::key() const {
    return method + ":" + std::to_string(dim_x) + ":" + std::to_string(dim_y) + ":" + std::to_string(components) +
           ":" + format_double(perplexity) + ":" + std::to_string(iterations) + ":" + std::to_string(seed);
}

projection::Embedding2D embed(const corpus::Dataset& dataset, const corpus::SplitAssignment& split,
                              const features::TfidfModel& features, const ProjectionSpec& spec) {
    const auto all = features::featurize(features, dataset);
    if (spec.method == "pca") {
        std::vector<std::string> train;
        for (const auto& m : dataset.messages()) {
            if (split.train_ids.count(m.id)) train.push_back(m.id);
        }
        const auto train_rows = features::featurize(features, dataset, train);
        const auto needed = std::max(spec.dim_x, spec.dim_y) + 1;
        const auto k = std::max<std::size_t>(
            std::max<std::size_t>(needed, 2),
            std::min({spec.components, features.dim(), train_rows.size() > 0 ? train_rows.size() - 1 : 0}));
        projection::PcaOptions opts;
        opts.seed = spec.seed ? spec.seed : opts.seed;
        const auto model = projection::fit_pca(train_rows, k, opts);
        return projection::project_pca(model, all, spec.dim_x, spec.dim_y);
    }
    if (spec.method == "tsne") {
        projection::TsneParams p;
        p.perplexity = spec.perplexity;
        p.iterations = spec.iterations;
        p.seed = spec.seed;
        return projection::fit_tsne(all, p);
    }
    throw UsageError("unknown projection method '" + spec.method + "' (pca or tsne)");
}

std::vector<heatmap::CorrectnessSample> correctness_samples(const classifier::EvalReport& report,
                                                            const projection::Embedding2D& embedding) {
    std::map<std::string, projection::Point2> where;
    for (std::size_t i = 0; i < embedding.size(); ++i) where[embedding.ids[i]] = embedding.points[i];
    std::vector<heatmap::CorrectnessSample> out;
    for (const auto& p : report.predictions) {
        const auto it = where.find(p.id);
        if (it == where.end()) throw DataError("test message '" + p.id + "' is missing from the projection");
        out.push_back({p.id, it->second, p.correct()});
    }
    if (out.empty()) throw DataError("report holds no predictions");
    return out;
}

}  // namespace igaiva::workbench
