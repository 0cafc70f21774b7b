#include <fstream>

#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"
#include "igaiva/workbench.hpp"
#include "support.hpp"

using namespace igaiva;
using namespace igaiva::workbench;
using nlohmann::json;

namespace {

corpus::Dataset corpus_of(std::size_t classes, std::size_t per_class, std::string name = "main") {
    corpus::TemplateCorpusConfig cfg;
    cfg.num_classes = classes;
    cfg.class_sizes = {per_class};
    cfg.name = std::move(name);
    return corpus::generate_template_corpus(cfg);
}

std::shared_ptr<const corpus::Dataset> tiny(const std::string& name, std::size_t n = 2) {
    std::vector<corpus::Message> ms;
    for (std::size_t i = 0; i < n; ++i) ms.push_back({name + std::to_string(i), "texto", "A"});
    return std::make_shared<const corpus::Dataset>(name, ms);
}

ExperimentSpec spec_for(const std::string& split, std::vector<std::string> batches = {}, std::string baseline = {}) {
    ExperimentSpec s;
    s.base_dataset = "main";
    s.split_ref = split;
    s.batches = std::move(batches);
    s.baseline = std::move(baseline);
    s.train_config.epochs = 10;
    return s;
}

synthesis::SyntheticBatch mock_batch(Workbench& wb, const std::string& split_ref, const std::string& label,
                                     const std::string& run_id, std::size_t n_examples) {
    const auto ds = wb.dataset("main");
    const auto s = wb.split(split_ref);
    synthesis::SynthesisRequest req;
    req.label = label;
    req.run_id = run_id;
    req.example_ids = synthesis::select_examples_random(*ds, s, label, n_examples, 1);
    return synthesis::synthesize(req, *ds, s, synthesis::MockGenerator(1));
}

}  // namespace

TEST_CASE("cache evicts the least recently used entry and pins main") {
    std::vector<std::string> log;
    DatasetCache cache(3, [&](const std::string& l) { log.push_back(l); });
    cache.put("main", tiny("main"), true);
    cache.put("a", tiny("a"));
    cache.put("b", tiny("b"));
    CHECK(cache.get("a"));
    const auto evicted = cache.put("c", tiny("c"));
    CHECK(evicted == std::vector<std::string>{"b"});
    CHECK(!cache.contains("b"));
    CHECK(cache.contains("main"));
    const auto list = cache.list();
    REQUIRE(list.size() == 3);
    CHECK(list[0].name == "c");
    CHECK(list[1].name == "a");
    CHECK(list[2].name == "main");
    CHECK(list[2].main);
    CHECK(cache.main_name() == "main");
    CHECK(cache.put("d", tiny("d")) == std::vector<std::string>{"a"});
    CHECK(cache.put("d", tiny("d", 5)).empty());
    CHECK(cache.size() == 3);
    CHECK_THROWS_AS(cache.erase("main"), UsageError);
    cache.erase("c");
    CHECK(!cache.contains("c"));
    CHECK(cache.get("zzz") == nullptr);
    CHECK(std::find(log.begin(), log.end(), "cache evict b") != log.end());
    CHECK_THROWS_AS(DatasetCache(1), UsageError);
}

TEST_CASE("property: cache never exceeds capacity and never drops main") {
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t cap = 2 + rng.uniform_index(6);
        DatasetCache cache(cap);
        cache.put("main", tiny("main"), true);
        std::vector<std::string> names;
        for (int op = 0; op < 100; ++op) {
            const auto name = "d" + std::to_string(rng.uniform_index(12));
            if (rng.uniform_index(3) == 0) {
                cache.get(name);
            } else {
                cache.put(name, tiny(name));
                names.push_back(name);
            }
            CHECK(cache.size() <= cap);
            CHECK(cache.contains("main"));
            if (!names.empty()) CHECK(cache.contains(names.back()));
        }
    }
}

TEST_CASE("cache entries report their origin mix") {
    CacheEntry e;
    e.collected = 3;
    CHECK(e.origin() == "collected");
    e.synthetic = 2;
    CHECK(e.origin() == "mixed");
    e.collected = 0;
    CHECK(e.origin() == "synthetic");
}

TEST_CASE("job queue runs jobs in order with a full event log") {
    JobQueue q;
    std::vector<int> order;
    const auto a = q.submit(JobKind::train, [&](JobContext& ctx) {
        order.push_back(1);
        ctx.progress(0.5, "half");
        ctx.progress(0.25, "late");
        ctx.set_result("r1");
    });
    const auto b = q.submit(JobKind::synthesize, [&](JobContext&) {
        order.push_back(2);
        throw DataError("boom");
    });
    CHECK(a == "job-0001");
    CHECK(q.status(a).state == JobState::queued);
    q.run_all();
    CHECK(order == std::vector<int>{1, 2});
    const auto ja = q.status(a);
    CHECK(ja.state == JobState::done);
    CHECK(ja.progress == 1.0);
    CHECK(ja.result == "r1");
    REQUIRE(ja.events.size() == 5);
    CHECK(ja.events[0].message == "queued");
    CHECK(ja.events[1].message == "running");
    CHECK(ja.events[3].fraction == 0.5);
    CHECK(ja.events[4].message == "done");
    for (std::size_t i = 0; i < ja.events.size(); ++i) CHECK(ja.events[i].seq == i);
    const auto jb = q.status(b);
    CHECK(jb.state == JobState::failed);
    CHECK(jb.error == "boom");
    CHECK(jb.events.back().message == "failed: boom");
    CHECK(q.list().size() == 2);
    CHECK_THROWS_AS(q.status("job-9999"), UsageError);
    CHECK(!q.run_next());
}

TEST_CASE("background executor serialises jobs and wakes waiters") {
    JobQueue q;
    q.start();
    std::atomic<int> running{0}, overlap{0};
    std::vector<std::string> ids;
    for (int i = 0; i < 5; ++i) {
        ids.push_back(q.submit(JobKind::train, [&](JobContext& ctx) {
            if (++running > 1) ++overlap;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            ctx.progress(0.5);
            --running;
        }));
    }
    for (const auto& id : ids) CHECK(q.wait(id).state == JobState::done);
    CHECK(overlap == 0);
    const auto events = q.wait_events(ids[0], 1, std::chrono::milliseconds(10));
    REQUIRE(!events.empty());
    CHECK(events.front().seq == 2);
    CHECK(events.back().message == "done");
    q.stop();
}

TEST_CASE("experiment manifests round-trip") {
    Experiment e;
    e.id = "exp-0003";
    e.name = "aug";
    e.base_dataset = "main";
    e.split_ref = "s";
    e.batches = {"b1", "b2"};
    e.train_config.epochs = 7;
    e.tfidf_config.tokenizer.stopwords = features::Stopwords::english;
    e.status = ExperimentStatus::incomplete;
    e.error = "x";
    e.new_labels = {"T9"};
    e.archived = true;
    CHECK(Experiment::from_json(e.to_json()) == e);
    CHECK(json::parse(e.to_json())["schema"] == "igaiva.experiment/1");
    CHECK_THROWS_AS(Experiment::from_json("{}"), DataError);
    CHECK_THROWS_AS(Experiment::from_json("not json"), DataError);
}

TEST_CASE("run store layout, hashing and corruption checks") {
    testutil::TempDir dir("store");
    const auto root = dir.path() / "s";
    CHECK_THROWS_AS(RunStore::open(root, false), DataError);
    auto s = RunStore::open(root);
    for (const char* d : {"datasets", "splits", "batches", "models", "reports", "runs"})
        CHECK(std::filesystem::is_directory(root / d));
    CHECK(s.cache_capacity() == 20);
    CHECK(s.dataset_path("x") == root / "datasets" / "x.jsonl");
    CHECK(s.manifest_path("exp-0001") == root / "runs" / "exp-0001" / "manifest.json");
    const auto h0 = s.hash();
    s.journal("hello");
    CHECK(s.hash() == h0);
    write_file((root / "splits" / "x.json").string(), "{}");
    CHECK(s.hash() != h0);

    write_file((root / "store.json").string(), "{broken");
    CHECK_THROWS_AS(RunStore::open(root), DataError);
    write_file((root / "store.json").string(), "{\"schema\":\"igaiva.store/1\",\"cache_capacity\":20,\"main_dataset\":\"gone\"}");
    CHECK_THROWS_AS(RunStore::open(root), DataError);
    write_file((root / "store.json").string(), "{\"schema\":\"igaiva.store/1\",\"cache_capacity\":20,\"main_dataset\":\"\"}");
    std::filesystem::create_directories(root / "runs" / "exp-0001");
    CHECK_THROWS_AS(RunStore::open(root), DataError);
    write_file((root / "runs" / "exp-0001" / "manifest.json").string(), "{\"schema\":\"igaiva.experiment/1\"}");
    CHECK_THROWS_AS(RunStore::open(root), DataError);
}

TEST_CASE("datasets: first import is main, deletes are guarded") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path());
    wb.import_dataset("main", corpus_of(3, 30));
    wb.import_dataset("extra", *tiny("extra"));
    CHECK(wb.store().main_dataset() == "main");
    CHECK(wb.has_dataset("extra"));
    CHECK(wb.dataset("extra")->size() == 2);
    CHECK_THROWS_AS(wb.dataset("nope"), UsageError);
    CHECK_THROWS_AS(wb.import_dataset("../evil", *tiny("x")), UsageError);
    CHECK_THROWS_AS(wb.import_dataset("", *tiny("x")), UsageError);
    CHECK_THROWS_AS(wb.delete_dataset("main"), UsageError);
    CHECK_THROWS_AS(wb.delete_dataset("ghost"), UsageError);
    wb.delete_dataset("extra");
    CHECK(!wb.has_dataset("extra"));
    const auto journal = read_file(wb.store().journal_path().string());
    CHECK(journal.find("import dataset main") != std::string::npos);
    CHECK(journal.find("delete dataset extra") != std::string::npos);
}

TEST_CASE("evicted datasets reload from disk") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path(), 2);
    wb.import_dataset("main", corpus_of(2, 10));
    wb.import_dataset("a", *tiny("a"));
    wb.import_dataset("b", *tiny("b"));
    const auto names = wb.list_datasets();
    CHECK(names.size() == 2);
    CHECK(wb.dataset("a")->size() == 2);
    CHECK(wb.has_dataset("b"));
}

TEST_CASE("experiment chain: baseline, augmented run, comparison and export") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path());
    wb.import_dataset("main", corpus_of(3, 60));
    const auto split_ref = wb.make_split("main", 0.2, 4);
    CHECK(split_ref == "main-split4");
    const auto fingerprint = wb.split(split_ref).test_fingerprint();
    CHECK(wb.test_ids(split_ref).size() == 36);

    std::string job;
    const auto base = wb.create_experiment(spec_for(split_ref), &job);
    CHECK(base.id == "exp-0001");
    CHECK(wb.experiment(base.id).status == ExperimentStatus::queued);
    wb.jobs().run_all();
    CHECK(wb.jobs().status(job).state == JobState::done);
    const auto done = wb.experiment(base.id);
    CHECK(done.status == ExperimentStatus::complete);
    CHECK(done.train_size == 144);
    CHECK(done.test_fingerprint == fingerprint);

    const auto batch = mock_batch(wb, split_ref, "T2", "run-1", 4);
    wb.save_batch(batch);
    CHECK_THROWS_AS(wb.save_batch(batch), UsageError);
    CHECK(wb.batch_ids() == std::vector<std::string>{"run-1"});
    CHECK(wb.batch("run-1").size() == batch.size());

    const auto aug = wb.create_experiment(spec_for(split_ref, {"run-1"}, base.id), &job);
    wb.jobs().run_all();
    const auto aug_done = wb.experiment(aug.id);
    CHECK(aug_done.status == ExperimentStatus::complete);
    CHECK(aug_done.train_size == 144 + batch.size());
    const auto report = wb.report(aug.id);
    CHECK(report.at("T2").train.synthetic == batch.size());
    CHECK(report.test_set_ref == fingerprint);
    CHECK(wb.model(aug.id).labels().size() == 3);
    CHECK(wb.feature_model(aug.id).vocabulary().fitted_on.rfind(aug.id, 0) == 0);

    const auto cmp = wb.compare_experiments(base.id, {aug.id});
    REQUIRE(cmp.columns.size() == 1);
    CHECK(cmp.columns[0].at("T2").train_delta() == static_cast<long long>(batch.size()));
    CHECK(cmp.markdown.find("| Overall | 36 | 144 |") != std::string::npos);
    CHECK(cmp.csv.rfind("column,label", 0) == 0);
    CHECK_THROWS_AS(wb.compare_experiments(base.id, {}), UsageError);

    const auto tar = dir / "exp.tar";
    wb.export_experiment(aug.id, tar);
    const auto bytes = read_file(tar);
    CHECK(bytes.size() % 512 == 0);
    CHECK(bytes.compare(257, 5, "ustar") == 0);
    CHECK(bytes.substr(0, 28) == "exp-0002/runs/exp-0002/manif");
    unsigned sum = 0;
    for (std::size_t i = 0; i < 512; ++i) sum += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(bytes[i]);
    CHECK(std::stoul(bytes.substr(148, 6), nullptr, 8) == sum);
    CHECK(bytes.find("batches/run-1.manifest.json") != std::string::npos);
    wb.export_experiment(aug.id, dir / "again.tar");
    CHECK(read_file(dir / "again.tar") == bytes);

    CHECK_THROWS_AS(wb.delete_dataset("run-1"), UsageError);
    wb.archive_experiment(aug.id);
    CHECK(wb.experiment(aug.id).archived);
    CHECK_NOTHROW(RunStore::open(dir.path()));
}

TEST_CASE("training refuses a test set that changed after creation") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path());
    wb.import_dataset("main", corpus_of(3, 40));
    const auto split_ref = wb.make_split("main", 0.2, 1);
    std::string job;
    const auto e = wb.create_experiment(spec_for(split_ref), &job);
    wb.make_split("main", 0.2, 2, split_ref);
    wb.jobs().run_all();
    const auto j = wb.jobs().status(job);
    CHECK(j.state == JobState::failed);
    CHECK(j.error.find("test set") != std::string::npos);
    const auto after = wb.experiment(e.id);
    CHECK(after.status == ExperimentStatus::incomplete);
    CHECK(!after.error.empty());
    CHECK_THROWS_AS(wb.report(e.id), UsageError);
}

TEST_CASE("experiment creation validates its references") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path());
    wb.import_dataset("main", corpus_of(3, 40));
    const auto s1 = wb.make_split("main", 0.2, 1);
    const auto s2 = wb.make_split("main", 0.2, 2);
    CHECK_THROWS_AS(wb.create_experiment(spec_for("missing")), UsageError);
    CHECK_THROWS_AS(wb.create_experiment(spec_for(s1, {"no-batch"})), DataError);
    const auto base = wb.create_experiment(spec_for(s1));
    wb.jobs().run_all();
    CHECK_THROWS_AS(wb.create_experiment(spec_for(s2, {}, base.id)), DataError);
    CHECK_THROWS_AS(wb.create_experiment(spec_for(s1, {}, "exp-0099")), UsageError);
    auto bad = spec_for(s1);
    bad.train_config.epochs = 0;
    CHECK_THROWS_AS(wb.create_experiment(bad), UsageError);
}

TEST_CASE("merge combines datasets and batches") {
    testutil::TempDir dir("wb");
    Workbench wb(dir.path());
    wb.import_dataset("main", corpus_of(3, 30));
    const auto split_ref = wb.make_split("main", 0.2, 1);
    wb.save_batch(mock_batch(wb, split_ref, "T1", "b1", 2));
    corpus::Dataset other("o", {{"o1", "texto nuevo", "T9"}});
    wb.import_dataset("other", other);
    const auto labels = wb.merge("merged", "main", {"b1", "other"});
    CHECK(labels == std::vector<std::string>{"T9"});
    const auto merged = wb.dataset("merged");
    CHECK(merged->size() == 90 + 10 + 1);
    CHECK(merged->count(corpus::Origin::synthetic) == 10);
    CHECK_THROWS_AS(wb.merge("m2", "main", {"ghost"}), DataError);
}

TEST_CASE("embedding helpers") {
    const auto ds = corpus_of(3, 40);
    const auto split = corpus::stratified_split(ds, 0.2, 1);
    const auto tfidf = features::fit_tfidf(ds, split);
    ProjectionSpec spec;
    const auto pca = embed(ds, split, tfidf, spec);
    CHECK(pca.size() == ds.size());
    CHECK(pca.method.describe() == "pca(0,1)");
    spec.dim_x = 3;
    spec.dim_y = 2;
    CHECK(embed(ds, split, tfidf, spec).method.describe() == "pca(3,2)");
    spec.method = "tsne";
    spec.iterations = 250;
    spec.perplexity = 10;
    const auto ts = embed(ds, split, tfidf, spec);
    CHECK(ts.tsne);
    spec.method = "umap";
    CHECK_THROWS_AS(embed(ds, split, tfidf, spec), UsageError);
    CHECK(ProjectionSpec{}.key() == "pca:0:1:20:30:1000:0");

    classifier::EvalReport r;
    r.predictions = {{ds.messages()[0].id, "T1", "T1"}, {ds.messages()[1].id, "T1", "T2"}};
    const auto samples = correctness_samples(r, pca);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].correct);
    CHECK(!samples[1].correct);
    CHECK(samples[1].point == pca.points[1]);
    r.predictions.push_back({"ghost", "T1", "T1"});
    CHECK_THROWS_AS(correctness_samples(r, pca), DataError);
}
