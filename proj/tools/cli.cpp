#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "igaiva/classifier.hpp"
#include "igaiva/corpus.hpp"
#include "igaiva/error.hpp"
#include "igaiva/features.hpp"
#include "igaiva/heatmap.hpp"
#include "igaiva/projection.hpp"
#include "igaiva/service.hpp"
#include "igaiva/svg.hpp"
#include "igaiva/synthesis.hpp"
#include "igaiva/tagtreemap.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"
#include "igaiva/workbench.hpp"

namespace fs = std::filesystem;

namespace igaiva::cli {

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::generator: return 4;
        case ErrorKind::internal: return 1;
    }
    return 1;
}

corpus::SplitAssignment load_split(const std::string& path) { return corpus::split_from_json(read_file(path)); }

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
    } else {
        write_file(path, content);
    }
}

/// Collected training messages of the split plus every synthetic message.
corpus::Dataset training_set(const corpus::Dataset& data, const corpus::SplitAssignment& split) {
    corpus::validate_split(data, split);
    std::set<std::string> ids = split.train_ids;
    for (const auto& m : data.messages()) {
        if (m.origin == corpus::Origin::synthetic) ids.insert(m.id);
    }
    return data.subset(ids, data.name() + "/train");
}

corpus::Dataset test_set(const corpus::Dataset& data, const corpus::SplitAssignment& split) {
    corpus::validate_split(data, split);
    return data.subset(split.test_ids, data.name() + "/test");
}

std::vector<double> parse_numbers(const std::string& text, char sep, std::size_t expected, const char* what) {
    std::vector<double> out;
    for (const auto& part : split(text, sep)) {
        const auto t = trim(part);
        if (t.empty()) continue;
        char* end = nullptr;
        const double v = std::strtod(t.c_str(), &end);
        if (end != t.c_str() + t.size()) throw UsageError(std::string("bad number in ") + what + ": '" + t + "'");
        out.push_back(v);
    }
    if (expected && out.size() != expected)
        throw UsageError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated numbers");
    return out;
}

struct TokenizerFlags {
    std::string stopwords = "es+en";
    std::size_t min_token_length = 2;

    void add(CLI::App* app) {
        app->add_option("--stopwords", stopwords, "none, es, en or es+en")->capture_default_str();
        app->add_option("--min-token-length", min_token_length)->capture_default_str();
    }
    features::TokenizerConfig config() const {
        features::TokenizerConfig t;
        t.stopwords = features::parse_stopwords(stopwords);
        t.min_token_length = min_token_length;
        return t;
    }
};

std::vector<svg::ScatterPoint> scatter_points(const projection::Embedding2D& emb, const corpus::Dataset& data,
                                             const corpus::SplitAssignment* split,
                                             const classifier::EvalReport* report, const std::string& focus) {
    std::map<std::string, bool> verdict;
    if (report) {
        for (const auto& p : report->predictions) verdict[p.id] = p.correct();
    }
    std::vector<svg::ScatterPoint> out;
    for (std::size_t i = 0; i < emb.size(); ++i) {
        const auto& id = emb.ids[i];
        svg::Role role = svg::Role::other;
        const bool in_focus = focus.empty() || (data.contains(id) && data.at(id).label == focus);
        if (in_focus) {
            const auto v = verdict.find(id);
            if (v != verdict.end()) {
                role = v->second ? svg::Role::test_correct : svg::Role::test_incorrect;
            } else if (split && split->test_ids.count(id)) {
                role = svg::Role::test_correct;
            } else if (!split || split->train_ids.count(id) || data.contains(id)) {
                role = svg::Role::train;
            }
        }
        out.push_back({emb.points[i], role});
    }
    return out;
}

std::sig_atomic_t volatile g_stop = 0;

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Visual error analysis and targeted data synthesis for text classifiers"};
    app.require_subcommand(1);
    std::string store_path = std::getenv("IGAIVA_STORE") ? std::getenv("IGAIVA_STORE") : "igaiva-store";
    app.add_option("--store", store_path, "run store directory (journal, experiments)")->capture_default_str();

    std::map<std::string, std::uint64_t> seeds;
    std::function<void()> action;

    // gen-corpus ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-corpus", "write the deterministic template corpus");
    struct {
        std::uint64_t seed = 7;
        std::size_t classes = 5;
        std::vector<std::size_t> sizes{250};
        bool reference_sizes = false;
        std::string downsample;
        std::string out;
    } g;
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_option("--classes", g.classes, "number of classes (2-15)")->capture_default_str();
    auto* sizes_opt = gen->add_option("--sizes", g.sizes, "messages per class (one value or one per class)")->delimiter(',');
    gen->add_flag("--reference-sizes", g.reference_sizes, "fifteen classes with the 39,100-message class sizes")->excludes(sizes_opt);
    gen->add_option("--downsample", g.downsample, "LABEL:COUNT shrinks one class");
    gen->add_option("-o,--output", g.out, "output JSONL (default stdout)");
    gen->callback([&] {
        action = [&] {
            seeds["seed"] = g.seed;
            corpus::TemplateCorpusConfig cfg;
            cfg.seed = g.seed;
            cfg.num_classes = g.reference_sizes ? 15 : g.classes;
            cfg.class_sizes = g.reference_sizes ? corpus::reference_class_sizes() : g.sizes;
            if (!g.downsample.empty()) {
                const auto colon = g.downsample.rfind(':');
                if (colon == std::string::npos) throw UsageError("--downsample expects LABEL:COUNT");
                cfg.downsample = std::make_pair(g.downsample.substr(0, colon),
                                                static_cast<std::size_t>(std::stoul(g.downsample.substr(colon + 1))));
            }
            if (!g.out.empty()) cfg.name = fs::path(g.out).stem().string();
            emit(g.out, corpus::to_jsonl(corpus::generate_template_corpus(cfg)));
        };
    });

    // split -----------------------------------------------------------------
    auto* sp = app.add_subcommand("split", "stratified train/test split");
    struct {
        std::string data, out;
        double fraction = 0.2;
        std::uint64_t seed = 1;
        std::string downsample;
        std::string data_out;
    } s;
    sp->add_option("--data", s.data)->required();
    sp->add_option("--fraction", s.fraction, "test fraction")->capture_default_str();
    sp->add_option("--seed", s.seed)->capture_default_str();
    sp->add_option("--downsample-train", s.downsample, "LABEL:COUNT keeps only COUNT training messages of LABEL");
    sp->add_option("--data-out", s.data_out, "dataset after down-sampling (required with --downsample-train)");
    sp->add_option("-o,--output", s.out)->required();
    sp->callback([&] {
        action = [&] {
            seeds["seed"] = s.seed;
            auto data = corpus::load_dataset(s.data);
            auto split = corpus::stratified_split(data, s.fraction, s.seed);
            if (!s.downsample.empty()) {
                if (s.data_out.empty()) throw UsageError("--downsample-train needs --data-out");
                const auto colon = s.downsample.rfind(':');
                if (colon == std::string::npos) throw UsageError("--downsample-train expects LABEL:COUNT");
                auto [d, sa] = corpus::downsample_training_class(
                    data, split, s.downsample.substr(0, colon),
                    static_cast<std::size_t>(std::stoul(s.downsample.substr(colon + 1))), s.seed);
                corpus::save_jsonl(d, s.data_out);
                split = sa;
            }
            emit(s.out, corpus::split_to_json(split));
            std::cerr << "train " << split.train_ids.size() << ", test " << split.test_ids.size() << "\n";
        };
    });

    // featurize -------------------------------------------------------------
    auto* fz = app.add_subcommand("featurize", "fit TF-IDF on the training split");
    struct {
        std::string data, split, out;
        std::size_t min_df = 1, max_features = 30000;
        TokenizerFlags tok;
    } f;
    fz->add_option("--data", f.data)->required();
    fz->add_option("--split", f.split)->required();
    fz->add_option("--min-df", f.min_df)->capture_default_str();
    fz->add_option("--max-features", f.max_features)->capture_default_str();
    f.tok.add(fz);
    fz->add_option("-o,--output", f.out)->required();
    fz->callback([&] {
        action = [&] {
            const auto data = corpus::load_dataset(f.data);
            const auto split = load_split(f.split);
            features::TfidfConfig cfg{f.min_df, f.max_features, f.tok.config()};
            const auto train = training_set(data, split);
            std::vector<std::string> texts;
            for (const auto& m : train.messages()) texts.push_back(m.text);
            const auto model = features::fit_tfidf(texts, cfg, data.name() + "@" + split.test_fingerprint());
            emit(f.out, model.serialize());
            std::cerr << "vocabulary " << model.dim() << " terms from " << texts.size() << " messages\n";
        };
    });

    // project ---------------------------------------------------------------
    auto* pj = app.add_subcommand("project", "2-D projection (PCA axes or t-SNE)");
    struct {
        std::string data, split, features, method = "pca", out, svg, report, label;
        std::size_t dim_x = 0, dim_y = 1, components = 20;
        double perplexity = 30.0;
        int iterations = 1000;
        std::uint64_t seed = 0;
    } p;
    pj->add_option("--data", p.data)->required();
    pj->add_option("--split", p.split)->required();
    pj->add_option("--features", p.features)->required();
    pj->add_option("--method", p.method)->check(CLI::IsMember({"pca", "tsne"}))->capture_default_str();
    pj->add_option("--dim-x", p.dim_x)->capture_default_str();
    pj->add_option("--dim-y", p.dim_y)->capture_default_str();
    pj->add_option("--components", p.components)->capture_default_str();
    pj->add_option("--perplexity", p.perplexity)->capture_default_str();
    pj->add_option("--iterations", p.iterations)->capture_default_str();
    pj->add_option("--seed", p.seed)->capture_default_str();
    pj->add_option("--report", p.report, "colour test points by this report's verdicts");
    pj->add_option("--label", p.label, "highlight one class; others are grey");
    pj->add_option("--svg", p.svg, "also write a scatter plot");
    pj->add_option("-o,--output", p.out, "embedding CSV")->required();
    pj->callback([&] {
        action = [&] {
            seeds["seed"] = p.seed;
            const auto data = corpus::load_dataset(p.data);
            const auto split = load_split(p.split);
            const auto model = features::TfidfModel::load(p.features);
            workbench::ProjectionSpec spec;
            spec.method = p.method;
            spec.dim_x = p.dim_x;
            spec.dim_y = p.dim_y;
            spec.components = p.components;
            spec.perplexity = p.perplexity;
            spec.iterations = p.iterations;
            spec.seed = p.seed;
            const auto emb = workbench::embed(data, split, model, spec);
            emit(p.out, projection::embedding_to_csv(emb));
            if (!p.svg.empty()) {
                std::optional<classifier::EvalReport> report;
                if (!p.report.empty()) report = classifier::EvalReport::load(p.report);
                const auto pts = scatter_points(emb, data, &split, report ? &*report : nullptr, p.label);
                svg::Canvas canvas;
                canvas.title = emb.method.describe();
                write_file(p.svg, svg::scatter(pts, canvas));
            }
        };
    });

    // heatmap ---------------------------------------------------------------
    auto* hm = app.add_subcommand("heatmap", "kernel-regression error field of test verdicts");
    struct {
        std::string embedding, report, out, svg;
        std::size_t grid = 64;
        double epsilon = heatmap::kDefaultEpsilon;
    } h;
    hm->add_option("--embedding", h.embedding)->required();
    hm->add_option("--report", h.report)->required();
    hm->add_option("--grid", h.grid)->capture_default_str();
    hm->add_option("--epsilon", h.epsilon)->capture_default_str();
    hm->add_option("--svg", h.svg, "also write the raster with confidence alpha");
    hm->add_option("-o,--output", h.out)->required();
    hm->callback([&] {
        action = [&] {
            const auto emb = projection::embedding_from_csv(read_file(h.embedding));
            const auto report = classifier::EvalReport::load(h.report);
            const auto samples = workbench::correctness_samples(report, emb);
            const auto field = heatmap::rbf_error_field(samples, h.grid, h.grid, h.epsilon);
            emit(h.out, field.serialize());
            if (!h.svg.empty()) {
                std::vector<svg::ScatterPoint> pts;
                for (const auto& smp : samples)
                    pts.push_back({smp.point, smp.correct ? svg::Role::test_correct : svg::Role::test_incorrect});
                svg::Canvas canvas;
                canvas.title = "error field, epsilon " + format_double(h.epsilon);
                write_file(h.svg, svg::heatmap(field, pts, canvas));
            }
        };
    });

    // tagmap ----------------------------------------------------------------
    auto* tm = app.add_subcommand("tagmap", "keyword treemap of message groups");
    struct {
        std::string data, split, report, group = "label", subset = "train", label, out, svg;
        std::size_t top_k = 10;
        TokenizerFlags tok;
    } t;
    tm->add_option("--data", t.data)->required();
    tm->add_option("--split", t.split);
    tm->add_option("--report", t.report, "needed for --group outcome");
    tm->add_option("--group", t.group)->check(CLI::IsMember({"label", "outcome"}))->capture_default_str();
    tm->add_option("--subset", t.subset)->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
    tm->add_option("--label", t.label, "restrict outcome groups to one true class");
    tm->add_option("--top-k", t.top_k)->capture_default_str();
    t.tok.add(tm);
    tm->add_option("--svg", t.svg);
    tm->add_option("-o,--output", t.out)->required();
    tm->callback([&] {
        action = [&] {
            const auto data = corpus::load_dataset(t.data);
            std::optional<corpus::SplitAssignment> split;
            if (!t.split.empty()) split = load_split(t.split);
            if (t.subset != "all" && !split) throw UsageError("--subset " + t.subset + " needs --split");
            std::vector<tagtreemap::Group> groups;
            if (t.group == "label") {
                std::map<std::string, std::size_t> index;
                for (const auto& m : data.messages()) {
                    if (t.subset == "train" && !split->train_ids.count(m.id)) continue;
                    if (t.subset == "test" && !split->test_ids.count(m.id)) continue;
                    auto [it, fresh] = index.emplace(m.label, groups.size());
                    if (fresh) groups.push_back({m.label, {}});
                    groups[it->second].messages.push_back(m);
                }
            } else {
                if (t.report.empty()) throw UsageError("--group outcome needs --report");
                const auto report = classifier::EvalReport::load(t.report);
                groups = {{"correct", {}}, {"incorrect", {}}};
                for (const auto& pr : report.predictions) {
                    if (!t.label.empty() && pr.truth != t.label) continue;
                    groups[pr.correct() ? 0 : 1].messages.push_back(data.at(pr.id));
                }
            }
            const auto layout = tagtreemap::build_tag_treemap(groups, t.top_k, {0, 0, 1, 1}, t.tok.config());
            emit(t.out, layout.to_json());
            if (!t.svg.empty()) write_file(t.svg, svg::treemap(layout));
        };
    });

    // train -----------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train the linear classifier");
    struct {
        std::string data, split, features, features_out, out;
        classifier::TrainConfig cfg;
        std::size_t min_df = 1, max_features = 30000;
        TokenizerFlags tok;
        bool quiet = false;
    } r;
    tr->add_option("--data", r.data, "dataset; synthetic messages in it are training data")->required();
    tr->add_option("--split", r.split)->required();
    auto* feat_in = tr->add_option("--features", r.features, "reuse a fitted TF-IDF model");
    tr->add_option("--features-out", r.features_out, "where to write the TF-IDF model fitted on the training data")
        ->excludes(feat_in);
    tr->add_option("--epochs", r.cfg.epochs)->capture_default_str();
    tr->add_option("--learning-rate", r.cfg.learning_rate)->capture_default_str();
    tr->add_option("--l2", r.cfg.l2)->capture_default_str();
    tr->add_option("--batch-size", r.cfg.batch_size)->capture_default_str();
    tr->add_option("--seed", r.cfg.seed)->capture_default_str();
    tr->add_option("--min-df", r.min_df)->capture_default_str();
    tr->add_option("--max-features", r.max_features)->capture_default_str();
    r.tok.add(tr);
    tr->add_flag("-q,--quiet", r.quiet);
    tr->add_option("-o,--output", r.out)->required();
    tr->callback([&] {
        action = [&] {
            seeds["seed"] = r.cfg.seed;
            if (r.features.empty() && r.features_out.empty())
                throw UsageError("train needs --features (reuse) or --features-out (fit)");
            const auto data = corpus::load_dataset(r.data);
            const auto split = load_split(r.split);
            const auto train = training_set(data, split);
            features::TfidfModel tfidf;
            if (!r.features.empty()) {
                tfidf = features::TfidfModel::load(r.features);
            } else {
                std::vector<std::string> texts;
                for (const auto& m : train.messages()) texts.push_back(m.text);
                tfidf = features::fit_tfidf(texts, {r.min_df, r.max_features, r.tok.config()},
                                            data.name() + "@" + split.test_fingerprint());
                tfidf.save(r.features_out);
            }
            const auto model = classifier::train(train, tfidf, r.cfg, [&](const classifier::ProgressEvent& ev) {
                if (!r.quiet)
                    std::cerr << "epoch " << ev.epoch << "/" << ev.epochs << " loss " << format_double(ev.mean_loss)
                              << "\n";
            });
            model.save(r.out);
        };
    });

    // eval ------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a classifier on the test split");
    struct {
        std::string data, split, model, features, out;
        bool markdown = false;
    } e;
    ev->add_option("--data", e.data)->required();
    ev->add_option("--split", e.split)->required();
    ev->add_option("--model", e.model)->required();
    ev->add_option("--features", e.features)->required();
    ev->add_flag("--markdown", e.markdown, "print the per-class table");
    ev->add_option("-o,--output", e.out, "report JSON")->required();
    ev->callback([&] {
        action = [&] {
            const auto data = corpus::load_dataset(e.data);
            const auto split = load_split(e.split);
            const auto test = test_set(data, split);
            const auto model = classifier::ClassifierModel::load(e.model);
            const auto tfidf = features::TfidfModel::load(e.features);
            auto report = classifier::evaluate(model, test, tfidf);
            if (report.test_set_ref != split.test_fingerprint())
                throw LeakageError("evaluated test set does not match the split");
            report.model_ref = fs::path(e.model).filename().string();
            report.dataset_ref = data.name();
            report.save(e.out);
            std::cout << (e.markdown ? report.to_markdown() : report.to_csv());
        };
    });

    // select ----------------------------------------------------------------
    auto* sl = app.add_subcommand("select", "choose training examples for synthesis");
    struct {
        std::string data, split, label, embedding, rect, halfplane, polygon, keywords, out;
        bool random = false;
        std::size_t n = 50;
        std::uint64_t seed = 1;
    } q;
    sl->add_option("--data", q.data)->required();
    sl->add_option("--split", q.split)->required();
    sl->add_option("--class", q.label, "target class");
    sl->add_option("--embedding", q.embedding, "projection CSV for region selection");
    auto* o_rect = sl->add_option("--rect", q.rect, "x_min,y_min,x_max,y_max");
    auto* o_half = sl->add_option("--halfplane", q.halfplane, "a,b,c[,a|b]: side of a*x+b*y=c");
    auto* o_poly = sl->add_option("--polygon", q.polygon, "x1,y1;x2,y2;...");
    auto* o_kw = sl->add_option("--keywords", q.keywords, "comma-separated terms");
    auto* o_rand = sl->add_flag("--random", q.random, "uniform random examples");
    sl->add_option("--n", q.n, "examples for --random")->capture_default_str();
    sl->add_option("--seed", q.seed)->capture_default_str();
    sl->add_option("-o,--output", q.out, "selected ids, one per line");
    o_rect->excludes(o_half, o_poly, o_kw, o_rand);
    o_half->excludes(o_poly, o_kw, o_rand);
    o_poly->excludes(o_kw, o_rand);
    o_kw->excludes(o_rand);
    sl->callback([&] {
        action = [&] {
            const auto data = corpus::load_dataset(q.data);
            const auto split = load_split(q.split);
            corpus::validate_split(data, split);
            std::vector<std::string> ids;
            if (q.random) {
                seeds["seed"] = q.seed;
                if (q.label.empty()) throw UsageError("--random needs --class");
                ids = synthesis::select_examples_random(data, split, q.label, q.n, q.seed);
            } else if (!q.keywords.empty()) {
                if (q.label.empty()) throw UsageError("--keywords needs --class");
                auto terms = igaiva::split(q.keywords, ',');
                ids = synthesis::select_examples_by_keywords(data, split, q.label, terms);
            } else if (!q.rect.empty() || !q.halfplane.empty() || !q.polygon.empty()) {
                if (q.embedding.empty()) throw UsageError("region selection needs --embedding");
                heatmap::Region region;
                if (!q.rect.empty()) {
                    const auto v = parse_numbers(q.rect, ',', 4, "--rect");
                    region = heatmap::Rectangle{v[0], v[1], v[2], v[3]};
                } else if (!q.halfplane.empty()) {
                    auto parts = igaiva::split(q.halfplane, ',');
                    heatmap::Side side = heatmap::Side::a;
                    if (parts.size() == 4) {
                        const auto sname = trim(parts.back());
                        if (sname != "a" && sname != "b") throw UsageError("half-plane side must be a or b");
                        side = sname == "a" ? heatmap::Side::a : heatmap::Side::b;
                        parts.pop_back();
                    }
                    const auto v = parse_numbers(join(parts, ","), ',', 3, "--halfplane");
                    region = heatmap::HalfPlane{heatmap::DivisionLine::general(v[0], v[1], v[2]), side};
                } else {
                    heatmap::Polygon poly;
                    for (const auto& pair : igaiva::split(q.polygon, ';')) {
                        if (trim(pair).empty()) continue;
                        const auto v = parse_numbers(pair, ',', 2, "--polygon vertex");
                        poly.vertices.push_back({v[0], v[1]});
                    }
                    region = poly;
                }
                const auto emb = projection::embedding_from_csv(read_file(q.embedding));
                std::optional<std::string> filter;
                if (!q.label.empty()) filter = q.label;
                ids = synthesis::select_examples_in_region(data, split, emb, region, filter);
            } else {
                throw UsageError("choose one of --rect, --halfplane, --polygon, --keywords, --random");
            }
            if (ids.empty()) std::cerr << "warning: empty selection\n";
            std::string out;
            for (const auto& id : ids) out += id + "\n";
            emit(q.out, out);
            std::cerr << ids.size() << " examples selected\n";
        };
    });

    // synth -----------------------------------------------------------------
    auto* sy = app.add_subcommand("synth", "generate synthetic messages from selected examples");
    struct {
        std::string data, split, selection, label, run_id, out;
        bool mock = false, remote = false;
        std::uint64_t seed = 1;
        synthesis::GenerationParams params;
    } y;
    sy->add_option("--data", y.data)->required();
    sy->add_option("--split", y.split)->required();
    sy->add_option("--selection", y.selection, "file of example ids (one per line)")->required();
    sy->add_option("--class", y.label, "label of the generated messages (default: the examples' class)");
    sy->add_option("--run-id", y.run_id, "namespace of generated ids (default: output file stem)");
    auto* o_mock = sy->add_flag("--mock", y.mock, "offline deterministic generator");
    sy->add_flag("--remote", y.remote, "chat-completion endpoint from IGAIVA_LLM_* variables")->excludes(o_mock);
    sy->add_option("--seed", y.seed, "mock generator seed")->capture_default_str();
    sy->add_option("-k", y.params.k, "variants per example")->capture_default_str();
    sy->add_option("--temperature", y.params.temperature)->capture_default_str();
    sy->add_option("--max-tokens", y.params.max_tokens)->capture_default_str();
    sy->add_option("--top-p", y.params.top_p)->capture_default_str();
    sy->add_option("--frequency-penalty", y.params.frequency_penalty)->capture_default_str();
    sy->add_option("--presence-penalty", y.params.presence_penalty)->capture_default_str();
    sy->add_option("-o,--output", y.out, "batch JSONL (a manifest is written next to it)")->required();
    sy->callback([&] {
        action = [&] {
            if (!y.mock && !y.remote) throw UsageError("choose --mock or --remote");
            seeds["seed"] = y.seed;
            const auto data = corpus::load_dataset(y.data);
            const auto split = load_split(y.split);
            synthesis::SynthesisRequest req;
            for (const auto& line : igaiva::split(read_file(y.selection), '\n')) {
                const auto id = trim(line);
                if (!id.empty()) req.example_ids.push_back(id);
            }
            if (req.example_ids.empty()) throw UsageError("selection file is empty");
            req.label = y.label;
            if (req.label.empty()) {
                std::set<std::string> labels;
                for (const auto& id : req.example_ids) {
                    if (!data.contains(id)) throw DataError("example '" + id + "' is not in the dataset");
                    labels.insert(data.at(id).label);
                }
                if (labels.size() != 1) throw UsageError("examples span several classes; pass --class");
                req.label = *labels.begin();
            }
            req.params = y.params;
            req.run_id = y.run_id.empty() ? fs::path(y.out).stem().string() : y.run_id;
            std::unique_ptr<synthesis::Generator> generator;
            if (y.mock) {
                generator = std::make_unique<synthesis::MockGenerator>(y.seed);
                req.generator = "mock";
            } else {
                generator = std::make_unique<synthesis::ChatCompletionGenerator>(synthesis::RemoteConfig::from_env());
                req.generator = "remote";
            }
            const auto batch = synthesis::synthesize(req, data, split, *generator);
            batch.save(y.out);
            for (const auto& rj : batch.rejected)
                std::cerr << "dropped (" << rj.reason << ") from " << rj.example_id
                          << (rj.text.empty() ? "" : ": " + rj.text) << "\n";
            std::cerr << batch.size() << " synthetic messages for " << req.label << "\n";
        };
    });

    // merge -----------------------------------------------------------------
    auto* mg = app.add_subcommand("merge", "merge synthetic batches into a dataset");
    struct {
        std::string base, out;
        std::vector<std::string> add;
    } m;
    mg->add_option("--base", m.base)->required();
    mg->add_option("--add", m.add, "batch or dataset files")->required();
    mg->add_option("-o,--output", m.out)->required();
    mg->callback([&] {
        action = [&] {
            const auto base = corpus::load_dataset(m.base);
            std::vector<corpus::Dataset> adds;
            for (const auto& a : m.add) adds.push_back(corpus::load_dataset(a));
            const auto merged = corpus::merge_datasets(base, adds, fs::path(m.out).stem().string());
            for (const auto& l : merged.new_labels) std::cerr << "warning: new label '" << l << "'\n";
            corpus::save_jsonl(merged.dataset, m.out);
            std::cerr << merged.dataset.size() << " messages\n";
        };
    });

    // compare ---------------------------------------------------------------
    auto* cp = app.add_subcommand("compare", "per-class recall deltas against a baseline report");
    struct {
        std::vector<std::string> reports;
        bool markdown = false;
        std::string out;
    } c;
    cp->add_option("reports", c.reports, "baseline report followed by one or more reports")->required()->expected(2, -1);
    cp->add_flag("--markdown", c.markdown, "table with the overall row first");
    cp->add_option("-o,--output", c.out);
    cp->callback([&] {
        action = [&] {
            const auto base = classifier::EvalReport::load(c.reports[0]);
            std::vector<classifier::DeltaTable> cols;
            for (std::size_t i = 1; i < c.reports.size(); ++i)
                cols.push_back(classifier::compare(classifier::EvalReport::load(c.reports[i]), base,
                                                   fs::path(c.reports[i]).stem().string()));
            emit(c.out, c.markdown ? classifier::delta_markdown(base, cols) : classifier::delta_csv(cols));
        };
    });

    // serve -----------------------------------------------------------------
    auto* sv = app.add_subcommand("serve", "HTTP service over the run store");
    service::ServiceOptions so;
    std::size_t capacity = 0;
    sv->add_option("--host", so.host)->capture_default_str();
    sv->add_option("--port", so.port)->capture_default_str();
    sv->add_option("--cors-origin", so.cors_origin)->capture_default_str();
    sv->add_option("--mock-seed", so.mock_seed)->capture_default_str();
    sv->add_option("--cache-capacity", capacity, "datasets kept in the cache (default from the store)");
    sv->callback([&] {
        action = [&] {
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            std::optional<std::size_t> cap;
            if (capacity) cap = capacity;
            workbench::Workbench bench(store_path, cap);
            service::Service svc(bench, so);
            const int port = svc.start();
            std::cerr << "listening on http://" << so.host << ":" << port << " (store " << store_path << ")\n";
            int sig = 0;
            sigwait(&set, &sig);
            g_stop = 1;
            svc.stop();
            bench.store().journal("serve stopped by signal " + std::to_string(sig));
        };
    });

    int code = 0;
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
        app.parse(rev);
        action();
    } catch (const CLI::ParseError& e) {
        code = app.exit(e);
        if (code != 0) code = 2;
        return code;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        code = 1;
    }

    try {
        const auto store = workbench::RunStore::open(store_path);
        std::string line = "cli";
        for (const auto& a : args) line += " " + a;
        for (const auto& [k, v] : seeds) line += " | " + k + "=" + std::to_string(v);
        line += " | exit=" + std::to_string(code) + " | store=" + store.hash();
        store.journal(line);
    } catch (const std::exception& e) {
        std::cerr << "warning: could not write the run journal: " << e.what() << "\n";
    }
    return code;
}

}  // namespace igaiva::cli
