#include "igaiva/service.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

// After Eigen (pulled in above): <resolv.h> defines a macro _res.
#include <httplib.h>
#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/tagtreemap.hpp"
#include "igaiva/template_corpus.hpp"
#include "igaiva/util.hpp"

namespace igaiva::service {

using nlohmann::json;
namespace wb = igaiva::workbench;

namespace {

int status_for(const Error& e) {
    if (dynamic_cast<const LeakageError*>(&e)) return 409;
    switch (e.kind()) {
        case ErrorKind::usage: return 400;
        case ErrorKind::data: return 422;
        case ErrorKind::generator: return 502;
        case ErrorKind::internal: return 500;
    }
    return 500;
}

const char* kind_name(const Error& e) {
    if (dynamic_cast<const LeakageError*>(&e)) return "leakage";
    switch (e.kind()) {
        case ErrorKind::usage: return "usage";
        case ErrorKind::data: return "data";
        case ErrorKind::generator: return "generator";
        case ErrorKind::internal: return "internal";
    }
    return "internal";
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw UsageError("request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw UsageError(std::string("malformed JSON body: ") + e.what());
    }
}

std::string param(const httplib::Request& req, const std::string& name, const std::string& fallback = {}) {
    return req.has_param(name) ? req.get_param_value(name) : fallback;
}

std::string required(const httplib::Request& req, const std::string& name) {
    if (!req.has_param(name)) throw UsageError("missing query parameter '" + name + "'");
    return req.get_param_value(name);
}

double param_num(const httplib::Request& req, const std::string& name, double fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("query parameter '" + name + "' is not a number: " + v);
    }
}

template <class T>
T field(const json& j, const char* name) {
    if (!j.contains(name)) throw UsageError(std::string("missing field '") + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw UsageError(std::string("field '") + name + "' has the wrong type");
    }
}

template <class T>
T field_or(const json& j, const char* name, T fallback) {
    return j.contains(name) ? field<T>(j, name) : fallback;
}

wb::ProjectionSpec projection_spec(const httplib::Request& req) {
    wb::ProjectionSpec s;
    s.method = param(req, "method", "pca");
    s.dim_x = static_cast<std::size_t>(param_num(req, "dim_x", 0));
    s.dim_y = static_cast<std::size_t>(param_num(req, "dim_y", 1));
    s.components = static_cast<std::size_t>(param_num(req, "components", 20));
    s.perplexity = param_num(req, "perplexity", 30.0);
    s.iterations = static_cast<int>(param_num(req, "iterations", 1000));
    s.seed = static_cast<std::uint64_t>(param_num(req, "seed", 0));
    return s;
}

wb::ProjectionSpec projection_spec(const json& j) {
    wb::ProjectionSpec s;
    s.method = field_or<std::string>(j, "method", "pca");
    s.dim_x = field_or<std::size_t>(j, "dim_x", 0);
    s.dim_y = field_or<std::size_t>(j, "dim_y", 1);
    s.components = field_or<std::size_t>(j, "components", 20);
    s.perplexity = field_or<double>(j, "perplexity", 30.0);
    s.iterations = field_or<int>(j, "iterations", 1000);
    s.seed = field_or<std::uint64_t>(j, "seed", 0);
    return s;
}

json spec_json(const wb::ProjectionSpec& s) {
    return {{"method", s.method},         {"dim_x", s.dim_x},
            {"dim_y", s.dim_y},           {"components", s.components},
            {"perplexity", s.perplexity}, {"iterations", s.iterations},
            {"seed", s.seed}};
}

heatmap::Region parse_region(const json& j) {
    const auto type = field<std::string>(j, "type");
    if (type == "halfplane") {
        heatmap::HalfPlane h;
        const auto& line = j.contains("line") ? j.at("line") : j;
        h.line = heatmap::DivisionLine::general(field<double>(line, "a"), field<double>(line, "b"),
                                                field<double>(line, "c"));
        const auto side = field_or<std::string>(j, "side", "a");
        if (side != "a" && side != "b") throw UsageError("half-plane side must be 'a' or 'b'");
        h.side = side == "a" ? heatmap::Side::a : heatmap::Side::b;
        return h;
    }
    if (type == "rectangle") {
        return heatmap::Rectangle{field<double>(j, "x_min"), field<double>(j, "y_min"), field<double>(j, "x_max"),
                                  field<double>(j, "y_max")};
    }
    if (type == "polygon") {
        heatmap::Polygon p;
        for (const auto& v : field<json>(j, "vertices")) {
            if (!v.is_array() || v.size() != 2) throw UsageError("polygon vertices must be [x, y] pairs");
            p.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
        }
        return p;
    }
    throw UsageError("unknown region type '" + type + "' (halfplane, rectangle, polygon)");
}

synthesis::GenerationParams parse_params(const json& j) {
    synthesis::GenerationParams p;
    p.temperature = field_or(j, "temperature", p.temperature);
    p.max_tokens = field_or(j, "max_tokens", p.max_tokens);
    p.top_p = field_or(j, "top_p", p.top_p);
    p.frequency_penalty = field_or(j, "frequency_penalty", p.frequency_penalty);
    p.presence_penalty = field_or(j, "presence_penalty", p.presence_penalty);
    p.k = field_or(j, "k", p.k);
    p.validate();
    return p;
}

json job_json(const wb::Job& job) {
    json events = json::array();
    for (const auto& e : job.events) events.push_back({{"seq", e.seq}, {"fraction", e.fraction}, {"message", e.message}});
    return {{"id", job.id},
            {"kind", wb::to_string(job.kind)},
            {"state", wb::to_string(job.state)},
            {"progress", job.progress},
            {"events", events},
            {"error", job.error},
            {"experiment", job.experiment_id},
            {"result", job.result}};
}

json delta_row_json(const classifier::DeltaRow& r) {
    return {{"label", r.label},
            {"test_count", r.test_count},
            {"baseline_train", r.baseline_train},
            {"train", r.train},
            {"train_delta", r.train_delta()},
            {"baseline_recall", r.baseline_recall},
            {"recall", r.recall},
            {"delta", r.delta}};
}

}  // namespace

struct Service::Impl {
    wb::Workbench& bench;
    ServiceOptions options;
    httplib::Server server;
    std::thread thread;
    int bound_port = -1;

    std::mutex state_mutex;
    std::map<std::string, std::pair<int, std::string>> replay;
    std::map<std::string, std::shared_ptr<const projection::Embedding2D>> embeddings;
    std::map<std::string, std::shared_ptr<const features::TfidfModel>> feature_models;
    std::atomic<std::size_t> run_serial{0};
    // Session snapshot for the UI.
    std::string active_experiment;
    wb::ProjectionSpec active_projection;
    double active_epsilon = heatmap::kDefaultEpsilon;
    std::size_t active_grid = 64;

    Impl(wb::Workbench& b, ServiceOptions o) : bench(b), options(std::move(o)) {
        // httplib's default adds SO_REUSEPORT, which would let a second server share a busy port.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    Handler guarded(Handler h) {
        return [h](const httplib::Request& req, httplib::Response& res) {
            try {
                h(req, res);
            } catch (const Error& e) {
                send_json(res, {{"error", e.what()}, {"kind", kind_name(e)}}, status_for(e));
            } catch (const std::exception& e) {
                send_json(res, {{"error", e.what()}, {"kind", "internal"}}, 500);
            }
        };
    }

    /// Mutating routes replay the stored response for a repeated Idempotency-Key.
    Handler idempotent(Handler h) {
        return guarded([this, h](const httplib::Request& req, httplib::Response& res) {
            const auto key = req.get_header_value("Idempotency-Key");
            if (key.empty()) return h(req, res);
            const auto slot = req.method + " " + req.path + " " + key;
            {
                std::lock_guard lock(state_mutex);
                const auto it = replay.find(slot);
                if (it != replay.end()) {
                    res.status = it->second.first;
                    res.set_content(it->second.second, "application/json");
                    res.set_header("Idempotent-Replay", "true");
                    return;
                }
            }
            try {
                h(req, res);
            } catch (const Error& e) {
                send_json(res, {{"error", e.what()}, {"kind", kind_name(e)}}, status_for(e));
            }
            std::lock_guard lock(state_mutex);
            replay.emplace(slot, std::make_pair(res.status, res.body));
        });
    }

    // -- shared lookups ------------------------------------------------------

    struct Scope {
        std::shared_ptr<const corpus::Dataset> dataset;
        corpus::SplitAssignment split;
        std::string split_ref;
        std::string experiment;
        std::shared_ptr<const features::TfidfModel> features;
        std::string features_key;
    };

    Scope scope(const std::string& experiment, const std::string& dataset, const std::string& split_ref) {
        Scope s;
        if (!experiment.empty()) {
            const auto e = bench.experiment(experiment);
            s.dataset = bench.dataset(e.base_dataset);
            s.split_ref = e.split_ref;
            s.experiment = experiment;
            s.features_key = "exp:" + experiment;
        } else {
            if (dataset.empty() || split_ref.empty())
                throw UsageError("name an experiment, or a dataset and a split");
            s.dataset = bench.dataset(dataset);
            s.split_ref = split_ref;
            s.features_key = "fit:" + dataset + ":" + split_ref;
        }
        s.split = bench.split(s.split_ref);
        corpus::validate_split(*s.dataset, s.split);
        std::lock_guard lock(state_mutex);
        auto& slot = feature_models[s.features_key];
        if (!slot) {
            slot = experiment.empty()
                       ? std::make_shared<const features::TfidfModel>(features::fit_tfidf(*s.dataset, s.split))
                       : std::make_shared<const features::TfidfModel>(bench.feature_model(experiment));
        }
        s.features = slot;
        return s;
    }

    std::shared_ptr<const projection::Embedding2D> embedding(const Scope& s, const wb::ProjectionSpec& spec) {
        const auto key = s.features_key + "|" + s.dataset->name() + "|" + spec.key();
        {
            std::lock_guard lock(state_mutex);
            const auto it = embeddings.find(key);
            if (it != embeddings.end()) return it->second;
        }
        auto e = std::make_shared<const projection::Embedding2D>(wb::embed(*s.dataset, s.split, *s.features, spec));
        std::lock_guard lock(state_mutex);
        active_projection = spec;
        return embeddings.emplace(key, std::move(e)).first->second;
    }

    Scope scope_from(const httplib::Request& req) {
        return scope(param(req, "experiment"), param(req, "dataset"), param(req, "split"));
    }

    Scope scope_from(const json& j) {
        return scope(field_or<std::string>(j, "experiment", ""), field_or<std::string>(j, "dataset", ""),
                     field_or<std::string>(j, "split", ""));
    }

    json dataset_json(const wb::CacheEntry& entry) {
        const auto d = bench.dataset(entry.name);
        const auto summary = corpus::class_summary(*d);
        json classes = json::array();
        for (const auto& c : summary.classes) classes.push_back({{"label", c.label}, {"count", c.count}});
        return {{"name", entry.name},           {"size", entry.size},       {"collected", entry.collected},
                {"synthetic", entry.synthetic}, {"origin", entry.origin()}, {"main", entry.main},
                {"classes", classes},           {"total", summary.total}};
    }

    // -- routes --------------------------------------------------------------

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                    {"Access-Control-Allow-Headers", "Content-Type, Idempotency-Key"},
                                    {"Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS"}});
        server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Get("/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                       send_json(res, {{"status", "ok"}, {"store", bench.store().root().string()}});
                   }));

        server.Get("/session", guarded([this](const httplib::Request&, httplib::Response& res) {
                       std::lock_guard lock(state_mutex);
                       send_json(res, {{"experiment", active_experiment.empty() ? json(nullptr) : json(active_experiment)},
                                       {"projection", spec_json(active_projection)},
                                       {"heatmap", {{"epsilon", active_epsilon}, {"grid", active_grid}}}});
                   }));

        server.Get("/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
                       json cached = json::array();
                       for (const auto& e : bench.list_datasets()) cached.push_back(dataset_json(e));
                       const auto& main = bench.store().main_dataset();
                       send_json(res, {{"datasets", cached},
                                       {"stored", bench.store().dataset_names()},
                                       {"batches", bench.batch_ids()},
                                       {"main", main.empty() ? json(nullptr) : json(main)},
                                       {"capacity", bench.store().cache_capacity()}});
                   }));

        server.Post("/datasets", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        const auto name = field<std::string>(body, "name");
                        corpus::Dataset d;
                        if (body.contains("template")) {
                            const auto& t = body.at("template");
                            corpus::TemplateCorpusConfig cfg;
                            cfg.seed = field_or(t, "seed", cfg.seed);
                            cfg.num_classes = field_or(t, "num_classes", cfg.num_classes);
                            cfg.class_sizes = field_or(t, "class_sizes", cfg.class_sizes);
                            cfg.name = name;
                            if (t.contains("downsample")) {
                                const auto& ds = t.at("downsample");
                                cfg.downsample = std::make_pair(field<std::string>(ds, "label"),
                                                                field<std::size_t>(ds, "keep"));
                            }
                            d = corpus::generate_template_corpus(cfg);
                        } else {
                            const auto content = field<std::string>(body, "content");
                            const auto format = field_or<std::string>(body, "format", "jsonl");
                            if (format == "jsonl") {
                                d = corpus::parse_jsonl(content, name);
                            } else if (format == "csv") {
                                d = corpus::parse_csv(content, name);
                            } else {
                                throw UsageError("format must be jsonl or csv");
                            }
                        }
                        bench.import_dataset(name, d, field_or(body, "main", false));
                        for (const auto& e : bench.list_datasets()) {
                            if (e.name == name) return send_json(res, dataset_json(e), 201);
                        }
                        send_json(res, {{"name", name}}, 201);
                    }));

        server.Delete(R"(/datasets/([^/]+))", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                          const auto name = req.matches[1].str();
                          const auto force = param(req, "force") == "true" || param(req, "force") == "1";
                          bench.delete_dataset(name, force);
                          send_json(res, {{"deleted", name}});
                      }));

        server.Post("/split", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        const auto dataset = field<std::string>(body, "dataset");
                        const auto ref = bench.make_split(dataset, field_or(body, "test_fraction", 0.2),
                                                          field_or<std::uint64_t>(body, "seed", 0),
                                                          field_or<std::string>(body, "name", ""));
                        const auto s = bench.split(ref);
                        send_json(res,
                                  {{"split", ref},
                                   {"train", s.train_ids.size()},
                                   {"test", s.test_ids.size()},
                                   {"test_fingerprint", s.test_fingerprint()}},
                                  201);
                    }));

        server.Get("/projection", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto s = scope_from(req);
                       const auto spec = projection_spec(req);
                       const auto emb = embedding(s, spec);
                       std::map<std::string, bool> verdict;
                       if (!s.experiment.empty()) {
                           for (const auto& p : bench.report(s.experiment).predictions) verdict[p.id] = p.correct();
                       }
                       const auto focus = param(req, "label");
                       json points = json::array();
                       for (std::size_t i = 0; i < emb->size(); ++i) {
                           const auto& id = emb->ids[i];
                           const auto& m = s.dataset->at(id);
                           const bool train = s.split.train_ids.count(id) != 0;
                           const bool test = s.split.test_ids.count(id) != 0;
                           std::string role = "other";
                           if (focus.empty() || m.label == focus) {
                               if (train) {
                                   role = "train";
                               } else if (test && verdict.count(id)) {
                                   role = verdict[id] ? "test_correct" : "test_incorrect";
                               } else if (test) {
                                   role = "test";
                               }
                           }
                           points.push_back({{"id", id},
                                             {"x", emb->points[i].x},
                                             {"y", emb->points[i].y},
                                             {"label", m.label},
                                             {"split", train ? "train" : (test ? "test" : "none")},
                                             {"role", role}});
                       }
                       json out{{"method", emb->method.describe()}, {"spec", spec_json(spec)}, {"points", points}};
                       if (emb->tsne)
                           out["tsne"] = {{"kl_final", emb->tsne->kl_final},
                                          {"kl_after_exaggeration", emb->tsne->kl_after_exaggeration}};
                       send_json(res, out);
                   }));

        server.Get("/heatmap", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto exp = required(req, "experiment");
                       const auto s = scope(exp, "", "");
                       const auto spec = projection_spec(req);
                       const auto emb = embedding(s, spec);
                       const auto samples = wb::correctness_samples(bench.report(exp), *emb);
                       const auto grid = static_cast<std::size_t>(param_num(req, "grid", 64));
                       const auto eps = param_num(req, "epsilon", heatmap::kDefaultEpsilon);
                       const auto f = heatmap::rbf_error_field(samples, grid, grid, eps);
                       {
                           std::lock_guard lock(state_mutex);
                           active_experiment = exp;
                           active_epsilon = eps;
                           active_grid = grid;
                       }
                       send_json(res, {{"width", f.width},
                                       {"height", f.height},
                                       {"bbox",
                                        {{"x_min", f.bbox.x_min},
                                         {"x_max", f.bbox.x_max},
                                         {"y_min", f.bbox.y_min},
                                         {"y_max", f.bbox.y_max}}},
                                       {"epsilon", f.epsilon},
                                       {"value", f.value},
                                       {"confidence", f.confidence}});
                   }));

        server.Post("/select", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        const auto mode = field<std::string>(body, "mode");
                        const auto s = scope_from(body);
                        std::vector<std::string> ids;
                        if (mode == "region") {
                            const auto emb = embedding(s, projection_spec(field_or(body, "projection", json::object())));
                            std::optional<std::string> label;
                            if (body.contains("label")) label = field<std::string>(body, "label");
                            ids = synthesis::select_examples_in_region(*s.dataset, s.split, *emb,
                                                                       parse_region(field<json>(body, "region")), label);
                        } else if (mode == "keywords") {
                            const auto terms = field<std::vector<std::string>>(body, "terms");
                            ids = synthesis::select_examples_by_keywords(*s.dataset, s.split,
                                                                         field<std::string>(body, "label"), terms);
                        } else if (mode == "random") {
                            ids = synthesis::select_examples_random(*s.dataset, s.split, field<std::string>(body, "label"),
                                                                    field<std::size_t>(body, "n"),
                                                                    field_or<std::uint64_t>(body, "seed", 0));
                        } else {
                            throw UsageError("unknown selection mode '" + mode + "' (region, keywords, random)");
                        }
                        for (const auto& id : ids) {
                            if (s.split.test_ids.count(id)) throw LeakageError("selection reached test message " + id);
                        }
                        json out{{"mode", mode}, {"ids", ids}, {"count", ids.size()}, {"split", s.split_ref}};
                        if (ids.empty()) out["warning"] = "empty selection";
                        send_json(res, out);
                    }));

        server.Post("/synthesize", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        const auto s = scope_from(body);
                        synthesis::SynthesisRequest request;
                        request.label = field<std::string>(body, "label");
                        request.example_ids = field<std::vector<std::string>>(body, "example_ids");
                        request.params = parse_params(field_or(body, "params", json::object()));
                        request.generator = field_or<std::string>(body, "generator", "mock");
                        request.run_id = field_or<std::string>(
                            body, "run_id", "syn-" + to_hex(mix64(fnv1a64(req.body), ++run_serial)).substr(0, 10));
                        const auto seed = field_or<std::uint64_t>(body, "seed", options.mock_seed);
                        std::shared_ptr<synthesis::Generator> gen;
                        if (request.generator == "mock") {
                            gen = std::make_shared<synthesis::MockGenerator>(seed);
                        } else if (request.generator == "remote") {
                            gen = std::make_shared<synthesis::ChatCompletionGenerator>(synthesis::RemoteConfig::from_env());
                        } else {
                            throw UsageError("generator must be mock or remote");
                        }
                        // Fail fast on leakage or bad ids before queueing.
                        for (const auto& id : request.example_ids) {
                            if (s.split.test_ids.count(id)) throw LeakageError("example '" + id + "' is a test message");
                        }
                        const auto jid = bench.jobs().submit(wb::JobKind::synthesize,
                                                             [this, s, request, gen](wb::JobContext& ctx) {
                                                                 ctx.progress(0.1, "generating");
                                                                 const auto batch = synthesis::synthesize(
                                                                     request, *s.dataset, s.split, *gen);
                                                                 bench.save_batch(batch);
                                                                 ctx.set_result(batch.run_id);
                                                             });
                        send_json(res, {{"job", jid}, {"run_id", request.run_id}}, 202);
                    }));

        server.Post("/merge", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        const auto name = field<std::string>(body, "name");
                        const auto news = bench.merge(name, field<std::string>(body, "base"),
                                                      field<std::vector<std::string>>(body, "others"));
                        send_json(res, {{"name", name}, {"size", bench.dataset(name)->size()}, {"new_labels", news}}, 201);
                    }));

        server.Post("/train", idempotent([this](const httplib::Request& req, httplib::Response& res) {
                        const auto body = parse_body(req);
                        wb::ExperimentSpec spec;
                        spec.name = field_or<std::string>(body, "name", "");
                        spec.base_dataset = field<std::string>(body, "dataset");
                        spec.split_ref = field<std::string>(body, "split");
                        spec.batches = field_or<std::vector<std::string>>(body, "batches", {});
                        spec.baseline = field_or<std::string>(body, "baseline", "");
                        spec.notes = field_or<std::string>(body, "notes", "");
                        const auto cfg = field_or(body, "config", json::object());
                        spec.train_config.epochs = field_or(cfg, "epochs", spec.train_config.epochs);
                        spec.train_config.learning_rate = field_or(cfg, "learning_rate", spec.train_config.learning_rate);
                        spec.train_config.l2 = field_or(cfg, "l2", spec.train_config.l2);
                        spec.train_config.batch_size = field_or(cfg, "batch_size", spec.train_config.batch_size);
                        spec.train_config.seed = field_or(cfg, "seed", spec.train_config.seed);
                        const auto tf = field_or(body, "tfidf", json::object());
                        spec.tfidf_config.min_df = field_or(tf, "min_df", spec.tfidf_config.min_df);
                        spec.tfidf_config.max_features = field_or(tf, "max_features", spec.tfidf_config.max_features);
                        if (tf.contains("stopwords"))
                            spec.tfidf_config.tokenizer.stopwords =
                                features::parse_stopwords(field<std::string>(tf, "stopwords"));
                        spec.tfidf_config.tokenizer.min_token_length =
                            field_or(tf, "min_token_length", spec.tfidf_config.tokenizer.min_token_length);
                        std::string jid;
                        const auto e = bench.create_experiment(spec, &jid);
                        {
                            std::lock_guard lock(state_mutex);
                            active_experiment = e.id;
                        }
                        send_json(res, {{"job", jid}, {"experiment", e.id}}, 202);
                    }));

        server.Get(R"(/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, job_json(bench.jobs().status(req.matches[1].str())));
                   }));

        server.Get(R"(/jobs/([^/]+)/events)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto id = req.matches[1].str();
                       bench.jobs().status(id);
                       auto cursor = std::make_shared<long long>(-1);
                       res.set_chunked_content_provider(
                           "text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
                               const auto after = static_cast<std::size_t>(*cursor < 0 ? 0 : *cursor);
                               auto events = *cursor < 0 ? bench.jobs().status(id).events
                                                         : bench.jobs().wait_events(id, after, std::chrono::seconds(1));
                               for (const auto& e : events) {
                                   if (static_cast<long long>(e.seq) <= *cursor) continue;
                                   const auto line = "id: " + std::to_string(e.seq) + "\ndata: " +
                                                     json{{"seq", e.seq}, {"fraction", e.fraction}, {"message", e.message}}.dump() +
                                                     "\n\n";
                                   if (!sink.write(line.data(), line.size())) return false;
                                   *cursor = static_cast<long long>(e.seq);
                               }
                               const auto job = bench.jobs().status(id);
                               const bool finished = job.state == wb::JobState::done || job.state == wb::JobState::failed;
                               if (finished && static_cast<long long>(job.events.back().seq) <= *cursor) {
                                   const std::string end = "event: end\ndata: " + json{{"state", wb::to_string(job.state)}}.dump() + "\n\n";
                                   sink.write(end.data(), end.size());
                                   sink.done();
                               }
                               return true;
                           });
                   }));

        server.Get("/reports", guarded([this](const httplib::Request&, httplib::Response& res) {
                       json list = json::array();
                       for (const auto& e : bench.experiments()) {
                           json item{{"id", e.id},
                                     {"name", e.name},
                                     {"status", wb::to_string(e.status)},
                                     {"baseline", e.baseline_ref},
                                     {"batches", e.batches},
                                     {"train_size", e.train_size},
                                     {"test_fingerprint", e.test_fingerprint}};
                           if (e.status == wb::ExperimentStatus::complete) {
                               const auto r = bench.report(e.id);
                               item["overall_recall"] = r.overall_recall;
                               item["macro_f1"] = r.macro_f1;
                           }
                           if (!e.error.empty()) item["error"] = e.error;
                           list.push_back(item);
                       }
                       send_json(res, {{"experiments", list}});
                   }));

        server.Get("/reports/compare", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto baseline = required(req, "baseline");
                       std::vector<std::string> ids;
                       for (const auto& p : split(required(req, "ids"), ',')) {
                           const auto t = trim(p);
                           if (!t.empty()) ids.push_back(t);
                       }
                       const auto c = bench.compare_experiments(baseline, ids);
                       json cols = json::array();
                       for (const auto& col : c.columns) {
                           json rows = json::array();
                           for (const auto& r : col.rows) rows.push_back(delta_row_json(r));
                           cols.push_back({{"name", col.name}, {"overall", delta_row_json(col.overall)}, {"rows", rows}});
                       }
                       send_json(res, {{"baseline", baseline}, {"columns", cols}, {"markdown", c.markdown}, {"csv", c.csv}});
                   }));

        server.Get(R"(/reports/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       res.set_content(bench.report(req.matches[1].str()).to_json(), "application/json");
                   }));

        server.Get("/tagtreemap", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto s = scope_from(req);
                       const auto group = param(req, "group", "label");
                       const auto subset = param(req, "subset", "train");
                       const auto top_k = static_cast<std::size_t>(param_num(req, "top_k", 10));
                       std::vector<tagtreemap::Group> groups;
                       if (group == "label") {
                           std::map<std::string, std::size_t> index;
                           for (const auto& m : s.dataset->messages()) {
                               const bool train = s.split.train_ids.count(m.id) != 0;
                               const bool test = s.split.test_ids.count(m.id) != 0;
                               if ((subset == "train" && !train) || (subset == "test" && !test)) continue;
                               auto [it, fresh] = index.emplace(m.label, groups.size());
                               if (fresh) groups.push_back({m.label, {}});
                               groups[it->second].messages.push_back(m);
                           }
                       } else if (group == "outcome") {
                           if (s.experiment.empty()) throw UsageError("outcome grouping needs an experiment");
                           groups = {{"correct", {}}, {"incorrect", {}}};
                           const auto focus = param(req, "label");
                           for (const auto& p : bench.report(s.experiment).predictions) {
                               if (!focus.empty() && p.truth != focus) continue;
                               groups[p.correct() ? 0 : 1].messages.push_back(s.dataset->at(p.id));
                           }
                       } else {
                           throw UsageError("group must be label or outcome");
                       }
                       const auto layout = tagtreemap::build_tag_treemap(groups, top_k, {0, 0, 1, 1});
                       res.set_content(layout.to_json(), "application/json");
                   }));
    }
};

Service::Service(wb::Workbench& bench, ServiceOptions options)
    : impl_(std::make_unique<Impl>(bench, std::move(options))) {}

Service::~Service() { stop(); }

int Service::bind() {
    auto& i = *impl_;
    if (i.options.port == 0) {
        i.bound_port = i.server.bind_to_any_port(i.options.host);
        if (i.bound_port < 0) throw UsageError("could not bind to " + i.options.host);
    } else {
        if (!i.server.bind_to_port(i.options.host, i.options.port))
            throw UsageError("port " + std::to_string(i.options.port) + " on " + i.options.host + " is busy");
        i.bound_port = i.options.port;
    }
    i.bench.jobs().start();
    i.bench.store().journal("serve " + i.options.host + ":" + std::to_string(i.bound_port));
    return i.bound_port;
}

void Service::listen() { impl_->server.listen_after_bind(); }

int Service::start() {
    const int p = bind();
    impl_->thread = std::thread([this] { listen(); });
    impl_->server.wait_until_ready();
    return p;
}

void Service::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->bench.jobs().stop();
}

int Service::port() const { return impl_->bound_port; }

}  // namespace igaiva::service
