#include "igaiva/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::classifier {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw UsageError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
    if (!(l2 >= 0.0)) throw UsageError("L2 strength must be non-negative");
    if (batch_size < 1) throw UsageError("batch size must be at least 1");
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        p[c] = std::exp(logits[c] - mx);
        sum += p[c];
    }
    for (auto& v : p) v /= sum;
    return p;
}

namespace {

std::vector<double> logits_of(const Eigen::MatrixXd& w, const Eigen::VectorXd& b, double scale,
                              const features::FeatureVector& x) {
    std::vector<double> z(static_cast<std::size_t>(b.size()));
    for (Eigen::Index c = 0; c < b.size(); ++c) z[static_cast<std::size_t>(c)] = b[c];
    for (std::size_t k = 0; k < x.nnz(); ++k) {
        const auto col = w.col(x.indices[k]);
        const double v = scale * x.values[k];
        for (Eigen::Index c = 0; c < b.size(); ++c) z[static_cast<std::size_t>(c)] += v * col[c];
    }
    return z;
}

double cross_entropy(std::span<const double> logits, std::size_t y) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return std::log(sum) + mx - logits[y];
}

}  // namespace

ClassifierModel::ClassifierModel(std::vector<std::string> labels, Eigen::MatrixXd weights, Eigen::VectorXd bias)
    : labels_(std::move(labels)), weights_(std::move(weights)), bias_(std::move(bias)) {
    if (static_cast<std::size_t>(weights_.rows()) != labels_.size() || bias_.size() != weights_.rows())
        throw DataError("classifier parameter shapes do not match label count");
    if (!weights_.allFinite() || !bias_.allFinite()) throw DataError("classifier parameters are not finite");
}

Prediction ClassifierModel::predict(const features::FeatureVector& x) const {
    if (x.dim != dim())
        throw DataError("feature dimension " + std::to_string(x.dim) + " does not match model dimension " +
                        std::to_string(dim()));
    Prediction p;
    p.scores = softmax(logits_of(weights_, bias_, 1.0, x));
    p.index = 0;
    for (std::size_t c = 1; c < p.scores.size(); ++c) {
        if (p.scores[c] > p.scores[p.index]) p.index = c;
    }
    p.label = labels_[p.index];
    return p;
}

std::string ClassifierModel::to_json() const {
    json w = json::array();
    for (Eigen::Index c = 0; c < weights_.rows(); ++c) {
        std::vector<double> row(weights_.cols());
        for (Eigen::Index d = 0; d < weights_.cols(); ++d) row[static_cast<std::size_t>(d)] = weights_(c, d);
        w.push_back(row);
    }
    json counts = json::object();
    for (const auto& [label, n] : train_counts) counts[label] = {{"collected", n.collected}, {"synthetic", n.synthetic}};
    json j{{"schema", "igaiva.model/1"},
           {"kind", "softmax-linear"},
           {"labels", labels_},
           {"dim", dim()},
           {"bias", std::vector<double>(bias_.data(), bias_.data() + bias_.size())},
           {"weights", w},
           {"feature_ref", feature_ref},
           {"config",
            {{"epochs", config.epochs},
             {"learning_rate", config.learning_rate},
             {"l2", config.l2},
             {"batch_size", config.batch_size},
             {"seed", config.seed}}},
           {"train_counts", counts},
           {"loss_history", loss_history}};
    return j.dump() + "\n";
}

ClassifierModel ClassifierModel::from_json(const std::string& content) {
    try {
        const auto j = json::parse(content);
        if (j.value("schema", std::string{}) != "igaiva.model/1") throw DataError("unsupported model schema");
        auto labels = j.at("labels").get<std::vector<std::string>>();
        const auto dim = j.at("dim").get<std::size_t>();
        const auto bias_v = j.at("bias").get<std::vector<double>>();
        Eigen::MatrixXd w(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dim));
        const auto& rows = j.at("weights");
        if (rows.size() != labels.size()) throw DataError("model weight rows do not match labels");
        for (std::size_t c = 0; c < labels.size(); ++c) {
            const auto row = rows[c].get<std::vector<double>>();
            if (row.size() != dim) throw DataError("model weight row has wrong length");
            for (std::size_t d = 0; d < dim; ++d) w(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) = row[d];
        }
        Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(bias_v.data(), static_cast<Eigen::Index>(bias_v.size()));
        ClassifierModel m(std::move(labels), std::move(w), std::move(b));
        m.feature_ref = j.value("feature_ref", std::string{});
        const auto& cfg = j.at("config");
        m.config.epochs = cfg.at("epochs").get<int>();
        m.config.learning_rate = cfg.at("learning_rate").get<double>();
        m.config.l2 = cfg.at("l2").get<double>();
        m.config.batch_size = cfg.at("batch_size").get<std::size_t>();
        m.config.seed = cfg.at("seed").get<std::uint64_t>();
        for (const auto& [label, n] : j.at("train_counts").items())
            m.train_counts[label] = {n.at("collected").get<std::size_t>(), n.at("synthetic").get<std::size_t>()};
        m.loss_history = j.value("loss_history", std::vector<double>{});
        return m;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

void ClassifierModel::save(const std::string& path) const { write_file(path, to_json()); }
ClassifierModel ClassifierModel::load(const std::string& path) { return from_json(read_file(path)); }

LossGradient softmax_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   std::span<const features::FeatureVector> xs,
                                   std::span<const std::size_t> ys, double l2) {
    if (xs.size() != ys.size() || xs.empty()) throw UsageError("loss needs matching, non-empty samples");
    LossGradient out;
    out.grad_weights = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
    out.grad_bias = Eigen::VectorXd::Zero(bias.size());
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto z = logits_of(weights, bias, 1.0, xs[i]);
        out.loss += cross_entropy(z, ys[i]) * inv_n;
        auto p = softmax(z);
        p[ys[i]] -= 1.0;
        for (Eigen::Index c = 0; c < bias.size(); ++c) out.grad_bias[c] += p[static_cast<std::size_t>(c)] * inv_n;
        for (std::size_t k = 0; k < xs[i].nnz(); ++k) {
            for (Eigen::Index c = 0; c < bias.size(); ++c)
                out.grad_weights(c, xs[i].indices[k]) += p[static_cast<std::size_t>(c)] * xs[i].values[k] * inv_n;
        }
    }
    out.loss += 0.5 * l2 * weights.squaredNorm();
    out.grad_weights += l2 * weights;
    return out;
}

ClassifierModel train(const features::FeatureMatrix& data, std::span<const std::string> row_labels,
                      const TrainConfig& config, const ProgressSink& sink) {
    config.validate();
    if (row_labels.size() != data.size()) throw UsageError("label count does not match feature rows");
    std::vector<std::string> labels;
    std::map<std::string, std::size_t> label_index;
    std::vector<std::size_t> y;
    y.reserve(row_labels.size());
    for (const auto& l : row_labels) {
        auto [it, inserted] = label_index.emplace(l, labels.size());
        if (inserted) labels.push_back(l);
        y.push_back(it->second);
    }
    if (labels.size() < 2) throw DataError("training needs at least two classes");

    const auto C = static_cast<Eigen::Index>(labels.size());
    const auto D = static_cast<Eigen::Index>(data.dim);
    const std::size_t n = data.size();
    // W = scale * V keeps the L2 shrinkage O(1) per step.
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(C, D);
    double scale = 1.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(C);

    auto objective = [&] {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) loss += cross_entropy(logits_of(v, b, scale, data.rows[i]), y[i]);
        loss /= static_cast<double>(n);
        return loss + 0.5 * config.l2 * scale * scale * v.squaredNorm();
    };

    std::vector<double> history{objective()};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix64(config.seed, fnv1a64("classifier-train")));
    std::vector<std::vector<double>> residuals;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t end = std::min(n, start + config.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            residuals.clear();
            for (std::size_t k = start; k < end; ++k) {
                auto p = softmax(logits_of(v, b, scale, data.rows[order[k]]));
                p[y[order[k]]] -= 1.0;
                residuals.push_back(std::move(p));
            }
            scale *= 1.0 - config.learning_rate * config.l2;
            if (scale < 1e-8) {
                v *= scale;
                scale = 1.0;
            }
            const double step = config.learning_rate * inv_b / scale;
            for (std::size_t k = start; k < end; ++k) {
                const auto& x = data.rows[order[k]];
                const auto& r = residuals[k - start];
                for (Eigen::Index c = 0; c < C; ++c) b[c] -= config.learning_rate * inv_b * r[static_cast<std::size_t>(c)];
                for (std::size_t j = 0; j < x.nnz(); ++j) {
                    auto col = v.col(x.indices[j]);
                    const double f = step * x.values[j];
                    for (Eigen::Index c = 0; c < C; ++c) col[c] -= f * r[static_cast<std::size_t>(c)];
                }
            }
        }
        const double loss = objective();
        if (!std::isfinite(loss))
            throw DataError("training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss); lower the learning rate");
        history.push_back(loss);
        if (sink) sink({epoch, config.epochs, loss, static_cast<double>(epoch) / config.epochs});
    }

    ClassifierModel model(std::move(labels), scale * v, b);
    model.config = config;
    model.loss_history = std::move(history);
    return model;
}

ClassifierModel train(const corpus::Dataset& train_set, const features::TfidfModel& features,
                      const TrainConfig& config, const ProgressSink& sink) {
    const auto data = features::featurize(features, train_set);
    std::vector<std::string> labels;
    labels.reserve(train_set.size());
    for (const auto& m : train_set.messages()) labels.push_back(m.label);
    auto model = train(data, labels, config, sink);
    model.feature_ref = features.vocabulary().fitted_on;
    for (const auto& m : train_set.messages()) {
        auto& c = model.train_counts[m.label];
        (m.origin == corpus::Origin::collected ? c.collected : c.synthetic) += 1;
    }
    return model;
}

// ---------------------------------------------------------------------------
// Evaluation

const ClassMetrics& EvalReport::at(const std::string& label) const {
    for (const auto& c : classes) {
        if (c.label == label) return c;
    }
    throw DataError("report has no class '" + label + "'");
}

std::size_t EvalReport::train_total() const {
    std::size_t t = 0;
    for (const auto& c : classes) t += c.train.total();
    return t;
}

namespace {

void fill_metrics(EvalReport& r) {
    const auto C = r.classes.size();
    r.total = 0;
    std::size_t trace = 0;
    double f1_sum = 0.0;
    for (std::size_t i = 0; i < C; ++i) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < C; ++j) {
            row += r.confusion[i][j];
            col += r.confusion[j][i];
        }
        auto& m = r.classes[i];
        m.test_count = row;
        m.correct = r.confusion[i][i];
        m.recall = row ? static_cast<double>(m.correct) / static_cast<double>(row) : 0.0;
        m.precision = col ? static_cast<double>(m.correct) / static_cast<double>(col) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
        f1_sum += m.f1;
        r.total += row;
        trace += m.correct;
    }
    r.overall_recall = r.total ? static_cast<double>(trace) / static_cast<double>(r.total) : 0.0;
    r.accuracy = r.overall_recall;
    r.macro_f1 = C ? f1_sum / static_cast<double>(C) : 0.0;
}

}  // namespace

EvalReport report_from_confusion(std::vector<std::string> labels, std::vector<std::vector<std::size_t>> confusion) {
    if (confusion.size() != labels.size()) throw UsageError("confusion matrix must be C x C");
    for (const auto& row : confusion) {
        if (row.size() != labels.size()) throw UsageError("confusion matrix must be C x C");
    }
    EvalReport r;
    for (auto& l : labels) r.classes.emplace_back().label = std::move(l);
    r.confusion = std::move(confusion);
    fill_metrics(r);
    return r;
}

std::string test_set_fingerprint(const corpus::Dataset& test_set) {
    corpus::SplitAssignment s;
    for (const auto& m : test_set.messages()) s.test_ids.insert(m.id);
    return s.test_fingerprint();
}

EvalReport evaluate(const Classifier& model, const corpus::Dataset& test_set, const features::TfidfModel& features) {
    if (test_set.empty()) throw UsageError("test set is empty");
    const auto& labels = model.labels();
    std::map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < labels.size(); ++c) index[labels[c]] = c;
    for (const auto& l : test_set.labels()) {
        if (!index.count(l)) throw DataError("test set label '" + l + "' unknown to the model");
    }
    EvalReport r;
    for (const auto& l : labels) r.classes.emplace_back().label = l;
    if (const auto* lin = dynamic_cast<const ClassifierModel*>(&model)) {
        for (auto& c : r.classes) {
            const auto it = lin->train_counts.find(c.label);
            if (it != lin->train_counts.end()) c.train = it->second;
        }
        r.model_ref = lin->feature_ref;
    }
    r.confusion.assign(labels.size(), std::vector<std::size_t>(labels.size(), 0));
    for (const auto& m : test_set.messages()) {
        const auto pred = model.predict(features.transform(m.text));
        ++r.confusion[index[m.label]][pred.index];
        r.predictions.push_back({m.id, m.label, pred.label});
    }
    fill_metrics(r);
    r.test_set_ref = test_set_fingerprint(test_set);
    r.dataset_ref = test_set.name();
    r.timestamp = utc_timestamp();
    return r;
}

std::string EvalReport::to_json() const {
    json cls = json::array();
    for (const auto& c : classes) {
        cls.push_back({{"label", c.label},
                       {"test_count", c.test_count},
                       {"correct", c.correct},
                       {"recall", c.recall},
                       {"precision", c.precision},
                       {"f1", c.f1},
                       {"train_collected", c.train.collected},
                       {"train_synthetic", c.train.synthetic}});
    }
    json preds = json::array();
    for (const auto& p : predictions) preds.push_back({p.id, p.truth, p.predicted});
    json j{{"schema", "igaiva.report/1"},
           {"classes", cls},
           {"confusion", confusion},
           {"total", total},
           {"overall_recall", overall_recall},
           {"accuracy", accuracy},
           {"macro_f1", macro_f1},
           {"model_ref", model_ref},
           {"test_set_ref", test_set_ref},
           {"dataset_ref", dataset_ref},
           {"timestamp", timestamp},
           {"predictions", preds}};
    return j.dump(1) + "\n";
}

EvalReport EvalReport::from_json(const std::string& content) {
    try {
        const auto j = json::parse(content);
        if (j.value("schema", std::string{}) != "igaiva.report/1") throw DataError("unsupported report schema");
        EvalReport r;
        for (const auto& c : j.at("classes")) {
            ClassMetrics m;
            m.label = c.at("label").get<std::string>();
            m.test_count = c.at("test_count").get<std::size_t>();
            m.correct = c.at("correct").get<std::size_t>();
            m.recall = c.at("recall").get<double>();
            m.precision = c.at("precision").get<double>();
            m.f1 = c.at("f1").get<double>();
            m.train.collected = c.at("train_collected").get<std::size_t>();
            m.train.synthetic = c.at("train_synthetic").get<std::size_t>();
            r.classes.push_back(std::move(m));
        }
        r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
        r.total = j.at("total").get<std::size_t>();
        r.overall_recall = j.at("overall_recall").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.macro_f1 = j.at("macro_f1").get<double>();
        r.model_ref = j.value("model_ref", std::string{});
        r.test_set_ref = j.value("test_set_ref", std::string{});
        r.dataset_ref = j.value("dataset_ref", std::string{});
        r.timestamp = j.value("timestamp", std::string{});
        for (const auto& p : j.value("predictions", json::array()))
            r.predictions.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>(), p.at(2).get<std::string>()});
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed report file: ") + e.what());
    }
}

void EvalReport::save(const std::string& path) const { write_file(path, to_json()); }
EvalReport EvalReport::load(const std::string& path) { return from_json(read_file(path)); }

std::string EvalReport::to_csv() const {
    std::string out = "label,test_count,train_count,recall,precision,f1\n";
    out += "Overall," + std::to_string(total) + "," + std::to_string(train_total()) + "," +
           format_double(overall_recall) + ",," + format_double(macro_f1) + "\n";
    for (const auto& c : classes) {
        out += c.label + "," + std::to_string(c.test_count) + "," + std::to_string(c.train.total()) + "," +
               format_double(c.recall) + "," + format_double(c.precision) + "," + format_double(c.f1) + "\n";
    }
    return out;
}

namespace {

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

}  // namespace

std::string EvalReport::to_markdown() const {
    std::string out = "| Class | test | train | Recall |\n|---|---:|---:|---:|\n";
    for (const auto& c : classes) {
        out += "| " + c.label + " | " + std::to_string(c.test_count) + " | " + std::to_string(c.train.total()) +
               " | " + fixed3(c.recall) + " |\n";
    }
    out += "| **All data objects** | " + std::to_string(total) + " | " + std::to_string(train_total()) + " | " +
           fixed3(overall_recall) + " |\n";
    return out;
}

// ---------------------------------------------------------------------------
// Comparison

const DeltaRow& DeltaTable::at(const std::string& label) const {
    for (const auto& r : rows) {
        if (r.label == label) return r;
    }
    throw DataError("delta table has no class '" + label + "'");
}

DeltaTable compare(const EvalReport& report, const EvalReport& baseline, std::string name) {
    if (report.test_set_ref != baseline.test_set_ref)
        throw DataError("reports were computed on different test sets (" + report.test_set_ref + " vs " +
                        baseline.test_set_ref + ")");
    std::set<std::string> a, b;
    for (const auto& c : report.classes) a.insert(c.label);
    for (const auto& c : baseline.classes) b.insert(c.label);
    if (a != b) throw DataError("reports cover different class sets");

    DeltaTable t;
    t.name = std::move(name);
    t.overall = {"Overall", baseline.total, baseline.train_total(), baseline.overall_recall,
                 report.train_total(), report.overall_recall, report.overall_recall - baseline.overall_recall};
    for (const auto& base : baseline.classes) {
        const auto& cur = report.at(base.label);
        if (cur.test_count != base.test_count)
            throw DataError("class '" + base.label + "' has different test counts in the two reports");
        t.rows.push_back({base.label, base.test_count, base.train.total(), base.recall, cur.train.total(),
                          cur.recall, cur.recall - base.recall});
    }
    return t;
}

std::string format_delta(double delta) {
    const auto mag = fixed3(std::abs(delta));
    if (mag == "0.000") return "0.000";
    return (delta > 0 ? "+" : "-") + mag;
}

std::string delta_markdown(const EvalReport& baseline, std::span<const DeltaTable> columns) {
    std::string out = "| Topic | test | train | recall |";
    std::string rule = "|---|---:|---:|---:|";
    for (const auto& col : columns) {
        out += " " + col.name + " train | " + col.name + " Δ-recall |";
        rule += "---:|---:|";
    }
    out += "\n" + rule + "\n";
    auto emit = [&](const std::string& label, std::size_t test, std::size_t train, double recall,
                    auto&& pick) {
        out += "| " + label + " | " + std::to_string(test) + " | " + std::to_string(train) + " | " + fixed3(recall) + " |";
        for (const auto& col : columns) {
            const DeltaRow& row = pick(col);
            const auto d = row.train_delta();
            out += " " + std::string(d > 0 ? "+" + std::to_string(d) : (d < 0 ? std::to_string(d) : "")) + " | " +
                   format_delta(row.delta) + " |";
        }
        out += "\n";
    };
    emit("Overall", baseline.total, baseline.train_total(), baseline.overall_recall,
         [](const DeltaTable& t) -> const DeltaRow& { return t.overall; });
    for (const auto& c : baseline.classes) {
        emit(c.label, c.test_count, c.train.total(), c.recall,
             [&](const DeltaTable& t) -> const DeltaRow& { return t.at(c.label); });
    }
    return out;
}

std::string delta_csv(std::span<const DeltaTable> columns) {
    std::string out = "column,label,test_count,baseline_train,train_delta,baseline_recall,recall,delta\n";
    for (const auto& col : columns) {
        auto emit = [&](const DeltaRow& r) {
            out += col.name + "," + r.label + "," + std::to_string(r.test_count) + "," +
                   std::to_string(r.baseline_train) + "," + std::to_string(r.train_delta()) + "," +
                   format_double(r.baseline_recall) + "," + format_double(r.recall) + "," + format_double(r.delta) +
                   "\n";
        };
        emit(col.overall);
        for (const auto& r : col.rows) emit(r);
    }
    return out;
}

}  // namespace igaiva::classifier
