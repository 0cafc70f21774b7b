#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igaiva/corpus.hpp"
#include "igaiva/features.hpp"

namespace igaiva::classifier {

struct TrainConfig {
    int epochs = 40;
    double learning_rate = 0.5;
    double l2 = 1e-4;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

struct ProgressEvent {
    int epoch = 0;
    int epochs = 0;
    /// Full-data objective (mean cross-entropy + L2 term) after this epoch.
    double mean_loss = 0.0;
    double fraction = 0.0;
};

using ProgressSink = std::function<void(const ProgressEvent&)>;

struct Prediction {
    std::size_t index = 0;
    std::string label;
    std::vector<double> scores;
};

/// F(text feature vector) -> label.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual const std::vector<std::string>& labels() const = 0;
    virtual std::size_t dim() const = 0;
    virtual Prediction predict(const features::FeatureVector& x) const = 0;
};

struct ClassTrainingCount {
    std::size_t collected = 0;
    std::size_t synthetic = 0;
    std::size_t total() const { return collected + synthetic; }
};

/// Multinomial logistic regression.
class ClassifierModel final : public Classifier {
public:
    ClassifierModel() = default;
    ClassifierModel(std::vector<std::string> labels, Eigen::MatrixXd weights, Eigen::VectorXd bias);

    const std::vector<std::string>& labels() const override { return labels_; }
    std::size_t dim() const override { return static_cast<std::size_t>(weights_.cols()); }
    Prediction predict(const features::FeatureVector& x) const override;

    const Eigen::MatrixXd& weights() const { return weights_; }
    const Eigen::VectorXd& bias() const { return bias_; }

    std::string feature_ref;
    TrainConfig config;
    std::map<std::string, ClassTrainingCount> train_counts;
    std::vector<double> loss_history;

    std::string to_json() const;
    static ClassifierModel from_json(const std::string& content);
    void save(const std::string& path) const;
    static ClassifierModel load(const std::string& path);

private:
    std::vector<std::string> labels_;
    Eigen::MatrixXd weights_;
    Eigen::VectorXd bias_;
};

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

struct LossGradient {
    double loss = 0.0;
    Eigen::MatrixXd grad_weights;
    Eigen::VectorXd grad_bias;
};

/// Mean softmax cross-entropy plus (l2 / 2) * ||W||^2 and its gradient.
LossGradient softmax_loss_gradient(const Eigen::MatrixXd& weights, const Eigen::VectorXd& bias,
                                   std::span<const features::FeatureVector> xs,
                                   std::span<const std::size_t> ys, double l2);

/// Mini-batch gradient descent from zero weights. Label order is the order
/// of first appearance in `labels`.
ClassifierModel train(const features::FeatureMatrix& data, std::span<const std::string> row_labels,
                      const TrainConfig& config, const ProgressSink& sink = {});

ClassifierModel train(const corpus::Dataset& train_set, const features::TfidfModel& features,
                      const TrainConfig& config, const ProgressSink& sink = {});

struct ClassMetrics {
    std::string label;
    std::size_t test_count = 0;
    std::size_t correct = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    ClassTrainingCount train;
};

struct PredictionRecord {
    std::string id;
    std::string truth;
    std::string predicted;
    bool correct() const { return truth == predicted; }
};

struct EvalReport {
    std::vector<ClassMetrics> classes;
    /// confusion[truth][predicted], in class order.
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t total = 0;
    double overall_recall = 0.0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::string model_ref;
    std::string test_set_ref;
    std::string dataset_ref;
    std::string timestamp;
    std::vector<PredictionRecord> predictions;

    const ClassMetrics& at(const std::string& label) const;
    std::size_t train_total() const;

    std::string to_json() const;
    static EvalReport from_json(const std::string& content);
    void save(const std::string& path) const;
    static EvalReport load(const std::string& path);
    std::string to_csv() const;
    /// Per-class test/train/recall table with an "All data objects" row.
    std::string to_markdown() const;
};

/// Metrics from a confusion matrix (rows = truth).
EvalReport report_from_confusion(std::vector<std::string> labels,
                                 std::vector<std::vector<std::size_t>> confusion);

/// Fingerprint identifying a test set by its ids.
std::string test_set_fingerprint(const corpus::Dataset& test_set);

EvalReport evaluate(const Classifier& model, const corpus::Dataset& test_set,
                    const features::TfidfModel& features);

struct DeltaRow {
    std::string label;
    std::size_t test_count = 0;
    std::size_t baseline_train = 0;
    double baseline_recall = 0.0;
    std::size_t train = 0;
    double recall = 0.0;
    double delta = 0.0;

    long long train_delta() const {
        return static_cast<long long>(train) - static_cast<long long>(baseline_train);
    }
};

struct DeltaTable {
    std::string name;
    DeltaRow overall;
    std::vector<DeltaRow> rows;

    const DeltaRow& at(const std::string& label) const;
};

/// delta_i = recall_i - baseline_i over an identical test set.
DeltaTable compare(const EvalReport& report, const EvalReport& baseline, std::string name = {});

std::string format_delta(double delta);

/// Overall row first, then one row per class; one train / delta-recall
/// column pair per table, "+num" marking added training messages.
std::string delta_markdown(const EvalReport& baseline, std::span<const DeltaTable> columns);
std::string delta_csv(std::span<const DeltaTable> columns);

}  // namespace igaiva::classifier
