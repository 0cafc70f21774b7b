#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "igaiva/features.hpp"

namespace igaiva::projection {

/// Principal axes of a feature matrix.
struct PcaModel {
    Eigen::VectorXd mean;
    /// D x K, one orthonormal component per column.
    Eigen::MatrixXd components;
    std::vector<double> explained_variance;
    std::vector<double> explained_variance_ratio;
    double total_variance = 0.0;
    bool converged = false;
    int iterations = 0;

    std::size_t num_components() const { return static_cast<std::size_t>(components.cols()); }
    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

struct PcaOptions {
    /// Extra block columns beyond K in the subspace iteration.
    std::size_t oversample = 10;
    int max_iterations = 2000;
    /// Converged when every Ritz residual is below tolerance * largest eigenvalue.
    double tolerance = 1e-11;
    std::uint64_t seed = 0x5eed;
};

/// Top-K principal components of the sample covariance.
///
/// Works on the sparse rows directly: the centered covariance is applied as
/// X^T X v - n mu (mu^T v), and a block subspace iteration with Rayleigh-Ritz
/// extraction finds the leading eigenpairs. Each component is signed so its
/// largest-magnitude coordinate is positive.
PcaModel fit_pca(const features::FeatureMatrix& data, std::size_t k, const PcaOptions& options = {});

/// n x K matrix of component scores.
Eigen::MatrixXd pca_scores(const PcaModel& model, const features::FeatureMatrix& data);

/// Squared reconstruction error of the data using the first `k` components.
double pca_reconstruction_error(const PcaModel& model, const features::FeatureMatrix& data,
                                std::size_t k);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point2&) const = default;
};

struct TsneInfo {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    double kl_final = 0.0;
    /// KL right after early exaggeration stops.
    double kl_after_exaggeration = 0.0;
    /// (iteration, KL) checkpoints.
    std::vector<std::pair<int, double>> kl_history;
};

struct Projection {
    enum class Kind { pca, tsne };
    Kind kind = Kind::pca;
    std::size_t dim_x = 0;
    std::size_t dim_y = 1;

    std::string describe() const;
};

struct Embedding2D {
    std::vector<std::string> ids;
    std::vector<Point2> points;
    Projection method;
    std::optional<TsneInfo> tsne;

    std::size_t size() const { return ids.size(); }
};

Embedding2D project_pca(const PcaModel& model, const features::FeatureMatrix& data, std::size_t dim_x,
                        std::size_t dim_y);

struct TsneParams {
    double perplexity = 30.0;
    int iterations = 1000;
    std::uint64_t seed = 0;
    double learning_rate = 200.0;
    double exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    /// Inputs wider than this are PCA-reduced first.
    std::size_t max_input_dims = 50;
};

/// Row-conditional Gaussian affinities with per-row bandwidth tuned so that
/// each row's entropy (nats) equals ln(perplexity).
struct Affinities {
    Eigen::MatrixXd conditional;
    std::vector<double> entropy;
    std::vector<double> beta;
};

Affinities conditional_affinities(const Eigen::MatrixXd& data, double perplexity);

/// Exact O(n^2) t-SNE.
Embedding2D fit_tsne(const features::FeatureMatrix& data, const TsneParams& params = {});
Embedding2D fit_tsne(const Eigen::MatrixXd& data, std::vector<std::string> ids,
                     const TsneParams& params = {});

/// Dense copy of sparse rows.
Eigen::MatrixXd to_dense(const features::FeatureMatrix& data);
features::FeatureMatrix from_dense(const Eigen::MatrixXd& data, std::vector<std::string> ids = {});

std::string embedding_to_csv(const Embedding2D& embedding);
Embedding2D embedding_from_csv(const std::string& content);

}  // namespace igaiva::projection
