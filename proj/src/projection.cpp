#include "igaiva/projection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "igaiva/error.hpp"
#include "igaiva/util.hpp"

namespace igaiva::projection {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Applies the centered sample covariance to a block of vectors without
// forming either the centered matrix or the covariance.
class CenteredCovariance {
public:
    CenteredCovariance(const features::FeatureMatrix& data, const Eigen::VectorXd& mean)
        : data_(data), mean_(mean) {}

    RowMatrix apply(const RowMatrix& v) const {
        const auto n = static_cast<Eigen::Index>(data_.size());
        const auto b = v.cols();
        // u = X v - 1 (mu^T v)
        RowMatrix u = RowMatrix::Zero(n, b);
        const Eigen::RowVectorXd mu_v = mean_.transpose() * v;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = data_.rows[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < row.nnz(); ++k) u.row(i) += row.values[k] * v.row(row.indices[k]);
            u.row(i) -= mu_v;
        }
        // X^T u - mu (1^T u)
        RowMatrix out = RowMatrix::Zero(v.rows(), b);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& row = data_.rows[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < row.nnz(); ++k) out.row(row.indices[k]) += row.values[k] * u.row(i);
        }
        const Eigen::RowVectorXd col_sums = u.colwise().sum();
        out -= mean_ * col_sums;
        out /= static_cast<double>(n - 1);
        return out;
    }

private:
    const features::FeatureMatrix& data_;
    const Eigen::VectorXd& mean_;
};

RowMatrix orthonormalize(const RowMatrix& m) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    return q;
}

void check_rows(const features::FeatureMatrix& data) {
    for (const auto& row : data.rows) {
        if (row.dim != data.dim) throw DataError("feature row dimension does not match matrix");
    }
}

}  // namespace

PcaModel fit_pca(const features::FeatureMatrix& data, std::size_t k, const PcaOptions& options) {
    check_rows(data);
    const std::size_t n = data.size();
    const std::size_t D = data.dim;
    if (k < 2) throw UsageError("PCA needs K >= 2");
    if (n < k + 1) throw DataError("PCA needs at least K+1 samples (" + std::to_string(n) + " given)");
    if (k > D) throw DataError("PCA: K exceeds the feature dimension");

    PcaModel model;
    model.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(D));
    for (const auto& row : data.rows) {
        for (std::size_t j = 0; j < row.nnz(); ++j) model.mean[row.indices[j]] += row.values[j];
    }
    model.mean /= static_cast<double>(n);

    const double mean_sq = model.mean.squaredNorm();
    double total = 0.0;
    double max_dev = 0.0;
    for (const auto& row : data.rows) {
        double dev = row.squared_norm() + mean_sq;
        for (std::size_t j = 0; j < row.nnz(); ++j)
            dev -= 2.0 * row.values[j] * model.mean[row.indices[j]];
        dev = std::max(dev, 0.0);
        total += dev;
        max_dev = std::max(max_dev, dev);
    }
    if (max_dev <= 1e-24) throw DataError("PCA: zero-variance input (all samples identical)");
    model.total_variance = total / static_cast<double>(n - 1);

    const auto block = static_cast<Eigen::Index>(std::min(D, k + options.oversample));
    const auto Dn = static_cast<Eigen::Index>(D);
    const CenteredCovariance cov(data, model.mean);

    Rng rng(options.seed);
    RowMatrix v(Dn, block);
    for (Eigen::Index i = 0; i < Dn; ++i)
        for (Eigen::Index j = 0; j < block; ++j) v(i, j) = rng.normal();
    v = orthonormalize(v);

    RowMatrix ritz_vectors;
    Eigen::VectorXd ritz_values;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const RowMatrix z = cov.apply(v);
        Eigen::MatrixXd t = v.transpose() * z;
        t = 0.5 * (t + t.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
        // Eigen sorts ascending; reverse to descending.
        const Eigen::MatrixXd s = eig.eigenvectors().rowwise().reverse();
        ritz_values = eig.eigenvalues().reverse();
        ritz_vectors = v * s;
        const RowMatrix z_ritz = z * s;
        double worst = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const auto col = static_cast<Eigen::Index>(c);
            const double r = (z_ritz.col(col) - ritz_values[col] * ritz_vectors.col(col)).norm();
            worst = std::max(worst, r);
        }
        model.iterations = it;
        if (worst <= options.tolerance * std::max(ritz_values[0], 1e-300)) {
            model.converged = true;
            break;
        }
        v = orthonormalize(z_ritz);
    }

    const auto K = static_cast<Eigen::Index>(k);
    model.components = ritz_vectors.leftCols(K);
    for (Eigen::Index c = 0; c < K; ++c) {
        Eigen::Index arg = 0;
        model.components.col(c).cwiseAbs().maxCoeff(&arg);
        if (model.components(arg, c) < 0.0) model.components.col(c) *= -1.0;
        const double lambda = std::max(ritz_values[c], 0.0);
        model.explained_variance.push_back(lambda);
        model.explained_variance_ratio.push_back(lambda / model.total_variance);
    }
    return model;
}

Eigen::MatrixXd pca_scores(const PcaModel& model, const features::FeatureMatrix& data) {
    check_rows(data);
    if (data.dim != model.dim()) throw DataError("PCA model dimension does not match data");
    const auto K = model.components.cols();
    const Eigen::RowVectorXd mean_proj = model.mean.transpose() * model.components;
    Eigen::MatrixXd scores(static_cast<Eigen::Index>(data.size()), K);
    for (std::size_t i = 0; i < data.size(); ++i) {
        Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(K);
        const auto& row = data.rows[i];
        for (std::size_t j = 0; j < row.nnz(); ++j) s += row.values[j] * model.components.row(row.indices[j]);
        scores.row(static_cast<Eigen::Index>(i)) = s - mean_proj;
    }
    return scores;
}

double pca_reconstruction_error(const PcaModel& model, const features::FeatureMatrix& data,
                                std::size_t k) {
    if (k > model.num_components()) throw UsageError("reconstruction rank exceeds fitted components");
    const Eigen::MatrixXd dense = to_dense(data);
    const Eigen::MatrixXd centered = dense.rowwise() - model.mean.transpose();
    const auto basis = model.components.leftCols(static_cast<Eigen::Index>(k));
    const Eigen::MatrixXd recon = (centered * basis) * basis.transpose();
    return (centered - recon).squaredNorm();
}

std::string Projection::describe() const {
    if (kind == Kind::tsne) return "tsne";
    return "pca(" + std::to_string(dim_x) + "," + std::to_string(dim_y) + ")";
}

Embedding2D project_pca(const PcaModel& model, const features::FeatureMatrix& data, std::size_t dim_x,
                        std::size_t dim_y) {
    const auto K = model.num_components();
    if (dim_x >= K || dim_y >= K)
        throw UsageError("PCA dimensions must lie in [0, " + std::to_string(K - 1) + "]");
    if (dim_x == dim_y) throw UsageError("PCA dimensions must differ");
    const auto scores = pca_scores(model, data);
    Embedding2D emb;
    emb.ids = data.ids;
    emb.method = {Projection::Kind::pca, dim_x, dim_y};
    emb.points.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        emb.points.push_back({scores(r, static_cast<Eigen::Index>(dim_x)),
                              scores(r, static_cast<Eigen::Index>(dim_y))});
    }
    return emb;
}

Eigen::MatrixXd to_dense(const features::FeatureMatrix& data) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(data.size()),
                                              static_cast<Eigen::Index>(data.dim));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& row = data.rows[i];
        for (std::size_t j = 0; j < row.nnz(); ++j)
            m(static_cast<Eigen::Index>(i), row.indices[j]) = row.values[j];
    }
    return m;
}

features::FeatureMatrix from_dense(const Eigen::MatrixXd& data, std::vector<std::string> ids) {
    features::FeatureMatrix fm;
    fm.dim = static_cast<std::size_t>(data.cols());
    if (ids.empty()) {
        for (Eigen::Index i = 0; i < data.rows(); ++i) ids.push_back("r" + std::to_string(i));
    }
    if (ids.size() != static_cast<std::size_t>(data.rows())) throw UsageError("id count does not match rows");
    fm.ids = std::move(ids);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        features::FeatureVector v;
        v.dim = fm.dim;
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            if (data(i, j) != 0.0) {
                v.indices.push_back(static_cast<std::uint32_t>(j));
                v.values.push_back(data(i, j));
            }
        }
        fm.rows.push_back(std::move(v));
    }
    return fm;
}

std::string embedding_to_csv(const Embedding2D& embedding) {
    std::string out = "id,x,y\n";
    for (std::size_t i = 0; i < embedding.size(); ++i) {
        out += embedding.ids[i] + "," + format_double(embedding.points[i].x) + "," +
               format_double(embedding.points[i].y) + "\n";
    }
    return out;
}

Embedding2D embedding_from_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line) || trim(line) != "id,x,y") throw DataError("embedding CSV: expected header id,x,y");
    Embedding2D emb;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto parts = split(trim(line), ',');
        if (parts.size() != 3) throw DataError("embedding CSV line " + std::to_string(line_no) + ": expected 3 fields");
        char* end = nullptr;
        const double x = std::strtod(parts[1].c_str(), &end);
        const double y = std::strtod(parts[2].c_str(), &end);
        if (!std::isfinite(x) || !std::isfinite(y))
            throw DataError("embedding CSV line " + std::to_string(line_no) + ": non-finite coordinate");
        emb.ids.push_back(parts[0]);
        emb.points.push_back({x, y});
    }
    return emb;
}

}  // namespace igaiva::projection
