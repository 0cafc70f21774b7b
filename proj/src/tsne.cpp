#include <algorithm>
#include <cmath>
#include <limits>

#include "igaiva/error.hpp"
#include "igaiva/projection.hpp"
#include "igaiva/util.hpp"

namespace igaiva::projection {

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& x) {
    const Eigen::VectorXd norms = x.rowwise().squaredNorm();
    Eigen::MatrixXd d = (-2.0 * x * x.transpose()).colwise() + norms;
    d.rowwise() += norms.transpose();
    d = d.cwiseMax(0.0);
    d.diagonal().setZero();
    return d;
}

double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixXd& y) {
    const auto n = y.rows();
    Eigen::MatrixXd num(n, n);
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) {
                num(i, j) = 0.0;
                continue;
            }
            const double d = (y.row(i) - y.row(j)).squaredNorm();
            num(i, j) = 1.0 / (1.0 + d);
            z += num(i, j);
        }
    }
    double kl = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            const double q = std::max(num(i, j) / z, 1e-300);
            kl += p(i, j) * std::log(p(i, j) / q);
        }
    }
    return kl;
}

constexpr double kEntropyTolerance = 1e-5;
constexpr int kMaxBisection = 200;

}  // namespace

Affinities conditional_affinities(const Eigen::MatrixXd& data, double perplexity) {
    const auto n = data.rows();
    if (n < 2) throw DataError("t-SNE needs at least two points");
    if (!(perplexity > 1.0)) throw UsageError("perplexity must exceed 1");
    const Eigen::MatrixXd dist = squared_distances(data);
    const double target = std::log(perplexity);

    Affinities out;
    out.conditional = Eigen::MatrixXd::Zero(n, n);
    out.entropy.assign(static_cast<std::size_t>(n), 0.0);
    out.beta.assign(static_cast<std::size_t>(n), 1.0);
    Eigen::VectorXd row(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double d_min = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i) d_min = std::min(d_min, dist(i, j));
        }
        double beta = 1.0;
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double entropy = 0.0;
        for (int it = 0; it < kMaxBisection; ++it) {
            double sum = 0.0;
            double weighted = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 0.0;
                    continue;
                }
                const double shifted = dist(i, j) - d_min;
                row[j] = std::exp(-shifted * beta);
                sum += row[j];
                weighted += shifted * row[j];
            }
            entropy = std::log(sum) + beta * weighted / sum;
            const double diff = entropy - target;
            if (std::abs(diff) < kEntropyTolerance) break;
            if (diff > 0.0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        out.conditional.row(i) = row.transpose() / row.sum();
        out.entropy[static_cast<std::size_t>(i)] = entropy;
        out.beta[static_cast<std::size_t>(i)] = beta;
    }
    return out;
}

Embedding2D fit_tsne(const Eigen::MatrixXd& data, std::vector<std::string> ids, const TsneParams& params) {
    const auto n = data.rows();
    if (ids.size() != static_cast<std::size_t>(n)) throw UsageError("id count does not match rows");
    if (params.iterations < 250) throw UsageError("t-SNE needs at least 250 iterations");
    if (static_cast<double>(n) < 3.0 * params.perplexity)
        throw UsageError("perplexity " + format_double(params.perplexity) + " too large for " +
                         std::to_string(n) + " points (need n >= 3 * perplexity)");
    const Eigen::RowVectorXd centroid = data.colwise().mean();
    if ((data.rowwise() - centroid).cwiseAbs().maxCoeff() == 0.0)
        throw DataError("t-SNE: zero-variance input (all points identical)");

    const auto aff = conditional_affinities(data, params.perplexity);
    Eigen::MatrixXd p = aff.conditional + aff.conditional.transpose();
    p /= p.sum();
    p = p.cwiseMax(1e-12);
    p.diagonal().setZero();

    Rng rng(mix64(params.seed, fnv1a64("tsne-init")));
    Eigen::MatrixXd y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i, 0) = 1e-4 * rng.normal();
        y(i, 1) = 1e-4 * rng.normal();
    }
    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
    Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
    Eigen::MatrixXd grad(n, 2);
    Eigen::MatrixXd num(n, n);

    TsneInfo info;
    info.perplexity = params.perplexity;
    info.iterations = params.iterations;
    info.seed = params.seed;

    for (int it = 0; it < params.iterations; ++it) {
        const bool exaggerate = it < params.exaggeration_iterations;
        const double scale = exaggerate ? params.exaggeration : 1.0;
        const double momentum = it < params.exaggeration_iterations ? params.initial_momentum
                                                                    : params.final_momentum;
        double z = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = v;
                num(j, i) = v;
                z += 2.0 * v;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double gx = 0.0;
            double gy = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double mult = (scale * p(i, j) - num(i, j) / z) * num(i, j);
                gx += mult * (y(i, 0) - y(j, 0));
                gy += mult * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4.0 * gx;
            grad(i, 1) = 4.0 * gy;
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < 2; ++c) {
                const bool same_sign = (grad(i, c) > 0.0) == (velocity(i, c) > 0.0);
                gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
                velocity(i, c) = momentum * velocity(i, c) - params.learning_rate * gains(i, c) * grad(i, c);
                y(i, c) += velocity(i, c);
            }
        }
        const Eigen::RowVectorXd mean = y.colwise().mean();
        y.rowwise() -= mean;

        const int done = it + 1;
        if (done == params.exaggeration_iterations) {
            info.kl_after_exaggeration = kl_divergence(p, y);
            info.kl_history.emplace_back(done, info.kl_after_exaggeration);
        } else if (done % 50 == 0 || done == params.iterations) {
            info.kl_history.emplace_back(done, kl_divergence(p, y));
        }
    }
    if (!y.allFinite()) throw DataError("t-SNE diverged (non-finite coordinates)");
    info.kl_final = info.kl_history.back().second;

    Embedding2D emb;
    emb.ids = std::move(ids);
    emb.method = {Projection::Kind::tsne, 0, 1};
    emb.points.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) emb.points.push_back({y(i, 0), y(i, 1)});
    emb.tsne = std::move(info);
    return emb;
}

Embedding2D fit_tsne(const features::FeatureMatrix& data, const TsneParams& params) {
    if (data.dim > params.max_input_dims && data.size() > params.max_input_dims) {
        const auto model = fit_pca(data, params.max_input_dims);
        return fit_tsne(pca_scores(model, data), data.ids, params);
    }
    if (data.dim > params.max_input_dims) {
        const auto k = data.size() - 1;
        if (k >= 2 && k <= data.dim) {
            const auto model = fit_pca(data, k);
            return fit_tsne(pca_scores(model, data), data.ids, params);
        }
    }
    return fit_tsne(to_dense(data), data.ids, params);
}

}  // namespace igaiva::projection
