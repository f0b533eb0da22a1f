#pragma once

// KL-divergence clustering: k-means++ / Lloyd initialization, Student's t soft
// assignment, sharpened target distribution and centroid refinement by
// gradient descent on KL(P || Q).

#include "tlss/common.hpp"
#include "tlss/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace tlss {

template <typename Scalar>
struct SoftAssignment {
    Matrix<Scalar> q;  // n x n_clusters, rows sum to one
    Scalar dof = Scalar(1);
};

template <typename Scalar>
struct ClusterModel {
    Matrix<Scalar> centroids;
    std::vector<int> assignments;
    int epochs_run = 0;
    std::vector<Scalar> epoch_loss;             // mean minibatch KL per epoch
    std::vector<double> changed_fraction;       // hard-assignment churn per epoch

    int n_clusters() const { return static_cast<int>(centroids.rows()); }
};

/// Squared L2 distance from every row of `points` to every centroid.
template <typename DerivedZ, typename DerivedC>
Matrix<typename DerivedZ::Scalar> squared_distances(const Eigen::MatrixBase<DerivedZ>& points,
                                                    const Eigen::MatrixBase<DerivedC>& centroids)
{
    using Scalar = typename DerivedZ::Scalar;
    if (points.cols() != centroids.cols()) {
        throw DimensionError("points and centroids differ in dimension");
    }
    Matrix<Scalar> d2(points.rows(), centroids.rows());
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index k = 0; k < centroids.rows(); ++k) {
            d2(i, k) = (points.row(i) - centroids.row(k)).squaredNorm();
        }
    }
    return d2;
}

/// L2-nearest centroid per row; the lowest index wins ties.
template <typename DerivedZ, typename DerivedC>
std::vector<int> hard_assign(const Eigen::MatrixBase<DerivedZ>& points, const Eigen::MatrixBase<DerivedC>& centroids)
{
    const auto d2 = squared_distances(points, centroids);
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    for (Index i = 0; i < d2.rows(); ++i) {
        Index best = 0;
        for (Index k = 1; k < d2.cols(); ++k) {
            if (d2(i, k) < d2(i, best)) {
                best = k;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

template <typename Derived>
Matrix<typename Derived::Scalar> kmeans_init(const Eigen::MatrixBase<Derived>& points, int n_clusters,
                                             std::uint64_t seed, int max_iterations = 100)
{
    using Scalar = typename Derived::Scalar;
    const Index n = points.rows();
    if (n_clusters < 1) {
        throw ConfigError("n_clusters must be positive");
    }
    if (n < n_clusters) {
        throw ConfigError("k-means needs at least as many points (" + std::to_string(n) + ") as clusters (" +
                          std::to_string(n_clusters) + ")");
    }
    Rng rng = make_stream(seed, "kmeans");

    // k-means++ seeding.
    Matrix<Scalar> centroids(n_clusters, points.cols());
    std::uniform_int_distribution<Index> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));
    Vector<Scalar> closest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int k = 1; k < n_clusters; ++k) {
        const Scalar total = closest.sum();
        Index pick = 0;
        if (total > Scalar(0)) {
            std::uniform_real_distribution<double> u(0.0, static_cast<double>(total));
            double target = u(rng);
            for (pick = 0; pick < n - 1; ++pick) {
                target -= static_cast<double>(closest(pick));
                if (target < 0.0 && closest(pick) > Scalar(0)) {
                    break;
                }
            }
        } else {
            // Every point already coincides with a centroid.
            pick = k;
        }
        centroids.row(k) = points.row(pick);
        closest = closest.cwiseMin((points.rowwise() - centroids.row(k)).rowwise().squaredNorm());
    }

    // Lloyd iterations.
    std::vector<int> assign = hard_assign(points, centroids);
    for (int it = 0; it < max_iterations; ++it) {
        Matrix<Scalar> sums = Matrix<Scalar>::Zero(n_clusters, points.cols());
        std::vector<Index> counts(static_cast<std::size_t>(n_clusters), 0);
        for (Index i = 0; i < n; ++i) {
            const int k = assign[static_cast<std::size_t>(i)];
            sums.row(k) += points.row(i);
            ++counts[static_cast<std::size_t>(k)];
        }
        for (int k = 0; k < n_clusters; ++k) {
            // An emptied cluster keeps its previous centroid.
            if (counts[static_cast<std::size_t>(k)] > 0) {
                centroids.row(k) = sums.row(k) / static_cast<Scalar>(counts[static_cast<std::size_t>(k)]);
            }
        }
        std::vector<int> next = hard_assign(points, centroids);
        if (next == assign) {
            break;
        }
        assign = std::move(next);
    }
    return centroids;
}

/// Student's t kernel: q_ik proportional to (1 + |z_i - mu_k|^2 / d)^(-(d+1)/2).
template <typename DerivedZ, typename DerivedC>
SoftAssignment<typename DerivedZ::Scalar> soft_assign(const Eigen::MatrixBase<DerivedZ>& points,
                                                      const Eigen::MatrixBase<DerivedC>& centroids,
                                                      typename DerivedZ::Scalar dof = 1)
{
    using Scalar = typename DerivedZ::Scalar;
    const Scalar power = -(dof + Scalar(1)) / Scalar(2);
    Matrix<Scalar> q = squared_distances(points, centroids);
    q = (Scalar(1) + q.array() / dof).pow(power).matrix();
    const Vector<Scalar> row_sum = q.rowwise().sum();
    q = row_sum.cwiseInverse().asDiagonal() * q;
    return {std::move(q), dof};
}

/// Sharpened target: p_ik proportional to q_ik^2 / h_k with h_k = sum_i q_ik
/// over the rows given (one minibatch).
template <typename Derived>
Matrix<typename Derived::Scalar> target_distribution(const Eigen::MatrixBase<Derived>& q)
{
    using Scalar = typename Derived::Scalar;
    const RowVector<Scalar> h = q.colwise().sum();
    Matrix<Scalar> p = q.array().square().matrix() * h.cwiseInverse().asDiagonal();
    const Vector<Scalar> row_sum = p.rowwise().sum();
    return row_sum.cwiseInverse().asDiagonal() * p;
}

/// (1/B) sum_i sum_k p_ik log(p_ik / q_ik), with 0 log 0 taken as 0.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar kl_cluster_loss(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q)
{
    using Scalar = typename DerivedP::Scalar;
    if (p.rows() != q.rows() || p.cols() != q.cols()) {
        throw DimensionError("P and Q must have the same shape");
    }
    if (p.rows() == 0) {
        return Scalar(0);
    }
    Scalar total = 0;
    for (Index i = 0; i < p.rows(); ++i) {
        for (Index k = 0; k < p.cols(); ++k) {
            const Scalar pik = p(i, k);
            if (pik > Scalar(0)) {
                total += pik * std::log(pik / q(i, k));
            }
        }
    }
    return total / static_cast<Scalar>(p.rows());
}

/// Gradient of kl_cluster_loss w.r.t. the centroids with P held fixed:
///   dL/dmu_k = -(1/B) sum_i (p_ik - q_ik) ((d+1)/d) (1 + D_ik/d)^-1 (z_i - mu_k)
template <typename DerivedZ, typename DerivedC, typename DerivedP>
Matrix<typename DerivedZ::Scalar> kl_centroid_gradient(const Eigen::MatrixBase<DerivedZ>& points,
                                                       const Eigen::MatrixBase<DerivedC>& centroids,
                                                       const Eigen::MatrixBase<DerivedP>& p,
                                                       typename DerivedZ::Scalar dof = 1)
{
    using Scalar = typename DerivedZ::Scalar;
    const auto sa = soft_assign(points, centroids, dof);
    const Matrix<Scalar> d2 = squared_distances(points, centroids);
    const Scalar scale = (dof + Scalar(1)) / dof / static_cast<Scalar>(points.rows());
    Matrix<Scalar> grad = Matrix<Scalar>::Zero(centroids.rows(), centroids.cols());
    for (Index i = 0; i < points.rows(); ++i) {
        for (Index k = 0; k < centroids.rows(); ++k) {
            const Scalar coeff = (p(i, k) - sa.q(i, k)) / (Scalar(1) + d2(i, k) / dof);
            grad.row(k) -= scale * coeff * (points.row(i) - centroids.row(k));
        }
    }
    return grad;
}

struct RefineOptions {
    double change_threshold = 0.001;
    int max_epochs = 100;
    double lr = 0.1;
    int batch_size = 256;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(change_threshold > 0.0 && change_threshold <= 1.0)) {
            throw ConfigError("change_threshold must lie in (0, 1]");
        }
        if (max_epochs < 0) {
            throw ConfigError("max_epochs must be >= 0");
        }
        if (!(lr > 0.0)) {
            throw ConfigError("cluster lr must be > 0");
        }
        if (batch_size < 1) {
            throw ConfigError("cluster batch_size must be positive");
        }
    }
};

/// Minibatch gradient descent on the centroids against KL(P || Q). Stops once
/// the fraction of points whose hard assignment changed during an epoch falls
/// below change_threshold (a threshold of 1 always stops after one epoch), or
/// after max_epochs. Final assignments are L2-nearest-centroid.
template <typename DerivedZ, typename DerivedC>
ClusterModel<typename DerivedZ::Scalar> refine(const Eigen::MatrixBase<DerivedZ>& points,
                                               const Eigen::MatrixBase<DerivedC>& init_centroids,
                                               const RefineOptions& opts = {})
{
    using Scalar = typename DerivedZ::Scalar;
    opts.validate();
    const Index n = points.rows();
    ClusterModel<Scalar> model;
    model.centroids = init_centroids.template cast<Scalar>();
    if (n == 0) {
        throw ConfigError("cannot cluster an empty embedding set");
    }
    if (!points.allFinite() || !model.centroids.allFinite()) {
        throw NumericError("cluster refinement got non-finite embeddings or centroids");
    }
    Rng rng = make_stream(opts.seed, "cluster-batches");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    std::vector<int> previous = hard_assign(points, model.centroids);
    Matrix<Scalar> batch;
    for (int epoch = 0; epoch < opts.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        Scalar loss_sum = 0;
        int n_batches = 0;
        for (Index lo = 0; lo < n; lo += opts.batch_size) {
            const Index rows = std::min<Index>(opts.batch_size, n - lo);
            batch.resize(rows, points.cols());
            for (Index r = 0; r < rows; ++r) {
                batch.row(r) = points.row(order[static_cast<std::size_t>(lo + r)]);
            }
            const auto sa = soft_assign(batch, model.centroids);
            const Matrix<Scalar> p = target_distribution(sa.q);
            const Scalar loss = kl_cluster_loss(p, sa.q);
            if (!std::isfinite(static_cast<double>(loss))) {
                throw NumericError("cluster refinement produced a non-finite loss");
            }
            loss_sum += loss;
            ++n_batches;
            model.centroids -= Scalar(opts.lr) * kl_centroid_gradient(batch, model.centroids, p);
            if (!model.centroids.allFinite()) {
                throw NumericError("cluster refinement produced non-finite centroids");
            }
        }
        model.epoch_loss.push_back(loss_sum / static_cast<Scalar>(n_batches));
        ++model.epochs_run;

        std::vector<int> current = hard_assign(points, model.centroids);
        Index changed = 0;
        for (Index i = 0; i < n; ++i) {
            changed += current[static_cast<std::size_t>(i)] != previous[static_cast<std::size_t>(i)];
        }
        const double fraction = static_cast<double>(changed) / static_cast<double>(n);
        model.changed_fraction.push_back(fraction);
        previous = std::move(current);
        if (fraction < opts.change_threshold || opts.change_threshold >= 1.0) {
            break;
        }
    }
    model.assignments = hard_assign(points, model.centroids);
    return model;
}

/// k-means++/Lloyd initialization followed by KL refinement.
template <typename Derived>
ClusterModel<typename Derived::Scalar> cluster_embeddings(const Eigen::MatrixBase<Derived>& points, int n_clusters,
                                                          const RefineOptions& opts)
{
    return refine(points, kmeans_init(points, n_clusters, opts.seed), opts);
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.size() != b.size()) {
        throw DimensionError("labelings differ in length");
    }
    const double n = static_cast<double>(a.size());
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ca;
    std::map<int, double> cb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1;
        ca[a[i]] += 1;
        cb[b[i]] += 1;
    }
    auto choose2 = [](double x) { return x * (x - 1) / 2; };
    double sum_joint = 0;
    for (const auto& [key, v] : joint) {
        sum_joint += choose2(v);
    }
    double sum_a = 0;
    double sum_b = 0;
    for (const auto& [key, v] : ca) {
        sum_a += choose2(v);
    }
    for (const auto& [key, v] : cb) {
        sum_b += choose2(v);
    }
    const double expected = sum_a * sum_b / choose2(n);
    const double max_index = (sum_a + sum_b) / 2;
    if (max_index == expected) {
        return 1.0;  // both labelings trivial
    }
    return (sum_joint - expected) / (max_index - expected);
}

}  // namespace tlss
