#pragma once

// Neighborhood-density tailness scores, their momentum smoothing, cluster
// aggregation, softmax budget allocation and nearest-to-centroid OOD picking.

#include "tlss/common.hpp"
#include "tlss/knn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

namespace tlss {

/// Negated mean of exp(cosine) over all ordered pairs inside {z_i} plus its K
/// cosine nearest neighbors, for every row. Higher means sparser.
template <typename Derived>
Vector<typename Derived::Scalar> instance_tailness(const Eigen::MatrixBase<Derived>& embeddings, int k)
{
    using Scalar = typename Derived::Scalar;
    const Index n = embeddings.rows();
    if (k < 1 || n <= k) {
        throw ConfigError("tailness needs 1 <= K < n (K=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    const Matrix<Scalar> unit = normalize_rows(embeddings);
    const auto neighbors = cosine_knn(unit, k);
    Vector<Scalar> scores(n);
    const Scalar pairs = static_cast<Scalar>(k) * static_cast<Scalar>(k + 1);
    parallel_for(n, [&](long i) {
        IndexList group{i};
        const auto& nb = neighbors[static_cast<std::size_t>(i)];
        group.insert(group.end(), nb.begin(), nb.end());
        Scalar total = 0;
        for (std::size_t m = 0; m < group.size(); ++m) {
            for (std::size_t q = m + 1; q < group.size(); ++q) {
                // exp(cos) is symmetric; each unordered pair counts twice.
                total += Scalar(2) * std::exp(ordered_dot(unit, group[m], group[q]));
            }
        }
        scores(i) = -total / pairs;
    });
    return scores;
}

template <typename Scalar>
struct TailnessState {
    Vector<Scalar> scores;
    Vector<Scalar> raw_scores;
    std::optional<int> last_update_epoch;
    double rho = 0.9;
    int neighbor_count = 10;
    int period = 1;  // epochs between updates

    TailnessState() = default;
    TailnessState(double rho_, int neighbor_count_, int period_)
        : rho(rho_), neighbor_count(neighbor_count_), period(period_)
    {
        if (!(rho >= 0.0 && rho <= 1.0)) {
            throw ConfigError("tailness momentum rho must lie in [0, 1]");
        }
        if (neighbor_count < 1) {
            throw ConfigError("tailness K must be positive");
        }
        if (period < 1) {
            throw ConfigError("tailness update period must be positive");
        }
    }
};

/// s^t = rho s^(t-T) + (1 - rho) s_hat^t; the first update (t = 0) copies s_hat.
template <typename Scalar, typename Derived>
void momentum_update(TailnessState<Scalar>& state, const Eigen::MatrixBase<Derived>& raw, int epoch)
{
    if (!state.last_update_epoch) {
        if (epoch != 0) {
            throw ConfigError("first tailness update must happen at epoch 0, got " + std::to_string(epoch));
        }
        state.raw_scores = raw;
        state.scores = raw;
        state.last_update_epoch = 0;
        return;
    }
    if (epoch != *state.last_update_epoch + state.period) {
        throw ConfigError("out-of-order tailness update: expected epoch " +
                          std::to_string(*state.last_update_epoch + state.period) + ", got " +
                          std::to_string(epoch));
    }
    if (raw.size() != state.scores.size()) {
        throw DimensionError("tailness update has a different instance count");
    }
    if (!raw.allFinite()) {
        throw NumericError("non-finite tailness scores");
    }
    state.raw_scores = raw;
    state.scores = Scalar(state.rho) * state.scores + Scalar(1.0 - state.rho) * state.raw_scores;
    state.last_update_epoch = epoch;
}

/// Mean instance score per cluster. An empty cluster gets the global mean.
template <typename Derived>
Vector<typename Derived::Scalar> cluster_tailness(const Eigen::MatrixBase<Derived>& scores,
                                                  const std::vector<int>& assignments, int n_clusters)
{
    using Scalar = typename Derived::Scalar;
    if (static_cast<Index>(assignments.size()) != scores.size()) {
        throw DimensionError("every instance needs a cluster assignment");
    }
    if (scores.size() == 0) {
        throw ConfigError("cluster tailness needs at least one scored instance");
    }
    Vector<Scalar> sums = Vector<Scalar>::Zero(n_clusters);
    std::vector<Index> counts(static_cast<std::size_t>(n_clusters), 0);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const int k = assignments[i];
        if (k < 0 || k >= n_clusters) {
            throw DimensionError("cluster assignment out of range");
        }
        sums(k) += scores(static_cast<Index>(i));
        ++counts[static_cast<std::size_t>(k)];
    }
    const Scalar global_mean = scores.mean();
    for (int k = 0; k < n_clusters; ++k) {
        const auto c = counts[static_cast<std::size_t>(k)];
        sums(k) = c > 0 ? sums(k) / static_cast<Scalar>(c) : global_mean;
    }
    return sums;
}

struct BudgetAllocation {
    std::vector<Index> budgets;
    Index total = 0;
    double temperature = 1.0;
    std::vector<double> fractions;  // softmax weights before integerization
};

/// u = N_b softmax(z / tau) with z the standardized cluster scores (all zero
/// when the population std is below 1e-12), integerized by largest remainder.
template <typename Derived>
BudgetAllocation allocate_budget(const Eigen::MatrixBase<Derived>& cluster_scores, Index total, double temperature)
{
    const Index n = cluster_scores.size();
    if (n < 1) {
        throw ConfigError("budget allocation needs at least one cluster");
    }
    if (total < 0) {
        throw ConfigError("total budget must be >= 0");
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("budget temperature must be > 0");
    }
    const Vector<double> s = cluster_scores.template cast<double>();
    if (!s.allFinite()) {
        throw NumericError("non-finite cluster tailness scores");
    }
    const double mean = s.mean();
    const double sd = std::sqrt((s.array() - mean).square().mean());
    Vector<double> z = Vector<double>::Zero(n);
    if (sd >= 1e-12) {
        z = (s.array() - mean) / sd / temperature;
    }
    const double zmax = z.maxCoeff();
    Vector<double> w = (z.array() - zmax).exp();
    w /= w.sum();

    BudgetAllocation out;
    out.total = total;
    out.temperature = temperature;
    out.fractions.assign(w.data(), w.data() + n);
    out.budgets.resize(static_cast<std::size_t>(n));
    std::vector<double> remainder(static_cast<std::size_t>(n));
    Index assigned = 0;
    for (Index k = 0; k < n; ++k) {
        const double quota = static_cast<double>(total) * w(k);
        const auto whole = static_cast<Index>(std::floor(quota));
        out.budgets[static_cast<std::size_t>(k)] = whole;
        remainder[static_cast<std::size_t>(k)] = quota - static_cast<double>(whole);
        assigned += whole;
    }
    // Leftover units go to the largest remainders; ties favor the higher
    // score, then the lower index, so rank order is preserved.
    IndexList order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double ra = remainder[static_cast<std::size_t>(a)];
        const double rb = remainder[static_cast<std::size_t>(b)];
        if (ra != rb) {
            return ra > rb;
        }
        if (s(a) != s(b)) {
            return s(a) > s(b);
        }
        return a < b;
    });
    for (Index left = total - assigned, j = 0; left > 0; --left, ++j) {
        ++out.budgets[static_cast<std::size_t>(order[static_cast<std::size_t>(j % n)])];
    }
    return out;
}

struct OodSelection {
    std::vector<IndexList> per_cluster;
    IndexList indices;  // all picks, in selection order
};

/// For each cluster (highest tailness first, ties to the lower index), take
/// its budget of still-unused pool rows nearest in L2 to its centroid.
template <typename DerivedP, typename DerivedC, typename DerivedS>
OodSelection sample_ood(const Eigen::MatrixBase<DerivedP>& pool, const Eigen::MatrixBase<DerivedC>& centroids,
                        const std::vector<Index>& budgets, const Eigen::MatrixBase<DerivedS>& cluster_scores)
{
    const Index n_clusters = centroids.rows();
    if (static_cast<Index>(budgets.size()) != n_clusters || cluster_scores.size() != n_clusters) {
        throw DimensionError("budgets and scores must have one entry per cluster");
    }
    Index demand = 0;
    for (Index b : budgets) {
        if (b < 0) {
            throw ConfigError("negative OOD budget");
        }
        demand += b;
    }
    if (demand > pool.rows()) {
        throw ConfigError("OOD pool of " + std::to_string(pool.rows()) + " cannot cover a budget of " +
                          std::to_string(demand));
    }

    IndexList cluster_order(static_cast<std::size_t>(n_clusters));
    std::iota(cluster_order.begin(), cluster_order.end(), Index{0});
    std::stable_sort(cluster_order.begin(), cluster_order.end(),
                     [&](Index a, Index b) { return cluster_scores(a) > cluster_scores(b); });

    OodSelection out;
    out.per_cluster.resize(static_cast<std::size_t>(n_clusters));
    std::vector<bool> used(static_cast<std::size_t>(pool.rows()), false);
    for (const Index k : cluster_order) {
        const Index want = budgets[static_cast<std::size_t>(k)];
        if (want == 0) {
            continue;
        }
        const RowVector<typename DerivedP::Scalar> mu = centroids.row(k).template cast<typename DerivedP::Scalar>();
        auto& picks = out.per_cluster[static_cast<std::size_t>(k)];
        for (const Index j : l2_order(pool, mu)) {
            if (static_cast<Index>(picks.size()) == want) {
                break;
            }
            if (!used[static_cast<std::size_t>(j)]) {
                used[static_cast<std::size_t>(j)] = true;
                picks.push_back(j);
                out.indices.push_back(j);
            }
        }
    }
    return out;
}

/// Inspection dump: index, score, cluster, budget (of that cluster).
template <typename Derived>
void write_tailness_csv(const std::filesystem::path& path, const Eigen::MatrixBase<Derived>& scores,
                        const std::vector<int>& assignments, const BudgetAllocation& budget)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "index,score,cluster,budget\n";
    for (Index i = 0; i < scores.size(); ++i) {
        const int k = assignments[static_cast<std::size_t>(i)];
        out << i << ',' << scores(i) << ',' << k << ',' << budget.budgets[static_cast<std::size_t>(k)] << '\n';
    }
}

}  // namespace tlss
