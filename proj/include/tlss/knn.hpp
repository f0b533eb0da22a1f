#pragma once

#include "tlss/common.hpp"
#include "tlss/encoder.hpp"
#include "tlss/parallel.hpp"

#include <algorithm>
#include <numeric>

namespace tlss {

/// Rows scaled to unit length, guarded like the encoder output.
template <typename Derived>
Matrix<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& x)
{
    using Scalar = typename Derived::Scalar;
    const Vector<Scalar> norms = x.rowwise().norm().cwiseMax(Scalar(kNormEpsilon));
    return norms.cwiseInverse().asDiagonal() * x;
}

template <typename Scalar>
Scalar cosine(const RowVector<Scalar>& a, const RowVector<Scalar>& b)
{
    return a.dot(b) / (std::max(a.norm(), Scalar(kNormEpsilon)) * std::max(b.norm(), Scalar(kNormEpsilon)));
}

/// Plain left-to-right dot product of two rows. Equal rows always give
/// bitwise-equal results, which keeps tie-breaking exact.
template <typename Scalar>
Scalar ordered_dot(const Matrix<Scalar>& m, Index a, Index b)
{
    const Scalar* pa = m.data() + a * m.cols();
    const Scalar* pb = m.data() + b * m.cols();
    Scalar s = 0;
    for (Index j = 0; j < m.cols(); ++j) {
        s += pa[j] * pb[j];
    }
    return s;
}

/// Exact k nearest neighbors of every row by cosine similarity, excluding the
/// row itself. Ordered by similarity descending, ties to the lower index.
template <typename Derived>
std::vector<IndexList> cosine_knn(const Eigen::MatrixBase<Derived>& points, Index k)
{
    using Scalar = typename Derived::Scalar;
    const Index n = points.rows();
    if (k < 0 || k >= n) {
        throw ConfigError("cosine_knn needs 0 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    const Matrix<Scalar> unit = normalize_rows(points);
    std::vector<IndexList> out(static_cast<std::size_t>(n));
    constexpr Index kBlock = 256;
    const Index n_blocks = (n + kBlock - 1) / kBlock;
    parallel_for(n_blocks, [&](long b) {
        const Index lo = b * kBlock;
        const Index rows = std::min(kBlock, n - lo);
        Matrix<Scalar> sim(rows, n);
        for (Index r = 0; r < rows; ++r) {
            for (Index j = 0; j < n; ++j) {
                sim(r, j) = ordered_dot(unit, lo + r, j);
            }
        }
        IndexList order(static_cast<std::size_t>(n));
        for (Index r = 0; r < rows; ++r) {
            const Index i = lo + r;
            std::iota(order.begin(), order.end(), Index{0});
            std::swap(order[static_cast<std::size_t>(i)], order.back());
            auto better = [&](Index a, Index c) {
                const Scalar sa = sim(r, a);
                const Scalar sc = sim(r, c);
                return sa > sc || (sa == sc && a < c);
            };
            std::partial_sort(order.begin(), order.begin() + k, order.end() - 1, better);
            out[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
        }
    });
    return out;
}

/// Indices of the rows in `points` ordered by squared L2 distance to
/// `query`, ties to the lower index.
template <typename Derived, typename DerivedQ>
IndexList l2_order(const Eigen::MatrixBase<Derived>& points, const Eigen::MatrixBase<DerivedQ>& query)
{
    using Scalar = typename Derived::Scalar;
    const Vector<Scalar> d2 = (points.rowwise() - query.template cast<Scalar>().derived()).rowwise().squaredNorm();
    IndexList order(static_cast<std::size_t>(points.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d2(a) < d2(b); });
    return order;
}

}  // namespace tlss
