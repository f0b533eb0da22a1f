#pragma once

// Contrastive objectives over unit-norm embeddings, each returning the scalar
// loss together with its exact gradient w.r.t. the embedding rows. On unit
// vectors cosine similarity equals the dot product, which is what is
// differentiated here; the encoder's normalization supplies the rest.

#include "tlss/common.hpp"
#include "tlss/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tlss {

template <typename Scalar>
struct LossResult {
    Scalar value = 0;
    Matrix<Scalar> adjoint;  // dL/dZ, same shape as the embedding matrix
};

namespace detail {

template <typename Scalar>
Scalar row_dot(const Matrix<Scalar>& z, Index a, Index b)
{
    return z.row(a).dot(z.row(b));
}

/// log sum_j exp(z_i . z_j / tau) over `set`; accumulates d/dZ scaled by
/// `weight` into `adj`.
template <typename Scalar>
Scalar logsumexp_with_grad(const Matrix<Scalar>& z, Index i, const IndexList& set, Scalar tau, Scalar weight,
                           Matrix<Scalar>& adj)
{
    Scalar m = -std::numeric_limits<Scalar>::infinity();
    for (Index j : set) {
        m = std::max(m, row_dot(z, i, j) / tau);
    }
    Scalar sum = 0;
    for (Index j : set) {
        sum += std::exp(row_dot(z, i, j) / tau - m);
    }
    for (Index j : set) {
        const Scalar w = weight * std::exp(row_dot(z, i, j) / tau - m) / sum / tau;
        adj.row(i) += w * z.row(j);
        adj.row(j) += w * z.row(i);
    }
    return m + std::log(sum);
}

inline void check_rows(const IndexList& set, Index rows, const char* what)
{
    for (Index j : set) {
        if (j < 0 || j >= rows) {
            throw DimensionError(std::string(what) + " index out of range");
        }
    }
}

}  // namespace detail

/// Pseudo semantic discrimination:
///   L = -(1/B) sum_i log( sum_{pos} exp(z_i.z_j/tau) / sum_{neg} exp(z_i.z_j/tau) )
/// Anchors are rows 0..B-1 of `z` (B = positives.size()); set entries index
/// any row of `z`. The denominator holds negatives only, so L is unbounded
/// below.
template <typename Scalar>
LossResult<Scalar> psd_loss(const Matrix<Scalar>& z, const std::vector<IndexList>& positives,
                            const std::vector<IndexList>& negatives, Scalar tau)
{
    const Index b = static_cast<Index>(positives.size());
    if (static_cast<Index>(negatives.size()) != b || b > z.rows()) {
        throw DimensionError("positive/negative sets must exist for every anchor row");
    }
    if (b == 0) {
        throw ConfigError("pseudo semantic loss needs at least one anchor");
    }
    if (!(tau > Scalar(0))) {
        throw ConfigError("temperature must be > 0");
    }
    LossResult<Scalar> out;
    out.adjoint = Matrix<Scalar>::Zero(z.rows(), z.cols());
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
    for (Index i = 0; i < b; ++i) {
        const auto& pos = positives[static_cast<std::size_t>(i)];
        const auto& neg = negatives[static_cast<std::size_t>(i)];
        if (pos.empty()) {
            throw ConfigError("anchor " + std::to_string(i) + " has an empty positive set");
        }
        if (neg.empty()) {
            throw ConfigError("anchor " + std::to_string(i) + " has an empty negative set");
        }
        detail::check_rows(pos, z.rows(), "positive");
        detail::check_rows(neg, z.rows(), "negative");
        const Scalar lp = detail::logsumexp_with_grad(z, i, pos, tau, -inv_b, out.adjoint);
        const Scalar ln = detail::logsumexp_with_grad(z, i, neg, tau, inv_b, out.adjoint);
        out.value -= inv_b * (lp - ln);
    }
    return out;
}

/// Same-domain (S^s) and cross-domain (S^d) sets among the anchor rows.
inline void domain_sets(const std::vector<Domain>& domains, std::vector<IndexList>& same,
                        std::vector<IndexList>& different)
{
    const std::size_t b = domains.size();
    same.assign(b, {});
    different.assign(b, {});
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) {
                continue;
            }
            (domains[i] == domains[j] ? same[i] : different[i]).push_back(static_cast<Index>(j));
        }
    }
}

/// Domain discrimination:
///   L = -(1/B) sum_i (1/|S_i^s|) sum_{p in S_i^s}
///         log( e^{z_i.z_p/tau} / (e^{z_i.z_p/tau} + sum_{n in S_i^d} e^{z_i.z_n/tau}) )
/// Each log argument is a probability, so L >= 0.
template <typename Scalar>
LossResult<Scalar> dd_loss(const Matrix<Scalar>& z, const std::vector<IndexList>& same,
                           const std::vector<IndexList>& different, Scalar tau)
{
    const Index b = static_cast<Index>(same.size());
    if (static_cast<Index>(different.size()) != b || b > z.rows()) {
        throw DimensionError("same/different-domain sets must exist for every anchor row");
    }
    if (b == 0) {
        throw ConfigError("domain discrimination loss needs at least one anchor");
    }
    if (!(tau > Scalar(0))) {
        throw ConfigError("temperature must be > 0");
    }
    LossResult<Scalar> out;
    out.adjoint = Matrix<Scalar>::Zero(z.rows(), z.cols());
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
    for (Index i = 0; i < b; ++i) {
        const auto& sp = same[static_cast<std::size_t>(i)];
        const auto& sd = different[static_cast<std::size_t>(i)];
        if (sp.empty() || sd.empty()) {
            throw ConfigError("domain discrimination needs both domains in every batch");
        }
        detail::check_rows(sp, z.rows(), "same-domain");
        detail::check_rows(sd, z.rows(), "cross-domain");

        Scalar m = -std::numeric_limits<Scalar>::infinity();
        for (Index j : sp) {
            m = std::max(m, detail::row_dot(z, i, j) / tau);
        }
        for (Index j : sd) {
            m = std::max(m, detail::row_dot(z, i, j) / tau);
        }
        Scalar cross = 0;  // sum_n exp(a_in - m)
        for (Index n : sd) {
            cross += std::exp(detail::row_dot(z, i, n) / tau - m);
        }
        const Scalar c = inv_b / static_cast<Scalar>(sp.size());
        Scalar inv_denoms = 0;  // sum_p 1 / D_p
        for (Index p : sp) {
            const Scalar a = detail::row_dot(z, i, p) / tau - m;
            const Scalar e = std::exp(a);
            const Scalar denom = e + cross;
            out.value -= c * (a - std::log(denom));
            inv_denoms += Scalar(1) / denom;
            // d/da_ip of -(a - log D) = -(1 - e/D)
            const Scalar g = -c * (Scalar(1) - e / denom) / tau;
            out.adjoint.row(i) += g * z.row(p);
            out.adjoint.row(p) += g * z.row(i);
        }
        for (Index n : sd) {
            // d/da_in of sum_p log D_p = e^{a_in} sum_p 1/D_p
            const Scalar g = c * std::exp(detail::row_dot(z, i, n) / tau - m) * inv_denoms / tau;
            out.adjoint.row(i) += g * z.row(n);
            out.adjoint.row(n) += g * z.row(i);
        }
    }
    return out;
}

/// lhs + weight * rhs, adjoints included.
template <typename Scalar>
LossResult<Scalar> weighted_sum(LossResult<Scalar> lhs, const LossResult<Scalar>& rhs, Scalar weight)
{
    if (weight == Scalar(0)) {
        return lhs;
    }
    lhs.value += weight * rhs.value;
    lhs.adjoint += weight * rhs.adjoint;
    return lhs;
}

template <typename Scalar>
struct PretrainLoss {
    Scalar psd = 0;
    Scalar dd = 0;
    LossResult<Scalar> total;  // psd + alpha * dd
};

/// Contrastive pretraining objective psd + alpha * dd. With alpha = 0 the
/// domain term is skipped entirely (single-domain batches allowed).
template <typename Scalar>
PretrainLoss<Scalar> cpt_loss(const Matrix<Scalar>& z, const std::vector<IndexList>& positives,
                              const std::vector<IndexList>& negatives, const std::vector<IndexList>& same,
                              const std::vector<IndexList>& different, Scalar tau, Scalar alpha)
{
    PretrainLoss<Scalar> out;
    auto psd = psd_loss(z, positives, negatives, tau);
    out.psd = psd.value;
    if (alpha == Scalar(0)) {
        out.total = std::move(psd);
        return out;
    }
    const auto dd = dd_loss(z, same, different, tau);
    out.dd = dd.value;
    out.total = weighted_sum(std::move(psd), dd, alpha);
    return out;
}

template <typename Scalar>
struct GuidedLossResult {
    Scalar value = 0;
    Matrix<Scalar> anchor_adjoint;
    Matrix<Scalar> positive_adjoint;
    Matrix<Scalar> negative_adjoint;
};

/// Guided contrastive loss over rows i:
///   (1/B) sum_i (1 + w_pos_i)(1 - y_i.y_i^p) + (1 - w_neg_i)(1 + y_i.y_i^n)
template <typename Scalar>
GuidedLossResult<Scalar> gcl_loss(const Matrix<Scalar>& anchors, const Matrix<Scalar>& positives,
                                  const Matrix<Scalar>& negatives, const Vector<Scalar>& w_pos,
                                  const Vector<Scalar>& w_neg)
{
    const Index b = anchors.rows();
    if (positives.rows() != b || negatives.rows() != b || w_pos.size() != b || w_neg.size() != b ||
        positives.cols() != anchors.cols() || negatives.cols() != anchors.cols()) {
        throw DimensionError("guided contrastive inputs disagree in shape");
    }
    if (b == 0) {
        throw ConfigError("guided contrastive loss needs at least one anchor");
    }
    GuidedLossResult<Scalar> out;
    const Scalar inv_b = Scalar(1) / static_cast<Scalar>(b);
    const Vector<Scalar> cos_pos = (anchors.array() * positives.array()).rowwise().sum();
    const Vector<Scalar> cos_neg = (anchors.array() * negatives.array()).rowwise().sum();
    const Vector<Scalar> pull = (Scalar(1) + w_pos.array()) * inv_b;
    const Vector<Scalar> push = (Scalar(1) - w_neg.array()) * inv_b;
    out.value = (pull.array() * (Scalar(1) - cos_pos.array())).sum() +
                (push.array() * (Scalar(1) + cos_neg.array())).sum();
    out.anchor_adjoint = -(pull.asDiagonal() * positives) + push.asDiagonal() * negatives;
    out.positive_adjoint = -(pull.asDiagonal() * anchors);
    out.negative_adjoint = push.asDiagonal() * anchors;
    return out;
}

/// Distillation loss:
///   (1/(B(B-1))) sum_{i != j} (z_i.z_j - y_i.y_j)^2
/// Gradient is w.r.t. y only; the guiding embeddings z are constants.
template <typename Scalar>
LossResult<Scalar> dl_loss(const Matrix<Scalar>& guide, const Matrix<Scalar>& student)
{
    const Index b = student.rows();
    if (guide.rows() != b) {
        throw DimensionError("guide and student batches differ in size");
    }
    if (b < 2) {
        throw ConfigError("distillation loss needs a batch of at least 2");
    }
    Matrix<Scalar> delta = guide * guide.transpose() - student * student.transpose();
    delta.diagonal().setZero();
    const Scalar scale = Scalar(1) / (static_cast<Scalar>(b) * static_cast<Scalar>(b - 1));
    LossResult<Scalar> out;
    out.value = scale * delta.squaredNorm();
    out.adjoint = Scalar(-4) * scale * delta * student;
    return out;
}

template <typename Scalar>
struct GuidedLearningLoss {
    Scalar gcl = 0;
    Scalar dl = 0;
    Scalar total = 0;  // gcl + beta * dl
    Matrix<Scalar> anchor_adjoint;
    Matrix<Scalar> positive_adjoint;
    Matrix<Scalar> negative_adjoint;
};

/// gcl + beta * dl; the distillation term acts on the anchor rows.
template <typename Scalar>
GuidedLearningLoss<Scalar> gl_loss(const Matrix<Scalar>& guide_anchors, const Matrix<Scalar>& anchors,
                                   const Matrix<Scalar>& positives, const Matrix<Scalar>& negatives,
                                   const Vector<Scalar>& w_pos, const Vector<Scalar>& w_neg, Scalar beta)
{
    auto g = gcl_loss(anchors, positives, negatives, w_pos, w_neg);
    GuidedLearningLoss<Scalar> out;
    out.gcl = g.value;
    out.anchor_adjoint = std::move(g.anchor_adjoint);
    out.positive_adjoint = std::move(g.positive_adjoint);
    out.negative_adjoint = std::move(g.negative_adjoint);
    if (beta != Scalar(0)) {
        const auto d = dl_loss(guide_anchors, anchors);
        out.dl = d.value;
        out.anchor_adjoint += beta * d.adjoint;
    }
    out.total = out.gcl + beta * out.dl;
    return out;
}

}  // namespace tlss
