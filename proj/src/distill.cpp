#include "tlss/distill.hpp"

#include "tlss/knn.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

namespace tlss {

void DistillConfig::validate() const
{
    if (k_kd < 1) {
        throw ConfigError("k_kd must be positive");
    }
    if (!(beta >= 0.0)) {
        throw ConfigError("beta must be >= 0");
    }
    if (epochs < 0) {
        throw ConfigError("distill epochs must be >= 0");
    }
    if (batch_size < 2) {
        throw ConfigError("distill batch_size must be >= 2");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("distill lr must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("distill momentum must lie in [0, 1)");
    }
}

std::vector<int> farthest_clusters(const Matrix<double>& centroid_distances, const std::vector<IndexList>& members)
{
    const Index n = centroid_distances.rows();
    std::vector<int> out(static_cast<std::size_t>(n), -1);
    for (Index k = 0; k < n; ++k) {
        int best = -1;
        for (Index j = 0; j < n; ++j) {
            if (j == k || members[static_cast<std::size_t>(j)].empty()) {
                continue;
            }
            if (best < 0 || centroid_distances(k, j) > centroid_distances(k, best)) {
                best = static_cast<int>(j);
            }
        }
        out[static_cast<std::size_t>(k)] = best;
    }
    return out;
}

GuideIndex build_guide_index(const EncoderParams<double>& guide, const Dataset& id, int n_clusters, int k_kd,
                             const RefineOptions& refine)
{
    if (n_clusters < 2) {
        throw ConfigError("guided sampling needs at least 2 clusters");
    }
    if (k_kd < 1 || k_kd >= id.size()) {
        throw ConfigError("k_kd must lie in [1, ID size)");
    }
    GuideIndex index;
    index.embeddings = embed(guide, id.features_as_double());
    index.clusters = cluster_embeddings(index.embeddings, n_clusters, refine);
    index.neighbors = cosine_knn(index.embeddings, k_kd);
    index.members.assign(static_cast<std::size_t>(n_clusters), {});
    for (std::size_t i = 0; i < index.clusters.assignments.size(); ++i) {
        index.members[static_cast<std::size_t>(index.clusters.assignments[i])].push_back(static_cast<Index>(i));
    }
    const auto& mu = index.clusters.centroids;
    index.centroid_distances.resize(n_clusters, n_clusters);
    for (Index a = 0; a < n_clusters; ++a) {
        for (Index c = 0; c < n_clusters; ++c) {
            index.centroid_distances(a, c) = (mu.row(a) - mu.row(c)).norm();
        }
    }
    index.farthest = farthest_clusters(index.centroid_distances, index.members);
    return index;
}

GuidePair sample_guide_pair(const GuideIndex& index, Index anchor, Rng& rng)
{
    if (anchor < 0 || anchor >= index.embeddings.rows()) {
        throw DimensionError("anchor index out of range");
    }
    const auto& nb = index.neighbors[static_cast<std::size_t>(anchor)];
    const int own = index.clusters.assignments[static_cast<std::size_t>(anchor)];
    const int far = index.farthest[static_cast<std::size_t>(own)];
    if (far < 0) {
        throw ConfigError("no non-empty cluster other than the anchor's own");
    }
    const auto& pool = index.members[static_cast<std::size_t>(far)];

    GuidePair pair;
    pair.anchor = anchor;
    std::uniform_int_distribution<std::size_t> pick_pos(0, nb.size() - 1);
    pair.positive = nb[pick_pos(rng)];
    std::uniform_int_distribution<std::size_t> pick_neg(0, pool.size() - 1);
    pair.negative = pool[pick_neg(rng)];
    pair.w_pos = ordered_dot(index.embeddings, anchor, pair.positive);
    pair.w_neg = ordered_dot(index.embeddings, anchor, pair.negative);
    return pair;
}

DistillResult run_distill(const EncoderParams<double>& guide, const Dataset& id, const DistillConfig& config,
                          int n_clusters, const RefineOptions& refine)
{
    config.validate();
    if (id.dim() != guide.config.input_dim) {
        throw DimensionError("ID data dimension does not match the guiding encoder");
    }
    if (id.size() < 2) {
        throw ConfigError("distillation needs at least 2 ID samples");
    }
    DistillResult result;
    result.params = guide;  // g starts as an exact copy of f
    if (config.epochs == 0) {
        return result;
    }

    RefineOptions ro = refine;
    ro.seed = stream_seed(config.seed, "guide-cluster");
    const GuideIndex index = build_guide_index(guide, id, n_clusters, config.k_kd, ro);
    const Matrix<double> x = id.features_as_double();
    SgdMomentum<double> opt(config.lr, config.momentum);
    Rng batch_rng = make_stream(config.seed, "batching");
    Rng pair_rng = make_stream(config.seed, "guide-sampling");

    const Index n = id.size();
    const Index n_batches = std::max<Index>(1, std::min<Index>(n / 2, (n + config.batch_size - 1) / config.batch_size));
    IndexList order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    bool first_step = true;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), batch_rng);
        DistillLogRow row;
        row.epoch = epoch;
        for (Index t = 0; t < n_batches; ++t) {
            const Index lo = t * n / n_batches;
            const Index hi = (t + 1) * n / n_batches;
            const Index bsz = hi - lo;
            Matrix<double> rows(3 * bsz, x.cols());
            Matrix<double> guide_anchors(bsz, index.embeddings.cols());
            Vector<double> w_pos(bsz);
            Vector<double> w_neg(bsz);
            for (Index i = 0; i < bsz; ++i) {
                const GuidePair p = sample_guide_pair(index, order[static_cast<std::size_t>(lo + i)], pair_rng);
                rows.row(i) = x.row(p.anchor);
                rows.row(bsz + i) = x.row(p.positive);
                rows.row(2 * bsz + i) = x.row(p.negative);
                guide_anchors.row(i) = index.embeddings.row(p.anchor);
                w_pos(i) = p.w_pos;
                w_neg(i) = p.w_neg;
            }
            const auto pass = forward_pass(result.params, rows);
            const Matrix<double> y_anchor = pass.embeddings.topRows(bsz);
            const Matrix<double> y_pos = pass.embeddings.middleRows(bsz, bsz);
            const Matrix<double> y_neg = pass.embeddings.bottomRows(bsz);
            const auto loss = gl_loss(guide_anchors, y_anchor, y_pos, y_neg, w_pos, w_neg, config.beta);
            if (!std::isfinite(loss.total)) {
                throw NumericError("distillation loss became non-finite at epoch " + std::to_string(epoch));
            }
            if (first_step) {
                result.initial_dl = loss.dl;
                first_step = false;
            }
            Matrix<double> adjoint(3 * bsz, pass.embeddings.cols());
            adjoint.topRows(bsz) = loss.anchor_adjoint;
            adjoint.middleRows(bsz, bsz) = loss.positive_adjoint;
            adjoint.bottomRows(bsz) = loss.negative_adjoint;
            opt.step(result.params, backward(result.params, pass, adjoint));
            row.gcl += loss.gcl;
            row.dl += loss.dl;
            row.gl += loss.total;
        }
        row.gcl /= static_cast<double>(n_batches);
        row.dl /= static_cast<double>(n_batches);
        row.gl /= static_cast<double>(n_batches);
        result.log.push_back(row);
    }
    result.velocity = opt.velocity();
    return result;
}

void write_distill_log(const std::filesystem::path& path, const std::vector<DistillLogRow>& log)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "epoch,L_GCL,L_DL,L_GL\n";
    for (const auto& r : log) {
        out << r.epoch << ',' << r.gcl << ',' << r.dl << ',' << r.gl << '\n';
    }
}

}  // namespace tlss
