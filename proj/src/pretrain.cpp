#include "tlss/pretrain.hpp"

#include "tlss/knn.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

namespace tlss {

void PretrainConfig::validate() const
{
    if (k_pos < 0) {
        throw ConfigError("k_pos must be >= 0");
    }
    if (!(alpha >= 0.0)) {
        throw ConfigError("alpha must be >= 0");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("contrastive temperature must be > 0");
    }
    if (refresh_period < 1) {
        throw ConfigError("refresh_period must be positive");
    }
    if (batch_size < 4) {
        throw ConfigError("pretrain batch_size must be >= 4");
    }
    if (epochs < 0) {
        throw ConfigError("pretrain epochs must be >= 0");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("pretrain lr must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("pretrain momentum must lie in [0, 1)");
    }
    augment.validate();
}

NeighborIndex build_neighbor_index(const Matrix<double>& embeddings, const std::vector<Domain>& domains, int k_pos)
{
    if (static_cast<Index>(domains.size()) != embeddings.rows()) {
        throw DimensionError("one domain tag per embedding row required");
    }
    if (k_pos < 0) {
        throw ConfigError("k_pos must be >= 0");
    }
    NeighborIndex index;
    index.neighbors.assign(domains.size(), {});
    if (k_pos == 0) {
        return index;
    }
    for (const Domain d : {Domain::ID, Domain::OOD}) {
        IndexList rows;
        for (std::size_t i = 0; i < domains.size(); ++i) {
            if (domains[i] == d) {
                rows.push_back(static_cast<Index>(i));
            }
        }
        if (rows.empty()) {
            continue;
        }
        if (static_cast<Index>(rows.size()) <= k_pos) {
            throw ConfigError(std::string(d == Domain::ID ? "ID" : "OOD") + " domain has " +
                              std::to_string(rows.size()) + " instances, needs more than k_pos=" +
                              std::to_string(k_pos));
        }
        Matrix<double> sub(static_cast<Index>(rows.size()), embeddings.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            sub.row(static_cast<Index>(r)) = embeddings.row(rows[r]);
        }
        // Local indices are increasing in global index, so the lower-index
        // tie-break carries over.
        const auto local = cosine_knn(sub, k_pos);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            auto& out = index.neighbors[static_cast<std::size_t>(rows[r])];
            for (Index j : local[r]) {
                out.push_back(rows[static_cast<std::size_t>(j)]);
            }
        }
    }
    return index;
}

namespace {

struct MergedSet {
    Matrix<double> features;  // ID rows first, then selected OOD rows
    std::vector<Domain> domains;
    IndexList id_rows;
    IndexList ood_rows;
};

MergedSet merge(const Matrix<double>& id_features, const Matrix<double>& ood_features, const IndexList& selected)
{
    MergedSet m;
    const Index n_id = id_features.rows();
    const Index n = n_id + static_cast<Index>(selected.size());
    m.features.resize(n, id_features.cols());
    m.features.topRows(n_id) = id_features;
    m.domains.assign(static_cast<std::size_t>(n_id), Domain::ID);
    for (Index i = 0; i < n_id; ++i) {
        m.id_rows.push_back(i);
    }
    for (std::size_t k = 0; k < selected.size(); ++k) {
        const Index row = n_id + static_cast<Index>(k);
        m.features.row(row) = ood_features.row(selected[k]);
        m.domains.push_back(Domain::OOD);
        m.ood_rows.push_back(row);
    }
    return m;
}

/// Slice `t` of `n_slices` near-equal contiguous pieces of `perm`.
IndexList slice(const IndexList& perm, Index t, Index n_slices)
{
    const auto n = static_cast<Index>(perm.size());
    const Index lo = t * n / n_slices;
    const Index hi = (t + 1) * n / n_slices;
    return IndexList(perm.begin() + lo, perm.begin() + hi);
}

/// Tops a batch up to `minimum` members of a domain with random extra draws.
void pad_domain(IndexList& part, const IndexList& pool, Index minimum, Rng& rng)
{
    if (pool.empty()) {
        return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::unordered_set<Index> have(part.begin(), part.end());
    const Index target = std::min<Index>(minimum, static_cast<Index>(pool.size()));
    while (static_cast<Index>(part.size()) < target) {
        const Index j = pool[pick(rng)];
        if (have.insert(j).second) {
            part.push_back(j);
        }
    }
}

}  // namespace

PretrainResult run_pretrain(const Dataset& id, const Dataset& ood_pool, EncoderParams<double> init,
                            const ClusterConfig& cluster, const TailnessConfig& tailness,
                            const PretrainConfig& config, const PretrainHooks& hooks)
{
    config.validate();
    cluster.validate();
    tailness.validate();
    if (id.empty()) {
        throw ConfigError("pretraining needs a non-empty ID dataset");
    }
    if (id.dim() != init.config.input_dim) {
        throw DimensionError("ID data dimension " + std::to_string(id.dim()) + " does not match encoder input " +
                             std::to_string(init.config.input_dim));
    }
    const bool with_ood = config.use_ood && !ood_pool.empty();
    if (with_ood && ood_pool.dim() != id.dim()) {
        throw DimensionError("OOD pool dimension does not match ID data");
    }
    const Index budget = with_ood ? tailness.budget : 0;

    PretrainResult result;
    result.params = std::move(init);
    result.tailness = TailnessState<double>(tailness.rho, tailness.k, config.refresh_period);
    SgdMomentum<double> opt(config.lr, config.momentum);

    const Matrix<double> id_x = id.features_as_double();
    const Matrix<double> ood_x = with_ood ? ood_pool.features_as_double() : Matrix<double>();

    Rng batch_rng = make_stream(config.seed, "batching");
    Rng aug_rng = make_stream(config.seed, "augmentation");

    MergedSet merged;
    NeighborIndex neighbors;
    const double tau = config.tau;
    const int b = config.batch_size;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (epoch % config.refresh_period == 0) {
            RefreshRecord rec;
            rec.epoch = epoch;
            const Matrix<double> z_id = embed(result.params, id_x);
            IndexList selected;
            if (with_ood && budget > 0) {
                RefineOptions ro = cluster.refine;
                ro.seed = stream_seed(config.seed, "cluster-" + std::to_string(epoch));
                const auto model = cluster_embeddings(z_id, cluster.n_clusters, ro);
                rec.cluster_epochs = model.epochs_run;
                momentum_update(result.tailness, instance_tailness(z_id, tailness.k), epoch);
                rec.cluster_scores = cluster_tailness(result.tailness.scores, model.assignments, cluster.n_clusters);
                const auto alloc = allocate_budget(rec.cluster_scores, budget, tailness.tau_budget);
                rec.budgets = alloc.budgets;
                const Matrix<double> z_ood = embed(result.params, ood_x);
                selected = sample_ood(z_ood, model.centroids, alloc.budgets, rec.cluster_scores).indices;
            }
            rec.ood_selected = selected;
            merged = merge(id_x, ood_x, selected);
            if (config.k_pos > 0) {
                neighbors = build_neighbor_index(embed(result.params, merged.features), merged.domains, config.k_pos);
            } else {
                neighbors.neighbors.assign(merged.domains.size(), {});
            }
            result.refreshes.push_back(std::move(rec));
            if (hooks.on_checkpoint) {
                hooks.on_checkpoint(epoch, result.params, opt.velocity());
            }
        }

        const auto n_id = static_cast<Index>(merged.id_rows.size());
        const auto n_ood = static_cast<Index>(merged.ood_rows.size());
        const bool two_domains = n_ood > 0;
        const bool use_dd = two_domains && config.alpha > 0.0;
        IndexList id_perm = merged.id_rows;
        IndexList ood_perm = merged.ood_rows;
        std::shuffle(id_perm.begin(), id_perm.end(), batch_rng);
        std::shuffle(ood_perm.begin(), ood_perm.end(), batch_rng);
        const Index n_batches = std::max<Index>(1, (n_id + n_ood + b - 1) / b);

        PretrainLogRow row;
        row.epoch = epoch;
        row.n_ood_sampled = n_ood;
        for (Index t = 0; t < n_batches; ++t) {
            IndexList members = slice(id_perm, t, n_batches);
            if (two_domains) {
                pad_domain(members, merged.id_rows, 2, batch_rng);
                IndexList ood_part = slice(ood_perm, t, n_batches);
                pad_domain(ood_part, merged.ood_rows, 2, batch_rng);
                members.insert(members.end(), ood_part.begin(), ood_part.end());
            } else {
                pad_domain(members, merged.id_rows, 2, batch_rng);
            }
            const auto bsz = static_cast<Index>(members.size());

            // Rows: anchor views, second views, then neighbor views.
            Index n_rows = 2 * bsz;
            for (Index m : members) {
                n_rows += static_cast<Index>(neighbors.neighbors[static_cast<std::size_t>(m)].size());
            }
            Matrix<double> x(n_rows, id_x.cols());
            std::vector<IndexList> pos(static_cast<std::size_t>(bsz));
            std::vector<IndexList> neg(static_cast<std::size_t>(bsz));
            std::vector<Domain> anchor_domains(static_cast<std::size_t>(bsz));
            for (Index i = 0; i < bsz; ++i) {
                const Index m = members[static_cast<std::size_t>(i)];
                x.row(i) = augment(merged.features.row(m).transpose(), config.augment, aug_rng).transpose();
                x.row(bsz + i) = augment(merged.features.row(m).transpose(), config.augment, aug_rng).transpose();
                anchor_domains[static_cast<std::size_t>(i)] = merged.domains[static_cast<std::size_t>(m)];
            }
            Index next = 2 * bsz;
            for (Index i = 0; i < bsz; ++i) {
                const Index m = members[static_cast<std::size_t>(i)];
                auto& p = pos[static_cast<std::size_t>(i)];
                p.push_back(bsz + i);
                const auto& nb = neighbors.neighbors[static_cast<std::size_t>(m)];
                for (Index j : nb) {
                    x.row(next) = augment(merged.features.row(j).transpose(), config.augment, aug_rng).transpose();
                    p.push_back(next++);
                }
                std::unordered_set<Index> excluded(nb.begin(), nb.end());
                excluded.insert(m);
                for (Index j = 0; j < bsz; ++j) {
                    if (j != i && !excluded.contains(members[static_cast<std::size_t>(j)])) {
                        neg[static_cast<std::size_t>(i)].push_back(j);
                    }
                }
            }

            std::vector<IndexList> same;
            std::vector<IndexList> different;
            if (use_dd) {
                domain_sets(anchor_domains, same, different);
            }
            const auto pass = forward_pass(result.params, x);
            const auto loss = cpt_loss(pass.embeddings, pos, neg, same, different, tau, use_dd ? config.alpha : 0.0);
            if (!std::isfinite(loss.total.value)) {
                throw NumericError("pretraining loss became non-finite at epoch " + std::to_string(epoch));
            }
            opt.step(result.params, backward(result.params, pass, loss.total.adjoint));
            row.psd += loss.psd;
            row.dd += loss.dd;
            row.cpt += loss.total.value;
        }
        row.psd /= static_cast<double>(n_batches);
        row.dd /= static_cast<double>(n_batches);
        row.cpt /= static_cast<double>(n_batches);
        result.log.push_back(row);
    }
    result.velocity = opt.velocity();
    if (hooks.on_checkpoint) {
        hooks.on_checkpoint(config.epochs, result.params, result.velocity);
    }
    return result;
}

void write_pretrain_log(const std::filesystem::path& path, const std::vector<PretrainLogRow>& log)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.precision(17);
    out << "epoch,L_PSD,L_DD,L_CPT,n_ood_sampled\n";
    for (const auto& r : log) {
        out << r.epoch << ',' << r.psd << ',' << r.dd << ',' << r.cpt << ',' << r.n_ood_sampled << '\n';
    }
}

}  // namespace tlss
