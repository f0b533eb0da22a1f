#pragma once

#include "tlss/cluster.hpp"
#include "tlss/encoder.hpp"
#include "tlss/losses.hpp"
#include "tlss/synthdata.hpp"
#include "tlss/tailness.hpp"

#include <filesystem>
#include <functional>

namespace tlss {

struct AugmentParams {
    double jitter_sigma = 0.1;
    double dropout_rate = 0.1;

    void validate() const
    {
        if (!(jitter_sigma >= 0.0)) {
            throw ConfigError("jitter_sigma must be >= 0");
        }
        if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) {
            throw ConfigError("dropout_rate must lie in [0, 1]");
        }
    }
};

/// Additive Gaussian jitter, then each coordinate zeroed with probability
/// dropout_rate.
template <typename Derived>
Vector<double> augment(const Eigen::MatrixBase<Derived>& features, const AugmentParams& params, Rng& rng)
{
    std::normal_distribution<double> jitter(0.0, 1.0);
    std::bernoulli_distribution drop(params.dropout_rate);
    Vector<double> out = features.template cast<double>();
    if (params.jitter_sigma > 0.0) {
        for (Index j = 0; j < out.size(); ++j) {
            out(j) += params.jitter_sigma * jitter(rng);
        }
    }
    if (params.dropout_rate > 0.0) {
        for (Index j = 0; j < out.size(); ++j) {
            if (drop(rng)) {
                out(j) = 0.0;
            }
        }
    }
    return out;
}

struct ClusterConfig {
    int n_clusters = 10;
    RefineOptions refine;

    void validate() const
    {
        if (n_clusters < 1) {
            throw ConfigError("n_clusters must be positive");
        }
        refine.validate();
    }
};

struct TailnessConfig {
    int k = 10;
    double rho = 0.9;
    Index budget = 1000;  // N_b
    double tau_budget = 1.0;

    void validate() const
    {
        if (k < 1) {
            throw ConfigError("tailness K must be positive");
        }
        if (!(rho >= 0.0 && rho <= 1.0)) {
            throw ConfigError("rho must lie in [0, 1]");
        }
        if (budget < 0) {
            throw ConfigError("tailness budget must be >= 0");
        }
        if (!(tau_budget > 0.0)) {
            throw ConfigError("tau_budget must be > 0");
        }
    }
};

struct PretrainConfig {
    int k_pos = 3;
    double alpha = 0.3;
    double tau = 0.5;
    int refresh_period = 25;
    int batch_size = 256;
    int epochs = 100;
    double lr = 0.05;
    double momentum = 0.9;
    AugmentParams augment;
    bool use_ood = true;
    std::uint64_t seed = 0;

    void validate() const;
};

/// K_pos cosine nearest neighbors of every merged instance, searched only
/// among instances of the same domain. Ties go to the lower index.
struct NeighborIndex {
    std::vector<IndexList> neighbors;
};

NeighborIndex build_neighbor_index(const Matrix<double>& embeddings, const std::vector<Domain>& domains, int k_pos);

struct PretrainLogRow {
    int epoch = 0;
    double psd = 0;
    double dd = 0;
    double cpt = 0;
    Index n_ood_sampled = 0;
};

struct RefreshRecord {
    int epoch = 0;
    std::vector<Index> budgets;
    Vector<double> cluster_scores;
    IndexList ood_selected;  // rows of the OOD pool
    int cluster_epochs = 0;
};

struct PretrainResult {
    EncoderParams<double> params;
    LayerStack<double> velocity;
    std::vector<PretrainLogRow> log;
    std::vector<RefreshRecord> refreshes;
    TailnessState<double> tailness;
};

struct PretrainHooks {
    /// Called after every refresh epoch boundary (before training on it) and
    /// once at the end with epoch == epochs.
    std::function<void(int epoch, const EncoderParams<double>&, const LayerStack<double>&)> on_checkpoint;
};

/// Stage one: contrastive pretraining on ID data merged with OOD samples
/// picked near tail-heavy clusters. Every refresh_period epochs the ID set is
/// re-embedded and re-clustered, tailness rescored, budgets reallocated, OOD
/// resampled and the neighbor index rebuilt.
PretrainResult run_pretrain(const Dataset& id, const Dataset& ood_pool, EncoderParams<double> init,
                            const ClusterConfig& cluster, const TailnessConfig& tailness,
                            const PretrainConfig& config, const PretrainHooks& hooks = {});

void write_pretrain_log(const std::filesystem::path& path, const std::vector<PretrainLogRow>& log);

}  // namespace tlss
