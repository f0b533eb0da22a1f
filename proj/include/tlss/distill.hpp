#pragma once

#include "tlss/cluster.hpp"
#include "tlss/encoder.hpp"
#include "tlss/losses.hpp"
#include "tlss/synthdata.hpp"

#include <filesystem>

namespace tlss {

struct DistillConfig {
    int k_kd = 5;
    double beta = 0.4;
    int epochs = 10;
    int batch_size = 256;
    double lr = 0.001;
    double momentum = 0.9;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Frozen view of the ID set under the guiding encoder. Built once; read-only
/// afterwards.
struct GuideIndex {
    Matrix<double> embeddings;            // unit rows, guiding encoder
    ClusterModel<double> clusters;
    std::vector<IndexList> neighbors;     // k_kd cosine neighbors per instance
    std::vector<IndexList> members;       // instances per cluster
    Matrix<double> centroid_distances;    // pairwise L2 between centroids
    std::vector<int> farthest;            // farthest non-empty cluster per cluster
};

GuideIndex build_guide_index(const EncoderParams<double>& guide, const Dataset& id, int n_clusters, int k_kd,
                             const RefineOptions& refine = {});

/// Farthest cluster by centroid L2 (ties to the lower index), skipping empty
/// clusters. -1 when no other non-empty cluster exists.
std::vector<int> farthest_clusters(const Matrix<double>& centroid_distances, const std::vector<IndexList>& members);

struct GuidePair {
    Index anchor = 0;
    Index positive = 0;
    Index negative = 0;
    double w_pos = 0;
    double w_neg = 0;
};

/// Positive drawn uniformly from the anchor's neighbor list, negative
/// uniformly from the farthest cluster; weights are guiding-space cosines.
GuidePair sample_guide_pair(const GuideIndex& index, Index anchor, Rng& rng);

struct DistillLogRow {
    int epoch = 0;
    double gcl = 0;
    double dl = 0;
    double gl = 0;
};

struct DistillResult {
    EncoderParams<double> params;
    LayerStack<double> velocity;
    std::vector<DistillLogRow> log;
    double initial_dl = 0;  // distillation loss of the first step, before any update
};

/// Stage two: a copy of the frozen guide is trained on ID data with guided
/// pairs and similarity distillation.
DistillResult run_distill(const EncoderParams<double>& guide, const Dataset& id, const DistillConfig& config,
                          int n_clusters, const RefineOptions& refine = {});

void write_distill_log(const std::filesystem::path& path, const std::vector<DistillLogRow>& log);

}  // namespace tlss
