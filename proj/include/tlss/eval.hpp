#pragma once

// Frozen-encoder evaluation: softmax linear probe, count-based Many/Medium/Few
// split, group accuracies with their spread, and cluster validity indices.

#include "tlss/common.hpp"
#include "tlss/encoder.hpp"
#include "tlss/synthdata.hpp"

#include <filesystem>
#include <string>

namespace tlss {

struct ProbeModel {
    Matrix<double> weight;  // embed_dim x n_classes
    Vector<double> bias;

    int n_classes() const { return static_cast<int>(weight.cols()); }
    Matrix<double> logits(const Matrix<double>& embeddings) const;
    std::vector<int> predict(const Matrix<double>& embeddings) const;
};

struct ProbeOptions {
    double label_fraction = 1.0;
    int epochs = 30;
    double lr = 0.5;
    double momentum = 0.9;
    int batch_size = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rows of a labeled set kept for probe training. label_fraction = 1 keeps
/// every labeled row. Otherwise a uniform draw of round(fraction * n) rows,
/// redrawn stratified (at least one per class) if a class went missing.
IndexList probe_subsample(const std::vector<int>& labels, int n_classes, double label_fraction, Rng& rng);

/// Multinomial logistic regression on fixed embeddings by minibatch SGD.
ProbeModel train_probe(const Matrix<double>& embeddings, const std::vector<int>& labels, int n_classes,
                       const ProbeOptions& options);

/// Embeds `train` with the (const) encoder and fits a probe on it.
ProbeModel train_probe(const EncoderParams<double>& encoder, const Dataset& train, int n_classes,
                       const ProbeOptions& options);

/// Integer class labels of every row; throws if any row is unlabeled.
std::vector<int> class_labels(const Dataset& data);

struct GroupSplit {
    std::vector<int> many;
    std::vector<int> medium;
    std::vector<int> few;
};

/// Classes ranked by descending count (ties to the lower index), cut into
/// contiguous groups of ceil(C/3), then ceil(rest/2), then the remainder.
GroupSplit group_split(const std::vector<Index>& class_counts);

std::vector<Index> count_classes(const std::vector<int>& labels, int n_classes);

struct MetricsReport {
    double acc_many = 0;
    double acc_medium = 0;
    double acc_few = 0;
    double std_groups = 0;
    double acc_all = 0;
    double chi = 0;
    double dbi = 0;
};

/// Population standard deviation of the three group accuracies.
double group_std(double many, double medium, double few);

MetricsReport report(const ProbeModel& probe, const Matrix<double>& test_embeddings,
                     const std::vector<int>& test_labels, const GroupSplit& split);

MetricsReport report(const ProbeModel& probe, const EncoderParams<double>& encoder, const Dataset& test,
                     const GroupSplit& split);

/// Calinski-Harabasz: (B / (k-1)) / (W / (n-k)), W floored at 1e-12.
double calinski_harabasz(const Matrix<double>& points, const std::vector<int>& labels);

/// Davies-Bouldin: mean over classes of max_j (s_i + s_j) / d(mu_i, mu_j),
/// s = mean distance to the class centroid, d floored at 1e-12.
double davies_bouldin(const Matrix<double>& points, const std::vector<int>& labels);

inline constexpr const char* kMetricsHeader = "many,medium,few,std,all,chi,dbi";
std::string metrics_csv_row(const MetricsReport& r);
std::string metrics_text(const MetricsReport& r);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r);

}  // namespace tlss
