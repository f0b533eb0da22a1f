#pragma once

#include "tlss/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace tlss {

enum class Domain : std::uint8_t { ID = 0, OOD = 1 };

struct Sample {
    Vector<float> features;
    Domain domain = Domain::ID;
    std::optional<std::uint32_t> class_label;
};

/// Row-major feature table with one domain tag and optional label per row.
/// Row index is sample identity; iteration order is stable.
class Dataset {
public:
    using FeatureMap = Eigen::Map<const Matrix<float>>;

    Dataset() = default;
    explicit Dataset(Index dim) : dim_(dim) {}

    Index size() const { return static_cast<Index>(domains_.size()); }
    Index dim() const { return dim_; }
    bool empty() const { return size() == 0; }

    FeatureMap features() const { return FeatureMap(data_.data(), size(), dim_); }
    const std::vector<Domain>& domains() const { return domains_; }
    const std::vector<std::optional<std::uint32_t>>& labels() const { return labels_; }

    Domain domain(Index i) const { return domains_[static_cast<std::size_t>(i)]; }
    std::optional<std::uint32_t> label(Index i) const { return labels_[static_cast<std::size_t>(i)]; }
    bool has_any_label() const;

    Sample sample(Index i) const;

    void reserve(Index n);
    void push_back(const Sample& s);

    /// Rows selected by index, in the given order.
    Dataset subset(const IndexList& rows) const;

    /// Count of indices per domain.
    Index count(Domain d) const;

    /// Features of every row as a double matrix, ready for the encoder.
    Matrix<double> features_as_double() const { return features().cast<double>(); }

    friend bool operator==(const Dataset& a, const Dataset& b);

private:
    Index dim_ = 0;
    std::vector<float> data_;
    std::vector<Domain> domains_;
    std::vector<std::optional<std::uint32_t>> labels_;
};

Dataset concat(const Dataset& a, const Dataset& b);

struct LongTailSpec {
    int n_classes = 10;
    int max_per_class = 500;
    double imbalance_ratio = 100.0;
    int dim = 16;
    double class_separation = 6.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// n_c = round_half_up(n_max * r^(-c/(C-1))). Throws ConfigError if any
/// class rounds to zero.
std::vector<int> class_counts(const LongTailSpec& spec);

/// Class means sit on scaled coordinate axes, so every pair is exactly
/// class_separation apart. Requires dim >= n_classes.
Matrix<double> class_means(int n_classes, int dim, double class_separation);

Dataset gen_longtail(const LongTailSpec& spec);

/// Balanced labeled set with the same class geometry as `spec`.
Dataset gen_balanced(const LongTailSpec& spec, int per_class, std::uint64_t seed);

struct OodSpec {
    int n = 5000;
    int dim = 16;
    int n_classes = 10;            // ID geometry the pool interleaves with
    double class_separation = 6.0;
    double noise_sigma = 1.0;
    double outward_scale = 1.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Component means of the OOD mixture: midpoints of every ID mean pair,
/// scaled away from the origin by outward_scale.
Matrix<double> ood_means(const OodSpec& spec);

Dataset gen_ood(const OodSpec& spec);

// Binary format, little-endian:
//   "TLSS" | u16 version=1 | u16 flags (bit0 labels) | u64 count | u32 dim
//   | u8 domain x count | f32 features (count x dim, row-major)
//   | [u32 label x count]  (0xFFFFFFFF marks an unlabeled row)
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint32_t kNoLabel = 0xFFFFFFFFu;

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path, Index expected_dim);

/// CSV with a header row. Feature columns come first; optional trailing
/// columns named `label` and `domain` (ID/OOD or 0/1). Empty label = none.
Dataset load_dataset_csv(const std::filesystem::path& path);

}  // namespace tlss
