#pragma once

#include "tlss/distill.hpp"
#include "tlss/encoder.hpp"
#include "tlss/eval.hpp"
#include "tlss/pretrain.hpp"
#include "tlss/synthdata.hpp"

#include <filesystem>
#include <string>

namespace tlss {

struct DataConfig {
    int n_classes = 10;
    int max_per_class = 500;
    double imbalance_ratio = 100.0;
    int dim = 16;
    double class_separation = 6.0;
    double noise_sigma = 1.0;
    int test_per_class = 100;
    int ood_pool = 5000;
    double ood_noise_sigma = 1.0;
    double ood_outward_scale = 1.5;
};

struct EvalConfig {
    int probe_epochs = 30;
    int few_shot_epochs = 100;
    double few_shot_fraction = 0.01;
    double lr = 0.5;
    double momentum = 0.9;
    int batch_size = 64;
};

/// Everything one pipeline run needs. Seeds for every stage derive from
/// `seed` through named streams.
struct RunConfig {
    std::uint64_t seed = 0;
    DataConfig data;
    EncoderConfig encoder;     // input_dim and seed are filled from data/seed
    ClusterConfig cluster;
    TailnessConfig tailness;
    PretrainConfig pretrain;
    DistillConfig distill;
    EvalConfig eval;
    std::filesystem::path out_dir = "out";

    LongTailSpec longtail_spec() const;
    OodSpec ood_spec() const;
    EncoderConfig encoder_config() const;
    PretrainConfig pretrain_config() const;
    DistillConfig distill_config() const;
    ClusterConfig cluster_config() const;
    ProbeOptions probe_options(bool few_shot) const;
    std::uint64_t test_seed() const;

    /// Throws ConfigError on the first invalid field.
    void validate() const;
};

/// Parses JSON text. Unknown keys and wrong types are ConfigErrors.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// The configuration as JSON, every field present.
std::string dump_run_config(const RunConfig& config);

}  // namespace tlss
