#pragma once

// Orchestration shared by the command-line tool and the acceptance suite.

#include "tlss/config.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace tlss {

struct Benchmark {
    Dataset id_train;  // long-tailed, labeled
    Dataset id_test;   // balanced, labeled
    Dataset ood_pool;  // unlabeled
};

Benchmark generate_benchmark(const RunConfig& config);

/// The control arm: instance discrimination only. No neighbors, no domain
/// term, no OOD, no second stage.
RunConfig baseline_config(const RunConfig& config);

struct ArmResult {
    std::string method;
    EncoderParams<double> stage1;
    std::optional<EncoderParams<double>> stage2;
    std::vector<PretrainLogRow> pretrain_log;
    std::vector<DistillLogRow> distill_log;
    MetricsReport stage1_metrics;
    MetricsReport metrics;  // of the final encoder

    const EncoderParams<double>& final_encoder() const { return stage2 ? *stage2 : stage1; }
};

using ProgressFn = std::function<void(const std::string&)>;

/// Linear-probe evaluation: probe fit on the long-tailed train split, groups
/// by train counts, metrics on the balanced test split.
MetricsReport evaluate(const EncoderParams<double>& encoder, const Benchmark& bench, const RunConfig& config,
                       bool few_shot);

ArmResult run_arm(const std::string& method, const RunConfig& config, const Benchmark& bench,
                  const ProgressFn& progress = {});

struct RunAllResult {
    ArmResult baseline;
    ArmResult full;
};

/// Runs both arms on one benchmark and writes under `out_dir`:
/// baseline_pretrain.csv, full_pretrain.csv, full_distill.csv,
/// baseline_metrics.csv, full_metrics.csv, full_stage1_metrics.csv and
/// comparison.csv.
RunAllResult run_all(const RunConfig& config, const std::filesystem::path& out_dir, const ProgressFn& progress = {});

inline constexpr const char* kComparisonHeader = "method,many,medium,few,std,all,chi,dbi";
void write_comparison_csv(const std::filesystem::path& path, const std::vector<const ArmResult*>& arms);

}  // namespace tlss
