#include "tlss/pipeline.hpp"

#include <fstream>

namespace tlss {

Benchmark generate_benchmark(const RunConfig& config)
{
    Benchmark b;
    const LongTailSpec spec = config.longtail_spec();
    b.id_train = gen_longtail(spec);
    b.id_test = gen_balanced(spec, config.data.test_per_class, config.test_seed());
    b.ood_pool = gen_ood(config.ood_spec());
    return b;
}

RunConfig baseline_config(const RunConfig& config)
{
    RunConfig c = config;
    c.pretrain.k_pos = 0;
    c.pretrain.alpha = 0.0;
    c.pretrain.use_ood = false;
    c.distill.epochs = 0;
    return c;
}

MetricsReport evaluate(const EncoderParams<double>& encoder, const Benchmark& bench, const RunConfig& config,
                       bool few_shot)
{
    const int c = config.data.n_classes;
    const ProbeModel probe = train_probe(encoder, bench.id_train, c, config.probe_options(few_shot));
    const GroupSplit split = group_split(count_classes(class_labels(bench.id_train), c));
    return report(probe, encoder, bench.id_test, split);
}

ArmResult run_arm(const std::string& method, const RunConfig& config, const Benchmark& bench,
                  const ProgressFn& progress)
{
    auto say = [&](const std::string& s) {
        if (progress) {
            progress(method + ": " + s);
        }
    };
    ArmResult arm;
    arm.method = method;

    say("pretraining");
    auto pre = run_pretrain(bench.id_train, bench.ood_pool, init_encoder<double>(config.encoder_config()),
                            config.cluster_config(), config.tailness, config.pretrain_config());
    arm.stage1 = std::move(pre.params);
    arm.pretrain_log = std::move(pre.log);
    arm.stage1_metrics = evaluate(arm.stage1, bench, config, false);
    arm.metrics = arm.stage1_metrics;

    if (config.distill.epochs > 0) {
        say("distilling");
        auto dist = run_distill(arm.stage1, bench.id_train, config.distill_config(), config.cluster.n_clusters,
                                config.cluster_config().refine);
        arm.stage2 = std::move(dist.params);
        arm.distill_log = std::move(dist.log);
        arm.metrics = evaluate(*arm.stage2, bench, config, false);
    }
    say(metrics_text(arm.metrics));
    return arm;
}

RunAllResult run_all(const RunConfig& config, const std::filesystem::path& out_dir, const ProgressFn& progress)
{
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }
    const Benchmark bench = generate_benchmark(config);

    RunAllResult r;
    r.baseline = run_arm("baseline", baseline_config(config), bench, progress);
    r.full = run_arm("full", config, bench, progress);

    write_pretrain_log(out_dir / "baseline_pretrain.csv", r.baseline.pretrain_log);
    write_pretrain_log(out_dir / "full_pretrain.csv", r.full.pretrain_log);
    write_distill_log(out_dir / "full_distill.csv", r.full.distill_log);
    write_metrics_csv(out_dir / "baseline_metrics.csv", r.baseline.metrics);
    write_metrics_csv(out_dir / "full_metrics.csv", r.full.metrics);
    write_metrics_csv(out_dir / "full_stage1_metrics.csv", r.full.stage1_metrics);
    write_comparison_csv(out_dir / "comparison.csv", {&r.baseline, &r.full});
    return r;
}

void write_comparison_csv(const std::filesystem::path& path, const std::vector<const ArmResult*>& arms)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << kComparisonHeader << '\n';
    for (const ArmResult* a : arms) {
        out << a->method << ',' << metrics_csv_row(a->metrics) << '\n';
    }
}

}  // namespace tlss
