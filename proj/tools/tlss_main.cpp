#include "tlss/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace tlss;
namespace fs = std::filesystem;

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--config", c.config_path, "JSON run configuration")->required();
    cmd->add_option("--seed", c.seed, "global seed, overrides the config");
    cmd->add_option("--out", c.out, "output directory, overrides paths.out_dir");
    cmd->add_flag("--quiet", c.quiet, "print errors only");
}

RunConfig resolve(const Common& c)
{
    RunConfig config = load_run_config(c.config_path);
    if (c.seed) {
        config.seed = *c.seed;
    }
    if (!c.out.empty()) {
        config.out_dir = c.out;
    }
    config.validate();
    return config;
}

void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

EncoderParams<double> load_encoder(const fs::path& path, const RunConfig& config)
{
    auto ck = load_checkpoint(path);
    if (ck.params.config.input_dim != config.data.dim) {
        throw DimensionError("checkpoint " + path.string() + " expects input dimension " +
                             std::to_string(ck.params.config.input_dim));
    }
    return std::move(ck.params);
}

void log(const Common& c, const std::string& s)
{
    if (!c.quiet) {
        std::cout << s << '\n';
    }
}

void cmd_gen_data(const Common& c)
{
    const RunConfig config = resolve(c);
    const Benchmark b = generate_benchmark(config);
    make_dir(config.out_dir);
    save_dataset(b.id_train, config.out_dir / "id_train.bin");
    save_dataset(b.id_test, config.out_dir / "id_test.bin");
    save_dataset(b.ood_pool, config.out_dir / "ood.bin");
    const auto counts = class_counts(config.longtail_spec());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        log(c, "n_" + std::to_string(k) + "=" + std::to_string(counts[k]));
    }
    log(c, "ood=" + std::to_string(b.ood_pool.size()));
}

void cmd_pretrain(const Common& c, const std::string& id_path, const std::string& ood_path)
{
    const RunConfig config = resolve(c);
    const Dataset id = load_dataset(id_path, config.data.dim);
    Dataset ood;
    if (config.pretrain.use_ood) {
        ood = load_dataset(ood_path, config.data.dim);
    }
    make_dir(config.out_dir);
    PretrainHooks hooks;
    hooks.on_checkpoint = [&](int epoch, const EncoderParams<double>& p, const LayerStack<double>& v) {
        save_checkpoint(config.out_dir / ("f_epoch" + std::to_string(epoch) + ".ckpt"), p, &v);
    };
    const auto r = run_pretrain(id, ood, init_encoder<double>(config.encoder_config()), config.cluster_config(),
                                config.tailness, config.pretrain_config(), hooks);
    save_checkpoint(config.out_dir / "f.ckpt", r.params, &r.velocity);
    write_pretrain_log(config.out_dir / "pretrain_loss.csv", r.log);
    if (!r.log.empty()) {
        log(c, "final L_CPT=" + std::to_string(r.log.back().cpt));
    }
}

void cmd_distill(const Common& c, const std::string& id_path, const std::string& f_path)
{
    const RunConfig config = resolve(c);
    const Dataset id = load_dataset(id_path, config.data.dim);
    const EncoderParams<double> f = load_encoder(f_path, config);
    make_dir(config.out_dir);
    const auto r = run_distill(f, id, config.distill_config(), config.cluster.n_clusters,
                               config.cluster_config().refine);
    save_checkpoint(config.out_dir / "g.ckpt", r.params, r.log.empty() ? nullptr : &r.velocity);
    write_distill_log(config.out_dir / "distill_loss.csv", r.log);
    if (!r.log.empty()) {
        log(c, "final L_GL=" + std::to_string(r.log.back().gl));
    }
}

void cmd_probe(const Common& c, const std::string& ckpt, const std::string& train_path, const std::string& test_path,
               bool few_shot)
{
    const RunConfig config = resolve(c);
    Benchmark b;
    b.id_train = load_dataset(train_path, config.data.dim);
    b.id_test = load_dataset(test_path, config.data.dim);
    const EncoderParams<double> enc = load_encoder(ckpt, config);
    const MetricsReport m = evaluate(enc, b, config, few_shot);
    make_dir(config.out_dir);
    const std::string stem = few_shot ? "metrics_few_shot" : "metrics";
    write_metrics_csv(config.out_dir / (stem + ".csv"), m);
    std::ofstream txt(config.out_dir / (stem + ".txt"));
    if (!txt) {
        throw IoError("cannot open " + (config.out_dir / (stem + ".txt")).string() + " for writing");
    }
    txt << metrics_text(m) << '\n';
    log(c, metrics_text(m));
}

void cmd_run_all(const Common& c)
{
    const RunConfig config = resolve(c);
    ProgressFn progress;
    if (!c.quiet) {
        progress = [](const std::string& s) { std::cout << s << std::endl; };
    }
    const auto r = run_all(config, config.out_dir, progress);
    log(c, kComparisonHeader);
    log(c, r.baseline.method + "," + metrics_csv_row(r.baseline.metrics));
    log(c, r.full.method + "," + metrics_csv_row(r.full.metrics));
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Long-tailed self-supervised representation learning with OOD data"};
    app.require_subcommand(1);

    Common common;
    std::string id_path, ood_path, f_path, ckpt, train_path, test_path;
    bool few_shot = false;

    auto* gen = app.add_subcommand("gen-data", "generate ID train/test and OOD pool datasets");
    add_common(gen, common);

    auto* pre = app.add_subcommand("pretrain", "stage one: train the guiding encoder f");
    add_common(pre, common);
    pre->add_option("--id", id_path, "ID dataset")->required();
    pre->add_option("--ood", ood_path, "OOD pool dataset")->required();

    auto* dis = app.add_subcommand("distill", "stage two: train g guided by a frozen f");
    add_common(dis, common);
    dis->add_option("--id", id_path, "ID dataset")->required();
    dis->add_option("--ckpt", f_path, "checkpoint of f")->required();

    auto* probe = app.add_subcommand("probe", "linear probe on a frozen encoder");
    add_common(probe, common);
    probe->add_option("--ckpt", ckpt, "encoder checkpoint")->required();
    probe->add_option("--train", train_path, "labeled training set")->required();
    probe->add_option("--test", test_path, "labeled test set")->required();
    probe->add_flag("--few-shot", few_shot, "train on 1% of the labels");

    auto* all = app.add_subcommand("run-all", "baseline and full method end to end");
    add_common(all, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*gen) {
            cmd_gen_data(common);
        } else if (*pre) {
            cmd_pretrain(common, id_path, ood_path);
        } else if (*dis) {
            cmd_distill(common, id_path, f_path);
        } else if (*probe) {
            cmd_probe(common, ckpt, train_path, test_path, few_shot);
        } else if (*all) {
            cmd_run_all(common);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
