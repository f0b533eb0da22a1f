#include "tlss/config.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

using namespace tlss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("tlss_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream(p) << s;
}

std::string read_text(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Runs the CLI with stdout captured to `dir/stdout.txt`; returns the exit code.
int run(const fs::path& dir, const std::string& args)
{
    const std::string cmd = std::string(TLSS_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                            " 2> " + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kSmall = R"({
  "seed": 4,
  "data": {"n_classes": 4, "max_per_class": 60, "imbalance_ratio": 10, "dim": 6,
           "test_per_class": 10, "ood_pool": 80},
  "encoder": {"hidden_dims": [16], "embed_dim": 8},
  "cluster": {"n_clusters": 4},
  "tailness": {"k": 5, "budget": 40},
  "pretrain": {"k_pos": 3, "epochs": 4, "refresh_period": 2, "batch_size": 32},
  "distill": {"k_kd": 3, "epochs": 2, "batch_size": 32},
  "eval": {"probe_epochs": 5, "few_shot_epochs": 5, "few_shot_fraction": 0.2}
})";

}  // namespace

TEST_CASE("config parsing rejects unknown keys and wrong types")
{
    CHECK_THROWS_AS(parse_run_config(R"({"data": {"n_clases": 3}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"data": {"n_classes": "ten"}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(R"({"data": {"n_classes": 2}})"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/tlss.json"), IoError);
}

TEST_CASE("config dump round-trips")
{
    RunConfig c = parse_run_config(kSmall);
    CHECK(c.data.n_classes == 4);
    CHECK(c.encoder.hidden_dims == std::vector<int>{16});
    const std::string once = dump_run_config(c);
    const std::string twice = dump_run_config(parse_run_config(once));
    CHECK(once == twice);
    CHECK(dump_run_config(parse_run_config("{}")) == dump_run_config(RunConfig{}));
}

TEST_CASE("gen-data reports the default long-tail counts")
{
    const auto dir = scratch("gen");
    write_text(dir / "c.json", "{}");
    REQUIRE(run(dir, "gen-data --config " + (dir / "c.json").string() + " --out " + (dir / "o").string()) == 0);
    const std::string out = read_text(dir / "stdout.txt");
    CHECK(out.find("n_0=500\n") != std::string::npos);
    CHECK(out.find("n_9=5\n") != std::string::npos);
    CHECK(fs::exists(dir / "o" / "id_train.bin"));
    CHECK(fs::exists(dir / "o" / "id_test.bin"));
    CHECK(fs::exists(dir / "o" / "ood.bin"));
}

TEST_CASE("gen-data with ratio one is balanced")
{
    const auto dir = scratch("flat");
    write_text(dir / "c.json", R"({"data": {"imbalance_ratio": 1, "max_per_class": 50}})");
    REQUIRE(run(dir, "gen-data --config " + (dir / "c.json").string() + " --out " + (dir / "o").string()) == 0);
    const std::string out = read_text(dir / "stdout.txt");
    for (int k = 0; k < 10; ++k) {
        CHECK(out.find("n_" + std::to_string(k) + "=50\n") != std::string::npos);
    }
}

TEST_CASE("exit codes")
{
    const auto dir = scratch("codes");
    write_text(dir / "bad.json", R"({"pretrain": {"tau": -1}})");
    CHECK(run(dir, "gen-data --config " + (dir / "bad.json").string()) == 1);
    CHECK(run(dir, "gen-data") == 1);
    CHECK(run(dir, "gen-data --config " + (dir / "missing.json").string()) == 2);

    write_text(dir / "c.json", kSmall);
    const std::string cfg = " --config " + (dir / "c.json").string() + " --out " + (dir / "o").string();
    REQUIRE(run(dir, "gen-data" + cfg) == 0);
    write_text(dir / "o" / "broken.bin", "not a dataset");
    CHECK(run(dir, "pretrain" + cfg + " --id " + (dir / "o" / "broken.bin").string() + " --ood " +
                       (dir / "o" / "ood.bin").string()) == 2);

    write_text(dir / "blowup.json", R"({
      "seed": 4,
      "data": {"n_classes": 4, "max_per_class": 60, "imbalance_ratio": 10, "dim": 6,
               "test_per_class": 10, "ood_pool": 80},
      "encoder": {"hidden_dims": [16], "embed_dim": 8},
      "cluster": {"n_clusters": 4},
      "tailness": {"k": 5, "budget": 40},
      "pretrain": {"k_pos": 3, "epochs": 4, "refresh_period": 2, "batch_size": 32, "lr": 1e300}
    })");
    CHECK(run(dir, "pretrain --config " + (dir / "blowup.json").string() + " --out " + (dir / "o").string() +
                       " --id " + (dir / "o" / "id_train.bin").string() + " --ood " +
                       (dir / "o" / "ood.bin").string()) == 3);
}

TEST_CASE("stage commands chain and are deterministic")
{
    const auto dir = scratch("chain");
    write_text(dir / "c.json", kSmall);
    const auto o = dir / "o";
    const std::string cfg = " --quiet --config " + (dir / "c.json").string() + " --out " + o.string();
    REQUIRE(run(dir, "gen-data" + cfg) == 0);
    const std::string ids = " --id " + (o / "id_train.bin").string();
    REQUIRE(run(dir, "pretrain" + cfg + ids + " --ood " + (o / "ood.bin").string()) == 0);
    CHECK(fs::exists(o / "f.ckpt"));
    CHECK(fs::exists(o / "f_epoch2.ckpt"));
    const std::string loss1 = read_text(o / "pretrain_loss.csv");
    REQUIRE(run(dir, "pretrain" + cfg + ids + " --ood " + (o / "ood.bin").string()) == 0);
    CHECK(read_text(o / "pretrain_loss.csv") == loss1);

    REQUIRE(run(dir, "distill" + cfg + ids + " --ckpt " + (o / "f.ckpt").string()) == 0);
    CHECK(fs::exists(o / "g.ckpt"));
    CHECK(fs::exists(o / "distill_loss.csv"));

    const std::string probe = "probe" + cfg + " --ckpt " + (o / "g.ckpt").string() + " --train " +
                              (o / "id_train.bin").string() + " --test " + (o / "id_test.bin").string();
    REQUIRE(run(dir, probe) == 0);
    REQUIRE(run(dir, probe + " --few-shot") == 0);
    const std::string m = read_text(o / "metrics.csv");
    CHECK(m.rfind("many,medium,few,std,all,chi,dbi\n", 0) == 0);
    CHECK(fs::exists(o / "metrics_few_shot.csv"));
}

TEST_CASE("run-all writes a two-row comparison")
{
    const auto dir = scratch("all");
    write_text(dir / "c.json", kSmall);
    const std::string base = "run-all --quiet --config " + (dir / "c.json").string() + " --out ";
    REQUIRE(run(dir, base + (dir / "a").string()) == 0);
    REQUIRE(run(dir, base + (dir / "b").string()) == 0);
    const std::string table = read_text(dir / "a" / "comparison.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 3);
    CHECK(table.rfind("method,many,medium,few,std,all,chi,dbi\n", 0) == 0);
    for (const char* f : {"comparison.csv", "full_pretrain.csv", "full_distill.csv", "baseline_metrics.csv"}) {
        CHECK(read_text(dir / "a" / f) == read_text(dir / "b" / f));
    }
}
