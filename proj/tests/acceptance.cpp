// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "oracles.hpp"

#include "tlss/cluster.hpp"
#include "tlss/distill.hpp"
#include "tlss/knn.hpp"
#include "tlss/pipeline.hpp"
#include "tlss/pretrain.hpp"
#include "tlss/tailness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

using namespace tlss;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

Matrix<double> gaussian(Index n, Index d, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> g;
    Matrix<double> x(n, d);
    for (Index i = 0; i < x.size(); ++i) {
        x.data()[i] = g(rng);
    }
    return x;
}

std::vector<IndexList> random_sets(Index b, Index rows, Rng& rng)
{
    std::uniform_int_distribution<Index> pick(0, rows - 1);
    std::uniform_int_distribution<int> size(1, 4);
    std::vector<IndexList> out(static_cast<std::size_t>(b));
    for (auto& s : out) {
        const int n = size(rng);
        for (int t = 0; t < n; ++t) {
            s.push_back(pick(rng));
        }
    }
    return out;
}

Vector<double> random_weights(Index n, Rng& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector<double> w(n);
    for (Index i = 0; i < n; ++i) {
        w(i) = u(rng);
    }
    return w;
}

Outcome gradient_oracle()
{
    const auto t0 = Clock::now();
    const double tol = 1e-4;
    double worst[5] = {0, 0, 0, 0, 0};
    Rng rng(2024);
    for (int t = 0; t < 20; ++t) {
        const Matrix<double> z = normalize_rows(gaussian(7, 3, 10 + t));
        const auto pos = random_sets(4, 7, rng), neg = random_sets(4, 7, rng);
        auto psd = [&](const Matrix<double>& m) { return psd_loss<double>(m, pos, neg, 0.5).value; };
        worst[0] = std::max(worst[0], oracle::rel_error(psd_loss<double>(z, pos, neg, 0.5).adjoint,
                                                        oracle::fd_gradient(psd, z)));

        std::vector<Domain> dom{Domain::ID, Domain::OOD, Domain::ID, Domain::OOD, Domain::ID};
        std::vector<IndexList> same, diff;
        domain_sets(dom, same, diff);
        auto dd = [&](const Matrix<double>& m) { return dd_loss<double>(m, same, diff, 0.7).value; };
        worst[1] = std::max(worst[1], oracle::rel_error(dd_loss<double>(z, same, diff, 0.7).adjoint,
                                                        oracle::fd_gradient(dd, z)));

        const Matrix<double> a = normalize_rows(gaussian(4, 3, 100 + t));
        const Matrix<double> p = normalize_rows(gaussian(4, 3, 200 + t));
        const Matrix<double> n = normalize_rows(gaussian(4, 3, 300 + t));
        const Matrix<double> f = normalize_rows(gaussian(4, 3, 400 + t));
        const auto wp = random_weights(4, rng), wn = random_weights(4, rng);
        const auto gcl = gcl_loss(a, p, n, wp, wn);
        auto ga = [&](const Matrix<double>& m) { return gcl_loss(m, p, n, wp, wn).value; };
        auto gp = [&](const Matrix<double>& m) { return gcl_loss(a, m, n, wp, wn).value; };
        auto gn = [&](const Matrix<double>& m) { return gcl_loss(a, p, m, wp, wn).value; };
        worst[2] = std::max({worst[2], oracle::rel_error(gcl.anchor_adjoint, oracle::fd_gradient(ga, a)),
                             oracle::rel_error(gcl.positive_adjoint, oracle::fd_gradient(gp, p)),
                             oracle::rel_error(gcl.negative_adjoint, oracle::fd_gradient(gn, n))});

        auto dl = [&](const Matrix<double>& m) { return dl_loss(f, m).value; };
        worst[3] = std::max(worst[3], oracle::rel_error(dl_loss(f, a).adjoint, oracle::fd_gradient(dl, a)));

    }
    int encoders = 0;
    for (std::uint64_t s = 0; encoders < 20; ++s) {
        EncoderConfig e;
        e.input_dim = 4;
        e.hidden_dims = {6, 5};
        e.embed_dim = 3;
        e.activation = s % 2 ? Activation::Relu : Activation::Tanh;
        e.seed = s;
        const auto params = init_encoder<double>(e);
        const Matrix<double> x = gaussian(5, 4, 500 + s);
        const Matrix<double> target = gaussian(5, 3, 600 + s);
        const auto pass = forward_pass(params, x);
        if (!oracle::smooth_point(pass)) {
            continue;
        }
        auto loss = [&](const Matrix<double>& y) {
            return (target.array() * y.array()).sum() + 0.5 * y.col(0).array().pow(3).sum();
        };
        Matrix<double> adj = target;
        adj.col(0).array() += 1.5 * pass.embeddings.col(0).array().square();
        worst[4] = std::max(worst[4], oracle::rel_error(oracle::flatten(backward(params, pass, adj)),
                                                        oracle::fd_parameter_gradient(params, x, loss)));
        ++encoders;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = secs < 30.0 && std::all_of(std::begin(worst), std::end(worst), [&](double w) { return w < tol; });
    char buf[256];
    std::snprintf(buf, sizeof buf, "max rel err psd %.2e dd %.2e gcl %.2e dl %.2e encoder %.2e, 20 each, %.2fs",
                  worst[0], worst[1], worst[2], worst[3], worst[4], secs);
    o.detail = buf;
    return o;
}

Outcome loss_identities()
{
    std::vector<std::pair<const char*, double>> err;

    Matrix<double> q(2, 3);
    q << 0.2, 0.5, 0.3, 0.6, 0.1, 0.3;
    err.emplace_back("kl(p=q)", std::abs(kl_cluster_loss(q, q)));

    const Matrix<double> z = normalize_rows(gaussian(5, 3, 7));
    err.emplace_back("psd(pos=neg)", std::abs(psd_loss<double>(z, {{1, 2}, {3}}, {{1, 2}, {3}}, 0.5).value));

    Matrix<double> sym(3, 2);
    sym << 1, 0, 1, 0, 1, 0;
    err.emplace_back("dd(sym)", std::abs(dd_loss<double>(sym, {{1}}, {{2}}, 1.0).value - std::log(2.0)));

    Matrix<double> a(1, 2), p(1, 2), n(1, 2);
    Vector<double> wp(1), wn(1);
    a << 1, 0;
    p << 1, 0;
    n << -1, 0;
    wp << 0.3;
    wn << -0.4;
    err.emplace_back("gcl(aligned)", std::abs(gcl_loss(a, p, n, wp, wn).value));
    p << 0, 1;
    n << 0, -1;
    wp << 1;
    wn << -1;
    err.emplace_back("gcl(orthogonal)", std::abs(gcl_loss(a, p, n, wp, wn).value - 4.0));

    err.emplace_back("dl(g=f)", std::abs(dl_loss(z, z).value));
    Matrix<double> f2(2, 2), g2(2, 2);
    f2 << 1, 0, 1, 0;
    g2 << 1, 0, 0.5, std::sqrt(0.75);
    err.emplace_back("dl(B=2)", std::abs(dl_loss(f2, g2).value - 0.25));

    Outcome o;
    std::ostringstream s;
    double worst = 0;
    for (const auto& [name, e] : err) {
        worst = std::max(worst, e);
        o.pass = o.pass && e <= 1e-9;
    }
    s << err.size() << " identities, max abs err " << worst;
    o.detail = s.str();
    return o;
}

Outcome clustering_oracle()
{
    const auto t0 = Clock::now();
    int hits = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        Rng rng(900 + s);
        std::normal_distribution<double> g;
        Matrix<double> x(90, 8);
        std::vector<int> truth;
        for (int i = 0; i < 90; ++i) {
            const int c = i / 30;
            for (int d = 0; d < 8; ++d) {
                x(i, d) = g(rng) + (d == c ? 10.0 : 0.0);
            }
            truth.push_back(c);
        }
        RefineOptions opt;
        opt.seed = s;
        hits += adjusted_rand_index(cluster_embeddings(x, 3, opt).assignments, truth) == 1.0;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = hits >= 9 && secs < 10.0;
    o.detail = "ARI = 1 on " + std::to_string(hits) + "/10 seeds, " + std::to_string(secs) + "s";
    return o;
}

Outcome tailness_direction()
{
    int wins = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(s);
        std::normal_distribution<double> g;
        Matrix<double> x(80, 8);
        for (int i = 0; i < 80; ++i) {
            const bool sparse = i >= 40;
            for (int d = 0; d < 8; ++d) {
                x(i, d) = (sparse ? 0.8 : 0.1) * g(rng) + (d == (sparse ? 1 : 0) ? 1.0 : 0.0);
            }
        }
        const auto t = instance_tailness(x, 10);
        wins += t.tail(40).mean() > t.head(40).mean();
    }
    TailnessState<double> st(0.9, 10, 5);
    Vector<double> first(1), second(1);
    first << -2.0;
    second << -3.0;
    momentum_update(st, first, 0);
    momentum_update(st, second, 5);
    const double m = st.scores(0);
    Outcome o;
    o.pass = wins >= 95 && std::abs(m - (-2.1)) <= 1e-12;
    char buf[128];
    std::snprintf(buf, sizeof buf, "sparse > dense in %d/100 seeds, momentum %.15g", wins, m);
    o.detail = buf;
    return o;
}

Outcome budget_conservation()
{
    Rng rng(55);
    std::uniform_int_distribution<int> nc(1, 12), total(0, 10000), coin(0, 3);
    std::uniform_real_distribution<double> u(-2.7, -0.4);
    int sum_ok = 0, rank_ok = 0;
    for (int t = 0; t < 1000; ++t) {
        const int n = nc(rng);
        Vector<double> s(n);
        for (int k = 0; k < n; ++k) {
            s(k) = (k > 0 && coin(rng) == 0) ? s(k - 1) : u(rng);
        }
        if (t % 10 == 0) {
            s.setConstant(-1.3);
        }
        const Index nb = total(rng);
        const auto a = allocate_budget(s, nb, 1.0);
        sum_ok += std::accumulate(a.budgets.begin(), a.budgets.end(), Index{0}) == nb;
        bool ranked = true;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                const auto bi = a.budgets[static_cast<std::size_t>(i)], bj = a.budgets[static_cast<std::size_t>(j)];
                if ((s(i) > s(j) && bi < bj) || (s(i) == s(j) && std::abs(bi - bj) > 1)) {
                    ranked = false;
                }
            }
        }
        rank_ok += ranked;
    }
    Outcome o;
    o.pass = sum_ok == 1000 && rank_ok == 1000;
    o.detail = "exact sum " + std::to_string(sum_ok) + "/1000, rank-consistent " + std::to_string(rank_ok) + "/1000";
    return o;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

struct Seeded {
    std::vector<double> base_all, base_std, base_chi, base_dbi;
    std::vector<double> full_all, full_std, full_chi, full_dbi;
    std::vector<double> s1_all, s1_std, s1_gap, full_gap;
    double secs = 0;
};

Seeded run_seeds(const std::filesystem::path& root)
{
    Seeded r;
    const auto t0 = Clock::now();
    for (std::uint64_t seed : {1, 2, 3}) {
        RunConfig c;
        c.seed = seed;
        const auto res = run_all(c, root / ("seed" + std::to_string(seed)));
        const auto& b = res.baseline.metrics;
        const auto& f = res.full.metrics;
        const auto& s1 = res.full.stage1_metrics;
        r.base_all.push_back(b.acc_all);
        r.base_std.push_back(b.std_groups);
        r.base_chi.push_back(b.chi);
        r.base_dbi.push_back(b.dbi);
        r.full_all.push_back(f.acc_all);
        r.full_std.push_back(f.std_groups);
        r.full_chi.push_back(f.chi);
        r.full_dbi.push_back(f.dbi);
        r.full_gap.push_back(f.acc_many - f.acc_few);
        r.s1_all.push_back(s1.acc_all);
        r.s1_std.push_back(s1.std_groups);
        r.s1_gap.push_back(s1.acc_many - s1.acc_few);
        std::printf("  seed %llu: baseline all %.2f std %.2f | stage1 all %.2f std %.2f | full all %.2f std %.2f\n",
                    static_cast<unsigned long long>(seed), b.acc_all, b.std_groups, s1.acc_all, s1.std_groups,
                    f.acc_all, f.std_groups);
        std::fflush(stdout);
    }
    r.secs = seconds_since(t0);
    return r;
}

Outcome end_to_end(const Seeded& r)
{
    const double ba = median(r.base_all), fa = median(r.full_all);
    const double bs = median(r.base_std), fs = median(r.full_std);
    Outcome o;
    o.pass = fa - ba >= 2.0 && fs < bs && r.secs < 600.0;
    char buf[256];
    std::snprintf(buf, sizeof buf, "median all %.2f vs baseline %.2f (+%.2f), std %.2f vs %.2f, %.1fs", fa, ba,
                  fa - ba, fs, bs, r.secs);
    o.detail = buf;
    return o;
}

Outcome cluster_quality(const Seeded& r)
{
    const double bc = median(r.base_chi), fc = median(r.full_chi);
    const double bd = median(r.base_dbi), fd = median(r.full_dbi);
    Outcome o;
    o.pass = fc > bc && fd < bd;
    char buf[256];
    std::snprintf(buf, sizeof buf, "median CHI %.2f vs %.2f, DBI %.4f vs %.4f", fc, bc, fd, bd);
    o.detail = buf;
    return o;
}

Outcome distill_ablation(const Seeded& r)
{
    const double sa = median(r.s1_all), fa = median(r.full_all);
    const double ss = median(r.s1_std), fs = median(r.full_std);
    const double sg = median(r.s1_gap), fg = median(r.full_gap);
    Outcome o;
    o.pass = fa >= sa - 0.5 && (fs < ss || fg < sg);
    char buf[256];
    std::snprintf(buf, sizeof buf, "median all %.2f vs stage-1 %.2f, std %.2f vs %.2f, gap %.2f vs %.2f", fa, sa, fs,
                  ss, fg, sg);
    o.detail = buf;
    return o;
}

Outcome determinism(const std::filesystem::path& root)
{
    RunConfig c;
    c.seed = 1;
    run_all(c, root / "repeat");
    int same = 0, total = 0;
    for (const auto& entry : std::filesystem::directory_iterator(root / "seed1")) {
        if (entry.path().extension() != ".csv") {
            continue;
        }
        ++total;
        const auto other = root / "repeat" / entry.path().filename();
        same += std::filesystem::exists(other) && slurp(entry.path()) == slurp(other);
    }
    Outcome o;
    o.pass = total > 0 && same == total;
    o.detail = std::to_string(same) + "/" + std::to_string(total) + " CSV files byte-identical";
    return o;
}

void print(int id, const Outcome& o, bool& all)
{
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
}

}  // namespace

int main()
{
    bool all = true;
    try {
        print(1, gradient_oracle(), all);
        print(2, loss_identities(), all);
        print(3, clustering_oracle(), all);
        print(4, tailness_direction(), all);
        print(5, budget_conservation(), all);

        const auto root = std::filesystem::temp_directory_path() / "tlss_acceptance";
        std::filesystem::remove_all(root);
        const Seeded r = run_seeds(root);
        print(6, end_to_end(r), all);
        print(7, cluster_quality(r), all);
        print(8, distill_ablation(r), all);
        print(9, determinism(root), all);
    } catch (const std::exception& e) {
        std::printf("FAIL aborted: %s\n", e.what());
        return 1;
    }
    return all ? 0 : 1;
}
