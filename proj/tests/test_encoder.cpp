#include "oracles.hpp"

#include "tlss/encoder.hpp"

#include <doctest.h>

#include <fstream>

using namespace tlss;

namespace {

EncoderConfig small(Activation a = Activation::Tanh, std::uint64_t seed = 1)
{
    EncoderConfig c;
    c.input_dim = 4;
    c.hidden_dims = {8};
    c.embed_dim = 3;
    c.activation = a;
    c.seed = seed;
    return c;
}

Matrix<double> random_batch(Index n, Index d, std::uint64_t seed)
{
    Rng rng(seed);
    std::normal_distribution<double> g;
    Matrix<double> x(n, d);
    for (Index i = 0; i < x.size(); ++i) {
        x.data()[i] = g(rng);
    }
    return x;
}

std::filesystem::path temp_file(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("tlss_enc_" + name);
}

}  // namespace

TEST_CASE("init shapes and determinism")
{
    const auto p = init_encoder<double>(small());
    REQUIRE(p.layers.size() == 2);
    CHECK(p.layers[0].weight.rows() == 4);
    CHECK(p.layers[0].weight.cols() == 8);
    CHECK(p.layers[1].weight.rows() == 8);
    CHECK(p.layers[1].weight.cols() == 3);
    CHECK(p.layers[1].bias.size() == 3);
    CHECK(p.parameter_count() == 4 * 8 + 8 + 8 * 3 + 3);

    const auto q = init_encoder<double>(small());
    CHECK(p.layers[0].weight == q.layers[0].weight);
    CHECK(p.layers[1].weight == q.layers[1].weight);
    CHECK_FALSE(p.layers[0].weight == init_encoder<double>(small(Activation::Tanh, 2)).layers[0].weight);
}

TEST_CASE("empty hidden_dims is a config error")
{
    auto c = small();
    c.hidden_dims.clear();
    CHECK_THROWS_AS(init_encoder<double>(c), ConfigError);
}

TEST_CASE("outputs are unit norm and pure")
{
    const auto p = init_encoder<double>(small(Activation::Relu));
    Matrix<double> x = random_batch(50, 4, 3);
    x.row(7) = x.row(3);
    const auto y = embed(p, x);
    for (Index i = 0; i < y.rows(); ++i) {
        CHECK(std::abs(y.row(i).norm() - 1.0) < 1e-6);
    }
    CHECK(y.row(7) == y.row(3));
}

TEST_CASE("float and double encoders agree")
{
    const auto pd = init_encoder<double>(small());
    const auto pf = init_encoder<float>(small());
    const Matrix<double> x = random_batch(5, 4, 9);
    const Matrix<double> yd = embed(pd, x);
    const Matrix<double> yf = embed(pf, x.cast<float>()).cast<double>();
    CHECK((yd - yf).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("zero pre-normalization output is guarded")
{
    auto p = init_encoder<double>(small(Activation::Relu));
    p.layers.back().weight.setZero();
    p.layers.back().bias.setZero();
    const auto pass = forward_pass(p, random_batch(3, 4, 1));
    CHECK(pass.embeddings.allFinite());
    CHECK(pass.embeddings.isZero());
    const auto g = backward(p, pass, Matrix<double>::Ones(3, 3));
    CHECK(all_finite(g));
}

TEST_CASE("dimension mismatch")
{
    const auto p = init_encoder<double>(small());
    CHECK_THROWS_AS(embed(p, random_batch(2, 5, 1)), DimensionError);
    const auto pass = forward_pass(p, random_batch(2, 4, 1));
    CHECK_THROWS_AS(backward(p, pass, Matrix<double>::Ones(2, 4)), DimensionError);
}

TEST_CASE("zero adjoint gives zero gradients")
{
    const auto p = init_encoder<double>(small());
    const auto g = gradient(p, random_batch(6, 4, 2), Matrix<double>::Zero(6, 3));
    for (const auto& l : g) {
        CHECK(l.weight.isZero());
        CHECK(l.bias.isZero());
    }
}

TEST_CASE("parameter gradients match central differences")
{
    for (Activation a : {Activation::Tanh, Activation::Relu}) {
        int checked = 0;
        for (std::uint64_t s = 0; checked < 10; ++s) {
            auto c = small(a, s);
            c.hidden_dims = {6, 5};
            const auto p = init_encoder<double>(c);
            const Matrix<double> x = random_batch(5, 4, 100 + s);
            const Matrix<double> target = random_batch(5, 3, 200 + s);
            const auto pass = forward_pass(p, x);
            if (!oracle::smooth_point(pass)) {
                continue;
            }
            // L = sum(target .* Y) + 0.5 sum(Y_0^3)
            auto loss = [&](const Matrix<double>& y) {
                return (target.array() * y.array()).sum() + 0.5 * y.col(0).array().pow(3).sum();
            };
            Matrix<double> adj = target;
            adj.col(0).array() += 1.5 * pass.embeddings.col(0).array().square();
            const auto analytic = oracle::flatten(backward(p, pass, adj));
            const auto numeric = oracle::fd_parameter_gradient(p, x, loss);
            CHECK(oracle::rel_error(analytic, numeric) < 1e-4);
            ++checked;
        }
    }
}

TEST_CASE("sgd_step arithmetic")
{
    Vector<double> p(1), g(1), v(1);
    p << 3;
    g << 1;
    v << 0;
    sgd_step(p, g, v, 1.0, 0.0);
    CHECK(p(0) == doctest::Approx(2.0));

    p << 0;
    g << 0;
    v << 1;
    sgd_step(p, g, v, 0.1, 0.9);
    CHECK(v(0) == doctest::Approx(0.9));
    CHECK(p(0) == doctest::Approx(-0.09));

    g << std::nan("");
    CHECK_THROWS_AS(sgd_step(p, g, v, 0.1, 0.9), NumericError);
    CHECK(p(0) == doctest::Approx(-0.09));
}

TEST_CASE("optimizer rejects non-finite gradients")
{
    auto p = init_encoder<double>(small());
    auto g = zeros_like(p.layers);
    g[0].weight(0, 0) = std::numeric_limits<double>::infinity();
    SgdMomentum<double> opt(0.1, 0.9);
    CHECK_THROWS_AS(opt.step(p, g), NumericError);
    CHECK_THROWS_AS(SgdMomentum<double>(0.0, 0.9), ConfigError);
}

TEST_CASE("checkpoint round trip")
{
    const auto p = init_encoder<double>(small(Activation::Relu, 4));
    const Matrix<double> x = random_batch(8, 4, 5);
    auto v = zeros_like(p.layers);
    v[1].bias(2) = 0.25;
    const auto path = temp_file("rt.ckpt");
    save_checkpoint(path, p, &v);
    const auto ck = load_checkpoint(path);
    CHECK(ck.params.config == p.config);
    CHECK(embed(ck.params, x) == embed(p, x));
    REQUIRE(ck.velocity.has_value());
    CHECK((*ck.velocity)[1].bias(2) == 0.25);

    save_checkpoint(path, p);
    CHECK_FALSE(load_checkpoint(path).velocity.has_value());
}

TEST_CASE("truncated or foreign checkpoints are rejected")
{
    const auto p = init_encoder<double>(small());
    const auto path = temp_file("bad.ckpt");
    save_checkpoint(path, p);
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes{std::istreambuf_iterator<char>(in), {}};
    in.close();

    auto cut = bytes;
    cut.resize(cut.size() / 2);
    std::ofstream(path, std::ios::binary).write(cut.data(), static_cast<std::streamsize>(cut.size()));
    CHECK_THROWS_AS(load_checkpoint(path), TruncationError);

    auto magic = bytes;
    magic[1] = 'Z';
    std::ofstream(path, std::ios::binary).write(magic.data(), static_cast<std::streamsize>(magic.size()));
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    auto version = bytes;
    version[4] = 7;
    std::ofstream(path, std::ios::binary).write(version.data(), static_cast<std::streamsize>(version.size()));
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);

    CHECK_THROWS_AS(load_checkpoint(temp_file("absent.ckpt")), IoError);
}

TEST_CASE("a loaded checkpoint initializes an identical encoder")
{
    const auto f = init_encoder<double>(small(Activation::Relu, 8));
    const auto path = temp_file("init.ckpt");
    save_checkpoint(path, f);
    const EncoderParams<double> g = load_checkpoint(path).params;
    const Matrix<double> x = random_batch(20, 4, 6);
    CHECK(embed(g, x) == embed(f, x));
}
