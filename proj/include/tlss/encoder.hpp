#pragma once

#include "tlss/common.hpp"
#include "tlss/rng.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>

namespace tlss {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1 };

struct EncoderConfig {
    int input_dim = 16;
    std::vector<int> hidden_dims{64};
    int embed_dim = 32;
    Activation activation = Activation::Relu;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (input_dim < 1) {
            throw ConfigError("encoder input_dim must be positive");
        }
        if (hidden_dims.empty()) {
            throw ConfigError("encoder needs at least one hidden layer");
        }
        for (int h : hidden_dims) {
            if (h < 1) {
                throw ConfigError("encoder hidden sizes must be positive");
            }
        }
        if (embed_dim < 2) {
            throw ConfigError("encoder embed_dim must be >= 2");
        }
    }

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Dense layer computing x * weight + bias; weight is (fan_in x fan_out).
template <typename Scalar>
struct Layer {
    Matrix<Scalar> weight;
    Vector<Scalar> bias;
};

template <typename Scalar>
using LayerStack = std::vector<Layer<Scalar>>;

template <typename Scalar>
struct EncoderParams {
    EncoderConfig config;
    LayerStack<Scalar> layers;

    Index parameter_count() const
    {
        Index n = 0;
        for (const auto& l : layers) {
            n += l.weight.size() + l.bias.size();
        }
        return n;
    }
};

/// Embedding rows normalize against max(norm, kNormEpsilon).
inline constexpr double kNormEpsilon = 1e-12;

template <typename Scalar = double>
EncoderParams<Scalar> init_encoder(const EncoderConfig& config)
{
    config.validate();
    EncoderParams<Scalar> params;
    params.config = config;
    Rng rng = make_stream(config.seed, "init");

    std::vector<int> sizes{config.input_dim};
    sizes.insert(sizes.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    sizes.push_back(config.embed_dim);

    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        Layer<Scalar> layer;
        layer.weight.resize(fan_in, fan_out);
        for (Index i = 0; i < layer.weight.size(); ++i) {
            layer.weight.data()[i] = static_cast<Scalar>(normal(rng));
        }
        layer.bias = Vector<Scalar>::Zero(fan_out);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

/// Everything the backward pass needs from a forward evaluation.
template <typename Scalar>
struct ForwardPass {
    std::vector<Matrix<Scalar>> inputs;  // input to each layer
    std::vector<Matrix<Scalar>> pre;     // pre-activation of each hidden layer
    Matrix<Scalar> raw;                  // last layer output before normalization
    Vector<Scalar> norms;                // guarded row norms of raw
    Matrix<Scalar> embeddings;           // raw rows divided by norms
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> activate(const Matrix<Scalar>& x, Activation a)
{
    if (a == Activation::Relu) {
        return x.cwiseMax(Scalar(0));
    }
    return x.array().tanh().matrix();
}

template <typename Scalar>
Matrix<Scalar> activation_backward(const Matrix<Scalar>& pre, const Matrix<Scalar>& upstream, Activation a)
{
    if (a == Activation::Relu) {
        return (pre.array() > Scalar(0)).select(upstream, Matrix<Scalar>::Zero(upstream.rows(), upstream.cols()));
    }
    const auto t = pre.array().tanh();
    return (upstream.array() * (Scalar(1) - t * t)).matrix();
}

}  // namespace detail

template <typename Scalar, typename Derived>
ForwardPass<Scalar> forward_pass(const EncoderParams<Scalar>& params, const Eigen::MatrixBase<Derived>& batch)
{
    if (batch.cols() != params.config.input_dim) {
        throw DimensionError("encoder expects input dimension " + std::to_string(params.config.input_dim) +
                             ", got " + std::to_string(batch.cols()));
    }
    ForwardPass<Scalar> pass;
    Matrix<Scalar> h = batch.template cast<Scalar>();
    const std::size_t n_layers = params.layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = params.layers[l];
        Matrix<Scalar> z = h * layer.weight;
        z.rowwise() += layer.bias.transpose();
        pass.inputs.push_back(std::move(h));
        if (l + 1 < n_layers) {
            h = detail::activate(z, params.config.activation);
            pass.pre.push_back(std::move(z));
        } else {
            pass.raw = std::move(z);
        }
    }
    pass.norms = pass.raw.rowwise().norm().cwiseMax(Scalar(kNormEpsilon));
    pass.embeddings = pass.norms.cwiseInverse().asDiagonal() * pass.raw;
    return pass;
}

/// Unit-norm embeddings of each input row.
template <typename Scalar, typename Derived>
Matrix<Scalar> embed(const EncoderParams<Scalar>& params, const Eigen::MatrixBase<Derived>& batch)
{
    return forward_pass(params, batch).embeddings;
}

/// Backpropagates dLoss/dEmbeddings through normalization and every layer.
template <typename Scalar, typename Derived>
LayerStack<Scalar> backward(const EncoderParams<Scalar>& params, const ForwardPass<Scalar>& pass,
                            const Eigen::MatrixBase<Derived>& adjoint)
{
    if (adjoint.rows() != pass.embeddings.rows() || adjoint.cols() != pass.embeddings.cols()) {
        throw DimensionError("loss adjoint shape does not match the embedding batch");
    }
    // y = r / n with n = max(|r|, eps):  dr = (g - y (y.g)) / n  when |r| > eps, else g / eps.
    Matrix<Scalar> upstream(adjoint.rows(), adjoint.cols());
    for (Index i = 0; i < adjoint.rows(); ++i) {
        const auto g = adjoint.row(i).template cast<Scalar>();
        const Scalar n = pass.norms(i);
        if (pass.raw.row(i).norm() > Scalar(kNormEpsilon)) {
            const auto y = pass.embeddings.row(i);
            upstream.row(i) = (g - y * y.dot(g)) / n;
        } else {
            upstream.row(i) = g / n;
        }
    }

    LayerStack<Scalar> grads(params.layers.size());
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const auto& layer = params.layers[l];
        grads[l].weight = pass.inputs[l].transpose() * upstream;
        grads[l].bias = upstream.colwise().sum().transpose();
        if (l > 0) {
            Matrix<Scalar> through = upstream * layer.weight.transpose();
            upstream = detail::activation_backward(pass.pre[l - 1], through, params.config.activation);
        }
    }
    return grads;
}

/// Exact parameter gradients of a scalar loss given dLoss/dEmbeddings.
template <typename Scalar, typename DerivedX, typename DerivedG>
LayerStack<Scalar> gradient(const EncoderParams<Scalar>& params, const Eigen::MatrixBase<DerivedX>& batch,
                            const Eigen::MatrixBase<DerivedG>& adjoint)
{
    return backward(params, forward_pass(params, batch), adjoint);
}

template <typename Scalar>
LayerStack<Scalar> zeros_like(const LayerStack<Scalar>& layers)
{
    LayerStack<Scalar> out;
    out.reserve(layers.size());
    for (const auto& l : layers) {
        out.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()), Vector<Scalar>::Zero(l.bias.size())});
    }
    return out;
}

template <typename Scalar>
bool all_finite(const LayerStack<Scalar>& layers)
{
    for (const auto& l : layers) {
        if (!l.weight.allFinite() || !l.bias.allFinite()) {
            return false;
        }
    }
    return true;
}

/// v <- m*v + g;  p <- p - lr*v  (elementwise). Throws NumericError on a
/// non-finite gradient before touching p or v.
template <typename P, typename G, typename V>
void sgd_step(Eigen::MatrixBase<P>& param, const Eigen::MatrixBase<G>& grad, Eigen::MatrixBase<V>& velocity,
              double lr, double momentum)
{
    if (!grad.allFinite()) {
        throw NumericError("non-finite gradient");
    }
    using Scalar = typename P::Scalar;
    velocity = Scalar(momentum) * velocity + grad;
    param -= Scalar(lr) * velocity;
}

template <typename Scalar>
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum)
    {
        if (!(lr > 0.0)) {
            throw ConfigError("learning rate must be > 0");
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) {
            throw ConfigError("momentum must lie in [0, 1)");
        }
    }

    void step(EncoderParams<Scalar>& params, const LayerStack<Scalar>& grads)
    {
        if (grads.size() != params.layers.size()) {
            throw DimensionError("gradient stack does not match parameters");
        }
        if (!all_finite(grads)) {
            throw NumericError("non-finite gradient during training step");
        }
        if (velocity_.empty()) {
            velocity_ = zeros_like(params.layers);
        }
        for (std::size_t l = 0; l < grads.size(); ++l) {
            sgd_step(params.layers[l].weight, grads[l].weight, velocity_[l].weight, lr_, momentum_);
            sgd_step(params.layers[l].bias, grads[l].bias, velocity_[l].bias, lr_, momentum_);
        }
    }

    const LayerStack<Scalar>& velocity() const { return velocity_; }
    void set_velocity(LayerStack<Scalar> v) { velocity_ = std::move(v); }
    double lr() const { return lr_; }
    double momentum() const { return momentum_; }

private:
    double lr_;
    double momentum_;
    LayerStack<Scalar> velocity_;
};

// Checkpoint, little-endian:
//   "TLCK" | u16 version | u32 input_dim | u32 n_hidden | u32 hidden... | u32 embed_dim
//   | u8 activation | u64 seed | per layer: f64 weight (row-major), f64 bias
//   | u8 has_velocity | [velocity tensors, same order]
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
    EncoderParams<double> params;
    std::optional<LayerStack<double>> velocity;
};

void save_checkpoint(const std::filesystem::path& path, const EncoderParams<double>& params,
                     const LayerStack<double>* velocity = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tlss
