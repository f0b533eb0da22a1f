#include "tlss/encoder.hpp"

#include "binio.hpp"

namespace tlss {

namespace {

constexpr char kMagic[4] = {'T', 'L', 'C', 'K'};

void put_stack(binio::Writer& w, const LayerStack<double>& layers)
{
    for (const auto& l : layers) {
        for (Index i = 0; i < l.weight.size(); ++i) {
            w.put_f64(l.weight.data()[i]);
        }
        for (Index i = 0; i < l.bias.size(); ++i) {
            w.put_f64(l.bias(i));
        }
    }
}

void get_stack(binio::Reader& r, LayerStack<double>& layers)
{
    for (auto& l : layers) {
        for (Index i = 0; i < l.weight.size(); ++i) {
            l.weight.data()[i] = r.get_f64("weights");
        }
        for (Index i = 0; i < l.bias.size(); ++i) {
            l.bias(i) = r.get_f64("biases");
        }
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const EncoderParams<double>& params,
                     const LayerStack<double>* velocity)
{
    const EncoderConfig& c = params.config;
    binio::Writer w;
    w.put_bytes(kMagic, 4);
    w.put<std::uint16_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.input_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.hidden_dims.size()));
    for (int h : c.hidden_dims) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
    }
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.embed_dim));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
    w.put<std::uint64_t>(c.seed);
    put_stack(w, params.layers);
    const bool has_velocity = velocity != nullptr && !velocity->empty();
    w.put<std::uint8_t>(has_velocity ? 1 : 0);
    if (has_velocity) {
        if (velocity->size() != params.layers.size()) {
            throw DimensionError("optimizer state does not match the parameter stack");
        }
        put_stack(w, *velocity);
    }
    w.write_to(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    binio::Reader r(path);
    r.need(4, "magic");
    if (!r.starts_with(kMagic, 4)) {
        throw FormatError(r.name() + ": bad magic bytes, not a checkpoint");
    }
    r.skip(4);
    const auto version = r.get<std::uint16_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError(r.name() + ": unsupported checkpoint version " + std::to_string(version));
    }
    EncoderConfig c;
    c.input_dim = static_cast<int>(r.get<std::uint32_t>("input_dim"));
    const auto n_hidden = r.get<std::uint32_t>("hidden count");
    if (n_hidden > 1024) {
        throw FormatError(r.name() + ": implausible hidden layer count");
    }
    c.hidden_dims.clear();
    for (std::uint32_t k = 0; k < n_hidden; ++k) {
        c.hidden_dims.push_back(static_cast<int>(r.get<std::uint32_t>("hidden dims")));
    }
    c.embed_dim = static_cast<int>(r.get<std::uint32_t>("embed_dim"));
    const auto act = r.get<std::uint8_t>("activation");
    if (act > 1) {
        throw FormatError(r.name() + ": unknown activation tag");
    }
    c.activation = static_cast<Activation>(act);
    c.seed = r.get<std::uint64_t>("seed");
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(r.name() + ": invalid encoder config: " + e.what());
    }

    // Shapes come from the config; init allocates them (values overwritten).
    Checkpoint ck{init_encoder<double>(c), std::nullopt};
    r.need(static_cast<std::size_t>(ck.params.parameter_count()) * 8, "parameters");
    get_stack(r, ck.params.layers);
    const auto has_velocity = r.get<std::uint8_t>("optimizer flag");
    if (has_velocity == 1) {
        LayerStack<double> v = zeros_like(ck.params.layers);
        get_stack(r, v);
        ck.velocity = std::move(v);
    } else if (has_velocity != 0) {
        throw FormatError(r.name() + ": bad optimizer flag");
    }
    if (r.remaining() != 0) {
        throw FormatError(r.name() + ": trailing bytes after checkpoint payload");
    }
    return ck;
}

}  // namespace tlss
