#include "tlss/config.hpp"

#include "tlss/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace tlss {

using nlohmann::json;

LongTailSpec RunConfig::longtail_spec() const
{
    LongTailSpec s;
    s.n_classes = data.n_classes;
    s.max_per_class = data.max_per_class;
    s.imbalance_ratio = data.imbalance_ratio;
    s.dim = data.dim;
    s.class_separation = data.class_separation;
    s.noise_sigma = data.noise_sigma;
    s.seed = stream_seed(seed, "data");
    return s;
}

OodSpec RunConfig::ood_spec() const
{
    OodSpec s;
    s.n = data.ood_pool;
    s.dim = data.dim;
    s.n_classes = data.n_classes;
    s.class_separation = data.class_separation;
    s.noise_sigma = data.ood_noise_sigma;
    s.outward_scale = data.ood_outward_scale;
    s.seed = stream_seed(seed, "ood");
    return s;
}

std::uint64_t RunConfig::test_seed() const
{
    return stream_seed(seed, "test");
}

EncoderConfig RunConfig::encoder_config() const
{
    EncoderConfig c = encoder;
    c.input_dim = data.dim;
    c.seed = stream_seed(seed, "init");
    return c;
}

PretrainConfig RunConfig::pretrain_config() const
{
    PretrainConfig c = pretrain;
    c.seed = stream_seed(seed, "pretrain");
    return c;
}

DistillConfig RunConfig::distill_config() const
{
    DistillConfig c = distill;
    c.seed = stream_seed(seed, "distill");
    return c;
}

ClusterConfig RunConfig::cluster_config() const
{
    ClusterConfig c = cluster;
    c.refine.seed = stream_seed(seed, "cluster");
    return c;
}

ProbeOptions RunConfig::probe_options(bool few_shot) const
{
    ProbeOptions o;
    o.label_fraction = few_shot ? eval.few_shot_fraction : 1.0;
    o.epochs = few_shot ? eval.few_shot_epochs : eval.probe_epochs;
    o.lr = eval.lr;
    o.momentum = eval.momentum;
    o.batch_size = eval.batch_size;
    o.seed = stream_seed(seed, few_shot ? "probe-few-shot" : "probe");
    return o;
}

void RunConfig::validate() const
{
    longtail_spec().validate();
    class_counts(longtail_spec());
    if (data.test_per_class < 1) {
        throw ConfigError("data.test_per_class must be positive");
    }
    ood_spec().validate();
    encoder_config().validate();
    cluster_config().validate();
    tailness.validate();
    pretrain_config().validate();
    distill_config().validate();
    probe_options(false).validate();
    probe_options(true).validate();
    if (data.n_classes < 3) {
        throw ConfigError("evaluation groups need at least 3 classes");
    }
    if (distill.epochs > 0 && cluster.n_clusters < 2) {
        throw ConfigError("distillation needs cluster.n_clusters >= 2");
    }
    if (pretrain.use_ood && tailness.budget > data.ood_pool) {
        throw ConfigError("tailness.budget exceeds the OOD pool size");
    }
}

namespace {

/// Reads fields from one JSON object and rejects any key never asked for.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object()) {
            throw ConfigError("config section '" + name_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!it->is_number_integer()) {
                    throw ConfigError("expected an integer");
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) {
                    throw ConfigError("expected a number");
                }
            }
            out = it->get<T>();
        } catch (const std::exception& e) {
            throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
        }
    }

    const json* child(const char* key)
    {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const
    {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError("unknown config key '" + (name_.empty() ? key : name_ + "." + key) + "'");
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

Activation parse_activation(const std::string& s)
{
    if (s == "relu") {
        return Activation::Relu;
    }
    if (s == "tanh") {
        return Activation::Tanh;
    }
    throw ConfigError("encoder.activation must be 'relu' or 'tanh', got '" + s + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text)
{
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c;
    Section top(root, "");
    top.read("seed", c.seed);
    if (const json* j = top.child("data")) {
        Section s(*j, "data");
        s.read("n_classes", c.data.n_classes);
        s.read("max_per_class", c.data.max_per_class);
        s.read("imbalance_ratio", c.data.imbalance_ratio);
        s.read("dim", c.data.dim);
        s.read("class_separation", c.data.class_separation);
        s.read("noise_sigma", c.data.noise_sigma);
        s.read("test_per_class", c.data.test_per_class);
        s.read("ood_pool", c.data.ood_pool);
        s.read("ood_noise_sigma", c.data.ood_noise_sigma);
        s.read("ood_outward_scale", c.data.ood_outward_scale);
        s.finish();
    }
    if (const json* j = top.child("encoder")) {
        Section s(*j, "encoder");
        s.read("hidden_dims", c.encoder.hidden_dims);
        s.read("embed_dim", c.encoder.embed_dim);
        std::string act = c.encoder.activation == Activation::Relu ? "relu" : "tanh";
        s.read("activation", act);
        c.encoder.activation = parse_activation(act);
        s.finish();
    }
    if (const json* j = top.child("cluster")) {
        Section s(*j, "cluster");
        s.read("n_clusters", c.cluster.n_clusters);
        s.read("change_threshold", c.cluster.refine.change_threshold);
        s.read("max_epochs", c.cluster.refine.max_epochs);
        s.read("lr", c.cluster.refine.lr);
        s.read("batch_size", c.cluster.refine.batch_size);
        s.finish();
    }
    if (const json* j = top.child("tailness")) {
        Section s(*j, "tailness");
        s.read("k", c.tailness.k);
        s.read("rho", c.tailness.rho);
        s.read("budget", c.tailness.budget);
        s.read("tau_budget", c.tailness.tau_budget);
        s.finish();
    }
    if (const json* j = top.child("pretrain")) {
        Section s(*j, "pretrain");
        s.read("k_pos", c.pretrain.k_pos);
        s.read("alpha", c.pretrain.alpha);
        s.read("tau", c.pretrain.tau);
        s.read("refresh_period", c.pretrain.refresh_period);
        s.read("batch_size", c.pretrain.batch_size);
        s.read("epochs", c.pretrain.epochs);
        s.read("lr", c.pretrain.lr);
        s.read("momentum", c.pretrain.momentum);
        s.read("jitter_sigma", c.pretrain.augment.jitter_sigma);
        s.read("dropout_rate", c.pretrain.augment.dropout_rate);
        s.read("use_ood", c.pretrain.use_ood);
        s.finish();
    }
    if (const json* j = top.child("distill")) {
        Section s(*j, "distill");
        s.read("k_kd", c.distill.k_kd);
        s.read("beta", c.distill.beta);
        s.read("epochs", c.distill.epochs);
        s.read("batch_size", c.distill.batch_size);
        s.read("lr", c.distill.lr);
        s.read("momentum", c.distill.momentum);
        s.finish();
    }
    if (const json* j = top.child("eval")) {
        Section s(*j, "eval");
        s.read("probe_epochs", c.eval.probe_epochs);
        s.read("few_shot_epochs", c.eval.few_shot_epochs);
        s.read("few_shot_fraction", c.eval.few_shot_fraction);
        s.read("lr", c.eval.lr);
        s.read("momentum", c.eval.momentum);
        s.read("batch_size", c.eval.batch_size);
        s.finish();
    }
    if (const json* j = top.child("paths")) {
        Section s(*j, "paths");
        std::string out = c.out_dir.string();
        s.read("out_dir", out);
        c.out_dir = out;
        s.finish();
    }
    top.finish();
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& c)
{
    json j;
    j["seed"] = c.seed;
    j["data"] = {{"n_classes", c.data.n_classes},
                 {"max_per_class", c.data.max_per_class},
                 {"imbalance_ratio", c.data.imbalance_ratio},
                 {"dim", c.data.dim},
                 {"class_separation", c.data.class_separation},
                 {"noise_sigma", c.data.noise_sigma},
                 {"test_per_class", c.data.test_per_class},
                 {"ood_pool", c.data.ood_pool},
                 {"ood_noise_sigma", c.data.ood_noise_sigma},
                 {"ood_outward_scale", c.data.ood_outward_scale}};
    j["encoder"] = {{"hidden_dims", c.encoder.hidden_dims},
                    {"embed_dim", c.encoder.embed_dim},
                    {"activation", c.encoder.activation == Activation::Relu ? "relu" : "tanh"}};
    j["cluster"] = {{"n_clusters", c.cluster.n_clusters},
                    {"change_threshold", c.cluster.refine.change_threshold},
                    {"max_epochs", c.cluster.refine.max_epochs},
                    {"lr", c.cluster.refine.lr},
                    {"batch_size", c.cluster.refine.batch_size}};
    j["tailness"] = {{"k", c.tailness.k},
                     {"rho", c.tailness.rho},
                     {"budget", c.tailness.budget},
                     {"tau_budget", c.tailness.tau_budget}};
    j["pretrain"] = {{"k_pos", c.pretrain.k_pos},
                     {"alpha", c.pretrain.alpha},
                     {"tau", c.pretrain.tau},
                     {"refresh_period", c.pretrain.refresh_period},
                     {"batch_size", c.pretrain.batch_size},
                     {"epochs", c.pretrain.epochs},
                     {"lr", c.pretrain.lr},
                     {"momentum", c.pretrain.momentum},
                     {"jitter_sigma", c.pretrain.augment.jitter_sigma},
                     {"dropout_rate", c.pretrain.augment.dropout_rate},
                     {"use_ood", c.pretrain.use_ood}};
    j["distill"] = {{"k_kd", c.distill.k_kd},
                    {"beta", c.distill.beta},
                    {"epochs", c.distill.epochs},
                    {"batch_size", c.distill.batch_size},
                    {"lr", c.distill.lr},
                    {"momentum", c.distill.momentum}};
    j["eval"] = {{"probe_epochs", c.eval.probe_epochs},
                 {"few_shot_epochs", c.eval.few_shot_epochs},
                 {"few_shot_fraction", c.eval.few_shot_fraction},
                 {"lr", c.eval.lr},
                 {"momentum", c.eval.momentum},
                 {"batch_size", c.eval.batch_size}};
    j["paths"] = {{"out_dir", c.out_dir.string()}};
    return j.dump(2);
}

}  // namespace tlss
