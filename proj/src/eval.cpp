#include "tlss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace tlss {

Matrix<double> ProbeModel::logits(const Matrix<double>& embeddings) const
{
    Matrix<double> out = embeddings * weight;
    out.rowwise() += bias.transpose();
    return out;
}

std::vector<int> ProbeModel::predict(const Matrix<double>& embeddings) const
{
    const Matrix<double> l = logits(embeddings);
    std::vector<int> out(static_cast<std::size_t>(l.rows()));
    for (Index i = 0; i < l.rows(); ++i) {
        Index best = 0;
        for (Index k = 1; k < l.cols(); ++k) {
            if (l(i, k) > l(i, best)) {
                best = k;
            }
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

void ProbeOptions::validate() const
{
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
        throw ConfigError("label_fraction must lie in (0, 1]");
    }
    if (epochs < 0) {
        throw ConfigError("probe epochs must be >= 0");
    }
    if (!(lr > 0.0)) {
        throw ConfigError("probe lr must be > 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("probe momentum must lie in [0, 1)");
    }
    if (batch_size < 1) {
        throw ConfigError("probe batch_size must be positive");
    }
}

std::vector<Index> count_classes(const std::vector<int>& labels, int n_classes)
{
    std::vector<Index> counts(static_cast<std::size_t>(n_classes), 0);
    for (int l : labels) {
        if (l < 0 || l >= n_classes) {
            throw DimensionError("label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
        }
        ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

IndexList probe_subsample(const std::vector<int>& labels, int n_classes, double label_fraction, Rng& rng)
{
    const auto counts = count_classes(labels, n_classes);
    for (int c = 0; c < n_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw ConfigError("class " + std::to_string(c) + " has no labeled training samples");
        }
    }
    const auto n = static_cast<Index>(labels.size());
    IndexList all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    if (label_fraction >= 1.0) {
        return all;
    }
    const Index keep = std::max<Index>(1, static_cast<Index>(std::llround(label_fraction * static_cast<double>(n))));
    IndexList perm = all;
    std::shuffle(perm.begin(), perm.end(), rng);
    IndexList picked(perm.begin(), perm.begin() + keep);
    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (Index i : picked) {
        seen[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] = true;
    }
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
        std::sort(picked.begin(), picked.end());
        return picked;
    }

    // Stratified redraw: round(fraction * n_c) per class, at least one.
    std::vector<IndexList> by_class(static_cast<std::size_t>(n_classes));
    for (Index i : perm) {
        by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    }
    picked.clear();
    for (const auto& rows : by_class) {
        const auto take = std::max<Index>(
            1, static_cast<Index>(std::llround(label_fraction * static_cast<double>(rows.size()))));
        picked.insert(picked.end(), rows.begin(), rows.begin() + std::min<Index>(take, static_cast<Index>(rows.size())));
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

ProbeModel train_probe(const Matrix<double>& embeddings, const std::vector<int>& labels, int n_classes,
                       const ProbeOptions& options)
{
    options.validate();
    if (n_classes < 2) {
        throw ConfigError("probe needs at least 2 classes");
    }
    if (static_cast<Index>(labels.size()) != embeddings.rows()) {
        throw DimensionError("one label per embedding row required");
    }
    Rng rng = make_stream(options.seed, "probe");
    IndexList rows = probe_subsample(labels, n_classes, options.label_fraction, rng);

    ProbeModel probe;
    probe.weight = Matrix<double>::Zero(embeddings.cols(), n_classes);
    probe.bias = Vector<double>::Zero(n_classes);
    Matrix<double> vw = probe.weight;
    Vector<double> vb = probe.bias;

    const auto n = static_cast<Index>(rows.size());
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(rows.begin(), rows.end(), rng);
        for (Index lo = 0; lo < n; lo += options.batch_size) {
            const Index bsz = std::min<Index>(options.batch_size, n - lo);
            Matrix<double> xb(bsz, embeddings.cols());
            for (Index r = 0; r < bsz; ++r) {
                xb.row(r) = embeddings.row(rows[static_cast<std::size_t>(lo + r)]);
            }
            Matrix<double> p = probe.logits(xb);
            for (Index r = 0; r < bsz; ++r) {
                const double m = p.row(r).maxCoeff();
                p.row(r) = (p.row(r).array() - m).exp();
                p.row(r) /= p.row(r).sum();
                p(r, labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(lo + r)])]) -= 1.0;
            }
            p /= static_cast<double>(bsz);
            const Matrix<double> gw = xb.transpose() * p;
            const Vector<double> gb = p.colwise().sum().transpose();
            sgd_step(probe.weight, gw, vw, options.lr, options.momentum);
            sgd_step(probe.bias, gb, vb, options.lr, options.momentum);
        }
    }
    return probe;
}

std::vector<int> class_labels(const Dataset& data)
{
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i) {
        const auto l = data.label(i);
        if (!l) {
            throw ConfigError("row " + std::to_string(i) + " has no class label");
        }
        out.push_back(static_cast<int>(*l));
    }
    return out;
}

ProbeModel train_probe(const EncoderParams<double>& encoder, const Dataset& train, int n_classes,
                       const ProbeOptions& options)
{
    return train_probe(embed(encoder, train.features_as_double()), class_labels(train), n_classes, options);
}

GroupSplit group_split(const std::vector<Index>& class_counts)
{
    const int c = static_cast<int>(class_counts.size());
    if (c < 3) {
        throw ConfigError("group split needs at least 3 classes");
    }
    std::vector<int> order(static_cast<std::size_t>(c));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return class_counts[static_cast<std::size_t>(a)] > class_counts[static_cast<std::size_t>(b)];
    });
    const int n_many = (c + 2) / 3;
    const int n_medium = (c - n_many + 1) / 2;
    GroupSplit split;
    split.many.assign(order.begin(), order.begin() + n_many);
    split.medium.assign(order.begin() + n_many, order.begin() + n_many + n_medium);
    split.few.assign(order.begin() + n_many + n_medium, order.end());
    return split;
}

double group_std(double many, double medium, double few)
{
    const double mean = (many + medium + few) / 3.0;
    return std::sqrt(((many - mean) * (many - mean) + (medium - mean) * (medium - mean) +
                      (few - mean) * (few - mean)) /
                     3.0);
}

MetricsReport report(const ProbeModel& probe, const Matrix<double>& test_embeddings,
                     const std::vector<int>& test_labels, const GroupSplit& split)
{
    const int n_classes = probe.n_classes();
    const auto counts = count_classes(test_labels, n_classes);
    for (int c = 0; c < n_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw ConfigError("test set has no samples of class " + std::to_string(c));
        }
    }
    const auto predicted = probe.predict(test_embeddings);
    std::vector<Index> correct(static_cast<std::size_t>(n_classes), 0);
    Index total_correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == test_labels[i]) {
            ++correct[static_cast<std::size_t>(test_labels[i])];
            ++total_correct;
        }
    }
    auto group_acc = [&](const std::vector<int>& classes) {
        if (classes.empty()) {
            return 0.0;
        }
        double sum = 0;
        for (int c : classes) {
            sum += static_cast<double>(correct[static_cast<std::size_t>(c)]) /
                   static_cast<double>(counts[static_cast<std::size_t>(c)]);
        }
        return 100.0 * sum / static_cast<double>(classes.size());
    };
    MetricsReport r;
    r.acc_many = group_acc(split.many);
    r.acc_medium = group_acc(split.medium);
    r.acc_few = group_acc(split.few);
    r.std_groups = group_std(r.acc_many, r.acc_medium, r.acc_few);
    r.acc_all = 100.0 * static_cast<double>(total_correct) / static_cast<double>(predicted.size());
    r.chi = calinski_harabasz(test_embeddings, test_labels);
    r.dbi = davies_bouldin(test_embeddings, test_labels);
    return r;
}

MetricsReport report(const ProbeModel& probe, const EncoderParams<double>& encoder, const Dataset& test,
                     const GroupSplit& split)
{
    return report(probe, embed(encoder, test.features_as_double()), class_labels(test), split);
}

namespace {

struct ClassStats {
    std::vector<int> ids;             // distinct labels, ascending
    Matrix<double> centroids;         // one row per distinct label
    std::vector<Index> counts;
    std::vector<int> slot;            // row -> centroid row
};

ClassStats class_stats(const Matrix<double>& points, const std::vector<int>& labels)
{
    if (static_cast<Index>(labels.size()) != points.rows()) {
        throw DimensionError("one label per point required");
    }
    std::map<int, int> index_of;
    for (int l : labels) {
        index_of.emplace(l, 0);
    }
    ClassStats s;
    for (auto& [label, slot] : index_of) {
        slot = static_cast<int>(s.ids.size());
        s.ids.push_back(label);
    }
    const auto k = static_cast<Index>(s.ids.size());
    s.centroids = Matrix<double>::Zero(k, points.cols());
    s.counts.assign(static_cast<std::size_t>(k), 0);
    s.slot.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int slot = index_of[labels[i]];
        s.slot[i] = slot;
        s.centroids.row(slot) += points.row(static_cast<Index>(i));
        ++s.counts[static_cast<std::size_t>(slot)];
    }
    for (Index c = 0; c < k; ++c) {
        s.centroids.row(c) /= static_cast<double>(s.counts[static_cast<std::size_t>(c)]);
    }
    return s;
}

}  // namespace

double calinski_harabasz(const Matrix<double>& points, const std::vector<int>& labels)
{
    const ClassStats s = class_stats(points, labels);
    const auto k = static_cast<Index>(s.ids.size());
    const Index n = points.rows();
    if (k < 2) {
        throw ConfigError("Calinski-Harabasz needs at least 2 classes");
    }
    if (n <= k) {
        throw ConfigError("Calinski-Harabasz needs more points than classes");
    }
    const RowVector<double> mean = points.colwise().mean();
    double between = 0;
    for (Index c = 0; c < k; ++c) {
        between += static_cast<double>(s.counts[static_cast<std::size_t>(c)]) * (s.centroids.row(c) - mean).squaredNorm();
    }
    double within = 0;
    for (Index i = 0; i < n; ++i) {
        within += (points.row(i) - s.centroids.row(s.slot[static_cast<std::size_t>(i)])).squaredNorm();
    }
    within = std::max(within, 1e-12);
    return (between / static_cast<double>(k - 1)) / (within / static_cast<double>(n - k));
}

double davies_bouldin(const Matrix<double>& points, const std::vector<int>& labels)
{
    const ClassStats s = class_stats(points, labels);
    const auto k = static_cast<Index>(s.ids.size());
    if (k < 2) {
        throw ConfigError("Davies-Bouldin needs at least 2 classes");
    }
    Vector<double> scatter = Vector<double>::Zero(k);
    for (Index i = 0; i < points.rows(); ++i) {
        const int c = s.slot[static_cast<std::size_t>(i)];
        scatter(c) += (points.row(i) - s.centroids.row(c)).norm();
    }
    for (Index c = 0; c < k; ++c) {
        scatter(c) /= static_cast<double>(s.counts[static_cast<std::size_t>(c)]);
    }
    double total = 0;
    for (Index a = 0; a < k; ++a) {
        double worst = 0;
        for (Index b = 0; b < k; ++b) {
            if (a == b) {
                continue;
            }
            const double d = std::max((s.centroids.row(a) - s.centroids.row(b)).norm(), 1e-12);
            worst = std::max(worst, (scatter(a) + scatter(b)) / d);
        }
        total += worst;
    }
    return total / static_cast<double>(k);
}

std::string metrics_csv_row(const MetricsReport& r)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f,%.4f,%.6f,%.6f", r.acc_many, r.acc_medium, r.acc_few,
                  r.std_groups, r.acc_all, r.chi, r.dbi);
    return buf;
}

std::string metrics_text(const MetricsReport& r)
{
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "Many   %7.2f\nMedium %7.2f\nFew    %7.2f\nSTD    %7.2f\nAll    %7.2f\nCHI    %9.3f\nDBI    %9.4f\n",
                  r.acc_many, r.acc_medium, r.acc_few, r.std_groups, r.acc_all, r.chi, r.dbi);
    return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << kMetricsHeader << '\n' << metrics_csv_row(r) << '\n';
}

}  // namespace tlss
