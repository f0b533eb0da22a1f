#include "tlss/synthdata.hpp"

#include "tlss/rng.hpp"

#include "binio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tlss {

bool Dataset::has_any_label() const
{
    for (const auto& l : labels_) {
        if (l) {
            return true;
        }
    }
    return false;
}

Sample Dataset::sample(Index i) const
{
    return Sample{features().row(i).transpose(), domain(i), label(i)};
}

void Dataset::reserve(Index n)
{
    data_.reserve(static_cast<std::size_t>(n * dim_));
    domains_.reserve(static_cast<std::size_t>(n));
    labels_.reserve(static_cast<std::size_t>(n));
}

void Dataset::push_back(const Sample& s)
{
    if (s.features.size() != dim()) {
        throw DimensionError("sample has dimension " + std::to_string(s.features.size()) +
                             ", dataset expects " + std::to_string(dim()));
    }
    if (!s.features.allFinite()) {
        throw NumericError("sample features must be finite");
    }
    data_.insert(data_.end(), s.features.data(), s.features.data() + s.features.size());
    domains_.push_back(s.domain);
    labels_.push_back(s.class_label);
}

Dataset Dataset::subset(const IndexList& rows) const
{
    Dataset out(dim());
    out.reserve(static_cast<Index>(rows.size()));
    for (const Index r : rows) {
        if (r < 0 || r >= size()) {
            throw DimensionError("subset row " + std::to_string(r) + " out of range");
        }
        out.push_back(sample(r));
    }
    return out;
}

Index Dataset::count(Domain d) const
{
    return static_cast<Index>(std::count(domains_.begin(), domains_.end(), d));
}

bool operator==(const Dataset& a, const Dataset& b)
{
    if (a.size() != b.size() || a.dim() != b.dim()) {
        return false;
    }
    // Bitwise, so -0.0f and 0.0f are distinguished.
    for (std::size_t k = 0; k < a.data_.size(); ++k) {
        if (std::bit_cast<std::uint32_t>(a.data_[k]) != std::bit_cast<std::uint32_t>(b.data_[k])) {
            return false;
        }
    }
    return a.domains_ == b.domains_ && a.labels_ == b.labels_;
}

Dataset concat(const Dataset& a, const Dataset& b)
{
    if (a.dim() != b.dim()) {
        throw DimensionError("cannot concatenate datasets of dimension " + std::to_string(a.dim()) +
                             " and " + std::to_string(b.dim()));
    }
    Dataset out(a.dim());
    out.reserve(a.size() + b.size());
    for (Index i = 0; i < a.size(); ++i) {
        out.push_back(a.sample(i));
    }
    for (Index i = 0; i < b.size(); ++i) {
        out.push_back(b.sample(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// generation

void LongTailSpec::validate() const
{
    if (n_classes < 1) {
        throw ConfigError("n_classes must be positive");
    }
    if (max_per_class < 1) {
        throw ConfigError("max_per_class must be positive");
    }
    if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) {
        throw ConfigError("imbalance_ratio must be >= 1");
    }
    if (dim < 1) {
        throw ConfigError("dim must be positive");
    }
    if (dim < n_classes) {
        throw ConfigError("dim must be >= n_classes (class means sit on coordinate axes)");
    }
    if (!(class_separation > 0.0)) {
        throw ConfigError("class_separation must be > 0");
    }
    if (!(noise_sigma > 0.0)) {
        throw ConfigError("noise_sigma must be > 0");
    }
}

std::vector<int> class_counts(const LongTailSpec& spec)
{
    spec.validate();
    std::vector<int> counts(static_cast<std::size_t>(spec.n_classes));
    for (int c = 0; c < spec.n_classes; ++c) {
        const double exponent =
            spec.n_classes == 1 ? 0.0 : -static_cast<double>(c) / (spec.n_classes - 1);
        const double raw = spec.max_per_class * std::pow(spec.imbalance_ratio, exponent);
        const int n = static_cast<int>(std::floor(raw + 0.5));
        if (n < 1) {
            throw ConfigError("class " + std::to_string(c) + " rounds to zero samples");
        }
        counts[static_cast<std::size_t>(c)] = n;
    }
    return counts;
}

Matrix<double> class_means(int n_classes, int dim, double class_separation)
{
    if (dim < n_classes) {
        throw ConfigError("dim must be >= n_classes");
    }
    Matrix<double> means = Matrix<double>::Zero(n_classes, dim);
    const double scale = class_separation / std::sqrt(2.0);
    for (int c = 0; c < n_classes; ++c) {
        means(c, c) = scale;
    }
    return means;
}

namespace {

void draw_gaussian_rows(Dataset& out, const Vector<double>& mean, double sigma, int n, Domain domain,
                        std::optional<std::uint32_t> label, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, sigma);
    Sample s;
    s.domain = domain;
    s.class_label = label;
    s.features.resize(mean.size());
    for (int k = 0; k < n; ++k) {
        for (Index j = 0; j < mean.size(); ++j) {
            s.features(j) = static_cast<float>(mean(j) + normal(rng));
        }
        out.push_back(s);
    }
}

Dataset gen_labeled(const LongTailSpec& spec, const std::vector<int>& counts, std::uint64_t seed)
{
    const Matrix<double> means = class_means(spec.n_classes, spec.dim, spec.class_separation);
    Rng rng = make_stream(seed, "data");
    Dataset out(spec.dim);
    int total = 0;
    for (int n : counts) {
        total += n;
    }
    out.reserve(total);
    for (int c = 0; c < spec.n_classes; ++c) {
        draw_gaussian_rows(out, means.row(c).transpose(), spec.noise_sigma,
                           counts[static_cast<std::size_t>(c)], Domain::ID,
                           static_cast<std::uint32_t>(c), rng);
    }
    return out;
}

}  // namespace

Dataset gen_longtail(const LongTailSpec& spec)
{
    return gen_labeled(spec, class_counts(spec), spec.seed);
}

Dataset gen_balanced(const LongTailSpec& spec, int per_class, std::uint64_t seed)
{
    spec.validate();
    if (per_class < 1) {
        throw ConfigError("per_class must be positive");
    }
    return gen_labeled(spec, std::vector<int>(static_cast<std::size_t>(spec.n_classes), per_class), seed);
}

void OodSpec::validate() const
{
    if (n < 1) {
        throw ConfigError("OOD pool size must be >= 1");
    }
    if (dim < 1 || n_classes < 1 || dim < n_classes) {
        throw ConfigError("OOD geometry needs 1 <= n_classes <= dim");
    }
    if (!(class_separation > 0.0) || !(noise_sigma > 0.0) || !(outward_scale > 0.0)) {
        throw ConfigError("OOD separation, noise and outward scale must be > 0");
    }
}

Matrix<double> ood_means(const OodSpec& spec)
{
    const Matrix<double> id_means = class_means(spec.n_classes, spec.dim, spec.class_separation);
    if (spec.n_classes == 1) {
        // No pairs; a single component pushed outward from the lone class.
        return id_means * (spec.outward_scale + 0.5);
    }
    const int pairs = spec.n_classes * (spec.n_classes - 1) / 2;
    Matrix<double> means(pairs, spec.dim);
    int k = 0;
    for (int a = 0; a < spec.n_classes; ++a) {
        for (int b = a + 1; b < spec.n_classes; ++b) {
            means.row(k++) = 0.5 * spec.outward_scale * (id_means.row(a) + id_means.row(b));
        }
    }
    return means;
}

Dataset gen_ood(const OodSpec& spec)
{
    spec.validate();
    const Matrix<double> means = ood_means(spec);
    Rng rng = make_stream(spec.seed, "ood");
    std::uniform_int_distribution<Index> pick(0, means.rows() - 1);
    std::normal_distribution<double> normal(0.0, spec.noise_sigma);
    Dataset out(spec.dim);
    out.reserve(spec.n);
    Sample s;
    s.domain = Domain::OOD;
    s.features.resize(spec.dim);
    for (int i = 0; i < spec.n; ++i) {
        const Index comp = pick(rng);
        for (Index j = 0; j < spec.dim; ++j) {
            s.features(j) = static_cast<float>(means(comp, j) + normal(rng));
        }
        out.push_back(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// binary io

namespace {

constexpr char kMagic[4] = {'T', 'L', 'S', 'S'};

}  // namespace

void save_dataset(const Dataset& dataset, const std::filesystem::path& path)
{
    const bool labeled = dataset.has_any_label();
    binio::Writer w;
    w.reserve(24 + static_cast<std::size_t>(dataset.size() * (1 + 4 * dataset.dim() + 4)));
    w.put_bytes(kMagic, 4);
    w.put<std::uint16_t>(kDatasetVersion);
    w.put<std::uint16_t>(labeled ? 1 : 0);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(dataset.size()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.dim()));
    for (Index i = 0; i < dataset.size(); ++i) {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(dataset.domain(i)));
    }
    const auto x = dataset.features();
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) {
            w.put_f32(x(i, j));
        }
    }
    if (labeled) {
        for (Index i = 0; i < dataset.size(); ++i) {
            w.put<std::uint32_t>(dataset.label(i).value_or(kNoLabel));
        }
    }
    w.write_to(path);
}

Dataset load_dataset(const std::filesystem::path& path)
{
    binio::Reader r(path);
    const std::string& name = r.name();
    r.need(4, "magic");
    if (!r.starts_with(kMagic, 4)) {
        throw FormatError(name + ": bad magic bytes, not a dataset file");
    }
    r.skip(4);
    const auto version = r.get<std::uint16_t>("version");
    if (version != kDatasetVersion) {
        throw FormatError(name + ": unsupported dataset version " + std::to_string(version));
    }
    const auto flags = r.get<std::uint16_t>("flags");
    if ((flags & ~std::uint16_t{1}) != 0) {
        throw FormatError(name + ": unknown flag bits");
    }
    const bool labeled = (flags & 1) != 0;
    const auto count = r.get<std::uint64_t>("count");
    const auto dim = r.get<std::uint32_t>("dim");
    if (dim == 0) {
        throw DimensionError(name + ": dimension is zero");
    }

    // Check the payload size before allocating so a corrupt count fails cleanly.
    const std::uint64_t per_row = 1 + 4ull * dim + (labeled ? 4 : 0);
    if (count > r.remaining() / per_row) {
        throw TruncationError(name + ": header declares " + std::to_string(count) +
                              " samples but payload is shorter");
    }
    const std::uint64_t payload = count * per_row;
    if (r.remaining() != payload) {
        throw FormatError(name + ": " + std::to_string(r.remaining() - payload) +
                          " trailing bytes after payload");
    }

    const auto n = static_cast<std::size_t>(count);
    std::vector<Sample> samples(n);
    for (auto& s : samples) {
        const auto tag = r.get<std::uint8_t>("domain tags");
        if (tag > 1) {
            throw FormatError(name + ": invalid domain tag " + std::to_string(tag));
        }
        s.domain = static_cast<Domain>(tag);
    }
    for (auto& s : samples) {
        s.features.resize(dim);
        for (Index j = 0; j < s.features.size(); ++j) {
            s.features(j) = r.get_f32("features");
        }
    }
    if (labeled) {
        for (auto& s : samples) {
            const auto l = r.get<std::uint32_t>("labels");
            if (l != kNoLabel) {
                s.class_label = l;
            }
        }
    }

    Dataset out(static_cast<Index>(dim));
    out.reserve(static_cast<Index>(n));
    for (const auto& s : samples) {
        out.push_back(s);
    }
    return out;
}

Dataset load_dataset(const std::filesystem::path& path, Index expected_dim)
{
    Dataset d = load_dataset(path);
    if (d.dim() != expected_dim) {
        throw DimensionError(path.string() + ": dimension " + std::to_string(d.dim()) +
                             " does not match expected " + std::to_string(expected_dim));
    }
    return d;
}

// ---------------------------------------------------------------------------
// csv

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) {
            cell.pop_back();
        }
        std::size_t start = cell.find_first_not_of(' ');
        cells.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

}  // namespace

Dataset load_dataset_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string() + " for reading");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError(path.string() + ": empty CSV, header row required");
    }
    const auto header = split_csv_line(line);
    int label_col = -1;
    int domain_col = -1;
    int n_features = static_cast<int>(header.size());
    for (int trailing = 0; trailing < 2 && n_features > 0; ++trailing) {
        const std::string& name = header[static_cast<std::size_t>(n_features - 1)];
        if (name == "label" && label_col < 0) {
            label_col = --n_features;
        } else if (name == "domain" && domain_col < 0) {
            domain_col = --n_features;
        }
    }
    if (n_features < 1) {
        throw FormatError(path.string() + ": CSV has no feature columns");
    }

    Dataset out(n_features);
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DimensionError(path.string() + ":" + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " columns, found " +
                                 std::to_string(cells.size()));
        }
        Sample s;
        s.features.resize(n_features);
        try {
            for (int j = 0; j < n_features; ++j) {
                s.features(j) = std::stof(cells[static_cast<std::size_t>(j)]);
            }
            if (label_col >= 0 && !cells[static_cast<std::size_t>(label_col)].empty()) {
                const long v = std::stol(cells[static_cast<std::size_t>(label_col)]);
                if (v < 0) {
                    throw FormatError("negative label");
                }
                s.class_label = static_cast<std::uint32_t>(v);
            }
        } catch (const std::logic_error&) {
            throw FormatError(path.string() + ":" + std::to_string(row) + ": unparsable number");
        } catch (const FormatError&) {
            throw FormatError(path.string() + ":" + std::to_string(row) + ": negative label");
        }
        if (domain_col >= 0) {
            const std::string& d = cells[static_cast<std::size_t>(domain_col)];
            if (d == "ID" || d == "0") {
                s.domain = Domain::ID;
            } else if (d == "OOD" || d == "1") {
                s.domain = Domain::OOD;
            } else {
                throw FormatError(path.string() + ":" + std::to_string(row) + ": bad domain '" + d + "'");
            }
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace tlss
