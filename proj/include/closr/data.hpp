#pragma once

// Flow dataset ingestion, zero-day holdout splitting, feature scaling,
// class-balanced batch sampling and a synthetic blob generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "closr/error.hpp"

namespace closr {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Labeled tabular flow records. Class id 0 is always the benign class.
struct FlowDataset {
    Matrix features;                       // N x f
    std::vector<int> labels;               // one class id per row
    std::vector<std::string> class_names;  // index = class id
    std::vector<std::string> feature_names;
    std::vector<std::string> zero_day_classes;  // generator metadata only
    std::size_t dropped_rows = 0;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
    [[nodiscard]] std::size_t num_classes() const { return class_names.size(); }

    [[nodiscard]] std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(class_names.size(), 0);
        for (int y : labels) ++counts[static_cast<std::size_t>(y)];
        return counts;
    }

    [[nodiscard]] int class_id(std::string_view name) const {
        for (std::size_t c = 0; c < class_names.size(); ++c)
            if (class_names[c] == name) return static_cast<int>(c);
        return -1;
    }

    /// Rows in the given order; vocabulary and metadata are kept.
    [[nodiscard]] FlowDataset subset(const std::vector<std::size_t>& rows) const {
        FlowDataset out;
        out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        out.labels.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
            out.labels.push_back(labels[rows[i]]);
        }
        out.class_names = class_names;
        out.feature_names = feature_names;
        out.zero_day_classes = zero_day_classes;
        return out;
    }

    /// Throws DataError if a structural invariant is violated.
    void validate() const {
        if (static_cast<std::size_t>(features.rows()) != labels.size())
            throw DataError("feature rows and label count differ");
        if (class_names.empty()) throw DataError("empty class vocabulary");
        for (int y : labels)
            if (y < 0 || static_cast<std::size_t>(y) >= class_names.size())
                throw DataError("label id outside class vocabulary");
        if (!features.allFinite()) throw DataError("non-finite feature value");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

// Comma-separated fields with optional double-quote escaping.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

inline bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

}  // namespace detail

/// Reads a flow CSV. The benign label maps to id 0, other labels to 1..N_c
/// in order of first appearance. Rows with unparseable or non-finite
/// features are dropped and counted in `dropped_rows`.
inline FlowDataset read_csv(std::istream& in, const std::string& label_column, const std::string& benign_label) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV has no header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
    const auto header = detail::split_csv_line(line);
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) throw DataError("label column '" + label_column + "' not found");
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

    FlowDataset d;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != label_idx) d.feature_names.push_back(header[c]);
    const std::size_t f = d.feature_names.size();

    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::vector<double> row(f);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        bool ok = fields.size() == header.size();
        for (std::size_t c = 0, k = 0; ok && c < fields.size(); ++c) {
            if (c == label_idx) continue;
            double v = 0.0;
            ok = detail::parse_double(fields[c], v) && std::isfinite(v);
            row[k++] = v;
        }
        if (!ok || fields[label_idx].empty()) {
            ++d.dropped_rows;
            continue;
        }
        values.insert(values.end(), row.begin(), row.end());
        raw_labels.push_back(fields[label_idx]);
    }
    if (raw_labels.empty()) throw DataError("no usable rows in CSV");
    if (std::find(raw_labels.begin(), raw_labels.end(), benign_label) == raw_labels.end())
        throw DataError("benign class absent: no rows labeled '" + benign_label + "'");

    d.class_names.push_back(benign_label);
    std::map<std::string, int> ids{{benign_label, 0}};
    d.labels.reserve(raw_labels.size());
    for (const auto& name : raw_labels) {
        auto [it, inserted] = ids.emplace(name, static_cast<int>(d.class_names.size()));
        if (inserted) d.class_names.push_back(name);
        d.labels.push_back(it->second);
    }
    d.features = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(raw_labels.size()),
                                          static_cast<Eigen::Index>(f));
    return d;
}

inline FlowDataset load_csv(const std::string& path, const std::string& label_column,
                            const std::string& benign_label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file: " + path);
    return read_csv(in, label_column, benign_label);
}

/// Writes the ingestion format: feature columns then the label column.
inline void write_csv(std::ostream& out, const FlowDataset& d, const std::string& label_column = "Label") {
    for (std::size_t c = 0; c < d.num_features(); ++c) {
        const std::string name =
            c < d.feature_names.size() ? d.feature_names[c] : "f" + std::to_string(c);
        out << detail::csv_escape(name) << ',';
    }
    out << detail::csv_escape(label_column) << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (Eigen::Index c = 0; c < d.features.cols(); ++c)
            out << detail::format_double(d.features(static_cast<Eigen::Index>(i), c)) << ',';
        out << detail::csv_escape(d.class_names[static_cast<std::size_t>(d.labels[i])]) << '\n';
    }
}

inline void save_csv(const std::string& path, const FlowDataset& d, const std::string& label_column = "Label") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    write_csv(out, d, label_column);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    std::vector<std::string> zero_day_classes;
    double train_fraction = 0.5;
    std::uint64_t seed = 0;
};

struct Split {
    FlowDataset train;
    FlowDataset test;
};

/// Stratified split. Every zero-day row goes to test; each other class
/// contributes floor(n * train_fraction) shuffled rows to train.
inline Split split_holdout(const FlowDataset& d, const SplitSpec& s) {
    if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0,1)");
    std::vector<bool> zero_day(d.num_classes(), false);
    for (const auto& name : s.zero_day_classes) {
        const int id = d.class_id(name);
        if (id < 0) throw ConfigError("zero-day class '" + name + "' not in dataset");
        if (id == 0) throw ConfigError("the benign class cannot be a zero-day class");
        zero_day[static_cast<std::size_t>(id)] = true;
    }

    std::vector<std::vector<std::size_t>> rows_by_class(d.num_classes());
    for (std::size_t i = 0; i < d.size(); ++i) rows_by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);

    std::mt19937_64 rng(s.seed);
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    for (std::size_t c = 0; c < rows_by_class.size(); ++c) {
        auto& rows = rows_by_class[c];
        if (zero_day[c]) {
            test_rows.insert(test_rows.end(), rows.begin(), rows.end());
            continue;
        }
        if (rows.size() < 2)
            throw DataError("class '" + d.class_names[c] + "' has fewer than 2 rows; cannot split");
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(rows.size()) * s.train_fraction));
        train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
    return {d.subset(train_rows), d.subset(test_rows)};
}

/// Drops rows of the named classes and removes them from the vocabulary,
/// renumbering the remaining ids densely in their original order.
inline FlowDataset without_classes(const FlowDataset& d, const std::vector<std::string>& names) {
    std::vector<int> remap(d.num_classes(), -1);
    FlowDataset out;
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        if (std::find(names.begin(), names.end(), d.class_names[c]) != names.end()) continue;
        remap[c] = static_cast<int>(out.class_names.size());
        out.class_names.push_back(d.class_names[c]);
    }
    if (remap[0] != 0) throw ConfigError("the benign class cannot be removed");
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (remap[static_cast<std::size_t>(d.labels[i])] >= 0) keep.push_back(i);
    FlowDataset tmp = d.subset(keep);
    out.features = std::move(tmp.features);
    out.labels.reserve(keep.size());
    for (int y : tmp.labels) out.labels.push_back(remap[static_cast<std::size_t>(y)]);
    out.feature_names = d.feature_names;
    out.dropped_rows = d.dropped_rows;
    return out;
}

// ---------------------------------------------------------------------------
// Scaling

/// Per-feature z-scoring fit on training data, with a symmetric clamp.
struct FeatureScaler {
    static constexpr double kMinStd = 1e-8;

    Vector mean;
    Vector std;
    double clamp_bound = 10.0;

    [[nodiscard]] Matrix transform(const Matrix& x) const {
        if (x.cols() != mean.size()) throw DataError("scaler feature count mismatch");
        Matrix out = (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
        return out.cwiseMax(-clamp_bound).cwiseMin(clamp_bound);
    }

    [[nodiscard]] Matrix inverse_transform(const Matrix& x) const {
        if (x.cols() != mean.size()) throw DataError("scaler feature count mismatch");
        Matrix out = x.array().rowwise() * std.transpose().array();
        return out.rowwise() + mean.transpose();
    }
};

inline FeatureScaler fit_scaler(const FlowDataset& train, double clamp_bound = 10.0) {
    if (train.size() == 0) throw DataError("cannot fit scaler on an empty dataset");
    if (!(clamp_bound > 0.0)) throw ConfigError("clamp bound must be positive");
    FeatureScaler s;
    s.clamp_bound = clamp_bound;
    s.mean = train.features.colwise().mean().transpose();
    const Matrix centered = train.features.rowwise() - s.mean.transpose();
    s.std = (centered.array().square().colwise().sum() / static_cast<double>(train.size())).sqrt().transpose();
    s.std = s.std.cwiseMax(FeatureScaler::kMinStd);
    return s;
}

// ---------------------------------------------------------------------------
// Batching

struct BatchPlan {
    std::size_t batch_size = 128;
    std::vector<double> class_weights;  // per class id, sums to 1 over present classes
    std::uint64_t seed = 0;
    std::size_t batches_per_epoch = 1;
};

/// Inverse-frequency class weights, so that every present class is drawn
/// equally often in expectation.
inline BatchPlan make_batch_plan(const FlowDataset& d, std::size_t batch_size, std::uint64_t seed) {
    if (d.size() == 0) throw DataError("cannot batch an empty dataset");
    if (batch_size < 4) throw ConfigError("batch_size must be at least 4");
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.seed = seed;
    plan.batches_per_epoch = (d.size() + batch_size - 1) / batch_size;
    const auto counts = d.class_counts();
    plan.class_weights.assign(counts.size(), 0.0);
    double total = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        plan.class_weights[c] = 1.0 / static_cast<double>(counts[c]);
        total += plan.class_weights[c];
    }
    for (double& w : plan.class_weights) w /= total;
    return plan;
}

/// Sequential with-replacement sampler. A row is drawn with probability
/// proportional to the weight of its class; every batch holds a benign row.
class BalancedBatchSampler {
public:
    static constexpr int kMaxResamples = 100;

    BalancedBatchSampler(const FlowDataset& d, BatchPlan plan) : plan_(std::move(plan)), rng_(plan_.seed) {
        if (d.size() == 0) throw DataError("cannot batch an empty dataset");
        if (plan_.batch_size < 4) throw ConfigError("batch_size must be at least 4");
        if (plan_.class_weights.size() != d.num_classes()) throw ConfigError("class_weights size mismatch");
        rows_by_class_.resize(d.num_classes());
        for (std::size_t i = 0; i < d.size(); ++i) rows_by_class_[static_cast<std::size_t>(d.labels[i])].push_back(i);
        if (rows_by_class_[0].empty()) throw DataError("no benign rows available for batching");
        std::vector<double> class_mass(d.num_classes(), 0.0);
        for (std::size_t c = 0; c < class_mass.size(); ++c)
            class_mass[c] = plan_.class_weights[c] * static_cast<double>(rows_by_class_[c].size());
        class_dist_ = std::discrete_distribution<std::size_t>(class_mass.begin(), class_mass.end());
    }

    [[nodiscard]] const BatchPlan& plan() const { return plan_; }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> batch(plan_.batch_size);
        std::vector<std::size_t> classes(plan_.batch_size);
        for (int attempt = 0; attempt < kMaxResamples; ++attempt) {
            bool has_benign = false;
            for (std::size_t k = 0; k < batch.size(); ++k) {
                classes[k] = class_dist_(rng_);
                batch[k] = draw_from(classes[k]);
                has_benign = has_benign || classes[k] == 0;
            }
            if (has_benign) return batch;
        }
        std::uniform_int_distribution<std::size_t> pos(0, batch.size() - 1);
        batch[pos(rng_)] = draw_from(0);
        return batch;
    }

    std::vector<std::vector<std::size_t>> next_epoch() {
        std::vector<std::vector<std::size_t>> out;
        out.reserve(plan_.batches_per_epoch);
        for (std::size_t b = 0; b < plan_.batches_per_epoch; ++b) out.push_back(next());
        return out;
    }

private:
    std::size_t draw_from(std::size_t c) {
        const auto& rows = rows_by_class_[c];
        std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
        return rows[pick(rng_)];
    }

    BatchPlan plan_;
    std::mt19937_64 rng_;
    std::vector<std::vector<std::size_t>> rows_by_class_;
    std::discrete_distribution<std::size_t> class_dist_;
};

/// One epoch of balanced batches from a fresh sampler.
inline std::vector<std::vector<std::size_t>> balanced_batches(const FlowDataset& d, const BatchPlan& plan) {
    BalancedBatchSampler sampler(d, plan);
    return sampler.next_epoch();
}

// ---------------------------------------------------------------------------
// Synthetic data

struct BlobParams {
    int n_classes = 4;
    int n_per_class = 500;
    int n_features = 20;
    double separation = 6.0;
    int zero_day_count = 1;
    std::uint64_t seed = 7;
};

/// Unit-covariance Gaussian blobs. Class means sit on a randomly rotated,
/// scaled simplex so every pair is exactly `separation` apart. The last
/// `zero_day_count` classes are listed in `zero_day_classes`.
inline FlowDataset synth_blobs(const BlobParams& p) {
    if (p.n_classes < 2) throw ConfigError("synth: need at least 2 classes");
    if (p.n_per_class < 1) throw ConfigError("synth: n_per_class must be positive");
    if (p.zero_day_count < 0 || p.zero_day_count >= p.n_classes - 1)
        throw ConfigError("synth: zero_day_count must leave at least one known malicious class");
    if (p.n_features < p.n_classes) throw ConfigError("synth: need n_features >= n_classes for simplex means");
    if (!(p.separation >= 0.0)) throw ConfigError("synth: separation must be non-negative");

    const auto f = static_cast<Eigen::Index>(p.n_features);
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix g(f, f);
    for (Eigen::Index i = 0; i < f; ++i)
        for (Eigen::Index j = 0; j < f; ++j) g(i, j) = gauss(rng);
    const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

    FlowDataset d;
    d.class_names.push_back("BENIGN");
    for (int c = 1; c < p.n_classes; ++c) d.class_names.push_back("attack_" + std::to_string(c));
    for (int c = p.n_classes - p.zero_day_count; c < p.n_classes; ++c)
        d.zero_day_classes.push_back(d.class_names[static_cast<std::size_t>(c)]);
    for (Eigen::Index j = 0; j < f; ++j) d.feature_names.push_back("f" + std::to_string(j));

    const auto n = static_cast<Eigen::Index>(p.n_classes) * p.n_per_class;
    d.features.resize(n, f);
    d.labels.reserve(static_cast<std::size_t>(n));
    const double scale = p.separation / std::sqrt(2.0);
    Eigen::Index row = 0;
    for (int c = 0; c < p.n_classes; ++c) {
        const RowVector mean = scale * rotation.col(c).transpose();
        for (int k = 0; k < p.n_per_class; ++k, ++row) {
            for (Eigen::Index j = 0; j < f; ++j) d.features(row, j) = mean(j) + gauss(rng);
            d.labels.push_back(c);
        }
    }
    return d;
}

}  // namespace closr
