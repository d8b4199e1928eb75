#pragma once

// Flat `key = value` run configuration shared by every command.
// Later sources override earlier ones: defaults, config file, flags.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "closr/data.hpp"
#include "closr/error.hpp"

namespace closr {

struct RunConfig {
    // inputs and outputs
    std::string data;
    std::string out;
    std::string checkpoint;
    std::string train_data;
    std::string calib_data;
    std::string scores_out;
    std::string csv_out;
    std::string log;
    std::string split_out;
    std::string label_column = "Label";
    std::string benign_label = "BENIGN";

    // split
    std::vector<std::string> zero_day;
    double train_fraction = 0.5;
    bool holdout = true;
    std::uint64_t seed = 0;

    // preprocessing
    double clamp = 10.0;

    // model
    std::string mode = "clad";
    int d_model = 64;
    int depth = 3;
    int f_o = 16;
    double dropout = 0.0;

    // training
    int epochs = 200;
    int warmup_epochs = 20;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int batch_size = 128;

    // loss
    double margin = 1.0;
    bool squared = true;
    double alpha = 0.5;
    double temperature = 0.1;

    // inference
    std::string proxy = "centroid";
    std::string ood_score = "weighted_gaussian";
    std::optional<double> tau;
    std::optional<double> target_fpr;
    bool timing = false;

    // sweep
    std::string param = "margin";
    std::optional<double> from;
    std::optional<double> to;
    std::optional<double> step;
    std::vector<double> values;

    // synth
    int classes = 4;
    int per_class = 500;
    int features = 20;
    double separation = 6.0;
    int zero_day_count = 1;
};

namespace detail {

inline std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
    return out;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    if (!parse_double(trim(v), out) || !std::isfinite(out)) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    long long out = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

inline std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define CLOSR_STR_KEY(field, help) \
    {#field, help, [](RunConfig& c, const std::string& v) { c.field = trim(v); }, [](const RunConfig& c) { return c.field; }}
#define CLOSR_DBL_KEY(field, help) \
    {#field, help, [](RunConfig& c, const std::string& v) { c.field = to_double(#field, v); }, \
     [](const RunConfig& c) { return format_double(c.field); }}
#define CLOSR_INT_KEY(field, help) \
    {#field, help, [](RunConfig& c, const std::string& v) { c.field = static_cast<int>(to_int(#field, v)); }, \
     [](const RunConfig& c) { return std::to_string(c.field); }}
#define CLOSR_BOOL_KEY(field, help) \
    {#field, help, [](RunConfig& c, const std::string& v) { c.field = to_bool(#field, v); }, \
     [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define CLOSR_OPT_KEY(field, help)                                                                         \
    {#field, help,                                                                                        \
     [](RunConfig& c, const std::string& v) {                                                             \
         if (trim(v).empty()) c.field.reset();                                                            \
         else c.field = to_double(#field, v);                                                             \
     },                                                                                                   \
     [](const RunConfig& c) { return opt_text(c.field); }}

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        CLOSR_STR_KEY(data, "input flow CSV"),
        CLOSR_STR_KEY(out, "output path"),
        CLOSR_STR_KEY(checkpoint, "model checkpoint to load"),
        CLOSR_STR_KEY(train_data, "training CSV used to build non-centroid class proxies"),
        CLOSR_STR_KEY(calib_data, "validation CSV for --target-fpr threshold selection"),
        CLOSR_STR_KEY(scores_out, "per-sample score dump CSV"),
        CLOSR_STR_KEY(csv_out, "flat single-row metrics CSV"),
        CLOSR_STR_KEY(log, "training log path (default <out>.log.jsonl)"),
        CLOSR_STR_KEY(split_out, "prefix for writing <prefix>.train.csv and <prefix>.test.csv"),
        CLOSR_STR_KEY(label_column, "name of the label column"),
        CLOSR_STR_KEY(benign_label, "label value of benign traffic"),
        {"zero_day", "comma-separated classes withheld from training",
         [](RunConfig& c, const std::string& v) { c.zero_day = split_list(v); },
         [](const RunConfig& c) { return join(c.zero_day); }},
        CLOSR_DBL_KEY(train_fraction, "per-class train share of the holdout split"),
        CLOSR_BOOL_KEY(holdout, "split the data; false trains on every non-zero-day row"),
        {"seed", "random seed",
         [](RunConfig& c, const std::string& v) {
             const auto s = to_int("seed", v);
             if (s < 0) throw ConfigError("'seed' must be non-negative");
             c.seed = static_cast<std::uint64_t>(s);
         },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        CLOSR_DBL_KEY(clamp, "absolute bound on standardized features"),
        CLOSR_STR_KEY(mode, "clad | closr | supcon | contrastive | bce"),
        CLOSR_INT_KEY(d_model, "hidden width"),
        CLOSR_INT_KEY(depth, "number of hidden blocks"),
        CLOSR_INT_KEY(f_o, "embedding dimension per head"),
        CLOSR_DBL_KEY(dropout, "dropout rate after each ReLU"),
        CLOSR_INT_KEY(epochs, "training epochs"),
        CLOSR_INT_KEY(warmup_epochs, "linear warmup epochs"),
        CLOSR_DBL_KEY(lr, "base learning rate"),
        CLOSR_DBL_KEY(weight_decay, "decoupled weight decay"),
        CLOSR_INT_KEY(batch_size, "batch size"),
        CLOSR_DBL_KEY(margin, "hinge margin in (0,1]"),
        CLOSR_BOOL_KEY(squared, "square the distance terms"),
        CLOSR_DBL_KEY(alpha, "positive/negative weighting in (0,1)"),
        CLOSR_DBL_KEY(temperature, "supcon temperature"),
        CLOSR_STR_KEY(proxy, "centroid | median | trimmed_mean | medoid | neighbour"),
        CLOSR_STR_KEY(ood_score, "weighted_gaussian | gaussian | energy"),
        CLOSR_OPT_KEY(tau, "decision threshold on the OOD score"),
        CLOSR_OPT_KEY(target_fpr, "derive the threshold from benign/known validation scores"),
        CLOSR_BOOL_KEY(timing, "include scoring wall-clock in the report"),
        CLOSR_STR_KEY(param, "sweep parameter: margin | alpha"),
        CLOSR_OPT_KEY(from, "sweep range start"),
        CLOSR_OPT_KEY(to, "sweep range end (inclusive)"),
        CLOSR_OPT_KEY(step, "sweep range increment"),
        {"values", "explicit comma-separated sweep values",
         [](RunConfig& c, const std::string& v) {
             c.values.clear();
             for (const auto& item : split_list(v)) c.values.push_back(to_double("values", item));
         },
         [](const RunConfig& c) {
             std::string out;
             for (std::size_t i = 0; i < c.values.size(); ++i) out += (i ? "," : "") + format_double(c.values[i]);
             return out;
         }},
        CLOSR_INT_KEY(classes, "synth: number of classes including benign"),
        CLOSR_INT_KEY(per_class, "synth: rows per class"),
        CLOSR_INT_KEY(features, "synth: feature count"),
        CLOSR_DBL_KEY(separation, "synth: pairwise distance between class means"),
        CLOSR_INT_KEY(zero_day_count, "synth: trailing classes flagged as zero-day"),
    };
    return keys;
}

#undef CLOSR_STR_KEY
#undef CLOSR_DBL_KEY
#undef CLOSR_INT_KEY
#undef CLOSR_BOOL_KEY
#undef CLOSR_OPT_KEY

}  // namespace detail

/// Sets one key; unknown keys are a ConfigError.
inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : detail::config_keys()) {
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// Applies `key = value` lines; `#` starts a comment.
inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& origin = "config") {
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        try {
            set_config_value(cfg, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    apply_config_text(cfg, in, path);
}

/// Every key in canonical order, in the same format the loader reads.
inline std::string config_to_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& k : detail::config_keys()) out.emplace_back(k.name, k.get(cfg));
    return out;
}

inline const std::string& config_help(const std::string& key) {
    for (const auto& k : detail::config_keys())
        if (k.name == key) return k.help;
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace closr
