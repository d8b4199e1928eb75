#pragma once

// The command layer: train, eval, sweep, export-embeddings and synth,
// expressed as library functions over a RunConfig so they can be driven by
// the CLI or called directly.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "closr/checkpoint.hpp"
#include "closr/config.hpp"
#include "closr/data.hpp"
#include "closr/error.hpp"
#include "closr/inference.hpp"
#include "closr/losses.hpp"
#include "closr/metrics.hpp"
#include "closr/model.hpp"
#include "closr/optim.hpp"

namespace closr {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Config resolution

inline LossConfig loss_config_from(const RunConfig& rc) {
    LossConfig l;
    l.kind = loss_kind_from_string(rc.mode);
    l.margin = rc.margin;
    l.squared = rc.squared;
    l.alpha = rc.alpha;
    l.temperature = rc.temperature;
    l.validate();
    return l;
}

inline TrainConfig train_config_from(const RunConfig& rc) {
    TrainConfig t;
    t.epochs = rc.epochs;
    t.warmup_epochs = rc.warmup_epochs;
    t.base_lr = rc.lr;
    t.weight_decay = rc.weight_decay;
    if (rc.batch_size < 4) throw ConfigError("batch_size must be at least 4");
    t.batch_size = static_cast<std::size_t>(rc.batch_size);
    t.seed = detail::mix_seed(rc.seed, 1);
    t.validate();
    return t;
}

inline ModelConfig model_config_from(const RunConfig& rc, std::size_t n_features, std::size_t n_classes) {
    const LossKind kind = loss_kind_from_string(rc.mode);
    ModelConfig m;
    m.f = static_cast<int>(n_features);
    m.d_model = rc.d_model;
    m.depth = rc.depth;
    m.head = kind == LossKind::bce ? HeadKind::linear : HeadKind::sphere;
    m.f_o = kind == LossKind::bce ? 1 : rc.f_o;
    m.n_heads = kind == LossKind::closr ? static_cast<int>(n_classes) : 1;
    m.dropout_rate = rc.dropout;
    m.seed = rc.seed;
    m.validate();
    return m;
}

inline SplitSpec split_spec_from(const RunConfig& rc) {
    return {rc.zero_day, rc.train_fraction, detail::mix_seed(rc.seed, 2)};
}

inline ojson config_json(const RunConfig& rc) {
    ojson j = ojson::object();
    for (const auto& [k, v] : config_entries(rc)) j[k] = v;
    return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

// ---------------------------------------------------------------------------
// Data preparation

/// Drops classes without rows and renumbers the rest by first appearance
/// (benign stays 0), which is the order a CSV round trip reproduces.
inline FlowDataset canonicalize_vocabulary(const FlowDataset& d) {
    std::vector<int> remap(d.num_classes(), -1);
    FlowDataset out;
    out.class_names.push_back(d.class_names.at(0));
    remap[0] = 0;
    for (int y : d.labels) {
        auto& r = remap[static_cast<std::size_t>(y)];
        if (r < 0) {
            r = static_cast<int>(out.class_names.size());
            out.class_names.push_back(d.class_names[static_cast<std::size_t>(y)]);
        }
    }
    out.features = d.features;
    out.labels.reserve(d.labels.size());
    for (int y : d.labels) out.labels.push_back(remap[static_cast<std::size_t>(y)]);
    out.feature_names = d.feature_names;
    out.zero_day_classes = d.zero_day_classes;
    out.dropped_rows = d.dropped_rows;
    return out;
}

struct PreparedData {
    FlowDataset train;  // known classes only, canonical vocabulary
    FlowDataset test;   // every held-out row including zero-day classes; empty without holdout
    FlowDataset raw_train;
};

inline PreparedData prepare_training_data(const FlowDataset& d, const RunConfig& rc) {
    PreparedData p;
    if (rc.holdout) {
        auto split = split_holdout(d, split_spec_from(rc));
        p.raw_train = std::move(split.train);
        p.test = std::move(split.test);
    } else {
        for (const auto& name : rc.zero_day) {
            const int id = d.class_id(name);
            if (id < 0) throw ConfigError("zero-day class '" + name + "' not in dataset");
            if (id == 0) throw ConfigError("the benign class cannot be a zero-day class");
        }
        p.raw_train = d;
    }
    p.train = canonicalize_vocabulary(without_classes(p.raw_train, rc.zero_day));
    if (p.train.class_counts()[0] == 0) throw DataError("training split has no benign rows");
    return p;
}

/// Trains, rounds parameters to their stored precision and computes the
/// train-split centroids, returning a complete checkpoint.
inline Checkpoint fit_model(const FlowDataset& train_data, const RunConfig& rc, const EpochCallback& on_epoch = {},
                            std::vector<EpochLog>* log = nullptr) {
    const LossConfig lcfg = loss_config_from(rc);
    const TrainConfig tcfg = train_config_from(rc);
    const ModelConfig mcfg = model_config_from(rc, train_data.num_features(), train_data.num_classes());
    auto result = train(train_data, tcfg, mcfg, lcfg, rc.clamp, on_epoch);
    if (log) *log = result.log;

    Checkpoint ck;
    ck.params = std::move(result.params);
    round_to_float32(ck.params);
    ck.mode = lcfg.kind;
    ck.class_names = train_data.class_names;
    ck.scaler = result.scaler;
    if (mcfg.head == HeadKind::sphere) {
        const auto emb = embed(ck.params, ck.scaler.transform(train_data.features));
        const auto set = compute_centroids(emb, train_data.labels, ck.open_set(), ProxyKind::centroid);
        for (const auto& p : set.proxies) ck.centroids.push_back(p.direction.cast<float>().cast<double>());
    }
    return ck;
}

// ---------------------------------------------------------------------------
// Scoring

/// Test rows mapped onto a checkpoint's vocabulary; -1 marks zero-day rows.
struct MappedData {
    Matrix x;  // scaled
    std::vector<int> labels;
    std::vector<std::string> row_class;
    std::vector<std::string> unknown_classes;  // first-appearance order
};

inline MappedData map_to_checkpoint(const FlowDataset& d, const Checkpoint& ck,
                                    const std::vector<std::string>& zero_day) {
    if (static_cast<int>(d.num_features()) != ck.params.config.f)
        throw DataError("data has " + std::to_string(d.num_features()) + " features, checkpoint expects " +
                        std::to_string(ck.params.config.f));
    if (d.class_names.at(0) != ck.class_names.at(0))
        throw DataError("vocabulary mismatch: benign label '" + d.class_names[0] + "' vs checkpoint '" +
                        ck.class_names[0] + "'");
    std::vector<int> remap(d.num_classes(), -1);
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        const auto it = std::find(ck.class_names.begin(), ck.class_names.end(), d.class_names[c]);
        if (it != ck.class_names.end()) {
            remap[c] = static_cast<int>(it - ck.class_names.begin());
        } else if (std::find(zero_day.begin(), zero_day.end(), d.class_names[c]) == zero_day.end()) {
            throw DataError("vocabulary mismatch: class '" + d.class_names[c] +
                            "' is not in the checkpoint and not listed as zero-day");
        }
    }
    MappedData m;
    m.x = ck.scaler.transform(d.features);
    m.labels.reserve(d.size());
    std::vector<bool> seen(d.num_classes(), false);
    for (int y : d.labels) {
        const auto uy = static_cast<std::size_t>(y);
        m.labels.push_back(remap[uy]);
        m.row_class.push_back(d.class_names[uy]);
        if (remap[uy] < 0 && !seen[uy]) {
            seen[uy] = true;
            m.unknown_classes.push_back(d.class_names[uy]);
        }
    }
    return m;
}

/// Class proxies for inference: stored centroids, or recomputed from
/// training data when another proxy is requested.
inline CentroidSet resolve_proxies(const Checkpoint& ck, const RunConfig& rc) {
    const ProxyKind kind = proxy_kind_from_string(rc.proxy);
    if (ck.params.config.head != HeadKind::sphere) return {};
    if (kind == ProxyKind::centroid && !ck.centroids.empty()) {
        CentroidSet set;
        for (const auto& mu : ck.centroids) set.proxies.push_back({ProxyKind::centroid, mu, {}});
        return set;
    }
    if (rc.train_data.empty())
        throw ConfigError("proxy '" + rc.proxy + "' needs --train-data to rebuild class proxies");
    const FlowDataset train = load_csv(rc.train_data, rc.label_column, rc.benign_label);
    const MappedData m = map_to_checkpoint(train, ck, rc.zero_day);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        if (m.labels[i] >= 0) keep.push_back(i);
    Matrix x(static_cast<Eigen::Index>(keep.size()), m.x.cols());
    std::vector<int> labels;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        x.row(static_cast<Eigen::Index>(k)) = m.x.row(static_cast<Eigen::Index>(keep[k]));
        labels.push_back(m.labels[keep[k]]);
    }
    return compute_centroids(embed(ck.params, x), labels, ck.open_set(), kind);
}

struct ScoredData {
    EmbeddingBatch emb;
    Eigen::VectorXd binary;  // benign-vs-rest score (logit for bce)
    Matrix probs;            // open set only: rows x heads
    Matrix sims;             // open set only
};

inline ScoredData score_rows(const Checkpoint& ck, const CentroidSet& proxies, const Matrix& x) {
    ScoredData s;
    s.emb = embed(ck.params, x);
    if (ck.params.config.head == HeadKind::linear) {
        s.binary = s.emb.z[0].col(0);
        return s;
    }
    if (proxies.size() == 0) throw ConfigError("no class proxies available for scoring");
    s.binary = binary_scores(s.emb.z[0], proxies.proxies[0]);
    if (ck.open_set()) {
        const auto n = static_cast<Eigen::Index>(proxies.size());
        s.sims.resize(x.rows(), n);
        s.probs.resize(x.rows(), n);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const Eigen::VectorXd sims = class_similarities(s.emb, i, proxies);
            s.sims.row(i) = sims.transpose();
            s.probs.row(i) = closed_set_probs(sims).transpose();
        }
    }
    return s;
}

inline Eigen::VectorXd osr_scores(const ScoredData& s, OodScore variant) {
    Eigen::VectorXd out(s.probs.rows());
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out(i) = score_osr(s.sims.row(i).transpose(), s.probs.row(i).transpose(), variant);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalOutput {
    ojson report;
    std::string scores_csv;
    double wall_ms = 0.0;
};

namespace detail {

inline ojson nullable(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline std::optional<double> mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::nullopt;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline ojson rank_json(const Matrix& z, const std::vector<int>& labels) {
    std::vector<Eigen::Index> known;
    std::vector<Eigen::Index> unknown;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] >= 0 ? known : unknown).push_back(static_cast<Eigen::Index>(i));
    const auto rank_of = [&](const std::vector<Eigen::Index>& rows) -> ojson {
        if (rows.empty()) return nullptr;
        Matrix sel(static_cast<Eigen::Index>(rows.size()), z.cols());
        for (std::size_t k = 0; k < rows.size(); ++k) sel.row(static_cast<Eigen::Index>(k)) = z.row(rows[k]);
        return normalized_rank(sel).normalized;
    };
    ojson j;
    j["known"] = rank_of(known);
    j["zero_day"] = rank_of(unknown);
    return j;
}

inline std::optional<double> resolve_threshold(const Checkpoint& ck, const CentroidSet& proxies, const RunConfig& rc,
                                               OodScore variant) {
    if (rc.tau && rc.target_fpr) throw ConfigError("--tau and --target-fpr are mutually exclusive");
    if (rc.tau) return rc.tau;
    if (!rc.target_fpr) return std::nullopt;
    if (rc.calib_data.empty()) throw ConfigError("--target-fpr needs --calib-data (validation CSV)");
    const FlowDataset calib = load_csv(rc.calib_data, rc.label_column, rc.benign_label);
    const MappedData m = map_to_checkpoint(calib, ck, rc.zero_day);
    const ScoredData s = score_rows(ck, proxies, m.x);
    std::vector<double> ref;
    if (ck.open_set()) {
        const Eigen::VectorXd osr = osr_scores(s, variant);
        for (std::size_t i = 0; i < m.labels.size(); ++i)
            if (m.labels[i] >= 0) ref.push_back(osr(static_cast<Eigen::Index>(i)));
        return threshold_for_fpr(ref, *rc.target_fpr, true);
    }
    for (std::size_t i = 0; i < m.labels.size(); ++i)
        if (m.labels[i] == 0) ref.push_back(s.binary(static_cast<Eigen::Index>(i)));
    return threshold_for_fpr(ref, *rc.target_fpr, false);
}

}  // namespace detail

/// Scores `test` with a checkpoint and builds the report. Rows of classes
/// absent from the checkpoint must be listed in rc.zero_day.
inline EvalOutput evaluate(const Checkpoint& ck, const FlowDataset& test, const RunConfig& rc) {
    const OodScore variant = ood_score_from_string(rc.ood_score);
    const CentroidSet proxies = resolve_proxies(ck, rc);
    const MappedData m = map_to_checkpoint(test, ck, rc.zero_day);
    const auto threshold = detail::resolve_threshold(ck, proxies, rc, variant);

    const auto start = std::chrono::steady_clock::now();
    const ScoredData s = score_rows(ck, proxies, m.x);
    Eigen::VectorXd osr;
    if (ck.open_set()) osr = osr_scores(s, variant);
    EvalOutput out;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    const std::size_t n = m.labels.size();
    std::vector<int> predicted(n, 0);
    ojson& r = out.report;
    r["mode"] = to_string(ck.mode);
    r["proxy"] = rc.proxy;
    r["n_rows"] = n;

    if (!ck.open_set()) {
        const std::vector<double> scores = detail::to_std(s.binary);
        ojson per_class = ojson::array();
        std::vector<double> known_auc, known_fpr, zd_auc, zd_fpr;
        std::vector<std::string> order;
        for (const auto& name : m.row_class)
            if (name != ck.class_names[0] && std::find(order.begin(), order.end(), name) == order.end())
                order.push_back(name);
        for (const auto& name : order) {
            std::vector<double> sub;
            std::vector<int> pos;
            bool unknown = false;
            for (std::size_t i = 0; i < n; ++i) {
                if (m.labels[i] == 0 || m.row_class[i] == name) {
                    sub.push_back(scores[i]);
                    pos.push_back(m.labels[i] == 0 ? 0 : 1);
                    unknown = unknown || m.labels[i] < 0;
                }
            }
            ojson c;
            c["class"] = name;
            c["kind"] = unknown ? "zero_day" : "known";
            c["n"] = std::count(pos.begin(), pos.end(), 1);
            if (std::count(pos.begin(), pos.end(), 0) == 0) {
                c["auroc"] = nullptr;
                c["fpr_at_95"] = nullptr;
            } else {
                const double a = auroc(sub, pos);
                const double f = fpr_at_recall(sub, pos, 0.95);
                c["auroc"] = a;
                c["fpr_at_95"] = f;
                (unknown ? zd_auc : known_auc).push_back(a);
                (unknown ? zd_fpr : known_fpr).push_back(f);
            }
            per_class.push_back(c);
        }
        r["per_class"] = per_class;
        r["known_mean_auroc"] = detail::nullable(detail::mean_of(known_auc));
        r["known_mean_fpr_at_95"] = detail::nullable(detail::mean_of(known_fpr));
        r["zero_day_mean_auroc"] = detail::nullable(detail::mean_of(zd_auc));
        r["zero_day_mean_fpr_at_95"] = detail::nullable(detail::mean_of(zd_fpr));

        std::vector<int> malicious(n);
        for (std::size_t i = 0; i < n; ++i) malicious[i] = m.labels[i] == 0 ? 0 : 1;
        const auto n_mal = std::count(malicious.begin(), malicious.end(), 1);
        ojson overall;
        if (n_mal > 0 && n_mal < static_cast<std::ptrdiff_t>(n)) {
            overall["auroc"] = auroc(scores, malicious);
            overall["fpr_at_95"] = fpr_at_recall(scores, malicious, 0.95);
            overall["pr_auc"] = pr_auc(scores, malicious);
        }
        r["overall"] = overall.is_null() ? ojson(nullptr) : overall;

        if (threshold) {
            for (std::size_t i = 0; i < n; ++i) predicted[i] = predict_binary(scores[i], *threshold);
            const auto rep = closed_set_report(predicted, malicious);
            ojson t;
            t["tau"] = *threshold;
            t["accuracy"] = rep.accuracy;
            for (const auto& cm : rep.per_class) {
                if (cm.label != 1) continue;
                t["precision"] = cm.precision;
                t["recall"] = cm.recall;
                t["f1"] = cm.f1;
                t["fp_rate"] = cm.fp_rate;
            }
            r["threshold"] = t;
        } else {
            r["threshold"] = nullptr;
        }
    } else {
        r["ood_score"] = rc.ood_score;
        std::vector<int> closed_pred;
        std::vector<int> closed_truth;
        std::vector<std::size_t> known_rows;
        for (std::size_t i = 0; i < n; ++i) {
            const int am = argmax_lowest(s.probs.row(static_cast<Eigen::Index>(i)).transpose());
            predicted[i] = am;
            if (m.labels[i] >= 0) {
                known_rows.push_back(i);
                closed_pred.push_back(am);
                closed_truth.push_back(m.labels[i]);
            }
        }
        if (closed_truth.empty()) throw DataError("eval: no rows of known classes in the test data");
        const auto rep = closed_set_report(closed_pred, closed_truth);
        ojson cs;
        cs["accuracy"] = rep.accuracy;
        cs["macro_precision"] = rep.macro_precision;
        cs["macro_recall"] = rep.macro_recall;
        cs["macro_f1"] = rep.macro_f1;
        cs["macro_fp_rate"] = rep.macro_fp_rate;
        ojson per_class = ojson::array();
        std::vector<double> prs;
        for (const auto& cm : rep.per_class) {
            std::vector<double> sc;
            std::vector<int> pos;
            for (std::size_t i : known_rows) {
                sc.push_back(s.probs(static_cast<Eigen::Index>(i), cm.label));
                pos.push_back(m.labels[i] == cm.label ? 1 : 0);
            }
            const double pr = pr_auc(sc, pos);
            prs.push_back(pr);
            ojson c;
            c["class"] = ck.class_names[static_cast<std::size_t>(cm.label)];
            c["support"] = cm.support;
            c["precision"] = cm.precision;
            c["recall"] = cm.recall;
            c["f1"] = cm.f1;
            c["fp_rate"] = cm.fp_rate;
            c["pr_auc"] = pr;
            per_class.push_back(c);
        }
        cs["macro_pr_auc"] = *detail::mean_of(prs);
        cs["per_class"] = per_class;
        r["closed_set"] = cs;

        std::vector<int> is_unknown(n);
        for (std::size_t i = 0; i < n; ++i) is_unknown[i] = m.labels[i] < 0 ? 1 : 0;
        if (known_rows.size() < n) {
            const auto om = open_set_metrics(detail::to_std(osr), is_unknown, closed_pred, closed_truth);
            ojson os;
            os["n_unknown"] = n - known_rows.size();
            os["unknown_classes"] = m.unknown_classes;
            os["open_set_auc"] = om.open_set_auc;
            os["open_auc"] = om.open_auc;
            r["open_set"] = os;
        } else {
            r["open_set"] = nullptr;
        }
        if (threshold) {
            for (std::size_t i = 0; i < n; ++i)
                predicted[i] = predict_osr(osr(static_cast<Eigen::Index>(i)), *threshold,
                                           s.probs.row(static_cast<Eigen::Index>(i)).transpose());
            const auto orep = closed_set_report(predicted, m.labels);
            ojson t;
            t["tau"] = *threshold;
            t["accuracy"] = orep.accuracy;
            t["macro_precision"] = orep.macro_precision;
            t["macro_recall"] = orep.macro_recall;
            t["macro_f1"] = orep.macro_f1;
            t["macro_fp_rate"] = orep.macro_fp_rate;
            r["threshold"] = t;
        } else {
            r["threshold"] = nullptr;
        }
    }
    r["normalized_rank"] = detail::rank_json(s.emb.z[0], m.labels);
    if (rc.timing) r["scoring_wall_ms"] = out.wall_ms;
    r["config"] = config_json(rc);

    std::ostringstream csv;
    csv << "sample_index,true_label,s";
    const auto n_probs = ck.open_set() ? s.probs.cols() : 0;
    for (Eigen::Index c = 0; c < n_probs; ++c) csv << ",p_" << c;
    csv << ",predicted_label\n";
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        csv << i << ',' << m.labels[i] << ',' << detail::format_double(ck.open_set() ? osr(ii) : s.binary(ii));
        for (Eigen::Index c = 0; c < n_probs; ++c) csv << ',' << detail::format_double(s.probs(ii, c));
        csv << ',';
        if (ck.open_set() || threshold) csv << predicted[i];
        csv << '\n';
    }
    out.scores_csv = csv.str();
    return out;
}

/// Flattens a report into one CSV header line and one value line.
inline std::string report_to_csv_row(const ojson& report) {
    std::vector<std::pair<std::string, std::string>> cells;
    const std::function<void(const std::string&, const ojson&)> walk = [&](const std::string& prefix, const ojson& j) {
        if (j.is_object()) {
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (prefix.empty() && it.key() == "config") continue;
                walk(prefix.empty() ? it.key() : prefix + "." + it.key(), it.value());
            }
        } else if (j.is_array()) {
            for (std::size_t i = 0; i < j.size(); ++i) {
                const ojson& item = j[i];
                const std::string tag = item.is_object() && item.contains("class") ? item["class"].get<std::string>()
                                                                                  : std::to_string(i);
                walk(prefix + "[" + tag + "]", item);
            }
        } else if (j.is_null()) {
            cells.emplace_back(prefix, "");
        } else if (j.is_string()) {
            cells.emplace_back(prefix, detail::csv_escape(j.get<std::string>()));
        } else if (j.is_number_float()) {
            cells.emplace_back(prefix, detail::format_double(j.get<double>()));
        } else {
            cells.emplace_back(prefix, j.dump());
        }
    };
    walk("", report);
    std::string head, row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        head += (i ? "," : "") + detail::csv_escape(cells[i].first);
        row += (i ? "," : "") + cells[i].second;
    }
    return head + "\n" + row + "\n";
}

// ---------------------------------------------------------------------------
// Commands

inline std::string epoch_log_line(const EpochLog& e) {
    ojson j;
    j["epoch"] = e.epoch;
    j["lr"] = e.lr;
    j["loss_mean"] = e.loss_mean;
    j["wall_ms"] = e.wall_ms;
    return j.dump();
}

/// `train`: split, fit on the known classes of the train split, write the
/// checkpoint (with centroids and scaler), the epoch log and the resolved
/// config next to it.
inline Checkpoint cmd_train(const RunConfig& rc) {
    if (rc.data.empty()) throw ConfigError("train: --data is required");
    if (rc.out.empty()) throw ConfigError("train: --out is required");
    const FlowDataset d = load_csv(rc.data, rc.label_column, rc.benign_label);
    const PreparedData prep = prepare_training_data(d, rc);
    if (!rc.split_out.empty() && rc.holdout) {
        save_csv(rc.split_out + ".train.csv", prep.raw_train, rc.label_column);
        save_csv(rc.split_out + ".test.csv", prep.test, rc.label_column);
    }
    const std::string log_path = rc.log.empty() ? rc.out + ".log.jsonl" : rc.log;
    std::ofstream log(log_path, std::ios::binary);
    if (!log) throw DataError("cannot write " + log_path);
    const auto on_epoch = [&](const EpochLog& e) { log << epoch_log_line(e) << '\n' << std::flush; };
    Checkpoint ck;
    try {
        ck = fit_model(prep.train, rc, on_epoch);
    } catch (const TrainingDiverged& e) {
        Checkpoint last;
        last.params = e.last_good();
        last.mode = loss_kind_from_string(rc.mode);
        last.class_names = prep.train.class_names;
        last.scaler = fit_scaler(prep.train, rc.clamp);
        save_checkpoint(rc.out + ".last_good", last);
        throw;
    }
    save_checkpoint(rc.out, ck);
    write_text_file(rc.out + ".cfg", config_to_text(rc));
    return ck;
}

/// `eval`: writes the JSON report to rc.out (returned as text either way),
/// plus the optional score dump and flat CSV row.
inline EvalOutput cmd_eval(const RunConfig& rc) {
    if (rc.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    if (rc.data.empty()) throw ConfigError("eval: --data is required");
    const Checkpoint ck = load_checkpoint(rc.checkpoint);
    const FlowDataset test = load_csv(rc.data, rc.label_column, rc.benign_label);
    EvalOutput out = evaluate(ck, test, rc);
    if (!rc.out.empty()) write_text_file(rc.out, out.report.dump(2) + "\n");
    if (!rc.scores_out.empty()) write_text_file(rc.scores_out, out.scores_csv);
    if (!rc.csv_out.empty()) write_text_file(rc.csv_out, report_to_csv_row(out.report));
    return out;
}

/// Values swept by `sweep`: the explicit list, or from..to inclusive.
inline std::vector<double> sweep_values(const RunConfig& rc) {
    if (!rc.values.empty()) return rc.values;
    if (!rc.from || !rc.to || !rc.step) throw ConfigError("sweep: give --values or all of --from, --to, --step");
    if (!(*rc.step > 0.0) || *rc.to < *rc.from) throw ConfigError("sweep: invalid range");
    const auto count = static_cast<long long>(std::floor((*rc.to - *rc.from) / *rc.step + 1e-9)) + 1;
    if (count > 100000) throw ConfigError("sweep: range has too many points");
    std::vector<double> out;
    for (long long k = 0; k < count; ++k)
        out.push_back(std::round((*rc.from + static_cast<double>(k) * *rc.step) * 1e12) / 1e12);
    return out;
}

struct ValidationMetrics {
    double auroc = 0.0;
    double mean_class_auroc = 0.0;
    double fpr_at_95 = 0.0;
};

/// Benign-vs-malicious metrics of a checkpoint on a labeled validation set.
inline ValidationMetrics validation_metrics(const Checkpoint& ck, const FlowDataset& val, const RunConfig& rc) {
    RunConfig erc = rc;
    erc.proxy = "centroid";
    const CentroidSet proxies = resolve_proxies(ck, erc);
    const MappedData m = map_to_checkpoint(val, ck, rc.zero_day);
    const ScoredData s = score_rows(ck, proxies, m.x);
    const auto scores = detail::to_std(s.binary);
    std::vector<int> malicious(m.labels.size());
    for (std::size_t i = 0; i < m.labels.size(); ++i) malicious[i] = m.labels[i] == 0 ? 0 : 1;
    ValidationMetrics v;
    v.auroc = auroc(scores, malicious);
    v.fpr_at_95 = fpr_at_recall(scores, malicious, 0.95);
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> per;
    std::vector<double> aucs;
    std::vector<std::string> names;
    for (const auto& name : m.row_class)
        if (name != ck.class_names[0] && std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    for (const auto& name : names) {
        std::vector<double> sub;
        std::vector<int> pos;
        for (std::size_t i = 0; i < m.labels.size(); ++i) {
            if (m.labels[i] == 0 || m.row_class[i] == name) {
                sub.push_back(scores[i]);
                pos.push_back(m.labels[i] == 0 ? 0 : 1);
            }
        }
        aucs.push_back(auroc(sub, pos));
    }
    v.mean_class_auroc = detail::mean_of(aucs).value_or(0.0);
    return v;
}

/// Train/validation division used by `sweep`: 80/20 of the known-class
/// training split.
inline Split sweep_split(const FlowDataset& d, const RunConfig& rc) {
    const PreparedData prep = prepare_training_data(d, rc);
    auto fv = split_holdout(prep.train, {{}, 0.8, detail::mix_seed(rc.seed, 3)});
    fv.train = canonicalize_vocabulary(fv.train);
    return fv;
}

/// `sweep`: one train + validation evaluation per parameter value.
inline std::string cmd_sweep(const RunConfig& rc) {
    if (rc.data.empty()) throw ConfigError("sweep: --data is required");
    if (rc.param != "margin" && rc.param != "alpha") throw ConfigError("sweep: --param must be margin or alpha");
    const auto values = sweep_values(rc);
    for (double v : values) {
        RunConfig probe = rc;
        set_config_value(probe, rc.param, detail::format_double(v));
        loss_config_from(probe);
    }
    const FlowDataset d = load_csv(rc.data, rc.label_column, rc.benign_label);
    const Split fv = sweep_split(d, rc);

    std::ostringstream csv;
    csv << "param,value,squared,val_auroc,val_mean_class_auroc,val_fpr_at_95,final_loss\n";
    for (double v : values) {
        RunConfig point = rc;
        set_config_value(point, rc.param, detail::format_double(v));
        std::vector<EpochLog> log;
        const Checkpoint ck = fit_model(fv.train, point, {}, &log);
        const auto m = validation_metrics(ck, fv.test, point);
        csv << rc.param << ',' << detail::format_double(v) << ',' << (rc.squared ? "true" : "false") << ','
            << detail::format_double(m.auroc) << ',' << detail::format_double(m.mean_class_auroc) << ','
            << detail::format_double(m.fpr_at_95) << ','
            << (log.empty() ? std::string() : detail::format_double(log.back().loss_mean)) << '\n';
    }
    const std::string text = csv.str();
    if (!rc.out.empty()) {
        write_text_file(rc.out, text);
        write_text_file(rc.out + ".cfg", config_to_text(rc));
    }
    return text;
}

/// `export-embeddings`: per row the label, every head's coordinates, and
/// the rescaled (1-cos)/2 and unscaled 1-cos distance to each centroid.
inline std::string cmd_export_embeddings(const RunConfig& rc) {
    if (rc.checkpoint.empty()) throw ConfigError("export-embeddings: --checkpoint is required");
    if (rc.data.empty()) throw ConfigError("export-embeddings: --data is required");
    const Checkpoint ck = load_checkpoint(rc.checkpoint);
    if (ck.centroids.empty()) throw ConfigError("export-embeddings: checkpoint has no centroids");
    const FlowDataset d = load_csv(rc.data, rc.label_column, rc.benign_label);
    if (static_cast<int>(d.num_features()) != ck.params.config.f) throw DataError("data/checkpoint feature mismatch");
    const auto emb = embed(ck.params, ck.scaler.transform(d.features));
    const int heads = ck.params.config.n_heads;
    const int f_o = ck.params.config.f_o;

    std::ostringstream csv;
    csv << "sample_index,label";
    for (int c = 0; c < heads; ++c)
        for (int k = 0; k < f_o; ++k) csv << ",h" << c << '_' << k;
    for (int c = 0; c < heads; ++c) csv << ",d_" << c << ",d_unscaled_" << c;
    csv << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        csv << i << ',' << detail::csv_escape(d.class_names[static_cast<std::size_t>(d.labels[i])]);
        for (int c = 0; c < heads; ++c)
            for (int k = 0; k < f_o; ++k) csv << ',' << detail::format_double(emb.z[static_cast<std::size_t>(c)](ii, k));
        for (int c = 0; c < heads; ++c) {
            const double cos = emb.z[static_cast<std::size_t>(c)].row(ii).dot(ck.centroids[static_cast<std::size_t>(c)].transpose());
            const double unscaled = std::clamp(1.0 - cos, 0.0, 2.0);
            csv << ',' << detail::format_double(0.5 * unscaled) << ',' << detail::format_double(unscaled);
        }
        csv << '\n';
    }
    const std::string text = csv.str();
    if (!rc.out.empty()) {
        write_text_file(rc.out, text);
        write_text_file(rc.out + ".cfg", config_to_text(rc));
    }
    return text;
}

/// `synth`: blob dataset CSV plus `<out>.manifest.json` naming the
/// zero-day classes.
inline FlowDataset cmd_synth(const RunConfig& rc) {
    if (rc.out.empty()) throw ConfigError("synth: --out is required");
    BlobParams p;
    p.n_classes = rc.classes;
    p.n_per_class = rc.per_class;
    p.n_features = rc.features;
    p.separation = rc.separation;
    p.zero_day_count = rc.zero_day_count;
    p.seed = rc.seed;
    FlowDataset d = synth_blobs(p);
    d.class_names[0] = rc.benign_label;
    save_csv(rc.out, d, rc.label_column);
    ojson manifest;
    manifest["zero_day_classes"] = d.zero_day_classes;
    manifest["class_names"] = d.class_names;
    manifest["label_column"] = rc.label_column;
    manifest["config"] = config_json(rc);
    write_text_file(rc.out + ".manifest.json", manifest.dump(2) + "\n");
    return d;
}

}  // namespace closr
