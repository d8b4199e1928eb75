#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "closr/closr.hpp"

using namespace closr;
namespace fs = std::filesystem;

namespace {

class Commands : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("closr_cmd_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    // small 4-class blob file, last class flagged zero-day
    std::string blobs(int per_class = 60, double separation = 6.0, int features = 8) {
        RunConfig rc;
        rc.out = path("blobs.csv");
        rc.per_class = per_class;
        rc.features = features;
        rc.separation = separation;
        rc.seed = 7;
        cmd_synth(rc);
        return rc.out;
    }

    RunConfig quick(const std::string& data, const std::string& mode = "clad") const {
        RunConfig rc;
        rc.data = data;
        rc.mode = mode;
        rc.zero_day = {"attack_3"};
        rc.epochs = 4;
        rc.warmup_epochs = 1;
        rc.batch_size = 32;
        rc.d_model = 16;
        rc.depth = 2;
        rc.f_o = 4;
        rc.seed = 3;
        return rc;
    }

    fs::path dir_;
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) out.push_back(l);
    return out;
}

std::vector<std::string> cells(const std::string& line) { return detail::split_csv_line(line); }

}  // namespace

TEST_F(Commands, SynthDefaultsRoundTripAndManifest) {
    RunConfig rc;
    rc.out = path("d.csv");
    cmd_synth(rc);
    const auto d = load_csv(rc.out, "Label", "BENIGN");
    EXPECT_EQ(d.size(), 2000u);
    EXPECT_EQ(d.dropped_rows, 0u);
    const auto manifest = nlohmann::json::parse(slurp(rc.out + ".manifest.json"));
    EXPECT_EQ(manifest["zero_day_classes"], nlohmann::json({"attack_3"}));
    const std::string text = slurp(rc.out);
    EXPECT_EQ(text.find('\r'), std::string::npos);
}

TEST_F(Commands, SynthSameSeedIdenticalFilesAndInfeasibleRejected) {
    RunConfig rc;
    rc.seed = 1;
    rc.per_class = 50;
    rc.out = path("a.csv");
    cmd_synth(rc);
    rc.out = path("b.csv");
    cmd_synth(rc);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    rc.zero_day_count = 2;
    rc.classes = 3;
    EXPECT_THROW(cmd_synth(rc), ConfigError);
}

TEST_F(Commands, TrainWritesCheckpointLogAndResolvedConfig) {
    auto rc = quick(blobs());
    rc.out = path("m.ckpt");
    cmd_train(rc);
    const auto log = lines(slurp(rc.out + ".log.jsonl"));
    ASSERT_EQ(log.size(), 4u);
    for (std::size_t e = 0; e < log.size(); ++e) {
        const auto j = nlohmann::json::parse(log[e]);
        EXPECT_EQ(j["epoch"], e);
        for (const char* k : {"lr", "loss_mean", "wall_ms"}) EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_EQ(slurp(rc.out + ".cfg"), config_to_text(rc));
    const auto ck = load_checkpoint(rc.out);
    auto names = ck.class_names;
    EXPECT_EQ(names[0], "BENIGN");
    std::sort(names.begin(), names.end());
    EXPECT_EQ(names, (std::vector<std::string>{"BENIGN", "attack_1", "attack_2"}));
    EXPECT_EQ(ck.centroids.size(), 1u);
    EXPECT_NEAR(ck.centroids[0].norm(), 1.0, 1e-6);
}

TEST_F(Commands, TrainTwiceGivesByteIdenticalCheckpoints) {
    auto rc = quick(blobs());
    rc.dropout = 0.1;
    rc.out = path("a.ckpt");
    cmd_train(rc);
    rc.out = path("b.ckpt");
    cmd_train(rc);
    EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
}

TEST_F(Commands, ClosrHeadCountFollowsTrainingClasses) {
    auto rc = quick(blobs(), "closr");
    rc.zero_day.clear();
    rc.out = path("all.ckpt");
    EXPECT_EQ(cmd_train(rc).params.config.n_heads, 4);
    rc.zero_day = {"attack_3"};
    rc.out = path("known.ckpt");
    const auto ck = cmd_train(rc);
    EXPECT_EQ(ck.params.config.n_heads, 3);
    EXPECT_EQ(ck.centroids.size(), 3u);
}

TEST_F(Commands, EvalBinaryReportShapeAndDeterminism) {
    auto rc = quick(blobs());
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    ev.out = path("r1.json");
    ev.scores_out = path("s1.csv");
    ev.csv_out = path("row.csv");
    const auto out = cmd_eval(ev);
    const auto& r = out.report;
    ASSERT_EQ(r["per_class"].size(), 3u);
    for (const auto& c : r["per_class"]) {
        EXPECT_GE(c["auroc"].get<double>(), 0.0);
        EXPECT_LE(c["auroc"].get<double>(), 1.0);
    }
    for (const auto& c : r["per_class"])
        EXPECT_EQ(c["kind"], c["class"] == "attack_3" ? "zero_day" : "known");
    EXPECT_EQ(r["config"]["checkpoint"], ev.checkpoint);
    EXPECT_FALSE(r.contains("scoring_wall_ms"));

    const auto score_lines = lines(slurp(ev.scores_out));
    EXPECT_EQ(score_lines[0], "sample_index,true_label,s,predicted_label");
    EXPECT_EQ(score_lines.size(), 1 + r["n_rows"].get<std::size_t>());

    const auto row = lines(slurp(ev.csv_out));
    ASSERT_EQ(row.size(), 2u);
    EXPECT_EQ(cells(row[0]).size(), cells(row[1]).size());

    const std::string report = slurp(ev.out), scores = slurp(ev.scores_out);
    cmd_eval(ev);
    EXPECT_EQ(slurp(ev.out), report);
    EXPECT_EQ(slurp(ev.scores_out), scores);
}

TEST_F(Commands, EvalVocabularyMismatchIsDataError) {
    auto rc = quick(blobs());
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.zero_day.clear();  // attack_3 is then unexplained
    EXPECT_THROW(cmd_eval(ev), DataError);
}

TEST_F(Commands, EvalThresholdFlags) {
    auto rc = quick(blobs());
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    ev.tau = 0.0;
    const auto with_tau = cmd_eval(ev);
    EXPECT_EQ(with_tau.report["threshold"]["tau"], 0.0);
    const auto rows = lines(with_tau.scores_csv);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = cells(rows[i]);
        const double s = std::stod(c[2]);
        EXPECT_EQ(std::stoi(c[3]), s < 0.0 ? 0 : 1);
    }
    ev.target_fpr = 0.1;
    EXPECT_THROW(cmd_eval(ev), ConfigError);  // mutually exclusive
    ev.tau.reset();
    EXPECT_THROW(cmd_eval(ev), ConfigError);  // needs calibration data
    ev.calib_data = path("split.train.csv");
    const auto calibrated = cmd_eval(ev);
    EXPECT_TRUE(calibrated.report["threshold"].contains("fp_rate"));
}

TEST_F(Commands, EvalOpenSetAndOodScoreIsolation) {
    auto rc = quick(blobs(), "closr");
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    auto a = cmd_eval(ev).report;
    ev.ood_score = "energy";
    auto b = cmd_eval(ev).report;
    EXPECT_NE(a["open_set"], b["open_set"]);
    EXPECT_EQ(a["open_set"]["unknown_classes"], nlohmann::ordered_json({"attack_3"}));
    const double prod = a["closed_set"]["accuracy"].get<double>() * a["open_set"]["open_set_auc"].get<double>();
    EXPECT_NEAR(a["open_set"]["open_auc"].get<double>(), prod, 1e-12);
    for (auto* r : {&a, &b}) {
        r->erase("open_set");
        r->erase("ood_score");
        r->erase("config");
    }
    EXPECT_EQ(a.dump(), b.dump());

    const auto sc = lines(cmd_eval(ev).scores_csv);
    EXPECT_EQ(sc[0], "sample_index,true_label,s,p_0,p_1,p_2,predicted_label");
}

TEST_F(Commands, NeighbourProxyUsesNearestStoredBenignRow) {
    auto rc = quick(blobs());
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    ev.proxy = "neighbour";
    EXPECT_THROW(cmd_eval(ev), ConfigError);  // needs the training rows
    ev.train_data = path("split.train.csv");
    const auto out = cmd_eval(ev);

    const auto ck = load_checkpoint(rc.out);
    const auto train = load_csv(ev.train_data, "Label", "BENIGN");
    const auto test = load_csv(ev.data, "Label", "BENIGN");
    const auto zt = embed(ck.params, ck.scaler.transform(train.features)).z[0];
    const auto zs = embed(ck.params, ck.scaler.transform(test.features)).z[0];
    const auto rows = lines(out.scores_csv);
    for (Eigen::Index i = 0; i < zs.rows(); i += 7) {
        double best = -2;
        for (Eigen::Index j = 0; j < zt.rows(); ++j)
            if (train.labels[static_cast<std::size_t>(j)] == 0) best = std::max(best, zs.row(i).dot(zt.row(j)));
        EXPECT_NEAR(std::stod(cells(rows[static_cast<std::size_t>(i) + 1])[2]), -best, 1e-12);
    }
}

TEST_F(Commands, OtherProxiesRun) {
    auto rc = quick(blobs(), "closr");
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    ev.train_data = path("split.train.csv");
    for (const char* p : {"median", "trimmed_mean", "medoid", "neighbour", "centroid"}) {
        ev.proxy = p;
        const auto r = cmd_eval(ev).report;
        EXPECT_EQ(r["proxy"], p);
        EXPECT_GE(r["open_set"]["open_set_auc"].get<double>(), 0.0);
    }
}

TEST_F(Commands, SweepRowCounts) {
    auto rc = quick(blobs(30));
    rc.epochs = 2;
    rc.param = "margin";
    rc.from = 0.1;
    rc.to = 1.0;
    rc.step = 0.1;
    const auto m = lines(cmd_sweep(rc));
    EXPECT_EQ(m.size(), 11u);
    EXPECT_EQ(cells(m[1])[1], "0.1");
    EXPECT_EQ(cells(m[10])[1], "1");
    rc.param = "alpha";
    rc.to = 0.9;
    const auto a = lines(cmd_sweep(rc));
    EXPECT_EQ(a.size(), 10u);
    EXPECT_EQ(cells(a[3])[1], "0.3");
}

TEST_F(Commands, SweepErrors) {
    auto rc = quick(blobs(30));
    rc.param = "lr";
    rc.values = {0.1};
    EXPECT_THROW(cmd_sweep(rc), ConfigError);
    rc.param = "margin";
    rc.values.clear();
    rc.from = 1.0;
    rc.to = 0.1;
    rc.step = 0.1;
    EXPECT_THROW(cmd_sweep(rc), ConfigError);
    rc.values = {1.5};
    EXPECT_THROW(cmd_sweep(rc), ConfigError);  // margin outside (0,1]
}

TEST_F(Commands, SingleValueSweepEqualsTrainThenEval) {
    const std::string data = blobs(60);
    auto rc = quick(data);
    rc.values = {0.7};
    const auto sweep = lines(cmd_sweep(rc));
    ASSERT_EQ(sweep.size(), 2u);
    const auto row = cells(sweep[1]);

    const auto fv = sweep_split(load_csv(data, "Label", "BENIGN"), rc);
    save_csv(path("fit.csv"), fv.train);
    save_csv(path("val.csv"), fv.test);
    RunConfig tr = rc;
    tr.values.clear();
    tr.margin = 0.7;
    tr.data = path("fit.csv");
    tr.holdout = false;
    tr.zero_day.clear();
    tr.out = path("m.ckpt");
    cmd_train(tr);
    RunConfig ev = tr;
    ev.checkpoint = tr.out;
    ev.data = path("val.csv");
    ev.out.clear();
    const auto r = cmd_eval(ev).report;
    EXPECT_EQ(row[3], detail::format_double(r["overall"]["auroc"].get<double>()));
    EXPECT_EQ(row[5], detail::format_double(r["overall"]["fpr_at_95"].get<double>()));
    EXPECT_EQ(row[4], detail::format_double(r["known_mean_auroc"].get<double>()));
}

TEST_F(Commands, ExportShapeIdentityAndRoundTrip) {
    RunConfig s;
    s.out = path("d.csv");
    s.classes = 3;
    s.per_class = 50;
    s.features = 6;
    s.zero_day_count = 0;
    cmd_synth(s);
    auto rc = quick(s.out, "closr");
    rc.zero_day.clear();
    rc.f_o = 8;
    rc.out = path("m.ckpt");
    auto ck = cmd_train(rc);

    // make head 0's centroid exactly the embedding of the first benign row
    const auto d = load_csv(s.out, "Label", "BENIGN");
    const auto emb = embed(ck.params, ck.scaler.transform(d.features));
    ck.centroids[0] = emb.z[0].row(0).transpose();
    save_checkpoint(path("m2.ckpt"), ck);
    const auto stored = load_checkpoint(path("m2.ckpt"));

    RunConfig ex;
    ex.checkpoint = path("m2.ckpt");
    ex.data = s.out;
    const auto text = cmd_export_embeddings(ex);
    const auto rows = lines(text);
    ASSERT_EQ(rows.size(), 151u);
    const auto header = cells(rows[0]);
    EXPECT_EQ(header.size(), 2u + 3u * 8u + 3u * 2u);
    EXPECT_EQ(header[2], "h0_0");
    EXPECT_EQ(header[26], "d_0");
    EXPECT_EQ(header[27], "d_unscaled_0");
    EXPECT_NEAR(std::stod(cells(rows[1])[26]), 0.0, 1e-6);

    // recompute distances from the exported coordinates
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto c = cells(rows[i]);
        for (int h = 0; h < 3; ++h) {
            Eigen::VectorXd z(8);
            for (int k = 0; k < 8; ++k) z(k) = std::stod(c[static_cast<std::size_t>(2 + h * 8 + k)]);
            const double cos = z.dot(stored.centroids[static_cast<std::size_t>(h)]);
            EXPECT_NEAR(std::stod(c[static_cast<std::size_t>(26 + 2 * h)]), 0.5 * (1 - cos), 1e-6);
            EXPECT_NEAR(std::stod(c[static_cast<std::size_t>(27 + 2 * h)]), 1 - cos, 1e-6);
        }
    }
}

TEST_F(Commands, IndistinguishableClassesGiveChanceAuroc) {
    const std::string data = blobs(1000, 0.0, 8);
    auto rc = quick(data);
    rc.epochs = 10;
    rc.warmup_epochs = 2;
    rc.split_out = path("split");
    rc.out = path("m.ckpt");
    cmd_train(rc);
    RunConfig ev = rc;
    ev.checkpoint = rc.out;
    ev.out.clear();
    ev.data = path("split.test.csv");
    const auto r = cmd_eval(ev).report;
    EXPECT_NEAR(r["overall"]["auroc"].get<double>(), 0.5, 0.05);
}
