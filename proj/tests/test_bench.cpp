#include <catch2/catch_amalgamated.hpp>

#include "headgate/bench/metrics.hpp"
#include "headgate/bench/planted.hpp"
#include "headgate/bench/sweep.hpp"
#include "headgate/bench/task.hpp"
#include "headgate/bench/timing.hpp"
#include "headgate/io.hpp"
#include "helpers.hpp"

using namespace headgate;
using namespace headgate::bench;

TEST_CASE("modality sequences have exact vision counts and disjoint id pools") {
    const ModelConfig cfg = make_config(1, 2, 8, 64);
    const auto seq = make_modality_sequence(cfg, 32, 0.5, 77);
    REQUIRE(seq.size() == 32);
    int vision = 0;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const bool vis = seq.modality[i] == Modality::vision;
        vision += vis;
        if (vis) REQUIRE(seq.token_ids[i] < 32);
        else REQUIRE(seq.token_ids[i] >= 32);
    }
    REQUIRE(vision == 16);

    const auto again = make_modality_sequence(cfg, 32, 0.5, 77);
    REQUIRE(again.token_ids == seq.token_ids);
}

TEST_CASE("empty planted spec with a trivial band is a plain random model") {
    const ModelConfig cfg = make_config(2, 2, 16, 32);
    PlantedSpec spec;
    spec.seed = 5;
    spec.band_lo = 0.0; // full band: no background constraint
    spec.band_hi = 1.0;
    spec.rho_lo = -0.1;
    spec.rho_hi = 1.1;
    const Model planted = generate_planted_model(cfg, spec);
    const Model plain = make_random_model(cfg, 5);
    REQUIRE(planted.embedding == plain.embedding);
    REQUIRE(planted.layers[0].heads[0].w_q == plain.layers[0].heads[0].w_q);
    REQUIRE(planted.unembedding == plain.unembedding);
}

TEST_CASE("planted spec validation") {
    const ModelConfig cfg = make_config(2, 2, 16, 32);
    PlantedSpec spec;
    spec.planted_perception = {{0, 0}};
    spec.planted_reasoning = {{0, 0}};
    REQUIRE_THROWS_AS(spec.validate(cfg), validation_error);

    spec.planted_reasoning = {{5, 0}};
    REQUIRE_THROWS_AS(spec.validate(cfg), validation_error);

    spec.planted_reasoning.clear();
    spec.band_lo = 0.1;
    spec.rho_lo = 0.2;
    REQUIRE_THROWS_AS(spec.validate(cfg), validation_error);
}

TEST_CASE("a planted perception head clears its band on fresh sequences") {
    const ModelConfig cfg = make_config(2, 4, 32, 64);
    PlantedSpec spec;
    spec.planted_perception = {{0, 1}};
    spec.rho_hi = 0.8;
    spec.seed = 11;
    const Model model = generate_planted_model(cfg, spec);
    for (int i = 0; i < 10; ++i) {
        const auto seq = make_modality_sequence(cfg, 32, 0.5, 9000 + i);
        const auto res = model_forward_ungated(model, seq);
        const double sv = modality_ratio(res.trace.attention[0][1],
                                         ModalityPartition::from_labels(seq.modality),
                                         Modality::vision);
        REQUIRE(sv >= 0.8);
    }
}

TEST_CASE("planted bands hold for every planted head across seeds") {
    const ModelConfig cfg = make_config(3, 4, 32, 64);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PlantedSpec spec;
        spec.planted_perception = {{0, 0}, {1, 2}};
        spec.planted_reasoning = {{2, 1}};
        spec.seed = seed;
        const Model model = generate_planted_model(cfg, spec);
        for (int i = 0; i < 4; ++i) {
            const auto seq = make_modality_sequence(cfg, 32, 0.5, seed * 100 + i);
            const auto res = model_forward_ungated(model, seq);
            const auto partition = ModalityPartition::from_labels(seq.modality);
            const auto profile = ratio_profile(res.trace, partition);
            REQUIRE(profile.visual_ratio(0, 0) >= spec.rho_hi);
            REQUIRE(profile.visual_ratio(1, 2) >= spec.rho_hi);
            REQUIRE(profile.visual_ratio(2, 1) <= spec.rho_lo);
        }
    }
}

TEST_CASE("recovery is perfect when thresholds sit inside the band gaps") {
    const ModelConfig cfg = make_config(4, 4, 32, 64);
    PlantedSpec spec;
    spec.planted_perception = {{0, 0}, {1, 1}};
    spec.planted_reasoning = {{2, 2}, {3, 3}};
    spec.seed = 21;
    const Model model = generate_planted_model(cfg, spec);

    const Boundaries bracket{2, 3};
    const auto score = recover_planted_heads(model, spec, bracket, {0.75, 0.25}, 6, 555);
    REQUIRE(score.perception_precision == 1.0);
    REQUIRE(score.perception_recall == 1.0);
    REQUIRE(score.reasoning_precision == 1.0);
    REQUIRE(score.reasoning_recall == 1.0);

    // With tau_perc at its ceiling no realized ratio can qualify (masked
    // softmax gives every unmasked text column strictly positive weight).
    const auto starved = recover_planted_heads(model, spec, bracket, {1.0, 0.25}, 6, 555);
    REQUIRE(starved.perception_recall == 0.0);
}

TEST_CASE("sweeping tau_perc across the gap yields a monotone recall curve") {
    const ModelConfig cfg = make_config(3, 4, 32, 64);
    PlantedSpec spec;
    spec.planted_perception = {{0, 0}, {1, 3}};
    spec.seed = 31;
    const Model model = generate_planted_model(cfg, spec);

    double prev_recall = 1.0;
    for (double tau : {0.70, 0.80, 0.90, 0.97, 0.999}) {
        const auto score =
            recover_planted_heads(model, spec, {2, 3}, {tau, 0.25}, 4, 777);
        REQUIRE(score.perception_recall <= prev_recall);
        prev_recall = score.perception_recall;
    }
}

TEST_CASE("binary f1 follows the closed formula") {
    REQUIRE(binary_f1(2, 1, 1) == Catch::Approx(2.0 * 2 / (2.0 * 2 + 1 + 1)).margin(1e-15));
    REQUIRE(binary_f1(2, 1, 1) == Catch::Approx(0.6667).margin(5e-5));
    REQUIRE(binary_f1(0, 0, 0) == 0.0);

    // Assemble a label set realizing TP=2, FP=1, FN=1 for class 2.
    const std::vector<int> labels{2, 2, 2, 1, 1};
    const std::vector<int> preds{2, 2, 1, 2, 1};
    const auto report = weighted_f1(preds, labels, 2);
    REQUIRE(report.per_class[1].tp == 2);
    REQUIRE(report.per_class[1].fp == 1);
    REQUIRE(report.per_class[1].fn == 1);
    REQUIRE(report.per_class[1].f1 == binary_f1(2, 1, 1));
}

TEST_CASE("perfect predictions score weighted f1 of one") {
    const std::vector<int> labels{1, 2, 3, 2, 1, 3, 3};
    const auto report = weighted_f1(labels, labels, 3);
    REQUIRE(report.weighted_f1 == 1.0);
    REQUIRE(report.accuracy == 1.0);
}

TEST_CASE("multiclass report matches an independent confusion-matrix oracle") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
        const int K = 3;
        const int n = 40;
        std::vector<int> labels(n), preds(n);
        for (int i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng.uniform_int(1, K));
            preds[i] = static_cast<int>(rng.uniform_int(1, K));
        }
        const auto report = weighted_f1(preds, labels, K);

        long confusion[4][4] = {};
        for (int i = 0; i < n; ++i) ++confusion[labels[i]][preds[i]];
        double weighted = 0.0;
        for (int c = 1; c <= K; ++c) {
            long tp = confusion[c][c];
            long fn = 0, fp = 0, support = 0;
            for (int o = 1; o <= K; ++o) {
                support += confusion[c][o];
                if (o != c) {
                    fn += confusion[c][o];
                    fp += confusion[o][c];
                }
            }
            const auto& m = report.per_class[c - 1];
            REQUIRE(m.tp == tp);
            REQUIRE(m.fp == fp);
            REQUIRE(m.fn == fn);
            REQUIRE(m.support == support);
            const double f1 = binary_f1(tp, fp, fn);
            REQUIRE(m.f1 == f1);
            weighted += (static_cast<double>(support) / n) * f1;
        }
        REQUIRE(report.weighted_f1 == weighted);
    }
}

TEST_CASE("metric input validation") {
    REQUIRE_THROWS_AS(weighted_f1({1, 2}, {1}, 2), validation_error);
    REQUIRE_THROWS_AS(weighted_f1({1, 3}, {1, 1}, 2), validation_error);
    REQUIRE_THROWS_AS(weighted_f1({}, {}, 2), validation_error);
}

TEST_CASE("flop model counts the ratio pass as exactly H times N squared") {
    const ModelConfig cfg = make_config(2, 8, 64, 256);
    for (int n : {64, 256, 512}) {
        const auto f = flop_estimate(cfg, n);
        REQUIRE(f.ratio_extra == static_cast<double>(cfg.num_heads) * n * n);
        REQUIRE(f.gate_extra == static_cast<double>(cfg.num_heads) * n * cfg.d_v);
        REQUIRE(f.t2 == static_cast<double>(cfg.num_heads) * n * n * cfg.d_k);
    }
    const auto a = flop_estimate(cfg, 128);
    const auto b = flop_estimate(cfg, 256);
    REQUIRE(b.t2 == 4.0 * a.t2);
    REQUIRE(b.t4 == 4.0 * a.t4);
    REQUIRE(b.t1 == 2.0 * a.t1);
}

TEST_CASE("timing harness produces ordered quantiles and finite overhead") {
    const ModelConfig cfg = make_config(1, 2, 16, 32);
    const Model model = make_random_model(cfg, 51);
    InlineRescale rescale;
    rescale.boundaries = {1, 1};
    rescale.thresholds = {0.75, 0.25};
    rescale.g_perc = 1.2;
    rescale.g_reas = 1.3;
    const auto report = timing_harness(model, {16, 32}, rescale, 5, 1, 3);
    REQUIRE(report.rows.size() == 4);
    for (const auto& row : report.rows) {
        REQUIRE(row.p25_s <= row.median_s);
        REQUIRE(row.median_s <= row.p75_s);
        REQUIRE(row.mean_s > 0.0);
    }
    REQUIRE(report.overhead.size() == 2);
    for (const auto& [n, overhead] : report.overhead) REQUIRE(std::isfinite(overhead));
}

TEST_CASE("doubling the sequence length lands in the quadratic regime") {
    // The attention terms grow 4x from N=256 to N=512 while projections and
    // the MLP grow 2x; on the reference shape the flop model predicts ~2.8x,
    // so the measured ratio should sit well above linear scaling.
    const ModelConfig cfg = make_config(2, 8, 64, 256);
    const Model model = make_random_model(cfg, 61);
    InlineRescale rescale;
    rescale.boundaries = {2, 1};
    rescale.thresholds = {0.22, 0.01};
    rescale.g_perc = 1.16;
    rescale.g_reas = 1.30;
    const auto report = timing_harness(model, {256, 512}, rescale, 7, 2, 5);
    double t256 = 0, t512 = 0;
    for (const auto& row : report.rows) {
        if (row.mode != TimingMode::vanilla) continue;
        if (row.length == 256) t256 = row.median_s;
        if (row.length == 512) t512 = row.median_s;
    }
    const double measured = t512 / t256;
    const auto f256 = flop_estimate(cfg, 256);
    const auto f512 = flop_estimate(cfg, 512);
    const double predicted = f512.block_vanilla() / f256.block_vanilla();
    REQUIRE(predicted == Catch::Approx(2.83).margin(0.05));
    REQUIRE(measured > 2.0);
    REQUIRE(measured < 6.0);
}

TEST_CASE("a one-cell sweep returns that cell") {
    const auto result = sweep({{"x", {3.0}}},
                              [](const std::vector<double>& c, std::uint64_t) { return c[0]; },
                              {1});
    REQUIRE(result.cells.size() == 1);
    REQUIRE(result.has_best);
    REQUIRE(result.best().score == 3.0);
}

TEST_CASE("sweeps are deterministic and keep going past cell failures") {
    auto evaluator = [](const std::vector<double>& c, std::uint64_t seed) {
        if (c[0] == 2.0 && c[1] == 1.0) throw validation_error("poisoned cell");
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(c[0] * 10 + c[1])));
        return rng.uniform() + c[0];
    };
    const std::vector<SweepAxis> axes{{"a", {1.0, 2.0, 3.0}}, {"b", {1.0, 2.0}}};
    const std::vector<std::uint64_t> seeds{4, 5, 6};
    const auto r1 = sweep(axes, evaluator, seeds, 2);
    const auto r2 = sweep(axes, evaluator, seeds, 3);
    REQUIRE(grid_csv(r1, 1).substr(30) == grid_csv(r2, 1).substr(30));

    int failed = 0;
    for (const auto& cell : r1.cells)
        if (!cell.ok) {
            ++failed;
            REQUIRE(cell.error.find("poisoned") != std::string::npos);
        }
    REQUIRE(failed == 1);
    REQUIRE(r1.has_best);
    REQUIRE(r1.best().coords[0] == 3.0);
}

TEST_CASE("boundary sweep peaks where the planted bands are bracketed") {
    const ModelConfig cfg = make_config(4, 4, 32, 64);
    PlantedSpec spec;
    spec.planted_perception = {{1, 0}}; // layer 2, 1-based
    spec.planted_reasoning = {{2, 1}};  // layer 3
    spec.seed = 71;
    const Model model = generate_planted_model(cfg, spec);

    std::vector<double> layers{1, 2, 3, 4};
    const auto result = sweep(
        {{"perc_last", layers}, {"reas_first", layers}},
        [&](const std::vector<double>& c, std::uint64_t seed) {
            return recover_planted_heads(model, spec,
                                         {static_cast<int>(c[0]), static_cast<int>(c[1])},
                                         {0.75, 0.25}, 3, seed)
                .mean();
        },
        {811, 812});
    REQUIRE(result.has_best);
    REQUIRE(result.best().score == 1.0);
    // Bracketing means perc_last >= 2 and reas_first <= 3; anything else
    // misses a planted head and scores below one.
    REQUIRE(result.best().coords[0] >= 2.0);
    REQUIRE(result.best().coords[1] <= 3.0);
    for (const auto& cell : result.cells) {
        const bool brackets = cell.coords[0] >= 2.0 && cell.coords[1] <= 3.0;
        if (!brackets) REQUIRE(cell.score < 1.0);
    }
}

TEST_CASE("task accuracy rises with the planted head's gain") {
    TaskSpec spec;
    spec.seed = 17;
    const TaskModel tm = make_task_model(spec);
    GateTensor low = GateTensor::ones(1, spec.num_heads);
    low(0, spec.planted_head) = 0.4;
    GateTensor unit = GateTensor::ones(1, spec.num_heads);
    GateTensor high = GateTensor::ones(1, spec.num_heads);
    high(0, spec.planted_head) = 1.6;

    const double acc_low = task_accuracy(tm, low, 150, 2024);
    const double acc_unit = task_accuracy(tm, unit, 150, 2024);
    const double acc_high = task_accuracy(tm, high, 150, 2024);
    REQUIRE(acc_high >= acc_unit);
    REQUIRE(acc_unit > acc_low);
    REQUIRE(acc_high > 0.8);
}

TEST_CASE("sampled alignment deltas respect the expectation ordering") {
    Rng rng(91);
    std::vector<Matrix> outs;
    for (int h = 0; h < 6; ++h) {
        Matrix o(5, 4);
        for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] = 0.05 + 0.5 * rng.uniform();
        outs.push_back(o);
    }
    const Matrix w_o = Matrix::identity(24);
    const std::vector<bool> enhance{true, true, false, false, false, false};
    Vec base(24, 1.0); // positive utility for every head by construction

    const auto stats = sample_alignment_deltas(outs, w_o, enhance, 1.3, 0.7, 1000, 13, base, 0.5);
    REQUIRE(stats.mean_enhance > 0.0);
    REQUIRE(stats.mean_attenuate <= 0.0);
    REQUIRE(stats.mean_bipolar <= stats.mean_enhance);
}
