#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "headgate/attribution.hpp"
#include "headgate/bench/planted.hpp"
#include "headgate/bench/task.hpp"
#include "helpers.hpp"

using namespace headgate;

TEST_CASE("token loss of a uniform distribution is log vocab") {
    Matrix logits(3, 50, 0.7);
    REQUIRE(token_loss(logits, 1, 12) == Catch::Approx(std::log(50.0)).margin(1e-12));
}

TEST_CASE("a saturated target drives the loss to zero") {
    Matrix logits(1, 8);
    logits(0, 3) = 30.0;
    REQUIRE(token_loss(logits, 0, 3) < 1e-12);
}

TEST_CASE("token loss matches the exp/sum/log oracle") {
    Rng rng(51);
    Matrix logits = oracle::random_matrix(4, 16, rng, 2.0);
    for (std::size_t pos = 0; pos < 4; ++pos)
        for (int t : {0, 5, 15})
            REQUIRE(token_loss(logits, pos, t) ==
                    Catch::Approx(oracle::token_loss_loops(logits, pos, t)).margin(1e-12));
}

TEST_CASE("token loss rejects bad indices") {
    Matrix logits(2, 4);
    REQUIRE_THROWS_AS(token_loss(logits, 2, 0), validation_error);
    REQUIRE_THROWS_AS(token_loss(logits, 0, 4), validation_error);
    REQUIRE_THROWS_AS(token_loss(logits, 0, -1), validation_error);
}

TEST_CASE("a zero-output head has zero sensitivity") {
    ModelConfig cfg = make_config(2, 2, 8, 16);
    Model model = make_random_model(cfg, 52);
    model.layers[0].heads[1].w_v = Matrix(8, 4); // zero values -> zero head output
    const TokenSequence seq = bench::make_modality_sequence(cfg, 6, 0.5, 53);
    const auto grad = gate_gradients(model, seq, 5, 3);
    REQUIRE(grad.signed_sensitivity(0, 1) == 0.0);
    REQUIRE(grad.signed_sensitivity(0, 0) != 0.0);
}

TEST_CASE("single-layer identity-projection sensitivity matches the closed form") {
    ModelConfig cfg = make_config(1, 2, 8, 12, true, /*use_mlp=*/false);
    Model model = make_random_model(cfg, 54);
    model.layers[0].w_o = Matrix::identity(8);
    const TokenSequence seq = bench::make_modality_sequence(cfg, 5, 0.5, 55);
    const std::size_t pos = 4;
    const int target = 7;

    const auto grad = gate_gradients(model, seq, pos, target);

    // Closed form: with logits = Concat(g_h O_h) W_U and loss at one row,
    // S_h = sum_c (sum_j (p_j - y_j) W_U[slot_h + c, j]) O_h[pos, c].
    const auto res = model_forward_ungated(model, seq);
    const double* row = res.logits.row(pos);
    double mx = row[0];
    for (int j = 1; j < 12; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    std::vector<double> p(12);
    for (int j = 0; j < 12; ++j) {
        p[j] = std::exp(row[j] - mx);
        z += p[j];
    }
    for (int j = 0; j < 12; ++j) p[j] /= z;
    p[target] -= 1.0;

    for (int h = 0; h < 2; ++h) {
        double want = 0.0;
        for (int c = 0; c < 4; ++c) {
            double upstream = 0.0;
            for (int j = 0; j < 12; ++j) upstream += p[j] * model.unembedding(h * 4 + c, j);
            want += upstream * res.trace.head_outputs[0][h](pos, c);
        }
        REQUIRE(grad.signed_sensitivity(0, h) == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("analytic gradients agree with central finite differences") {
    const double delta = 1e-5;
    for (std::uint64_t seed : {101, 202, 303}) {
        const ModelConfig cfg = make_config(3, 4, 32, 48, seed % 2 == 0, /*use_mlp=*/true);
        const Model model = make_random_model(cfg, seed);
        const TokenSequence seq = bench::make_modality_sequence(cfg, 10, 0.5, seed + 1);
        const std::size_t pos = 9;
        const int target = 11;
        const auto grad = gate_gradients(model, seq, pos, target);

        for (int l = 0; l < cfg.num_layers; ++l)
            for (int h = 0; h < cfg.num_heads; ++h) {
                GateTensor gp = GateTensor::ones(cfg.num_layers, cfg.num_heads);
                GateTensor gm = gp;
                gp(l, h) += delta;
                gm(l, h) -= delta;
                const double fd =
                    (token_loss(model_forward_gated(model, seq, gp, false).logits, pos, target) -
                     token_loss(model_forward_gated(model, seq, gm, false).logits, pos, target)) /
                    (2 * delta);
                const double s = grad.signed_sensitivity(l, h);
                if (std::abs(s) > 1e-8)
                    REQUIRE(std::abs(s - fd) / std::abs(s) <= 1e-6);
            }
    }
}

TEST_CASE("single-gate Taylor remainder shrinks quadratically") {
    const ModelConfig cfg = make_config(2, 4, 16, 24);
    const Model model = make_random_model(cfg, 61);
    const TokenSequence seq = bench::make_modality_sequence(cfg, 8, 0.5, 62);
    const std::size_t pos = 7;
    const int target = 3;

    const auto grad = gate_gradients(model, seq, pos, target);
    int best_l = 0, best_h = 0;
    for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 4; ++h)
            if (std::abs(grad.signed_sensitivity(l, h)) >
                std::abs(grad.signed_sensitivity(best_l, best_h))) {
                best_l = l;
                best_h = h;
            }
    const double s = grad.signed_sensitivity(best_l, best_h);
    const double base = token_loss(model_forward_ungated(model, seq, false).logits, pos, target);

    const std::vector<double> steps{1e-2, 5e-3, 2.5e-3, 1.25e-3};
    std::vector<double> log_dg, log_rem;
    for (double dg : steps) {
        GateTensor g = GateTensor::ones(2, 4);
        g(best_l, best_h) += dg;
        const double loss = token_loss(model_forward_gated(model, seq, g, false).logits, pos, target);
        const double remainder = std::abs(loss - base - s * dg);
        REQUIRE(remainder > 0.0);
        log_dg.push_back(std::log(dg));
        log_rem.push_back(std::log(remainder));
    }
    // Least-squares slope in log-log space.
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        mx += log_dg[i];
        my += log_rem[i];
    }
    mx /= steps.size();
    my /= steps.size();
    double num = 0, den = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        num += (log_dg[i] - mx) * (log_rem[i] - my);
        den += (log_dg[i] - mx) * (log_dg[i] - mx);
    }
    const double slope = num / den;
    REQUIRE(slope >= 1.8);
    REQUIRE(slope <= 2.2);
}

TEST_CASE("amplifying the planted copy head lowers the loss") {
    bench::TaskSpec spec;
    spec.seed = 9;
    const bench::TaskModel tm = bench::make_task_model(spec);
    const auto input = bench::make_task_input(tm, 77);
    const int target = input.true_class; // label token id equals the class index
    const auto grad = gate_gradients(tm.model, input.sequence, input.query_position, target);
    REQUIRE(grad.signed_sensitivity(0, spec.planted_head) < 0.0);
}

TEST_CASE("importance normalizations and degenerate flags") {
    GateGradient grad;
    grad.signed_sensitivity = Matrix(2, 3);
    grad.signed_sensitivity(0, 1) = -2.5;
    const auto solo = importance(grad, NormalizationMode::layer_wise);
    REQUIRE(solo.normalized(0, 1) == 1.0);
    REQUIRE(solo.degenerate_layers[1] == 1); // second layer all zero
    REQUIRE(solo.raw(0, 1) == 2.5);

    Rng rng(63);
    GateGradient random;
    random.signed_sensitivity = oracle::random_matrix(4, 5, rng);
    const auto lw = importance(random, NormalizationMode::layer_wise);
    for (std::size_t l = 0; l < 4; ++l) {
        double sum = 0.0;
        for (std::size_t h = 0; h < 5; ++h) sum += lw.normalized(l, h);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }

    const auto global = importance(random, NormalizationMode::global);
    double l1 = 0.0;
    for (std::size_t i = 0; i < random.signed_sensitivity.size(); ++i)
        l1 += std::abs(random.signed_sensitivity.data()[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < global.normalized.size(); ++i) {
        REQUIRE(global.normalized.data()[i] ==
                std::abs(random.signed_sensitivity.data()[i]) / l1);
        total += global.normalized.data()[i];
    }
    REQUIRE(total == Catch::Approx(1.0).margin(1e-12));

    GateGradient zero;
    zero.signed_sensitivity = Matrix(2, 2);
    REQUIRE(importance(zero, NormalizationMode::global).degenerate_total);
}

TEST_CASE("ranking is descending with layer-major tie break") {
    ImportanceMap map;
    map.normalized = Matrix(2, 2);
    map.normalized(0, 0) = 0.1;
    map.normalized(0, 1) = 0.4;
    map.normalized(1, 0) = 0.3;
    map.normalized(1, 1) = 0.2;
    const auto order = rank_heads(map);
    REQUIRE(order[0].layer == 0);
    REQUIRE(order[0].head == 1);
    REQUIRE(order[1].layer == 1);
    REQUIRE(order[1].head == 0);
    REQUIRE(order[3].value == 0.1);

    ImportanceMap ties;
    ties.normalized = Matrix(2, 2, 0.25);
    const auto tied = rank_heads(ties);
    REQUIRE(tied[0].layer == 0);
    REQUIRE(tied[0].head == 0);
    REQUIRE(tied[1].head == 1);
    REQUIRE(tied[2].layer == 1);

    Rng rng(64);
    ImportanceMap random;
    random.normalized = oracle::random_matrix(3, 4, rng);
    const auto got = rank_heads(random);
    auto want = got;
    std::stable_sort(want.begin(), want.end(),
                     [](const RankedHead& a, const RankedHead& b) { return a.value > b.value; });
    for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i].layer == want[i].layer);
        REQUIRE(got[i].head == want[i].head);
    }
}

TEST_CASE("multi-token aggregation is the mean of raw maps") {
    GateGradient a, b;
    a.signed_sensitivity = Matrix(1, 2);
    b.signed_sensitivity = Matrix(1, 2);
    a.signed_sensitivity(0, 0) = -1.0;
    a.signed_sensitivity(0, 1) = 3.0;
    b.signed_sensitivity(0, 0) = 2.0;
    b.signed_sensitivity(0, 1) = -1.0;
    const Matrix mean = mean_raw_importance({a, b});
    REQUIRE(mean(0, 0) == 1.5);
    REQUIRE(mean(0, 1) == 2.0);
    REQUIRE_THROWS_AS(mean_raw_importance({}), validation_error);
}

TEST_CASE("gate gradients validate position and target") {
    const ModelConfig cfg = make_config(1, 2, 8, 16);
    const Model model = make_random_model(cfg, 65);
    const TokenSequence seq = bench::make_modality_sequence(cfg, 4, 0.5, 66);
    REQUIRE_THROWS_AS(gate_gradients(model, seq, 4, 0), validation_error);
    REQUIRE_THROWS_AS(gate_gradients(model, seq, 0, 16), validation_error);
}
