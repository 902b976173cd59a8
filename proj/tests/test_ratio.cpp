#include <catch2/catch_amalgamated.hpp>

#include "headgate/bench/planted.hpp"
#include "headgate/forward.hpp"
#include "headgate/ratio.hpp"
#include "helpers.hpp"

using namespace headgate;

namespace {

ModalityPartition vision_set(std::size_t n, std::initializer_list<int> vision) {
    std::vector<Modality> labels(n, Modality::text);
    for (int i : vision) labels[static_cast<std::size_t>(i)] = Modality::vision;
    return ModalityPartition::from_labels(labels);
}

} // namespace

TEST_CASE("all-vision partition yields ratio one for any attention") {
    Rng rng(31);
    const Matrix a = oracle::random_row_stochastic(6, rng);
    ModalityPartition p = vision_set(6, {0, 1, 2, 3, 4, 5});
    REQUIRE(modality_ratio(a, p, Modality::vision) == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(modality_ratio(a, p, Modality::text) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("uniform attention splits mass by set size") {
    const std::size_t n = 8;
    Matrix a(n, n, 1.0 / static_cast<double>(n));
    ModalityPartition p = vision_set(n, {0, 1, 2, 3});
    REQUIRE(modality_ratio(a, p, Modality::vision) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("ratio matches the scalar double-loop oracle and the partition identity") {
    Rng rng(32);
    const Matrix a = oracle::random_row_stochastic(8, rng);
    ModalityPartition p = vision_set(8, {0, 1, 2});

    double by_loops = 0.0;
    for (int i = 0; i < 8; ++i)
        for (int j : {0, 1, 2}) by_loops += a(i, j);
    by_loops /= 8.0;

    const double sv = modality_ratio(a, p, Modality::vision);
    const double st = modality_ratio(a, p, Modality::text);
    REQUIRE(sv == Catch::Approx(by_loops).margin(1e-14));
    REQUIRE(sv + st == Catch::Approx(1.0).margin(1e-12));

    const auto [pv, pt] = modality_ratio_pair(a, p);
    REQUIRE(pv == Catch::Approx(sv).margin(1e-14));
    REQUIRE(pt == Catch::Approx(st).margin(1e-14));
}

TEST_CASE("empty query set is rejected") {
    Matrix a(4, 4, 0.25);
    ModalityPartition p = vision_set(4, {0});
    p.query_positions.clear();
    REQUIRE_THROWS_AS(modality_ratio(a, p, Modality::vision), validation_error);

    ModalityPartition bad = vision_set(4, {0});
    bad.restrict_queries({7});
    REQUIRE_THROWS_AS(modality_ratio(a, bad, Modality::vision), validation_error);
}

TEST_CASE("moving mass from a text column to a vision column shifts the ratio by eps over |Tq|") {
    const std::size_t n = 8;
    Matrix a(n, n, 1.0 / static_cast<double>(n));
    ModalityPartition p = vision_set(n, {0, 1, 2});
    const double before = modality_ratio(a, p, Modality::vision);
    const double eps = 0.0625;
    a(3, 5) -= eps; // text column
    a(3, 1) += eps; // vision column
    const double after = modality_ratio(a, p, Modality::vision);
    REQUIRE(after - before == Catch::Approx(eps / 8.0).margin(1e-15));
}

TEST_CASE("permuting tokens together with the partition leaves ratios unchanged") {
    const std::size_t n = 6;
    Matrix uniform(n, n, 1.0 / static_cast<double>(n));
    ModalityPartition p = vision_set(n, {0, 3});
    const double base = modality_ratio(uniform, p, Modality::vision);

    const std::vector<int> perm{3, 5, 0, 2, 4, 1};
    std::vector<Modality> permuted_labels(n, Modality::text);
    for (std::size_t i = 0; i < n; ++i) {
        const bool vis = p.vision_mask[i] == 1;
        if (vis) permuted_labels[static_cast<std::size_t>(perm[i])] = Modality::vision;
    }
    // Uniform attention is permutation-invariant, so only the labels move.
    const double permuted =
        modality_ratio(uniform, ModalityPartition::from_labels(permuted_labels), Modality::vision);
    REQUIRE(permuted == base);

    // Full consistency on a real model: permute the sequence and recompute.
    const ModelConfig cfg = make_config(1, 2, 8, 16, /*causal=*/false);
    const Model model = make_random_model(cfg, 33);
    TokenSequence seq = bench::make_modality_sequence(cfg, static_cast<int>(n), 0.5, 34);
    TokenSequence shuffled;
    shuffled.token_ids.resize(n);
    shuffled.modality.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        shuffled.token_ids[static_cast<std::size_t>(perm[i])] = seq.token_ids[i];
        shuffled.modality[static_cast<std::size_t>(perm[i])] = seq.modality[i];
    }
    const auto r1 = model_forward_ungated(model, seq);
    const auto r2 = model_forward_ungated(model, shuffled);
    const double s1 = modality_ratio(r1.trace.attention[0][0],
                                     ModalityPartition::from_labels(seq.modality), Modality::vision);
    const double s2 = modality_ratio(r2.trace.attention[0][0],
                                     ModalityPartition::from_labels(shuffled.modality),
                                     Modality::vision);
    REQUIRE(s1 == Catch::Approx(s2).margin(1e-12));
}

TEST_CASE("profile of a text-only trace is all zeros") {
    AttentionTrace trace;
    trace.attention.resize(2);
    trace.head_outputs.resize(2);
    const std::size_t n = 5;
    for (int l = 0; l < 2; ++l)
        for (int h = 0; h < 3; ++h) {
            Matrix a(n, n);
            for (std::size_t i = 0; i < n; ++i) a(i, 4) = 1.0; // all mass on a text column
            trace.attention[l].push_back(a);
            trace.head_outputs[l].push_back(Matrix(n, 2));
        }
    ModalityPartition p = vision_set(n, {0, 1});
    const RatioProfile profile = ratio_profile(trace, p);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 3; ++h) REQUIRE(profile.visual_ratio(l, h) == 0.0);
}

TEST_CASE("profile entries equal independent per-matrix recomputation") {
    const ModelConfig cfg = make_config(2, 4, 16, 32);
    const Model model = make_random_model(cfg, 35);
    const TokenSequence seq = bench::make_modality_sequence(cfg, 12, 0.5, 36);
    const ModalityPartition p = ModalityPartition::from_labels(seq.modality);
    const auto res = model_forward_ungated(model, seq);
    const RatioProfile profile = ratio_profile(res.trace, p);
    REQUIRE(profile.num_layers() == 2);
    REQUIRE(profile.num_heads() == 4);
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 4; ++h) {
            REQUIRE(profile.visual_ratio(l, h) ==
                    modality_ratio(res.trace.attention[l][h], p, Modality::vision));
            REQUIRE(profile.visual_ratio(l, h) >= 0.0);
            REQUIRE(profile.visual_ratio(l, h) <= 1.0);
        }

    // Partition identity over every (layer, head) of a real trace.
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 4; ++h) {
            const double sv = modality_ratio(res.trace.attention[l][h], p, Modality::vision);
            const double st = modality_ratio(res.trace.attention[l][h], p, Modality::text);
            REQUIRE(sv + st == Catch::Approx(1.0).margin(1e-12));
        }
}

TEST_CASE("incomplete traces are rejected") {
    AttentionTrace trace;
    REQUIRE_THROWS_AS(ratio_profile(trace, vision_set(4, {0})), validation_error);
}

TEST_CASE("query restriction mimics decode-time ratios") {
    Rng rng(37);
    const Matrix a = oracle::random_row_stochastic(6, rng);
    ModalityPartition p = vision_set(6, {0, 1});
    p.restrict_queries({4, 5});
    double manual = 0.0;
    for (int i : {4, 5})
        for (int j : {0, 1}) manual += a(i, j);
    manual /= 2.0;
    REQUIRE(modality_ratio(a, p, Modality::vision) == Catch::Approx(manual).margin(1e-14));
}

TEST_CASE("profile averaging is the plain mean") {
    RatioProfile p1, p2;
    p1.visual_ratio = Matrix(1, 2);
    p2.visual_ratio = Matrix(1, 2);
    p1.visual_ratio(0, 0) = 0.2;
    p1.visual_ratio(0, 1) = 0.8;
    p2.visual_ratio(0, 0) = 0.4;
    p2.visual_ratio(0, 1) = 0.6;
    const RatioProfile mean = average_profiles({p1, p2});
    REQUIRE(mean.visual_ratio(0, 0) == Catch::Approx(0.3).margin(1e-15));
    REQUIRE(mean.visual_ratio(0, 1) == Catch::Approx(0.7).margin(1e-15));
    REQUIRE_THROWS_AS(average_profiles({}), validation_error);
}
