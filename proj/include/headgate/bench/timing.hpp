#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <vector>

#include "headgate/bench/planted.hpp"
#include "headgate/forward.hpp"

namespace headgate::bench {

// Multiply-add counts for one attention block at sequence length n,
// following the usual cost split: input projections (t1), score computation
// (t2), softmax traversal (t3), value aggregation (t4), output projection
// (t5). The gated+ratio pass adds exactly one ratio traversal of the H
// attention matrices (H * n^2 adds) plus the per-head gain scaling.
struct FlopEstimate {
    double t1 = 0, t2 = 0, t3 = 0, t4 = 0, t5 = 0;
    double ratio_extra = 0; // H * n^2, the per-entry ratio accumulation
    double gate_extra = 0;  // H * n * d_v gain multiplies
    double mlp = 0;

    double block_vanilla() const { return t1 + t2 + t3 + t4 + t5 + mlp; }
    double block_ours() const { return block_vanilla() + ratio_extra + gate_extra; }
};

inline FlopEstimate flop_estimate(const ModelConfig& cfg, int n) {
    FlopEstimate f;
    const double N = n;
    const double d = cfg.d_model;
    const double H = cfg.num_heads;
    f.t1 = 3.0 * N * d * d;
    f.t2 = H * N * N * cfg.d_k;
    f.t3 = H * N * N;
    f.t4 = H * N * N * cfg.d_v;
    f.t5 = N * d * d;
    f.ratio_extra = H * N * N;
    f.gate_extra = H * N * cfg.d_v;
    f.mlp = cfg.use_mlp ? 2.0 * N * d * cfg.d_ff : 0.0;
    return f;
}

enum class TimingMode { vanilla, gated_ratio };

inline const char* timing_mode_name(TimingMode m) {
    return m == TimingMode::vanilla ? "vanilla" : "gated+ratio";
}

struct TimingRow {
    int length = 0;
    TimingMode mode = TimingMode::vanilla;
    int repetitions = 0;
    double mean_s = 0;
    double median_s = 0;
    double p25_s = 0;
    double p75_s = 0;
    bool timer_warning = false; // median too close to clock resolution
};

struct TimingReport {
    std::vector<TimingRow> rows;
    // One entry per length: gated median / vanilla median - 1.
    std::vector<std::pair<int, double>> overhead;
    std::vector<std::pair<int, FlopEstimate>> flops;
};

namespace detail {

inline double percentile(std::vector<double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace detail

// Wall-clock comparison of the plain forward against the forward that
// computes per-head visual ratios and applies class gains inline. Runs
// serially on one thread; reports median and quartiles over >= `reps`
// repetitions after warmup.
inline TimingReport timing_harness(const Model& model, const std::vector<int>& lengths,
                                   const InlineRescale& rescale_template, int reps = 30,
                                   int warmup = 5, std::uint64_t seed = 1) {
    if (reps < 1) throw validation_error("timing: need at least one repetition");
    TimingReport report;
    volatile double sink = 0.0; // keeps the forwards from being optimized out

    for (int n : lengths) {
        const TokenSequence seq =
            make_modality_sequence(model.config, n, 0.5, Rng::derive(seed, 1234 + n));
        InlineRescale rescale = rescale_template;
        rescale.partition = ModalityPartition::from_labels(seq.modality);

        ForwardOptions vanilla;
        vanilla.capture_trace = false;
        ForwardOptions gated;
        gated.capture_trace = false;
        gated.rescale = &rescale;

        // Repetitions alternate between the modes so slow machine drift
        // lands on both sides equally.
        std::vector<double> samples[2];
        samples[0].reserve(static_cast<std::size_t>(reps));
        samples[1].reserve(static_cast<std::size_t>(reps));
        for (int w = 0; w < warmup; ++w) {
            sink = sink + model_forward(model, seq, vanilla).logits(0, 0);
            sink = sink + model_forward(model, seq, gated).logits(0, 0);
        }
        for (int r = 0; r < reps; ++r) {
            for (int m = 0; m < 2; ++m) {
                const ForwardOptions& opts = m == 0 ? vanilla : gated;
                const auto t0 = std::chrono::steady_clock::now();
                const auto res = model_forward(model, seq, opts);
                const auto t1 = std::chrono::steady_clock::now();
                sink = sink + res.logits(0, 0);
                samples[m].push_back(std::chrono::duration<double>(t1 - t0).count());
            }
        }

        double medians[2] = {0, 0};
        for (int m = 0; m < 2; ++m) {
            std::sort(samples[m].begin(), samples[m].end());
            TimingRow row;
            row.length = n;
            row.mode = m == 0 ? TimingMode::vanilla : TimingMode::gated_ratio;
            row.repetitions = reps;
            row.mean_s = std::accumulate(samples[m].begin(), samples[m].end(), 0.0) /
                         static_cast<double>(samples[m].size());
            row.median_s = detail::percentile(samples[m], 0.5);
            row.p25_s = detail::percentile(samples[m], 0.25);
            row.p75_s = detail::percentile(samples[m], 0.75);
            row.timer_warning = row.median_s < 1e-5;
            report.rows.push_back(row);
            medians[m] = row.median_s;
        }
        report.overhead.push_back({n, medians[1] / medians[0] - 1.0});
        report.flops.push_back({n, flop_estimate(model.config, n)});
    }
    (void)sink;
    return report;
}

} // namespace headgate::bench
