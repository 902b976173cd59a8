#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "headgate/matrix.hpp"
#include "headgate/taxonomy.hpp"
#include "headgate/trace.hpp"

namespace headgate {

// class_gains is the default intervention: amplify perception heads by
// g_perc, reasoning heads by g_reas, leave the rest at 1. The other four
// strategies are the generic enhance/attenuate patterns used to compare
// editing policies:
//   selective_enhancement:  enhance set -> alpha, others 1
//   selective_attenuation:  attenuate set -> beta, others 1
//   bipolar_scaling:        enhance set -> alpha, every other head -> beta
//   mixed:                  enhance -> alpha, attenuate -> beta, neutral 1
enum class GainStrategy {
    class_gains,
    selective_enhancement,
    selective_attenuation,
    bipolar_scaling,
    mixed,
};

inline const char* strategy_name(GainStrategy s) {
    switch (s) {
        case GainStrategy::class_gains: return "class_gains";
        case GainStrategy::selective_enhancement: return "selective_enhancement";
        case GainStrategy::selective_attenuation: return "selective_attenuation";
        case GainStrategy::bipolar_scaling: return "bipolar_scaling";
        default: return "mixed";
    }
}

inline GainStrategy parse_strategy(const std::string& name) {
    for (GainStrategy s : {GainStrategy::class_gains, GainStrategy::selective_enhancement,
                           GainStrategy::selective_attenuation, GainStrategy::bipolar_scaling,
                           GainStrategy::mixed})
        if (name == strategy_name(s)) return s;
    throw validation_error("unknown gain strategy: " + name);
}

inline HeadLabel parse_label(const std::string& name) {
    for (HeadLabel l : {HeadLabel::perception, HeadLabel::reasoning, HeadLabel::unlabeled})
        if (name == label_name(l)) return l;
    throw validation_error("unknown head label: " + name);
}

struct GainPolicy {
    GainStrategy strategy = GainStrategy::class_gains;
    double g_perc = 1.0;
    double g_reas = 1.0;
    double alpha = 1.2;
    double beta = 0.8;
    // Which classification labels feed the enhance / attenuate sets.
    std::vector<HeadLabel> enhance_labels = {HeadLabel::perception, HeadLabel::reasoning};
    std::vector<HeadLabel> attenuate_labels = {HeadLabel::unlabeled};

    bool enhances(HeadLabel l) const {
        return std::find(enhance_labels.begin(), enhance_labels.end(), l) != enhance_labels.end();
    }
    bool attenuates(HeadLabel l) const {
        return std::find(attenuate_labels.begin(), attenuate_labels.end(), l) !=
               attenuate_labels.end();
    }

    void validate() const {
        switch (strategy) {
            case GainStrategy::class_gains:
                if (!(g_perc >= 1.0) || !(g_reas >= 1.0))
                    throw validation_error("policy: class gains must be >= 1");
                break;
            case GainStrategy::selective_enhancement:
                if (!(alpha > 1.0))
                    throw validation_error("policy: alpha must be > 1 under enhancement");
                break;
            case GainStrategy::selective_attenuation:
                if (!(beta > 0.0 && beta < 1.0))
                    throw validation_error("policy: beta must lie in (0, 1) under attenuation");
                break;
            case GainStrategy::bipolar_scaling:
            case GainStrategy::mixed:
                if (!(alpha > 1.0) || !(beta > 0.0 && beta < 1.0))
                    throw validation_error("policy: need alpha > 1 and beta in (0, 1)");
                break;
        }
        if (strategy == GainStrategy::mixed) {
            for (HeadLabel l : enhance_labels)
                if (attenuates(l))
                    throw validation_error("policy: enhance and attenuate sets overlap");
        }
    }
};

inline double policy_gain(const GainPolicy& p, HeadLabel label) {
    switch (p.strategy) {
        case GainStrategy::class_gains:
            if (label == HeadLabel::perception) return p.g_perc;
            if (label == HeadLabel::reasoning) return p.g_reas;
            return 1.0;
        case GainStrategy::selective_enhancement:
            return p.enhances(label) ? p.alpha : 1.0;
        case GainStrategy::selective_attenuation:
            return p.attenuates(label) ? p.beta : 1.0;
        case GainStrategy::bipolar_scaling:
            return p.enhances(label) ? p.alpha : p.beta;
        case GainStrategy::mixed:
            if (p.enhances(label)) return p.alpha;
            if (p.attenuates(label)) return p.beta;
            return 1.0;
    }
    return 1.0;
}

// Lift a classification to a full L x H gate tensor under the policy.
inline GateTensor gain_vector(const HeadClassification& classification, const GainPolicy& policy) {
    policy.validate();
    const std::size_t L = classification.num_layers();
    const std::size_t H = classification.num_heads();
    GateTensor gates = GateTensor::ones(static_cast<int>(L), static_cast<int>(H));
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t h = 0; h < H; ++h)
            gates.gains(l, h) = policy_gain(policy, classification.at(l, h));
    gates.validate();
    return gates;
}

namespace detail {

// slot_h(O_h) * W_O without building the concatenation: only the W_O rows
// belonging to head h's slot contribute.
inline Matrix head_slot_projection(const Matrix& head_out, const Matrix& w_o, std::size_t head) {
    const std::size_t d_v = head_out.cols();
    Matrix p(head_out.rows(), w_o.cols());
    for (std::size_t i = 0; i < head_out.rows(); ++i) {
        double* prow = p.row(i);
        const double* orow = head_out.row(i);
        for (std::size_t c = 0; c < d_v; ++c) {
            const double o = orow[c];
            const double* wrow = w_o.row(head * d_v + c);
            for (std::size_t j = 0; j < w_o.cols(); ++j) prow[j] += o * wrow[j];
        }
    }
    return p;
}

inline Matrix gained_sublayer_output(const std::vector<Matrix>& head_outputs, const Matrix& w_o,
                                     const std::vector<double>& gains) {
    const std::size_t n = head_outputs[0].rows();
    const std::size_t d_v = head_outputs[0].cols();
    Matrix concat(n, d_v * head_outputs.size());
    for (std::size_t h = 0; h < head_outputs.size(); ++h)
        for (std::size_t i = 0; i < n; ++i) {
            const double* src = head_outputs[h].row(i);
            double* dst = concat.row(i) + h * d_v;
            for (std::size_t c = 0; c < d_v; ++c) dst[c] = gains[h] * src[c];
        }
    return matmul(concat, w_o);
}

} // namespace detail

struct StrategyDifference {
    Matrix measured;  // Y_X - Y_A, pre-residual
    Matrix predicted; // (beta - 1) * sum over attenuated heads of slot_h(O_h) * W_O
    double max_abs_deviation = 0.0;
};

// The attenuating strategies differ from selective enhancement by exactly
// (beta - 1) times the attenuated heads' aggregate output; both sides are
// evaluated at the pre-residual probe point, after the output projection.
inline StrategyDifference strategy_difference(const std::vector<Matrix>& head_outputs,
                                              const Matrix& w_o, const GainPolicy& policy_a,
                                              const GainPolicy& policy_x,
                                              const std::vector<HeadLabel>& labels) {
    if (head_outputs.empty() || head_outputs.size() != labels.size())
        throw validation_error("strategy_difference: one head output per label required");
    if (policy_a.strategy != GainStrategy::selective_enhancement)
        throw validation_error("strategy_difference: baseline policy must be selective enhancement");
    if (policy_x.strategy != GainStrategy::bipolar_scaling && policy_x.strategy != GainStrategy::mixed)
        throw validation_error("strategy_difference: comparison policy must attenuate (C or D)");
    if (!(policy_x.beta > 0.0 && policy_x.beta <= 1.0))
        throw validation_error("strategy_difference: beta must lie in (0, 1]");

    const std::size_t H = head_outputs.size();
    std::vector<double> gains_a(H), gains_x(H);
    std::vector<bool> attenuated(H, false);
    for (std::size_t h = 0; h < H; ++h) {
        const bool enh_a = policy_a.enhances(labels[h]);
        const bool enh_x = policy_x.enhances(labels[h]);
        if (enh_a != enh_x)
            throw validation_error("strategy_difference: policies disagree on the enhance set");
        gains_a[h] = enh_a ? policy_a.alpha : 1.0;
        if (enh_x) {
            gains_x[h] = policy_x.alpha;
        } else if (policy_x.strategy == GainStrategy::bipolar_scaling ||
                   policy_x.attenuates(labels[h])) {
            gains_x[h] = policy_x.beta;
            attenuated[h] = true;
        } else {
            gains_x[h] = 1.0;
        }
    }
    if (policy_a.alpha != policy_x.alpha)
        throw validation_error("strategy_difference: policies must share alpha");

    StrategyDifference out;
    const Matrix y_a = detail::gained_sublayer_output(head_outputs, w_o, gains_a);
    const Matrix y_x = detail::gained_sublayer_output(head_outputs, w_o, gains_x);
    out.measured = subtracted(y_x, y_a);

    out.predicted = Matrix(head_outputs[0].rows(), w_o.cols());
    for (std::size_t h = 0; h < H; ++h) {
        if (!attenuated[h]) continue;
        add_inplace(out.predicted, detail::head_slot_projection(head_outputs[h], w_o, h));
    }
    scale_inplace(out.predicted, policy_x.beta - 1.0);
    out.max_abs_deviation = max_abs_diff(out.measured, out.predicted);
    return out;
}

struct AlignmentDelta {
    double predicted = 0.0;   // sum_h (gain_h - 1) * u_h
    double exact = 0.0;       // projection of the realized output change onto v
    std::vector<double> head_utilities; // u_h per head
};

// Alignment change of the attention sublayer along a task direction v.
// Utilities are taken post-projection: u_h = <slot_h(O_h) W_O, v> summed
// over positions. The identity is exact at this probe point because the
// sublayer output is linear in each gain.
inline AlignmentDelta alignment_delta(const std::vector<Matrix>& head_outputs, const Matrix& w_o,
                                      const Vec& direction, const std::vector<double>& gains) {
    if (head_outputs.empty() || gains.size() != head_outputs.size())
        throw validation_error("alignment_delta: one gain per head required");
    if (direction.size() != w_o.cols())
        throw validation_error("alignment_delta: direction dimension mismatch");
    double norm = 0.0;
    for (double d : direction) norm += d * d;
    if (!(norm > 0.0)) throw validation_error("alignment_delta: direction must be nonzero");

    AlignmentDelta out;
    out.head_utilities.resize(head_outputs.size());
    for (std::size_t h = 0; h < head_outputs.size(); ++h) {
        const Matrix p = detail::head_slot_projection(head_outputs[h], w_o, h);
        double u = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i) {
            const double* row = p.row(i);
            for (std::size_t j = 0; j < p.cols(); ++j) u += row[j] * direction[j];
        }
        out.head_utilities[h] = u;
        out.predicted += (gains[h] - 1.0) * u;
    }

    const std::vector<double> unit(head_outputs.size(), 1.0);
    const Matrix y1 = detail::gained_sublayer_output(head_outputs, w_o, unit);
    const Matrix yg = detail::gained_sublayer_output(head_outputs, w_o, gains);
    const Matrix diff = subtracted(yg, y1);
    for (std::size_t i = 0; i < diff.rows(); ++i) {
        const double* row = diff.row(i);
        for (std::size_t j = 0; j < diff.cols(); ++j) out.exact += row[j] * direction[j];
    }
    return out;
}

} // namespace headgate
