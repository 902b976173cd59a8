#pragma once

#include <cstdint>
#include <vector>

#include "headgate/ratio.hpp"

namespace headgate {

// Depth boundaries. Layer indices are 1-based in every interface and report:
// perc_last is the last perception-dominant layer, reas_first the first
// reasoning-dominant layer. They are independent; overlap and gap are both
// legal.
struct Boundaries {
    int perc_last = 1;
    int reas_first = 1;

    void validate(int num_layers) const {
        if (perc_last < 1 || perc_last > num_layers || reas_first < 1 || reas_first > num_layers)
            throw validation_error("boundaries: layer indices must lie in [1, L]");
    }
};

struct Thresholds {
    double tau_perc = 0.5; // visual ratio at or above -> perception-eligible
    double tau_reas = 0.1; // visual ratio at or below -> reasoning-eligible

    void validate_ranges() const {
        if (!(tau_perc > 0.0 && tau_perc <= 1.0))
            throw validation_error("thresholds: tau_perc must lie in (0, 1]");
        if (!(tau_reas >= 0.0 && tau_reas < 1.0))
            throw validation_error("thresholds: tau_reas must lie in [0, 1)");
    }

    void validate() const {
        validate_ranges();
        if (!(tau_reas < tau_perc))
            throw validation_error("thresholds: tau_reas must be strictly below tau_perc");
    }
};

enum class HeadLabel : std::uint8_t { unlabeled = 0, perception = 1, reasoning = 2 };

inline const char* label_name(HeadLabel l) {
    switch (l) {
        case HeadLabel::perception: return "perception";
        case HeadLabel::reasoning: return "reasoning";
        default: return "unlabeled";
    }
}

struct HeadClassification {
    std::vector<std::vector<HeadLabel>> label; // [L][H]
    Boundaries boundaries;
    Thresholds thresholds;

    std::size_t num_layers() const { return label.size(); }
    std::size_t num_heads() const { return label.empty() ? 0 : label[0].size(); }

    HeadLabel at(std::size_t layer, std::size_t head) const { return label[layer][head]; }
};

// Label each (layer, head): perception iff layer <= perc_last and
// S_v >= tau_perc; reasoning iff layer >= reas_first and S_v <= tau_reas.
// With tau_reas < tau_perc the two predicates are mutually exclusive, and
// that ordering is enforced by default. Enabling the tie-break relaxes the
// ordering check; a head then qualifying for both labels resolves to
// perception instead of raising the ambiguity error.
inline HeadClassification classify_heads(const RatioProfile& profile, const Boundaries& boundaries,
                                         const Thresholds& thresholds,
                                         bool allow_overlap_tiebreak = false) {
    const int L = static_cast<int>(profile.num_layers());
    const int H = static_cast<int>(profile.num_heads());
    if (allow_overlap_tiebreak) thresholds.validate_ranges();
    else thresholds.validate();
    boundaries.validate(L);

    HeadClassification out;
    out.boundaries = boundaries;
    out.thresholds = thresholds;
    out.label.assign(L, std::vector<HeadLabel>(H, HeadLabel::unlabeled));
    for (int l = 0; l < L; ++l) {
        const int layer_number = l + 1;
        for (int h = 0; h < H; ++h) {
            const double sv = profile.visual_ratio(l, h);
            if (!(sv >= 0.0 && sv <= 1.0))
                throw validation_error("classify_heads: visual ratio outside [0, 1]");
            const bool perc = layer_number <= boundaries.perc_last && sv >= thresholds.tau_perc;
            const bool reas = layer_number >= boundaries.reas_first && sv <= thresholds.tau_reas;
            if (perc && reas) {
                if (!allow_overlap_tiebreak)
                    throw validation_error("classify_heads: head qualifies as both perception "
                                           "and reasoning (overlapping thresholds)");
                out.label[l][h] = HeadLabel::perception;
            } else if (perc) {
                out.label[l][h] = HeadLabel::perception;
            } else if (reas) {
                out.label[l][h] = HeadLabel::reasoning;
            }
        }
    }
    return out;
}

struct ClassificationCounts {
    std::size_t num_perception = 0;
    std::size_t num_reasoning = 0;
    std::size_t num_unlabeled = 0;
    double fraction_perception = 0.0;
    double fraction_reasoning = 0.0;
    double fraction_unlabeled = 0.0;

    std::size_t total() const { return num_perception + num_reasoning + num_unlabeled; }
};

inline ClassificationCounts classification_counts(const HeadClassification& c) {
    ClassificationCounts counts;
    for (const auto& row : c.label) {
        for (HeadLabel l : row) {
            if (l == HeadLabel::perception) ++counts.num_perception;
            else if (l == HeadLabel::reasoning) ++counts.num_reasoning;
            else ++counts.num_unlabeled;
        }
    }
    const double total = static_cast<double>(counts.total());
    if (total > 0) {
        counts.fraction_perception = static_cast<double>(counts.num_perception) / total;
        counts.fraction_reasoning = static_cast<double>(counts.num_reasoning) / total;
        counts.fraction_unlabeled = static_cast<double>(counts.num_unlabeled) / total;
    }
    return counts;
}

} // namespace headgate
