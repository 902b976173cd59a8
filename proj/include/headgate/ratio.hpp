#pragma once

#include <cstddef>
#include <vector>

#include "headgate/matrix.hpp"
#include "headgate/sequence.hpp"
#include "headgate/trace.hpp"

namespace headgate {

// Splits token positions into vision/text and fixes the query set the
// ratios average over. Vision and text are complementary by construction;
// the query set defaults to every position.
struct ModalityPartition {
    std::vector<std::uint8_t> vision_mask; // size N, 1 = vision
    std::vector<int> query_positions;      // non-empty subset of [0, N)

    std::size_t size() const { return vision_mask.size(); }

    std::size_t vision_count() const {
        std::size_t c = 0;
        for (auto v : vision_mask) c += v;
        return c;
    }

    static ModalityPartition from_labels(const std::vector<Modality>& labels) {
        ModalityPartition p;
        p.vision_mask.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            p.vision_mask[i] = labels[i] == Modality::vision ? 1 : 0;
        p.query_positions.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) p.query_positions[i] = static_cast<int>(i);
        return p;
    }

    // Contiguous vision block [start, end), everything else text.
    static ModalityPartition from_vision_range(std::size_t n, std::size_t start, std::size_t end) {
        if (start > end || end > n)
            throw validation_error("partition: vision range out of bounds");
        std::vector<Modality> labels(n, Modality::text);
        for (std::size_t i = start; i < end; ++i) labels[i] = Modality::vision;
        return from_labels(labels);
    }

    void restrict_queries(std::vector<int> positions) {
        query_positions = std::move(positions);
    }

    void validate(std::size_t n) const {
        if (vision_mask.size() != n)
            throw validation_error("partition: size differs from sequence length");
        if (query_positions.empty())
            throw validation_error("partition: query set must be non-empty");
        for (int q : query_positions)
            if (q < 0 || static_cast<std::size_t>(q) >= n)
                throw validation_error("partition: query position out of range");
    }

    // 1.0 where the position belongs to the modality, 0.0 elsewhere.
    std::vector<double> real_mask(Modality m) const {
        std::vector<double> mask(vision_mask.size());
        const std::uint8_t want = m == Modality::vision ? 1 : 0;
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask[i] = vision_mask[i] == want ? 1.0 : 0.0;
        return mask;
    }
};

// sum_j row[j] * mask[j] with four independent accumulator chains. Entries
// off the modality contribute an exact +0.0, so the value is identical to
// summing only the selected entries; the split chains keep the ratio pass
// from serializing on one floating-point dependency.
inline double masked_row_sum(const double* row, const double* mask, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        a0 += row[j] * mask[j];
        a1 += row[j + 1] * mask[j + 1];
        a2 += row[j + 2] * mask[j + 2];
        a3 += row[j + 3] * mask[j + 3];
    }
    for (; j < n; ++j) a0 += row[j] * mask[j];
    return (a0 + a1) + (a2 + a3);
}

// Per-(layer, head) visual attention ratios.
struct RatioProfile {
    Matrix visual_ratio; // L x H, entries in [0, 1]

    std::size_t num_layers() const { return visual_ratio.rows(); }
    std::size_t num_heads() const { return visual_ratio.cols(); }
};

// Fraction of attention mass the queries place on one modality:
// (1/|T_q|) * sum_{i in T_q} sum_{j in T_m} a_ij.
inline double modality_ratio(const Matrix& attention, const ModalityPartition& partition,
                             Modality m) {
    partition.validate(attention.rows());
    if (attention.rows() != attention.cols())
        throw validation_error("modality_ratio: attention matrix must be square");
    const std::vector<double> mask = partition.real_mask(m);
    double total = 0.0;
    for (int q : partition.query_positions)
        total += masked_row_sum(attention.row(static_cast<std::size_t>(q)), mask.data(),
                                attention.cols());
    return total / static_cast<double>(partition.query_positions.size());
}

// Both ratios from one scan per modality. The accumulation pattern is the
// one modality_ratio uses, so the paths agree bit for bit.
inline std::pair<double, double> modality_ratio_pair(const Matrix& attention,
                                                     const ModalityPartition& partition) {
    return {modality_ratio(attention, partition, Modality::vision),
            modality_ratio(attention, partition, Modality::text)};
}

inline RatioProfile ratio_profile(const AttentionTrace& trace, const ModalityPartition& partition) {
    if (!trace.complete())
        throw validation_error("ratio_profile: trace is missing attention entries");
    RatioProfile p;
    p.visual_ratio = Matrix(trace.num_layers(), trace.num_heads());
    for (std::size_t l = 0; l < trace.num_layers(); ++l)
        for (std::size_t h = 0; h < trace.num_heads(); ++h)
            p.visual_ratio(l, h) = modality_ratio(trace.attention[l][h], partition, Modality::vision);
    return p;
}

// Corpus-level profile: plain mean over per-input profiles.
inline RatioProfile average_profiles(const std::vector<RatioProfile>& profiles) {
    if (profiles.empty()) throw validation_error("average_profiles: no profiles given");
    RatioProfile mean;
    mean.visual_ratio = Matrix(profiles[0].visual_ratio.rows(), profiles[0].visual_ratio.cols());
    for (const auto& p : profiles) {
        if (!p.visual_ratio.same_shape(mean.visual_ratio))
            throw validation_error("average_profiles: profile shapes differ");
        add_inplace(mean.visual_ratio, p.visual_ratio);
    }
    scale_inplace(mean.visual_ratio, 1.0 / static_cast<double>(profiles.size()));
    return mean;
}

} // namespace headgate
