#pragma once

#include <cstdint>
#include <vector>

#include "headgate/errors.hpp"

namespace headgate::bench {

struct ClassMetrics {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
    long support = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double accuracy = 0.0;
    double weighted_f1 = 0.0;
    long total = 0;
    std::vector<ClassMetrics> per_class; // index i holds class i+1
};

inline double binary_f1(long tp, long fp, long fn) {
    const long denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

// Per-class confusion counts, per-class F1, and the support-weighted
// aggregate. Labels are 1..K. Counting stays in integers; the only floating
// point happens in the final divisions.
inline MetricReport weighted_f1(const std::vector<int>& predictions,
                                const std::vector<int>& labels, int num_classes) {
    if (predictions.size() != labels.size())
        throw validation_error("weighted_f1: prediction/label lengths differ");
    if (predictions.empty()) throw validation_error("weighted_f1: empty input");
    if (num_classes < 1) throw validation_error("weighted_f1: class count must be >= 1");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 1 || labels[i] > num_classes || predictions[i] < 1 ||
            predictions[i] > num_classes)
            throw validation_error("weighted_f1: labels must lie in [1, K]");
    }

    MetricReport report;
    report.total = static_cast<long>(labels.size());
    report.per_class.assign(static_cast<std::size_t>(num_classes), ClassMetrics{});
    long correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        if (y == p) ++correct;
        for (int c = 1; c <= num_classes; ++c) {
            ClassMetrics& m = report.per_class[static_cast<std::size_t>(c - 1)];
            const bool actual = y == c;
            const bool predicted = p == c;
            if (actual && predicted) ++m.tp;
            else if (!actual && predicted) ++m.fp;
            else if (actual && !predicted) ++m.fn;
            else ++m.tn;
        }
    }

    double weighted = 0.0;
    for (auto& m : report.per_class) {
        m.support = m.tp + m.fn;
        m.precision = (m.tp + m.fp) == 0 ? 0.0
                                         : static_cast<double>(m.tp) /
                                               static_cast<double>(m.tp + m.fp);
        m.recall = (m.tp + m.fn) == 0 ? 0.0
                                      : static_cast<double>(m.tp) /
                                            static_cast<double>(m.tp + m.fn);
        m.f1 = binary_f1(m.tp, m.fp, m.fn);
        weighted += (static_cast<double>(m.support) / static_cast<double>(report.total)) * m.f1;
    }
    report.weighted_f1 = weighted;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.total);
    return report;
}

} // namespace headgate::bench
