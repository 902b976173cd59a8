#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "headgate/errors.hpp"

namespace headgate::bench {

struct SweepAxis {
    std::string name;
    std::vector<double> values;
};

struct SweepCell {
    std::vector<double> coords;
    double score = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string error;
};

struct SweepResult {
    std::vector<SweepAxis> axes;
    std::vector<SweepCell> cells; // row-major over the axes
    std::size_t best_index = 0;
    bool has_best = false;

    const SweepCell& best() const { return cells[best_index]; }
};

// score = f(cell coordinates, seed); a cell's score is the mean over the
// shared seed list.
using CellEvaluator = std::function<double(const std::vector<double>&, std::uint64_t)>;

// Evaluates every cell of the cartesian grid with the same seed set. Cells
// fan out over a small worker pool; each evaluation owns its state, so the
// result is independent of scheduling. Evaluator failures are recorded on
// the cell and the sweep continues. Ties at the maximum resolve to the
// first cell in row-major order.
inline SweepResult sweep(const std::vector<SweepAxis>& axes, const CellEvaluator& evaluator,
                         const std::vector<std::uint64_t>& seeds, int workers = 0) {
    if (axes.empty()) throw validation_error("sweep: need at least one axis");
    if (seeds.empty()) throw validation_error("sweep: need at least one seed");
    std::size_t total = 1;
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw validation_error("sweep: empty axis");
        total *= axis.values.size();
    }

    SweepResult result;
    result.axes = axes;
    result.cells.resize(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        auto& cell = result.cells[idx];
        cell.coords.resize(axes.size());
        for (std::size_t a = axes.size(); a-- > 0;) {
            cell.coords[a] = axes[a].values[rem % axes[a].values.size()];
            rem /= axes[a].values.size();
        }
    }

    auto run_cell = [&](SweepCell& cell) {
        try {
            double acc = 0.0;
            for (std::uint64_t seed : seeds) acc += evaluator(cell.coords, seed);
            cell.score = acc / static_cast<double>(seeds.size());
            cell.ok = true;
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    };

    int n_workers = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
    n_workers = std::max(1, std::min<int>(n_workers, static_cast<int>(total)));
    if (n_workers == 1) {
        for (auto& cell : result.cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t idx = next.fetch_add(1); idx < total; idx = next.fetch_add(1))
                    run_cell(result.cells[idx]);
            });
        for (auto& t : pool) t.join();
    }

    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t idx = 0; idx < total; ++idx) {
        const auto& cell = result.cells[idx];
        if (cell.ok && cell.score > best) {
            best = cell.score;
            result.best_index = idx;
            result.has_best = true;
        }
    }
    return result;
}

} // namespace headgate::bench
