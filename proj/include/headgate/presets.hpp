#pragma once

#include <string>
#include <vector>

#include "headgate/errors.hpp"
#include "headgate/taxonomy.hpp"

namespace headgate {

// Canned intervention settings for the three supported backbone profiles.
struct Preset {
    std::string name;
    Boundaries boundaries;
    Thresholds thresholds;
    double g_perc = 1.0;
    double g_reas = 1.0;
};

inline const std::vector<Preset>& presets() {
    static const std::vector<Preset> table = {
        {"kimi-vl", {/*perc_last=*/10, /*reas_first=*/5}, {/*tau_perc=*/0.27, /*tau_reas=*/0.01}, 1.20, 1.40},
        {"ocean-r1", {/*perc_last=*/7, /*reas_first=*/3}, {/*tau_perc=*/0.22, /*tau_reas=*/0.01}, 1.16, 1.30},
        {"r1-onevision", {/*perc_last=*/7, /*reas_first=*/3}, {/*tau_perc=*/0.30, /*tau_reas=*/0.01}, 1.20, 1.30},
    };
    return table;
}

inline const Preset& find_preset(const std::string& name) {
    for (const auto& p : presets())
        if (p.name == name) return p;
    throw validation_error("unknown preset: " + name);
}

} // namespace headgate
