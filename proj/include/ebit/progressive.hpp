#pragma once

#include <algorithm>
#include <string>

#include "ebit/core/error.hpp"

namespace ebit {

// Channel widths across resolution levels. Widths double from the topmost
// planned level downward and are capped, so each growth step prepends a
// block whose output width equals the entry width one level below.
struct ChannelPlan {
    int num_levels = 3;       // highest planned level
    int base_resolution = 16; // image side at level 1
    int top_width = 32;       // entry width at level num_levels
    int max_width = 256;      // width cap
    int stem_min_res = 4;     // trunks pool down to this before pooling to a vector

    int resolution(int level) const { return base_resolution << (level - 1); }

    // Channel count right after the from-image adapter at `level`.
    int entry_width(int level) const {
        if (level < 1 || level > num_levels)
            throw ConfigError("level " + std::to_string(level) + " outside plan (1.." +
                              std::to_string(num_levels) + ")");
        const long long w = static_cast<long long>(top_width) << (num_levels - level);
        return static_cast<int>(std::min<long long>(w, max_width));
    }

    // Width below level 1, k pools under the base resolution (k >= 1).
    int stem_width(int k) const {
        const long long w = (static_cast<long long>(top_width) << (num_levels - 1)) << k;
        return static_cast<int>(std::min<long long>(w, max_width));
    }

    int stem_depth() const {
        int depth = 0;
        for (int r = base_resolution; r > stem_min_res; r /= 2) ++depth;
        return depth;
    }

    void validate() const {
        if (num_levels < 1) throw ConfigError("channel plan needs at least one level");
        if (base_resolution < stem_min_res || (base_resolution & (base_resolution - 1)) != 0)
            throw ConfigError("base resolution must be a power of two >= stem_min_res");
        if (top_width < 1 || max_width < top_width)
            throw ConfigError("channel plan widths must satisfy 1 <= top_width <= max_width");
    }
};

struct ProgressiveState {
    int level = 1;          // s
    double omega = 1.0;     // transition factor, 1 while s == 1
    long long samples_seen = 0;  // m
    long long stage_budget = 0;  // N
    int mcmc_steps = 16;    // K

    void validate() const {
        if (level < 1) throw ConfigError("progressive level must be >= 1");
        if (omega < 0.0 || omega > 1.0) throw ConfigError("omega outside [0,1]");
        if (level == 1 && omega != 1.0) throw ConfigError("omega must be 1 at level 1");
        if (mcmc_steps < 1) throw ConfigError("mcmc step count must be >= 1");
        if (samples_seen < 0) throw ConfigError("samples_seen must be >= 0");
    }
};

// omega <- min(1, m/N), pinned to 1 for the first stage.
inline double update_omega(long long m, long long N, int s) {
    if (N <= 0) throw ConfigError("stage budget N must be positive");
    if (m < 0) throw ConfigError("sample counter m must be non-negative");
    if (s == 1) return 1.0;
    return std::min(1.0, static_cast<double>(m) / static_cast<double>(N));
}

// K(s) = k0 - decrement*(s-1); 16/12/8 for the defaults.
inline int mcmc_step_schedule(int s, int k0 = 16, int decrement = 4) {
    if (s < 1) throw ConfigError("stage index must be >= 1");
    const int k = k0 - decrement * (s - 1);
    if (k < 1)
        throw ConfigError("mcmc step schedule reaches " + std::to_string(k) + " at stage " +
                          std::to_string(s) + "; must stay >= 1");
    return k;
}

}  // namespace ebit
