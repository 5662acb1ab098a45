#pragma once

#include <cmath>
#include <utility>

#include "ebit/core/ops.hpp"
#include "ebit/core/rng.hpp"

namespace ebit {

struct LangevinConfig {
    double step_size = 1e-3;   // delta
    int num_steps = 16;        // K
    double noise_scale = 1.0;  // multiplier on the sqrt(2*delta) noise term
    bool clamp = true;         // clamp to the image value range after each step
    double clamp_lo = -1.0;
    double clamp_hi = 1.0;

    void validate() const {
        if (step_size <= 0) throw ConfigError("langevin step size must be > 0");
        if (num_steps < 0) throw ConfigError("langevin step count must be >= 0");
        if (noise_scale < 0) throw ConfigError("langevin noise scale must be >= 0");
        if (clamp && clamp_lo >= clamp_hi) throw ConfigError("langevin clamp range empty");
    }
};

// One step of x <- x + delta * grad_x D(x) + noise_scale * sqrt(2*delta) * u.
// `energy` maps a batch Var to per-element energies; labels and the omega of
// the current stage are bound by the caller. The input is never mutated and
// the result carries no graph history.
template <class T, class EnergyFn>
Tensor<T> langevin_step(const Tensor<T>& x, EnergyFn&& energy, const LangevinConfig& cfg,
                        Rng& rng, int step_index = 0) {
    cfg.validate();
    Var<T> xv = Var<T>::leaf(x, true);
    Var<T> e = energy(xv);
    backward(sum_all(e));
    const Tensor<T>& g = xv.grad();
    if (!g.all_finite())
        throw NumericalError("non-finite Langevin gradient at step " +
                             std::to_string(step_index), step_index);

    Tensor<T> out = x;
    const T delta = static_cast<T>(cfg.step_size);
    T* po = out.data();
    const T* pg = g.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] += delta * pg[i];
    if (cfg.noise_scale > 0) {
        const double amp = cfg.noise_scale * std::sqrt(2.0 * cfg.step_size);
        for (int64_t i = 0; i < out.size(); ++i)
            po[i] += static_cast<T>(amp * rng.normal());
    }
    if (cfg.clamp) {
        const T lo = static_cast<T>(cfg.clamp_lo), hi = static_cast<T>(cfg.clamp_hi);
        for (int64_t i = 0; i < out.size(); ++i)
            po[i] = std::min(hi, std::max(lo, po[i]));
    }
    return out;
}

// K applications of langevin_step; K = 0 returns the input unchanged.
template <class T, class EnergyFn>
Tensor<T> langevin_revise(const Tensor<T>& x0, EnergyFn&& energy, const LangevinConfig& cfg,
                          Rng& rng) {
    cfg.validate();
    Tensor<T> x = x0;
    for (int tau = 0; tau < cfg.num_steps; ++tau)
        x = langevin_step(x, energy, cfg, rng, tau);
    return x;
}

}  // namespace ebit
