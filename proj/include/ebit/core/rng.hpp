#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "ebit/core/tensor.hpp"

namespace ebit {

// Deterministic random source. Gaussian draws use Box-Muller on raw 64-bit
// output instead of std::normal_distribution, whose algorithm is
// implementation-defined; this keeps trajectories reproducible across
// standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        const uint64_t bound = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t r;
        do {
            r = eng_();
        } while (r >= limit);
        return static_cast<int>(r % bound);
    }

    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class T>
    void fill_normal(Tensor<T>& t, double mean = 0.0, double stddev = 1.0) {
        for (int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(mean + stddev * normal());
    }

    template <class T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (int64_t i = 0; i < t.size(); ++i)
            t[i] = static_cast<T>(lo + (hi - lo) * uniform());
    }

    // Derive an independent stream; used for components that must not
    // perturb the main training stream.
    Rng spawn(uint64_t key) {
        uint64_t s = eng_();
        s ^= key * 0x9e3779b97f4a7c15ULL;
        return Rng(s);
    }

    std::string save_state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        if (is.fail()) throw CheckpointError("could not parse rng state");
    }

    bool operator==(const Rng& o) const { return eng_ == o.eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace ebit
