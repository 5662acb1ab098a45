#pragma once

#include <functional>
#include <vector>

#include "ebit/core/autodiff.hpp"
#include "ebit/core/ops.hpp"

namespace ebit::test {

inline double rel_err(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckResult {
    double max_rel = 0.0;
    double frac_within = 1.0;  // fraction of coordinates within `tight`
    int64_t coords = 0;
};

// Central finite differences against analytic gradients. `build` must
// construct a fresh scalar graph from the current values of `leaves` each
// time it is called.
inline GradCheckResult check_gradients(const std::function<Var<double>()>& build,
                                       std::vector<Var<double>> leaves, double h = 1e-4,
                                       double tight = 1e-3) {
    Var<double> loss = build();
    for (auto& leaf : leaves) leaf.zero_grad();
    backward(loss);
    std::vector<Tensor<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckResult res;
    int64_t within = 0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        Tensor<double>& value = leaves[li].mutable_val();
        for (int64_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            value[i] = orig + h;
            const double fp = build().val()[0];
            value[i] = orig - h;
            const double fm = build().val()[0];
            value[i] = orig;
            const double fd = (fp - fm) / (2 * h);
            const double re = rel_err(analytic[li][i], fd);
            res.max_rel = std::max(res.max_rel, re);
            if (re <= tight) ++within;
            ++res.coords;
        }
    }
    res.frac_within = res.coords ? static_cast<double>(within) / res.coords : 1.0;
    return res;
}

inline Tensor<double> arange_tensor(Shape s, double start = 0.0, double step = 0.1) {
    Tensor<double> t(std::move(s));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = start + step * static_cast<double>(i);
    return t;
}

}  // namespace ebit::test
