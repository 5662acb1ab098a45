#include <catch2/catch_amalgamated.hpp>

#include "ebit/descriptor.hpp"
#include "ebit/langevin.hpp"

using namespace ebit;

namespace {

// D(x) = -1/2 ||x||^2 per batch element for [n,1,1,1] chains.
template <class T>
Var<T> quadratic_energy(const Var<T>& x) {
    const int n = x.dim(0);
    return reshape(scale(global_avg_pool(square(x)), T(-0.5)), Shape{n});
}

LangevinConfig noiseless(double delta, int steps) {
    LangevinConfig cfg;
    cfg.step_size = delta;
    cfg.num_steps = steps;
    cfg.noise_scale = 0.0;
    cfg.clamp = false;
    return cfg;
}

}  // namespace

TEST_CASE("langevin step: noiseless quadratic contraction") {
    Tensor<double> x(Shape{1, 1, 1, 1}, {1.0});
    Rng rng(0);
    auto out = langevin_step(x, quadratic_energy<double>, noiseless(0.01, 1), rng);
    REQUIRE(out[0] == Catch::Approx(0.99).epsilon(1e-12));
    REQUIRE(x[0] == 1.0);  // input not mutated
}

TEST_CASE("langevin revise: K=0 identity, K=2 iterated contraction") {
    Tensor<double> x(Shape{2, 1, 1, 1}, {1.0, -0.5});
    Rng rng(0);
    auto same = langevin_revise(x, quadratic_energy<double>, noiseless(0.01, 0), rng);
    REQUIRE(same[0] == 1.0);
    REQUIRE(same[1] == -0.5);

    auto out = langevin_revise(x, quadratic_energy<double>, noiseless(0.01, 2), rng);
    REQUIRE(out[0] == Catch::Approx(0.9801).epsilon(1e-12));
    REQUIRE(out[1] == Catch::Approx(-0.49005).epsilon(1e-12));
}

TEST_CASE("langevin is reproducible under a fixed seed") {
    LangevinConfig cfg;
    cfg.step_size = 0.01;
    cfg.num_steps = 5;
    cfg.clamp = false;
    Tensor<float> x(Shape{3, 1, 2, 2});
    Rng init(3);
    init.fill_uniform(x, -1.0, 1.0);
    Rng r1(77), r2(77);
    auto a = langevin_revise(x, quadratic_energy<float>, cfg, r1);
    auto b = langevin_revise(x, quadratic_energy<float>, cfg, r2);
    for (int64_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("zero-weight descriptor leaves the input unchanged") {
    ChannelPlan plan;
    plan.num_levels = 1;
    plan.base_resolution = 4;
    plan.top_width = 2;
    plan.max_width = 4;
    plan.stem_min_res = 2;
    Rng rng(5);
    Descriptor<float> d(plan, 2, rng);
    ParamList<float> ps = d.params();
    ps.find("head.W")->mutable_val().fill(0.0f);
    ps.find("head.b")->mutable_val().fill(0.0f);

    Tensor<float> x(Shape{2, 3, 4, 4});
    rng.fill_uniform(x, -0.9, 0.9);
    LangevinConfig cfg;
    cfg.step_size = 0.01;
    cfg.num_steps = 3;
    cfg.noise_scale = 0.0;
    FrozenParams<float> freeze(ps);
    std::vector<int> y{0, 1};
    auto out = langevin_revise(
        x, [&](const Var<float>& v) { return d.energy(v, y, 1.0f); }, cfg, rng);
    for (int64_t i = 0; i < x.size(); ++i) REQUIRE(out[i] == x[i]);
}

TEST_CASE("monotone ascent with zero noise") {
    Tensor<double> x(Shape{4, 1, 1, 1}, {2.0, -1.5, 0.7, -3.0});
    auto energy_of = [](const Tensor<double>& t) {
        double s = 0;
        for (int64_t i = 0; i < t.size(); ++i) s += -0.5 * t[i] * t[i];
        return s;
    };
    Rng rng(0);
    auto cfg = noiseless(0.05, 1);
    double prev = energy_of(x);
    Tensor<double> cur = x;
    for (int step = 0; step < 50; ++step) {
        cur = langevin_step(cur, quadratic_energy<double>, cfg, rng);
        const double e = energy_of(cur);
        REQUIRE(e >= prev);
        prev = e;
    }
}

TEST_CASE("long chains reach the quadratic energy's stationary distribution") {
    // Light version of the acceptance criterion: N(0,1) moments.
    const int chains = 500, steps = 2500;
    LangevinConfig cfg;
    cfg.step_size = 0.01;
    cfg.num_steps = steps;
    cfg.noise_scale = 1.0;
    cfg.clamp = false;
    Tensor<double> x0(Shape{chains, 1, 1, 1});
    Rng init(11);
    init.fill_uniform(x0, -2.0, 2.0);
    Rng rng(123);
    auto x = langevin_revise(x0, quadratic_energy<double>, cfg, rng);
    double mu = 0, m2 = 0;
    for (int i = 0; i < chains; ++i) mu += x[i];
    mu /= chains;
    for (int i = 0; i < chains; ++i) m2 += (x[i] - mu) * (x[i] - mu);
    m2 /= chains;
    REQUIRE(std::abs(mu) < 0.2);
    REQUIRE(m2 > 0.75);
    REQUIRE(m2 < 1.3);
}

TEST_CASE("non-finite gradients raise a numerical error with the step index") {
    Tensor<double> x(Shape{1, 1, 1, 1}, {1.0});
    auto bad_energy = [](const Var<double>& v) {
        const int n = v.dim(0);
        // 1/x diverges at 0; at x=1 the gradient is fine, so scale to blow up.
        return reshape(scale(global_avg_pool(mul(v, v)), std::nan("")), Shape{n});
    };
    Rng rng(0);
    LangevinConfig cfg;
    cfg.step_size = 0.01;
    cfg.num_steps = 4;
    try {
        langevin_revise(x, bad_energy, cfg, rng);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        REQUIRE(e.step_index == 0);
    }
}

TEST_CASE("clamping keeps samples inside the configured range") {
    Tensor<double> x(Shape{8, 1, 1, 1});
    Rng init(7);
    init.fill_uniform(x, -0.5, 0.5);
    LangevinConfig cfg;  // defaults: clamp to [-1, 1]
    cfg.step_size = 0.05;
    cfg.num_steps = 30;
    Rng rng(9);
    auto out = langevin_revise(x, quadratic_energy<double>, cfg, rng);
    for (int64_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] >= -1.0);
        REQUIRE(out[i] <= 1.0);
    }
}

TEST_CASE("config validation") {
    LangevinConfig cfg;
    cfg.step_size = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.step_size = 1e-3;
    cfg.num_steps = -1;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg.num_steps = 4;
    cfg.noise_scale = -0.5;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
}
