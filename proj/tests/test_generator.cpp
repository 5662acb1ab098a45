#include <catch2/catch_amalgamated.hpp>

#include "ebit/generator.hpp"
#include "helpers.hpp"

using namespace ebit;
using ebit::test::check_gradients;

namespace {

ChannelPlan tiny_plan(int levels = 1, int base_res = 4) {
    ChannelPlan p;
    p.num_levels = levels;
    p.base_resolution = base_res;
    p.top_width = 2;
    p.max_width = 4;
    p.stem_min_res = 2;
    return p;
}

Tensor<double> random_images(int n, int res, Rng& rng) {
    Tensor<double> x(Shape{n, 3, res, res});
    rng.fill_uniform(x, -1.0, 1.0);
    return x;
}

Var<double> energies_from(std::vector<double> v) {
    Shape s{static_cast<int>(v.size())};
    return Var<double>::leaf(Tensor<double>(s, std::move(v)), false);
}

}  // namespace

TEST_CASE("style generator: determinism, default dimension, zero branch") {
    Rng rng(1);
    StyleGenerator<double> g(16, 32, 2, 64, 3, rng);
    Tensor<double> z(Shape{2, 16});
    rng.fill_normal(z);
    auto c1 = g.generate(z, {0, 2});
    auto c2 = g.generate(z, {0, 2});
    REQUIRE(c1.shape() == Shape{2, 64});
    for (int64_t i = 0; i < c1.size(); ++i) REQUIRE(c1.val()[i] == c2.val()[i]);

    REQUIRE_THROWS_AS(g.generate(z, {0, 3}), DomainError);

    // Zero the final branch weights: output equals the branch bias.
    ParamList<double> ps = g.params();
    ps.find("branch.W")->mutable_val().fill(0.0);
    Var<double> b = *ps.find("branch.b");
    for (int64_t i = 0; i < b.size(); ++i) b.mutable_val()[i] = 0.25;
    auto c3 = g.generate(z, {1, 1});
    for (int64_t i = 0; i < c3.size(); ++i) REQUIRE(c3.val()[i] == Catch::Approx(0.25));
}

TEST_CASE("style encoder: shape, head isolation, hand-computed forward") {
    Rng rng(2);
    StyleEncoder<double> e(tiny_plan(), 64, 2, rng);
    Tensor<double> x = random_images(3, 4, rng);
    auto c = e.encode(x, {0, 1, 0}, 1.0);
    REQUIRE(c.shape() == Shape{3, 64});

    auto before = e.encode(x, {1, 1, 1}, 1.0);
    ParamList<double> ps = e.params();
    Var<double> W = *ps.find("head.W");
    const int feat = W.dim(1);
    for (int f = 0; f < 64 * feat; ++f) W.mutable_val()[f] += 3.0;  // rows of head 0
    auto after = e.encode(x, {1, 1, 1}, 1.0);
    for (int64_t i = 0; i < before.size(); ++i) REQUIRE(before.val()[i] == after.val()[i]);

    // Degenerate 1-pixel config: manual matrix arithmetic.
    ChannelPlan p1;
    p1.num_levels = 1;
    p1.base_resolution = 1;
    p1.top_width = 1;
    p1.max_width = 1;
    p1.stem_min_res = 1;
    Rng rng2(3);
    StyleEncoder<double> tinyenc(p1, 2, 2, rng2);
    ParamList<double> tp = tinyenc.params();
    for (auto& [name, v] : tp.items()) v.mutable_val().fill(0.0);
    tp.find("trunk.from_img.l1.W")->raw()->val[0] = 2.0;  // channel 0 weight
    // head: [D*dc, feat] = [4, 1]; domain 1 rows are {2,3}
    tp.find("head.W")->raw()->val[2] = 3.0;
    tp.find("head.W")->raw()->val[3] = -1.0;
    tp.find("head.b")->raw()->val[3] = 0.5;
    Tensor<double> px(Shape{1, 3, 1, 1});
    px[0] = 0.5;
    auto code = tinyenc.encode(px, {1}, 1.0);
    // trunk: lrelu(2*0.5) = 1 -> code = [3*1, -1*1 + 0.5]
    REQUIRE(code.val()[0] == Catch::Approx(3.0));
    REQUIRE(code.val()[1] == Catch::Approx(-0.5));
}

TEST_CASE("translator: shape, bounded range, determinism") {
    Rng rng(4);
    Translator<double> t(tiny_plan(), 8, 1, rng);
    // Inflate weights to drive tanh toward saturation; range must hold.
    for (auto& [name, v] : t.params().items())
        for (int64_t i = 0; i < v.size(); ++i) v.mutable_val()[i] *= 5.0;
    Tensor<double> x = random_images(2, 4, rng);
    Tensor<double> ct(Shape{2, 8});
    rng.fill_normal(ct);
    Var<double> c = Var<double>::constant(ct);
    auto out1 = t.translate(x, c, 1.0);
    REQUIRE(out1.shape() == x.shape());
    for (int64_t i = 0; i < out1.size(); ++i) {
        REQUIRE(out1.val()[i] >= -1.0);
        REQUIRE(out1.val()[i] <= 1.0);
    }
    auto out2 = t.translate(x, c, 1.0);
    for (int64_t i = 0; i < out1.size(); ++i) REQUIRE(out1.val()[i] == out2.val()[i]);

    Tensor<double> bad_codes(Shape{3, 8});
    REQUIRE_THROWS_AS(t.translate(x, Var<double>::constant(bad_codes), 1.0), ShapeError);
}

TEST_CASE("mcmc teaching loss arithmetic") {
    Tensor<double> a(Shape{2, 1, 2, 2}, 0.5);
    Var<double> av = Var<double>::constant(a);
    REQUIRE(mcmc_teaching_loss(a, av).val()[0] == 0.0);

    Tensor<double> b(Shape{2, 1, 2, 2}, 1.0);
    REQUIRE(mcmc_teaching_loss(b, av).val()[0] == Catch::Approx(0.25));

    Tensor<double> half(Shape{1, 1, 2, 2}, {1.0, 1.0, 0.0, 0.0});
    Tensor<double> zero(Shape{1, 1, 2, 2});
    REQUIRE(mcmc_teaching_loss(half, Var<double>::constant(zero)).val()[0] ==
            Catch::Approx(0.5));

    Tensor<double> wrong(Shape{1, 1, 2, 2});
    REQUIRE_THROWS_AS(mcmc_teaching_loss(wrong, av), ShapeError);
}

TEST_CASE("diversity loss arithmetic and sign") {
    Tensor<double> a(Shape{2, 3, 2, 2}, 0.3);
    Var<double> av = Var<double>::constant(a);
    REQUIRE(diversity_loss(av, av).val()[0] == 0.0);

    Tensor<double> b(Shape{2, 3, 2, 2}, 1.3);
    REQUIRE(diversity_loss(av, Var<double>::constant(b)).val()[0] == Catch::Approx(-1.0));
    Tensor<double> c(Shape{2, 3, 2, 2}, 0.5);
    REQUIRE(diversity_loss(av, Var<double>::constant(c)).val()[0] == Catch::Approx(-0.2));

    Rng rng(5);
    Tensor<double> r1(Shape{2, 3, 2, 2});
    Tensor<double> r2(Shape{2, 3, 2, 2});
    rng.fill_normal(r1);
    rng.fill_normal(r2);
    REQUIRE(diversity_loss(Var<double>::constant(r1), Var<double>::constant(r2)).val()[0] <=
            0.0);
}

TEST_CASE("cycle loss arithmetic") {
    Tensor<double> x(Shape{1, 3, 2, 2}, 0.5);
    REQUIRE(cycle_loss(x, Var<double>::constant(x)).val()[0] == 0.0);

    Tensor<double> shifted(Shape{1, 3, 2, 2}, 0.8);
    REQUIRE(cycle_loss(x, Var<double>::constant(shifted)).val()[0] == Catch::Approx(0.3));

    Tensor<double> negated(Shape{1, 3, 2, 2}, -0.5);
    REQUIRE(cycle_loss(x, Var<double>::constant(negated)).val()[0] == Catch::Approx(1.0));
}

TEST_CASE("style reconstruction loss arithmetic") {
    Tensor<double> c(Shape{2, 4}, 0.7);
    REQUIRE(style_recon_loss(Var<double>::constant(c), Var<double>::constant(c)).val()[0] ==
            0.0);
    Tensor<double> off(Shape{2, 4}, 0.8);
    REQUIRE(style_recon_loss(Var<double>::constant(c), Var<double>::constant(off)).val()[0] ==
            Catch::Approx(0.1));
    Tensor<double> zero(Shape{1, 3});
    Tensor<double> two(Shape{1, 3}, {2.0, -2.0, 2.0});
    REQUIRE(style_recon_loss(Var<double>::constant(zero), Var<double>::constant(two)).val()[0] ==
            Catch::Approx(2.0));
}

TEST_CASE("mode loss: sign convention and monotonicity") {
    ChannelPlan p1;
    p1.num_levels = 1;
    p1.base_resolution = 1;
    p1.top_width = 1;
    p1.max_width = 1;
    p1.stem_min_res = 1;
    Rng rng(6);
    Descriptor<double> d(p1, 2, rng);
    ParamList<double> ps = d.params();
    for (auto& [name, v] : ps.items()) v.mutable_val().fill(0.0);

    Tensor<double> img(Shape{2, 3, 1, 1}, 0.4);
    Var<double> iv = Var<double>::constant(img);
    REQUIRE(mode_loss(iv, {0, 1}, d, 1.0).val()[0] == 0.0);

    ps.find("head.b")->mutable_val().fill(4.0);  // constant D = 4
    REQUIRE(mode_loss(iv, {0, 1}, d, 1.0).val()[0] == Catch::Approx(-4.0));

    ps.find("head.b")->mutable_val().fill(5.0);
    REQUIRE(mode_loss(iv, {0, 1}, d, 1.0).val()[0] < -4.0);
}

TEST_CASE("weighted translator objective arithmetic") {
    // Component values (0.25, -0.2, 0.3, 0.1, -4.0) with unit weights.
    Tensor<double> xt(Shape{1, 1, 2, 2}, 0.5);
    Tensor<double> xh(Shape{1, 1, 2, 2}, 1.0);
    double teach = mcmc_teaching_loss(xt, Var<double>::constant(xh)).val()[0];

    Tensor<double> o1(Shape{1, 1, 2, 2}, 0.1);
    Tensor<double> o2(Shape{1, 1, 2, 2}, 0.3);
    double diverse =
        diversity_loss(Var<double>::constant(o1), Var<double>::constant(o2)).val()[0];

    Tensor<double> x(Shape{1, 1, 2, 2}, 0.0);
    Tensor<double> xc(Shape{1, 1, 2, 2}, 0.3);
    double cycle = cycle_loss(x, Var<double>::constant(xc)).val()[0];

    Tensor<double> ct(Shape{1, 4}, 0.0);
    Tensor<double> cr(Shape{1, 4}, 0.1);
    double style =
        style_recon_loss(Var<double>::constant(ct), Var<double>::constant(cr)).val()[0];

    double mode = -4.0;
    LossWeights w;
    const double total = teach + w.diverse * diverse + w.cycle * cycle + w.style * style +
                         w.mode * mode;
    REQUIRE(teach == Catch::Approx(0.25));
    REQUIRE(diverse == Catch::Approx(-0.2));
    REQUIRE(cycle == Catch::Approx(0.3));
    REQUIRE(style == Catch::Approx(0.1));
    REQUIRE(total == Catch::Approx(-3.55));
}

TEST_CASE("translator objective: zero weights and matching teach target give zero") {
    Rng rng(7);
    ChannelPlan plan = tiny_plan();
    Translator<double> tr(plan, 4, 1, rng);
    StyleEncoder<double> enc(plan, 4, 2, rng);
    StyleGenerator<double> gen(3, 8, 1, 4, 2, rng);
    Descriptor<double> desc(plan, 2, rng);

    Tensor<double> x = random_images(2, 4, rng);
    std::vector<int> y{0, 1}, yp{1, 0};
    Tensor<double> z(Shape{2, 3});
    Tensor<double> z2(Shape{2, 3});
    rng.fill_normal(z);
    rng.fill_normal(z2);

    TeachingCode<double> code;
    code.from_generator = true;
    code.z = z;

    // x_tilde equal to the translator output itself.
    Var<double> c = gen.generate(z, yp);
    Tensor<double> x_tilde = tr.translate(x, c, 1.0).val();

    LossWeights w;
    w.diverse = w.cycle = w.style = w.mode = 0.0;
    auto losses = translator_objective(tr, enc, gen, desc, x, y, yp, x_tilde, code, z2, w, 1.0);
    REQUIRE(losses.total.val()[0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(losses.teach == Catch::Approx(0.0).margin(1e-15));

    LossWeights defaults;
    REQUIRE(defaults.energy == 1.0);
    REQUIRE(defaults.diverse == 1.0);
    REQUIRE(defaults.cycle == 1.0);
    REQUIRE(defaults.style == 1.0);
    REQUIRE(defaults.mode == 1.0);
}

TEST_CASE("translator objective isolates descriptor parameters") {
    Rng rng(8);
    ChannelPlan plan = tiny_plan();
    Translator<double> tr(plan, 4, 1, rng);
    StyleEncoder<double> enc(plan, 4, 2, rng);
    StyleGenerator<double> gen(3, 8, 1, 4, 2, rng);
    Descriptor<double> desc(plan, 2, rng);

    Tensor<double> x = random_images(2, 4, rng);
    std::vector<int> y{0, 1}, yp{1, 1};
    TeachingCode<double> code;
    code.from_generator = true;
    code.z = Tensor<double>(Shape{2, 3});
    Rng zr(9);
    zr.fill_normal(code.z);
    Tensor<double> z2(Shape{2, 3});
    zr.fill_normal(z2);
    Tensor<double> x_tilde = random_images(2, 4, zr);

    ParamList<double> dparams = desc.params();
    LossWeights w;
    {
        FrozenParams<double> freeze(dparams);
        auto losses =
            translator_objective(tr, enc, gen, desc, x, y, yp, x_tilde, code, z2, w, 1.0);
        backward(losses.total);
    }
    for (auto& [name, v] : dparams.items()) REQUIRE(v.raw()->grad.size() == 0);
    for (auto& [name, v] : tr.params().items()) REQUIRE(v.raw()->grad.size() == v.size());
    for (auto& [name, v] : enc.params().items()) REQUIRE(v.raw()->grad.size() == v.size());
    for (auto& [name, v] : gen.params().items()) REQUIRE(v.raw()->grad.size() == v.size());

    // Reverse direction: descriptor objective leaves (alpha, phi, beta) alone.
    Tensor<double> synth = random_images(2, 4, zr);
    auto dl = descriptor_objective(desc, x, synth, y, yp, 1.0, 1.0);
    backward(dl.total);
    for (auto& [name, v] : tr.params().items())
        if (v.raw()->grad.size()) REQUIRE(!v.grad().all_finite() == false);
    for (auto& [name, v] : dparams.items()) REQUIRE(v.raw()->grad.size() == v.size());
}

TEST_CASE("translator objective gradients match finite differences") {
    Rng rng(10);
    ChannelPlan plan = tiny_plan();
    Translator<double> tr(plan, 4, 1, rng);
    StyleEncoder<double> enc(plan, 4, 2, rng);
    StyleGenerator<double> gen(3, 8, 1, 4, 2, rng);
    Descriptor<double> desc(plan, 2, rng);

    Tensor<double> x = random_images(2, 4, rng);
    std::vector<int> y{0, 1}, yp{1, 0};
    TeachingCode<double> code;
    code.from_generator = true;
    code.z = Tensor<double>(Shape{2, 3});
    rng.fill_normal(code.z);
    Tensor<double> z2(Shape{2, 3});
    rng.fill_normal(z2);
    Tensor<double> x_tilde = random_images(2, 4, rng);

    std::vector<Var<double>> leaves;
    for (auto& [name, v] : tr.params().items()) leaves.push_back(v);
    for (auto& [name, v] : enc.params().items()) leaves.push_back(v);
    for (auto& [name, v] : gen.params().items()) leaves.push_back(v);

    ParamList<double> dparams = desc.params();
    FrozenParams<double> freeze(dparams);
    LossWeights w;
    auto build = [&] {
        return translator_objective(tr, enc, gen, desc, x, y, yp, x_tilde, code, z2, w, 1.0)
            .total;
    };
    auto res = check_gradients(build, leaves, 1e-4, 1e-3);
    INFO("max rel err " << res.max_rel);
    REQUIRE(res.frac_within >= 0.95);
    REQUIRE(res.max_rel < 1e-2);
}
