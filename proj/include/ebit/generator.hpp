#pragma once

#include <string>
#include <vector>

#include "ebit/descriptor.hpp"

namespace ebit {

// MLP mapping a Gaussian latent to a domain-specific style code through a
// shared trunk and per-domain output branches. Resolution-independent, so it
// is never expanded.
template <class T>
class StyleGenerator {
public:
    StyleGenerator() = default;

    StyleGenerator(int latent_dim, int hidden, int num_layers, int style_dim, int num_domains,
                   Rng& rng)
        : latent_dim_(latent_dim), style_dim_(style_dim), domains_(num_domains) {
        if (num_layers < 1) throw ConfigError("style generator needs >= 1 hidden layer");
        int in = latent_dim;
        for (int i = 0; i < num_layers; ++i) {
            fc_.emplace_back(in, hidden, rng);
            in = hidden;
        }
        branch_ = LinearLayer<T>(in, style_dim * num_domains, rng, true);
    }

    int latent_dim() const { return latent_dim_; }
    int style_dim() const { return style_dim_; }
    int num_domains() const { return domains_; }

    // c = G_y(z); z:[n, latent_dim] -> [n, style_dim].
    Var<T> generate(const Var<T>& z, const std::vector<int>& y) const {
        if (z.shape().size() != 2 || z.dim(1) != latent_dim_)
            throw ShapeError("latent " + shape_str(z.shape()) + ", expected [n," +
                             std::to_string(latent_dim_) + "]");
        if (static_cast<int>(y.size()) != z.dim(0))
            throw ShapeError("style generator: label count != batch");
        for (int label : y)
            if (label < 0 || label >= domains_)
                throw DomainError("label " + std::to_string(label) + " of " +
                                  std::to_string(domains_) + " domains");
        Var<T> h = z;
        for (const auto& fc : fc_) h = leaky_relu(fc.forward(h));
        return gather_cols_block(branch_.forward(h), y, style_dim_);
    }

    Var<T> generate(const Tensor<T>& z, const std::vector<int>& y) const {
        return generate(Var<T>::constant(z), y);
    }

    ParamList<T> params() const {
        ParamList<T> ps;
        for (size_t i = 0; i < fc_.size(); ++i)
            fc_[i].collect(ps, "fc." + std::to_string(i));
        branch_.collect(ps, "branch");
        return ps;
    }

    int64_t count_params() const { return params().count_scalars(); }

private:
    std::vector<LinearLayer<T>> fc_;
    LinearLayer<T> branch_;
    int latent_dim_ = 0, style_dim_ = 0, domains_ = 0;
};

// Bottom-up encoder producing a domain-specific style code from an image.
// Shares the descriptor's trunk construction and progressive growth.
template <class T>
class StyleEncoder {
public:
    StyleEncoder() = default;

    StyleEncoder(const ChannelPlan& plan, int style_dim, int num_domains, Rng& rng)
        : trunk_(plan, rng), style_dim_(style_dim), domains_(num_domains) {
        head_ = LinearLayer<T>(trunk_.feature_dim(), style_dim * num_domains, rng, true);
    }

    int level() const { return trunk_.level(); }
    int style_dim() const { return style_dim_; }
    int num_domains() const { return domains_; }

    void expand(Rng& rng) {
        trunk_.drop_fading();
        trunk_.expand(rng);
    }

    // c = E_y(x); one code per batch element under its own label.
    Var<T> encode(const Var<T>& x, const std::vector<int>& y, T omega) const {
        if (static_cast<int>(y.size()) != x.dim(0))
            throw ShapeError("encode: label count != batch");
        for (int label : y)
            if (label < 0 || label >= domains_)
                throw DomainError("label " + std::to_string(label) + " of " +
                                  std::to_string(domains_) + " domains");
        Var<T> feat = trunk_.pooled(x, omega);
        return gather_cols_block(head_.forward(feat), y, style_dim_);
    }

    Var<T> encode(const Tensor<T>& x, const std::vector<int>& y, T omega) const {
        return encode(Var<T>::constant(x), y, omega);
    }

    ParamList<T> params() const {
        ParamList<T> ps;
        trunk_.collect(ps, "trunk");
        head_.collect(ps, "head");
        return ps;
    }

    int64_t count_params() const { return params().count_scalars(); }

private:
    detail::ConvTrunk<T> trunk_;
    LinearLayer<T> head_;
    int style_dim_ = 0, domains_ = 0;
};

// Style-controlled encoder-decoder. Encodes to the base resolution, applies
// style-modulated bottleneck blocks, then decodes back up. Output passes
// through tanh, one adapter per level; during transitions the previous
// level's adapters fade against the new outer block pair.
template <class T>
class Translator {
public:
    Translator() = default;

    Translator(const ChannelPlan& plan, int style_dim, int mid_blocks, Rng& rng)
        : plan_(plan), style_dim_(style_dim), level_(1) {
        plan_.validate();
        const int w = plan_.entry_width(1);
        from_img_ = ConvLayer<T>(3, w, 1, rng);
        to_img_ = ConvLayer<T>(w, 3, 1, rng);
        for (int i = 0; i < mid_blocks; ++i) mid_enc_.emplace_back(w, w, 3, rng);
        for (int i = 0; i < mid_blocks; ++i) {
            mid_dec_conv_.emplace_back(w, w, 3, rng);
            mid_dec_style_.emplace_back(style_dim, w, rng);
        }
    }

    int level() const { return level_; }
    int style_dim() const { return style_dim_; }
    const ChannelPlan& plan() const { return plan_; }

    void expand(Rng& rng) {
        const int s = level_ + 1;
        if (s > plan_.num_levels)
            throw ConfigError("cannot expand past planned level " +
                              std::to_string(plan_.num_levels));
        down_.emplace_back(plan_.entry_width(s), plan_.entry_width(s - 1), rng);
        up_.emplace_back(plan_.entry_width(s - 1), plan_.entry_width(s), style_dim_, rng);
        fading_from_img_ = from_img_;
        fading_to_img_ = to_img_;
        has_fading_ = true;
        from_img_ = ConvLayer<T>(3, plan_.entry_width(s), 1, rng);
        to_img_ = ConvLayer<T>(plan_.entry_width(s), 3, 1, rng);
        level_ = s;
    }

    // x:[n,3,R,R] at the current level, c:[n,style_dim] -> [n,3,R,R] in [-1,1].
    Var<T> translate(const Var<T>& x, const Var<T>& c, T omega) const {
        const int res = plan_.resolution(level_);
        if (x.shape().size() != 4 || x.dim(1) != 3 || x.dim(2) != res || x.dim(3) != res)
            throw ConfigError("translate input " + shape_str(x.shape()) +
                              " does not match level resolution " + std::to_string(res));
        if (c.shape().size() != 2 || c.dim(1) != style_dim_)
            throw ShapeError("style code " + shape_str(c.shape()) + ", expected [n," +
                             std::to_string(style_dim_) + "]");
        if (c.dim(0) != x.dim(0)) throw ShapeError("translate: one style code per image");

        // Encode down to the base resolution.
        Var<T> h;
        if (level_ == 1) {
            h = leaky_relu(from_img_.forward(x));
        } else {
            const auto& block = down_.back();
            if (omega >= T(1) || !has_fading_) {
                h = block.forward(leaky_relu(from_img_.forward(x)));
            } else if (omega <= T(0)) {
                h = leaky_relu(fading_from_img_.forward(avg_pool2(x)));
            } else {
                h = blend(leaky_relu(fading_from_img_.forward(avg_pool2(x))),
                          block.forward(leaky_relu(from_img_.forward(x))), omega);
            }
        }
        for (int l = level_ - 1; l >= 2; --l) h = down_[static_cast<size_t>(l - 2)].forward(h);

        for (const auto& m : mid_enc_) h = leaky_relu(m.forward(h));
        for (size_t i = 0; i < mid_dec_conv_.size(); ++i)
            h = leaky_relu(mid_dec_style_[i].forward(mid_dec_conv_[i].forward(h), c));

        // Decode upward; the topmost block belongs to the new path.
        for (int l = 2; l <= level_ - 1; ++l) h = up_[static_cast<size_t>(l - 2)].forward(h, c);

        if (level_ == 1) return tanh_op(to_img_.forward(h));
        const auto& top = up_.back();
        if (omega >= T(1) || !has_fading_)
            return tanh_op(to_img_.forward(top.forward(h, c)));
        Var<T> old_img = upsample_nearest2(tanh_op(fading_to_img_.forward(h)));
        if (omega <= T(0)) return old_img;
        Var<T> new_img = tanh_op(to_img_.forward(top.forward(h, c)));
        return blend(old_img, new_img, omega);
    }

    Var<T> translate(const Tensor<T>& x, const Var<T>& c, T omega) const {
        return translate(Var<T>::constant(x), c, omega);
    }

    ParamList<T> params() const {
        ParamList<T> ps;
        from_img_.collect(ps, "from_img.l" + std::to_string(level_));
        to_img_.collect(ps, "to_img.l" + std::to_string(level_));
        if (has_fading_) {
            fading_from_img_.collect(ps, "from_img.l" + std::to_string(level_ - 1));
            fading_to_img_.collect(ps, "to_img.l" + std::to_string(level_ - 1));
        }
        for (size_t i = 0; i < down_.size(); ++i)
            down_[i].collect(ps, "down.l" + std::to_string(i + 2));
        for (size_t i = 0; i < up_.size(); ++i)
            up_[i].collect(ps, "up.l" + std::to_string(i + 2));
        for (size_t i = 0; i < mid_enc_.size(); ++i)
            mid_enc_[i].collect(ps, "mid_enc." + std::to_string(i));
        for (size_t i = 0; i < mid_dec_conv_.size(); ++i) {
            mid_dec_conv_[i].collect(ps, "mid_dec." + std::to_string(i) + ".conv");
            mid_dec_style_[i].collect(ps, "mid_dec." + std::to_string(i) + ".style");
        }
        return ps;
    }

    int64_t count_params() const { return params().count_scalars(); }

private:
    ChannelPlan plan_;
    int style_dim_ = 0;
    int level_ = 1;
    ConvLayer<T> from_img_, to_img_;
    ConvLayer<T> fading_from_img_, fading_to_img_;
    bool has_fading_ = false;
    std::vector<DownBlock<T>> down_;            // down_[i] at level i+2
    std::vector<UpBlock<T>> up_;                // up_[i] at level i+2
    std::vector<ConvLayer<T>> mid_enc_;
    std::vector<ConvLayer<T>> mid_dec_conv_;
    std::vector<StyleMod<T>> mid_dec_style_;
};

// ---------------------------------------------------------------------------
// Translator-side losses
// ---------------------------------------------------------------------------

// mean squared distance to the Langevin-revised samples; x_tilde is a
// constant — no gradient reaches the sampler.
template <class T>
Var<T> mcmc_teaching_loss(const Tensor<T>& x_tilde, const Var<T>& x_hat) {
    check_same_shape(x_tilde, x_hat.val(), "mcmc_teaching_loss");
    return mean_squared_error(Var<T>::constant(x_tilde), x_hat);
}

// Negative mean absolute difference between two translations of the same
// sources under different style codes.
template <class T>
Var<T> diversity_loss(const Var<T>& out1, const Var<T>& out2) {
    check_same_shape(out1.val(), out2.val(), "diversity_loss");
    return neg(mean_abs_error(out1, out2));
}

template <class T>
Var<T> cycle_loss(const Tensor<T>& x, const Var<T>& x_cycle) {
    check_same_shape(x, x_cycle.val(), "cycle_loss");
    return mean_abs_error(Var<T>::constant(x), x_cycle);
}

template <class T>
Var<T> style_recon_loss(const Var<T>& c_target, const Var<T>& c_recovered) {
    check_same_shape(c_target.val(), c_recovered.val(), "style_recon_loss");
    return mean_abs_error(c_target, c_recovered);
}

// -mean D_{y'}(translated): D is the negative energy, so driving D up moves
// translations toward the descriptor's low-energy modes. Descriptor
// parameters must be frozen by the caller.
template <class T>
Var<T> mode_loss(const Var<T>& translated, const std::vector<int>& y_prime,
                 const Descriptor<T>& descriptor, T omega) {
    return neg(mean_all(descriptor.energy(translated, y_prime, omega)));
}

struct LossWeights {
    double energy = 1.0;
    double diverse = 1.0;
    double cycle = 1.0;
    double style = 1.0;
    double mode = 1.0;

    void validate() const {
        if (energy < 0 || diverse < 0 || cycle < 0 || style < 0 || mode < 0)
            throw ConfigError("loss weights must be non-negative");
    }
};

// Style-code source for the teaching pass: either generator codes from a
// latent draw or encoder codes from reference images in the target domains.
template <class T>
struct TeachingCode {
    bool from_generator = true;
    Tensor<T> z;           // [n, latent_dim], always present (diversity pair)
    Tensor<T> ref_images;  // [n,3,R,R] when encoder-sourced
};

template <class T>
struct TranslatorLosses {
    Var<T> total;
    T teach = 0, diverse = 0, cycle = 0, style = 0, mode = 0;
};

// L_translator = L_teach + ld*L_diverse + lc*L_cycle + ls*L_style + lm*L_mode,
// all terms built on one shared forward pass set. The caller freezes the
// descriptor so only (alpha, phi, beta) receive gradients.
template <class T>
TranslatorLosses<T> translator_objective(const Translator<T>& translator,
                                         const StyleEncoder<T>& encoder,
                                         const StyleGenerator<T>& style_gen,
                                         const Descriptor<T>& descriptor,
                                         const Tensor<T>& x, const std::vector<int>& y,
                                         const std::vector<int>& y_prime,
                                         const Tensor<T>& x_tilde,
                                         const TeachingCode<T>& code, const Tensor<T>& z2,
                                         const LossWeights& w, T omega) {
    w.validate();
    Var<T> xc = Var<T>::constant(x);

    Var<T> cg1 = style_gen.generate(code.z, y_prime);
    Var<T> c1 = code.from_generator ? cg1 : encoder.encode(code.ref_images, y_prime, omega);
    Var<T> x_hat = translator.translate(xc, c1, omega);

    Var<T> l_teach = mcmc_teaching_loss(x_tilde, x_hat);

    Var<T> out1 = code.from_generator ? x_hat : translator.translate(xc, cg1, omega);
    Var<T> c2 = style_gen.generate(z2, y_prime);
    Var<T> out2 = translator.translate(xc, c2, omega);
    Var<T> l_diverse = diversity_loss(out1, out2);

    Var<T> c_src = encoder.encode(xc, y, omega);
    Var<T> x_cyc = translator.translate(x_hat, c_src, omega);
    Var<T> l_cycle = cycle_loss(x, x_cyc);

    Var<T> c_rec = encoder.encode(x_hat, y_prime, omega);
    Var<T> l_style = style_recon_loss(c1, c_rec);

    Var<T> l_mode = mode_loss(x_hat, y_prime, descriptor, omega);

    Var<T> total = l_teach;
    if (w.diverse != 0) total = add(total, scale(l_diverse, static_cast<T>(w.diverse)));
    if (w.cycle != 0) total = add(total, scale(l_cycle, static_cast<T>(w.cycle)));
    if (w.style != 0) total = add(total, scale(l_style, static_cast<T>(w.style)));
    if (w.mode != 0) total = add(total, scale(l_mode, static_cast<T>(w.mode)));

    TranslatorLosses<T> out;
    out.total = total;
    out.teach = l_teach.val()[0];
    out.diverse = l_diverse.val()[0];
    out.cycle = l_cycle.val()[0];
    out.style = l_style.val()[0];
    out.mode = l_mode.val()[0];
    return out;
}

}  // namespace ebit
