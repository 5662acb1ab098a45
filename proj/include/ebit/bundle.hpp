#pragma once

#include <string>
#include <vector>

#include "ebit/generator.hpp"

namespace ebit {

struct BundleConfig {
    ChannelPlan plan;
    int num_domains = 2;
    int style_dim = 64;
    int latent_dim = 16;
    int gen_hidden = 512;
    int gen_layers = 3;
    int mid_blocks = 2;
    std::vector<std::string> domain_names;

    void validate() const {
        plan.validate();
        if (num_domains < 2) throw ConfigError("need at least 2 domains");
        if (style_dim < 1 || latent_dim < 1) throw ConfigError("style/latent dims must be >= 1");
        if (!domain_names.empty() && static_cast<int>(domain_names.size()) != num_domains)
            throw ConfigError("domain name count does not match num_domains");
    }
};

// The four cooperating networks plus the progressive state. All three
// resolution-dependent networks always share one level; the style generator
// never grows.
template <class T>
class ModelBundle {
public:
    ModelBundle() = default;

    ModelBundle(const BundleConfig& cfg, Rng& rng)
        : descriptor(validated(cfg).plan, cfg.num_domains, rng),
          translator(cfg.plan, cfg.style_dim, cfg.mid_blocks, rng),
          encoder(cfg.plan, cfg.style_dim, cfg.num_domains, rng),
          style_gen(cfg.latent_dim, cfg.gen_hidden, cfg.gen_layers, cfg.style_dim,
                    cfg.num_domains, rng),
          cfg_(cfg) {
        state.level = 1;
        state.omega = 1.0;
        state.samples_seen = 0;
    }

    const BundleConfig& config() const { return cfg_; }
    int level() const { return state.level; }
    int resolution() const { return cfg_.plan.resolution(state.level); }
    int num_domains() const { return cfg_.num_domains; }

    // Structural growth to the next level; stage budget and MCMC step count
    // are owned by the training schedule.
    void expand(Rng& rng) {
        if (state.level >= cfg_.plan.num_levels)
            throw ConfigError("cannot expand past planned level " +
                              std::to_string(cfg_.plan.num_levels));
        descriptor.expand(rng);
        translator.expand(rng);
        encoder.expand(rng);
        state.level += 1;
        state.omega = state.level == 1 ? 1.0 : 0.0;
        state.samples_seen = 0;
        check_levels();
    }

    ParamList<T> params() const {
        ParamList<T> ps;
        ps.extend(descriptor.params(), "desc.");
        ps.extend(translator.params(), "tr.");
        ps.extend(encoder.params(), "enc.");
        ps.extend(style_gen.params(), "gen.");
        return ps;
    }

    int64_t count_params() const { return params().count_scalars(); }

    void check_levels() const {
        if (descriptor.level() != state.level || translator.level() != state.level ||
            encoder.level() != state.level)
            throw ConfigError("bundle networks disagree on the progressive level");
    }

    // Convenience wrappers bound to the current transition factor.
    Var<T> energy(const Tensor<T>& x, const std::vector<int>& y) const {
        return descriptor.energy(x, y, static_cast<T>(state.omega));
    }
    Var<T> translate(const Tensor<T>& x, const Var<T>& c) const {
        return translator.translate(x, c, static_cast<T>(state.omega));
    }
    Var<T> encode(const Tensor<T>& x, const std::vector<int>& y) const {
        return encoder.encode(x, y, static_cast<T>(state.omega));
    }
    Var<T> generate_style(const Tensor<T>& z, const std::vector<int>& y) const {
        return style_gen.generate(z, y);
    }

    Tensor<T> sample_latent(int n, Rng& rng) const {
        Tensor<T> z(Shape{n, cfg_.latent_dim});
        rng.fill_normal(z);
        return z;
    }

    Descriptor<T> descriptor;
    Translator<T> translator;
    StyleEncoder<T> encoder;
    StyleGenerator<T> style_gen;
    ProgressiveState state;

private:
    static const BundleConfig& validated(const BundleConfig& c) {
        c.validate();
        return c;
    }

    BundleConfig cfg_;
};

}  // namespace ebit
