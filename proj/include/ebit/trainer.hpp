#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <vector>

#include "ebit/bundle.hpp"
#include "ebit/data.hpp"
#include "ebit/langevin.hpp"

namespace ebit {

struct TrainConfig {
    int batch_size = 8;
    AdamConfig opt_descriptor{1e-4, 0.5, 0.999, 1e-8};
    AdamConfig opt_translator{1e-4, 0.5, 0.999, 1e-8};
    AdamConfig opt_encoder{1e-4, 0.5, 0.999, 1e-8};
    AdamConfig opt_style_gen{1e-5, 0.5, 0.999, 1e-8};
    LangevinConfig langevin;  // num_steps is overridden by the stage schedule
    int mcmc_k0 = 16;
    int mcmc_decrement = 4;
    LossWeights weights;
    bool flip = true;
    uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (opt_descriptor.lr < 0 || opt_translator.lr < 0 || opt_encoder.lr < 0 ||
            opt_style_gen.lr < 0)
            throw ConfigError("learning rates must be >= 0");
        langevin.validate();
        weights.validate();
    }
};

struct StepReport {
    long long step = 0;  // 1-based global step count
    int stage = 1;
    double omega = 1.0;
    int mcmc_steps = 0;
    double ebm = 0, energy_reg = 0;
    double teach = 0, diverse = 0, cycle = 0, style = 0, mode = 0;
    double real_energy_mean = 0, synth_energy_mean = 0;
    double wall_time_s = 0;

    bool all_finite() const {
        for (double v : {ebm, energy_reg, teach, diverse, cycle, style, mode,
                         real_energy_mean, synth_energy_mean})
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline const char* kMetricsHeader =
    "step,stage,omega,K,ebm,energy_reg,teach,diverse,cycle,style,mode,"
    "real_energy_mean,synth_energy_mean,wall_time_s";

inline std::string metrics_row(const StepReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%lld,%d,%.9g,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f",
                  r.step, r.stage, r.omega, r.mcmc_steps, r.ebm, r.energy_reg, r.teach,
                  r.diverse, r.cycle, r.style, r.mode, r.real_energy_mean,
                  r.synth_energy_mean, r.wall_time_s);
    return buf;
}

// Interval-driven hooks invoked by train_stage on the training thread.
struct TrainHooks {
    long long log_every = 25;
    long long grid_every = 500;
    long long checkpoint_every = 0;  // 0: stage end only
    std::function<void(const StepReport&)> on_log;
    std::function<void(long long)> on_grid;
    std::function<void(long long)> on_checkpoint;
    // Return true to stop after the current step (clean interrupt).
    std::function<bool(long long)> stop_after;
};

// Owns the optimizers, RNG and step counter of a run; the bundle is passed
// in so evaluation code can borrow it between stages.
template <class T>
class CooperativeTrainer {
public:
    CooperativeTrainer(TrainConfig cfg, uint64_t seed)
        : cfg_(std::move(cfg)),
          rng_(seed),
          opt_desc_(cfg_.opt_descriptor),
          opt_tr_(cfg_.opt_translator),
          opt_enc_(cfg_.opt_encoder),
          opt_gen_(cfg_.opt_style_gen) {
        cfg_.validate();
        start_ = std::chrono::steady_clock::now();
    }

    const TrainConfig& config() const { return cfg_; }
    Rng& rng() { return rng_; }
    long long global_step() const { return global_step_; }
    void set_global_step(long long s) { global_step_ = s; }

    Adam<T>& opt_descriptor() { return opt_desc_; }
    Adam<T>& opt_translator() { return opt_tr_; }
    Adam<T>& opt_encoder() { return opt_enc_; }
    Adam<T>& opt_style_gen() { return opt_gen_; }

    // One four-step cooperative update on an explicit batch. `ref_images`
    // enables the encoder-sourced teaching pass; when absent the style
    // generator provides the code.
    StepReport cooperative_step(ModelBundle<T>& bundle, const Tensor<T>& x,
                                const std::vector<int>& y, const std::vector<int>& y_prime,
                                const Tensor<T>* ref_images = nullptr) {
        bundle.check_levels();
        const T omega = static_cast<T>(bundle.state.omega);
        const int n = x.dim(0);

        TeachingCode<T> code;
        code.from_generator = ref_images == nullptr;
        code.z = bundle.sample_latent(n, rng_);
        if (ref_images) code.ref_images = *ref_images;
        Tensor<T> z2 = bundle.sample_latent(n, rng_);

        // (1) Initial translation x_hat; nothing needs gradients here.
        Tensor<T> x_hat;
        {
            ParamList<T> all = bundle.params();
            FrozenParams<T> freeze(all);
            Var<T> c0 = code.from_generator
                            ? bundle.style_gen.generate(code.z, y_prime)
                            : bundle.encoder.encode(code.ref_images, y_prime, omega);
            x_hat = bundle.translator.translate(x, c0, omega).val();
        }

        // (2) Langevin revision under the target-domain heads.
        LangevinConfig lcfg = cfg_.langevin;
        lcfg.num_steps = bundle.state.mcmc_steps;
        Tensor<T> x_tilde;
        {
            ParamList<T> dp = bundle.descriptor.params();
            FrozenParams<T> freeze(dp);
            x_tilde = langevin_revise(
                x_hat,
                [&](const Var<T>& v) { return bundle.descriptor.energy(v, y_prime, omega); },
                lcfg, rng_);
        }

        StepReport report;
        report.step = ++global_step_;
        report.stage = bundle.state.level;
        report.omega = bundle.state.omega;
        report.mcmc_steps = bundle.state.mcmc_steps;

        // (3) Descriptor update: real under y, synthesized under y'.
        {
            auto dl = descriptor_objective(bundle.descriptor, x, x_tilde, y, y_prime,
                                           static_cast<T>(cfg_.weights.energy), omega);
            report.ebm = dl.ebm;
            report.energy_reg = dl.energy_reg;
            report.real_energy_mean = dl.real_energy_mean;
            report.synth_energy_mean = dl.synth_energy_mean;
            require_finite(dl.ebm, "ebm");
            require_finite(dl.energy_reg, "energy_reg");
            backward(dl.total);
            ParamList<T> dp = bundle.descriptor.params();
            opt_desc_.step(dp);
        }

        // (4) Generator update on the same x_tilde, fresh descriptor snapshot.
        {
            ParamList<T> dp = bundle.descriptor.params();
            FrozenParams<T> freeze(dp);
            auto tl = translator_objective(bundle.translator, bundle.encoder, bundle.style_gen,
                                           bundle.descriptor, x, y, y_prime, x_tilde, code, z2,
                                           cfg_.weights, omega);
            report.teach = tl.teach;
            report.diverse = tl.diverse;
            report.cycle = tl.cycle;
            report.style = tl.style;
            report.mode = tl.mode;
            require_finite(tl.teach, "teach");
            require_finite(tl.diverse, "diverse");
            require_finite(tl.cycle, "cycle");
            require_finite(tl.style, "style");
            require_finite(tl.mode, "mode");
            backward(tl.total);
            ParamList<T> tp = bundle.translator.params();
            ParamList<T> ep = bundle.encoder.params();
            ParamList<T> gp = bundle.style_gen.params();
            opt_tr_.step(tp);
            opt_enc_.step(ep);
            opt_gen_.step(gp);
        }

        report.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        return report;
    }

    // Runs one progressive stage until the sample budget is consumed.
    // Alternates generator- and encoder-sourced teaching codes per step.
    // Returns false when interrupted by hooks.stop_after.
    bool train_stage(ModelBundle<T>& bundle, PixelStore<T>& store, const TrainHooks& hooks) {
        const long long N = bundle.state.stage_budget;
        if (N < cfg_.batch_size)
            throw ConfigError("stage budget must cover at least one batch");
        const int level = bundle.state.level;
        const int D = bundle.num_domains();

        while (bundle.state.samples_seen < N) {
            Batch<T> batch = sample_batch(store, level, cfg_.batch_size, rng_, Split::train,
                                          cfg_.flip);
            StepReport report;
            if (global_step_ % 2 == 0) {
                report = cooperative_step(bundle, batch.images, batch.y, batch.y_prime);
            } else {
                Tensor<T> refs = draw_references(store, level, batch.y_prime);
                report = cooperative_step(bundle, batch.images, batch.y, batch.y_prime, &refs);
            }
            (void)D;
            bundle.state.samples_seen += cfg_.batch_size;
            bundle.state.omega =
                update_omega(bundle.state.samples_seen, N, bundle.state.level);

            if (!report.all_finite())
                throw TrainingError("step", "non-finite loss at step " +
                                                std::to_string(report.step));
            if (hooks.on_log && hooks.log_every > 0 && report.step % hooks.log_every == 0)
                hooks.on_log(report);
            if (hooks.on_grid && hooks.grid_every > 0 && report.step % hooks.grid_every == 0)
                hooks.on_grid(report.step);
            if (hooks.on_checkpoint && hooks.checkpoint_every > 0 &&
                report.step % hooks.checkpoint_every == 0)
                hooks.on_checkpoint(report.step);
            if (hooks.stop_after && hooks.stop_after(report.step)) return false;
        }
        return true;
    }

    Tensor<T> draw_references(PixelStore<T>& store, int level, const std::vector<int>& labels) {
        const int n = static_cast<int>(labels.size());
        Tensor<T> refs;
        for (int i = 0; i < n; ++i) {
            const int d = labels[static_cast<size_t>(i)];
            const int idx = rng_.uniform_int(store.train_count(d));
            const Tensor<T>& img = store.image(level, d, idx);
            if (refs.empty())
                refs = Tensor<T>(Shape{n, img.dim(0), img.dim(1), img.dim(2)});
            std::copy(img.data(), img.data() + img.size(),
                      refs.data() + static_cast<int64_t>(i) * img.size());
        }
        return refs;
    }

private:
    static void require_finite(double v, const char* component) {
        if (!std::isfinite(v))
            throw TrainingError(component, "loss is not finite");
    }

    TrainConfig cfg_;
    Rng rng_;
    Adam<T> opt_desc_, opt_tr_, opt_enc_, opt_gen_;
    long long global_step_ = 0;
    std::chrono::steady_clock::time_point start_;
};

}  // namespace ebit
