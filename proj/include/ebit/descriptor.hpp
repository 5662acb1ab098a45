#pragma once

#include <string>
#include <vector>

#include "ebit/nn.hpp"
#include "ebit/progressive.hpp"

namespace ebit {

namespace detail {

// Shared bottom-up trunk used by the descriptor and the style encoder:
// a from-image adapter per level, one DownBlock per level above the base,
// a fixed stem below the base resolution, and global average pooling.
// During a transition the previous level's adapter is kept as a fading path
// on 2x average-pooled input and blended with the new block by omega.
template <class T>
class ConvTrunk {
public:
    ConvTrunk() = default;

    ConvTrunk(const ChannelPlan& plan, Rng& rng) : plan_(plan), level_(1) {
        plan_.validate();
        from_img_ = ConvLayer<T>(3, plan_.entry_width(1), 1, rng);
        int w = plan_.entry_width(1);
        for (int k = 1; k <= plan_.stem_depth(); ++k) {
            const int wo = plan_.stem_width(k);
            stem_.emplace_back(w, wo, rng);
            w = wo;
        }
        feature_dim_ = w;
    }

    int level() const { return level_; }
    int feature_dim() const { return feature_dim_; }
    const ChannelPlan& plan() const { return plan_; }

    void expand(Rng& rng) {
        const int s = level_ + 1;
        if (s > plan_.num_levels)
            throw ConfigError("cannot expand past planned level " +
                              std::to_string(plan_.num_levels));
        // New block maps the new entry width down to the previous one.
        down_.emplace_back(plan_.entry_width(s), plan_.entry_width(s - 1), rng);
        fading_from_img_ = from_img_;
        has_fading_ = true;
        from_img_ = ConvLayer<T>(3, plan_.entry_width(s), 1, rng);
        level_ = s;
    }

    // Bottom-up features before pooling heads; x at resolution(level_).
    Var<T> features(const Var<T>& x, T omega) const {
        if (x.shape().size() != 4 || x.dim(1) != 3 || x.dim(2) != plan_.resolution(level_) ||
            x.dim(3) != plan_.resolution(level_))
            throw ConfigError("input " + shape_str(x.shape()) + " does not match level " +
                              std::to_string(level_) + " resolution " +
                              std::to_string(plan_.resolution(level_)));
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
                Var<T> fresh = block.forward(leaky_relu(from_img_.forward(x)));
                Var<T> faded = leaky_relu(fading_from_img_.forward(avg_pool2(x)));
                h = blend(faded, fresh, omega);
            }
        }
        for (int l = level_ - 1; l >= 2; --l) h = down_[static_cast<size_t>(l - 2)].forward(h);
        for (const auto& s : stem_) h = s.forward(h);
        return h;
    }

    Var<T> pooled(const Var<T>& x, T omega) const { return global_avg_pool(features(x, omega)); }

    // Called on expansion of the NEXT level: the adapter two levels down can
    // no longer contribute and is dropped from the registry.
    void drop_fading() { has_fading_ = false; fading_from_img_ = ConvLayer<T>(); }
    bool has_fading() const { return has_fading_; }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        from_img_.collect(ps, prefix + ".from_img.l" + std::to_string(level_));
        if (has_fading_)
            fading_from_img_.collect(ps, prefix + ".from_img.l" + std::to_string(level_ - 1));
        for (size_t i = 0; i < down_.size(); ++i)
            down_[i].collect(ps, prefix + ".down.l" + std::to_string(i + 2));
        for (size_t i = 0; i < stem_.size(); ++i)
            stem_[i].collect(ps, prefix + ".stem." + std::to_string(i));
    }

private:
    ChannelPlan plan_;
    int level_ = 1;
    int feature_dim_ = 0;
    ConvLayer<T> from_img_;
    ConvLayer<T> fading_from_img_;
    bool has_fading_ = false;
    std::vector<DownBlock<T>> down_;  // down_[i] operates at level i+2
    std::vector<DownBlock<T>> stem_;
};

}  // namespace detail

// Multi-head energy model: shared trunk, one affine head per domain. The
// head output is the unnormalized log-density of its domain.
template <class T>
class Descriptor {
public:
    Descriptor() = default;

    Descriptor(const ChannelPlan& plan, int num_domains, Rng& rng)
        : trunk_(plan, rng), domains_(num_domains) {
        if (num_domains < 1) throw ConfigError("descriptor needs at least one domain");
        head_ = LinearLayer<T>(trunk_.feature_dim(), num_domains, rng, true);
    }

    int level() const { return trunk_.level(); }
    int num_domains() const { return domains_; }
    const ChannelPlan& plan() const { return trunk_.plan(); }

    void expand(Rng& rng) {
        trunk_.drop_fading();
        trunk_.expand(rng);
    }

    // D_{y_i}(x_i; theta) for each batch element.
    Var<T> energy(const Var<T>& x, const std::vector<int>& y, T omega) const {
        if (static_cast<int>(y.size()) != x.dim(0))
            throw ShapeError("energy: label count " + std::to_string(y.size()) +
                             " != batch " + std::to_string(x.dim(0)));
        for (int label : y)
            if (label < 0 || label >= domains_)
                throw DomainError("label " + std::to_string(label) + " of " +
                                  std::to_string(domains_) + " domains");
        Var<T> feat = trunk_.pooled(x, omega);
        return gather_cols(head_.forward(feat), y);
    }

    Var<T> energy(const Tensor<T>& x, const std::vector<int>& y, T omega) const {
        return energy(Var<T>::constant(x), y, omega);
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
    int domains_ = 0;
};

// mean(D(synth)) - mean(D(real)); its gradient is the maximum-likelihood
// ascent direction on the data term.
template <class T>
Var<T> ebm_loss(const Var<T>& real_energies, const Var<T>& synth_energies) {
    if (real_energies.size() != synth_energies.size())
        throw ShapeError("ebm_loss: batch sizes differ");
    return sub(mean_all(synth_energies), mean_all(real_energies));
}

// mean(D(real)^2) + mean(D(synth)^2).
template <class T>
Var<T> energy_l2_reg(const Var<T>& real_energies, const Var<T>& synth_energies) {
    if (real_energies.size() != synth_energies.size())
        throw ShapeError("energy_l2_reg: batch sizes differ");
    return add(mean_all(square(real_energies)), mean_all(square(synth_energies)));
}

template <class T>
struct DescriptorLosses {
    Var<T> total;
    T ebm = 0, energy_reg = 0;
    T real_energy_mean = 0, synth_energy_mean = 0;
};

// L_descriptor = L_ebm + lambda_energy * L_energy, with real images scored
// under their observed domains and synthesized images under their targets.
template <class T>
DescriptorLosses<T> descriptor_objective(const Descriptor<T>& descriptor,
                                         const Tensor<T>& real, const Tensor<T>& synth,
                                         const std::vector<int>& y_real,
                                         const std::vector<int>& y_synth,
                                         T lambda_energy, T omega) {
    if (lambda_energy < T(0)) throw ConfigError("lambda_energy must be >= 0");
    Var<T> e_real = descriptor.energy(real, y_real, omega);
    Var<T> e_synth = descriptor.energy(synth, y_synth, omega);
    Var<T> l_ebm = ebm_loss(e_real, e_synth);
    Var<T> l_reg = energy_l2_reg(e_real, e_synth);
    DescriptorLosses<T> out;
    out.total = lambda_energy == T(0) ? l_ebm : add(l_ebm, scale(l_reg, lambda_energy));
    out.ebm = l_ebm.val()[0];
    out.energy_reg = l_reg.val()[0];
    T rs = 0, ss = 0;
    for (int64_t i = 0; i < e_real.size(); ++i) rs += e_real.val()[i];
    for (int64_t i = 0; i < e_synth.size(); ++i) ss += e_synth.val()[i];
    out.real_energy_mean = rs / static_cast<T>(e_real.size());
    out.synth_energy_mean = ss / static_cast<T>(e_synth.size());
    return out;
}

template <class T>
DescriptorLosses<T> descriptor_objective(const Descriptor<T>& descriptor,
                                         const Tensor<T>& real, const Tensor<T>& synth,
                                         const std::vector<int>& y, T lambda_energy, T omega) {
    return descriptor_objective(descriptor, real, synth, y, y, lambda_energy, omega);
}

}  // namespace ebit
