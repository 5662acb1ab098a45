#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ebit/core/ops.hpp"
#include "ebit/core/rng.hpp"

namespace ebit {

// Ordered registry of named parameters. Rebuilt on demand by each network so
// structural changes (progressive expansion) can never leave stale entries.
template <class T>
class ParamList {
public:
    void add(const std::string& name, const Var<T>& v) { items_.emplace_back(name, v); }

    void extend(const ParamList& other, const std::string& prefix) {
        for (const auto& [n, v] : other.items_) items_.emplace_back(prefix + n, v);
    }

    std::vector<std::pair<std::string, Var<T>>>& items() { return items_; }
    const std::vector<std::pair<std::string, Var<T>>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

    int64_t count_scalars() const {
        int64_t n = 0;
        for (const auto& [name, v] : items_) n += v.size();
        return n;
    }

    const Var<T>* find(const std::string& name) const {
        for (const auto& [n, v] : items_)
            if (n == name) return &v;
        return nullptr;
    }

    bool all_finite() const {
        for (const auto& [n, v] : items_)
            if (!v.val().all_finite()) return false;
        return true;
    }

private:
    std::vector<std::pair<std::string, Var<T>>> items_;
};

// Scoped freeze: parameters stop requiring gradients, so graph construction
// skips their pull-backs entirely (Langevin chains, mode-loss passes).
template <class T>
class FrozenParams {
public:
    explicit FrozenParams(const ParamList<T>& params) {
        saved_.reserve(params.size());
        for (const auto& [n, v] : params.items()) {
            saved_.emplace_back(v, v.requires_grad());
            const_cast<Var<T>&>(v).set_requires_grad(false);
        }
    }
    ~FrozenParams() {
        for (auto& [v, rg] : saved_) v.set_requires_grad(rg);
    }
    FrozenParams(const FrozenParams&) = delete;
    FrozenParams& operator=(const FrozenParams&) = delete;

private:
    std::vector<std::pair<Var<T>, bool>> saved_;
};

namespace init {

template <class T>
Var<T> he_normal(Shape shape, int fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    rng.fill_normal(t, 0.0, std::sqrt(2.0 / fan_in));
    return Var<T>::leaf(std::move(t), true);
}

template <class T>
Var<T> output_normal(Shape shape, int fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    rng.fill_normal(t, 0.0, std::sqrt(1.0 / fan_in));
    return Var<T>::leaf(std::move(t), true);
}

template <class T>
Var<T> zeros(Shape shape) {
    return Var<T>::leaf(Tensor<T>(std::move(shape)), true);
}

}  // namespace init

template <class T>
struct LinearLayer {
    Var<T> W, b;
    int in = 0, out = 0;

    LinearLayer() = default;
    LinearLayer(int in_, int out_, Rng& rng, bool output_layer = false)
        : in(in_), out(out_) {
        W = output_layer ? init::output_normal<T>(Shape{out, in}, in, rng)
                         : init::he_normal<T>(Shape{out, in}, in, rng);
        b = init::zeros<T>(Shape{out});
    }

    Var<T> forward(const Var<T>& x) const { return linear(x, W, b); }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".W", W);
        ps.add(prefix + ".b", b);
    }
};

template <class T>
struct ConvLayer {
    Var<T> W, b;
    int in = 0, out = 0, k = 3;

    ConvLayer() = default;
    ConvLayer(int in_, int out_, int k_, Rng& rng) : in(in_), out(out_), k(k_) {
        W = init::he_normal<T>(Shape{out, in, k, k}, in * k * k, rng);
        b = init::zeros<T>(Shape{out});
    }

    Var<T> forward(const Var<T>& x) const { return conv2d(x, W, b); }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        ps.add(prefix + ".W", W);
        ps.add(prefix + ".b", b);
    }
};

// conv3x3 -> leaky ReLU -> 2x average pool.
template <class T>
struct DownBlock {
    ConvLayer<T> conv;

    DownBlock() = default;
    DownBlock(int in, int out, Rng& rng) : conv(in, out, 3, rng) {}

    Var<T> forward(const Var<T>& x) const {
        return avg_pool2(leaky_relu(conv.forward(x)));
    }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        conv.collect(ps, prefix + ".conv");
    }
};

// Style-modulated normalization: instance norm followed by per-channel
// scale/shift produced from the style code by an affine map.
template <class T>
struct StyleMod {
    LinearLayer<T> affine;  // style_dim -> 2*channels
    int channels = 0;

    StyleMod() = default;
    StyleMod(int style_dim, int channels_, Rng& rng)
        : affine(style_dim, 2 * channels_, rng, true), channels(channels_) {}

    Var<T> forward(const Var<T>& x, const Var<T>& c) const {
        Var<T> gb = affine.forward(c);  // [n, 2C]
        Var<T> gamma = slice_cols(gb, 0, channels);
        Var<T> beta = slice_cols(gb, channels, channels);
        return scale_shift_hw(instance_norm(x), add_scalar(gamma, T(1)), beta);
    }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        affine.collect(ps, prefix + ".affine");
    }
};

// 2x nearest upsample -> conv3x3 -> style modulation -> leaky ReLU.
template <class T>
struct UpBlock {
    ConvLayer<T> conv;
    StyleMod<T> style;

    UpBlock() = default;
    UpBlock(int in, int out, int style_dim, Rng& rng)
        : conv(in, out, 3, rng), style(style_dim, out, rng) {}

    Var<T> forward(const Var<T>& x, const Var<T>& c) const {
        return leaky_relu(style.forward(conv.forward(upsample_nearest2(x)), c));
    }

    void collect(ParamList<T>& ps, const std::string& prefix) const {
        conv.collect(ps, prefix + ".conv");
        style.collect(ps, prefix + ".style");
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with per-parameter state keyed by stable names; parameters that
// received no gradient in a step are left untouched.
template <class T>
class Adam {
public:
    struct State {
        Tensor<T> m, v;
        int64_t t = 0;
    };

    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

    void step(ParamList<T>& params) {
        for (auto& [name, var] : params.items()) {
            Var<T>& v = var;
            if (v.raw()->grad.size() != v.size()) continue;  // never touched
            auto& st = state_[name];
            if (st.m.size() != v.size()) {
                st.m = Tensor<T>(v.shape());
                st.v = Tensor<T>(v.shape());
                st.t = 0;
            }
            ++st.t;
            const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
            const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(st.t)));
            const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(st.t)));
            const T lr = static_cast<T>(cfg_.lr);
            const T eps = static_cast<T>(cfg_.eps);
            T* p = v.mutable_val().data();
            T* g = v.raw()->grad.data();
            T* m = st.m.data();
            T* vv = st.v.data();
            const int64_t n = v.size();
            for (int64_t i = 0; i < n; ++i) {
                m[i] = b1 * m[i] + (T(1) - b1) * g[i];
                vv[i] = b2 * vv[i] + (T(1) - b2) * g[i] * g[i];
                const T mhat = m[i] / bc1;
                const T vhat = vv[i] / bc2;
                p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
                g[i] = T(0);
            }
        }
    }

    std::unordered_map<std::string, State>& state() { return state_; }
    const std::unordered_map<std::string, State>& state() const { return state_; }

private:
    AdamConfig cfg_;
    std::unordered_map<std::string, State> state_;
};

}  // namespace ebit
