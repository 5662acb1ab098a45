#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "ebit/core/autodiff.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ebit {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor<T> out = a.val();
    const T* pb = b.val().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        const T* g = self.grad.data();
        if (self.parents[0]->requires_grad) self.parents[0]->accum_grad(g);
        if (self.parents[1]->requires_grad) self.parents[1]->accum_grad(g);
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor<T> out = a.val();
    const T* pb = b.val().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        const int64_t n = self.grad.size();
        const T* g = self.grad.data();
        if (self.parents[0]->requires_grad) self.parents[0]->accum_grad(g);
        if (self.parents[1]->requires_grad) {
            auto& p = *self.parents[1];
            p.ensure_grad();
            T* d = p.grad.data();
            for (int64_t i = 0; i < n; ++i) d[i] -= g[i];
        }
    });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor<T> out = a.val();
    const T* pb = b.val().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
    return make_op<T>(std::move(out), {a, b}, [](Node<T>& self) {
        const int64_t n = self.grad.size();
        const T* g = self.grad.data();
        const T* va = self.parents[0]->val.data();
        const T* vb = self.parents[1]->val.data();
        if (self.parents[0]->requires_grad) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            T* d = p.grad.data();
            for (int64_t i = 0; i < n; ++i) d[i] += g[i] * vb[i];
        }
        if (self.parents[1]->requires_grad) {
            auto& p = *self.parents[1];
            p.ensure_grad();
            T* d = p.grad.data();
            for (int64_t i = 0; i < n; ++i) d[i] += g[i] * va[i];
        }
    });
}

template <class T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] *= c;
    return make_op<T>(std::move(out), {a}, [c](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T* g = self.grad.data();
        T* d = p.grad.data();
        for (int64_t i = 0; i < self.grad.size(); ++i) d[i] += c * g[i];
    });
}

template <class T>
Var<T> neg(const Var<T>& a) {
    return scale(a, T(-1));
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T c) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] += c;
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        self.parents[0]->accum_grad(self.grad.data());
    });
}

template <class T>
Var<T> square(const Var<T>& a) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] *= po[i];
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T* g = self.grad.data();
        const T* x = p.val.data();
        T* d = p.grad.data();
        for (int64_t i = 0; i < self.grad.size(); ++i) d[i] += T(2) * x[i] * g[i];
    });
}

template <class T>
Var<T> abs_op(const Var<T>& a) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = std::abs(po[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T* g = self.grad.data();
        const T* x = p.val.data();
        T* d = p.grad.data();
        for (int64_t i = 0; i < self.grad.size(); ++i) {
            const T s = x[i] > T(0) ? T(1) : (x[i] < T(0) ? T(-1) : T(0));
            d[i] += s * g[i];
        }
    });
}

template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i)
        if (po[i] < T(0)) po[i] *= slope;
    return make_op<T>(std::move(out), {a}, [slope](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T* g = self.grad.data();
        const T* x = p.val.data();
        T* d = p.grad.data();
        for (int64_t i = 0; i < self.grad.size(); ++i)
            d[i] += (x[i] >= T(0) ? g[i] : slope * g[i]);
    });
}

template <class T>
Var<T> tanh_op(const Var<T>& a) {
    Tensor<T> out = a.val();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = std::tanh(po[i]);
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T* g = self.grad.data();
        const T* y = self.val.data();
        T* d = p.grad.data();
        for (int64_t i = 0; i < self.grad.size(); ++i)
            d[i] += (T(1) - y[i] * y[i]) * g[i];
    });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
    Tensor<T> out = a.val().reshaped(std::move(s));
    return make_op<T>(std::move(out), {a}, [](Node<T>& self) {
        self.parents[0]->accum_grad(self.grad.data());
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <class T>
Var<T> sum_all(const Var<T>& a) {
    T s = T(0);
    const T* p = a.val().data();
    for (int64_t i = 0; i < a.size(); ++i) s += p[i];
    return make_op<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T g = self.grad[0];
        T* d = p.grad.data();
        for (int64_t i = 0; i < p.val.size(); ++i) d[i] += g;
    });
}

template <class T>
Var<T> mean_all(const Var<T>& a) {
    const int64_t n = a.size();
    T s = T(0);
    const T* p = a.val().data();
    for (int64_t i = 0; i < n; ++i) s += p[i];
    s /= static_cast<T>(n);
    return make_op<T>(Tensor<T>::scalar(s), {a}, [n](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const T g = self.grad[0] / static_cast<T>(n);
        T* d = p.grad.data();
        for (int64_t i = 0; i < n; ++i) d[i] += g;
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// y = x W^T + b with x:[n,in], W:[out,in], b:[out].
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
    if (x.shape().size() != 2 || W.shape().size() != 2 || x.dim(1) != W.dim(1))
        throw ShapeError("linear: x " + shape_str(x.shape()) + " W " + shape_str(W.shape()));
    if (b.size() != W.dim(0)) throw ShapeError("linear: bias length");
    const int n = x.dim(0), in = x.dim(1), out = W.dim(0);
    Tensor<T> y(Shape{n, out});
    ConstMatMap<T> xm(x.val().data(), n, in);
    ConstMatMap<T> wm(W.val().data(), out, in);
    MatMap<T> ym(y.data(), n, out);
    ym.noalias() = xm * wm.transpose();
    const T* pb = b.val().data();
    for (int i = 0; i < n; ++i)
        for (int o = 0; o < out; ++o) y[static_cast<int64_t>(i) * out + o] += pb[o];
    return make_op<T>(std::move(y), {x, W, b}, [n, in, out](Node<T>& self) {
        ConstMatMap<T> g(self.grad.data(), n, out);
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb2 = *self.parents[2];
        ConstMatMap<T> xm(px.val.data(), n, in);
        ConstMatMap<T> wm(pw.val.data(), out, in);
        if (px.requires_grad) {
            px.ensure_grad();
            MatMap<T> dx(px.grad.data(), n, in);
            dx.noalias() += g * wm;
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            MatMap<T> dw(pw.grad.data(), out, in);
            dw.noalias() += g.transpose() * xm;
        }
        if (pb2.requires_grad) {
            pb2.ensure_grad();
            T* db = pb2.grad.data();
            const T* gp = self.grad.data();
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < out; ++o) db[o] += gp[static_cast<int64_t>(i) * out + o];
        }
    });
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, odd kernel, same padding) and resampling
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* x, int C, int H, int W, int k, T* col) {
    const int pad = k / 2;
    const int HW = H * W;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = col + (static_cast<int64_t>(c) * k * k + ki * k + kj) * HW;
                const int di = ki - pad, dj = kj - pad;
                for (int i = 0; i < H; ++i) {
                    const int si = i + di;
                    if (si < 0 || si >= H) {
                        std::fill(dst + i * W, dst + (i + 1) * W, T(0));
                        continue;
                    }
                    const T* src = x + (static_cast<int64_t>(c) * H + si) * W;
                    for (int j = 0; j < W; ++j) {
                        const int sj = j + dj;
                        dst[i * W + j] = (sj < 0 || sj >= W) ? T(0) : src[sj];
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* col, int C, int H, int W, int k, T* x) {
    const int pad = k / 2;
    const int HW = H * W;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = col + (static_cast<int64_t>(c) * k * k + ki * k + kj) * HW;
                const int di = ki - pad, dj = kj - pad;
                for (int i = 0; i < H; ++i) {
                    const int si = i + di;
                    if (si < 0 || si >= H) continue;
                    T* dst = x + (static_cast<int64_t>(c) * H + si) * W;
                    for (int j = 0; j < W; ++j) {
                        const int sj = j + dj;
                        if (sj >= 0 && sj < W) dst[sj] += src[i * W + j];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x:[N,C,H,W], W:[OC,C,k,k], b:[OC] -> [N,OC,H,W].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& W, const Var<T>& b) {
    if (x.shape().size() != 4 || W.shape().size() != 4)
        throw ShapeError("conv2d expects 4-d input and weight");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), Wd = x.dim(3);
    const int OC = W.dim(0), k = W.dim(2);
    if (W.dim(1) != C || W.dim(3) != k || k % 2 == 0)
        throw ShapeError("conv2d weight " + shape_str(W.shape()) + " for input " +
                         shape_str(x.shape()));
    if (b.size() != OC) throw ShapeError("conv2d bias length");
    const int HW = H * Wd;
    const int ckk = C * k * k;

    Tensor<T> out(Shape{N, OC, H, Wd});
    // im2col buffer for the whole batch; kept alive for the weight-gradient
    // GEMM only when the weights require gradients.
    auto col = std::make_shared<Tensor<T>>();
    const bool need_col_cache = W.requires_grad();
    const bool k1 = (k == 1);
    if (!k1) *col = Tensor<T>(Shape{N, ckk, HW});

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int n = 0; n < N; ++n) {
        const T* xn = x.val().data() + static_cast<int64_t>(n) * C * HW;
        ConstMatMap<T> wm(W.val().data(), OC, ckk);
        MatMap<T> om(out.data() + static_cast<int64_t>(n) * OC * HW, OC, HW);
        if (k1) {
            ConstMatMap<T> cm(xn, ckk, HW);
            om.noalias() = wm * cm;
        } else {
            T* coln = col->data() + static_cast<int64_t>(n) * ckk * HW;
            detail::im2col(xn, C, H, Wd, k, coln);
            ConstMatMap<T> cm(coln, ckk, HW);
            om.noalias() = wm * cm;
        }
        const T* pb = b.val().data();
        T* po = out.data() + static_cast<int64_t>(n) * OC * HW;
        for (int oc = 0; oc < OC; ++oc) {
            const T bb = pb[oc];
            for (int i = 0; i < HW; ++i) po[static_cast<int64_t>(oc) * HW + i] += bb;
        }
    }
    if (!need_col_cache) col.reset();

    return make_op<T>(std::move(out), {x, W, b},
                      [N, C, H, Wd, OC, k, HW, ckk, col](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const bool k1 = (k == 1);
        if (px.requires_grad) {
            px.ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (int n = 0; n < N; ++n) {
                ConstMatMap<T> g(self.grad.data() + static_cast<int64_t>(n) * OC * HW, OC, HW);
                ConstMatMap<T> wm(pw.val.data(), OC, ckk);
                T* dxn = px.grad.data() + static_cast<int64_t>(n) * C * HW;
                if (k1) {
                    MatMap<T> dxm(dxn, ckk, HW);
                    dxm.noalias() += wm.transpose() * g;
                } else {
                    RowMat<T> colg = wm.transpose() * g;  // [ckk, HW]
                    detail::col2im_add(colg.data(), C, H, Wd, k, dxn);
                }
            }
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            MatMap<T> dw(pw.grad.data(), OC, ckk);
            // Sequential over batch for a reproducible accumulation order.
            for (int n = 0; n < N; ++n) {
                ConstMatMap<T> g(self.grad.data() + static_cast<int64_t>(n) * OC * HW, OC, HW);
                const T* coln = k1 ? px.val.data() + static_cast<int64_t>(n) * C * HW
                                   : col->data() + static_cast<int64_t>(n) * ckk * HW;
                ConstMatMap<T> cm(coln, ckk, HW);
                dw.noalias() += g * cm.transpose();
            }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            T* db = pb.grad.data();
            const T* g = self.grad.data();
            for (int n = 0; n < N; ++n)
                for (int oc = 0; oc < OC; ++oc) {
                    T s = T(0);
                    const T* gp = g + (static_cast<int64_t>(n) * OC + oc) * HW;
                    for (int i = 0; i < HW; ++i) s += gp[i];
                    db[oc] += s;
                }
        }
    });
}

// 2x2 average pooling, stride 2. Requires even spatial dims.
template <class T>
Var<T> avg_pool2(const Var<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2) throw ShapeError("avg_pool2 needs even spatial dims, got " +
                                         shape_str(x.shape()));
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out(Shape{N, C, Ho, Wo});
    const T* px = x.val().data();
    T* po = out.data();
    const int64_t planes = static_cast<int64_t>(N) * C;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t p = 0; p < planes; ++p) {
        const T* in = px + p * H * W;
        T* o = po + p * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) {
                const T* r0 = in + (2 * i) * W + 2 * j;
                const T* r1 = r0 + W;
                o[i * Wo + j] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
            }
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Ho, Wo](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const int64_t planes = static_cast<int64_t>(N) * C;
        for (int64_t pl = 0; pl < planes; ++pl) {
            const T* g = self.grad.data() + pl * Ho * Wo;
            T* d = p.grad.data() + pl * H * W;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) {
                    const T gg = g[i * Wo + j] * T(0.25);
                    d[(2 * i) * W + 2 * j] += gg;
                    d[(2 * i) * W + 2 * j + 1] += gg;
                    d[(2 * i + 1) * W + 2 * j] += gg;
                    d[(2 * i + 1) * W + 2 * j + 1] += gg;
                }
        }
    });
}

// Nearest-neighbour 2x upsampling.
template <class T>
Var<T> upsample_nearest2(const Var<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = H * 2, Wo = W * 2;
    Tensor<T> out(Shape{N, C, Ho, Wo});
    const T* px = x.val().data();
    T* po = out.data();
    const int64_t planes = static_cast<int64_t>(N) * C;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t p = 0; p < planes; ++p) {
        const T* in = px + p * H * W;
        T* o = po + p * Ho * Wo;
        for (int i = 0; i < Ho; ++i)
            for (int j = 0; j < Wo; ++j) o[i * Wo + j] = in[(i / 2) * W + j / 2];
    }
    return make_op<T>(std::move(out), {x}, [N, C, H, W, Ho, Wo](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const int64_t planes = static_cast<int64_t>(N) * C;
        for (int64_t pl = 0; pl < planes; ++pl) {
            const T* g = self.grad.data() + pl * Ho * Wo;
            T* d = p.grad.data() + pl * H * W;
            for (int i = 0; i < Ho; ++i)
                for (int j = 0; j < Wo; ++j) d[(i / 2) * W + j / 2] += g[i * Wo + j];
        }
    });
}

// [N,C,H,W] -> [N,C] mean over spatial dims.
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<T> out(Shape{N, C});
    const T* px = x.val().data();
    for (int64_t p = 0; p < static_cast<int64_t>(N) * C; ++p) {
        T s = T(0);
        for (int i = 0; i < HW; ++i) s += px[p * HW + i];
        out[p] = s / static_cast<T>(HW);
    }
    return make_op<T>(std::move(out), {x}, [N, C, HW](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int64_t pl = 0; pl < static_cast<int64_t>(N) * C; ++pl) {
            const T g = self.grad[pl] / static_cast<T>(HW);
            T* d = p.grad.data() + pl * HW;
            for (int i = 0; i < HW; ++i) d[i] += g;
        }
    });
}

// ---------------------------------------------------------------------------
// Normalization and style modulation
// ---------------------------------------------------------------------------

// Per-sample, per-channel normalization over spatial positions.
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5)) {
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor<T> out(x.shape());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(N) * C);
    const T* px = x.val().data();
    T* po = out.data();
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T* in = px + p * HW;
        T mu = T(0);
        for (int i = 0; i < HW; ++i) mu += in[i];
        mu /= static_cast<T>(HW);
        T var = T(0);
        for (int i = 0; i < HW; ++i) {
            const T d = in[i] - mu;
            var += d * d;
        }
        var /= static_cast<T>(HW);
        const T istd = T(1) / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(p)] = istd;
        T* o = po + p * HW;
        for (int i = 0; i < HW; ++i) o[i] = (in[i] - mu) * istd;
    }
    return make_op<T>(std::move(out), {x}, [N, C, HW, inv_std](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const int64_t planes = static_cast<int64_t>(N) * C;
        for (int64_t pl = 0; pl < planes; ++pl) {
            const T* g = self.grad.data() + pl * HW;
            const T* y = self.val.data() + pl * HW;
            T* d = p.grad.data() + pl * HW;
            T gmean = T(0), gymean = T(0);
            for (int i = 0; i < HW; ++i) {
                gmean += g[i];
                gymean += g[i] * y[i];
            }
            gmean /= static_cast<T>(HW);
            gymean /= static_cast<T>(HW);
            const T istd = (*inv_std)[static_cast<size_t>(pl)];
            for (int i = 0; i < HW; ++i) d[i] += istd * (g[i] - gmean - y[i] * gymean);
        }
    });
}

// y[n,c,:,:] = x[n,c,:,:] * s[n,c] + t[n,c].
template <class T>
Var<T> scale_shift_hw(const Var<T>& x, const Var<T>& s, const Var<T>& t) {
    const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (s.shape() != Shape{N, C} || t.shape() != Shape{N, C})
        throw ShapeError("scale_shift_hw: modulation must be [N,C]");
    Tensor<T> out(x.shape());
    const T* px = x.val().data();
    const T* ps = s.val().data();
    const T* pt = t.val().data();
    T* po = out.data();
    const int64_t planes = static_cast<int64_t>(N) * C;
    for (int64_t p = 0; p < planes; ++p) {
        const T sc = ps[p], sh = pt[p];
        for (int i = 0; i < HW; ++i) po[p * HW + i] = px[p * HW + i] * sc + sh;
    }
    return make_op<T>(std::move(out), {x, s, t}, [N, C, HW](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& ps = *self.parents[1];
        auto& pt = *self.parents[2];
        const int64_t planes = static_cast<int64_t>(N) * C;
        const T* g = self.grad.data();
        if (px.requires_grad) {
            px.ensure_grad();
            const T* sv = ps.val.data();
            T* d = px.grad.data();
            for (int64_t p = 0; p < planes; ++p)
                for (int i = 0; i < HW; ++i) d[p * HW + i] += g[p * HW + i] * sv[p];
        }
        if (ps.requires_grad) {
            ps.ensure_grad();
            const T* xv = px.val.data();
            T* d = ps.grad.data();
            for (int64_t p = 0; p < planes; ++p) {
                T acc = T(0);
                for (int i = 0; i < HW; ++i) acc += g[p * HW + i] * xv[p * HW + i];
                d[p] += acc;
            }
        }
        if (pt.requires_grad) {
            pt.ensure_grad();
            T* d = pt.grad.data();
            for (int64_t p = 0; p < planes; ++p) {
                T acc = T(0);
                for (int i = 0; i < HW; ++i) acc += g[p * HW + i];
                d[p] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Indexing
// ---------------------------------------------------------------------------

// out[i] = x[i, idx[i]] — per-sample head selection on [n,D].
template <class T>
Var<T> gather_cols(const Var<T>& x, std::vector<int> idx) {
    const int n = x.dim(0), D = x.dim(1);
    if (static_cast<int>(idx.size()) != n) throw ShapeError("gather_cols: index count");
    for (int i : idx)
        if (i < 0 || i >= D) throw DomainError("label " + std::to_string(i) +
                                               " out of range [0," + std::to_string(D) + ")");
    Tensor<T> out(Shape{n});
    for (int i = 0; i < n; ++i) out[i] = x.val()[static_cast<int64_t>(i) * D + idx[static_cast<size_t>(i)]];
    return make_op<T>(std::move(out), {x}, [n, D, idx = std::move(idx)](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i)
            p.grad[static_cast<int64_t>(i) * D + idx[static_cast<size_t>(i)]] += self.grad[i];
    });
}

// out[i,:] = x[i, idx[i]*block : (idx[i]+1)*block] — per-sample branch selection.
template <class T>
Var<T> gather_cols_block(const Var<T>& x, std::vector<int> idx, int block) {
    const int n = x.dim(0), M = x.dim(1);
    if (M % block != 0) throw ShapeError("gather_cols_block: width not divisible by block");
    const int D = M / block;
    if (static_cast<int>(idx.size()) != n) throw ShapeError("gather_cols_block: index count");
    for (int i : idx)
        if (i < 0 || i >= D) throw DomainError("label " + std::to_string(i) +
                                               " out of range [0," + std::to_string(D) + ")");
    Tensor<T> out(Shape{n, block});
    for (int i = 0; i < n; ++i) {
        const T* src = x.val().data() + static_cast<int64_t>(i) * M + idx[static_cast<size_t>(i)] * block;
        std::copy(src, src + block, out.data() + static_cast<int64_t>(i) * block);
    }
    return make_op<T>(std::move(out), {x}, [n, M, block, idx = std::move(idx)](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const T* g = self.grad.data() + static_cast<int64_t>(i) * block;
            T* d = p.grad.data() + static_cast<int64_t>(i) * M + idx[static_cast<size_t>(i)] * block;
            for (int j = 0; j < block; ++j) d[j] += g[j];
        }
    });
}

// Column slice [n, c0:c0+len).
template <class T>
Var<T> slice_cols(const Var<T>& x, int c0, int len) {
    const int n = x.dim(0), M = x.dim(1);
    if (c0 < 0 || c0 + len > M) throw ShapeError("slice_cols out of range");
    Tensor<T> out(Shape{n, len});
    for (int i = 0; i < n; ++i)
        std::copy(x.val().data() + static_cast<int64_t>(i) * M + c0,
                  x.val().data() + static_cast<int64_t>(i) * M + c0 + len,
                  out.data() + static_cast<int64_t>(i) * len);
    return make_op<T>(std::move(out), {x}, [n, M, c0, len](Node<T>& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (int i = 0; i < n; ++i) {
            const T* g = self.grad.data() + static_cast<int64_t>(i) * len;
            T* d = p.grad.data() + static_cast<int64_t>(i) * M + c0;
            for (int j = 0; j < len; ++j) d[j] += g[j];
        }
    });
}

// ---------------------------------------------------------------------------
// Compositions used across the models
// ---------------------------------------------------------------------------

// (1-w)*a + w*b, exact at the endpoints.
template <class T>
Var<T> blend(const Var<T>& a, const Var<T>& b, T w) {
    check_same_shape(a.val(), b.val(), "blend");
    if (w == T(0)) return a;
    if (w == T(1)) return b;
    return add(scale(a, T(1) - w), scale(b, w));
}

template <class T>
Var<T> mean_squared_error(const Var<T>& a, const Var<T>& b) {
    return mean_all(square(sub(a, b)));
}

template <class T>
Var<T> mean_abs_error(const Var<T>& a, const Var<T>& b) {
    return mean_all(abs_op(sub(a, b)));
}

}  // namespace ebit
