#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "ebit/bundle.hpp"
#include "ebit/data.hpp"

namespace ebit {

// ---------------------------------------------------------------------------
// Population distances
// ---------------------------------------------------------------------------

struct FeatureSet {
    Tensor<double> features;  // [n, d]
    std::string extractor_id;

    int n() const { return features.dim(0); }
    int d() const { return features.dim(1); }
};

namespace metric_detail {

inline Eigen::MatrixXd sqrtm_spd(const Eigen::MatrixXd& S, double tol = 1e-9) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    Eigen::VectorXd ev = es.eigenvalues();
    const double scale = std::max(1.0, std::abs(ev.maxCoeff()));
    for (int i = 0; i < ev.size(); ++i) {
        if (ev[i] < -tol * scale)
            throw NumericalError("matrix not PSD in square root (eigenvalue " +
                                 std::to_string(ev[i]) + ")");
        ev[i] = std::sqrt(std::max(0.0, ev[i]));
    }
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline void feature_moments(const FeatureSet& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const int n = f.n(), d = f.d();
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
        f.features.data(), n, d);
    mu = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(n - 1);
}

}  // namespace metric_detail

// True square root of the (generally non-symmetric) product A*B for SPD
// A, B: M = A^{1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}, so M*M = A*B.
inline Eigen::MatrixXd sqrtm_product(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd Ah = metric_detail::sqrtm_spd(A);
    Eigen::MatrixXd inner = metric_detail::sqrtm_spd(Ah * B * Ah);
    return Ah * inner * Ah.inverse();
}

// ||mu_a - mu_b||^2 + Tr(Ca + Cb - 2 (Ca Cb)^{1/2}), with 1e-6 I
// regularization on both covariances before the square root.
inline double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor_id != b.extractor_id)
        throw ConfigError("frechet_distance: extractor mismatch (" + a.extractor_id + " vs " +
                          b.extractor_id + ")");
    if (a.d() != b.d()) throw ShapeError("frechet_distance: feature dims differ");
    const int d = a.d();
    if (a.n() < d + 1 || b.n() < d + 1)
        throw DataError("frechet_distance needs at least d+1 = " + std::to_string(d + 1) +
                        " samples per set (got " + std::to_string(a.n()) + ", " +
                        std::to_string(b.n()) + ")");

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd ca, cb;
    metric_detail::feature_moments(a, mu_a, ca);
    metric_detail::feature_moments(b, mu_b, cb);
    const double reg = 1e-6;
    ca.diagonal().array() += reg;
    cb.diagonal().array() += reg;

    Eigen::MatrixXd ca_half = metric_detail::sqrtm_spd(ca);
    Eigen::MatrixXd cross = metric_detail::sqrtm_spd(ca_half * cb * ca_half);
    const double tr = ca.trace() + cb.trace() - 2.0 * cross.trace();
    return (mu_a - mu_b).squaredNorm() + tr;
}

// Unbiased MMD^2 with polynomial kernel (x.y/d + 1)^3.
inline double kernel_distance(const FeatureSet& a, const FeatureSet& b) {
    if (a.extractor_id != b.extractor_id)
        throw ConfigError("kernel_distance: extractor mismatch");
    if (a.d() != b.d()) throw ShapeError("kernel_distance: feature dims differ");
    const int m = a.n(), n = b.n(), d = a.d();
    if (m < 2 || n < 2) throw ConfigError("kernel_distance needs at least 2 samples per set");

    using RM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RM> A(a.features.data(), m, d);
    Eigen::Map<const RM> B(b.features.data(), n, d);
    auto kernel = [d](Eigen::MatrixXd g) {
        g.array() = (g.array() / d + 1.0).cube();
        return g;
    };
    Eigen::MatrixXd kaa = kernel(A * A.transpose());
    Eigen::MatrixXd kbb = kernel(B * B.transpose());
    Eigen::MatrixXd kab = kernel(A * B.transpose());
    const double term_a = (kaa.sum() - kaa.trace()) / (static_cast<double>(m) * (m - 1));
    const double term_b = (kbb.sum() - kbb.trace()) / (static_cast<double>(n) * (n - 1));
    const double term_ab = 2.0 * kab.sum() / (static_cast<double>(m) * n);
    return term_a + term_b - term_ab;
}

// ---------------------------------------------------------------------------
// Feature extractors
// ---------------------------------------------------------------------------

constexpr int kFeatureDim = 64;
constexpr int kEvalResolution = 32;
constexpr uint64_t kProjectionSeed = 0xEB17;

inline const char* kRandomProjectionId = "random_projection_v1";
inline const char* kTinyEncoderId = "tiny_encoder_v1";

// Fixed-seed Gaussian projection of flattened pixels to kFeatureDim.
template <class T>
FeatureSet random_projection_features(const std::vector<Tensor<T>>& images) {
    if (images.empty()) throw DataError("no images to extract features from");
    FeatureSet out;
    out.extractor_id = kRandomProjectionId;
    const int n = static_cast<int>(images.size());
    out.features = Tensor<double>(Shape{n, kFeatureDim});

    std::vector<Tensor<T>> resized;
    resized.reserve(images.size());
    for (const auto& img : images)
        resized.push_back(resize_chw(img, kEvalResolution, kEvalResolution));
    const int64_t numel = resized[0].size();
    Rng rng(kProjectionSeed);
    Tensor<double> proj(Shape{kFeatureDim, static_cast<int>(numel)});
    rng.fill_normal(proj, 0.0, 1.0 / std::sqrt(static_cast<double>(numel)));
    for (int i = 0; i < n; ++i) {
        if (resized[static_cast<size_t>(i)].size() != numel)
            throw ShapeError("feature extraction: inconsistent image sizes");
        for (int f = 0; f < kFeatureDim; ++f) {
            double acc = 0;
            const double* w = proj.data() + static_cast<int64_t>(f) * numel;
            const T* px = resized[static_cast<size_t>(i)].data();
            for (int64_t k = 0; k < numel; ++k) acc += w[k] * static_cast<double>(px[k]);
            out.features[static_cast<int64_t>(i) * kFeatureDim + f] = acc;
        }
    }
    return out;
}

// Small convolutional embedder trained once per dataset with an autoencoding
// objective, then frozen. Works at kEvalResolution regardless of the
// training level.
template <class T>
class TinyEncoder {
public:
    TinyEncoder() = default;

    explicit TinyEncoder(Rng& rng)
        : c1_(3, 8, 3, rng), c2_(8, 16, 3, rng), c3_(16, 24, 3, rng),
          to_code_(24, kFeatureDim, rng, true),
          from_code_(kFeatureDim, 24 * 4 * 4, rng),
          d1_(24, 16, 3, rng), d2_(16, 8, 3, rng), d3_(8, 3, 3, rng) {}

    Var<T> encode(const Var<T>& x) const {
        Var<T> h = avg_pool2(leaky_relu(c1_.forward(x)));      // 16
        h = avg_pool2(leaky_relu(c2_.forward(h)));             // 8
        h = avg_pool2(leaky_relu(c3_.forward(h)));             // 4
        return to_code_.forward(global_avg_pool(h));
    }

    Var<T> decode(const Var<T>& code) const {
        const int n = code.dim(0);
        Var<T> h = reshape(leaky_relu(from_code_.forward(code)), Shape{n, 24, 4, 4});
        h = leaky_relu(d1_.forward(upsample_nearest2(h)));     // 8
        h = leaky_relu(d2_.forward(upsample_nearest2(h)));     // 16
        return tanh_op(d3_.forward(upsample_nearest2(h)));     // 32
    }

    ParamList<T> params() const {
        ParamList<T> ps;
        c1_.collect(ps, "c1");
        c2_.collect(ps, "c2");
        c3_.collect(ps, "c3");
        to_code_.collect(ps, "to_code");
        from_code_.collect(ps, "from_code");
        d1_.collect(ps, "d1");
        d2_.collect(ps, "d2");
        d3_.collect(ps, "d3");
        return ps;
    }

private:
    ConvLayer<T> c1_, c2_, c3_;
    LinearLayer<T> to_code_, from_code_;
    ConvLayer<T> d1_, d2_, d3_;
};

// Deterministic training recipe for the tiny encoder: fixed seed, fixed step
// count, reconstruction loss over both domains at kEvalResolution.
template <class T>
TinyEncoder<T> train_tiny_encoder(PixelStore<T>& store, uint64_t seed = 2024,
                                  int steps = 600, int batch = 8) {
    Rng rng(seed);
    TinyEncoder<T> enc(rng);
    ParamList<T> ps = enc.params();
    AdamConfig ac;
    ac.lr = 1e-3;
    ac.beta1 = 0.9;
    Adam<T> opt(ac);

    const auto& manifest = store.manifest();
    const int D = manifest.num_domains();
    // Prefer the pyramid level matching the evaluation resolution.
    int level = 1;
    for (int l = 1; l <= store.plan().num_levels; ++l)
        if (store.plan().resolution(l) == kEvalResolution) level = l;

    for (int step = 0; step < steps; ++step) {
        Tensor<T> x(Shape{batch, 3, kEvalResolution, kEvalResolution});
        for (int i = 0; i < batch; ++i) {
            const int d = rng.uniform_int(D);
            const int idx = rng.uniform_int(store.train_count(d));
            Tensor<T> img = store.image(level, d, idx);
            if (img.dim(1) != kEvalResolution)
                img = resize_chw(img, kEvalResolution, kEvalResolution);
            std::copy(img.data(), img.data() + img.size(),
                      x.data() + static_cast<int64_t>(i) * img.size());
        }
        Var<T> xv = Var<T>::constant(x);
        Var<T> recon = enc.decode(enc.encode(xv));
        Var<T> loss = mean_squared_error(recon, xv);
        backward(loss);
        opt.step(ps);
    }
    return enc;
}

template <class T>
FeatureSet tiny_encoder_features(const TinyEncoder<T>& enc, const std::vector<Tensor<T>>& images) {
    if (images.empty()) throw DataError("no images to extract features from");
    const int n = static_cast<int>(images.size());
    FeatureSet out;
    out.extractor_id = kTinyEncoderId;
    out.features = Tensor<double>(Shape{n, kFeatureDim});
    ParamList<T> ps = enc.params();
    FrozenParams<T> freeze(ps);
    const int chunk = 32;
    for (int base = 0; base < n; base += chunk) {
        const int bn = std::min(chunk, n - base);
        Tensor<T> x(Shape{bn, 3, kEvalResolution, kEvalResolution});
        for (int i = 0; i < bn; ++i) {
            Tensor<T> img = resize_chw(images[static_cast<size_t>(base + i)], kEvalResolution,
                                       kEvalResolution);
            std::copy(img.data(), img.data() + img.size(),
                      x.data() + static_cast<int64_t>(i) * img.size());
        }
        Var<T> code = enc.encode(Var<T>::constant(x));
        for (int i = 0; i < bn; ++i)
            for (int f = 0; f < kFeatureDim; ++f)
                out.features[static_cast<int64_t>(base + i) * kFeatureDim + f] =
                    static_cast<double>(code.val()[static_cast<int64_t>(i) * kFeatureDim + f]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Qualitative outputs
// ---------------------------------------------------------------------------

// Tile CHW images (all the same size) into one image; empty cells stay at
// the background value.
template <class T>
ImageU8 assemble_grid(const std::vector<std::vector<Tensor<T>>>& cells, int pad = 2) {
    int res = 0;
    size_t cols = 0;
    for (const auto& row : cells) {
        cols = std::max(cols, row.size());
        for (const auto& c : row)
            if (!c.empty()) res = c.dim(1);
    }
    if (res == 0) throw ShapeError("assemble_grid: no cells");
    const int rows = static_cast<int>(cells.size());
    ImageU8 out;
    out.height = static_cast<int>(rows) * (res + pad) + pad;
    out.width = static_cast<int>(cols) * (res + pad) + pad;
    out.px.assign(static_cast<size_t>(out.width) * out.height * 3, 24);
    for (int r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cells[static_cast<size_t>(r)].size(); ++c) {
            const auto& cell = cells[static_cast<size_t>(r)][c];
            if (cell.empty()) continue;
            ImageU8 tile = from_chw(cell);
            const int oy = pad + r * (res + pad);
            const int ox = pad + static_cast<int>(c) * (res + pad);
            for (int y = 0; y < res; ++y)
                std::copy(tile.row(y), tile.row(y) + res * 3,
                          out.row(oy + y) + static_cast<size_t>(ox) * 3);
        }
    }
    return out;
}

template <class T>
std::vector<Tensor<T>> split_batch(const Tensor<T>& batch) {
    const int n = batch.dim(0);
    const Shape img_shape{batch.dim(1), batch.dim(2), batch.dim(3)};
    const int64_t stride = numel(img_shape);
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tensor<T> t(img_shape);
        std::copy(batch.data() + i * stride, batch.data() + (i + 1) * stride, t.data());
        out.push_back(std::move(t));
    }
    return out;
}

// Sources across the first row; one translated row per random style, the
// same latent shared within a row.
template <class T, class Bundle>
ImageU8 diverse_grid(const Bundle& bundle, const Tensor<T>& sources,
                     const std::vector<int>& y_prime, int num_styles, Rng& rng) {
    const int n = sources.dim(0);
    std::vector<std::vector<Tensor<T>>> cells;
    cells.push_back(split_batch(sources));
    for (int s = 0; s < num_styles; ++s) {
        Tensor<T> z1 = bundle.sample_latent(1, rng);
        Tensor<T> z(Shape{n, z1.dim(1)});
        for (int i = 0; i < n; ++i)
            std::copy(z1.data(), z1.data() + z1.size(), z.data() + static_cast<int64_t>(i) * z1.size());
        Var<T> c = bundle.generate_style(z, y_prime);
        Var<T> out = bundle.translate(sources, c);
        cells.push_back(split_batch(out.val()));
    }
    return assemble_grid(cells);
}

// Sources across the first row, references down the first column, body
// [i][j] = translate(source_j, encode(reference_i)).
template <class T, class Bundle>
ImageU8 reference_grid(const Bundle& bundle, const Tensor<T>& sources,
                       const Tensor<T>& references, const std::vector<int>& ref_labels) {
    const int ns = sources.dim(0), nr = references.dim(0);
    if (static_cast<int>(ref_labels.size()) != nr)
        throw DomainError("reference_grid: one label per reference image");
    std::vector<std::vector<Tensor<T>>> cells;
    std::vector<Tensor<T>> top;
    top.emplace_back();  // blank corner
    for (auto& s : split_batch(sources)) top.push_back(std::move(s));
    cells.push_back(std::move(top));

    auto refs = split_batch(references);
    for (int r = 0; r < nr; ++r) {
        Tensor<T> ref_batch(Shape{1, references.dim(1), references.dim(2), references.dim(3)});
        std::copy(refs[static_cast<size_t>(r)].data(),
                  refs[static_cast<size_t>(r)].data() + refs[static_cast<size_t>(r)].size(),
                  ref_batch.data());
        Var<T> code1 = bundle.encode(ref_batch, {ref_labels[static_cast<size_t>(r)]});
        // One code per source image.
        Tensor<T> codes(Shape{ns, code1.dim(1)});
        for (int j = 0; j < ns; ++j)
            std::copy(code1.val().data(), code1.val().data() + code1.size(),
                      codes.data() + static_cast<int64_t>(j) * code1.size());
        Var<T> out = bundle.translate(sources, Var<T>::constant(codes));
        std::vector<Tensor<T>> row;
        row.push_back(refs[static_cast<size_t>(r)]);
        for (auto& img : split_batch(out.val())) row.push_back(std::move(img));
        cells.push_back(std::move(row));
    }
    return assemble_grid(cells);
}

template <class T>
struct CycleResult {
    Tensor<T> translated;
    Tensor<T> back;
    double l1 = 0;
};

// x -> y' with a generator-sampled style, then back to y with the style code
// encoded from the original image.
template <class T, class Bundle>
CycleResult<T> cycle_roundtrip(const Bundle& bundle, const Tensor<T>& x,
                               const std::vector<int>& y, const std::vector<int>& y_prime,
                               Rng& rng) {
    Tensor<T> z = bundle.sample_latent(x.dim(0), rng);
    Var<T> c_fwd = bundle.generate_style(z, y_prime);
    Var<T> translated = bundle.translate(x, c_fwd);
    Var<T> c_back = bundle.encode(x, y);
    Var<T> back = bundle.translate(translated.val(), c_back);
    CycleResult<T> res;
    res.translated = translated.val();
    res.back = back.val();
    double acc = 0;
    for (int64_t i = 0; i < x.size(); ++i)
        acc += std::abs(static_cast<double>(x[i]) - static_cast<double>(res.back[i]));
    res.l1 = acc / static_cast<double>(x.size());
    return res;
}

}  // namespace ebit
