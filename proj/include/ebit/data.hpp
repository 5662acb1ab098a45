#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ebit/core/rng.hpp"
#include "ebit/image_io.hpp"
#include "ebit/progressive.hpp"

namespace ebit {

struct DomainInfo {
    std::string name;
    int label = 0;
    std::vector<std::string> files;  // sorted, absolute paths
};

struct DatasetManifest {
    std::string root;
    std::vector<DomainInfo> domains;
    int native_resolution = 0;
    std::vector<std::string> warnings;  // undecodable files, excluded

    int num_domains() const { return static_cast<int>(domains.size()); }

    int label_of(const std::string& name) const {
        for (const auto& d : domains)
            if (d.name == name) return d.label;
        throw DomainError("unknown domain name '" + name + "'");
    }

    std::string describe() const {
        std::string s = "dataset " + root + " (" + std::to_string(native_resolution) + "px)\n";
        for (const auto& d : domains)
            s += "  [" + std::to_string(d.label) + "] " + d.name + ": " +
                 std::to_string(d.files.size()) + " images\n";
        return s;
    }
};

// Scan root/<domain>/<images>. Domains are ordered lexicographically by
// directory name; every image is decode-checked, failures go to warnings.
inline DatasetManifest scan_dataset(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DataError("dataset root " + root + " is not a directory");

    DatasetManifest m;
    m.root = root;
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path().filename().string());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.size() < 2)
        throw DataError("dataset needs at least 2 domain directories, found " +
                        std::to_string(dirs.size()));

    int label = 0;
    for (const auto& name : dirs) {
        DomainInfo d;
        d.name = name;
        d.label = label++;
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(fs::path(root) / name))
            if (e.is_regular_file()) files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                ImageU8 img = read_image(f);
                if (m.native_resolution == 0)
                    m.native_resolution = std::min(img.width, img.height);
                d.files.push_back(f);
            } catch (const DataError& err) {
                m.warnings.push_back(std::string(err.what()));
            }
        }
        if (d.files.empty()) throw DataError("domain directory '" + name + "' has no decodable images");
        m.domains.push_back(std::move(d));
    }
    return m;
}

// Decoded dataset pinned in memory as per-level [-1,1] CHW tensors. Each
// image is resized once per level; the split boundary puts the tail of the
// sorted file list into the holdout.
template <class T>
class PixelStore {
public:
    PixelStore() = default;

    PixelStore(const DatasetManifest& manifest, const ChannelPlan& plan, double holdout_fraction)
        : manifest_(manifest), plan_(plan) {
        if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
            throw ConfigError("holdout fraction must be in [0,1)");
        levels_.resize(static_cast<size_t>(plan.num_levels));
        train_count_.resize(manifest.domains.size());
        for (size_t d = 0; d < manifest.domains.size(); ++d) {
            const auto n = static_cast<long long>(manifest.domains[d].files.size());
            long long holdout = static_cast<long long>(holdout_fraction * static_cast<double>(n));
            if (holdout_fraction > 0.0 && holdout == 0) holdout = 1;
            if (holdout >= n) holdout = n - 1;
            train_count_[d] = static_cast<int>(n - holdout);
        }
    }

    const DatasetManifest& manifest() const { return manifest_; }
    const ChannelPlan& plan() const { return plan_; }
    int train_count(int domain) const { return train_count_[static_cast<size_t>(domain)]; }
    int holdout_count(int domain) const {
        return static_cast<int>(manifest_.domains[static_cast<size_t>(domain)].files.size()) -
               train_count_[static_cast<size_t>(domain)];
    }

    // CHW image of one file at the level's resolution, cached.
    const Tensor<T>& image(int level, int domain, int index) {
        ensure_level(level);
        auto& dom = levels_[static_cast<size_t>(level - 1)][static_cast<size_t>(domain)];
        return dom[static_cast<size_t>(index)];
    }

private:
    void ensure_level(int level) {
        auto& lv = levels_.at(static_cast<size_t>(level - 1));
        if (!lv.empty()) return;
        const int res = plan_.resolution(level);
        lv.resize(manifest_.domains.size());
        for (size_t d = 0; d < manifest_.domains.size(); ++d) {
            const auto& files = manifest_.domains[d].files;
            lv[d].reserve(files.size());
            for (const auto& f : files) {
                Tensor<T> chw = to_chw<T>(read_image(f));
                lv[d].push_back(resize_chw(chw, res, res));
            }
        }
    }

    DatasetManifest manifest_;
    ChannelPlan plan_;
    std::vector<std::vector<std::vector<Tensor<T>>>> levels_;  // [level-1][domain][index]
    std::vector<int> train_count_;
};

enum class Split { train, holdout };

template <class T>
struct Batch {
    Tensor<T> images;            // [n,3,R,R]
    std::vector<int> y;          // observed labels
    std::vector<int> y_prime;    // uniform target labels
};

// Uniform draw over the split's images (labels follow the directory), target
// labels uniform over all domains, optional horizontal flip.
template <class T>
Batch<T> sample_batch(PixelStore<T>& store, int level, int n, Rng& rng,
                      Split split = Split::train, bool flip = false) {
    if (n < 1) throw ConfigError("batch size must be >= 1");
    const auto& manifest = store.manifest();
    const int D = manifest.num_domains();
    std::vector<std::pair<int, int>> pool;  // (domain, index)
    for (int d = 0; d < D; ++d) {
        const int tc = store.train_count(d);
        const int total = static_cast<int>(manifest.domains[static_cast<size_t>(d)].files.size());
        if (split == Split::train)
            for (int i = 0; i < tc; ++i) pool.emplace_back(d, i);
        else
            for (int i = tc; i < total; ++i) pool.emplace_back(d, i);
    }
    if (pool.empty()) throw DataError("no images available in the requested split");

    Batch<T> batch;
    batch.y.resize(static_cast<size_t>(n));
    batch.y_prime.resize(static_cast<size_t>(n));
    Tensor<T> first = store.image(level, pool[0].first, pool[0].second);
    const int R = first.dim(1);
    batch.images = Tensor<T>(Shape{n, 3, R, R});
    for (int i = 0; i < n; ++i) {
        const auto [d, idx] = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
        const Tensor<T>& img = store.image(level, d, idx);
        T* dst = batch.images.data() + static_cast<int64_t>(i) * 3 * R * R;
        const bool do_flip = flip && rng.uniform() < 0.5;
        if (!do_flip) {
            std::copy(img.data(), img.data() + img.size(), dst);
        } else {
            for (int c = 0; c < 3; ++c)
                for (int yy = 0; yy < R; ++yy)
                    for (int xx = 0; xx < R; ++xx)
                        dst[(static_cast<int64_t>(c) * R + yy) * R + xx] =
                            img[(static_cast<int64_t>(c) * R + yy) * R + (R - 1 - xx)];
        }
        batch.y[static_cast<size_t>(i)] = d;
        batch.y_prime[static_cast<size_t>(i)] = rng.uniform_int(D);
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic two-domain toy dataset
// ---------------------------------------------------------------------------

namespace toy {

inline void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
    const int i = static_cast<int>(h);
    const double f = h - i;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i % 6) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

constexpr int kToyResolution = 32;
constexpr const char* kWarmDomain = "circle_warm";
constexpr const char* kCoolDomain = "square_cool";

// Shared content factor: shape position and size. Domain-specific style:
// warm-hued circles vs cool-hued squares on a dark background.
inline ImageU8 render_shape(bool square, double cx, double cy, double radius, double hue,
                            double sat, double val, double bg) {
    const int R = kToyResolution;
    ImageU8 img;
    img.width = img.height = R;
    img.px.resize(static_cast<size_t>(R) * R * 3);
    double rgb[3];
    hsv_to_rgb(hue, sat, val, rgb);
    for (int y = 0; y < R; ++y) {
        uint8_t* row = img.row(y);
        for (int x = 0; x < R; ++x) {
            double dist;
            if (square) {
                dist = std::max(std::abs(x - cx), std::abs(y - cy));
            } else {
                const double dx = x - cx, dy = y - cy;
                dist = std::sqrt(dx * dx + dy * dy);
            }
            const double cover = std::clamp(radius - dist + 0.5, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double v = cover * rgb[c] + (1 - cover) * bg;
                row[x * 3 + c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    }
    return img;
}

}  // namespace toy

// Writes per_domain images for each of the two toy domains and returns the
// scanned manifest. Identical seeds produce byte-identical files.
inline DatasetManifest make_toy_dataset(const std::string& out_root, int per_domain,
                                        uint64_t seed) {
    if (per_domain < 100) throw ConfigError("toy dataset needs per_domain >= 100");
    namespace fs = std::filesystem;
    Rng rng(seed);
    for (int domain = 0; domain < 2; ++domain) {
        const bool square = domain == 1;
        const std::string name = square ? toy::kCoolDomain : toy::kWarmDomain;
        fs::create_directories(fs::path(out_root) / name);
        for (int i = 0; i < per_domain; ++i) {
            const double cx = 10.0 + 12.0 * rng.uniform();
            const double cy = 10.0 + 12.0 * rng.uniform();
            const double radius = 5.0 + 5.0 * rng.uniform();
            const double hue = square ? 180.0 + 80.0 * rng.uniform()   // blue band
                                      : -20.0 + 70.0 * rng.uniform();  // red/orange band
            const double sat = 0.7 + 0.3 * rng.uniform();
            const double val = 0.7 + 0.3 * rng.uniform();
            const double bg = 0.12 + 0.12 * rng.uniform();
            ImageU8 img = toy::render_shape(square, cx, cy, radius, hue, sat, val, bg);
            char fname[32];
            std::snprintf(fname, sizeof(fname), "%05d.png", i);
            write_png((fs::path(out_root) / name / fname).string(), img);
        }
    }
    return scan_dataset(out_root);
}

// Saturation-weighted warm/cool score; positive means warm (label 0).
template <class T>
double hue_score(const Tensor<T>& chw) {
    const int H = chw.dim(1), W = chw.dim(2);
    const int64_t hw = static_cast<int64_t>(H) * W;
    double score = 0;
    for (int64_t i = 0; i < hw; ++i) {
        const double r = chw[i], g = chw[hw + i], b = chw[2 * hw + i];
        const double sat = std::max({r, g, b}) - std::min({r, g, b});
        score += sat * (r - b);
    }
    return score / static_cast<double>(hw);
}

// Threshold rule used to check that translations land in the target domain.
template <class T>
int classify_hue_domain(const Tensor<T>& chw) {
    return hue_score(chw) > 0 ? 0 : 1;
}

}  // namespace ebit
