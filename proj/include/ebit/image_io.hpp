#pragma once

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "ebit/core/tensor.hpp"

namespace ebit {

// Interleaved 8-bit RGB.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> px;  // height * width * 3

    uint8_t* row(int y) { return px.data() + static_cast<size_t>(y) * width * 3; }
    const uint8_t* row(int y) const { return px.data() + static_cast<size_t>(y) * width * 3; }
};

namespace detail {

struct FileHandle {
    FILE* f = nullptr;
    explicit FileHandle(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f) std::fclose(f);
    }
    FileHandle(const FileHandle&) = delete;
    FileHandle& operator=(const FileHandle&) = delete;
};

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    longjmp(mgr->jump, 1);
}

}  // namespace detail

inline ImageU8 read_png(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    if (!fh.f) throw DataError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        throw DataError("libpng init failed for " + path);
    }
    ImageU8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("failed to decode PNG " + path);
    }
    png_init_io(png, fh.f);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("unsupported PNG channel layout in " + path);
    }
    img.px.resize(static_cast<size_t>(img.width) * img.height * 3);
    rows.resize(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = img.row(y);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_png(const std::string& path, const ImageU8& img) {
    detail::FileHandle fh(path, "wb");
    if (!fh.f) throw DataError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        throw DataError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed to encode PNG " + path);
    }
    png_init_io(png, fh.f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(img.row(y)));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline ImageU8 read_jpeg(const std::string& path) {
    detail::FileHandle fh(path, "rb");
    if (!fh.f) throw DataError("cannot open " + path);
    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError("failed to decode JPEG " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fh.f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    ImageU8 img;
    img.width = static_cast<int>(cinfo.output_width);
    img.height = static_cast<int>(cinfo.output_height);
    img.px.resize(static_cast<size_t>(img.width) * img.height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW rowp = img.row(static_cast<int>(cinfo.output_scanline));
        jpeg_read_scanlines(&cinfo, &rowp, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

// Dispatch on magic bytes; PNG and JPEG/JFIF are accepted.
inline ImageU8 read_image(const std::string& path) {
    unsigned char magic[2] = {0, 0};
    {
        detail::FileHandle fh(path, "rb");
        if (!fh.f) throw DataError("cannot open " + path);
        if (std::fread(magic, 1, 2, fh.f) != 2) throw DataError("file too short: " + path);
    }
    if (magic[0] == 0x89 && magic[1] == 'P') return read_png(path);
    if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
    throw DataError("unrecognized image format: " + path);
}

// ---------------------------------------------------------------------------
// Pixel <-> tensor conversion, [-1, 1] value range
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> to_chw(const ImageU8& img) {
    Tensor<T> out(Shape{3, img.height, img.width});
    const int64_t hw = static_cast<int64_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* r = img.row(y);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out[c * hw + static_cast<int64_t>(y) * img.width + x] =
                    static_cast<T>(r[x * 3 + c]) / T(127.5) - T(1);
    }
    return out;
}

template <class T>
ImageU8 from_chw(const Tensor<T>& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw ShapeError("from_chw expects [3,H,W]");
    ImageU8 img;
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.px.resize(static_cast<size_t>(img.width) * img.height * 3);
    const int64_t hw = static_cast<int64_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y) {
        uint8_t* r = img.row(y);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = (static_cast<double>(chw[c * hw + static_cast<int64_t>(y) * img.width + x]) + 1.0) * 127.5;
                r[x * 3 + c] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Antialiased bilinear resize (triangle filter widened by the scale factor)
// ---------------------------------------------------------------------------

namespace detail {

struct ResampleTap {
    int first = 0;
    std::vector<double> weights;  // per output pixel
};

inline std::vector<ResampleTap> triangle_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    const double support = std::max(1.0, scale);
    std::vector<ResampleTap> taps(static_cast<size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        int lo = static_cast<int>(std::floor(center - support));
        int hi = static_cast<int>(std::ceil(center + support));
        ResampleTap tap;
        double total = 0;
        std::vector<double> w;
        for (int i = lo; i <= hi; ++i) {
            const double t = std::abs(i - center) / support;
            const double weight = t < 1.0 ? 1.0 - t : 0.0;
            w.push_back(weight);
            total += weight;
        }
        tap.first = lo;
        tap.weights.reserve(w.size());
        for (double weight : w) tap.weights.push_back(weight / total);
        taps[static_cast<size_t>(o)] = std::move(tap);
    }
    return taps;
}

}  // namespace detail

// chw:[C,H,W] -> [C,out_h,out_w]; edges clamp.
template <class T>
Tensor<T> resize_chw(const Tensor<T>& chw, int out_h, int out_w) {
    const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
    if (H == out_h && W == out_w) return chw;
    const auto xt = detail::triangle_taps(W, out_w);
    const auto yt = detail::triangle_taps(H, out_h);

    // Horizontal pass, then vertical.
    Tensor<T> tmp(Shape{C, H, out_w});
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y) {
            const T* src = chw.data() + (static_cast<int64_t>(c) * H + y) * W;
            T* dst = tmp.data() + (static_cast<int64_t>(c) * H + y) * out_w;
            for (int o = 0; o < out_w; ++o) {
                const auto& tap = xt[static_cast<size_t>(o)];
                double acc = 0;
                for (size_t k = 0; k < tap.weights.size(); ++k) {
                    const int i = std::clamp(tap.first + static_cast<int>(k), 0, W - 1);
                    acc += tap.weights[k] * static_cast<double>(src[i]);
                }
                dst[o] = static_cast<T>(acc);
            }
        }
    Tensor<T> out(Shape{C, out_h, out_w});
    for (int c = 0; c < C; ++c)
        for (int o = 0; o < out_h; ++o) {
            const auto& tap = yt[static_cast<size_t>(o)];
            T* dst = out.data() + (static_cast<int64_t>(c) * out_h + o) * out_w;
            for (int x = 0; x < out_w; ++x) {
                double acc = 0;
                for (size_t k = 0; k < tap.weights.size(); ++k) {
                    const int i = std::clamp(tap.first + static_cast<int>(k), 0, H - 1);
                    acc += tap.weights[k] *
                           static_cast<double>(tmp[(static_cast<int64_t>(c) * H + i) * out_w + x]);
                }
                dst[x] = static_cast<T>(acc);
            }
        }
    return out;
}

}  // namespace ebit
