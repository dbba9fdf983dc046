#include "focus/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace focus {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using File = std::unique_ptr<FILE, FileCloser>;

uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_png(const std::string& path, long H, long W, int color_type,
               const std::vector<uint8_t>& rows_interleaved, long stride) {
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(H));
    for (long y = 0; y < H; ++y)
        rows[y] = const_cast<png_bytep>(rows_interleaved.data() + y * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_png_gray(const std::string& path, const Tensor& img) {
    if (!img.defined() || img.rank() != 2)
        throw std::invalid_argument("write_png_gray: expected [H,W], got " +
                                    shape_str(img.shape()));
    long H = img.dim(0), W = img.dim(1);
    std::vector<uint8_t> buf(static_cast<size_t>(H * W));
    for (long i = 0; i < H * W; ++i) buf[i] = to_byte(img.values()[i]);
    write_png(path, H, W, PNG_COLOR_TYPE_GRAY, buf, W);
}

void write_png_rgb(const std::string& path, const Tensor& img) {
    if (!img.defined() || img.rank() != 3 || img.dim(0) != 3)
        throw std::invalid_argument("write_png_rgb: expected [3,H,W], got " +
                                    shape_str(img.shape()));
    long H = img.dim(1), W = img.dim(2);
    long hw = H * W;
    std::vector<uint8_t> buf(static_cast<size_t>(3 * hw));
    const double* p = img.values().data();
    for (long i = 0; i < hw; ++i) {
        buf[3 * i] = to_byte(p[i]);
        buf[3 * i + 1] = to_byte(p[hw + i]);
        buf[3 * i + 2] = to_byte(p[2 * hw + i]);
    }
    write_png(path, H, W, PNG_COLOR_TYPE_RGB, buf, 3 * W);
}

Tensor read_png(const std::string& path) {
    File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open: " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw std::runtime_error("not a png: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png read failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    // normalize every variant to 8-bit RGB
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    long W = png_get_image_width(png, info);
    long H = png_get_image_height(png, info);
    size_t stride = png_get_rowbytes(png, info);
    std::vector<uint8_t> buf(static_cast<size_t>(H) * stride);
    std::vector<png_bytep> rows(static_cast<size_t>(H));
    for (long y = 0; y < H; ++y) rows[y] = buf.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out = make_tensor({3, H, W}, DType::F64);
    long hw = H * W;
    for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
            const uint8_t* px = buf.data() + y * stride + 3 * x;
            out.raw()[y * W + x] = px[0] / 255.0;
            out.raw()[hw + y * W + x] = px[1] / 255.0;
            out.raw()[2 * hw + y * W + x] = px[2] / 255.0;
        }
    return out;
}

}  // namespace focus
