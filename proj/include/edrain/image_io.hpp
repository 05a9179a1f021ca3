#pragma once

// PNG load/save via libpng. Images are (C, H, W) tensors with values in
// [0, 1]; 8-bit grayscale and RGB are supported (palette images are expanded,
// alpha is stripped). Saving quantizes with round-half-up and writes through
// a temp file so a failed write never leaves a partial image behind.

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

#include "edrain/tensor.hpp"

namespace edrain {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* f = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* f = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (f) std::fclose(f);
    }
};

} // namespace detail

template <typename T>
Tensor<T> load_image(const std::string& path) {
    detail::PngReader rd;
    rd.f = std::fopen(path.c_str(), "rb");
    if (!rd.f) throw ImageIoError("cannot open image: " + path);
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, rd.f) != 8 || png_sig_cmp(sig, 0, 8))
        throw ImageIoError("not a PNG file: " + path);
    rd.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    rd.info = rd.png ? png_create_info_struct(rd.png) : nullptr;
    if (!rd.info) throw ImageIoError("libpng init failed: " + path);

    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(rd.png)))
        throw ImageIoError("failed to decode PNG: " + path);

    png_init_io(rd.png, rd.f);
    png_set_sig_bytes(rd.png, 8);
    png_read_info(rd.png, rd.info);

    if (png_get_bit_depth(rd.png, rd.info) == 16)
        throw ImageIoError("16-bit PNG not supported: " + path);
    const png_byte color = png_get_color_type(rd.png, rd.info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(rd.png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(rd.png, rd.info) < 8)
        png_set_expand_gray_1_2_4_to_8(rd.png);
    if (png_get_valid(rd.png, rd.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(rd.png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(rd.png, rd.info, PNG_INFO_tRNS))
        png_set_strip_alpha(rd.png);
    png_set_interlace_handling(rd.png);
    png_read_update_info(rd.png, rd.info);

    const int w = static_cast<int>(png_get_image_width(rd.png, rd.info));
    const int h = static_cast<int>(png_get_image_height(rd.png, rd.info));
    const int ch = png_get_channels(rd.png, rd.info);
    if (ch != 1 && ch != 3)
        throw ImageIoError("unsupported channel count " + std::to_string(ch) + ": " + path);

    const std::size_t rowbytes = png_get_rowbytes(rd.png, rd.info);
    pixels.resize(rowbytes * static_cast<std::size_t>(h));
    rows.resize(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + y * rowbytes;
    png_read_image(rd.png, rows.data());
    png_read_end(rd.png, nullptr);

    Tensor<T> img({ch, h, w});
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.at(c, y, x) =
                    static_cast<T>(pixels[y * rowbytes + static_cast<std::size_t>(x) * ch + c] /
                                   T(255));
    return img;
}

template <typename T>
void save_image(const std::string& path, const Tensor<T>& img) {
    if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw std::invalid_argument("save_image: expected (1|3, H, W) tensor, got " +
                                    img.shape_str() + ": " + path);
    const int ch = img.dim(0), h = img.dim(1), w = img.dim(2);

    // quantize up front: round-half-up after clamping to [0, 1]
    std::vector<unsigned char> pixels(static_cast<std::size_t>(h) * w * ch);
    for (int c = 0; c < ch; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = static_cast<double>(img.at(c, y, x));
                if (!std::isfinite(v)) v = 0.0; // diagnostic dumps may hold NaN
                v = std::min(std::max(v, 0.0), 1.0);
                pixels[(static_cast<std::size_t>(y) * w + x) * ch + c] =
                    static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
            }
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] = pixels.data() + static_cast<std::size_t>(y) * w * ch;

    const std::string tmp = path + ".tmp";
    {
        detail::PngWriter wr;
        wr.f = std::fopen(tmp.c_str(), "wb");
        if (!wr.f) throw ImageIoError("cannot write image: " + path);
        wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        wr.info = wr.png ? png_create_info_struct(wr.png) : nullptr;
        if (!wr.info) throw ImageIoError("libpng init failed: " + path);
        if (setjmp(png_jmpbuf(wr.png))) {
            std::remove(tmp.c_str());
            throw ImageIoError("failed to encode PNG: " + path);
        }
        png_init_io(wr.png, wr.f);
        png_set_IHDR(wr.png, wr.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h),
                     8, ch == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(wr.png, wr.info);
        png_write_image(wr.png, rows.data());
        png_write_end(wr.png, nullptr);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::remove(tmp.c_str());
        throw ImageIoError("cannot write image: " + path + " (" + ec.message() + ")");
    }
}

} // namespace edrain
