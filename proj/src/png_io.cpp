#include "fde/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>

namespace fde::png_io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("png decode error: " + path + ": " + what);
}

}  // namespace

GrayImage read_gray(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");

    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        fail(path, "not a png file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(path, "png init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail(path, "png init failed");
    }

    GrayImage img;
    std::vector<png_bytep> row_ptrs;
    std::vector<uint8_t> raw;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "corrupt png data");
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "expected single-channel grayscale png");
    }
    if (bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
        bit_depth = 8;
    }

    img.height = static_cast<int>(png_get_image_height(png, info));
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.bit_depth = bit_depth;

    png_read_update_info(png, info);
    size_t rowbytes = png_get_rowbytes(png, info);
    raw.resize(rowbytes * static_cast<size_t>(img.height));
    row_ptrs.resize(static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        row_ptrs[static_cast<size_t>(y)] = raw.data() + rowbytes * static_cast<size_t>(y);
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    img.pixels.resize(static_cast<size_t>(img.height) * img.width);
    if (bit_depth == 16) {
        // png stores 16-bit samples big-endian
        for (size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    } else {
        for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = raw[i];
    }
    return img;
}

namespace {

void write_gray(const std::string& path, int height, int width, int bit_depth,
                const std::vector<uint8_t>& raw) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for write: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png init failed: " + path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png init failed: " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png write failed: " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    size_t rowbytes = static_cast<size_t>(width) * (bit_depth == 16 ? 2 : 1);
    std::vector<png_bytep> row_ptrs(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y)
        row_ptrs[static_cast<size_t>(y)] =
            const_cast<png_bytep>(raw.data() + rowbytes * static_cast<size_t>(y));
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_gray16(const std::string& path, int height, int width,
                  const std::vector<uint16_t>& pixels) {
    std::vector<uint8_t> raw(pixels.size() * 2);
    for (size_t i = 0; i < pixels.size(); ++i) {
        raw[2 * i] = static_cast<uint8_t>(pixels[i] >> 8);
        raw[2 * i + 1] = static_cast<uint8_t>(pixels[i] & 0xff);
    }
    write_gray(path, height, width, 16, raw);
}

void write_gray8(const std::string& path, int height, int width,
                 const std::vector<uint8_t>& pixels) {
    write_gray(path, height, width, 8, pixels);
}

}  // namespace fde::png_io
