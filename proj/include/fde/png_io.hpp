#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fde::png_io {

struct GrayImage {
    int height = 0;
    int width = 0;
    int bit_depth = 0;              // 8 or 16
    std::vector<uint16_t> pixels;   // row-major; 8-bit values stored as-is
};

// Reads a single-channel grayscale PNG. Color, palette, and alpha images are
// rejected with a decode error naming the path.
GrayImage read_gray(const std::string& path);

void write_gray16(const std::string& path, int height, int width,
                  const std::vector<uint16_t>& pixels);
void write_gray8(const std::string& path, int height, int width,
                 const std::vector<uint8_t>& pixels);

}  // namespace fde::png_io
