#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fde::npy {

struct Array {
    std::vector<size_t> shape;
    std::vector<double> data;  // widened to f64 on read

    size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

// Reads a version-1 .npy file holding little-endian '<f4' or '<f8' data in
// C order, 1-D or 2-D. Anything else is a decode error naming the path.
Array read(const std::string& path);

void write_f32(const std::string& path, const std::vector<size_t>& shape,
               const std::vector<float>& data);
void write_f64(const std::string& path, const std::vector<size_t>& shape,
               const std::vector<double>& data);

}  // namespace fde::npy
