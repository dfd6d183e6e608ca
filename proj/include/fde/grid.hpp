#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fde {

// Depth values are stored in 64-bit reals; NaN marks missing depth.
enum class UnitTag { metric, relative, disparity };

inline const char* unit_tag_name(UnitTag t) {
    switch (t) {
        case UnitTag::metric: return "metric";
        case UnitTag::relative: return "relative";
        case UnitTag::disparity: return "disparity";
    }
    return "metric";
}

struct DepthMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major, height*width
    UnitTag unit_tag = UnitTag::metric;

    DepthMap() = default;
    DepthMap(int h, int w, UnitTag tag = UnitTag::metric)
        : height(h), width(w), values(static_cast<size_t>(h) * w, 0.0), unit_tag(tag) {}

    double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return values.size(); }
};

struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // row-major, 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w, bool fill = false)
        : height(h), width(w), bits(static_cast<size_t>(h) * w, fill ? 1 : 0) {}

    bool at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { bits[static_cast<size_t>(y) * width + x] = v ? 1 : 0; }
    size_t size() const { return bits.size(); }

    size_t count() const {
        size_t n = 0;
        for (uint8_t b : bits) n += b;
        return n;
    }

    bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }
};

// Half-open pixel box: x in [x_min, x_max), y in [y_min, y_max).
struct BBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;

    bool contains(int y, int x) const {
        return x >= x_min && x < x_max && y >= y_min && y < y_max;
    }
    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
};

// Sums `values` by recursive halving. The result depends only on element
// order, never on chunking or thread count.
double pairwise_sum(const double* values, size_t n);
double pairwise_sum(const std::vector<double>& values);

// Stable 64-bit hash of (seed, key); identical output on every platform.
uint64_t stable_hash64(uint64_t seed, const std::string& key);

// Deterministic standard-normal generator (splitmix64 + Box-Muller).
// std::normal_distribution is implementation-defined, so this is hand-rolled.
class NormalSampler {
public:
    explicit NormalSampler(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    double next();

private:
    double next_uniform();  // in (0, 1)
    uint64_t next_u64();

    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fde
