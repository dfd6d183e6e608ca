#pragma once

#include <cstdint>
#include <limits>

#include "fde/grid.hpp"

namespace fde {

// Squared Euclidean distances kept as exact integers so thresholding at
// d == r^2 is never ambiguous.
struct DistanceField {
    static constexpr int64_t kInfinite = std::numeric_limits<int64_t>::max();

    int height = 0;
    int width = 0;
    std::vector<int64_t> values;  // row-major squared distances

    DistanceField() = default;
    DistanceField(int h, int w, int64_t fill)
        : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

    int64_t at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

enum class BandShape { disk, square };
BandShape parse_band_shape(const std::string& s);

struct RegionSet {
    BinaryMask fg;
    BinaryMask bd;
    BinaryMask glb;
    int radius = 0;
    size_t n_fg = 0;
    size_t n_bd = 0;
    size_t n_glb = 0;
};

// Exact squared Euclidean distance from each pixel to the nearest true pixel
// (two-pass separable lower-envelope transform; kInfinite when sources are
// empty). Rows and columns are processed in parallel; each pass is exact
// integer arithmetic, so the result is identical for any thread count.
DistanceField exact_edt(const BinaryMask& sources);

// Ring between disk dilation and erosion of the mask:
//   dilate(M, r) = { p : dist(p, M)^2 <= r^2 }
//   erode(M, r)  = { p in M : dist(p, M^c)^2 > r^2 }
// Out-of-image pixels count as background for dilation and as foreground for
// erosion; the image frame is not a depth discontinuity.
BinaryMask boundary_band(const BinaryMask& mask, int radius,
                         BandShape shape = BandShape::disk);

// fg = V AND M, bd = V AND band, glb = V.
RegionSet region_partition(const BinaryMask& mask, const BinaryMask& valid, int radius,
                           BandShape shape = BandShape::disk);

}  // namespace fde
