#include "fde/regions.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fde {

BandShape parse_band_shape(const std::string& s) {
    if (s == "disk") return BandShape::disk;
    if (s == "square") return BandShape::square;
    throw std::runtime_error("unknown band shape: " + s);
}

namespace {

// 1-D squared distance to the nearest true pixel within one row, via left and
// right sweeps. Returns kInfinite entries when the row has no sources.
void row_pass(const uint8_t* bits, int width, int64_t* out) {
    const int64_t inf = DistanceField::kInfinite;
    int last = -1;
    for (int x = 0; x < width; ++x) {
        if (bits[x]) last = x;
        out[x] = last < 0 ? inf : static_cast<int64_t>(x - last) * (x - last);
    }
    last = -1;
    for (int x = width - 1; x >= 0; --x) {
        if (bits[x]) last = x;
        if (last >= 0) {
            int64_t d = static_cast<int64_t>(last - x) * (last - x);
            out[x] = std::min(out[x], d);
        }
    }
}

// Lower envelope of parabolas y -> f[i] + (y - pos[i])^2 evaluated at all
// integer y in [0, n). Intersections are exact rationals compared by int64
// cross-multiplication, so results are bit-exact integers.
void column_envelope(const int* pos, const int64_t* f, int m, int n, int64_t* out,
                     int* hull, int64_t* zn, int64_t* zd) {
    // intersection of parabolas at pos[i], pos[j] (i earlier): s = num/den
    auto isect = [&](int i, int j, int64_t& num, int64_t& den) {
        num = (f[j] + static_cast<int64_t>(pos[j]) * pos[j]) -
              (f[i] + static_cast<int64_t>(pos[i]) * pos[i]);
        den = 2 * static_cast<int64_t>(pos[j] - pos[i]);
    };

    int k = 0;
    hull[0] = 0;
    zn[0] = std::numeric_limits<int64_t>::min();  // -inf boundary
    zd[0] = 1;
    for (int j = 1; j < m; ++j) {
        int64_t num, den;
        while (true) {
            isect(hull[k], j, num, den);
            // pop while the new intersection is at or left of the previous one
            bool pop;
            if (zn[k] == std::numeric_limits<int64_t>::min()) pop = false;
            else pop = num * zd[k] <= zn[k] * den;  // dens positive
            if (!pop) break;
            --k;
        }
        ++k;
        hull[k] = j;
        zn[k] = num;
        zd[k] = den;
    }

    int idx = 0;
    for (int y = 0; y < n; ++y) {
        // advance while the next boundary is at or left of y
        while (idx < k && zn[idx + 1] <= static_cast<int64_t>(y) * zd[idx + 1]) ++idx;
        int p = hull[idx];
        int64_t dy = y - pos[p];
        out[y] = f[p] + dy * dy;
    }
}

}  // namespace

DistanceField exact_edt(const BinaryMask& sources) {
    const int h = sources.height, w = sources.width;
    DistanceField field(h, w, DistanceField::kInfinite);
    if (h == 0 || w == 0) return field;

    std::vector<int64_t> rowdist(static_cast<size_t>(h) * w);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y)
        row_pass(sources.bits.data() + static_cast<size_t>(y) * w, w,
                 rowdist.data() + static_cast<size_t>(y) * w);

#pragma omp parallel for schedule(static)
    for (int x = 0; x < w; ++x) {
        std::vector<int> pos(static_cast<size_t>(h));
        std::vector<int64_t> f(static_cast<size_t>(h)), col(static_cast<size_t>(h));
        std::vector<int> hull(static_cast<size_t>(h));
        std::vector<int64_t> zn(static_cast<size_t>(h) + 1), zd(static_cast<size_t>(h) + 1);

        int m = 0;
        for (int y = 0; y < h; ++y) {
            int64_t v = rowdist[static_cast<size_t>(y) * w + x];
            if (v != DistanceField::kInfinite) {
                pos[m] = y;
                f[m] = v;
                ++m;
            }
        }
        if (m == 0) continue;  // stays infinite: the whole mask is empty
        column_envelope(pos.data(), f.data(), m, h, col.data(), hull.data(), zn.data(),
                        zd.data());
        for (int y = 0; y < h; ++y) field.values[static_cast<size_t>(y) * w + x] = col[y];
    }
    return field;
}

namespace {

BinaryMask complement(const BinaryMask& mask) {
    BinaryMask out(mask.height, mask.width);
    for (size_t i = 0; i < mask.bits.size(); ++i) out.bits[i] = mask.bits[i] ? 0 : 1;
    return out;
}

BinaryMask band_disk(const BinaryMask& mask, int radius) {
    const int64_t r2 = static_cast<int64_t>(radius) * radius;
    DistanceField to_fg = exact_edt(mask);
    DistanceField to_bg = exact_edt(complement(mask));

    BinaryMask band(mask.height, mask.width);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool dilated = to_fg.at(y, x) <= r2;
            bool eroded = mask.at(y, x) && to_bg.at(y, x) > r2;
            band.set(y, x, dilated && !eroded);
        }
    }
    return band;
}

// Chebyshev window sweep; exists[true]/forall[true] over a (2r+1) window with
// the stated border policy. Separable horizontal-then-vertical passes.
void window_sweep(const BinaryMask& in, int radius, bool dilate, BinaryMask& out) {
    const int h = in.height, w = in.width;
    const bool border = !dilate;  // out-of-image: background for dilate, foreground for erode
    BinaryMask tmp(h, w);

#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool acc = !dilate;
            for (int dx = -radius; dx <= radius; ++dx) {
                int xx = x + dx;
                bool v = (xx < 0 || xx >= w) ? border : in.at(y, xx);
                acc = dilate ? (acc || v) : (acc && v);
            }
            tmp.set(y, x, acc);
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool acc = !dilate;
            for (int dy = -radius; dy <= radius; ++dy) {
                int yy = y + dy;
                bool v = (yy < 0 || yy >= h) ? border : tmp.at(yy, x);
                acc = dilate ? (acc || v) : (acc && v);
            }
            out.set(y, x, acc);
        }
    }
}

BinaryMask band_square(const BinaryMask& mask, int radius) {
    BinaryMask dilated(mask.height, mask.width), eroded(mask.height, mask.width);
    window_sweep(mask, radius, true, dilated);
    window_sweep(mask, radius, false, eroded);
    BinaryMask band(mask.height, mask.width);
    for (size_t i = 0; i < band.bits.size(); ++i)
        band.bits[i] = dilated.bits[i] && !(mask.bits[i] && eroded.bits[i]);
    return band;
}

}  // namespace

BinaryMask boundary_band(const BinaryMask& mask, int radius, BandShape shape) {
    if (radius < 1) throw std::runtime_error("boundary_band: radius must be >= 1");
    return shape == BandShape::disk ? band_disk(mask, radius) : band_square(mask, radius);
}

RegionSet region_partition(const BinaryMask& mask, const BinaryMask& valid, int radius,
                           BandShape shape) {
    if (!mask.same_shape(valid))
        throw std::runtime_error("region_partition: mask and valid dimensions differ");

    RegionSet regions;
    regions.radius = radius;
    BinaryMask band = boundary_band(mask, radius, shape);

    regions.fg = BinaryMask(mask.height, mask.width);
    regions.bd = BinaryMask(mask.height, mask.width);
    regions.glb = valid;
    for (size_t i = 0; i < mask.bits.size(); ++i) {
        regions.fg.bits[i] = valid.bits[i] && mask.bits[i];
        regions.bd.bits[i] = valid.bits[i] && band.bits[i];
    }
    regions.n_fg = regions.fg.count();
    regions.n_bd = regions.bd.count();
    regions.n_glb = regions.glb.count();
    return regions;
}

}  // namespace fde
