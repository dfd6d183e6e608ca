#include "fde/reference.hpp"

#include <algorithm>
#include <cmath>

namespace fde::ref {

DistanceField edt_brute_force(const BinaryMask& sources) {
    DistanceField field(sources.height, sources.width, DistanceField::kInfinite);
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < sources.height; ++y)
        for (int x = 0; x < sources.width; ++x)
            if (sources.at(y, x)) pts.emplace_back(y, x);
    if (pts.empty()) return field;

    for (int y = 0; y < sources.height; ++y) {
        for (int x = 0; x < sources.width; ++x) {
            int64_t best = DistanceField::kInfinite;
            for (auto [sy, sx] : pts) {
                int64_t dy = y - sy, dx = x - sx;
                best = std::min(best, dy * dy + dx * dx);
            }
            field.values[static_cast<size_t>(y) * sources.width + x] = best;
        }
    }
    return field;
}

BinaryMask dilate_disk_brute(const BinaryMask& mask, int radius) {
    const int64_t r2 = static_cast<int64_t>(radius) * radius;
    BinaryMask out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool hit = false;
            for (int dy = -radius; dy <= radius && !hit; ++dy) {
                for (int dx = -radius; dx <= radius && !hit; ++dx) {
                    if (static_cast<int64_t>(dy) * dy + static_cast<int64_t>(dx) * dx > r2)
                        continue;
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width)
                        continue;  // outside the frame is background
                    hit = mask.at(yy, xx);
                }
            }
            out.set(y, x, hit);
        }
    }
    return out;
}

BinaryMask erode_disk_brute(const BinaryMask& mask, int radius) {
    const int64_t r2 = static_cast<int64_t>(radius) * radius;
    BinaryMask out(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            bool all = true;
            for (int dy = -radius; dy <= radius && all; ++dy) {
                for (int dx = -radius; dx <= radius && all; ++dx) {
                    if (static_cast<int64_t>(dy) * dy + static_cast<int64_t>(dx) * dx > r2)
                        continue;
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width)
                        continue;  // outside the frame is foreground
                    all = mask.at(yy, xx);
                }
            }
            out.set(y, x, all);
        }
    }
    return out;
}

BinaryMask boundary_band_brute(const BinaryMask& mask, int radius) {
    BinaryMask dil = dilate_disk_brute(mask, radius);
    BinaryMask ero = erode_disk_brute(mask, radius);
    BinaryMask band(mask.height, mask.width);
    for (size_t i = 0; i < band.bits.size(); ++i) band.bits[i] = dil.bits[i] && !ero.bits[i];
    return band;
}

BinaryMask boundary_band_square_brute(const BinaryMask& mask, int radius) {
    BinaryMask band(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            bool dil = false, ero = mask.at(y, x);
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    bool inside = yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width;
                    dil = dil || (inside && mask.at(yy, xx));
                    ero = ero && (!inside || mask.at(yy, xx));
                }
            }
            band.set(y, x, dil && !(mask.at(y, x) && ero));
        }
    }
    return band;
}

RegionSet region_partition_sets(const BinaryMask& mask, const BinaryMask& valid, int radius) {
    RegionSet r;
    r.radius = radius;
    BinaryMask band = boundary_band_brute(mask, radius);
    r.fg = BinaryMask(mask.height, mask.width);
    r.bd = BinaryMask(mask.height, mask.width);
    r.glb = BinaryMask(mask.height, mask.width);
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            r.fg.set(y, x, valid.at(y, x) && mask.at(y, x));
            r.bd.set(y, x, valid.at(y, x) && band.at(y, x));
            r.glb.set(y, x, valid.at(y, x));
        }
    }
    r.n_fg = r.fg.count();
    r.n_bd = r.bd.count();
    r.n_glb = r.glb.count();
    return r;
}

std::optional<double> delta1_loop(const DepthMap& pred_aligned, const DepthMap& gt,
                                  const BinaryMask& region, double threshold) {
    size_t n = 0, correct = 0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!region.at(y, x)) continue;
            ++n;
            double p = pred_aligned.at(y, x), g = gt.at(y, x);
            if (p <= 0.0) continue;
            if (std::max(p / g, g / p) < threshold) ++correct;
        }
    }
    if (n == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::optional<double> absrel_loop(const DepthMap& pred_aligned, const DepthMap& gt,
                                  const BinaryMask& region) {
    size_t n = 0;
    double total = 0.0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!region.at(y, x)) continue;
            ++n;
            total += std::abs(pred_aligned.at(y, x) - gt.at(y, x)) / gt.at(y, x);
        }
    }
    if (n == 0) return std::nullopt;
    return total / static_cast<double>(n);
}

double alignment_residual(const DepthMap& pred, const DepthMap& gt, const BinaryMask& valid,
                          double a, double b) {
    double total = 0.0;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            if (!valid.at(y, x)) continue;
            double e = a * pred.at(y, x) + b - gt.at(y, x);
            total += e * e;
        }
    }
    return total;
}

AggregateStats aggregate_sorted(std::vector<double> values, StatisticMode mode) {
    AggregateStats stats;
    stats.mode = mode;
    stats.count = values.size();
    if (values.empty()) return stats;
    std::sort(values.begin(), values.end());

    auto order_stat = [&](double q) {
        double h = (static_cast<double>(values.size()) - 1.0) * q;
        double lo = std::floor(h);
        double hi = std::ceil(h);
        return values[static_cast<size_t>(lo)] * (1.0 - (h - lo)) +
               values[static_cast<size_t>(hi)] * (h - lo);
    };
    stats.q25 = order_stat(0.25);
    stats.median = order_stat(0.5);
    stats.q75 = order_stat(0.75);
    double total = 0.0;
    for (double v : values) total += v;
    stats.mean = total / static_cast<double>(values.size());
    return stats;
}

}  // namespace fde::ref
