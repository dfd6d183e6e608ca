#pragma once

#include <optional>

#include "fde/grid.hpp"
#include "fde/metrics.hpp"
#include "fde/regions.hpp"

// Serial brute-force reference implementations. These are the independent
// oracles the fast OpenMP kernels are tested against; they stay in the
// library so the kernel-check subcommand can run them at any time. Keep them
// simple and obviously correct; never share code with the fast paths.
namespace fde::ref {

// O(N * sources) nearest-source scan.
DistanceField edt_brute_force(const BinaryMask& sources);

// O(N * r^2) disk morphology by direct offset enumeration, same border
// policy as the fast path (background outside for dilation, foreground
// outside for erosion).
BinaryMask dilate_disk_brute(const BinaryMask& mask, int radius);
BinaryMask erode_disk_brute(const BinaryMask& mask, int radius);
BinaryMask boundary_band_brute(const BinaryMask& mask, int radius);

// Square (Chebyshev) counterparts.
BinaryMask boundary_band_square_brute(const BinaryMask& mask, int radius);

// Per-pixel set algebra for the region partition.
RegionSet region_partition_sets(const BinaryMask& mask, const BinaryMask& valid, int radius);

// Plain scalar accumulation loops, one pixel at a time.
std::optional<double> delta1_loop(const DepthMap& pred_aligned, const DepthMap& gt,
                                  const BinaryMask& region, double threshold = 1.25);
std::optional<double> absrel_loop(const DepthMap& pred_aligned, const DepthMap& gt,
                                  const BinaryMask& region);

// Residual of the alignment objective, for grid-search optimality checks.
double alignment_residual(const DepthMap& pred, const DepthMap& gt, const BinaryMask& valid,
                          double a, double b);

// Full-sort order-statistics oracle mirroring aggregate().
AggregateStats aggregate_sorted(std::vector<double> values, StatisticMode mode);

}  // namespace fde::ref
