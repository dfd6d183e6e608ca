#pragma once

#include <map>
#include <optional>
#include <string>

#include "fde/grid.hpp"
#include "fde/metrics.hpp"
#include "fde/regions.hpp"

namespace fde::loss {

struct LossConfig {
    double grad_weight = 0.5;       // weight of the error-gradient smoothness term
    bool disparity_space = false;   // compare in 1/depth instead of depth
    double disparity_floor = 1e-3;
    double prob_clamp = 1e-7;       // BCE probability clamp
    double dice_eps = 1.0;
    int radius = 10;                // boundary band radius
    BandShape band_shape = BandShape::disk;
};

// 1 / max(d, floor) elementwise; NaN stays NaN.
DepthMap to_disparity(const DepthMap& depth, double floor_value);

struct DepthLossResult {
    double value = 0.0;
    DepthMap grad;       // d(value)/d(pred_aligned); zero off-region
    size_t n_pixels = 0;
    size_t n_pairs = 0;  // in-region forward-difference pairs, x plus y
};

// Mean squared error over the region plus grad_weight times the mean absolute
// forward difference of the error, taken over pixel pairs that lie entirely
// inside the region. Empty region gives value 0 and a zero gradient.
DepthLossResult depth_region_loss(const DepthMap& pred_aligned, const DepthMap& gt,
                                  const BinaryMask& region, const LossConfig& config);

struct SegLossResult {
    double value = 0.0;  // bce + dice
    double bce = 0.0;
    double dice = 0.0;
    DepthMap grad;       // d(value)/d(prob) per pixel
};

// Binary cross-entropy (probabilities clamped to [clamp, 1-clamp]) averaged
// over all pixels, plus soft Dice with additive smoothing. A probability
// outside [0, 1] is a hard error, not something to silently clamp.
SegLossResult seg_loss(const DepthMap& prob, const BinaryMask& target,
                       const LossConfig& config);

struct LossBreakdown {
    double l_fg = 0.0;
    double l_bd = 0.0;
    double l_glb = 0.0;
    double l_seg = 0.0;
    double total = 0.0;  // always the exact double sum of the four parts
    size_t n_fg = 0;
    size_t n_bd = 0;
    size_t n_glb = 0;
    AlignmentParams alignment;
};

struct TotalObjectiveResult {
    LossBreakdown breakdown;
    DepthMap grad_depth;  // d(total)/d(pred_depth), through alignment+disparity
    DepthMap grad_prob;   // d(total)/d(prob)
};

// Full objective: scale-shift-align the (optionally disparity-converted)
// prediction over valid pixels, sum the three region losses plus the
// segmentation loss. The fitted (a, b) is treated as a constant
// (stop-gradient): pass the same fixed_alignment to finite-difference probes.
TotalObjectiveResult total_objective(const DepthMap& pred_depth, const DepthMap& prob,
                                     const DepthMap& gt_depth, const BinaryMask& mask,
                                     const BinaryMask& valid, const LossConfig& config,
                                     const std::optional<AlignmentParams>& fixed_alignment = {});

struct LossGradCheckReport {
    std::map<std::string, double> max_rel_err;
    double worst = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite differences of the total objective (with the alignment
// frozen at the fitted value) against the analytic gradients, over every
// depth pixel and every probability pixel of a seeded random fixture.
LossGradCheckReport loss_grad_check(uint64_t seed, int height, int width, double step,
                                    double tolerance, bool disparity_space);

}  // namespace fde::loss
