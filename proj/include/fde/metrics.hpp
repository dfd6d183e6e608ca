#pragma once

#include <map>
#include <optional>
#include <string>

#include "fde/grid.hpp"
#include "fde/regions.hpp"

namespace fde {

struct AlignmentParams {
    double a = 1.0;
    double b = 0.0;
    bool degenerate_fallback = false;
    bool negative_scale = false;
};

struct RegionMetrics {
    double delta1 = std::numeric_limits<double>::quiet_NaN();
    double absrel = std::numeric_limits<double>::quiet_NaN();
    size_t n_pixels = 0;

    bool is_null() const { return n_pixels == 0; }
};

struct TripletResult {
    std::string triplet_id;
    RegionMetrics foreground;
    RegionMetrics boundary;
    RegionMetrics global;
    AlignmentParams alignment;
};

enum class StatisticMode { median_quartiles, mean };

struct AggregateStats {
    double median = std::numeric_limits<double>::quiet_NaN();
    double q25 = std::numeric_limits<double>::quiet_NaN();
    double q75 = std::numeric_limits<double>::quiet_NaN();
    double mean = std::numeric_limits<double>::quiet_NaN();
    size_t count = 0;
    StatisticMode mode = StatisticMode::median_quartiles;
};

enum class PredSpace { depth, disparity };
enum class AlignmentMode { affine, none };
PredSpace parse_pred_space(const std::string& s);
AlignmentMode parse_alignment_mode(const std::string& s);

struct EvalConfig {
    int radius = 10;
    double delta_threshold = 1.25;
    PredSpace pred_space = PredSpace::depth;
    AlignmentMode alignment_mode = AlignmentMode::affine;
    BandShape band_shape = BandShape::disk;
};

// Closed-form least-squares (a, b) minimizing sum over valid pixels of
// (a*pred + b - gt)^2. Falls back to a=1, b=mean(gt)-mean(pred) when fewer
// than two valid pixels or pred variance < 1e-12. Throws on zero valid pixels.
AlignmentParams fit_scale_shift(const DepthMap& pred, const DepthMap& gt,
                                const BinaryMask& valid);

// Elementwise a*d + b; NaN stays NaN.
DepthMap apply_alignment(const DepthMap& pred, const AlignmentParams& params);

// Fraction of region pixels with max(pred/gt, gt/pred) < threshold; pixels
// with pred <= 0 count as incorrect. nullopt on an empty region.
std::optional<double> delta1(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region, double threshold = 1.25);

// Mean over the region of |pred - gt| / gt. nullopt on an empty region.
std::optional<double> absrel(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region);

RegionMetrics region_metrics(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region, double threshold = 1.25);

// Whole-image alignment (over V) followed by per-region metrics. Disparity
// predictions are aligned against 1/gt over valid pixels, then inverted with
// a 1e-6 floor before metric computation.
TripletResult evaluate_triplet(const DepthMap& pred, const DepthMap& gt,
                               const BinaryMask& mask, const BinaryMask& valid,
                               const EvalConfig& config, const std::string& triplet_id);

// Median/Q25/Q75 by linear interpolation at h = (n-1)*q; arithmetic mean.
// Empty input gives null stats with count 0.
AggregateStats aggregate(std::vector<double> values, StatisticMode mode);

// dataset -> method -> prompt_type -> region -> metric -> stats
using StatsTable =
    std::map<std::string,
             std::map<std::string,
                      std::map<std::string,
                               std::map<std::string, std::map<std::string, AggregateStats>>>>>;

enum class ReportFormat { markdown, csv };
ReportFormat parse_report_format(const std::string& s);

// Values rounded half-away-from-zero to 3 decimals. delta1 cells render as
// "median (q25, q75)" under median-quartiles mode, single values under mean
// mode; missing stats render as "-".
std::string render_report(const StatsTable& stats, ReportFormat format);

// Cell formatting building blocks, exposed for tests.
std::string round3(double v);
std::string format_cell(const AggregateStats& stats, const std::string& metric);

}  // namespace fde
