#include "fde/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace fde {

PredSpace parse_pred_space(const std::string& s) {
    if (s == "depth") return PredSpace::depth;
    if (s == "disparity") return PredSpace::disparity;
    throw std::runtime_error("unknown pred space: " + s);
}

AlignmentMode parse_alignment_mode(const std::string& s) {
    if (s == "affine") return AlignmentMode::affine;
    if (s == "none") return AlignmentMode::none;
    throw std::runtime_error("unknown alignment mode: " + s);
}

ReportFormat parse_report_format(const std::string& s) {
    if (s == "markdown") return ReportFormat::markdown;
    if (s == "csv") return ReportFormat::csv;
    throw std::runtime_error("unknown report format: " + s);
}

namespace {

// Row partials computed serially, merged pairwise in row order: the value is
// independent of thread count and chunking.
template <typename RowFn>
double sum_rows(int height, RowFn&& fn) {
    std::vector<double> partials(static_cast<size_t>(height), 0.0);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) partials[static_cast<size_t>(y)] = fn(y);
    return pairwise_sum(partials);
}

}  // namespace

AlignmentParams fit_scale_shift(const DepthMap& pred, const DepthMap& gt,
                                const BinaryMask& valid) {
    if (pred.height != gt.height || pred.width != gt.width || valid.height != gt.height ||
        valid.width != gt.width)
        throw std::runtime_error("fit_scale_shift: dimension mismatch");

    const int h = gt.height, w = gt.width;
    auto masked_sum = [&](auto&& term) {
        return sum_rows(h, [&](int y) {
            double s = 0.0;
            for (int x = 0; x < w; ++x)
                if (valid.at(y, x)) s += term(pred.at(y, x), gt.at(y, x));
            return s;
        });
    };

    double n = masked_sum([](double, double) { return 1.0; });
    if (n == 0.0) throw std::runtime_error("fit_scale_shift: no valid pixels");
    double sp = masked_sum([](double p, double) { return p; });
    double sg = masked_sum([](double, double g) { return g; });
    double spp = masked_sum([](double p, double) { return p * p; });
    double spg = masked_sum([](double p, double g) { return p * g; });

    AlignmentParams params;
    double variance = spp / n - (sp / n) * (sp / n);
    if (n < 2.0 || variance < 1e-12) {
        params.a = 1.0;
        params.b = (sg - sp) / n;
        params.degenerate_fallback = true;
        return params;
    }
    double det = n * spp - sp * sp;
    params.a = (n * spg - sp * sg) / det;
    params.b = (spp * sg - sp * spg) / det;
    params.negative_scale = params.a < 0.0;
    return params;
}

DepthMap apply_alignment(const DepthMap& pred, const AlignmentParams& params) {
    DepthMap out = pred;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(y, x) = params.a * pred.at(y, x) + params.b;
    return out;
}

std::optional<double> delta1(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region, double threshold) {
    size_t n = region.count();
    if (n == 0) return std::nullopt;
    double correct = sum_rows(gt.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < gt.width; ++x) {
            if (!region.at(y, x)) continue;
            double p = pred_aligned.at(y, x), g = gt.at(y, x);
            if (p <= 0.0) continue;  // nonpositive aligned depth counts as incorrect
            double ratio = std::max(p / g, g / p);
            if (ratio < threshold) s += 1.0;
        }
        return s;
    });
    return correct / static_cast<double>(n);
}

std::optional<double> absrel(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region) {
    size_t n = region.count();
    if (n == 0) return std::nullopt;
    double total = sum_rows(gt.height, [&](int y) {
        double s = 0.0;
        for (int x = 0; x < gt.width; ++x) {
            if (!region.at(y, x)) continue;
            s += std::abs(pred_aligned.at(y, x) - gt.at(y, x)) / gt.at(y, x);
        }
        return s;
    });
    return total / static_cast<double>(n);
}

RegionMetrics region_metrics(const DepthMap& pred_aligned, const DepthMap& gt,
                             const BinaryMask& region, double threshold) {
    RegionMetrics m;
    m.n_pixels = region.count();
    if (m.n_pixels == 0) return m;
    m.delta1 = *delta1(pred_aligned, gt, region, threshold);
    m.absrel = *absrel(pred_aligned, gt, region);
    return m;
}

namespace {

DepthMap reciprocal(const DepthMap& depth, double floor, UnitTag tag) {
    DepthMap out(depth.height, depth.width, tag);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x)
            out.at(y, x) = 1.0 / std::max(depth.at(y, x), floor);
    return out;
}

}  // namespace

TripletResult evaluate_triplet(const DepthMap& pred, const DepthMap& gt,
                               const BinaryMask& mask, const BinaryMask& valid,
                               const EvalConfig& config, const std::string& triplet_id) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw std::runtime_error("evaluate_triplet: prediction dimensions differ from gt");
    if (!mask.same_shape(valid) || mask.height != gt.height || mask.width != gt.width)
        throw std::runtime_error("evaluate_triplet: mask/valid dimensions differ from gt");

    TripletResult result;
    result.triplet_id = triplet_id;

    DepthMap aligned;
    if (config.pred_space == PredSpace::disparity) {
        // Align in disparity space against 1/gt, then invert with a floor.
        DepthMap gt_disp = reciprocal(gt, 1e-300, UnitTag::disparity);
        if (config.alignment_mode == AlignmentMode::affine) {
            result.alignment = fit_scale_shift(pred, gt_disp, valid);
            aligned = apply_alignment(pred, result.alignment);
        } else {
            aligned = pred;
        }
        aligned = reciprocal(aligned, 1e-6, UnitTag::metric);
    } else {
        if (config.alignment_mode == AlignmentMode::affine) {
            result.alignment = fit_scale_shift(pred, gt, valid);
            aligned = apply_alignment(pred, result.alignment);
        } else {
            aligned = pred;
        }
    }

    RegionSet regions = region_partition(mask, valid, config.radius, config.band_shape);
    result.foreground = region_metrics(aligned, gt, regions.fg, config.delta_threshold);
    result.boundary = region_metrics(aligned, gt, regions.bd, config.delta_threshold);
    result.global = region_metrics(aligned, gt, regions.glb, config.delta_threshold);
    return result;
}

AggregateStats aggregate(std::vector<double> values, StatisticMode mode) {
    AggregateStats stats;
    stats.mode = mode;
    stats.count = values.size();
    if (values.empty()) return stats;

    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        double h = (static_cast<double>(values.size()) - 1.0) * q;
        size_t lo = static_cast<size_t>(h);
        if (lo + 1 >= values.size()) return values.back();
        double frac = h - static_cast<double>(lo);
        return values[lo] + frac * (values[lo + 1] - values[lo]);
    };
    stats.median = quantile(0.5);
    stats.q25 = quantile(0.25);
    stats.q75 = quantile(0.75);
    stats.mean = pairwise_sum(values) / static_cast<double>(values.size());
    return stats;
}

std::string round3(double v) {
    if (!std::isfinite(v)) return "nan";
    long long scaled = llround(v * 1000.0);  // ties away from zero
    long long mag = scaled < 0 ? -scaled : scaled;
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", scaled < 0 ? "-" : "", mag / 1000,
                  mag % 1000);
    return buf;
}

std::string format_cell(const AggregateStats& stats, const std::string& metric) {
    if (stats.count == 0) return "-";
    if (stats.mode == StatisticMode::mean) return round3(stats.mean);
    if (metric == "delta1")
        return round3(stats.median) + " (" + round3(stats.q25) + ", " + round3(stats.q75) + ")";
    return round3(stats.median);
}

namespace {

const char* kRegions[] = {"boundary", "foreground", "global"};
const char* kMetrics[] = {"delta1", "absrel"};

AggregateStats lookup(const std::map<std::string, std::map<std::string, AggregateStats>>& per_region,
                      const std::string& region, const std::string& metric) {
    auto rit = per_region.find(region);
    if (rit == per_region.end()) return {};
    auto mit = rit->second.find(metric);
    if (mit == rit->second.end()) return {};
    return mit->second;
}

}  // namespace

std::string render_report(const StatsTable& stats, ReportFormat format) {
    std::ostringstream out;

    if (format == ReportFormat::csv) {
        out << "dataset,method,prompt_type,region,metric,cell,median,q25,q75,mean,count\n";
        for (const auto& [dataset, methods] : stats)
            for (const auto& [method, prompts] : methods)
                for (const auto& [prompt, per_region] : prompts)
                    for (const char* region : kRegions)
                        for (const char* metric : kMetrics) {
                            AggregateStats s = lookup(per_region, region, metric);
                            out << dataset << ',' << method << ',' << prompt << ',' << region
                                << ',' << metric << ',' << '"' << format_cell(s, metric) << '"'
                                << ',' << round3(s.median) << ',' << round3(s.q25) << ','
                                << round3(s.q75) << ',' << round3(s.mean) << ',' << s.count
                                << '\n';
                        }
        return out.str();
    }

    // markdown: one table per prompt type, rows ordered dataset then method
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> by_prompt;
    for (const auto& [dataset, methods] : stats)
        for (const auto& [method, prompts] : methods)
            for (const auto& [prompt, per_region] : prompts)
                by_prompt[prompt].emplace_back(dataset, method);

    for (const auto& [prompt, rows] : by_prompt) {
        out << "## Prompt type: " << prompt << "\n\n";
        out << "| Dataset | Method | Boundary d1 | Boundary AbsRel | Foreground d1 | "
               "Foreground AbsRel | Global d1 | Global AbsRel |\n";
        out << "|---|---|---|---|---|---|---|---|\n";
        for (const auto& [dataset, method] : rows) {
            const auto& per_region = stats.at(dataset).at(method).at(prompt);
            out << "| " << dataset << " | " << method;
            for (const char* region : kRegions)
                for (const char* metric : kMetrics)
                    out << " | " << format_cell(lookup(per_region, region, metric), metric);
            out << " |\n";
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace fde
