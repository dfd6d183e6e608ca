#pragma once

#include <optional>
#include <string>

#include "fde/grid.hpp"

namespace fde {

enum class DepthFormat { npy_f32, png_16 };

inline const char* depth_format_name(DepthFormat f) {
    return f == DepthFormat::npy_f32 ? "npy-f32" : "png-16";
}
DepthFormat parse_depth_format(const std::string& s);

// Default validity bounds in meters for metric sources; relative sources use
// [1e-6, +inf). Both are overridable per manifest entry.
constexpr double kDefaultMinDepth = 0.01;
constexpr double kDefaultMaxDepth = 80.0;
constexpr double kRelativeMinDepth = 1e-6;

// png-16 counts are multiplied by depth_scale; count 0 becomes NaN (the
// usual RGB-D missing-depth convention). npy-f32 values widen unchanged.
DepthMap decode_depth(const std::string& path, DepthFormat format, double depth_scale,
                      UnitTag unit_tag = UnitTag::metric);

void encode_depth_npy(const std::string& path, const DepthMap& depth);
void encode_depth_png16(const std::string& path, const DepthMap& depth, double depth_scale);

// 8-bit image: nonzero pixels are true; instance_id must be absent.
// 16-bit instance-ID image: pixels equal to instance_id are true.
BinaryMask decode_mask(const std::string& path, std::optional<int> instance_id = std::nullopt);

// True iff the value is finite and min_depth <= value <= max_depth.
BinaryMask compute_valid(const DepthMap& depth, double min_depth, double max_depth);

// Minimal half-open box containing all true pixels; throws on an empty mask.
BBox tight_bbox(const BinaryMask& mask);

}  // namespace fde
