#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fde/depth_core.hpp"
#include "fde/grid.hpp"
#include "fde/png_io.hpp"

namespace fde {

// One image-target-depth triplet. Paths are stored as written by the builder
// (relative paths resolve against the manifest's directory).
struct ManifestEntry {
    std::string triplet_id;  // "<group_key>/<image stem>#<instance_id>"
    std::string dataset;
    std::string split;       // "train" or "val"
    std::string group_key;   // split granularity: all targets of one source image share it
    std::string image_path;
    std::string depth_path;
    std::string mask_path;
    DepthFormat depth_format = DepthFormat::png_16;
    double depth_scale = 1e-3;
    std::optional<int> instance_id;  // absent for plain 8-bit masks
    BBox bbox;                       // tight box around the target mask
    std::optional<std::string> text_prompt;
    bool pseudo_mask = false;
    double min_depth = kDefaultMinDepth;
    double max_depth = kDefaultMaxDepth;  // +inf allowed (relative sources)
    UnitTag unit_tag = UnitTag::metric;

    std::string prompt_type() const { return text_prompt ? "box/text" : "box"; }
};

// One source image the builder turns into zero or more manifest entries.
struct SourceRecord {
    std::string image_path;
    std::string depth_path;
    std::string instance_map_path;  // 16-bit instance IDs, or 8-bit binary mask
    std::string group_key;
    std::map<int, std::string> class_names;  // instance id -> text prompt (optional)
};

struct BuildConfig {
    std::string dataset = "unnamed";
    double min_area_frac = 0.001;  // reject targets smaller than this fraction
    double val_ratio = 0.2;
    uint64_t split_seed = 0;
    DepthFormat depth_format = DepthFormat::png_16;
    double depth_scale = 1e-3;
    double min_depth = kDefaultMinDepth;
    double max_depth = kDefaultMaxDepth;
    UnitTag unit_tag = UnitTag::metric;
    bool pseudo_mask = false;
    // Explicit group_key -> split assignments; overrides the hash split.
    std::map<std::string, std::string> split_overrides;
};

struct BuildReport {
    size_t n_sources = 0;
    size_t n_sources_skipped = 0;        // unreadable / inconsistent inputs
    size_t n_sources_with_targets = 0;
    size_t n_targets = 0;
    size_t n_rejected_small = 0;
    size_t n_train = 0;
    size_t n_val = 0;
    std::vector<std::string> skipped;    // "path: reason" lines
};

struct Target {
    int instance_id = 0;
    BinaryMask mask;
    BBox bbox;
};

// Connected labeling is the annotator's job; this only collects pixels per
// instance id (ascending, id 0 reserved for background) and drops instances
// smaller than min_area_frac * H * W pixels.
std::vector<Target> extract_targets(const png_io::GrayImage& instance_map,
                                    double min_area_frac,
                                    size_t* n_rejected_small = nullptr);

// Deterministic hash split: val iff stable_hash64(seed, group_key) / 2^64
// falls below val_ratio. Same key, same seed, same split on every platform.
std::string assign_split(const std::string& group_key, double val_ratio, uint64_t seed);

struct BuildResult {
    std::vector<ManifestEntry> entries;  // sorted by triplet_id
    BuildReport report;
};

// Scans the sources, extracts targets, assigns splits, and returns entries
// sorted by triplet_id. Unreadable sources are skipped and logged in the
// report; a duplicate triplet_id is a hard error.
BuildResult build_manifest(const std::vector<SourceRecord>& sources, const BuildConfig& config);

// JSONL serialization: one header object (schema/tool/config echo) followed by
// one object per entry. Byte-identical for identical inputs and config.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries,
                    const BuildConfig& config);

struct ManifestFile {
    std::string dataset;
    std::vector<ManifestEntry> entries;
};

// Parses and structurally validates a manifest: unique triplet_ids and
// consistent split per group_key. Decode errors name the offending line.
ManifestFile read_manifest(const std::string& path);

// Deep validation: masks decode, are non-empty, and match the stored bbox.
// Returns "triplet_id: reason" lines, empty when everything passes.
std::vector<std::string> validate_manifest(const ManifestFile& manifest,
                                           const std::string& base_dir);

// Resolve a manifest-relative path against the manifest's directory.
std::string resolve_path(const std::string& base_dir, const std::string& path);

}  // namespace fde
