#include "fde/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "fde/version.hpp"

namespace fde {

namespace {

using json = nlohmann::ordered_json;

UnitTag parse_unit_tag(const std::string& s) {
    if (s == "metric") return UnitTag::metric;
    if (s == "relative") return UnitTag::relative;
    if (s == "disparity") return UnitTag::disparity;
    throw std::runtime_error("parse_unit_tag: unknown unit '" + s + "'");
}

std::string stem_of(const std::string& path) {
    return std::filesystem::path(path).stem().string();
}

json entry_to_json(const ManifestEntry& e) {
    json j;
    j["triplet_id"] = e.triplet_id;
    j["dataset"] = e.dataset;
    j["split"] = e.split;
    j["group_key"] = e.group_key;
    j["image"] = e.image_path;
    j["depth"] = e.depth_path;
    j["mask"] = e.mask_path;
    j["depth_format"] = depth_format_name(e.depth_format);
    j["depth_scale"] = e.depth_scale;
    if (e.instance_id)
        j["instance_id"] = *e.instance_id;
    else
        j["instance_id"] = nullptr;
    j["bbox"] = {e.bbox.x_min, e.bbox.y_min, e.bbox.x_max, e.bbox.y_max};
    if (e.text_prompt)
        j["text_prompt"] = *e.text_prompt;
    else
        j["text_prompt"] = nullptr;
    j["pseudo_mask"] = e.pseudo_mask;
    j["min_depth"] = e.min_depth;
    // JSON has no +inf; null marks an unbounded far plane
    if (std::isfinite(e.max_depth))
        j["max_depth"] = e.max_depth;
    else
        j["max_depth"] = nullptr;
    j["unit"] = unit_tag_name(e.unit_tag);
    return j;
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.triplet_id = j.at("triplet_id").get<std::string>();
    e.dataset = j.at("dataset").get<std::string>();
    e.split = j.at("split").get<std::string>();
    e.group_key = j.at("group_key").get<std::string>();
    e.image_path = j.at("image").get<std::string>();
    e.depth_path = j.at("depth").get<std::string>();
    e.mask_path = j.at("mask").get<std::string>();
    e.depth_format = parse_depth_format(j.at("depth_format").get<std::string>());
    e.depth_scale = j.at("depth_scale").get<double>();
    if (!j.at("instance_id").is_null()) e.instance_id = j.at("instance_id").get<int>();
    const auto& box = j.at("bbox");
    if (!box.is_array() || box.size() != 4)
        throw std::runtime_error("bbox must be [x_min, y_min, x_max, y_max]");
    e.bbox = {box[0].get<int>(), box[1].get<int>(), box[2].get<int>(), box[3].get<int>()};
    if (e.bbox.x_min >= e.bbox.x_max || e.bbox.y_min >= e.bbox.y_max)
        throw std::runtime_error("bbox is empty or inverted");
    if (!j.at("text_prompt").is_null()) e.text_prompt = j.at("text_prompt").get<std::string>();
    e.pseudo_mask = j.value("pseudo_mask", false);
    e.min_depth = j.at("min_depth").get<double>();
    e.max_depth = j.at("max_depth").is_null() ? std::numeric_limits<double>::infinity()
                                              : j.at("max_depth").get<double>();
    e.unit_tag = parse_unit_tag(j.value("unit", "metric"));
    if (e.split != "train" && e.split != "val")
        throw std::runtime_error("split must be 'train' or 'val', got '" + e.split + "'");
    return e;
}

}  // namespace

std::vector<Target> extract_targets(const png_io::GrayImage& instance_map,
                                    double min_area_frac, size_t* n_rejected_small) {
    const int h = instance_map.height, w = instance_map.width;
    const double min_area = min_area_frac * static_cast<double>(h) * static_cast<double>(w);

    // Pixel count per nonzero id; std::map keeps ids ascending.
    std::map<uint16_t, size_t> areas;
    for (uint16_t v : instance_map.pixels)
        if (v != 0) ++areas[v];

    if (n_rejected_small) *n_rejected_small = 0;
    std::vector<Target> targets;
    for (const auto& [id, area] : areas) {
        if (static_cast<double>(area) < min_area) {
            if (n_rejected_small) ++*n_rejected_small;
            continue;
        }
        Target t;
        t.instance_id = id;
        t.mask = BinaryMask(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (instance_map.pixels[static_cast<size_t>(y) * w + x] == id)
                    t.mask.set(y, x, true);
        t.bbox = tight_bbox(t.mask);
        targets.push_back(std::move(t));
    }
    return targets;
}

std::string assign_split(const std::string& group_key, double val_ratio, uint64_t seed) {
    // Top 53 bits give an exact double in [0, 1); platform-independent.
    uint64_t h = stable_hash64(seed, group_key);
    double frac = static_cast<double>(h >> 11) * 0x1.0p-53;
    return frac < val_ratio ? "val" : "train";
}

BuildResult build_manifest(const std::vector<SourceRecord>& sources, const BuildConfig& config) {
    struct SourceOutcome {
        std::vector<ManifestEntry> entries;
        size_t n_rejected_small = 0;
        std::string error;  // non-empty => skipped
        bool has_targets = false;
    };
    std::vector<SourceOutcome> outcomes(sources.size());

    // Sources are independent; per-source results merge in input order below,
    // so the output does not depend on the thread count.
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < sources.size(); ++i) {
        const SourceRecord& src = sources[i];
        SourceOutcome& out = outcomes[i];
        try {
            png_io::GrayImage imap = png_io::read_gray(src.instance_map_path);
            // 8-bit maps are plain binary masks; collapse to one instance so the
            // target equals what decode_mask(path) returns at evaluation time.
            if (imap.bit_depth == 8)
                for (uint16_t& p : imap.pixels) p = p != 0 ? 1 : 0;
            DepthMap depth = decode_depth(src.depth_path, config.depth_format,
                                          config.depth_scale, config.unit_tag);
            if (depth.height != imap.height || depth.width != imap.width)
                throw std::runtime_error("depth and instance map dimensions differ");
            std::ifstream img(src.image_path, std::ios::binary);
            if (!img || img.peek() == std::ifstream::traits_type::eof())
                throw std::runtime_error("cannot read image: " + src.image_path);

            std::vector<Target> targets =
                extract_targets(imap, config.min_area_frac, &out.n_rejected_small);
            out.has_targets = !targets.empty();
            for (Target& t : targets) {
                ManifestEntry e;
                e.dataset = config.dataset;
                e.group_key = src.group_key;
                e.triplet_id = src.group_key + "/" + stem_of(src.image_path) + "#" +
                               std::to_string(t.instance_id);
                e.image_path = src.image_path;
                e.depth_path = src.depth_path;
                e.mask_path = src.instance_map_path;
                e.depth_format = config.depth_format;
                e.depth_scale = config.depth_scale;
                // 8-bit maps are plain binary masks: one target, no id filter
                if (imap.bit_depth == 16) e.instance_id = t.instance_id;
                e.bbox = t.bbox;
                auto it = src.class_names.find(t.instance_id);
                if (it != src.class_names.end()) e.text_prompt = it->second;
                e.pseudo_mask = config.pseudo_mask;
                e.min_depth = config.min_depth;
                e.max_depth = config.max_depth;
                e.unit_tag = config.unit_tag;
                auto ov = config.split_overrides.find(src.group_key);
                e.split = ov != config.split_overrides.end()
                              ? ov->second
                              : assign_split(src.group_key, config.val_ratio,
                                             config.split_seed);
                out.entries.push_back(std::move(e));
            }
        } catch (const std::exception& ex) {
            out.error = src.instance_map_path + ": " + ex.what();
        }
    }

    BuildResult result;
    result.report.n_sources = sources.size();
    for (SourceOutcome& out : outcomes) {
        if (!out.error.empty()) {
            ++result.report.n_sources_skipped;
            result.report.skipped.push_back(out.error);
            continue;
        }
        result.report.n_rejected_small += out.n_rejected_small;
        if (out.has_targets) ++result.report.n_sources_with_targets;
        for (ManifestEntry& e : out.entries) result.entries.push_back(std::move(e));
    }

    std::sort(result.entries.begin(), result.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) {
                  return a.triplet_id < b.triplet_id;
              });
    for (size_t i = 1; i < result.entries.size(); ++i)
        if (result.entries[i].triplet_id == result.entries[i - 1].triplet_id)
            throw std::runtime_error("build_manifest: duplicate triplet_id: " +
                                     result.entries[i].triplet_id);

    result.report.n_targets = result.entries.size();
    for (const ManifestEntry& e : result.entries)
        (e.split == "val" ? result.report.n_val : result.report.n_train) += 1;
    return result;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries,
                    const BuildConfig& config) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_manifest: cannot write " + path);

    json header;
    header["schema_version"] = kSchemaVersion;
    header["kind"] = "fde-manifest";
    header["tool_version"] = kToolVersion;
    header["dataset"] = config.dataset;
    json cfg;
    cfg["min_area_frac"] = config.min_area_frac;
    cfg["val_ratio"] = config.val_ratio;
    cfg["split_seed"] = config.split_seed;
    cfg["depth_format"] = depth_format_name(config.depth_format);
    cfg["depth_scale"] = config.depth_scale;
    cfg["unit"] = unit_tag_name(config.unit_tag);
    header["config"] = cfg;
    out << header.dump() << "\n";
    for (const ManifestEntry& e : entries) out << entry_to_json(e).dump() << "\n";
    if (!out) throw std::runtime_error("write_manifest: write failed: " + path);
}

ManifestFile read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_manifest: cannot open " + path);

    ManifestFile file;
    std::string line;
    size_t lineno = 0;
    std::set<std::string> seen_ids;
    std::map<std::string, std::string> group_split;
    bool have_header = false;

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& ex) {
            throw std::runtime_error("manifest decode error: " + path + ":" +
                                     std::to_string(lineno) + ": " + ex.what());
        }
        if (!have_header) {
            if (j.value("kind", "") != std::string("fde-manifest"))
                throw std::runtime_error("manifest decode error: " + path +
                                         ":1: missing fde-manifest header");
            if (j.at("schema_version").get<int>() != kSchemaVersion)
                throw std::runtime_error("manifest decode error: " + path +
                                         ":1: unsupported schema_version");
            file.dataset = j.value("dataset", "");
            have_header = true;
            continue;
        }
        try {
            ManifestEntry e = entry_from_json(j);
            if (!seen_ids.insert(e.triplet_id).second)
                throw std::runtime_error("duplicate triplet_id: " + e.triplet_id);
            auto [it, inserted] = group_split.emplace(e.group_key, e.split);
            if (!inserted && it->second != e.split)
                throw std::runtime_error("group_key '" + e.group_key +
                                         "' appears in both splits");
            file.entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw std::runtime_error("manifest decode error: " + path + ":" +
                                     std::to_string(lineno) + ": " + ex.what());
        }
    }
    if (!have_header)
        throw std::runtime_error("manifest decode error: " + path + ": empty file");
    return file;
}

std::vector<std::string> validate_manifest(const ManifestFile& manifest,
                                           const std::string& base_dir) {
    std::vector<std::string> issues;
    for (const ManifestEntry& e : manifest.entries) {
        try {
            BinaryMask mask = decode_mask(resolve_path(base_dir, e.mask_path), e.instance_id);
            if (mask.count() == 0) throw std::runtime_error("mask is empty");
            BBox tight = tight_bbox(mask);
            if (tight.x_min != e.bbox.x_min || tight.y_min != e.bbox.y_min ||
                tight.x_max != e.bbox.x_max || tight.y_max != e.bbox.y_max)
                throw std::runtime_error("stored bbox is not tight");
        } catch (const std::exception& ex) {
            issues.push_back(e.triplet_id + ": " + ex.what());
        }
    }
    return issues;
}

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

}  // namespace fde
