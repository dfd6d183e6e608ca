// Command-line front end: build benchmark manifests, evaluate predictions,
// aggregate and render results, and run the kernel self-check suites.
#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "fde/depth_core.hpp"
#include "fde/fusion.hpp"
#include "fde/loss.hpp"
#include "fde/manifest.hpp"
#include "fde/metrics.hpp"
#include "fde/npy.hpp"
#include "fde/reference.hpp"
#include "fde/regions.hpp"
#include "fde/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Worker count: --jobs beats FDE_JOBS beats the OpenMP default.
void apply_jobs(int jobs) {
    if (jobs <= 0) {
        const char* env = std::getenv("FDE_JOBS");
        if (env && *env) jobs = std::atoi(env);
    }
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

// Small deterministic RNG for self-check fixtures (splitmix64).
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ULL) {}
    uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double unif() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    int below(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }
};

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
    std::string images_dir, depths_dir, masks_dir, out_path;
    std::string dataset = "unnamed";
    std::string depth_format = "png-16";
    std::string unit = "metric";
    std::string group_by = "stem";  // or "parent"
    double depth_scale = 1e-3;
    double min_area_frac = 0.001;
    double val_ratio = 0.2;
    uint64_t split_seed = 0;
    double min_depth = -1.0;  // <0: pick default for the unit
    double max_depth = -1.0;
    bool pseudo_mask = false;
    std::string split_file, prompts_file, report_path;
    bool validate = false;
    int jobs = 0;
};

// Store paths relative to the manifest's directory so the corpus tree can
// move as a unit. Manifest consumers resolve relative paths against that
// directory, so a CWD-relative input must be rewritten even when it escapes
// the directory ("../images/..."); absolute inputs that live outside it are
// the one case kept verbatim.
std::string relativize(const fs::path& base_dir, const std::string& path) {
    std::error_code ec;
    fs::path canon_base = fs::weakly_canonical(base_dir, ec);
    if (ec) return path;
    fs::path canon = fs::weakly_canonical(path, ec);
    if (ec) return path;
    fs::path rel = canon.lexically_relative(canon_base);
    if (rel.empty()) return path;
    if (rel.native().rfind("..", 0) == 0 && fs::path(path).is_absolute()) return path;
    return rel.generic_string();
}

int run_build(const BuildArgs& args) {
    apply_jobs(args.jobs);

    fde::BuildConfig config;
    config.dataset = args.dataset;
    config.min_area_frac = args.min_area_frac;
    config.val_ratio = args.val_ratio;
    config.split_seed = args.split_seed;
    config.depth_format = fde::parse_depth_format(args.depth_format);
    config.depth_scale = args.depth_scale;
    config.unit_tag = args.unit == "relative" ? fde::UnitTag::relative : fde::UnitTag::metric;
    config.min_depth = args.min_depth >= 0.0 ? args.min_depth
                       : config.unit_tag == fde::UnitTag::relative ? fde::kRelativeMinDepth
                                                                   : fde::kDefaultMinDepth;
    config.max_depth = args.max_depth >= 0.0
                           ? args.max_depth
                           : (config.unit_tag == fde::UnitTag::relative
                                  ? std::numeric_limits<double>::infinity()
                                  : fde::kDefaultMaxDepth);
    config.pseudo_mask = args.pseudo_mask;

    if (!args.split_file.empty()) {
        std::ifstream in(args.split_file);
        if (!in) throw std::runtime_error("cannot open split file: " + args.split_file);
        json j = json::parse(in);
        for (auto it = j.begin(); it != j.end(); ++it) {
            std::string split = it.value().get<std::string>();
            if (split != "train" && split != "val")
                throw std::runtime_error("split file: split must be 'train' or 'val'");
            config.split_overrides[it.key()] = split;
        }
    }

    std::map<int, std::string> prompts;
    if (!args.prompts_file.empty()) {
        std::ifstream in(args.prompts_file);
        if (!in) throw std::runtime_error("cannot open prompts file: " + args.prompts_file);
        json j = json::parse(in);
        for (auto it = j.begin(); it != j.end(); ++it)
            prompts[std::stoi(it.key())] = it.value().get<std::string>();
    }

    // Discover sources by walking the mask directory; image and depth files
    // must share the mask's relative path-minus-extension.
    std::vector<std::string> mask_files;
    for (const auto& de : fs::recursive_directory_iterator(args.masks_dir))
        if (de.is_regular_file() && de.path().extension() == ".png")
            mask_files.push_back(de.path().string());
    std::sort(mask_files.begin(), mask_files.end());

    const std::string depth_ext =
        config.depth_format == fde::DepthFormat::npy_f32 ? ".npy" : ".png";
    std::vector<fde::SourceRecord> sources;
    for (const std::string& mf : mask_files) {
        fs::path rel = fs::path(mf).lexically_relative(args.masks_dir);
        fs::path rel_noext = rel.parent_path() / rel.stem();
        fde::SourceRecord src;
        src.instance_map_path = mf;
        src.image_path = (fs::path(args.images_dir) / rel_noext).string() + ".png";
        src.depth_path = (fs::path(args.depths_dir) / rel_noext).string() + depth_ext;
        if (args.group_by == "parent") {
            std::string parent = rel.parent_path().generic_string();
            src.group_key = parent.empty() ? "root" : parent;
        } else {
            src.group_key = rel_noext.generic_string();
        }
        src.class_names = prompts;
        sources.push_back(std::move(src));
    }

    fde::BuildResult result = fde::build_manifest(sources, config);

    fs::path out_dir = fs::path(args.out_path).parent_path();
    if (out_dir.empty()) out_dir = ".";
    fs::create_directories(out_dir);
    for (fde::ManifestEntry& e : result.entries) {
        e.image_path = relativize(out_dir, e.image_path);
        e.depth_path = relativize(out_dir, e.depth_path);
        e.mask_path = relativize(out_dir, e.mask_path);
    }
    fde::write_manifest(args.out_path, result.entries, config);

    const fde::BuildReport& rep = result.report;
    std::cout << "sources: " << rep.n_sources << " (" << rep.n_sources_skipped
              << " skipped), targets: " << rep.n_targets << " (" << rep.n_rejected_small
              << " below area threshold), split: " << rep.n_train << " train / " << rep.n_val
              << " val\n";
    for (const std::string& s : rep.skipped) std::cerr << "skipped: " << s << "\n";

    if (!args.report_path.empty()) {
        json j;
        j["schema_version"] = fde::kSchemaVersion;
        j["kind"] = "fde-build-report";
        j["tool_version"] = fde::kToolVersion;
        j["dataset"] = config.dataset;
        j["n_sources"] = rep.n_sources;
        j["n_sources_skipped"] = rep.n_sources_skipped;
        j["n_sources_with_targets"] = rep.n_sources_with_targets;
        j["n_targets"] = rep.n_targets;
        j["n_rejected_small"] = rep.n_rejected_small;
        j["n_train"] = rep.n_train;
        j["n_val"] = rep.n_val;
        j["skipped"] = rep.skipped;
        std::ofstream out(args.report_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write report: " + args.report_path);
        out << j.dump(2) << "\n";
    }

    if (args.validate) {
        fde::ManifestFile mf = fde::read_manifest(args.out_path);
        std::vector<std::string> issues = fde::validate_manifest(mf, out_dir.string());
        for (const std::string& s : issues) std::cerr << "validate: " << s << "\n";
        if (!issues.empty()) return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct PredRef {
    std::string path;
    fde::DepthFormat format = fde::DepthFormat::npy_f32;
    double depth_scale = 1.0;
};

struct EvalArgs {
    std::string manifest_path, predictions_path, out_path;
    std::string split = "all";
    std::string method = "unnamed";
    std::string band_shape = "disk";
    std::string pred_space = "depth";
    std::string alignment = "affine";
    int radius = 10;
    double delta_threshold = 1.25;
    int jobs = 0;
};

int run_evaluate(const EvalArgs& args) {
    apply_jobs(args.jobs);

    fde::ManifestFile manifest = fde::read_manifest(args.manifest_path);
    std::string manifest_dir = fs::path(args.manifest_path).parent_path().string();

    // Prediction index: one JSONL line per prediction, keyed by triplet_id
    // (exact) or image_key (everything derived from one source image).
    std::unordered_map<std::string, PredRef> by_triplet, by_image;
    {
        std::ifstream in(args.predictions_path);
        if (!in)
            throw std::runtime_error("cannot open predictions index: " + args.predictions_path);
        std::string pred_dir = fs::path(args.predictions_path).parent_path().string();
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
                PredRef ref;
                ref.path = fde::resolve_path(pred_dir, j.at("path").get<std::string>());
                ref.format = fde::parse_depth_format(j.value("format", "npy-f32"));
                ref.depth_scale = j.value("depth_scale", 1.0);
                if (j.contains("triplet_id"))
                    by_triplet[j.at("triplet_id").get<std::string>()] = ref;
                else if (j.contains("image_key"))
                    by_image[j.at("image_key").get<std::string>()] = ref;
                else
                    throw std::runtime_error("needs 'triplet_id' or 'image_key'");
            } catch (const std::exception& ex) {
                throw std::runtime_error("predictions decode error: " + args.predictions_path +
                                         ":" + std::to_string(lineno) + ": " + ex.what());
            }
        }
    }

    fde::EvalConfig config;
    config.radius = args.radius;
    config.delta_threshold = args.delta_threshold;
    config.band_shape = fde::parse_band_shape(args.band_shape);
    config.pred_space = fde::parse_pred_space(args.pred_space);
    config.alignment_mode = fde::parse_alignment_mode(args.alignment);

    std::vector<const fde::ManifestEntry*> entries;
    for (const fde::ManifestEntry& e : manifest.entries)
        if (args.split == "all" || e.split == args.split) entries.push_back(&e);

    struct Row {
        bool ok = false;
        fde::TripletResult result;
        const fde::ManifestEntry* entry = nullptr;
        std::string error;
    };
    std::vector<Row> rows(entries.size());

    // Triplets are independent; rows are written back in manifest order, so
    // the output bytes do not depend on the worker count.
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < entries.size(); ++i) {
        const fde::ManifestEntry& e = *entries[i];
        Row& row = rows[i];
        row.entry = &e;
        try {
            auto pred_it = by_triplet.find(e.triplet_id);
            const PredRef* ref = pred_it != by_triplet.end() ? &pred_it->second : nullptr;
            if (!ref) {
                std::string image_key = e.triplet_id.substr(0, e.triplet_id.rfind('#'));
                auto img_it = by_image.find(image_key);
                if (img_it != by_image.end()) ref = &img_it->second;
            }
            if (!ref) throw std::runtime_error("no prediction for triplet");

            fde::DepthMap gt =
                fde::decode_depth(fde::resolve_path(manifest_dir, e.depth_path),
                                  e.depth_format, e.depth_scale, e.unit_tag);
            fde::DepthMap pred = fde::decode_depth(ref->path, ref->format, ref->depth_scale);
            fde::BinaryMask mask =
                fde::decode_mask(fde::resolve_path(manifest_dir, e.mask_path), e.instance_id);
            if (pred.height != gt.height || pred.width != gt.width)
                throw std::runtime_error("prediction dimensions differ from depth");
            fde::BinaryMask valid = fde::compute_valid(gt, e.min_depth, e.max_depth);

            row.result = fde::evaluate_triplet(pred, gt, mask, valid, config, e.triplet_id);
            row.ok = true;
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
    }

    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write results: " + args.out_path);
    json header;
    header["schema_version"] = fde::kSchemaVersion;
    header["kind"] = "fde-results";
    header["tool_version"] = fde::kToolVersion;
    header["dataset"] = manifest.dataset;
    header["method"] = args.method;
    json cfg;
    cfg["radius"] = config.radius;
    cfg["delta_threshold"] = config.delta_threshold;
    cfg["band_shape"] = args.band_shape;
    cfg["pred_space"] = args.pred_space;
    cfg["alignment"] = args.alignment;
    cfg["split"] = args.split;
    header["config"] = cfg;
    out << header.dump() << "\n";

    auto region_json = [](const fde::RegionMetrics& m) -> json {
        if (m.is_null()) return nullptr;
        json j;
        j["delta1"] = m.delta1;
        j["absrel"] = m.absrel;
        j["n_pixels"] = m.n_pixels;
        return j;
    };

    size_t n_ok = 0, n_err = 0;
    for (const Row& row : rows) {
        json j;
        j["triplet_id"] = row.entry->triplet_id;
        if (!row.ok) {
            j["error"] = row.error;
            out << j.dump() << "\n";
            ++n_err;
            continue;
        }
        j["dataset"] = row.entry->dataset;
        j["method"] = args.method;
        j["prompt_type"] = row.entry->prompt_type();
        j["split"] = row.entry->split;
        json align;
        align["a"] = row.result.alignment.a;
        align["b"] = row.result.alignment.b;
        align["degenerate_fallback"] = row.result.alignment.degenerate_fallback;
        align["negative_scale"] = row.result.alignment.negative_scale;
        j["alignment"] = align;
        json regions;
        regions["foreground"] = region_json(row.result.foreground);
        regions["boundary"] = region_json(row.result.boundary);
        regions["global"] = region_json(row.result.global);
        j["regions"] = regions;
        out << j.dump() << "\n";
        ++n_ok;
    }
    std::cout << "evaluated " << n_ok << " triplets, " << n_err << " errors\n";
    for (const Row& row : rows)
        if (!row.ok) std::cerr << row.entry->triplet_id << ": " << row.error << "\n";
    return (n_ok == 0 && !rows.empty()) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// aggregate

struct AggArgs {
    std::vector<std::string> results;
    std::string out_path;
    std::string stat = "median";
};

int run_aggregate(const AggArgs& args) {
    fde::StatisticMode mode =
        args.stat == "mean" ? fde::StatisticMode::mean : fde::StatisticMode::median_quartiles;

    // (dataset, method, prompt_type, region, metric) -> values in file order.
    std::map<std::array<std::string, 5>, std::vector<double>> cells;
    for (const std::string& rp : args.results) {
        std::ifstream in(rp);
        if (!in) throw std::runtime_error("cannot open results: " + rp);
        std::string line;
        size_t lineno = 0;
        bool have_header = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const std::exception& ex) {
                throw std::runtime_error("results decode error: " + rp + ":" +
                                         std::to_string(lineno) + ": " + ex.what());
            }
            if (!have_header) {
                if (j.value("kind", "") != std::string("fde-results"))
                    throw std::runtime_error("results decode error: " + rp +
                                             ":1: missing fde-results header");
                have_header = true;
                continue;
            }
            if (j.contains("error")) continue;  // error records carry no metrics
            std::string dataset = j.at("dataset").get<std::string>();
            std::string method = j.at("method").get<std::string>();
            std::string prompt = j.at("prompt_type").get<std::string>();
            for (const auto& region : {"foreground", "boundary", "global"}) {
                const json& r = j.at("regions").at(region);
                if (r.is_null()) continue;
                cells[{dataset, method, prompt, region, "delta1"}].push_back(
                    r.at("delta1").get<double>());
                cells[{dataset, method, prompt, region, "absrel"}].push_back(
                    r.at("absrel").get<double>());
            }
        }
    }

    json out_cells = json::array();
    for (const auto& [key, values] : cells) {
        fde::AggregateStats stats = fde::aggregate(values, mode);
        json c;
        c["dataset"] = key[0];
        c["method"] = key[1];
        c["prompt_type"] = key[2];
        c["region"] = key[3];
        c["metric"] = key[4];
        c["count"] = stats.count;
        c["median"] = stats.median;
        c["q25"] = stats.q25;
        c["q75"] = stats.q75;
        c["mean"] = stats.mean;
        out_cells.push_back(std::move(c));
    }

    json j;
    j["schema_version"] = fde::kSchemaVersion;
    j["kind"] = "fde-stats";
    j["tool_version"] = fde::kToolVersion;
    j["stat"] = args.stat;
    j["cells"] = std::move(out_cells);
    std::ofstream out(args.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write stats: " + args.out_path);
    out << j.dump(2) << "\n";
    std::cout << "aggregated " << cells.size() << " cells\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
    std::string stats_path, out_path;
    std::string format = "markdown";
};

int run_report(const ReportArgs& args) {
    std::ifstream in(args.stats_path);
    if (!in) throw std::runtime_error("cannot open stats: " + args.stats_path);
    json j = json::parse(in);
    if (j.value("kind", "") != std::string("fde-stats"))
        throw std::runtime_error("not a stats file: " + args.stats_path);
    fde::StatisticMode mode = j.value("stat", "median") == std::string("mean")
                                  ? fde::StatisticMode::mean
                                  : fde::StatisticMode::median_quartiles;

    fde::StatsTable table;
    for (const json& c : j.at("cells")) {
        fde::AggregateStats stats;
        stats.mode = mode;
        stats.count = c.at("count").get<size_t>();
        auto get = [&](const char* k) {
            return c.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN()
                                     : c.at(k).get<double>();
        };
        stats.median = get("median");
        stats.q25 = get("q25");
        stats.q75 = get("q75");
        stats.mean = get("mean");
        table[c.at("dataset").get<std::string>()][c.at("method").get<std::string>()]
             [c.at("prompt_type").get<std::string>()][c.at("region").get<std::string>()]
             [c.at("metric").get<std::string>()] = stats;
    }

    std::string rendered = fde::render_report(table, fde::parse_report_format(args.format));
    if (args.out_path.empty()) {
        std::cout << rendered;
    } else {
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write report: " + args.out_path);
        out << rendered;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// kernel-check

struct CheckArgs {
    std::string which = "all";
    std::string json_path;
    uint64_t seed = 7;
    int trials = 25;
    int jobs = 0;
};

fde::BinaryMask random_mask(Rng& rng, int h, int w) {
    fde::BinaryMask mask(h, w);
    // A few random rectangles plus salt so masks have both structure and noise.
    int n_rects = 1 + rng.below(3);
    for (int r = 0; r < n_rects; ++r) {
        int y0 = rng.below(h), x0 = rng.below(w);
        int y1 = y0 + 1 + rng.below(h - y0), x1 = x0 + 1 + rng.below(w - x0);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) mask.set(y, x, true);
    }
    for (int i = 0; i < h * w / 20; ++i) mask.set(rng.below(h), rng.below(w), !rng.below(2));
    return mask;
}

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

CheckResult check_morphology(uint64_t seed, int trials) {
    Rng rng(fde::stable_hash64(seed, "kernel-check-morphology"));
    size_t compared = 0;
    for (int t = 0; t < trials; ++t) {
        int h = 1 + rng.below(48), w = 1 + rng.below(48);
        fde::BinaryMask mask = random_mask(rng, h, w);
        fde::DistanceField fast = fde::exact_edt(mask);
        fde::DistanceField brute = fde::ref::edt_brute_force(mask);
        if (fast.values != brute.values)
            return {"morphology", false, "distance transform mismatch"};
        for (int radius : {1, 3, 10}) {
            fde::BinaryMask band = fde::boundary_band(mask, radius, fde::BandShape::disk);
            fde::BinaryMask band_ref = fde::ref::boundary_band_brute(mask, radius);
            if (band.bits != band_ref.bits)
                return {"morphology", false, "disk band mismatch"};
            fde::BinaryMask sq = fde::boundary_band(mask, radius, fde::BandShape::square);
            fde::BinaryMask sq_ref = fde::ref::boundary_band_square_brute(mask, radius);
            if (sq.bits != sq_ref.bits)
                return {"morphology", false, "square band mismatch"};
            compared += 2;
        }
    }
    return {"morphology", true,
            std::to_string(trials) + " masks, " + std::to_string(compared) + " bands"};
}

CheckResult check_alignment(uint64_t seed, int trials) {
    Rng rng(fde::stable_hash64(seed, "kernel-check-alignment"));
    double worst_gap = 0.0;
    for (int t = 0; t < trials; ++t) {
        int h = 4 + rng.below(12), w = 4 + rng.below(12);
        fde::DepthMap pred(h, w), gt(h, w);
        fde::BinaryMask valid(h, w);
        for (int i = 0; i < h * w; ++i) {
            pred.values[static_cast<size_t>(i)] = 0.5 + 4.0 * rng.unif();
            gt.values[static_cast<size_t>(i)] = 0.5 + 4.0 * rng.unif();
            valid.bits[static_cast<size_t>(i)] = rng.unif() < 0.9 ? 1 : 0;
        }
        if (valid.count() < 2) continue;
        fde::AlignmentParams fit = fde::fit_scale_shift(pred, gt, valid);
        double base = fde::ref::alignment_residual(pred, gt, valid, fit.a, fit.b);
        // The fitted point must beat a local grid of perturbations.
        for (int da = -5; da <= 5; ++da) {
            for (int db = -5; db <= 5; ++db) {
                if (da == 0 && db == 0) continue;
                double r = fde::ref::alignment_residual(pred, gt, valid, fit.a + da * 0.01,
                                                        fit.b + db * 0.01);
                worst_gap = std::max(worst_gap, base - r);
            }
        }
    }
    bool pass = worst_gap <= 1e-9;
    return {"alignment", pass, "max residual gap " + std::to_string(worst_gap)};
}

CheckResult check_metrics(uint64_t seed, int trials) {
    Rng rng(fde::stable_hash64(seed, "kernel-check-metrics"));
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        int h = 2 + rng.below(24), w = 2 + rng.below(24);
        fde::DepthMap pred(h, w), gt(h, w);
        fde::BinaryMask region(h, w);
        for (int i = 0; i < h * w; ++i) {
            pred.values[static_cast<size_t>(i)] = 0.2 + 4.0 * rng.unif();
            gt.values[static_cast<size_t>(i)] = 0.2 + 4.0 * rng.unif();
            region.bits[static_cast<size_t>(i)] = rng.unif() < 0.7 ? 1 : 0;
        }
        auto d_fast = fde::delta1(pred, gt, region);
        auto d_ref = fde::ref::delta1_loop(pred, gt, region);
        auto a_fast = fde::absrel(pred, gt, region);
        auto a_ref = fde::ref::absrel_loop(pred, gt, region);
        if (d_fast.has_value() != d_ref.has_value() || a_fast.has_value() != a_ref.has_value())
            return {"metrics", false, "empty-region disagreement"};
        if (d_fast) worst = std::max(worst, std::fabs(*d_fast - *d_ref));
        if (a_fast) worst = std::max(worst, std::fabs(*a_fast - *a_ref));
    }
    bool pass = worst < 1e-12;
    return {"metrics", pass, "max |fast - loop| = " + std::to_string(worst)};
}

CheckResult check_aggregation(uint64_t seed, int trials) {
    Rng rng(fde::stable_hash64(seed, "kernel-check-aggregation"));
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> values(static_cast<size_t>(1 + rng.below(200)));
        for (double& v : values) v = rng.unif() * 2.0 - 0.5;
        for (auto mode : {fde::StatisticMode::median_quartiles, fde::StatisticMode::mean}) {
            fde::AggregateStats a = fde::aggregate(values, mode);
            fde::AggregateStats b = fde::ref::aggregate_sorted(values, mode);
            worst = std::max({worst, std::fabs(a.median - b.median), std::fabs(a.q25 - b.q25),
                              std::fabs(a.q75 - b.q75), std::fabs(a.mean - b.mean)});
        }
    }
    bool pass = worst < 1e-12;
    return {"aggregation", pass, "max order-statistic gap " + std::to_string(worst)};
}

CheckResult check_fusion(uint64_t seed) {
    double worst = 0.0;
    std::string detail;
    for (auto variant :
         {fde::fusion::Variant::full, fde::fusion::Variant::shuffled_tokens,
          fde::fusion::Variant::shared_scale, fde::fusion::Variant::single_mlp,
          fde::fusion::Variant::no_gate}) {
        fde::fusion::FusionConfig config;
        config.n_scales = 2;
        config.n_tokens = 9;
        config.c_g = 8;
        config.c_p = 4;
        config.c_h = 8;
        config.n_experts = 4;
        config.variant = variant;
        config.shuffle_seed = seed + 1;
        fde::fusion::GradCheckReport rep = fde::fusion::grad_check(config, seed, 1e-5, 1e-4);
        worst = std::max(worst, rep.worst);
        detail += std::string(fde::fusion::variant_name(variant)) + "=" +
                  std::to_string(rep.worst) + " ";
        if (!rep.pass) return {"fusion-grad", false, detail};
    }
    return {"fusion-grad", true, "max rel err " + std::to_string(worst)};
}

CheckResult check_loss(uint64_t seed) {
    double worst = 0.0;
    for (bool disparity : {false, true}) {
        fde::loss::LossGradCheckReport rep =
            fde::loss::loss_grad_check(seed, 16, 16, 1e-5, 1e-4, disparity);
        worst = std::max(worst, rep.worst);
        if (!rep.pass)
            return {"loss-grad", false,
                    std::string(disparity ? "disparity" : "depth") + " space rel err " +
                        std::to_string(rep.worst)};
    }
    return {"loss-grad", true, "max rel err " + std::to_string(worst)};
}

int run_kernel_check(const CheckArgs& args) {
    apply_jobs(args.jobs);
    std::vector<CheckResult> results;
    auto want = [&](const std::string& name) { return args.which == "all" || args.which == name; };
    if (want("morphology")) results.push_back(check_morphology(args.seed, args.trials));
    if (want("alignment")) results.push_back(check_alignment(args.seed, args.trials));
    if (want("metrics")) results.push_back(check_metrics(args.seed, args.trials));
    if (want("aggregation")) results.push_back(check_aggregation(args.seed, args.trials));
    if (want("fusion")) results.push_back(check_fusion(args.seed));
    if (want("loss")) results.push_back(check_loss(args.seed));
    if (results.empty()) throw std::runtime_error("unknown check: " + args.which);

    bool all_pass = true;
    for (const CheckResult& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << ": " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    if (!args.json_path.empty()) {
        json j;
        j["schema_version"] = fde::kSchemaVersion;
        j["kind"] = "fde-kernel-check";
        j["tool_version"] = fde::kToolVersion;
        j["seed"] = args.seed;
        j["pass"] = all_pass;
        j["checks"] = json::array();
        for (const CheckResult& r : results) {
            json c;
            c["name"] = r.name;
            c["pass"] = r.pass;
            c["detail"] = r.detail;
            j["checks"].push_back(std::move(c));
        }
        std::ofstream out(args.json_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write report: " + args.json_path);
        out << j.dump(2) << "\n";
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"target-centric depth benchmark toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", fde::kToolVersion);

    BuildArgs build;
    CLI::App* b = app.add_subcommand("build", "build a benchmark manifest from source images");
    b->add_option("--images", build.images_dir, "directory of source images")->required();
    b->add_option("--depths", build.depths_dir, "directory of depth files")->required();
    b->add_option("--masks", build.masks_dir, "directory of instance-id or binary masks")
        ->required();
    b->add_option("--out", build.out_path, "output manifest JSONL path")->required();
    b->add_option("--dataset", build.dataset, "dataset name recorded in the manifest");
    b->add_option("--depth-format", build.depth_format, "png-16 or npy-f32")
        ->check(CLI::IsMember({"png-16", "npy-f32"}));
    b->add_option("--depth-scale", build.depth_scale, "meters per png-16 count");
    b->add_option("--unit", build.unit, "depth unit: metric or relative")
        ->check(CLI::IsMember({"metric", "relative"}));
    b->add_option("--min-area-frac", build.min_area_frac,
                  "reject targets below this fraction of the image area");
    b->add_option("--val-ratio", build.val_ratio, "fraction of groups hashed into val");
    b->add_option("--split-seed", build.split_seed, "seed for the hash split");
    b->add_option("--min-depth", build.min_depth, "validity floor (unit default if omitted)");
    b->add_option("--max-depth", build.max_depth, "validity ceiling (unit default if omitted)");
    b->add_option("--group-by", build.group_by, "split granularity: stem or parent")
        ->check(CLI::IsMember({"stem", "parent"}));
    b->add_option("--split-file", build.split_file,
                  "JSON {group_key: train|val} overriding the hash split");
    b->add_option("--text-prompts", build.prompts_file,
                  "JSON {instance_id: prompt} attached to matching targets");
    b->add_option("--report", build.report_path, "write a JSON build report here");
    b->add_flag("--pseudo-mask", build.pseudo_mask, "mark all entries as model-generated masks");
    b->add_flag("--validate", build.validate, "re-read and deep-validate the written manifest");
    b->add_option("--jobs", build.jobs, "worker threads (default: FDE_JOBS or all cores)");

    EvalArgs eval;
    CLI::App* e = app.add_subcommand("evaluate", "score predictions against a manifest");
    e->add_option("--manifest", eval.manifest_path, "manifest JSONL")->required();
    e->add_option("--predictions", eval.predictions_path, "predictions index JSONL")->required();
    e->add_option("--out", eval.out_path, "output results JSONL")->required();
    e->add_option("--split", eval.split, "evaluate only this split (train, val, all)")
        ->check(CLI::IsMember({"train", "val", "all"}));
    e->add_option("--method", eval.method, "method label recorded per row");
    e->add_option("--radius", eval.radius, "boundary band radius in pixels");
    e->add_option("--band-shape", eval.band_shape, "disk or square")
        ->check(CLI::IsMember({"disk", "square"}));
    e->add_option("--delta-threshold", eval.delta_threshold, "accuracy ratio threshold");
    e->add_option("--pred-space", eval.pred_space, "predictions are depth or disparity")
        ->check(CLI::IsMember({"depth", "disparity"}));
    e->add_option("--alignment", eval.alignment, "affine (scale+shift) or none")
        ->check(CLI::IsMember({"affine", "none"}));
    e->add_option("--jobs", eval.jobs, "worker threads (default: FDE_JOBS or all cores)");

    AggArgs agg;
    CLI::App* a = app.add_subcommand("aggregate", "aggregate per-triplet results into stats");
    a->add_option("--results", agg.results, "results JSONL files")->required()->expected(-1);
    a->add_option("--out", agg.out_path, "output stats JSON")->required();
    a->add_option("--stat", agg.stat, "median (with quartiles) or mean")
        ->check(CLI::IsMember({"median", "mean"}));

    ReportArgs rep;
    CLI::App* r = app.add_subcommand("report", "render aggregated stats as a table");
    r->add_option("--stats", rep.stats_path, "stats JSON from aggregate")->required();
    r->add_option("--format", rep.format, "markdown or csv")
        ->check(CLI::IsMember({"markdown", "csv"}));
    r->add_option("--out", rep.out_path, "output file (stdout if omitted)");

    CheckArgs check;
    CLI::App* k = app.add_subcommand("kernel-check", "run numeric self-checks against oracles");
    k->add_option("--which", check.which,
                  "all, morphology, alignment, metrics, aggregation, fusion, loss");
    k->add_option("--seed", check.seed, "fixture seed");
    k->add_option("--trials", check.trials, "fixtures per randomized check");
    k->add_option("--json", check.json_path, "write a JSON check report here");
    k->add_option("--jobs", check.jobs, "worker threads (default: FDE_JOBS or all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        int code = app.exit(ex);
        return code == 0 ? 0 : 2;  // 2 = usage error; 0 covers --help/--version
    }

    try {
        if (b->parsed()) return run_build(build);
        if (e->parsed()) return run_evaluate(eval);
        if (a->parsed()) return run_aggregate(agg);
        if (r->parsed()) return run_report(rep);
        if (k->parsed()) return run_kernel_check(check);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
