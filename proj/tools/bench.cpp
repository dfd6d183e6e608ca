// Timing harness: parallel kernels vs. their serial reference implementations
// on the same inputs, one row per kernel/shape pair.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "fde/fusion.hpp"
#include "fde/metrics.hpp"
#include "fde/reference.hpp"
#include "fde/regions.hpp"

namespace {

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
};

// Results are funneled into a volatile sink so the optimizer cannot drop the
// timed work.
volatile double g_sink = 0.0;

double time_ms(int repeats, const std::function<void()>& fn) {
    // One warm-up run, then the best of `repeats` timed runs.
    fn();
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

void print_row(const std::string& kernel, const std::string& shape, double serial_ms,
               double parallel_ms) {
    if (std::signbit(serial_ms)) {  // -0.0 marks a skipped reference
        std::printf("%-22s %-12s %12s %12.3f %9s\n", kernel.c_str(), shape.c_str(), "-",
                    parallel_ms, "-");
        return;
    }
    std::printf("%-22s %-12s %12.3f %12.3f %9.2fx\n", kernel.c_str(), shape.c_str(), serial_ms,
                parallel_ms, parallel_ms > 0 ? serial_ms / parallel_ms : 0.0);
}

fde::BinaryMask blob_mask(Rng& rng, int n) {
    fde::BinaryMask mask(n, n);
    double cy = n * (0.3 + 0.4 * rng.unif()), cx = n * (0.3 + 0.4 * rng.unif());
    double r = n * 0.25;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dy = y - cy, dx = x - cx;
            mask.set(y, x, dy * dy + dx * dx <= r * r || rng.unif() < 0.02);
        }
    return mask;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial-reference vs parallel-kernel timing"};
    std::vector<int> sizes{64, 128, 256};
    int repeats = 3;
    int jobs = 0;
    uint64_t seed = 11;
    app.add_option("--sizes", sizes, "square image sizes to bench");
    app.add_option("--repeats", repeats, "timed repeats per row (best is reported)");
    app.add_option("--jobs", jobs, "worker threads (default: FDE_JOBS or all cores)");
    app.add_option("--seed", seed, "fixture seed");
    CLI11_PARSE(app, argc, argv);

    if (jobs <= 0) {
        const char* env = std::getenv("FDE_JOBS");
        if (env && *env) jobs = std::atoi(env);
    }
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
    std::printf("threads: %d\n", jobs > 0 ? jobs : omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    std::printf("%-22s %-12s %12s %12s %9s\n", "kernel", "shape", "serial ms", "parallel ms",
                "speedup");

    Rng rng(seed);
    for (int n : sizes) {
        std::string shape = std::to_string(n) + "x" + std::to_string(n);
        fde::BinaryMask mask = blob_mask(rng, n);

        // Brute-force EDT is O(pixels * sources); cap the reference cost.
        if (n <= 128) {
            double serial = time_ms(
                repeats, [&] { g_sink = g_sink + fde::ref::edt_brute_force(mask).values.back(); });
            double parallel =
                time_ms(repeats, [&] { g_sink = g_sink + fde::exact_edt(mask).values.back(); });
            print_row("distance-transform", shape, serial, parallel);
        } else {
            double parallel =
                time_ms(repeats, [&] { g_sink = g_sink + fde::exact_edt(mask).values.back(); });
            print_row("distance-transform", shape, -0.0, parallel);
        }

        double band_serial = time_ms(
            repeats, [&] { g_sink = g_sink + fde::ref::boundary_band_brute(mask, 10).count(); });
        double band_parallel = time_ms(repeats, [&] {
            g_sink = g_sink + fde::boundary_band(mask, 10, fde::BandShape::disk).count();
        });
        print_row("boundary-band r=10", shape, band_serial, band_parallel);

        fde::DepthMap pred(n, n), gt(n, n);
        for (size_t i = 0; i < pred.values.size(); ++i) {
            gt.values[i] = 0.5 + 4.0 * rng.unif();
            pred.values[i] = gt.values[i] * (0.9 + 0.2 * rng.unif());
        }
        fde::BinaryMask valid(n, n, true);
        double fit_serial = time_ms(repeats, [&] {
            g_sink = g_sink + fde::ref::alignment_residual(pred, gt, valid, 1.0, 0.0);
        });
        double fit_parallel =
            time_ms(repeats, [&] { g_sink = g_sink + fde::fit_scale_shift(pred, gt, valid).a; });
        print_row("scale-shift fit", shape, fit_serial, fit_parallel);

        double m_serial = time_ms(repeats, [&] {
            g_sink = g_sink + fde::ref::delta1_loop(pred, gt, mask).value_or(0.0);
            g_sink = g_sink + fde::ref::absrel_loop(pred, gt, mask).value_or(0.0);
        });
        double m_parallel = time_ms(repeats, [&] {
            g_sink = g_sink + fde::delta1(pred, gt, mask).value_or(0.0);
            g_sink = g_sink + fde::absrel(pred, gt, mask).value_or(0.0);
        });
        print_row("region metrics", shape, m_serial, m_parallel);
    }

    // Fusion forward at the full desk-scale token budget (72x72 tokens).
    {
        fde::fusion::FusionConfig config;
        config.n_scales = 1;
        config.n_tokens = 5184;
        config.c_g = 8;
        config.c_p = 4;
        config.c_h = 8;
        fde::fusion::Params params = fde::fusion::init_params(config, seed);
        Rng frng(seed + 1);
        std::vector<fde::fusion::TokenGrid> x_g(1);
        x_g[0] = fde::fusion::TokenGrid(72, 72, config.c_g);
        for (double& v : x_g[0].values.data) v = frng.unif() - 0.5;
        fde::fusion::TokenGrid x_p(72, 72, config.c_p);
        for (double& v : x_p.values.data) v = frng.unif() - 0.5;
        double fwd = time_ms(repeats, [&] {
            g_sink = g_sink + fde::fusion::forward(x_g, x_p, params, config, false)
                          .outputs[0]
                          .values.data.back();
        });
        print_row("fusion forward", "5184 tok", -0.0, fwd);
    }
    std::printf("(\"-\" = serial reference skipped at this shape)\n");
    return 0;
}
