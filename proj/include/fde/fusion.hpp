#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fde/grid.hpp"

namespace fde::fusion {

// Dense row-major matrix. All kernel arithmetic is 64-bit so gradient checks
// are meaningful.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// N tokens by C channels on a grid_h x grid_w patch grid.
struct TokenGrid {
    int n_tokens = 0;
    int channels = 0;
    int grid_h = 0;
    int grid_w = 0;
    Matrix values;  // n_tokens x channels

    TokenGrid() = default;
    TokenGrid(int grid_h_, int grid_w_, int channels_)
        : n_tokens(grid_h_ * grid_w_),
          channels(channels_),
          grid_h(grid_h_),
          grid_w(grid_w_),
          values(grid_h_ * grid_w_, channels_) {}
};

// Two-layer perceptron with a Gaussian-CDF-gated activation x * Phi(x).
struct ExpertParams {
    Matrix w1;               // 2C_g x C_h
    std::vector<double> b1;  // C_h
    Matrix w2;               // C_h x C_g
    std::vector<double> b2;  // C_g
};

struct ScaleParams {
    Matrix w_proj;                     // C_p x C_g prompt-token projection
    Matrix router_w;                   // 2C_g x E
    std::vector<ExpertParams> experts;
    std::vector<double> w_gate;        // C_g ( -> scalar gate per token)
    double gate_bias = 0.0;
};

enum class Variant { full, shuffled_tokens, shared_scale, single_mlp, no_gate };
Variant parse_variant(const std::string& s);
const char* variant_name(Variant v);

struct FusionConfig {
    int n_scales = 4;
    int n_experts = 4;
    Variant variant = Variant::full;
    uint64_t shuffle_seed = 0;
    int n_tokens = 9;
    int c_g = 8;
    int c_p = 4;
    int c_h = 8;
    double gate_bias = 0.0;

    // single_mlp bypasses the router and runs exactly one expert
    int effective_experts() const { return variant == Variant::single_mlp ? 1 : n_experts; }
};

// Scale entries alias one record under shared_scale, so gradients accumulate
// naturally across scales.
struct Params {
    std::vector<std::shared_ptr<ScaleParams>> scales;

    // Distinct parameter records in scale order (one entry under shared_scale).
    std::vector<ScaleParams*> distinct() const;
};

// All matrices i.i.d. normal(0, 0.02^2) from a seeded deterministic stream;
// biases zero; gate_bias copied from config.
Params init_params(const FusionConfig& config, uint64_t seed);

// Everything the backward pass needs from one scale's forward run.
struct ScaleTrace {
    Variant variant = Variant::full;
    std::vector<int> perm;        // shuffled_tokens: x_p_used[i] = x_p[perm[i]]
    Matrix x_g;
    Matrix x_p_used;
    Matrix z;                     // N x 2C_g concatenation
    Matrix router_weights;        // N x E softmax weights (empty for single_mlp)
    std::vector<Matrix> h1;       // per expert, pre-activation
    std::vector<Matrix> a1;       // per expert, activated
    std::vector<Matrix> expert_out;
    Matrix fused;                 // F
    std::vector<double> gate_pre; // s = F w_gate + bias (empty for no_gate)
    std::vector<double> gate;     // G = sigma(s)
};

struct ScaleGrads {
    Matrix w_proj;
    Matrix router_w;
    std::vector<ExpertParams> experts;  // same shapes as params
    std::vector<double> w_gate;
    double gate_bias = 0.0;
    Matrix x_g;
    Matrix x_p;  // gradient w.r.t. the unpermuted prompt tokens
};

// One fusion scale: project prompt tokens, concatenate, route through the
// expert mixture, and gate-blend with the geometry tokens.
TokenGrid forward_scale(const TokenGrid& x_g, const TokenGrid& x_p, const ScaleParams& params,
                        Variant variant, const std::vector<int>& perm, ScaleTrace* trace);

ScaleGrads backward_scale(const ScaleTrace& trace, const ScaleParams& params,
                          const Matrix& upstream);

struct ForwardResult {
    std::vector<TokenGrid> outputs;
    std::vector<ScaleTrace> traces;
};

ForwardResult forward(const std::vector<TokenGrid>& x_g_scales, const TokenGrid& x_p,
                      const Params& params, const FusionConfig& config, bool keep_traces = true);

struct BackwardResult {
    std::vector<ScaleGrads> per_scale;
    // parameter gradients summed per distinct record, aligned with Params::distinct()
    std::vector<ScaleGrads> per_record;
    Matrix x_p_grad;  // accumulated across scales
};

BackwardResult backward(const std::vector<ScaleTrace>& traces, const Params& params,
                        const FusionConfig& config, const std::vector<Matrix>& upstreams);

struct GradCheckReport {
    std::map<std::string, double> max_rel_err;  // per parameter group
    double worst = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Central finite differences over every scalar parameter plus all input
// entries; relative error |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8).
GradCheckReport grad_check(const FusionConfig& config, uint64_t seed, double step,
                           double tolerance);

// Parameter snapshots: one f64 .npy per matrix plus a JSON shape manifest.
void save_params(const std::string& dir, const Params& params, const FusionConfig& config);
Params load_params(const std::string& dir, FusionConfig* config_out = nullptr);

// Seeded Fisher-Yates permutation of [0, n).
std::vector<int> shuffle_permutation(int n, uint64_t seed);

}  // namespace fde::fusion
