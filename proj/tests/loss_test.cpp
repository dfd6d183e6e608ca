#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fde/loss.hpp"
#include "fde/metrics.hpp"

namespace loss = fde::loss;

namespace {

struct Rng {
    uint64_t s;
    explicit Rng(uint64_t seed) : s(seed) {}
    uint64_t next() {
        s += 0x9e3779b97f4a7c15ULL;
        uint64_t z = s;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    double uniform() { return (next() >> 11) * 0x1.0p-53; }
};

// Shared 12x12 scene: smooth positive gt, square target, a few invalid pixels,
// noisy prediction and probabilities strictly inside (0, 1).
struct Scene {
    fde::DepthMap gt{12, 12};
    fde::DepthMap pred{12, 12};
    fde::DepthMap prob{12, 12};
    fde::BinaryMask mask{12, 12};
    fde::BinaryMask valid{12, 12};

    explicit Scene(uint64_t seed) {
        Rng rng(seed);
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                gt.at(y, x) = 1.0 + 0.05 * y + 0.03 * x + 0.2 * rng.uniform();
                mask.set(y, x, y >= 4 && y < 9 && x >= 3 && x < 9);
                valid.set(y, x, rng.uniform() > 0.05);
                pred.at(y, x) = gt.at(y, x) * (1.0 + 0.3 * (rng.uniform() - 0.5)) +
                                0.1 * (rng.uniform() - 0.5);
                double p = 0.1 + 0.8 * (mask.at(y, x) ? 0.8 : 0.2) + 0.05 * rng.uniform();
                prob.at(y, x) = std::min(0.95, std::max(0.05, p));
            }
    }
};

loss::LossConfig small_config() {
    loss::LossConfig cfg;
    cfg.radius = 2;
    return cfg;
}

}  // namespace

TEST_CASE("to_disparity: reciprocal with a floor, NaN preserved") {
    fde::DepthMap d(1, 4);
    d.values = {2.0, 1e-4, std::numeric_limits<double>::quiet_NaN(), 0.5};
    fde::DepthMap disp = loss::to_disparity(d, 1e-3);
    CHECK(disp.values[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(disp.values[1] == doctest::Approx(1000.0).epsilon(1e-15));  // floored at 1e-3
    CHECK(std::isnan(disp.values[2]));
    CHECK(disp.values[3] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(disp.unit_tag == fde::UnitTag::disparity);
}

TEST_CASE("depth_region_loss: perfect prediction scores zero") {
    fde::DepthMap gt(4, 4), pred(4, 4);
    Rng rng(9);
    for (int i = 0; i < 16; ++i) gt.values[i] = pred.values[i] = 1.0 + rng.uniform();
    fde::BinaryMask region(4, 4, true);
    loss::DepthLossResult r = loss::depth_region_loss(pred, gt, region, small_config());
    CHECK(r.value == 0.0);
    CHECK(r.n_pixels == 16);
    for (double g : r.grad.values) CHECK(g == 0.0);
}

TEST_CASE("depth_region_loss: constant offset leaves only the squared term") {
    fde::DepthMap gt(3, 3), pred(3, 3);
    for (int i = 0; i < 9; ++i) {
        gt.values[i] = 2.0 + 0.1 * i;
        pred.values[i] = gt.values[i] + 0.3;  // constant error: differences vanish
    }
    fde::BinaryMask region(3, 3, true);
    loss::LossConfig cfg = small_config();  // grad_weight 0.5 but the pair term is zero
    loss::DepthLossResult r = loss::depth_region_loss(pred, gt, region, cfg);
    CHECK(r.value == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(r.n_pairs == 12);  // 2 per row x 3 rows + 2 per column x 3 columns
}

TEST_CASE("depth_region_loss: 2x2 fixture matches the hand computation") {
    fde::DepthMap gt(2, 2), pred(2, 2);
    gt.values = {1.0, 1.0, 1.0, 1.0};
    pred.values = {1.1, 0.8, 1.3, 1.0};  // errors 0.1, -0.2, 0.3, 0.0
    fde::BinaryMask region(2, 2, true);
    loss::LossConfig cfg = small_config();

    loss::DepthLossResult r = loss::depth_region_loss(pred, gt, region, cfg);
    // mse = (0.01 + 0.04 + 0.09 + 0) / 4 = 0.035
    // |d/dx|: |-0.3| + |-0.3|;  |d/dy|: |0.2| + |0.2|  -> mean over 4 pairs = 0.25
    CHECK(r.value == doctest::Approx(0.035 + 0.5 * 0.25).epsilon(1e-12));
    CHECK(r.n_pixels == 4);
    CHECK(r.n_pairs == 4);

    // Gradient against central differences, every pixel.
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        double saved = pred.values[i];
        pred.values[i] = saved + h;
        double up = loss::depth_region_loss(pred, gt, region, cfg).value;
        pred.values[i] = saved - h;
        double down = loss::depth_region_loss(pred, gt, region, cfg).value;
        pred.values[i] = saved;
        CHECK(r.grad.values[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("depth_region_loss: pairs must lie entirely inside the region") {
    fde::DepthMap gt(2, 2), pred(2, 2);
    gt.values = {1, 1, 1, 1};
    pred.values = {1.2, 0.9, 1.4, 1.1};
    fde::BinaryMask region(2, 2, true);
    region.set(1, 1, false);  // drop one corner
    loss::DepthLossResult r = loss::depth_region_loss(pred, gt, region, small_config());
    CHECK(r.n_pixels == 3);
    CHECK(r.n_pairs == 2);  // row 0 horizontal + column 0 vertical
    CHECK(r.grad.values[3] == 0.0);  // off-region pixel gets no gradient
}

TEST_CASE("depth_region_loss: empty region gives zero value and gradient") {
    fde::DepthMap gt(3, 3), pred(3, 3);
    for (int i = 0; i < 9; ++i) {
        gt.values[i] = 1.0;
        pred.values[i] = 2.0;
    }
    fde::BinaryMask region(3, 3);
    loss::DepthLossResult r = loss::depth_region_loss(pred, gt, region, small_config());
    CHECK(r.value == 0.0);
    CHECK(r.n_pixels == 0);
    CHECK(r.n_pairs == 0);
    for (double g : r.grad.values) CHECK(g == 0.0);
}

TEST_CASE("seg_loss: perfect binary probabilities score almost zero") {
    fde::DepthMap prob(4, 4);
    fde::BinaryMask target(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            bool on = y < 2;
            target.set(y, x, on);
            prob.at(y, x) = on ? 1.0 : 0.0;
        }
    loss::SegLossResult r = loss::seg_loss(prob, target, small_config());
    CHECK(r.dice == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.bce < 1e-6);  // clamp keeps -log(1 - 1e-7) tiny
    CHECK(r.value < 1e-6);
}

TEST_CASE("seg_loss: fully wrong 4-pixel fixture matches the hand computation") {
    fde::DepthMap prob(2, 2);
    fde::BinaryMask target(2, 2);
    target.set(0, 0, true);
    target.set(0, 1, true);
    prob.values = {0.0, 0.0, 1.0, 1.0};  // exactly inverted
    loss::SegLossResult r = loss::seg_loss(prob, target, small_config());
    // Positive pixels clamp to 1e-7; negative pixels see log(1 - (1 - 1e-7)),
    // which differs from log(1e-7) in the last few bits.
    double on = -std::log(1e-7);
    double off = -std::log(1.0 - (1.0 - 1e-7));
    double expect_bce = (2.0 * on + 2.0 * off) / 4.0;
    CHECK(r.bce == doctest::Approx(expect_bce).epsilon(1e-12));
    // dice = 1 - (2*0 + 1) / (2 + 2 + 1) = 0.8
    CHECK(r.dice == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(expect_bce + 0.8).epsilon(1e-12));
}

TEST_CASE("seg_loss: zero probability on a positive pixel stays finite") {
    fde::DepthMap prob(1, 2);
    prob.values = {0.0, 0.5};
    fde::BinaryMask target(1, 2);
    target.set(0, 0, true);
    loss::SegLossResult r = loss::seg_loss(prob, target, small_config());
    CHECK(std::isfinite(r.value));
    CHECK(r.value > 0.0);
}

TEST_CASE("seg_loss: probabilities outside [0,1] are a hard error") {
    fde::DepthMap prob(1, 2);
    fde::BinaryMask target(1, 2);
    prob.values = {-0.1, 0.5};
    CHECK_THROWS_WITH_AS(loss::seg_loss(prob, target, small_config()),
                         doctest::Contains("outside [0, 1]"), std::invalid_argument);
    prob.values = {0.3, 1.5};
    CHECK_THROWS_WITH_AS(loss::seg_loss(prob, target, small_config()),
                         doctest::Contains("outside [0, 1]"), std::invalid_argument);
}

TEST_CASE("seg_loss gradient matches central differences") {
    Rng rng(31);
    fde::DepthMap prob(3, 3);
    fde::BinaryMask target(3, 3);
    for (int i = 0; i < 9; ++i) {
        prob.values[i] = 0.15 + 0.7 * rng.uniform();
        target.bits[i] = rng.uniform() < 0.5;
    }
    loss::LossConfig cfg = small_config();
    loss::SegLossResult r = loss::seg_loss(prob, target, cfg);
    const double h = 1e-6;
    for (int i = 0; i < 9; ++i) {
        double saved = prob.values[i];
        prob.values[i] = saved + h;
        double up = loss::seg_loss(prob, target, cfg).value;
        prob.values[i] = saved - h;
        double down = loss::seg_loss(prob, target, cfg).value;
        prob.values[i] = saved;
        CHECK(r.grad.values[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
}

TEST_CASE("total_objective: perfect affine prediction and perfect mask") {
    Scene scene(1);
    // pred = 0.5*gt - 0.25: alignment must recover a=2, b=0.5 and cancel it.
    for (int i = 0; i < 144; ++i) {
        scene.pred.values[i] = 0.5 * scene.gt.values[i] - 0.25;
        scene.prob.values[i] = scene.mask.bits[i] ? 1.0 : 0.0;
    }
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    CHECK(r.breakdown.total < 1e-4);
    CHECK(r.breakdown.l_fg < 1e-5);
    CHECK(r.breakdown.l_bd < 1e-5);
    CHECK(r.breakdown.l_glb < 1e-5);
    CHECK(r.breakdown.l_seg < 1e-5);
    CHECK(r.breakdown.alignment.a == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(r.breakdown.alignment.b == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("total_objective: total is the exact sum of the four terms") {
    Scene scene(2);
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    CHECK(r.breakdown.total ==
          r.breakdown.l_fg + r.breakdown.l_bd + r.breakdown.l_glb + r.breakdown.l_seg);
    CHECK(r.breakdown.total > 0.0);
    CHECK(std::isfinite(r.breakdown.total));
    CHECK(r.breakdown.n_glb >= r.breakdown.n_fg);
    CHECK(r.breakdown.n_glb >= r.breakdown.n_bd);
}

TEST_CASE("total_objective: empty mask zeroes the target terms only") {
    Scene scene(3);
    scene.mask = fde::BinaryMask(12, 12);  // no target
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    CHECK(r.breakdown.l_fg == 0.0);
    CHECK(r.breakdown.l_bd == 0.0);
    CHECK(r.breakdown.n_fg == 0);
    CHECK(r.breakdown.n_bd == 0);
    CHECK(r.breakdown.l_glb > 0.0);
    CHECK(r.breakdown.l_seg > 0.0);
}

TEST_CASE("total_objective: global term equals the region loss over valid pixels") {
    Scene scene(4);
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    fde::DepthMap aligned = fde::apply_alignment(scene.pred, r.breakdown.alignment);
    loss::DepthLossResult direct = loss::depth_region_loss(aligned, scene.gt, scene.valid, cfg);
    CHECK(r.breakdown.l_glb == direct.value);
    CHECK(r.breakdown.n_glb == direct.n_pixels);
}

TEST_CASE("total_objective: depth gradient is zero outside the valid region") {
    Scene scene(5);
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    for (size_t i = 0; i < scene.valid.bits.size(); ++i)
        if (!scene.valid.bits[i]) CHECK(r.grad_depth.values[i] == 0.0);
}

TEST_CASE("total_objective: grad_weight 0 drops the smoothness term") {
    Scene scene(6);
    loss::LossConfig with = small_config();
    loss::LossConfig without = small_config();
    without.grad_weight = 0.0;
    double t_with = loss::total_objective(scene.pred, scene.prob, scene.gt, scene.mask,
                                          scene.valid, with)
                        .breakdown.total;
    double t_without = loss::total_objective(scene.pred, scene.prob, scene.gt, scene.mask,
                                             scene.valid, without)
                           .breakdown.total;
    CHECK(t_with > t_without);  // the pair term is nonnegative and nonzero here
}

TEST_CASE("total_objective: disparity-space comparison changes the objective") {
    Scene scene(7);
    loss::LossConfig depth_cfg = small_config();
    loss::LossConfig disp_cfg = small_config();
    disp_cfg.disparity_space = true;
    double a = loss::total_objective(scene.pred, scene.prob, scene.gt, scene.mask, scene.valid,
                                     depth_cfg)
                   .breakdown.total;
    double b = loss::total_objective(scene.pred, scene.prob, scene.gt, scene.mask, scene.valid,
                                     disp_cfg)
                   .breakdown.total;
    CHECK(std::fabs(a - b) > 1e-9);
    CHECK(std::isfinite(b));
}

TEST_CASE("total_objective: analytic gradients match frozen-alignment differences") {
    Scene scene(8);
    loss::LossConfig cfg = small_config();
    loss::TotalObjectiveResult r = loss::total_objective(scene.pred, scene.prob, scene.gt,
                                                         scene.mask, scene.valid, cfg);
    // The fitted (a, b) is a constant of the objective (stop-gradient), so
    // probes must re-evaluate at the same alignment.
    std::optional<fde::AlignmentParams> frozen = r.breakdown.alignment;
    const double h = 1e-6;

    auto total_at = [&]() {
        return loss::total_objective(scene.pred, scene.prob, scene.gt, scene.mask, scene.valid,
                                     cfg, frozen)
            .breakdown.total;
    };

    Rng rng(80);
    for (int probe = 0; probe < 12; ++probe) {
        int i = static_cast<int>(rng.next() % 144);
        double saved = scene.pred.values[i];
        scene.pred.values[i] = saved + h;
        double up = total_at();
        scene.pred.values[i] = saved - h;
        double down = total_at();
        scene.pred.values[i] = saved;
        double fd = (up - down) / (2 * h);
        CHECK(r.grad_depth.values[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int probe = 0; probe < 8; ++probe) {
        int i = static_cast<int>(rng.next() % 144);
        double saved = scene.prob.values[i];
        scene.prob.values[i] = saved + h;
        double up = total_at();
        scene.prob.values[i] = saved - h;
        double down = total_at();
        scene.prob.values[i] = saved;
        double fd = (up - down) / (2 * h);
        CHECK(r.grad_prob.values[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("loss_grad_check passes in both comparison spaces") {
    loss::LossGradCheckReport depth_space = loss::loss_grad_check(7, 16, 16, 1e-6, 1e-4, false);
    CHECK(depth_space.pass);
    CHECK(depth_space.worst < 1e-4);
    CHECK(!depth_space.max_rel_err.empty());

    loss::LossGradCheckReport disp_space = loss::loss_grad_check(7, 16, 16, 1e-6, 1e-4, true);
    CHECK(disp_space.pass);
    CHECK(disp_space.worst < 1e-4);
}
