#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fde/reference.hpp"
#include "fde/regions.hpp"

namespace {

// Deterministic xorshift-free PRNG for mask fixtures.
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
    int below(int n) { return static_cast<int>(next() % static_cast<uint64_t>(n)); }
    bool coin(double p) { return (next() >> 11) * 0x1.0p-53 < p; }
};

fde::BinaryMask random_mask(Rng& rng, int h, int w, int margin = 0) {
    fde::BinaryMask m(h, w);
    int n_rects = 1 + rng.below(3);
    for (int r = 0; r < n_rects; ++r) {
        int y0 = margin + rng.below(std::max(1, h - 2 * margin));
        int x0 = margin + rng.below(std::max(1, w - 2 * margin));
        int y1 = std::min(h - margin, y0 + 1 + rng.below(std::max(1, h / 2)));
        int x1 = std::min(w - margin, x0 + 1 + rng.below(std::max(1, w / 2)));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) m.set(y, x, true);
    }
    for (int y = margin; y < h - margin; ++y)
        for (int x = margin; x < w - margin; ++x)
            if (rng.coin(0.03)) m.set(y, x, true);
    return m;
}

bool masks_equal(const fde::BinaryMask& a, const fde::BinaryMask& b) {
    return a.height == b.height && a.width == b.width && a.bits == b.bits;
}

// Mask pixels with an in-image 4-adjacent background pixel: the pixels an
// 8-connected contour trace visits.
fde::BinaryMask contour_pixels(const fde::BinaryMask& m) {
    fde::BinaryMask c(m.height, m.width);
    const int dy[] = {-1, 1, 0, 0}, dx[] = {0, 0, -1, 1};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            for (int k = 0; k < 4; ++k) {
                int ny = y + dy[k], nx = x + dx[k];
                if (ny >= 0 && ny < m.height && nx >= 0 && nx < m.width && !m.at(ny, nx))
                    c.set(y, x, true);
            }
        }
    return c;
}

}  // namespace

TEST_CASE("exact_edt: single source Pythagorean distances") {
    fde::BinaryMask m(4, 4);
    m.set(0, 0, true);
    fde::DistanceField d = fde::exact_edt(m);
    CHECK(d.at(0, 0) == 0);
    CHECK(d.at(1, 0) == 1);
    CHECK(d.at(0, 1) == 1);
    CHECK(d.at(1, 1) == 2);
    CHECK(d.at(2, 3) == 13);  // 2^2 + 3^2
    CHECK(d.at(3, 3) == 18);
}

TEST_CASE("exact_edt: empty sources give the infinite sentinel") {
    fde::BinaryMask m(3, 5);
    fde::DistanceField d = fde::exact_edt(m);
    for (int64_t v : d.values) CHECK(v == fde::DistanceField::kInfinite);
}

TEST_CASE("exact_edt: all-true sources give zero everywhere") {
    fde::BinaryMask m(3, 5, true);
    fde::DistanceField d = fde::exact_edt(m);
    for (int64_t v : d.values) CHECK(v == 0);
}

TEST_CASE("exact_edt matches brute force on random masks") {
    Rng rng(101);
    for (auto [h, w] : {std::pair{32, 32}, {13, 7}, {1, 17}, {17, 1}, {48, 64}}) {
        for (int trial = 0; trial < 4; ++trial) {
            fde::BinaryMask m = random_mask(rng, h, w);
            fde::DistanceField fast = fde::exact_edt(m);
            fde::DistanceField brute = fde::ref::edt_brute_force(m);
            CHECK(fast.values == brute.values);
        }
    }
}

TEST_CASE("exact_edt matches brute force on exhaustive sparse 8x8 masks") {
    // Every one-pixel mask and every two-pixel mask on an 8x8 grid: the cases
    // where a separable-pass bug would bite (single columns, diagonal ties).
    for (int p = 0; p < 64; ++p) {
        fde::BinaryMask m(8, 8);
        m.bits[p] = 1;
        CHECK(fde::exact_edt(m).values == fde::ref::edt_brute_force(m).values);
    }
    int checked = 0;
    for (int p = 0; p < 64; ++p) {
        for (int q = p + 1; q < 64; ++q) {
            fde::BinaryMask m(8, 8);
            m.bits[p] = 1;
            m.bits[q] = 1;
            if (fde::exact_edt(m).values != fde::ref::edt_brute_force(m).values) {
                FAIL("mismatch for pixel pair ", p, ",", q);
            }
            ++checked;
        }
    }
    CHECK(checked == 64 * 63 / 2);
}

TEST_CASE("exact_edt is 1-Lipschitz after square root") {
    Rng rng(77);
    fde::BinaryMask m = random_mask(rng, 24, 24);
    fde::DistanceField d = fde::exact_edt(m);
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x + 1 < 24; ++x) {
            double a = std::sqrt(static_cast<double>(d.at(y, x)));
            double b = std::sqrt(static_cast<double>(d.at(y, x + 1)));
            CHECK(std::fabs(a - b) <= 1.0 + 1e-12);
        }
}

TEST_CASE("boundary_band: single pixel at r=1 is the plus-shape") {
    fde::BinaryMask m(5, 5);
    m.set(2, 2, true);
    fde::BinaryMask band = fde::boundary_band(m, 1);
    CHECK(band.count() == 5);
    CHECK(band.at(2, 2));
    CHECK(band.at(1, 2));
    CHECK(band.at(3, 2));
    CHECK(band.at(2, 1));
    CHECK(band.at(2, 3));
    CHECK_FALSE(band.at(1, 1));  // diagonal is distance^2 = 2 > 1
}

TEST_CASE("boundary_band: all-true mask has an empty band") {
    // The image frame is not a depth discontinuity, so nothing erodes away.
    fde::BinaryMask m(16, 16, true);
    CHECK(fde::boundary_band(m, 10).count() == 0);
    CHECK(fde::boundary_band(m, 1).count() == 0);
}

TEST_CASE("boundary_band: empty mask has an empty band") {
    fde::BinaryMask m(8, 8);
    CHECK(fde::boundary_band(m, 3).count() == 0);
}

TEST_CASE("boundary_band: radius < 1 is an error") {
    fde::BinaryMask m(4, 4, true);
    CHECK_THROWS_AS(fde::boundary_band(m, 0), std::runtime_error);
    CHECK_THROWS_AS(fde::boundary_band(m, -2), std::runtime_error);
}

TEST_CASE("boundary_band matches brute-force disk morphology exactly") {
    Rng rng(202);
    for (int trial = 0; trial < 12; ++trial) {
        int h = 8 + rng.below(25), w = 8 + rng.below(25);
        fde::BinaryMask m = random_mask(rng, h, w);
        for (int r : {1, 2, 3, 5}) {
            fde::BinaryMask fast = fde::boundary_band(m, r, fde::BandShape::disk);
            fde::BinaryMask brute = fde::ref::boundary_band_brute(m, r);
            CHECK(masks_equal(fast, brute));
        }
    }
}

TEST_CASE("boundary_band square shape matches brute-force Chebyshev morphology") {
    Rng rng(303);
    for (int trial = 0; trial < 8; ++trial) {
        fde::BinaryMask m = random_mask(rng, 20, 20);
        for (int r : {1, 2, 4}) {
            fde::BinaryMask fast = fde::boundary_band(m, r, fde::BandShape::square);
            fde::BinaryMask brute = fde::ref::boundary_band_square_brute(m, r);
            CHECK(masks_equal(fast, brute));
        }
    }
}

TEST_CASE("boundary_band contains the 8-connected contour for r >= 1") {
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        fde::BinaryMask m = random_mask(rng, 24, 24);
        if (m.count() == m.size()) continue;  // all-true border case excluded
        fde::BinaryMask contour = contour_pixels(m);
        for (int r : {1, 3, 10}) {
            fde::BinaryMask band = fde::boundary_band(m, r);
            for (size_t i = 0; i < contour.bits.size(); ++i)
                if (contour.bits[i] && !band.bits[i])
                    FAIL("contour pixel ", i, " missing from band at r=", r);
        }
    }
}

TEST_CASE("boundary_band grows with r on masks away from the frame") {
    Rng rng(505);
    for (int trial = 0; trial < 8; ++trial) {
        fde::BinaryMask m = random_mask(rng, 32, 32, /*margin=*/9);
        if (m.count() == 0) continue;
        size_t prev = fde::boundary_band(m, 1).count();
        for (int r = 2; r <= 6; ++r) {
            size_t cur = fde::boundary_band(m, r).count();
            CHECK(cur >= prev);
            prev = cur;
        }
    }
}

TEST_CASE("parse_band_shape") {
    CHECK(fde::parse_band_shape("disk") == fde::BandShape::disk);
    CHECK(fde::parse_band_shape("square") == fde::BandShape::square);
    CHECK_THROWS_AS(fde::parse_band_shape("hexagon"), std::runtime_error);
}

TEST_CASE("region_partition: valid all-true and all-false") {
    fde::BinaryMask m(10, 10);
    for (int y = 3; y < 7; ++y)
        for (int x = 3; x < 7; ++x) m.set(y, x, true);

    SUBCASE("valid all-true: fg = M, glb = everything") {
        fde::BinaryMask v(10, 10, true);
        fde::RegionSet rs = fde::region_partition(m, v, 2);
        CHECK(masks_equal(rs.fg, m));
        CHECK(rs.glb.count() == 100);
        CHECK(rs.n_fg == m.count());
        CHECK(rs.n_glb == 100);
        CHECK(rs.radius == 2);
        // fg and bd are subsets of glb by construction.
        for (size_t i = 0; i < rs.fg.bits.size(); ++i) {
            if (rs.fg.bits[i]) CHECK(rs.glb.bits[i]);
            if (rs.bd.bits[i]) CHECK(rs.glb.bits[i]);
        }
    }
    SUBCASE("valid all-false: every region empty") {
        fde::BinaryMask v(10, 10);
        fde::RegionSet rs = fde::region_partition(m, v, 2);
        CHECK(rs.n_fg == 0);
        CHECK(rs.n_bd == 0);
        CHECK(rs.n_glb == 0);
    }
}

TEST_CASE("region_partition matches the per-pixel set oracle") {
    Rng rng(606);
    for (int trial = 0; trial < 6; ++trial) {
        fde::BinaryMask m = random_mask(rng, 32, 32);
        fde::BinaryMask v(32, 32);
        for (auto& b : v.bits) b = rng.coin(0.9);
        fde::RegionSet fast = fde::region_partition(m, v, 3);
        fde::RegionSet oracle = fde::ref::region_partition_sets(m, v, 3);
        CHECK(masks_equal(fast.fg, oracle.fg));
        CHECK(masks_equal(fast.bd, oracle.bd));
        CHECK(masks_equal(fast.glb, oracle.glb));
        CHECK(fast.n_fg == oracle.n_fg);
        CHECK(fast.n_bd == oracle.n_bd);
        CHECK(fast.n_glb == oracle.n_glb);
    }
}

TEST_CASE("region_partition: dimension mismatch is an error") {
    fde::BinaryMask m(4, 4), v(4, 5);
    CHECK_THROWS_AS(fde::region_partition(m, v, 1), std::runtime_error);
}
