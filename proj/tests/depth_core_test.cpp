#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fde/depth_core.hpp"
#include "fde/npy.hpp"
#include "fde/png_io.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("fde_depth_test_" + std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("png-16 depth: counts scale, count 0 becomes NaN") {
    TempDir tmp;
    std::vector<uint16_t> counts{0, 1234, 65535, 1, 500, 0};
    fde::png_io::write_gray16(tmp.file("d.png"), 2, 3, counts);

    fde::DepthMap d = fde::decode_depth(tmp.file("d.png"), fde::DepthFormat::png_16, 1e-3);
    CHECK(d.height == 2);
    CHECK(d.width == 3);
    CHECK(std::isnan(d.values[0]));
    CHECK(d.values[1] == doctest::Approx(1.234).epsilon(1e-15));
    CHECK(d.values[2] == doctest::Approx(65.535).epsilon(1e-15));
    CHECK(d.values[3] == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(std::isnan(d.values[5]));
}

TEST_CASE("png-16 depth rejects 8-bit files") {
    TempDir tmp;
    fde::png_io::write_gray8(tmp.file("d8.png"), 1, 2, {1, 2});
    CHECK_THROWS_WITH_AS(fde::decode_depth(tmp.file("d8.png"), fde::DepthFormat::png_16, 1e-3),
                         doctest::Contains("16-bit"), std::runtime_error);
}

TEST_CASE("npy-f32 depth round-trips bitwise, NaN included") {
    TempDir tmp;
    fde::DepthMap d(2, 2);
    d.at(0, 0) = 1.5;
    d.at(0, 1) = std::numeric_limits<double>::quiet_NaN();
    d.at(1, 0) = 0.25;
    d.at(1, 1) = 80.0;
    fde::encode_depth_npy(tmp.file("d.npy"), d);

    fde::DepthMap back =
        fde::decode_depth(tmp.file("d.npy"), fde::DepthFormat::npy_f32, 1.0, fde::UnitTag::relative);
    CHECK(back.height == 2);
    CHECK(back.width == 2);
    CHECK(back.unit_tag == fde::UnitTag::relative);
    CHECK(back.at(0, 0) == 1.5);  // exactly representable in f32
    CHECK(std::isnan(back.at(0, 1)));
    CHECK(back.at(1, 0) == 0.25);
    CHECK(back.at(1, 1) == 80.0);
}

TEST_CASE("npy-f32 depth rejects 1-D arrays") {
    TempDir tmp;
    fde::npy::write_f32(tmp.file("flat.npy"), {4}, {1.f, 2.f, 3.f, 4.f});
    CHECK_THROWS_WITH_AS(fde::decode_depth(tmp.file("flat.npy"), fde::DepthFormat::npy_f32, 1.0),
                         doctest::Contains("2-D"), std::runtime_error);
}

TEST_CASE("parse_depth_format") {
    CHECK(fde::parse_depth_format("png-16") == fde::DepthFormat::png_16);
    CHECK(fde::parse_depth_format("npy-f32") == fde::DepthFormat::npy_f32);
    CHECK_THROWS_AS(fde::parse_depth_format("exr"), std::runtime_error);
    CHECK(std::string(fde::depth_format_name(fde::DepthFormat::png_16)) == "png-16");
    CHECK(std::string(fde::depth_format_name(fde::DepthFormat::npy_f32)) == "npy-f32");
}

TEST_CASE("decode_mask: 8-bit binary semantics") {
    TempDir tmp;
    fde::png_io::write_gray8(tmp.file("m.png"), 1, 4, {0, 255, 17, 0});
    fde::BinaryMask m = fde::decode_mask(tmp.file("m.png"));
    CHECK_FALSE(m.at(0, 0));
    CHECK(m.at(0, 1));
    CHECK(m.at(0, 2));  // any nonzero value counts
    CHECK_FALSE(m.at(0, 3));

    CHECK_THROWS_WITH_AS(fde::decode_mask(tmp.file("m.png"), 7),
                         doctest::Contains("8-bit"), std::runtime_error);
}

TEST_CASE("decode_mask: 16-bit instance-id semantics") {
    TempDir tmp;
    fde::png_io::write_gray16(tmp.file("ids.png"), 2, 2, {0, 7, 7, 3});

    fde::BinaryMask m7 = fde::decode_mask(tmp.file("ids.png"), 7);
    CHECK_FALSE(m7.at(0, 0));
    CHECK(m7.at(0, 1));
    CHECK(m7.at(1, 0));
    CHECK_FALSE(m7.at(1, 1));

    fde::BinaryMask m3 = fde::decode_mask(tmp.file("ids.png"), 3);
    CHECK(m3.count() == 1);

    CHECK_THROWS_WITH_AS(fde::decode_mask(tmp.file("ids.png"), 99),
                         doctest::Contains("instance absent"), std::runtime_error);
    CHECK_THROWS_WITH_AS(fde::decode_mask(tmp.file("ids.png")),
                         doctest::Contains("requires an instance_id"), std::runtime_error);
}

TEST_CASE("compute_valid: inclusive bounds, NaN and zero invalid") {
    fde::DepthMap d(1, 6);
    d.values = {std::numeric_limits<double>::quiet_NaN(), 0.0, 2.0, 0.01, 80.0, 80.5};
    fde::BinaryMask v = fde::compute_valid(d, 0.01, 80.0);
    CHECK_FALSE(v.at(0, 0));  // NaN
    CHECK_FALSE(v.at(0, 1));  // below floor
    CHECK(v.at(0, 2));
    CHECK(v.at(0, 3));  // floor is inclusive
    CHECK(v.at(0, 4));  // ceiling is inclusive
    CHECK_FALSE(v.at(0, 5));

    // +inf value is never valid, +inf ceiling admits any finite value above floor.
    fde::DepthMap inf_map(1, 2);
    inf_map.values = {std::numeric_limits<double>::infinity(), 1e9};
    fde::BinaryMask v2 =
        fde::compute_valid(inf_map, 1e-6, std::numeric_limits<double>::infinity());
    CHECK_FALSE(v2.at(0, 0));
    CHECK(v2.at(0, 1));
}

TEST_CASE("compute_valid is monotone under widening bounds") {
    fde::NormalSampler rng(55);
    fde::DepthMap d(8, 8);
    for (double& v : d.values) v = 1.0 + rng.next();
    fde::BinaryMask narrow = fde::compute_valid(d, 0.5, 2.0);
    fde::BinaryMask wide = fde::compute_valid(d, 0.25, 4.0);
    for (size_t i = 0; i < narrow.bits.size(); ++i)
        if (narrow.bits[i]) CHECK(wide.bits[i]);
}

TEST_CASE("tight_bbox") {
    fde::BinaryMask m(6, 8);
    SUBCASE("single pixel at (3,4)") {
        m.set(3, 4, true);
        fde::BBox b = fde::tight_bbox(m);
        CHECK(b.x_min == 4);
        CHECK(b.y_min == 3);
        CHECK(b.x_max == 5);
        CHECK(b.y_max == 4);
    }
    SUBCASE("two pixels {(1,1),(5,2)}") {
        m.set(1, 1, true);
        m.set(5, 2, true);
        fde::BBox b = fde::tight_bbox(m);
        CHECK(b.x_min == 1);
        CHECK(b.y_min == 1);
        CHECK(b.x_max == 3);
        CHECK(b.y_max == 6);
        // Contains every true pixel; shrinking any side would drop one.
        CHECK(b.contains(1, 1));
        CHECK(b.contains(5, 2));
    }
    SUBCASE("empty mask throws") {
        CHECK_THROWS_WITH_AS(fde::tight_bbox(m), doctest::Contains("empty mask"),
                             std::runtime_error);
    }
}
