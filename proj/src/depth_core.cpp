#include "fde/depth_core.hpp"

#include <algorithm>
#include <stdexcept>

#include "fde/npy.hpp"
#include "fde/png_io.hpp"

namespace fde {

DepthFormat parse_depth_format(const std::string& s) {
    if (s == "npy-f32") return DepthFormat::npy_f32;
    if (s == "png-16") return DepthFormat::png_16;
    throw std::runtime_error("unknown depth format: " + s);
}

DepthMap decode_depth(const std::string& path, DepthFormat format, double depth_scale,
                      UnitTag unit_tag) {
    if (format == DepthFormat::npy_f32) {
        npy::Array arr = npy::read(path);
        if (arr.shape.size() != 2)
            throw std::runtime_error("depth decode error: " + path + ": expected 2-D array");
        DepthMap depth(static_cast<int>(arr.shape[0]), static_cast<int>(arr.shape[1]), unit_tag);
        depth.values = std::move(arr.data);
        return depth;
    }

    png_io::GrayImage img = png_io::read_gray(path);
    if (img.bit_depth != 16)
        throw std::runtime_error("depth decode error: " + path + ": expected 16-bit png");
    DepthMap depth(img.height, img.width, unit_tag);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t i = 0; i < depth.values.size(); ++i) {
        uint16_t count = img.pixels[i];
        depth.values[i] = count == 0 ? nan : count * depth_scale;
    }
    return depth;
}

void encode_depth_npy(const std::string& path, const DepthMap& depth) {
    std::vector<float> buf(depth.values.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(depth.values[i]);
    npy::write_f32(path, {static_cast<size_t>(depth.height), static_cast<size_t>(depth.width)},
                   buf);
}

void encode_depth_png16(const std::string& path, const DepthMap& depth, double depth_scale) {
    std::vector<uint16_t> counts(depth.values.size(), 0);
    for (size_t i = 0; i < counts.size(); ++i) {
        double v = depth.values[i];
        if (!std::isfinite(v)) continue;  // count 0 = missing
        double c = v / depth_scale;
        counts[i] = static_cast<uint16_t>(std::clamp(c, 0.0, 65535.0) + 0.5);
    }
    png_io::write_gray16(path, depth.height, depth.width, counts);
}

BinaryMask decode_mask(const std::string& path, std::optional<int> instance_id) {
    png_io::GrayImage img = png_io::read_gray(path);
    BinaryMask mask(img.height, img.width);

    if (img.bit_depth == 8) {
        if (instance_id)
            throw std::runtime_error("mask decode error: " + path +
                                     ": instance_id given for an 8-bit binary mask");
        for (size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = img.pixels[i] != 0;
        return mask;
    }

    if (!instance_id)
        throw std::runtime_error("mask decode error: " + path +
                                 ": 16-bit instance map requires an instance_id");
    uint16_t id = static_cast<uint16_t>(*instance_id);
    bool found = false;
    for (size_t i = 0; i < mask.bits.size(); ++i) {
        bool hit = img.pixels[i] == id;
        mask.bits[i] = hit;
        found |= hit;
    }
    if (!found)
        throw std::runtime_error("mask decode error: " + path + ": instance absent: " +
                                 std::to_string(*instance_id));
    return mask;
}

BinaryMask compute_valid(const DepthMap& depth, double min_depth, double max_depth) {
    BinaryMask valid(depth.height, depth.width);
    for (size_t i = 0; i < depth.values.size(); ++i) {
        double v = depth.values[i];
        valid.bits[i] = std::isfinite(v) && v >= min_depth && v <= max_depth;
    }
    return valid;
}

BBox tight_bbox(const BinaryMask& mask) {
    BBox box{mask.width, mask.height, 0, 0};
    bool any = false;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(y, x)) continue;
            any = true;
            box.x_min = std::min(box.x_min, x);
            box.y_min = std::min(box.y_min, y);
            box.x_max = std::max(box.x_max, x + 1);
            box.y_max = std::max(box.y_max, y + 1);
        }
    }
    if (!any) throw std::runtime_error("tight_bbox: empty mask");
    return box;
}

}  // namespace fde
