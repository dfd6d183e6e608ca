#include "fde/npy.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fde::npy {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("npy decode error: " + path + ": " + what);
}

// Pulls the value following `key` out of the header dict.
std::string header_field(const std::string& header, const std::string& key,
                         const std::string& path) {
    size_t pos = header.find("'" + key + "'");
    if (pos == std::string::npos) fail(path, "header missing '" + key + "'");
    pos = header.find(':', pos);
    if (pos == std::string::npos) fail(path, "malformed header");
    ++pos;
    while (pos < header.size() && header[pos] == ' ') ++pos;
    size_t end = pos;
    if (header[pos] == '(') {
        end = header.find(')', pos);
        if (end == std::string::npos) fail(path, "malformed shape");
        ++end;
    } else {
        while (end < header.size() && header[end] != ',' && header[end] != '}') ++end;
    }
    return header.substr(pos, end - pos);
}

std::vector<size_t> parse_shape(const std::string& text, const std::string& path) {
    if (text.empty() || text.front() != '(' || text.back() != ')') fail(path, "malformed shape");
    std::vector<size_t> shape;
    std::string body = text.substr(1, text.size() - 2);
    size_t i = 0;
    while (i < body.size()) {
        while (i < body.size() && (body[i] == ' ' || body[i] == ',')) ++i;
        if (i >= body.size()) break;
        size_t j = i;
        while (j < body.size() && body[j] >= '0' && body[j] <= '9') ++j;
        if (j == i) fail(path, "malformed shape");
        shape.push_back(std::stoull(body.substr(i, j - i)));
        i = j;
    }
    return shape;
}

void write_raw(const std::string& path, const std::vector<size_t>& shape,
               const char* descr, const void* data, size_t item_size, size_t count) {
    std::string shape_str = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        shape_str += std::to_string(shape[i]);
        if (i + 1 < shape.size()) shape_str += ", ";
    }
    if (shape.size() == 1) shape_str += ",";  // numpy 1-tuple spelling
    shape_str += ")";

    std::string header = "{'descr': '" + std::string(descr) +
                         "', 'fortran_order': False, 'shape': " + shape_str + ", }";
    size_t unpadded = 10 + header.size() + 1;
    size_t padded = (unpadded + 63) / 64 * 64;
    header.append(padded - unpadded, ' ');
    header += '\n';

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    const char magic[] = "\x93NUMPY\x01\x00";
    out.write(magic, 8);
    uint16_t hlen = static_cast<uint16_t>(header.size());
    char lenbuf[2] = {static_cast<char>(hlen & 0xff), static_cast<char>(hlen >> 8)};
    out.write(lenbuf, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(item_size * count));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

Array read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(path, "cannot open");

    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) fail(path, "bad magic");
    if (magic[6] != 1) fail(path, "unsupported npy version");

    unsigned char lenbuf[2];
    in.read(reinterpret_cast<char*>(lenbuf), 2);
    if (!in) fail(path, "truncated header");
    size_t hlen = lenbuf[0] | (static_cast<size_t>(lenbuf[1]) << 8);

    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) fail(path, "truncated header");

    std::string descr = header_field(header, "descr", path);
    std::string order = header_field(header, "fortran_order", path);
    std::string shape_text = header_field(header, "shape", path);
    if (order.find("False") == std::string::npos) fail(path, "fortran order unsupported");

    bool f32;
    if (descr.find("<f4") != std::string::npos) f32 = true;
    else if (descr.find("<f8") != std::string::npos) f32 = false;
    else fail(path, "dtype must be little-endian f32 or f64, got " + descr);

    Array arr;
    arr.shape = parse_shape(shape_text, path);
    if (arr.shape.empty() || arr.shape.size() > 2) fail(path, "only 1-D/2-D supported");

    size_t count = 1;
    for (size_t d : arr.shape) count *= d;
    arr.data.resize(count);

    if (f32) {
        std::vector<float> buf(count);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) fail(path, "truncated data");
        for (size_t i = 0; i < count; ++i) arr.data[i] = static_cast<double>(buf[i]);
    } else {
        in.read(reinterpret_cast<char*>(arr.data.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) fail(path, "truncated data");
    }
    return arr;
}

void write_f32(const std::string& path, const std::vector<size_t>& shape,
               const std::vector<float>& data) {
    write_raw(path, shape, "<f4", data.data(), sizeof(float), data.size());
}

void write_f64(const std::string& path, const std::vector<size_t>& shape,
               const std::vector<double>& data) {
    write_raw(path, shape, "<f8", data.data(), sizeof(double), data.size());
}

}  // namespace fde::npy
