#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "rccn/tensor.hpp"

namespace rccn {

/// One RGB-D sample: rgb 3 x H x W in [0,1], depth H x W in meters, mask
/// true where depth is valid. Masked pixels may hold any depth value.
struct SceneSample {
    Tensor rgb;
    Tensor depth;
    std::vector<uint8_t> mask;

    int height() const { return depth.dim(0); }
    int width() const { return depth.dim(1); }
};

namespace detail_io {

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    return std::vector<uint8_t>((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
}

}  // namespace detail_io

/// --- PPM (binary P6, maxval 255) ---------------------------------------

inline std::vector<uint8_t> encode_ppm(const Tensor& rgb) {
    if (rgb.ndim() != 3 || rgb.dim(0) != 3)
        throw std::invalid_argument("encode_ppm: rgb must be 3 x H x W");
    const int H = rgb.dim(1), W = rgb.dim(2);
    std::string header = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + static_cast<size_t>(3) * H * W);
    const long plane = static_cast<long>(H) * W;
    for (long i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = rgb.data[static_cast<size_t>(c * plane + i)];
            out.push_back(static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
    return out;
}

inline Tensor decode_ppm(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("PPM rejected at byte offset " + std::to_string(off) + ": " + why);
    };
    auto token = [&]() {
        while (off < bytes.size() &&
               (bytes[off] == ' ' || bytes[off] == '\n' || bytes[off] == '\t' ||
                bytes[off] == '\r' || bytes[off] == '#')) {
            if (bytes[off] == '#')
                while (off < bytes.size() && bytes[off] != '\n') ++off;
            else
                ++off;
        }
        std::string t;
        while (off < bytes.size() && bytes[off] > ' ') t += static_cast<char>(bytes[off++]);
        return t;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') fail("bad magic, expected P6");
    off = 2;
    const std::string ws = token(), hs = token(), ms = token();
    if (ws.empty() || hs.empty() || ms.empty()) fail("incomplete header");
    const int W = std::stoi(ws), H = std::stoi(hs), maxval = std::stoi(ms);
    if (W < 1 || H < 1) fail("bad dimensions");
    if (maxval != 255) fail("maxval must be 255");
    if (off >= bytes.size()) fail("missing pixel data");
    ++off;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(3) * H * W;
    if (bytes.size() - off < need)
        fail("short read: need " + std::to_string(need) + " pixel bytes, have " +
             std::to_string(bytes.size() - off));
    Tensor rgb({3, H, W});
    const long plane = static_cast<long>(H) * W;
    for (long i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            rgb.data[static_cast<size_t>(c * plane + i)] =
                static_cast<double>(bytes[off + static_cast<size_t>(3 * i + c)]) / 255.0;
    return rgb;
}

inline void write_ppm(const std::string& path, const Tensor& rgb) {
    detail_io::write_file(path, encode_ppm(rgb));
}

inline Tensor read_ppm(const std::string& path) { return decode_ppm(detail_io::read_file(path)); }

/// --- DMAP (depth + validity) --------------------------------------------
/// magic "DMP1", u32 height, u32 width (little-endian), then H*W
/// little-endian float32 row-major; NaN encodes an invalid pixel.

inline std::vector<uint8_t> encode_dmap(const Tensor& depth, const std::vector<uint8_t>& mask) {
    if (depth.ndim() != 2) throw std::invalid_argument("encode_dmap: depth must be H x W");
    if (mask.size() != depth.data.size())
        throw std::invalid_argument("encode_dmap: mask size mismatch");
    const uint32_t H = static_cast<uint32_t>(depth.dim(0)), W = static_cast<uint32_t>(depth.dim(1));
    std::vector<uint8_t> out{'D', 'M', 'P', '1'};
    auto put32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    };
    put32(H);
    put32(W);
    for (size_t i = 0; i < depth.data.size(); ++i) {
        const float f = mask[i] ? static_cast<float>(depth.data[i])
                                : std::numeric_limits<float>::quiet_NaN();
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put32(bits);
    }
    return out;
}

inline std::pair<Tensor, std::vector<uint8_t>> decode_dmap(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    auto fail = [&](const std::string& why) {
        throw std::runtime_error("DMAP rejected at byte offset " + std::to_string(off) + ": " +
                                 why);
    };
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "DMP1", 4) != 0) fail("bad magic");
    off = 4;
    auto get32 = [&]() {
        if (off + 4 > bytes.size()) fail("short read");
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[off + static_cast<size_t>(i)]) << (8 * i);
        off += 4;
        return v;
    };
    const uint32_t H = get32(), W = get32();
    if (H < 1 || W < 1 || H > (1u << 20) || W > (1u << 20)) fail("implausible dimensions");
    const size_t need = static_cast<size_t>(H) * W * 4;
    if (bytes.size() - off < need)
        fail("short read: need " + std::to_string(need) + " payload bytes, have " +
             std::to_string(bytes.size() - off));
    Tensor depth({static_cast<int>(H), static_cast<int>(W)});
    std::vector<uint8_t> mask(depth.data.size());
    for (size_t i = 0; i < depth.data.size(); ++i) {
        const uint32_t bits = get32();
        float f;
        std::memcpy(&f, &bits, 4);
        if (std::isnan(f)) {
            depth.data[i] = 0.0;
            mask[i] = 0;
        } else {
            depth.data[i] = static_cast<double>(f);
            mask[i] = 1;
        }
    }
    return {std::move(depth), std::move(mask)};
}

inline void write_dmap(const std::string& path, const Tensor& depth,
                       const std::vector<uint8_t>& mask) {
    detail_io::write_file(path, encode_dmap(depth, mask));
}

inline std::pair<Tensor, std::vector<uint8_t>> read_dmap(const std::string& path) {
    return decode_dmap(detail_io::read_file(path));
}

inline SceneSample read_sample(const std::string& ppm_path, const std::string& dmap_path) {
    SceneSample s;
    s.rgb = read_ppm(ppm_path);
    auto [d, m] = read_dmap(dmap_path);
    s.depth = std::move(d);
    s.mask = std::move(m);
    if (s.rgb.dim(1) != s.depth.dim(0) || s.rgb.dim(2) != s.depth.dim(1))
        throw std::runtime_error("sample rejected: rgb " + s.rgb.shape_str() + " vs depth " +
                                 s.depth.shape_str());
    return s;
}

/// False-color visualization of a depth map (near = warm, far = cool).
inline Tensor depth_to_falsecolor(const Tensor& depth, const std::vector<uint8_t>& mask, double a,
                                  double b) {
    Tensor rgb({3, depth.dim(0), depth.dim(1)});
    const long plane = depth.numel();
    for (long i = 0; i < plane; ++i) {
        if (!mask[static_cast<size_t>(i)]) continue;  // invalid stays black
        const double t = std::clamp(
            std::log(depth.data[static_cast<size_t>(i)] / a) / std::log(b / a), 0.0, 1.0);
        rgb.data[static_cast<size_t>(i)] = 1.0 - t;
        rgb.data[static_cast<size_t>(plane + i)] = 1.0 - std::abs(2.0 * t - 1.0);
        rgb.data[static_cast<size_t>(2 * plane + i)] = t;
    }
    return rgb;
}

}  // namespace rccn
