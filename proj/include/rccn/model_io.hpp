#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rccn/config.hpp"
#include "rccn/model.hpp"

namespace rccn {

/// Model file layout: magic "RCCN", version u16 LE, u32 LE JSON header length,
/// JSON header (network spec + scheme), little-endian float32 parameter blobs
/// in declaration order, then a u64 LE FNV-1a checksum of all preceding bytes.
inline constexpr uint16_t kModelFormatVersion = 1;

inline uint64_t fnv1a64(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const uint8_t* p;
    size_t n;
    size_t off = 0;

    void need(size_t k, const char* what) const {
        if (off + k > n)
            throw std::runtime_error(std::string("model file truncated reading ") + what +
                                     " at byte offset " + std::to_string(off));
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = static_cast<uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return v;
    }
    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return v;
    }
    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace detail

inline std::vector<uint8_t> serialize_model(Model& m) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'R', 'C', 'C', 'N'});
    detail::put_u16(out, kModelFormatVersion);
    json header{{"network", to_json(m.spec)}, {"scheme", to_json(m.scheme)}};
    const std::string hs = header.dump();
    detail::put_u32(out, static_cast<uint32_t>(hs.size()));
    out.insert(out.end(), hs.begin(), hs.end());
    for (auto& p : m.params())
        for (double v : p.value->data) detail::put_f32(out, static_cast<float>(v));
    detail::put_u64(out, fnv1a64(out.data(), out.size()));
    return out;
}

inline void save_model(Model& m, const std::string& path) {
    const auto bytes = serialize_model(m);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("save_model: cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    if (!f) throw std::runtime_error("save_model: short write to " + path);
}

inline Model deserialize_model(const std::vector<uint8_t>& bytes) {
    detail::Reader r{bytes.data(), bytes.size()};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), "RCCN", 4) != 0)
        throw std::runtime_error("model file rejected: bad magic");
    r.off = 4;
    const uint16_t version = r.u16("version");
    if (version != kModelFormatVersion)
        throw std::runtime_error("model file rejected: format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kModelFormatVersion));
    const uint32_t hlen = r.u32("header length");
    r.need(hlen, "JSON header");
    json header;
    try {
        header = json::parse(bytes.begin() + static_cast<long>(r.off),
                             bytes.begin() + static_cast<long>(r.off + hlen));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file rejected: bad JSON header: ") + e.what());
    }
    r.off += hlen;

    NetworkSpec spec;
    DiscretizationScheme scheme;
    try {
        spec = network_spec_from_json(header.at("network"));
        scheme = scheme_from_json(header.at("scheme"));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model file rejected: bad JSON header: ") + e.what());
    }
    Model m = Model::build(spec, scheme, /*seed=*/0);
    for (auto& p : m.params())
        for (double& v : p.value->data) v = static_cast<double>(r.f32("parameter blob"));

    const size_t body_end = r.off;
    const uint64_t stored = r.u64("checksum");
    if (r.off != bytes.size())
        throw std::runtime_error("model file rejected: " +
                                 std::to_string(bytes.size() - r.off) + " trailing bytes");
    const uint64_t computed = fnv1a64(bytes.data(), body_end);
    if (stored != computed)
        throw std::runtime_error("model file rejected: checksum mismatch");
    return m;
}

inline Model load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_model: cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace rccn
