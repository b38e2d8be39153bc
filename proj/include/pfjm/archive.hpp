#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfjm/tensor.hpp"

namespace pfjm {

/// Bit-exact tensor archive:
///   bytes 0..7   magic "PFJMTNSR"
///   bytes 8..11  little-endian uint32 header length
///   header       UTF-8 JSON {version, entries:[{name, dtype:"f32", shape}], metadata}
///   payload      concatenated little-endian float32 values, row-major,
///                in entry order
/// Values are stored as f32; tensors written from this format round-trip
/// bit-exactly.

inline constexpr char kArchiveMagic[8] = {'P', 'F', 'J', 'M', 'T', 'N', 'S', 'R'};
inline constexpr int kArchiveVersion = 1;

struct Archive {
    std::vector<std::pair<std::string, Tensor>> tensors;
    nlohmann::json metadata = nlohmann::json::object();

    const Tensor& get(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw std::runtime_error("archive: no tensor named '" + name + "'");
    }
    bool has(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }
    void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
};

namespace detail {
inline void put_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}
inline void put_f32_le(std::string& out, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32_le(out, v);
}
inline std::uint32_t get_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline float get_f32_le(const unsigned char* p) {
    std::uint32_t v = get_u32_le(p);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}
}  // namespace detail

inline std::string serialize_archive(const Archive& ar) {
    nlohmann::json header;
    header["version"] = kArchiveVersion;
    header["entries"] = nlohmann::json::array();
    for (const auto& [name, t] : ar.tensors) {
        if (!t.all_finite())
            throw std::invalid_argument("archive: tensor '" + name + "' has non-finite entries");
        header["entries"].push_back({{"name", name}, {"dtype", "f32"}, {"shape", t.shape()}});
    }
    header["metadata"] = ar.metadata;
    const std::string hdr = header.dump();

    std::string out;
    out.append(kArchiveMagic, 8);
    detail::put_u32_le(out, static_cast<std::uint32_t>(hdr.size()));
    out.append(hdr);
    for (const auto& [name, t] : ar.tensors)
        for (std::size_t i = 0; i < t.size(); ++i)
            detail::put_f32_le(out, static_cast<float>(t[i]));
    return out;
}

inline Archive deserialize_archive(const std::string& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kArchiveMagic, 8) != 0)
        throw std::runtime_error("archive: bad magic");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    std::uint32_t hlen = detail::get_u32_le(p + 8);
    if (bytes.size() < 12u + hlen) throw std::runtime_error("archive: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(12, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("archive: malformed header JSON: ") + e.what());
    }

    Archive ar;
    if (header.contains("metadata")) ar.metadata = header["metadata"];
    std::size_t offset = 12u + hlen;
    for (const auto& entry : header.at("entries")) {
        const std::string name = entry.at("name");
        const std::string dtype = entry.at("dtype");
        if (dtype != "f32") throw std::runtime_error("archive: unsupported dtype " + dtype);
        std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
        std::size_t n = Tensor::count(shape);
        if (offset + 4 * n > bytes.size())
            throw std::runtime_error("archive: payload truncated for tensor '" + name +
                                     "' (header/payload length disagreement)");
        Tensor t(shape);
        for (std::size_t i = 0; i < n; ++i)
            t[i] = static_cast<double>(detail::get_f32_le(p + offset + 4 * i));
        offset += 4 * n;
        ar.add(name, std::move(t));
    }
    if (offset != bytes.size())
        throw std::runtime_error("archive: trailing bytes (header/payload length disagreement)");
    return ar;
}

inline void write_archive(const std::string& path, const Archive& ar) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("archive: cannot open for write: " + path);
    std::string bytes = serialize_archive(ar);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("archive: write failed: " + path);
}

inline Archive read_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("archive: cannot open for read: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_archive(bytes);
}

/// Snap a tensor's values to the nearest f32, the precision the archive
/// stores. Applying this before writing makes the file round-trip an
/// identity on the in-memory values too.
inline void snap_to_f32(Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<double>(static_cast<float>(t[i]));
}

}  // namespace pfjm
