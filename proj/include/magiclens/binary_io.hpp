#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "magiclens/error.hpp"
#include "magiclens/field.hpp"

namespace magiclens {

inline constexpr std::array<char, 4> kGridMagic{'M', 'N', 'L', 'V'};
inline constexpr std::array<char, 4> kMaskMagic{'M', 'N', 'L', 'B'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace le {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(std::uint8_t((v >> (8 * b)) & 0xff));
}
inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t get_u16(const std::uint8_t* p) { return std::uint16_t(p[0] | p[1] << 8); }
inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace le

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        if (!out) throw FormatError(FormatError::Kind::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw FormatError(FormatError::Kind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace detail {

inline void check_header(std::span<const std::uint8_t> b, const std::array<char, 4>& magic, std::size_t fixed) {
    if (b.size() < 4 || std::memcmp(b.data(), magic.data(), 4) != 0)
        throw FormatError(FormatError::Kind::BadMagic, std::string("expected ") + std::string(magic.data(), 4));
    if (b.size() < 8) throw FormatError(FormatError::Kind::CorruptPayload, "truncated header");
    const std::uint32_t version = le::get_u32(b.data() + 4);
    if (version != kFormatVersion)
        throw FormatError(FormatError::Kind::VersionUnsupported, "version " + std::to_string(version));
    if (b.size() < fixed) throw FormatError(FormatError::Kind::CorruptPayload, "truncated header");
}

inline Dims read_dims(const std::uint8_t* p) {
    Dims d{le::get_u32(p), le::get_u32(p + 4), le::get_u32(p + 8)};
    if (d.h == 0 || d.w == 0 || d.l == 0) throw FormatError(FormatError::Kind::CorruptPayload, "zero dimension " + d.str());
    return d;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_grid(const RadianceFieldGrid& grid) {
    const GridGeometry& g = grid.geometry();
    std::vector<std::uint8_t> out;
    out.reserve(36 + grid.size() * 16);
    out.insert(out.end(), kGridMagic.begin(), kGridMagic.end());
    le::put_u32(out, kFormatVersion);
    le::put_u32(out, g.dims.h);
    le::put_u32(out, g.dims.w);
    le::put_u32(out, g.dims.l);
    for (int a = 0; a < 3; ++a) le::put_f32(out, float(g.origin[a]));
    le::put_f32(out, float(g.voxel_size));
    for (const auto& v : grid.voxels()) {
        le::put_f32(out, v.r);
        le::put_f32(out, v.g);
        le::put_f32(out, v.b);
        le::put_f32(out, v.sigma);
    }
    return out;
}

inline RadianceFieldGrid decode_grid(std::span<const std::uint8_t> b) {
    constexpr std::size_t kHeader = 36;
    detail::check_header(b, kGridMagic, kHeader);
    const Dims dims = detail::read_dims(b.data() + 8);
    const Vec3 origin{le::get_f32(b.data() + 20), le::get_f32(b.data() + 24), le::get_f32(b.data() + 28)};
    const float vs = le::get_f32(b.data() + 32);
    const std::size_t expected = kHeader + dims.count() * 16;
    if (b.size() != expected)
        throw FormatError(FormatError::Kind::CorruptPayload, "expected " + std::to_string(expected) + " bytes for " +
                                                                 dims.str() + " grid, got " + std::to_string(b.size()));
    if (!(vs > 0.0f)) throw FormatError(FormatError::Kind::CorruptPayload, "voxel_size must be > 0");
    RadianceFieldGrid grid(dims, origin, vs);
    const std::uint8_t* p = b.data() + kHeader;
    for (auto& v : grid.voxels()) {
        v.r = le::get_f32(p), v.g = le::get_f32(p + 4), v.b = le::get_f32(p + 8), v.sigma = le::get_f32(p + 12);
        p += 16;
        if (!(v.sigma >= 0.0f)) throw FormatError(FormatError::Kind::CorruptPayload, "negative or NaN density");
    }
    return grid;
}

inline std::vector<std::uint8_t> encode_bitfield(const OccupancyBitfield& bits) {
    std::vector<std::uint8_t> out;
    out.reserve(20 + bits.bytes().size());
    out.insert(out.end(), kMaskMagic.begin(), kMaskMagic.end());
    le::put_u32(out, kFormatVersion);
    le::put_u32(out, bits.dims().h);
    le::put_u32(out, bits.dims().w);
    le::put_u32(out, bits.dims().l);
    out.insert(out.end(), bits.bytes().begin(), bits.bytes().end());
    return out;
}

inline OccupancyBitfield decode_bitfield(std::span<const std::uint8_t> b) {
    constexpr std::size_t kHeader = 20;
    detail::check_header(b, kMaskMagic, kHeader);
    const Dims dims = detail::read_dims(b.data() + 8);
    const std::size_t expected = kHeader + (dims.count() + 7) / 8;
    if (b.size() != expected)
        throw FormatError(FormatError::Kind::CorruptPayload, "expected " + std::to_string(expected) + " bytes for " +
                                                                 dims.str() + " mask, got " + std::to_string(b.size()));
    OccupancyBitfield bits(dims);
    std::copy(b.begin() + kHeader, b.end(), bits.bytes().begin());
    return bits;
}

inline void write_grid(const std::filesystem::path& path, const RadianceFieldGrid& grid) {
    write_file_atomic(path, encode_grid(grid));
}
inline RadianceFieldGrid read_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

inline void write_bitfield(const std::filesystem::path& path, const OccupancyBitfield& bits) {
    write_file_atomic(path, encode_bitfield(bits));
}
inline OccupancyBitfield read_bitfield(const std::filesystem::path& path) { return decode_bitfield(read_file(path)); }

}  // namespace magiclens
