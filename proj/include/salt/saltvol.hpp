#pragma once

#include <variant>

#include "salt/binary_io.hpp"
#include "salt/core.hpp"

namespace salt {

// SALTVOL binary volume format, little-endian throughout:
//   magic   8 bytes "SALTV001"
//   dims    3 x u32 (x, y, z)
//   spacing 3 x f32 (mm)
//   dtype   u8: 0 = u16 labels, 1 = f32 intensity
//   payload row-major, x fastest

inline constexpr char kSaltVolMagic[9] = "SALTV001";

enum class SaltVolDtype : std::uint8_t { labels_u16 = 0, intensity_f32 = 1 };

namespace detail {

inline void write_saltvol_header(std::ostream& os, const GridDims& dims, const Spacing& spacing,
                                 SaltVolDtype dtype) {
    io::write_bytes(os, kSaltVolMagic, 8);
    io::write_u32(os, dims.x);
    io::write_u32(os, dims.y);
    io::write_u32(os, dims.z);
    io::write_f32(os, static_cast<float>(spacing.x));
    io::write_f32(os, static_cast<float>(spacing.y));
    io::write_f32(os, static_cast<float>(spacing.z));
    const std::uint8_t code = static_cast<std::uint8_t>(dtype);
    io::write_bytes(os, &code, 1);
}

} // namespace detail

inline void write_saltvol(const std::string& path, const LabelVolume& volume) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    detail::write_saltvol_header(os, volume.dims(), volume.spacing(), SaltVolDtype::labels_u16);
    for (std::size_t i = 0; i < volume.size(); ++i)
        io::write_u16(os, volume[i]);
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

inline void write_saltvol(const std::string& path, const Volume<float>& volume) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    detail::write_saltvol_header(os, volume.dims(), volume.spacing(),
                                 SaltVolDtype::intensity_f32);
    for (std::size_t i = 0; i < volume.size(); ++i)
        io::write_f32(os, volume[i]);
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

using SaltVolData = std::variant<LabelVolume, Volume<float>>;

inline SaltVolData read_saltvol(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    io::read_bytes(is, magic, 8, "magic");
    if (std::memcmp(magic, kSaltVolMagic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not a SALTVOL file (bad magic)");
    GridDims dims;
    dims.x = io::read_u32(is, "dims");
    dims.y = io::read_u32(is, "dims");
    dims.z = io::read_u32(is, "dims");
    Spacing spacing;
    spacing.x = io::read_f32(is, "spacing");
    spacing.y = io::read_f32(is, "spacing");
    spacing.z = io::read_f32(is, "spacing");
    std::uint8_t dtype = 0;
    io::read_bytes(is, &dtype, 1, "dtype");

    if (dtype == static_cast<std::uint8_t>(SaltVolDtype::labels_u16)) {
        LabelVolume v(dims, 0, spacing);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = io::read_u16(is, "payload");
        return v;
    }
    if (dtype == static_cast<std::uint8_t>(SaltVolDtype::intensity_f32)) {
        Volume<float> v(dims, 0.0f, spacing);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = io::read_f32(is, "payload");
        return v;
    }
    throw std::runtime_error("'" + path + "': unknown dtype code " + std::to_string(dtype));
}

} // namespace salt
