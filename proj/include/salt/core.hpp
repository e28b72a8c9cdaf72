#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace salt {

using NodeId = std::uint32_t;

/// Voxel grid extents. Linear indexing is row-major with x fastest:
/// index(x,y,z) = (z*Y + y)*X + x.
struct GridDims {
    std::uint32_t x = 0;
    std::uint32_t y = 0;
    std::uint32_t z = 0;

    std::size_t total() const {
        return static_cast<std::size_t>(x) * y * z;
    }
    bool operator==(const GridDims&) const = default;
};

/// Physical voxel spacing in millimetres.
struct Spacing {
    double x = 1.0;
    double y = 1.0;
    double z = 1.0;

    bool positive() const { return x > 0.0 && y > 0.0 && z > 0.0; }
    bool operator==(const Spacing&) const = default;
};

/// Dense scalar grid with spacing metadata.
template <typename T>
class Volume {
public:
    Volume() = default;
    Volume(GridDims dims, T fill = T{}, Spacing spacing = {})
        : dims_(dims), spacing_(spacing), data_(dims.total(), fill) {}

    const GridDims& dims() const { return dims_; }
    const Spacing& spacing() const { return spacing_; }
    void set_spacing(Spacing s) { spacing_ = s; }

    std::size_t size() const { return data_.size(); }

    std::size_t index(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return (static_cast<std::size_t>(iz) * dims_.y + iy) * dims_.x + ix;
    }

    T& operator()(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) {
        return data_[index(ix, iy, iz)];
    }
    T operator()(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) const {
        return data_[index(ix, iy, iz)];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Volume&) const = default;

private:
    GridDims dims_;
    Spacing spacing_;
    std::vector<T> data_;
};

using LabelVolume = Volume<std::uint16_t>;
using MaskVolume = Volume<std::uint8_t>;

/// Stack of per-node scalar grids (channel-major: channel c occupies one
/// contiguous block of dims.total() values).
template <typename T>
class Field {
public:
    Field() = default;
    Field(std::size_t channels, GridDims dims, T fill = T{})
        : channels_(channels), dims_(dims), voxels_(dims.total()),
          data_(channels * dims.total(), fill) {}

    std::size_t channels() const { return channels_; }
    const GridDims& dims() const { return dims_; }
    std::size_t voxels() const { return voxels_; }
    std::size_t size() const { return data_.size(); }

    T& at(std::size_t c, std::size_t v) { return data_[c * voxels_ + v]; }
    T at(std::size_t c, std::size_t v) const { return data_[c * voxels_ + v]; }

    std::span<T> channel(std::size_t c) {
        return {data_.data() + c * voxels_, voxels_};
    }
    std::span<const T> channel(std::size_t c) const {
        return {data_.data() + c * voxels_, voxels_};
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool same_shape(const Field& o) const {
        return channels_ == o.channels_ && dims_ == o.dims_;
    }

private:
    std::size_t channels_ = 0;
    GridDims dims_;
    std::size_t voxels_ = 0;
    std::vector<T> data_;
};

/// FNV-1a 64-bit hash; used to fingerprint tree files in checkpoints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace salt
