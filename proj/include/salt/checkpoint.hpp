#pragma once

#include "salt/binary_io.hpp"
#include "salt/core.hpp"
#include "salt/net.hpp"

namespace salt {

// Checkpoint format, little-endian:
//   magic        8 bytes "SALTCKP1"
//   version      u32 (1)
//   tree_hash    u64 (FNV-1a of the serialized tree)
//   tensor_count u32
//   per tensor:  name_len u32, name bytes, dtype u8 (0 = f32, 1 = f64),
//                ndim u32, dims u32 each, payload

inline constexpr char kCheckpointMagic[9] = "SALTCKP1";

struct CheckpointTensor {
    std::string name;
    std::uint8_t dtype = 1; // 0 = f32, 1 = f64
    std::vector<std::uint32_t> shape;
    std::vector<float> f32;
    std::vector<double> f64;

    std::size_t count() const {
        std::size_t c = 1;
        for (auto s : shape)
            c *= s;
        return c;
    }
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t tree_hash = 0;
    std::vector<CheckpointTensor> tensors;

    const CheckpointTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name)
                return &t;
        return nullptr;
    }
};

inline void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw std::runtime_error("cannot open '" + path + "' for writing");
    io::write_bytes(os, kCheckpointMagic, 8);
    io::write_u32(os, ckpt.version);
    io::write_u64(os, ckpt.tree_hash);
    io::write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        io::write_u32(os, static_cast<std::uint32_t>(t.name.size()));
        io::write_bytes(os, t.name.data(), t.name.size());
        io::write_bytes(os, &t.dtype, 1);
        io::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (auto s : t.shape)
            io::write_u32(os, s);
        if (t.dtype == 0)
            for (float v : t.f32)
                io::write_f32(os, v);
        else
            for (double v : t.f64)
                io::write_f64(os, v);
    }
    if (!os)
        throw std::runtime_error("write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open '" + path + "'");
    char magic[8];
    io::read_bytes(is, magic, 8, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("'" + path + "' is not a SALT checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = io::read_u32(is, "version");
    if (ckpt.version != 1)
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(ckpt.version));
    ckpt.tree_hash = io::read_u64(is, "tree hash");
    const std::uint32_t count = io::read_u32(is, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const std::uint32_t name_len = io::read_u32(is, "tensor name length");
        t.name.resize(name_len);
        io::read_bytes(is, t.name.data(), name_len, "tensor name");
        io::read_bytes(is, &t.dtype, 1, "tensor dtype");
        const std::uint32_t ndim = io::read_u32(is, "tensor rank");
        for (std::uint32_t k = 0; k < ndim; ++k)
            t.shape.push_back(io::read_u32(is, "tensor shape"));
        const std::size_t n = t.count();
        if (t.dtype == 0) {
            t.f32.resize(n);
            for (auto& v : t.f32)
                v = io::read_f32(is, "tensor payload");
        } else if (t.dtype == 1) {
            t.f64.resize(n);
            for (auto& v : t.f64)
                v = io::read_f64(is, "tensor payload");
        } else {
            throw std::runtime_error("unknown tensor dtype code " + std::to_string(t.dtype));
        }
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

template <typename T>
Checkpoint checkpoint_from_net(const TinyNet<T>& net, std::uint64_t tree_hash) {
    Checkpoint ckpt;
    ckpt.tree_hash = tree_hash;
    const auto& params = net.parameters();
    for (const auto& info : net.tensors()) {
        CheckpointTensor t;
        t.name = info.name;
        t.shape = info.shape;
        if constexpr (std::is_same_v<T, float>) {
            t.dtype = 0;
            t.f32.assign(params.begin() + info.offset, params.begin() + info.offset + info.count);
        } else {
            t.dtype = 1;
            t.f64.assign(params.begin() + info.offset, params.begin() + info.offset + info.count);
        }
        ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
}

/// Precision of the stored network (all tensors share one dtype).
inline bool checkpoint_is_f64(const Checkpoint& ckpt) {
    if (ckpt.tensors.empty())
        throw std::runtime_error("checkpoint has no tensors");
    return ckpt.tensors.front().dtype == 1;
}

template <typename T>
TinyNet<T> net_from_checkpoint(const Checkpoint& ckpt) {
    const CheckpointTensor* w1 = ckpt.find("conv1.weight");
    const CheckpointTensor* w2 = ckpt.find("conv2.weight");
    const CheckpointTensor* w3 = ckpt.find("conv3.weight");
    if (!w1 || !w2 || !w3 || w1->shape.size() != 5 || w2->shape.size() != 5 ||
        w3->shape.size() != 5)
        throw std::runtime_error("checkpoint is missing convolution tensors");
    TinyNet<T> net(w3->shape[0], w1->shape[0], w2->shape[0]);
    auto& params = net.parameters();
    for (const auto& info : net.tensors()) {
        const CheckpointTensor* t = ckpt.find(info.name);
        if (!t)
            throw std::runtime_error("checkpoint tensor '" + info.name + "' missing");
        if (t->shape != info.shape)
            throw std::runtime_error("checkpoint tensor '" + info.name + "' has wrong shape");
        if (t->count() != info.count)
            throw std::runtime_error("checkpoint tensor '" + info.name + "' has wrong size");
        for (std::size_t i = 0; i < info.count; ++i)
            params[info.offset + i] = t->dtype == 0 ? static_cast<T>(t->f32[i])
                                                    : static_cast<T>(t->f64[i]);
    }
    return net;
}

} // namespace salt
