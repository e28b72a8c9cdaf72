#pragma once

#include <bit>
#include <cstring>

#include "salt/label_tree.hpp"

namespace salt {

/// Per-node bit signatures for O(1) hierarchical membership tests.
///
/// Every internal node owns a contiguous bit field wide enough to hold a
/// 1-based child index (ceil(log2(m+1)) bits for m children; value 0 means
/// "the path does not enter this subtree"). encoding(c) writes the child
/// index taken at each field along the root-to-c path; mask(c) is all-ones
/// over exactly those fields. Then for any label v,
///   (encoding(v) AND mask(c)) == encoding(c)  iff  c lies on v's root path.
/// Codes are byte sequences; comparisons use one 64-bit op when the code
/// fits, and a per-byte AND/compare reduction otherwise.
class BitCodec {
public:
    struct BitField {
        NodeId parent = 0;          // internal node owning the field
        std::uint32_t offset = 0;   // absolute bit offset
        std::uint32_t width = 0;
    };

    std::size_t node_count() const { return nodes_; }
    std::uint32_t bytes_per_code() const { return bytes_; }
    std::uint32_t total_bits() const { return total_bits_; }
    const std::vector<BitField>& fields() const { return fields_; }

    std::span<const std::uint8_t> encoding(NodeId n) const {
        return {enc_.data() + static_cast<std::size_t>(n) * bytes_, bytes_};
    }
    std::span<const std::uint8_t> mask(NodeId n) const {
        return {mask_.data() + static_cast<std::size_t>(n) * bytes_, bytes_};
    }

    /// True iff `cls` lies on the root path of `label` (equivalently: label
    /// is at or below cls).
    bool contains(NodeId label, NodeId cls) const {
        const std::uint8_t* ev = enc_.data() + static_cast<std::size_t>(label) * bytes_;
        const std::uint8_t* mc = mask_.data() + static_cast<std::size_t>(cls) * bytes_;
        const std::uint8_t* ec = enc_.data() + static_cast<std::size_t>(cls) * bytes_;
        if (bytes_ <= 8) {
            std::uint64_t v = 0, m = 0, c = 0;
            std::memcpy(&v, ev, bytes_);
            std::memcpy(&m, mc, bytes_);
            std::memcpy(&c, ec, bytes_);
            return (v & m) == c;
        }
        for (std::uint32_t b = 0; b < bytes_; ++b)
            if ((ev[b] & mc[b]) != ec[b])
                return false;
        return true;
    }

    static BitCodec build(const LabelTree& tree) {
        BitCodec codec;
        codec.nodes_ = tree.node_count();

        std::vector<std::uint32_t> field_of(tree.node_count(), 0xffffffffu);
        std::uint32_t bit = 0;
        for (NodeId n = 0; n < tree.node_count(); ++n) {
            if (tree.is_leaf(n))
                continue;
            const std::size_t m = tree.children(n).size();
            std::uint32_t width = std::bit_width(m); // ceil(log2(m+1))
            field_of[n] = static_cast<std::uint32_t>(codec.fields_.size());
            codec.fields_.push_back({n, bit, width});
            bit += width;
        }
        codec.total_bits_ = bit;
        codec.bytes_ = std::max<std::uint32_t>(1, (bit + 7) / 8);

        codec.enc_.assign(codec.nodes_ * codec.bytes_, 0);
        codec.mask_.assign(codec.nodes_ * codec.bytes_, 0);
        for (NodeId c = 0; c < tree.node_count(); ++c) {
            std::uint8_t* enc = codec.enc_.data() + static_cast<std::size_t>(c) * codec.bytes_;
            std::uint8_t* msk = codec.mask_.data() + static_cast<std::size_t>(c) * codec.bytes_;
            for (NodeId n : path_to_root(tree, c)) {
                if (n == tree.root())
                    continue; // the root's singleton field is omitted
                const NodeId p = tree.parent(n);
                const BitField& f = codec.fields_[field_of[p]];
                const auto& siblings = tree.children(p);
                const auto pos = std::lower_bound(siblings.begin(), siblings.end(), n) -
                                 siblings.begin();
                write_bits(enc, f.offset, f.width, static_cast<std::uint64_t>(pos) + 1);
                write_bits(msk, f.offset, f.width, (1ull << f.width) - 1);
            }
        }
        return codec;
    }

private:
    static void write_bits(std::uint8_t* code, std::uint32_t offset, std::uint32_t width,
                           std::uint64_t value) {
        for (std::uint32_t k = 0; k < width; ++k)
            if ((value >> k) & 1ull)
                code[(offset + k) >> 3] |= static_cast<std::uint8_t>(1u << ((offset + k) & 7u));
    }

    std::size_t nodes_ = 0;
    std::uint32_t bytes_ = 1;
    std::uint32_t total_bits_ = 0;
    std::vector<BitField> fields_;
    std::vector<std::uint8_t> enc_;
    std::vector<std::uint8_t> mask_;
};

inline BitCodec build_bit_codec(const LabelTree& tree) {
    return BitCodec::build(tree);
}

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

/// Voxelwise hierarchical confusion for class c: membership of ground truth
/// and prediction is decided through the codec, then TP/FP/FN are bit sums
/// over voxels.
inline ConfusionCounts hierarchical_confusion(const LabelVolume& gt, const LabelVolume& pred,
                                              const BitCodec& codec, NodeId c) {
    if (gt.dims() != pred.dims())
        throw std::invalid_argument("hierarchical_confusion: dimension mismatch");
    if (c >= codec.node_count())
        throw std::out_of_range("class id out of range");

    // Membership is a pure function of the label value; resolve it once per
    // label id, then sweep the volumes.
    std::vector<std::uint8_t> member(codec.node_count());
    for (NodeId l = 0; l < codec.node_count(); ++l)
        member[l] = codec.contains(l, c) ? 1 : 0;

    auto lookup = [&](std::uint16_t label) -> std::uint8_t {
        if (label >= member.size())
            throw std::out_of_range("voxel label " + std::to_string(label) + " out of range");
        return member[label];
    };

    ConfusionCounts counts;
    for (std::size_t v = 0; v < gt.size(); ++v) {
        const std::uint8_t y = lookup(gt[v]);
        const std::uint8_t yhat = lookup(pred[v]);
        counts.tp += yhat & y;
        counts.fp += yhat & static_cast<std::uint8_t>(1 - y);
        counts.fn += static_cast<std::uint8_t>(1 - yhat) & y;
    }
    return counts;
}

/// Dice = 2TP / (2TP + FP + FN); a class absent from both volumes scores 1.
inline double dice(const ConfusionCounts& c) {
    if (c.tp + c.fp + c.fn == 0)
        return 1.0;
    return 2.0 * static_cast<double>(c.tp) /
           static_cast<double>(2 * c.tp + c.fp + c.fn);
}

} // namespace salt
