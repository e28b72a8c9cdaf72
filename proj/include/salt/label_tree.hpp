#pragma once

#include <algorithm>
#include <charconv>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "salt/core.hpp"

namespace salt {

/// Raised when a tree document or parent table fails validation. `line` is
/// the 1-based line of the offending node in the source document, or 0 when
/// the tree was built programmatically.
class TreeError : public std::runtime_error {
public:
    TreeError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_ = 0;
};

/// Rooted label hierarchy. Node ids are contiguous 0..N-1 with the root fixed
/// at id 0; every non-root node stores its parent id. Children lists, depths,
/// height and a parent-before-child traversal order are derived on
/// construction and immutable afterwards.
class LabelTree {
public:
    static constexpr std::uint32_t kRootParent = 0xffffffffu;

    /// Build and validate from a parent table. `parents[i]` is the parent id
    /// of node i, or kRootParent for the root. `lines` optionally maps node
    /// ids to source line numbers for error reporting.
    static LabelTree from_parents(std::vector<std::uint32_t> parents,
                                  std::vector<std::string> names,
                                  const std::vector<std::size_t>* lines = nullptr) {
        LabelTree t;
        t.parent_ = std::move(parents);
        t.name_ = std::move(names);
        t.validate_and_derive(lines);
        return t;
    }

    std::size_t node_count() const { return parent_.size(); }
    NodeId root() const { return 0; }

    std::uint32_t parent(NodeId n) const { return parent_[n]; }
    const std::string& name(NodeId n) const { return name_[n]; }
    const std::vector<NodeId>& children(NodeId n) const { return children_[n]; }
    bool is_leaf(NodeId n) const { return children_[n].empty(); }
    std::uint32_t depth(NodeId n) const { return depth_[n]; }
    std::uint32_t height() const { return height_; }

    /// Nodes ordered so that every parent precedes its children.
    const std::vector<NodeId>& topological_order() const { return topo_; }

    std::vector<NodeId> leaves() const {
        std::vector<NodeId> out;
        for (NodeId n = 0; n < node_count(); ++n)
            if (is_leaf(n))
                out.push_back(n);
        return out;
    }

    std::optional<NodeId> find(std::string_view name) const {
        auto it = name_index_.find(std::string(name));
        if (it == name_index_.end())
            return std::nullopt;
        return it->second;
    }

    void require_valid_id(NodeId n) const {
        if (n >= node_count())
            throw std::out_of_range("node id " + std::to_string(n) + " out of range (N=" +
                                    std::to_string(node_count()) + ")");
    }

private:
    void validate_and_derive(const std::vector<std::size_t>* lines) {
        auto line_of = [&](NodeId n) -> std::size_t {
            return lines && n < lines->size() ? (*lines)[n] : 0;
        };
        const std::size_t n = parent_.size();
        if (n == 0)
            throw TreeError(0, "tree has no nodes");
        if (name_.size() != n)
            throw TreeError(0, "name count does not match node count");

        if (parent_[0] != kRootParent)
            throw TreeError(line_of(0), "first node must be the root (parent '-')");
        for (NodeId i = 1; i < n; ++i) {
            if (parent_[i] == kRootParent)
                throw TreeError(line_of(i), "multiple roots: node " + std::to_string(i) +
                                                " also has no parent");
            if (parent_[i] >= n)
                throw TreeError(line_of(i), "missing parent " + std::to_string(parent_[i]) +
                                                " for node " + std::to_string(i));
            if (parent_[i] == i)
                throw TreeError(line_of(i), "cycle: node " + std::to_string(i) +
                                                " is its own parent");
        }

        name_index_.clear();
        for (NodeId i = 0; i < n; ++i) {
            if (name_[i].empty())
                throw TreeError(line_of(i), "empty name for node " + std::to_string(i));
            auto [it, inserted] = name_index_.emplace(name_[i], i);
            if (!inserted)
                throw TreeError(line_of(i), "duplicate name '" + name_[i] + "'");
        }

        // Depth by parent walk; more than N steps without reaching the root
        // means a parent cycle.
        depth_.assign(n, 0xffffffffu);
        depth_[0] = 0;
        for (NodeId i = 1; i < n; ++i) {
            if (depth_[i] != 0xffffffffu)
                continue;
            std::vector<NodeId> chain;
            NodeId cur = i;
            while (depth_[cur] == 0xffffffffu) {
                chain.push_back(cur);
                cur = parent_[cur];
                if (chain.size() > n)
                    throw TreeError(line_of(i), "cycle involving node " + std::to_string(i));
            }
            std::uint32_t d = depth_[cur];
            for (auto it = chain.rbegin(); it != chain.rend(); ++it)
                depth_[*it] = ++d;
        }
        height_ = *std::max_element(depth_.begin(), depth_.end());

        children_.assign(n, {});
        for (NodeId i = 1; i < n; ++i)
            children_[parent_[i]].push_back(i);
        for (auto& c : children_)
            std::sort(c.begin(), c.end());

        topo_.clear();
        topo_.reserve(n);
        topo_.push_back(0);
        for (std::size_t head = 0; head < topo_.size(); ++head)
            for (NodeId c : children_[topo_[head]])
                topo_.push_back(c);
    }

    std::vector<std::uint32_t> parent_;
    std::vector<std::string> name_;
    std::vector<std::vector<NodeId>> children_;
    std::vector<std::uint32_t> depth_;
    std::vector<NodeId> topo_;
    std::unordered_map<std::string, NodeId> name_index_;
    std::uint32_t height_ = 0;
};

namespace detail {

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
    std::uint64_t value = 0;
    if (s.empty())
        return std::nullopt;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        return std::nullopt;
    return value;
}

} // namespace detail

/// Parse the tab-separated tree format: `id<TAB>parent<TAB>name` per line,
/// `-` as the root's parent, `#` comments and blank lines ignored, ids
/// ascending from 0 in file order.
inline LabelTree parse_tree(std::string_view text) {
    std::vector<std::uint32_t> parents;
    std::vector<std::string> names;
    std::vector<std::size_t> lines;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos
                                                     ? text.size() - pos
                                                     : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        std::string_view trimmed = line;
        while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t'))
            trimmed.remove_prefix(1);
        if (trimmed.empty() || trimmed.front() == '#')
            continue;

        const std::size_t tab1 = line.find('\t');
        const std::size_t tab2 = tab1 == std::string_view::npos
                                     ? std::string_view::npos
                                     : line.find('\t', tab1 + 1);
        if (tab1 == std::string_view::npos || tab2 == std::string_view::npos)
            throw TreeError(line_no, "expected 'id<TAB>parent<TAB>name'");
        const std::string_view id_field = line.substr(0, tab1);
        const std::string_view parent_field = line.substr(tab1 + 1, tab2 - tab1 - 1);
        const std::string_view name_field = line.substr(tab2 + 1);

        const auto id = detail::parse_uint(id_field);
        if (!id)
            throw TreeError(line_no, "invalid id '" + std::string(id_field) + "'");
        if (*id < parents.size())
            throw TreeError(line_no, "duplicate id " + std::to_string(*id));
        if (*id > parents.size())
            throw TreeError(line_no, "non-contiguous id " + std::to_string(*id) +
                                         " (expected " + std::to_string(parents.size()) + ")");

        std::uint32_t parent = LabelTree::kRootParent;
        if (parent_field != "-") {
            const auto p = detail::parse_uint(parent_field);
            if (!p)
                throw TreeError(line_no, "invalid parent '" + std::string(parent_field) + "'");
            parent = static_cast<std::uint32_t>(*p);
        }
        if (name_field.empty())
            throw TreeError(line_no, "empty name");

        parents.push_back(parent);
        names.emplace_back(name_field);
        lines.push_back(line_no);
    }
    if (parents.empty())
        throw TreeError(0, "tree document has no node lines");
    return LabelTree::from_parents(std::move(parents), std::move(names), &lines);
}

/// Inverse of parse_tree; parse_tree(serialize_tree(t)) reproduces t.
inline std::string serialize_tree(const LabelTree& tree) {
    std::string out;
    for (NodeId n = 0; n < tree.node_count(); ++n) {
        out += std::to_string(n);
        out += '\t';
        if (n == tree.root())
            out += '-';
        else
            out += std::to_string(tree.parent(n));
        out += '\t';
        out += tree.name(n);
        out += '\n';
    }
    return out;
}

inline std::uint64_t tree_hash(const LabelTree& tree) {
    return fnv1a64(serialize_tree(tree));
}

/// Dense 0/1 matrix over node ids.
class BinaryMatrix {
public:
    BinaryMatrix() = default;
    BinaryMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), d_(rows * cols, 0) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    std::uint8_t& at(std::size_t r, std::size_t c) { return d_[r * cols_ + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return d_[r * cols_ + c]; }

    std::span<const std::uint8_t> row(std::size_t r) const {
        return {d_.data() + r * cols_, cols_};
    }

    bool is_zero() const {
        return std::all_of(d_.begin(), d_.end(), [](std::uint8_t v) { return v == 0; });
    }

    bool operator==(const BinaryMatrix&) const = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::uint8_t> d_;
};

/// Boolean-semiring matrix product (entries saturate to {0,1}).
inline BinaryMatrix bool_product(const BinaryMatrix& a, const BinaryMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("bool_product: inner dimensions differ");
    BinaryMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k)
            if (a.at(i, k))
                for (std::size_t j = 0; j < b.cols(); ++j)
                    if (b.at(k, j))
                        out.at(i, j) = 1;
    return out;
}

/// A(i,j) = 1 iff node i is the parent of node j.
inline BinaryMatrix adjacency_matrix(const LabelTree& tree) {
    const std::size_t n = tree.node_count();
    BinaryMatrix a(n, n);
    for (NodeId j = 1; j < n; ++j)
        a.at(tree.parent(j), j) = 1;
    return a;
}

/// R = sum of A^v for v = 0..height, over the boolean semiring. Column j
/// marks every node on the root-to-j path, including j itself.
inline BinaryMatrix reachability_matrix(const BinaryMatrix& adjacency, std::uint32_t height) {
    const std::size_t n = adjacency.rows();
    BinaryMatrix r(n, n);
    BinaryMatrix power(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        r.at(i, i) = 1;      // A^0
        power.at(i, i) = 1;
    }
    for (std::uint32_t v = 1; v <= height; ++v) {
        power = bool_product(power, adjacency);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (power.at(i, j))
                    r.at(i, j) = 1;
    }
    return r;
}

/// S = A^T A: S(i,j) = 1 iff i and j share a parent. Root row/column is zero.
inline BinaryMatrix sibling_matrix(const BinaryMatrix& adjacency) {
    const std::size_t n = adjacency.rows();
    BinaryMatrix s(n, n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (adjacency.at(k, i))
                for (std::size_t j = 0; j < n; ++j)
                    if (adjacency.at(k, j))
                        s.at(i, j) = 1;
    return s;
}

struct TreeMatrices {
    BinaryMatrix adjacency;
    BinaryMatrix reachability;
    BinaryMatrix sibling;
    std::uint32_t height = 0;
};

inline TreeMatrices tree_matrices(const LabelTree& tree) {
    TreeMatrices m;
    m.adjacency = adjacency_matrix(tree);
    m.height = tree.height();
    m.reachability = reachability_matrix(m.adjacency, m.height);
    m.sibling = sibling_matrix(m.adjacency);
    return m;
}

/// Root-to-node id sequence, both endpoints included.
inline std::vector<NodeId> path_to_root(const LabelTree& tree, NodeId node) {
    tree.require_valid_id(node);
    std::vector<NodeId> path;
    for (NodeId cur = node;; cur = tree.parent(cur)) {
        path.push_back(cur);
        if (cur == tree.root())
            break;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

/// Binary mask of voxels labeled `node` or any of its descendants. Membership
/// is decided by walking parent links per label value, independently of the
/// matrix and codec routes, so this doubles as their oracle.
inline MaskVolume descendant_leaf_mask(const LabelVolume& labels, const LabelTree& tree,
                                       NodeId node) {
    tree.require_valid_id(node);
    const std::size_t n = tree.node_count();
    std::vector<std::uint8_t> under(n, 0);
    for (NodeId l = 0; l < n; ++l) {
        NodeId cur = l;
        while (true) {
            if (cur == node) {
                under[l] = 1;
                break;
            }
            if (cur == tree.root())
                break;
            cur = tree.parent(cur);
        }
    }
    MaskVolume mask(labels.dims(), 0, labels.spacing());
    for (std::size_t v = 0; v < labels.size(); ++v) {
        const std::uint16_t l = labels[v];
        if (l >= n)
            throw std::out_of_range("voxel label " + std::to_string(l) + " out of range");
        mask[v] = under[l];
    }
    return mask;
}

/// Relabel the voxels under `mask` according to the region they fall in:
/// output = mapping[regions[v]] where mask is set, regions[v] elsewhere.
inline LabelVolume split_mask_by_regions(
    const MaskVolume& mask, const LabelVolume& regions,
    const std::unordered_map<std::uint16_t, std::uint16_t>& mapping) {
    if (mask.dims() != regions.dims())
        throw std::invalid_argument("split_mask_by_regions: dimension mismatch");
    LabelVolume out = regions;
    for (std::size_t v = 0; v < mask.size(); ++v) {
        if (!mask[v])
            continue;
        auto it = mapping.find(regions[v]);
        if (it == mapping.end())
            throw std::invalid_argument("split_mask_by_regions: unmapped region id " +
                                        std::to_string(regions[v]) + " under mask");
        out[v] = it->second;
    }
    return out;
}

/// Append one "<name>_other" leaf under each listed internal node. Existing
/// ids are unchanged; new leaves get ids N, N+1, ... in ascending parent
/// order. Listing a leaf is an error.
inline LabelTree insert_other_children(const LabelTree& tree, std::vector<NodeId> parents) {
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());

    std::vector<std::uint32_t> parent_table;
    std::vector<std::string> names;
    for (NodeId n = 0; n < tree.node_count(); ++n) {
        parent_table.push_back(n == tree.root() ? LabelTree::kRootParent : tree.parent(n));
        names.push_back(tree.name(n));
    }
    for (NodeId p : parents) {
        tree.require_valid_id(p);
        if (tree.is_leaf(p))
            throw std::invalid_argument("insert_other_children: node " + std::to_string(p) +
                                        " ('" + tree.name(p) + "') is a leaf");
        parent_table.push_back(p);
        names.push_back(tree.name(p) + "_other");
    }
    return LabelTree::from_parents(std::move(parent_table), std::move(names));
}

} // namespace salt
