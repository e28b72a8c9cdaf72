#pragma once

#include <cmath>
#include <limits>

#include "salt/core.hpp"
#include "salt/label_tree.hpp"

namespace salt {

/// Partition of node ids into softmax units: the root forms a singleton
/// group, and every internal node contributes its child set as one group.
struct SiblingGroups {
    std::vector<std::vector<NodeId>> groups;
    std::vector<std::uint32_t> group_of; // node id -> index into groups
};

inline SiblingGroups sibling_groups(const LabelTree& tree) {
    SiblingGroups g;
    g.group_of.assign(tree.node_count(), 0);
    g.groups.push_back({tree.root()});
    for (NodeId n = 0; n < tree.node_count(); ++n) {
        if (tree.is_leaf(n))
            continue;
        const auto idx = static_cast<std::uint32_t>(g.groups.size());
        g.groups.push_back(tree.children(n));
        for (NodeId c : tree.children(n))
            g.group_of[c] = idx;
    }
    return g;
}

enum class ProbSpace : std::uint8_t { linear, log };
enum class ProbKind : std::uint8_t { conditional, cumulative };

/// Per-node probability grids. Conditional values are softmax outputs within
/// each sibling group; cumulative values are products of conditionals along
/// the root-to-node path. Either can be held in linear or log space.
struct ProbVolume {
    Field<double> values;
    ProbSpace space = ProbSpace::linear;
    ProbKind kind = ProbKind::conditional;
};

namespace detail {

/// Max-shifted log-softmax of one sibling group at every voxel. Stable for
/// logits anywhere in the double range.
inline void group_log_softmax(const Field<double>& logits, std::span<const NodeId> group,
                              Field<double>& out) {
    const std::size_t voxels = logits.voxels();
    if (group.size() == 1) {
        auto ch = out.channel(group[0]);
        std::fill(ch.begin(), ch.end(), 0.0);
        return;
    }
    for (std::size_t v = 0; v < voxels; ++v) {
        double mx = -std::numeric_limits<double>::infinity();
        for (NodeId n : group)
            mx = std::max(mx, logits.at(n, v));
        double sum = 0.0;
        for (NodeId n : group)
            sum += std::exp(logits.at(n, v) - mx);
        const double lse = mx + std::log(sum);
        for (NodeId n : group)
            out.at(n, v) = logits.at(n, v) - lse;
    }
}

inline void require_finite(const Field<double>& logits) {
    const double* p = logits.data();
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (!std::isfinite(p[i]))
            throw std::invalid_argument("non-finite logit at flat index " + std::to_string(i));
}

} // namespace detail

/// Log-space conditional probabilities: per sibling group, a log-softmax of
/// the group's logits at every voxel. Singleton groups are exactly log(1)=0.
inline ProbVolume conditional_log_probs(const Field<double>& logits, const SiblingGroups& groups) {
    if (logits.channels() != groups.group_of.size())
        throw std::invalid_argument("logit channel count does not match tree node count");
    detail::require_finite(logits);
    ProbVolume out{Field<double>(logits.channels(), logits.dims()), ProbSpace::log,
                   ProbKind::conditional};
    for (const auto& g : groups.groups)
        detail::group_log_softmax(logits, g, out.values);
    return out;
}

inline ProbVolume to_linear(const ProbVolume& p) {
    if (p.space == ProbSpace::linear)
        return p;
    ProbVolume out{Field<double>(p.values.channels(), p.values.dims()), ProbSpace::linear, p.kind};
    const double* src = p.values.data();
    double* dst = out.values.data();
    for (std::size_t i = 0; i < p.values.size(); ++i)
        dst[i] = std::exp(src[i]);
    return out;
}

inline ProbVolume to_log(const ProbVolume& p) {
    if (p.space == ProbSpace::log)
        return p;
    ProbVolume out{Field<double>(p.values.channels(), p.values.dims()), ProbSpace::log, p.kind};
    const double* src = p.values.data();
    double* dst = out.values.data();
    for (std::size_t i = 0; i < p.values.size(); ++i)
        dst[i] = std::log(src[i]);
    return out;
}

/// Linear-space conditional probabilities (softmax within each sibling group).
inline ProbVolume conditional_probs(const Field<double>& logits, const SiblingGroups& groups) {
    return to_linear(conditional_log_probs(logits, groups));
}

/// Chain-rule accumulation: cumulative(c) = product of conditionals along the
/// root-to-c path, accumulated in log space. The root channel is identically
/// log(1) = 0.
inline ProbVolume cumulative_probs(const ProbVolume& cond, const LabelTree& tree) {
    if (cond.kind != ProbKind::conditional)
        throw std::invalid_argument("cumulative_probs expects conditional input");
    if (cond.values.channels() != tree.node_count())
        throw std::invalid_argument("channel count does not match tree node count");
    const ProbVolume logc = to_log(cond);
    const std::size_t voxels = logc.values.voxels();

    ProbVolume out{Field<double>(logc.values.channels(), logc.values.dims()), ProbSpace::log,
                   ProbKind::cumulative};
    for (NodeId n : tree.topological_order()) {
        auto dst = out.values.channel(n);
        auto own = logc.values.channel(n);
        if (n == tree.root()) {
            std::fill(dst.begin(), dst.end(), 0.0);
            continue;
        }
        auto par = out.values.channel(tree.parent(n));
        for (std::size_t v = 0; v < voxels; ++v)
            dst[v] = par[v] + own[v];
    }
    return out;
}

/// Per-voxel argmax over leaf cumulative probabilities; ties go to the lowest
/// node id. Works in either probability space (log is monotone).
inline LabelVolume predict_labels(const ProbVolume& cum, const LabelTree& tree,
                                  Spacing spacing = {}) {
    if (cum.kind != ProbKind::cumulative)
        throw std::invalid_argument("predict_labels expects cumulative probabilities");
    const auto leaves = tree.leaves();
    const std::size_t voxels = cum.values.voxels();
    LabelVolume out(cum.values.dims(), 0, spacing);
    for (std::size_t v = 0; v < voxels; ++v) {
        NodeId best = leaves[0];
        double best_p = cum.values.at(leaves[0], v);
        for (std::size_t i = 1; i < leaves.size(); ++i) {
            const double p = cum.values.at(leaves[i], v);
            if (p > best_p) {
                best_p = p;
                best = leaves[i];
            }
        }
        out[v] = static_cast<std::uint16_t>(best);
    }
    return out;
}

/// Exact gradient of logits -> log cumulative probabilities, contracted with
/// `upstream` (the loss gradient w.r.t. each node's log cumulative value).
///
/// For node j in sibling group g: d(sum_n up_n log P_n)/d x_j
///   = U_j - q_j * sum_{i in g} U_i,
/// where U_i is the upstream mass flowing through node i (its own plus all
/// descendants') and q_i the conditional softmax value. Root gets zero.
inline Field<double> backward_logprobs(const Field<double>& logits, const SiblingGroups& groups,
                                       const LabelTree& tree, const Field<double>& upstream) {
    if (!logits.same_shape(upstream))
        throw std::invalid_argument("backward_logprobs: upstream shape mismatch");
    if (logits.channels() != tree.node_count())
        throw std::invalid_argument("backward_logprobs: channel count mismatch");

    const ProbVolume q = conditional_probs(logits, groups);
    const std::size_t n = tree.node_count();
    const std::size_t voxels = logits.voxels();
    const auto& topo = tree.topological_order();

    Field<double> grad(n, logits.dims());
    std::vector<double> u(n);
    for (std::size_t v = 0; v < voxels; ++v) {
        for (std::size_t i = 0; i < n; ++i)
            u[i] = upstream.at(i, v);
        for (auto it = topo.rbegin(); it != topo.rend(); ++it)
            if (*it != tree.root())
                u[tree.parent(*it)] += u[*it];
        for (const auto& g : groups.groups) {
            double mass = 0.0;
            for (NodeId i : g)
                mass += u[i];
            for (NodeId j : g)
                grad.at(j, v) = u[j] - q.values.at(j, v) * mass;
        }
    }
    return grad;
}

} // namespace salt
