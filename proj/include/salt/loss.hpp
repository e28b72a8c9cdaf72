#pragma once

#include "salt/activation.hpp"
#include "salt/label_tree.hpp"

namespace salt {

/// Multi-hot targets: one row per voxel, one column per node, with ones on
/// the root-to-label path (row v is column labels[v] of the reachability
/// matrix).
struct EncodedTargets {
    std::size_t voxels = 0;
    std::size_t nodes = 0;
    std::vector<std::uint8_t> bits; // voxel-major, size voxels*nodes

    std::uint8_t at(std::size_t v, std::size_t n) const { return bits[v * nodes + n]; }
};

inline EncodedTargets encode_targets(const LabelVolume& labels, const BinaryMatrix& reachability) {
    const std::size_t n = reachability.rows();
    EncodedTargets t;
    t.voxels = labels.size();
    t.nodes = n;
    t.bits.assign(t.voxels * n, 0);
    for (std::size_t v = 0; v < t.voxels; ++v) {
        const std::uint16_t label = labels[v];
        if (label >= n)
            throw std::out_of_range("voxel label " + std::to_string(label) + " out of range");
        for (std::size_t i = 0; i < n; ++i)
            t.bits[v * n + i] = reachability.at(i, label);
    }
    return t;
}

struct CrossEntropyResult {
    double value = 0.0;
    Field<double> grad_logprob; // d value / d log P(n, v)
};

/// Mean over voxels of -sum_n y'(v,n) log P_n(v). Every node on the target
/// path contributes, so ancestors are optimized together with the label.
inline CrossEntropyResult cross_entropy(const ProbVolume& cumulative,
                                        const EncodedTargets& targets) {
    if (cumulative.kind != ProbKind::cumulative)
        throw std::invalid_argument("cross_entropy expects cumulative probabilities");
    const ProbVolume logp = to_log(cumulative);
    const std::size_t n = logp.values.channels();
    const std::size_t voxels = logp.values.voxels();
    if (targets.nodes != n || targets.voxels != voxels)
        throw std::invalid_argument("cross_entropy: target shape mismatch");

    CrossEntropyResult r;
    r.grad_logprob = Field<double>(n, logp.values.dims());
    double total = 0.0;
    const double inv_v = 1.0 / static_cast<double>(voxels);
    for (std::size_t v = 0; v < voxels; ++v)
        for (std::size_t i = 0; i < n; ++i)
            if (targets.bits[v * n + i]) {
                total -= logp.values.at(i, v);
                r.grad_logprob.at(i, v) = -inv_v;
            }
    r.value = total * inv_v;
    return r;
}

struct SoftDiceResult {
    double value = 0.0;              // 1 - mean over non-root nodes of d_n
    std::vector<double> per_node;    // d_n per node; root pinned to 1
    Field<double> grad_prob;         // d value / d p(n, v), linear space
};

/// Soft Dice over cumulative probabilities. Per non-root node n:
///   d_n = (2 sum_v p y' + eps) / (sum_v p + sum_v y' + eps)
/// and the loss is 1 - mean_n d_n. The root channel is constant 1 and is
/// excluded from the mean.
inline SoftDiceResult soft_dice(const ProbVolume& cumulative, const EncodedTargets& targets,
                                double eps = 1e-5) {
    if (cumulative.kind != ProbKind::cumulative)
        throw std::invalid_argument("soft_dice expects cumulative probabilities");
    const ProbVolume p = to_linear(cumulative);
    const std::size_t n = p.values.channels();
    const std::size_t voxels = p.values.voxels();
    if (targets.nodes != n || targets.voxels != voxels)
        throw std::invalid_argument("soft_dice: target shape mismatch");
    if (n < 2)
        throw std::invalid_argument("soft_dice needs at least one non-root node");

    SoftDiceResult r;
    r.per_node.assign(n, 1.0);
    r.grad_prob = Field<double>(n, p.values.dims());

    const double node_norm = 1.0 / static_cast<double>(n - 1);
    double mean_d = 0.0;
    for (std::size_t c = 1; c < n; ++c) {
        double inter = 0.0, psum = 0.0, ysum = 0.0;
        for (std::size_t v = 0; v < voxels; ++v) {
            const double pv = p.values.at(c, v);
            const double yv = targets.bits[v * n + c];
            inter += pv * yv;
            psum += pv;
            ysum += yv;
        }
        const double num = 2.0 * inter + eps;
        const double den = psum + ysum + eps;
        const double d = num / den;
        r.per_node[c] = d;
        mean_d += d;
        // d(1 - mean d_n)/dp = -(2 y' den - num) / den^2 / (n-1)
        const double inv_den2 = 1.0 / (den * den);
        for (std::size_t v = 0; v < voxels; ++v) {
            const double yv = targets.bits[v * n + c];
            r.grad_prob.at(c, v) = -node_norm * (2.0 * yv * den - num) * inv_den2;
        }
    }
    r.value = 1.0 - mean_d * node_norm;
    return r;
}

struct LossReport {
    double ce = 0.0;
    double dice = 0.0;
    double total = 0.0;
    std::vector<double> per_node_dice;
};

struct HybridLossResult {
    LossReport report;
    Field<double> grad_logits;
};

/// Hybrid cross-entropy + soft-Dice loss with unit weights, differentiated
/// all the way back to the logits through the activation.
inline HybridLossResult hybrid_loss(const Field<double>& logits, const LabelTree& tree,
                                    const LabelVolume& labels) {
    if (logits.voxels() != labels.size())
        throw std::invalid_argument("hybrid_loss: voxel count mismatch");
    const SiblingGroups groups = sibling_groups(tree);
    const BinaryMatrix reach = reachability_matrix(adjacency_matrix(tree), tree.height());
    const EncodedTargets targets = encode_targets(labels, reach);

    const ProbVolume cond = conditional_log_probs(logits, groups);
    const ProbVolume logcum = cumulative_probs(cond, tree);
    const ProbVolume lincum = to_linear(logcum);

    const CrossEntropyResult ce = cross_entropy(logcum, targets);
    const SoftDiceResult sd = soft_dice(lincum, targets);

    // Combine upstreams in log-prob space: d/dlogP = d/dp * p for the Dice
    // branch, then push through the activation in one pass.
    Field<double> upstream(logits.channels(), logits.dims());
    for (std::size_t i = 0; i < upstream.size(); ++i)
        upstream.data()[i] =
            ce.grad_logprob.data()[i] + sd.grad_prob.data()[i] * lincum.values.data()[i];

    HybridLossResult out;
    out.report.ce = ce.value;
    out.report.dice = sd.value;
    out.report.total = ce.value + sd.value;
    out.report.per_node_dice = sd.per_node;
    out.grad_logits = backward_logprobs(logits, groups, tree, upstream);
    return out;
}

} // namespace salt
