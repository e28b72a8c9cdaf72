#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <random>

#include "salt/bit_codec.hpp"
#include "salt/label_tree.hpp"
#include "salt/rng.hpp"

namespace salt {

/// Centers (in mm) of the mask's face-connected boundary voxels: voxels set
/// in the mask with at least one of the six face neighbors unset or outside
/// the grid.
inline std::vector<std::array<double, 3>> mask_surface_points(const MaskVolume& mask,
                                                              Spacing spacing) {
    const auto& d = mask.dims();
    std::vector<std::array<double, 3>> points;
    for (std::uint32_t z = 0; z < d.z; ++z)
        for (std::uint32_t y = 0; y < d.y; ++y)
            for (std::uint32_t x = 0; x < d.x; ++x) {
                if (!mask(x, y, z))
                    continue;
                const bool boundary =
                    x == 0 || !mask(x - 1, y, z) || x + 1 == d.x || !mask(x + 1, y, z) ||
                    y == 0 || !mask(x, y - 1, z) || y + 1 == d.y || !mask(x, y + 1, z) ||
                    z == 0 || !mask(x, y, z - 1) || z + 1 == d.z || !mask(x, y, z + 1);
                if (boundary)
                    points.push_back({x * spacing.x, y * spacing.y, z * spacing.z});
            }
    return points;
}

namespace detail {

/// Exact within-radius queries over a uniform grid of cell edge tau: any
/// point within tau of a query lies in one of the 27 neighboring cells.
class SurfaceIndex {
public:
    SurfaceIndex(const std::vector<std::array<double, 3>>& points, double tau)
        : points_(points), tau_(tau) {
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key(points[i])].push_back(i);
    }

    bool any_within(const std::array<double, 3>& q) const {
        const double t2 = tau_ * tau_;
        const auto [cx, cy, cz] = key(q);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy)
                for (long long dz = -1; dz <= 1; ++dz) {
                    auto it = cells_.find({cx + dx, cy + dy, cz + dz});
                    if (it == cells_.end())
                        continue;
                    for (std::size_t i : it->second) {
                        const auto& p = points_[i];
                        const double ddx = p[0] - q[0];
                        const double ddy = p[1] - q[1];
                        const double ddz = p[2] - q[2];
                        if (ddx * ddx + ddy * ddy + ddz * ddz <= t2)
                            return true;
                    }
                }
        return false;
    }

private:
    using Key = std::array<long long, 3>;

    Key key(const std::array<double, 3>& p) const {
        return {static_cast<long long>(std::floor(p[0] / tau_)),
                static_cast<long long>(std::floor(p[1] / tau_)),
                static_cast<long long>(std::floor(p[2] / tau_))};
    }

    const std::vector<std::array<double, 3>>& points_;
    double tau_;
    std::map<Key, std::vector<std::size_t>> cells_;
};

} // namespace detail

/// Normalized surface Dice: the fraction of boundary points of either mask
/// lying within tau mm of the other mask's boundary. Both masks empty -> 1;
/// exactly one empty -> 0.
inline double nsd(const MaskVolume& gt_mask, const MaskVolume& pred_mask, Spacing spacing,
                  double tau_mm = 3.0) {
    if (gt_mask.dims() != pred_mask.dims())
        throw std::invalid_argument("nsd: dimension mismatch");
    if (!spacing.positive() || tau_mm <= 0.0)
        throw std::invalid_argument("nsd: spacing and tau must be positive");

    const auto s_gt = mask_surface_points(gt_mask, spacing);
    const auto s_pred = mask_surface_points(pred_mask, spacing);
    if (s_gt.empty() && s_pred.empty())
        return 1.0;
    if (s_gt.empty() || s_pred.empty())
        return 0.0;

    const detail::SurfaceIndex gt_index(s_gt, tau_mm);
    const detail::SurfaceIndex pred_index(s_pred, tau_mm);
    std::size_t hits = 0;
    for (const auto& p : s_gt)
        hits += pred_index.any_within(p);
    for (const auto& p : s_pred)
        hits += gt_index.any_within(p);
    return static_cast<double>(hits) / static_cast<double>(s_gt.size() + s_pred.size());
}

/// Percentile with linear interpolation between order statistics (the
/// `sorted` input must be ascending).
inline double percentile(const std::vector<double>& sorted, double pct) {
    if (sorted.empty())
        throw std::invalid_argument("percentile of empty sequence");
    if (sorted.size() == 1)
        return sorted[0];
    const double rank = pct / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= sorted.size())
        return sorted.back();
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Bootstrap 95% confidence interval of the mean: `iterations` resamples
/// with replacement (same size as the input, indices drawn as mt19937_64
/// draws modulo n, iteration-major), then the 2.5 and 97.5 percentiles of
/// the resample means.
inline std::pair<double, double> bootstrap_ci(std::span<const double> scores,
                                              int iterations = 1000, std::uint64_t seed = 0) {
    if (scores.empty())
        throw std::invalid_argument("bootstrap_ci: empty scores");
    if (iterations <= 0)
        throw std::invalid_argument("bootstrap_ci: iterations must be positive");
    std::mt19937_64 gen(seed);
    const std::size_t n = scores.size();
    std::vector<double> means;
    means.reserve(iterations);
    for (int it = 0; it < iterations; ++it) {
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            sum += scores[rng::below(gen, n)];
        means.push_back(sum / static_cast<double>(n));
    }
    std::sort(means.begin(), means.end());
    return {percentile(means, 2.5), percentile(means, 97.5)};
}

struct ScoreRow {
    std::string volume_id;
    NodeId class_id = 0;
    std::string class_name;
    double dice = 0.0;
    double nsd = 0.0;
};

struct ScoreSet {
    std::vector<ScoreRow> rows;
};

/// Per-class Dice (bitwise codec) and NSD (descendant-leaf masks) for one
/// ground-truth/prediction pair.
inline ScoreSet evaluate_pair(const LabelVolume& gt, const LabelVolume& pred,
                              const LabelTree& tree, const std::vector<NodeId>& classes,
                              Spacing spacing, std::string volume_id = "0") {
    if (gt.dims() != pred.dims())
        throw std::invalid_argument("evaluate_pair: dimension mismatch");
    const BitCodec codec = build_bit_codec(tree);
    ScoreSet out;
    for (NodeId c : classes) {
        tree.require_valid_id(c);
        ScoreRow row;
        row.volume_id = volume_id;
        row.class_id = c;
        row.class_name = tree.name(c);
        row.dice = dice(hierarchical_confusion(gt, pred, codec, c));
        row.nsd = nsd(descendant_leaf_mask(gt, tree, c), descendant_leaf_mask(pred, tree, c),
                      spacing);
        out.rows.push_back(std::move(row));
    }
    return out;
}

inline double macro_mean_dice(const ScoreSet& s) {
    double sum = 0.0;
    for (const auto& r : s.rows)
        sum += r.dice;
    return s.rows.empty() ? 0.0 : sum / static_cast<double>(s.rows.size());
}

inline double macro_mean_nsd(const ScoreSet& s) {
    double sum = 0.0;
    for (const auto& r : s.rows)
        sum += r.nsd;
    return s.rows.empty() ? 0.0 : sum / static_cast<double>(s.rows.size());
}

struct ClassAggregate {
    NodeId class_id = 0;
    std::string class_name;
    double mean_dice = 0.0, mean_nsd = 0.0;
    std::pair<double, double> dice_ci{0.0, 0.0};
    std::pair<double, double> nsd_ci{0.0, 0.0};
};

struct AggregateReport {
    std::size_t volume_count = 0;
    int bootstrap_iterations = 0;
    std::uint64_t seed = 0;
    std::vector<ClassAggregate> classes;
    double macro_dice = 0.0, macro_nsd = 0.0;
    std::pair<double, double> macro_dice_ci{0.0, 0.0};
    std::pair<double, double> macro_nsd_ci{0.0, 0.0};
};

/// Aggregate per-(volume, class) rows: per-class means with bootstrap CIs
/// over volumes, and the macro mean of per-volume macro scores with its CI.
inline AggregateReport aggregate_scores(const std::vector<ScoreRow>& rows,
                                        int bootstrap_iterations = 1000,
                                        std::uint64_t seed = 0) {
    AggregateReport rep;
    rep.bootstrap_iterations = bootstrap_iterations;
    rep.seed = seed;

    std::vector<std::string> volumes;     // order of first appearance
    std::vector<NodeId> class_ids;
    std::vector<std::string> class_names;
    for (const auto& r : rows) {
        if (std::find(volumes.begin(), volumes.end(), r.volume_id) == volumes.end())
            volumes.push_back(r.volume_id);
        if (std::find(class_ids.begin(), class_ids.end(), r.class_id) == class_ids.end()) {
            class_ids.push_back(r.class_id);
            class_names.push_back(r.class_name);
        }
    }
    rep.volume_count = volumes.size();

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v)
            s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };

    for (std::size_t ci = 0; ci < class_ids.size(); ++ci) {
        std::vector<double> d, s;
        for (const auto& r : rows)
            if (r.class_id == class_ids[ci]) {
                d.push_back(r.dice);
                s.push_back(r.nsd);
            }
        ClassAggregate agg;
        agg.class_id = class_ids[ci];
        agg.class_name = class_names[ci];
        agg.mean_dice = mean(d);
        agg.mean_nsd = mean(s);
        agg.dice_ci = bootstrap_ci(d, bootstrap_iterations, seed);
        agg.nsd_ci = bootstrap_ci(s, bootstrap_iterations, seed);
        rep.classes.push_back(std::move(agg));
    }

    std::vector<double> vol_dice, vol_nsd;
    for (const auto& vid : volumes) {
        std::vector<double> d, s;
        for (const auto& r : rows)
            if (r.volume_id == vid) {
                d.push_back(r.dice);
                s.push_back(r.nsd);
            }
        vol_dice.push_back(mean(d));
        vol_nsd.push_back(mean(s));
    }
    rep.macro_dice = mean(vol_dice);
    rep.macro_nsd = mean(vol_nsd);
    rep.macro_dice_ci = bootstrap_ci(vol_dice, bootstrap_iterations, seed);
    rep.macro_nsd_ci = bootstrap_ci(vol_nsd, bootstrap_iterations, seed);
    return rep;
}

/// CSV report: header `volume,class,dice,nsd`, one row per (volume, class).
inline std::string scores_to_csv(const std::vector<ScoreRow>& rows) {
    std::string out = "volume,class,dice,nsd\n";
    char buf[64];
    for (const auto& r : rows) {
        out += r.volume_id;
        out += ',';
        out += r.class_name;
        std::snprintf(buf, sizeof(buf), ",%.9g,%.9g\n", r.dice, r.nsd);
        out += buf;
    }
    return out;
}

} // namespace salt
