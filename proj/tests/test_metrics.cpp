#include <catch2/catch_amalgamated.hpp>

#include "salt/metrics.hpp"
#include "test_support.hpp"

using namespace salt;
using namespace testsupport;

namespace {

/// All-pairs surface distance oracle: exact brute force, no spatial binning.
double nsd_oracle(const MaskVolume& gt, const MaskVolume& pred, Spacing sp, double tau) {
    const auto s_gt = mask_surface_points(gt, sp);
    const auto s_pred = mask_surface_points(pred, sp);
    if (s_gt.empty() && s_pred.empty())
        return 1.0;
    if (s_gt.empty() || s_pred.empty())
        return 0.0;
    auto count_within = [&](const auto& from, const auto& to) {
        std::size_t hits = 0;
        for (const auto& a : from) {
            double best = 1e300;
            for (const auto& b : to) {
                const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
                best = std::min(best, dx * dx + dy * dy + dz * dz);
            }
            hits += best <= tau * tau;
        }
        return hits;
    };
    return static_cast<double>(count_within(s_gt, s_pred) + count_within(s_pred, s_gt)) /
           static_cast<double>(s_gt.size() + s_pred.size());
}

MaskVolume cube_mask(GridDims dims, std::uint32_t x0, std::uint32_t y0, std::uint32_t z0,
                     std::uint32_t edge) {
    MaskVolume m(dims, 0);
    for (std::uint32_t z = z0; z < z0 + edge; ++z)
        for (std::uint32_t y = y0; y < y0 + edge; ++y)
            for (std::uint32_t x = x0; x < x0 + edge; ++x)
                m(x, y, z) = 1;
    return m;
}

} // namespace

TEST_CASE("nsd basic cases") {
    const Spacing sp{1.5, 1.5, 1.5};
    const GridDims d{12, 12, 12};

    SECTION("identical masks score one") {
        const auto m = cube_mask(d, 2, 3, 4, 5);
        CHECK(nsd(m, m, sp) == 1.0);
    }
    SECTION("single voxels ten apart at 1.5mm score zero") {
        MaskVolume a(d, 0), b(d, 0);
        a(0, 0, 0) = 1;
        b(10, 0, 0) = 1; // 15mm > 3mm
        CHECK(nsd(a, b, sp, 3.0) == 0.0);
    }
    SECTION("a cube shifted by one voxel stays within 3mm everywhere") {
        const auto a = cube_mask(d, 2, 2, 2, 6);
        const auto b = cube_mask(d, 3, 2, 2, 6);
        CHECK(nsd(a, b, sp, 3.0) == 1.0);
    }
    SECTION("both empty -> 1, one empty -> 0") {
        const MaskVolume empty(d, 0);
        const auto m = cube_mask(d, 2, 2, 2, 3);
        CHECK(nsd(empty, empty, sp) == 1.0);
        CHECK(nsd(empty, m, sp) == 0.0);
        CHECK(nsd(m, empty, sp) == 0.0);
    }
    SECTION("argument validation") {
        const MaskVolume a(d, 0), b({6, 6, 6}, 0);
        CHECK_THROWS_AS(nsd(a, b, sp), std::invalid_argument);
        CHECK_THROWS_AS(nsd(a, a, {0.0, 1.0, 1.0}), std::invalid_argument);
        CHECK_THROWS_AS(nsd(a, a, sp, 0.0), std::invalid_argument);
    }
}

TEST_CASE("nsd matches the all-pairs oracle on random small masks") {
    std::mt19937_64 gen(101);
    const GridDims d{10, 9, 8};
    for (int t = 0; t < 20; ++t) {
        const Spacing sp{0.5 + 2.0 * rng::uniform_unit(gen), 0.5 + 2.0 * rng::uniform_unit(gen),
                         0.5 + 2.0 * rng::uniform_unit(gen)};
        MaskVolume a(d, 0), b(d, 0);
        for (std::size_t v = 0; v < a.size(); ++v) {
            a[v] = rng::below(gen, 5) == 0;
            b[v] = rng::below(gen, 5) == 0;
        }
        const double tau = 1.0 + 3.0 * rng::uniform_unit(gen);
        const double expect = nsd_oracle(a, b, sp, tau);
        REQUIRE(nsd(a, b, sp, tau) == expect);
        // symmetry
        REQUIRE(nsd(b, a, sp, tau) == expect);
    }
}

TEST_CASE("nsd is monotone in tau") {
    std::mt19937_64 gen(103);
    const GridDims d{10, 10, 6};
    MaskVolume a(d, 0), b(d, 0);
    for (std::size_t v = 0; v < a.size(); ++v) {
        a[v] = rng::below(gen, 4) == 0;
        b[v] = rng::below(gen, 4) == 0;
    }
    const Spacing sp{1.0, 1.3, 2.0};
    double prev = 0.0;
    for (double tau : {0.5, 1.0, 1.5, 2.5, 4.0, 8.0}) {
        const double v = nsd(a, b, sp, tau);
        REQUIRE(v >= prev);
        prev = v;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("percentile interpolation") {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(percentile(v, 0.0) == 1.0);
    CHECK(percentile(v, 100.0) == 4.0);
    CHECK(percentile(v, 50.0) == Catch::Approx(2.5));
    CHECK(percentile({7.0}, 2.5) == 7.0);
}

TEST_CASE("bootstrap_ci") {
    SECTION("constant scores give a degenerate interval") {
        const std::vector<double> scores(12, 0.9);
        const auto [lo, hi] = bootstrap_ci(scores, 1000, 5);
        CHECK(lo == hi);
        CHECK(lo == Catch::Approx(0.9).margin(1e-12));
    }
    SECTION("bounds bracket the sample mean and stay within the range") {
        std::mt19937_64 gen(107);
        for (int t = 0; t < 10; ++t) {
            std::vector<double> scores;
            const std::size_t n = 2 + rng::below(gen, 20);
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                scores.push_back(rng::uniform_unit(gen));
                mean += scores.back();
            }
            mean /= static_cast<double>(n);
            const auto [lo, hi] = bootstrap_ci(scores, 500, t);
            REQUIRE(lo <= mean);
            REQUIRE(hi >= mean);
            REQUIRE(lo >= *std::min_element(scores.begin(), scores.end()));
            REQUIRE(hi <= *std::max_element(scores.begin(), scores.end()));
        }
    }
    SECTION("deterministic under a fixed seed") {
        const std::vector<double> scores{0.8, 0.9, 1.0};
        const auto a = bootstrap_ci(scores, 1000, 42);
        const auto b = bootstrap_ci(scores, 1000, 42);
        CHECK(a == b);
    }
    SECTION("golden value for the documented generator") {
        // frozen from a reference run of this implementation; guards the RNG
        // contract (mt19937_64, modulo reduction, iteration-major order)
        const std::vector<double> scores{0.8, 0.9, 1.0};
        const auto [lo, hi] = bootstrap_ci(scores, 1000, 42);
        CHECK(lo == Catch::Approx(0.80000000000000016).margin(1e-15));
        CHECK(hi == Catch::Approx(1.0).margin(1e-15));
    }
    SECTION("empty input throws") {
        CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 1000, 0), std::invalid_argument);
    }
}

TEST_CASE("evaluate_pair") {
    const auto tree = t1();
    const GridDims d{8, 8, 4};
    const Spacing sp{1.5, 1.5, 1.5};
    std::mt19937_64 gen(109);
    const auto gt = random_labels(gen, d, tree.leaves(), sp);

    SECTION("perfect prediction scores one everywhere") {
        const std::vector<NodeId> classes{0, 2, 3, 5, 8, 9};
        const auto s = evaluate_pair(gt, gt, tree, classes, sp, "vol0");
        REQUIRE(s.rows.size() == classes.size());
        for (const auto& r : s.rows) {
            CHECK(r.dice == 1.0);
            CHECK(r.nsd == 1.0);
        }
        CHECK(macro_mean_dice(s) == 1.0);
    }
    SECTION("the root class is immune to the prediction") {
        const auto pred = random_labels(gen, d, tree.leaves(), sp);
        const auto s = evaluate_pair(gt, pred, tree, {0}, sp);
        CHECK(s.rows[0].dice == 1.0);
    }
    SECTION("per-class dice equals the brute-force merged-mask value") {
        const auto pred = random_labels(gen, d, tree.leaves(), sp);
        std::vector<NodeId> classes;
        for (NodeId n = 0; n < tree.node_count(); ++n)
            classes.push_back(n);
        const auto s = evaluate_pair(gt, pred, tree, classes, sp);
        for (const auto& r : s.rows) {
            const auto gm = descendant_leaf_mask(gt, tree, r.class_id);
            const auto pm = descendant_leaf_mask(pred, tree, r.class_id);
            ConfusionCounts counts;
            for (std::size_t v = 0; v < gm.size(); ++v) {
                counts.tp += pm[v] & gm[v];
                counts.fp += pm[v] & (1 - gm[v]);
                counts.fn += (1 - pm[v]) & gm[v];
            }
            REQUIRE(r.dice == dice(counts));
        }
    }
    SECTION("unknown class id throws") {
        CHECK_THROWS_AS(evaluate_pair(gt, gt, tree, {99}, sp), std::out_of_range);
    }
}

TEST_CASE("score aggregation and CSV") {
    std::vector<ScoreRow> rows;
    rows.push_back({"a", 5, "lungs", 0.9, 0.95});
    rows.push_back({"a", 6, "mediastinum", 0.7, 0.8});
    rows.push_back({"b", 5, "lungs", 0.8, 0.85});
    rows.push_back({"b", 6, "mediastinum", 0.6, 0.9});

    SECTION("csv layout") {
        const auto csv = scores_to_csv(rows);
        CHECK(csv.substr(0, 26) == "volume,class,dice,nsd\na,lu");
        CHECK(csv.find("a,mediastinum,0.7,0.8\n") != std::string::npos);
    }
    SECTION("aggregate means and degenerate single-volume CI") {
        const auto rep = aggregate_scores(rows, 200, 7);
        REQUIRE(rep.volume_count == 2);
        REQUIRE(rep.classes.size() == 2);
        CHECK(rep.classes[0].mean_dice == Catch::Approx(0.85));
        CHECK(rep.classes[1].mean_dice == Catch::Approx(0.65));
        CHECK(rep.macro_dice == Catch::Approx((0.8 + 0.7) / 2.0));

        const std::vector<ScoreRow> single(rows.begin(), rows.begin() + 2);
        const auto rep1 = aggregate_scores(single, 200, 7);
        CHECK(rep1.macro_dice_ci.first == rep1.macro_dice_ci.second);
        CHECK(rep1.macro_dice_ci.first == Catch::Approx(0.8));
    }
    SECTION("aggregation is deterministic under a seed") {
        const auto a = aggregate_scores(rows, 300, 11);
        const auto b = aggregate_scores(rows, 300, 11);
        CHECK(a.macro_dice_ci == b.macro_dice_ci);
        CHECK(a.classes[0].dice_ci == b.classes[0].dice_ci);
    }
}
