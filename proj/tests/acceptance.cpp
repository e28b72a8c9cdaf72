// Acceptance suite: one self-contained check per shipping criterion, each
// printed as a PASS/FAIL line with its measured runtime. Exits nonzero if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>

#include "salt/loss.hpp"
#include "salt/metrics.hpp"
#include "salt/train.hpp"
#include "test_support.hpp"

using namespace salt;
using namespace testsupport;

namespace {

int g_failures = 0;

void run_criterion(int number, const char* title, double time_limit_s,
                   const std::function<std::string()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok && secs > time_limit_s) {
        ok = false;
        detail += " [exceeded time limit]";
    }
    std::printf("[%s] criterion %d: %s (%.2fs%s%s)\n", ok ? "PASS" : "FAIL", number, title,
                secs, detail.empty() ? "" : "; ", detail.c_str());
    std::fflush(stdout);
    if (!ok)
        ++g_failures;
}

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void expect(bool cond, const std::string& what) {
    if (!cond)
        throw Failure(what);
}

std::string criterion1_flat_softmax() {
    std::mt19937_64 gen(1001);
    double worst = 0.0;
    for (std::size_t k : {2u, 5u, 50u}) {
        const auto tree = flat(k);
        const auto groups = sibling_groups(tree);
        const GridDims d{4, 2, 1};
        const auto logits = random_logits(gen, tree.node_count(), d, 8.0);
        const auto cum = to_linear(cumulative_probs(conditional_probs(logits, groups), tree));
        for (std::size_t v = 0; v < d.total(); ++v) {
            double mx = -1e300;
            for (NodeId leaf = 1; leaf <= k; ++leaf)
                mx = std::max(mx, logits.at(leaf, v));
            double denom = 0.0;
            for (NodeId leaf = 1; leaf <= k; ++leaf)
                denom += std::exp(logits.at(leaf, v) - mx);
            for (NodeId leaf = 1; leaf <= k; ++leaf) {
                const double reference = std::exp(logits.at(leaf, v) - mx) / denom;
                worst = std::max(worst, std::abs(cum.values.at(leaf, v) - reference));
            }
        }
    }
    expect(worst < 1e-12, "flat-tree deviation " + std::to_string(worst));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "max |SALT - softmax| = %.2e", worst);
    return buf;
}

std::string criterion2_probability_conservation() {
    std::mt19937_64 gen(1002);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const auto tree = random_tree(gen, 2 + rng::below(gen, 199), 8);
        const auto groups = sibling_groups(tree);
        const GridDims d{3, 2, 1};
        const auto logits = random_logits(gen, tree.node_count(), d, 6.0);
        const auto cum = to_linear(cumulative_probs(conditional_probs(logits, groups), tree));
        for (std::size_t v = 0; v < d.total(); ++v) {
            double leaf_sum = 0.0;
            for (NodeId leaf : tree.leaves())
                leaf_sum += cum.values.at(leaf, v);
            worst = std::max(worst, std::abs(leaf_sum - 1.0));
            for (NodeId n = 0; n < tree.node_count(); ++n) {
                if (tree.is_leaf(n))
                    continue;
                double child_sum = 0.0;
                for (NodeId c : tree.children(n))
                    child_sum += cum.values.at(c, v);
                worst = std::max(worst, std::abs(cum.values.at(n, v) - child_sum));
            }
        }
    }
    expect(worst < 1e-9, "conservation deviation " + std::to_string(worst));
    char buf[80];
    std::snprintf(buf, sizeof(buf), "200 trees, max deviation = %.2e", worst);
    return buf;
}

std::string criterion3_gradient_correctness() {
    std::mt19937_64 gen(1003);
    double worst_rel = 0.0;
    int instances = 0;
    for (int t = 0; t < 110; ++t) {
        const auto tree = random_tree(gen, 3 + rng::below(gen, 8), 5);
        const GridDims d{2, 2, 1};
        auto logits = random_logits(gen, tree.node_count(), d, 1.5);
        std::vector<NodeId> all(tree.node_count());
        for (NodeId n = 0; n < tree.node_count(); ++n)
            all[n] = n;
        const auto labels = random_labels(gen, d, all);

        const auto analytic = hybrid_loss(logits, tree, labels).grad_logits;
        const double h = 1e-5;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double keep = logits.data()[i];
            logits.data()[i] = keep + h;
            const double fp = hybrid_loss(logits, tree, labels).report.total;
            logits.data()[i] = keep - h;
            const double fm = hybrid_loss(logits, tree, labels).report.total;
            logits.data()[i] = keep;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic.data()[i];
            const double scale = std::max({std::abs(fd), std::abs(an), 1e-3});
            worst_rel = std::max(worst_rel, std::abs(fd - an) / scale);
        }
        ++instances;
    }
    expect(instances >= 100, "not enough instances");
    expect(worst_rel < 1e-5, "relative error " + std::to_string(worst_rel));
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%d instances, max rel err = %.2e", instances, worst_rel);
    return buf;
}

std::string criterion4_bitwise_exactness() {
    std::mt19937_64 gen(1004);
    const GridDims d{16, 16, 16};
    std::uint32_t widest = 0;
    for (int t = 0; t < 50; ++t) {
        LabelTree tree = [&] {
            if (t == 0) {
                // spine of 33 two-child groups: 66 bits, 9-byte codes
                std::vector<std::uint32_t> parents{LabelTree::kRootParent};
                std::vector<std::string> names{"n0"};
                std::uint32_t prev = 0;
                for (int i = 0; i < 33; ++i) {
                    const auto spine = static_cast<std::uint32_t>(parents.size());
                    parents.push_back(prev);
                    names.push_back("s" + std::to_string(i));
                    parents.push_back(prev);
                    names.push_back("l" + std::to_string(i));
                    prev = spine;
                }
                return LabelTree::from_parents(std::move(parents), std::move(names));
            }
            return random_tree(gen, 2 + rng::below(gen, 63), 8);
        }();
        const auto codec = build_bit_codec(tree);
        widest = std::max(widest, codec.bytes_per_code());
        if (t == 0)
            expect(codec.bytes_per_code() >= 9, "wide tree should need at least 9 bytes");

        std::vector<NodeId> all(tree.node_count());
        for (NodeId n = 0; n < tree.node_count(); ++n)
            all[n] = n;
        const auto gt = random_labels(gen, d, all);
        const auto pred = random_labels(gen, d, all);
        for (NodeId c = 0; c < tree.node_count(); ++c) {
            const auto counts = hierarchical_confusion(gt, pred, codec, c);
            const auto gm = descendant_leaf_mask(gt, tree, c);
            const auto pm = descendant_leaf_mask(pred, tree, c);
            ConfusionCounts oracle;
            for (std::size_t v = 0; v < gm.size(); ++v) {
                oracle.tp += pm[v] & gm[v];
                oracle.fp += pm[v] & (1 - gm[v]);
                oracle.fn += (1 - pm[v]) & gm[v];
            }
            expect(counts.tp == oracle.tp && counts.fp == oracle.fp && counts.fn == oracle.fn,
                   "confusion mismatch for class " + std::to_string(c));
            expect(dice(counts) == dice(oracle), "dice mismatch");
        }
    }
    char buf[80];
    std::snprintf(buf, sizeof(buf), "50 trees integer-exact, widest code %u bytes", widest);
    return buf;
}

std::string criterion5_worked_values() {
    const auto tree = make_t1_tree();
    const auto groups = sibling_groups(tree);
    const GridDims d{2, 2, 1};
    const Field<double> logits(tree.node_count(), d, 0.0);
    const auto logcum = cumulative_probs(conditional_log_probs(logits, groups), tree);
    const auto cum = to_linear(logcum);

    const std::vector<std::pair<const char*, double>> expected{
        {"background", 1.0 / 2},   {"other_body", 1.0 / 4}, {"other_thx", 1.0 / 12},
        {"mediastinum", 1.0 / 12}, {"lung_left", 1.0 / 24}, {"lung_right", 1.0 / 24}};
    double worst = 0.0;
    for (const auto& [name, p] : expected) {
        const auto id = tree.find(name);
        expect(id.has_value(), std::string("missing node ") + name);
        for (std::size_t v = 0; v < d.total(); ++v)
            worst = std::max(worst, std::abs(cum.values.at(*id, v) - p));
    }
    expect(worst < 1e-9, "leaf posterior deviation " + std::to_string(worst));

    const auto targets = encode_targets(
        LabelVolume(d, static_cast<std::uint16_t>(*tree.find("lung_left"))),
        reachability_matrix(adjacency_matrix(tree), tree.height()));
    const auto ce = cross_entropy(logcum, targets);
    const double reference = std::log(2304.0); // ln 2 + ln 4 + ln 12 + ln 24 = 7.742402...
    expect(std::abs(ce.value - reference) < 1e-9,
           "CE deviation " + std::to_string(std::abs(ce.value - reference)));
    char buf[96];
    std::snprintf(buf, sizeof(buf), "posteriors ok, CE = %.6f vs 7.742402", ce.value);
    return buf;
}

std::string criterion6_toy_training() {
    const auto tree = make_t1_tree();
    const TrainConfig cfg; // defaults: 48^3 phantoms, 32x32x16 crops, lr 2.5e-4, wd 5e-5

    const auto t0 = std::chrono::steady_clock::now();
    const auto run1 = train(cfg, tree);
    const double train_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    expect(train_secs < 300.0, "training run took " + std::to_string(train_secs) + "s");

    std::uint64_t first_pass_step = 0;
    for (const auto& v : run1.validation)
        if (v.mean_leaf_dice >= 0.85) {
            first_pass_step = static_cast<std::uint64_t>(v.epoch) * cfg.steps_per_epoch;
            break;
        }
    expect(first_pass_step != 0 && first_pass_step <= 500,
           "never reached 0.85 within 500 steps (final " +
               std::to_string(run1.final_val_dice) + ")");

    const auto run2 = train(cfg, tree);
    expect(train_log_to_csv(run1.log) == train_log_to_csv(run2.log),
           "loss traces differ between same-seed runs");

    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "dice %.3f, >= 0.85 by step %llu of %llu, %.0fs/run, traces identical",
                  run1.final_val_dice, static_cast<unsigned long long>(first_pass_step),
                  static_cast<unsigned long long>(cfg.total_steps()), train_secs);
    return buf;
}

std::string criterion7_nsd() {
    const Spacing sp{1.5, 1.5, 1.5};
    const GridDims d{12, 12, 12};

    auto cube = [&](std::uint32_t x0, std::uint32_t edge) {
        MaskVolume m(d, 0);
        for (std::uint32_t z = 2; z < 2 + edge; ++z)
            for (std::uint32_t y = 2; y < 2 + edge; ++y)
                for (std::uint32_t x = x0; x < x0 + edge; ++x)
                    m(x, y, z) = 1;
        return m;
    };
    const auto a = cube(2, 6);
    expect(nsd(a, a, sp, 3.0) == 1.0, "identical masks");
    expect(nsd(cube(2, 6), cube(3, 6), sp, 3.0) == 1.0, "1-voxel shift at 1.5mm");

    MaskVolume p1(d, 0), p2(d, 0);
    p1(0, 0, 0) = 1;
    p2(10, 0, 0) = 1;
    expect(nsd(p1, p2, sp, 3.0) == 0.0, "far-disjoint masks");

    // exact agreement with the all-pairs oracle on random masks
    std::mt19937_64 gen(1007);
    for (int t = 0; t < 10; ++t) {
        MaskVolume x(d, 0), y(d, 0);
        for (std::size_t v = 0; v < x.size(); ++v) {
            x[v] = rng::below(gen, 6) == 0;
            y[v] = rng::below(gen, 6) == 0;
        }
        const double tau = 1.0 + 3.0 * rng::uniform_unit(gen);
        const auto s_x = mask_surface_points(x, sp);
        const auto s_y = mask_surface_points(y, sp);
        double reference;
        if (s_x.empty() && s_y.empty())
            reference = 1.0;
        else if (s_x.empty() || s_y.empty())
            reference = 0.0;
        else {
            std::size_t hits = 0;
            auto sweep = [&](const auto& from, const auto& to) {
                for (const auto& pa : from) {
                    double best = 1e300;
                    for (const auto& pb : to) {
                        const double dx = pa[0] - pb[0], dy = pa[1] - pb[1],
                                     dz = pa[2] - pb[2];
                        best = std::min(best, dx * dx + dy * dy + dz * dz);
                    }
                    hits += best <= tau * tau;
                }
            };
            sweep(s_x, s_y);
            sweep(s_y, s_x);
            reference =
                static_cast<double>(hits) / static_cast<double>(s_x.size() + s_y.size());
        }
        expect(nsd(x, y, sp, tau) == reference, "oracle mismatch");
    }
    return "sanity values and oracle agreement exact";
}

std::string criterion8_bootstrap() {
    const std::vector<double> constant(7, 0.9);
    const auto [clo, chi] = bootstrap_ci(constant, 1000, 3);
    expect(clo == chi, "constant scores should give a degenerate interval");

    std::mt19937_64 gen(1008);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> scores;
        const std::size_t n = 1 + rng::below(gen, 25);
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            scores.push_back(rng::uniform_unit(gen));
            mean += scores.back();
        }
        mean /= static_cast<double>(n);
        const auto a = bootstrap_ci(scores, 1000, 77 + t);
        const auto b = bootstrap_ci(scores, 1000, 77 + t);
        expect(a == b, "same seed must reproduce the interval");
        expect(a.first <= mean + 1e-12 && a.second >= mean - 1e-12,
               "interval must bracket the sample mean");
    }
    return "deterministic, degenerate-on-constant, brackets the mean";
}

} // namespace

int main() {
    std::printf("SALT acceptance suite\n");
    run_criterion(1, "flat-tree softmax equivalence (K=2,5,50; 1e-12)", 1.0,
                  criterion1_flat_softmax);
    run_criterion(2, "probability conservation on 200 random trees (1e-9)", 30.0,
                  criterion2_probability_conservation);
    run_criterion(3, "hybrid-loss gradient vs finite differences (1e-5)", 120.0,
                  criterion3_gradient_correctness);
    run_criterion(4, "bitwise hierarchical Dice exactness incl. >64-bit codes", 60.0,
                  criterion4_bitwise_exactness);
    run_criterion(5, "worked values: T1 leaf posteriors and CE 7.742402 (1e-9)", 10.0,
                  criterion5_worked_values);
    run_criterion(6, "toy training reaches mean leaf Dice >= 0.85 deterministically", 720.0,
                  criterion6_toy_training);
    run_criterion(7, "NSD sanity values and brute-force agreement", 60.0, criterion7_nsd);
    run_criterion(8, "bootstrap CI determinism and bracketing", 10.0, criterion8_bootstrap);

    if (g_failures == 0)
        std::printf("all criteria passed\n");
    else
        std::printf("%d criteria FAILED\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
