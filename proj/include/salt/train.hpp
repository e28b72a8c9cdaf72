#pragma once

#include "salt/checkpoint.hpp"
#include "salt/loss.hpp"
#include "salt/metrics.hpp"
#include "salt/net.hpp"
#include "salt/optim.hpp"
#include "salt/phantom.hpp"

namespace salt {

struct TrainConfig {
    double lr = 0.00025;
    double weight_decay = 0.00005;
    std::uint32_t epochs = 10;
    std::uint32_t steps_per_epoch = 25;
    std::uint32_t batch_size = 1;
    GridDims crop{32, 32, 16};
    std::uint64_t seed = 7;
    enum class Precision : std::uint8_t { f32, f64 };
    Precision precision = Precision::f64;
    std::uint32_t hidden1 = 8;
    std::uint32_t hidden2 = 16;
    PhantomConfig phantom;
    std::uint32_t train_phantoms = 4;
    std::uint32_t val_phantoms = 2;

    std::uint64_t total_steps() const {
        return static_cast<std::uint64_t>(epochs) * steps_per_epoch;
    }

    void validate() const {
        if (lr <= 0 || weight_decay < 0)
            throw std::invalid_argument("train config: lr must be positive, wd nonnegative");
        if (epochs == 0 || steps_per_epoch == 0 || batch_size == 0)
            throw std::invalid_argument("train config: epochs/steps/batch must be positive");
        if (crop.x == 0 || crop.y == 0 || crop.z == 0)
            throw std::invalid_argument("train config: crop must be positive");
        if (crop.x > phantom.dims.x || crop.y > phantom.dims.y || crop.z > phantom.dims.z)
            throw std::invalid_argument("train config: crop does not fit the phantom");
        if (train_phantoms == 0 || val_phantoms == 0)
            throw std::invalid_argument("train config: phantom counts must be positive");
    }
};

struct TrainLogRow {
    std::uint64_t step = 0; // 1-based
    double lr = 0.0;
    double ce = 0.0;
    double dice = 0.0;
    double total = 0.0;
};

struct EpochValidation {
    std::uint32_t epoch = 0; // 1-based
    double mean_leaf_dice = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    std::vector<EpochValidation> validation;
    double final_val_dice = 0.0;
    Checkpoint checkpoint;
};

/// Training log CSV: `step,lr,ce,dice,total`.
inline std::string train_log_to_csv(const std::vector<TrainLogRow>& rows) {
    std::string out = "step,lr,ce,dice,total\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(r.step), r.lr, r.ce, r.dice, r.total);
        out += buf;
    }
    return out;
}

namespace detail {

template <typename T>
Field<T> to_input_field(const Volume<float>& normalized) {
    Field<T> f(1, normalized.dims());
    auto ch = f.channel(0);
    for (std::size_t i = 0; i < normalized.size(); ++i)
        ch[i] = static_cast<T>(normalized[i]);
    return f;
}

inline Field<double> to_double_field(const Field<float>& f) {
    Field<double> out(f.channels(), f.dims());
    for (std::size_t i = 0; i < f.size(); ++i)
        out.data()[i] = static_cast<double>(f.data()[i]);
    return out;
}

inline const Field<double>& to_double_field(const Field<double>& f) { return f; }

inline Field<float> to_precision_field(const Field<double>& f, float) {
    Field<float> out(f.channels(), f.dims());
    for (std::size_t i = 0; i < f.size(); ++i)
        out.data()[i] = static_cast<float>(f.data()[i]);
    return out;
}

inline const Field<double>& to_precision_field(const Field<double>& f, double) { return f; }

/// Mean Dice over the tree's leaves of the network's prediction on one
/// phantom, via the bitwise codec.
template <typename T>
double validate_phantom(const TinyNet<T>& net, const Phantom& phantom, const LabelTree& tree,
                        const SiblingGroups& groups, const BitCodec& codec) {
    const auto input = to_input_field<T>(normalize_intensity(phantom.intensity));
    const Field<T> logits = net.forward(input);
    const Field<double> logits64 = [&] {
        if constexpr (std::is_same_v<T, double>)
            return logits;
        else
            return to_double_field(logits);
    }();
    const ProbVolume cum = cumulative_probs(conditional_log_probs(logits64, groups), tree);
    const LabelVolume pred = predict_labels(cum, tree, phantom.labels.spacing());

    double sum = 0.0;
    std::size_t count = 0;
    for (NodeId leaf : tree.leaves()) {
        sum += dice(hierarchical_confusion(phantom.labels, pred, codec, leaf));
        ++count;
    }
    return sum / static_cast<double>(count);
}

template <typename T>
TrainResult train_impl(const TrainConfig& cfg, const LabelTree& tree) {
    const SiblingGroups groups = sibling_groups(tree);
    const BitCodec codec = build_bit_codec(tree);

    std::vector<Phantom> train_pool, val_pool;
    for (std::uint32_t i = 0; i < cfg.train_phantoms; ++i)
        train_pool.push_back(generate_phantom(cfg.phantom, tree, cfg.seed + 1000 + i));
    for (std::uint32_t i = 0; i < cfg.val_phantoms; ++i)
        val_pool.push_back(generate_phantom(cfg.phantom, tree, cfg.seed + 2000 + i));

    TinyNet<T> net(tree.node_count(), cfg.hidden1, cfg.hidden2);
    net.init(cfg.seed);
    AdamWState opt_state;
    OptimConfig opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    opt.total_steps = cfg.total_steps();

    // Crop placement stream, decoupled from the phantom/init seeds.
    std::mt19937_64 crop_seeds(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    TrainResult result;
    std::uint64_t step = 0;
    for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::uint32_t s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
            std::vector<T> grad_sum;
            double ce = 0.0, dc = 0.0, total = 0.0;
            for (std::uint32_t b = 0; b < cfg.batch_size; ++b) {
                const Phantom& ph =
                    train_pool[(step * cfg.batch_size + b) % train_pool.size()];
                auto [crop_i, crop_l] =
                    random_crop(ph.intensity, ph.labels, cfg.crop, crop_seeds());
                const auto input = to_input_field<T>(normalize_intensity(crop_i));

                typename TinyNet<T>::Cache cache;
                const Field<T> logits = net.forward(input, &cache);
                const Field<double> logits64 = [&] {
                    if constexpr (std::is_same_v<T, double>)
                        return logits;
                    else
                        return to_double_field(logits);
                }();
                HybridLossResult loss = hybrid_loss(logits64, tree, crop_l);
                const auto& glog = to_precision_field(loss.grad_logits, T{});
                std::vector<T> grad = net.backward(cache, glog);

                if (grad_sum.empty())
                    grad_sum = std::move(grad);
                else
                    for (std::size_t i = 0; i < grad_sum.size(); ++i)
                        grad_sum[i] += grad[i];
                ce += loss.report.ce;
                dc += loss.report.dice;
                total += loss.report.total;
            }
            const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
            if (cfg.batch_size > 1)
                for (auto& g : grad_sum)
                    g = static_cast<T>(g * inv_b);
            ce *= inv_b;
            dc *= inv_b;
            total *= inv_b;
            if (!std::isfinite(total))
                throw std::runtime_error("training diverged (non-finite loss) at step " +
                                         std::to_string(step + 1));

            adamw_step<T>(net.parameters(), grad_sum, opt_state, step, opt);
            result.log.push_back(
                {step + 1, cosine_lr(cfg.lr, step, opt.total_steps), ce, dc, total});
        }

        double val = 0.0;
        for (const auto& ph : val_pool)
            val += validate_phantom(net, ph, tree, groups, codec);
        val /= static_cast<double>(val_pool.size());
        result.validation.push_back({epoch, val});
        result.final_val_dice = val;
    }

    result.checkpoint = checkpoint_from_net(net, tree_hash(tree));
    return result;
}

} // namespace detail

/// Deterministic toy training run: random phantom crops through the network,
/// activation and hybrid loss, AdamW updates on a cosine schedule, and a
/// per-epoch validation mean leaf Dice. Single-threaded by contract so the
/// loss trace is bitwise reproducible for a given seed.
inline TrainResult train(const TrainConfig& cfg, const LabelTree& tree) {
    cfg.validate();
    if (cfg.precision == TrainConfig::Precision::f64)
        return detail::train_impl<double>(cfg, tree);
    return detail::train_impl<float>(cfg, tree);
}

} // namespace salt
