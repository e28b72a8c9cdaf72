#pragma once

#include "salt/core.hpp"
#include "salt/rng.hpp"

namespace salt {

namespace detail {

/// out += 3x3x3 same-padded convolution of `in` with one kernel. The kernel
/// is laid out [dz][dy][dx]; each tap is applied as a shifted row
/// accumulation so the inner loop stays contiguous.
template <typename T>
void conv3_accumulate(std::span<const T> in, const GridDims& d, const T* w27, std::span<T> out) {
    const std::int64_t X = d.x, Y = d.y, Z = d.z;
    for (int kz = -1; kz <= 1; ++kz)
        for (int ky = -1; ky <= 1; ++ky)
            for (int kx = -1; kx <= 1; ++kx) {
                const T wv = w27[((kz + 1) * 3 + (ky + 1)) * 3 + (kx + 1)];
                const std::int64_t z0 = std::max<std::int64_t>(0, -kz);
                const std::int64_t z1 = std::min<std::int64_t>(Z - 1, Z - 1 - kz);
                const std::int64_t y0 = std::max<std::int64_t>(0, -ky);
                const std::int64_t y1 = std::min<std::int64_t>(Y - 1, Y - 1 - ky);
                const std::int64_t x0 = std::max<std::int64_t>(0, -kx);
                const std::int64_t x1 = std::min<std::int64_t>(X - 1, X - 1 - kx);
                for (std::int64_t z = z0; z <= z1; ++z)
                    for (std::int64_t y = y0; y <= y1; ++y) {
                        const T* irow = in.data() + ((z + kz) * Y + (y + ky)) * X + kx;
                        T* orow = out.data() + (z * Y + y) * X;
                        for (std::int64_t x = x0; x <= x1; ++x)
                            orow[x] += wv * irow[x];
                    }
            }
}

/// dw27 += correlation of dy with in over the valid tap ranges; accumulation
/// in double regardless of T.
template <typename T>
void conv3_weight_grad(std::span<const T> in, std::span<const T> dy, const GridDims& d,
                       T* dw27) {
    const std::int64_t X = d.x, Y = d.y, Z = d.z;
    for (int kz = -1; kz <= 1; ++kz)
        for (int ky = -1; ky <= 1; ++ky)
            for (int kx = -1; kx <= 1; ++kx) {
                double acc = 0.0;
                const std::int64_t z0 = std::max<std::int64_t>(0, -kz);
                const std::int64_t z1 = std::min<std::int64_t>(Z - 1, Z - 1 - kz);
                const std::int64_t y0 = std::max<std::int64_t>(0, -ky);
                const std::int64_t y1 = std::min<std::int64_t>(Y - 1, Y - 1 - ky);
                const std::int64_t x0 = std::max<std::int64_t>(0, -kx);
                const std::int64_t x1 = std::min<std::int64_t>(X - 1, X - 1 - kx);
                for (std::int64_t z = z0; z <= z1; ++z)
                    for (std::int64_t y = y0; y <= y1; ++y) {
                        const T* irow = in.data() + ((z + kz) * Y + (y + ky)) * X + kx;
                        const T* grow = dy.data() + (z * Y + y) * X;
                        for (std::int64_t x = x0; x <= x1; ++x)
                            acc += static_cast<double>(grow[x]) * static_cast<double>(irow[x]);
                    }
                dw27[((kz + 1) * 3 + (ky + 1)) * 3 + (kx + 1)] += static_cast<T>(acc);
            }
}

template <typename T>
void flip_kernel(const T* w27, T* flipped) {
    for (int i = 0; i < 27; ++i)
        flipped[i] = w27[26 - i];
}

} // namespace detail

/// Three 3x3x3 same-padded convolutions with channel plan 1 -> h1 -> h2 -> N
/// and ReLU between layers. Parameters live in one packed vector (weights
/// then bias per layer) so the optimizer and checkpoint writer can treat the
/// model as a flat tensor table.
template <typename T>
class TinyNet {
public:
    struct TensorInfo {
        std::string name;
        std::vector<std::uint32_t> shape;
        std::size_t offset = 0;
        std::size_t count = 0;
    };

    struct Cache {
        Field<T> input; // 1 channel
        Field<T> act1;  // post-ReLU
        Field<T> act2;  // post-ReLU
    };

    TinyNet(std::size_t out_channels, std::size_t hidden1 = 8, std::size_t hidden2 = 16)
        : out_(out_channels), h1_(hidden1), h2_(hidden2) {
        if (out_ == 0 || h1_ == 0 || h2_ == 0)
            throw std::invalid_argument("TinyNet: channel counts must be positive");
        params_.assign(parameter_count(), T(0));
    }

    std::size_t out_channels() const { return out_; }
    std::size_t hidden1() const { return h1_; }
    std::size_t hidden2() const { return h2_; }

    std::size_t parameter_count() const {
        return h1_ * 27 + h1_ + h2_ * h1_ * 27 + h2_ + out_ * h2_ * 27 + out_;
    }

    std::vector<T>& parameters() { return params_; }
    const std::vector<T>& parameters() const { return params_; }

    std::vector<TensorInfo> tensors() const {
        std::vector<TensorInfo> t;
        std::size_t off = 0;
        auto add = [&](std::string name, std::vector<std::uint32_t> shape) {
            std::size_t count = 1;
            for (auto s : shape)
                count *= s;
            t.push_back({std::move(name), std::move(shape), off, count});
            off += count;
        };
        add("conv1.weight", {static_cast<std::uint32_t>(h1_), 1, 3, 3, 3});
        add("conv1.bias", {static_cast<std::uint32_t>(h1_)});
        add("conv2.weight",
            {static_cast<std::uint32_t>(h2_), static_cast<std::uint32_t>(h1_), 3, 3, 3});
        add("conv2.bias", {static_cast<std::uint32_t>(h2_)});
        add("conv3.weight",
            {static_cast<std::uint32_t>(out_), static_cast<std::uint32_t>(h2_), 3, 3, 3});
        add("conv3.bias", {static_cast<std::uint32_t>(out_)});
        return t;
    }

    /// Seeded init. The first layer gets delta-style kernels whose unit
    /// thresholds tile the [0,1] input range; deeper layers use fan-in
    /// scaled uniform weights (ReLU gain) with spread biases. The tiling
    /// matters at the toy scale: the training budget is a few hundred
    /// low-lr steps, too few to grow mid-range thresholds from zero biases.
    void init(std::uint64_t seed) {
        std::mt19937_64 gen(seed);
        auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i)
                params_[offset + i] =
                    static_cast<T>((2.0 * rng::uniform_unit(gen) - 1.0) * bound);
        };
        // Biases get twice the weight bound so unit thresholds start spread
        // across the activation range instead of bunched at zero.
        auto fill_bias = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
            const double bound = 2.0 * std::sqrt(6.0 / static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i)
                params_[offset + i] =
                    static_cast<T>((2.0 * rng::uniform_unit(gen) - 1.0) * bound);
        };
        const auto t = tensors();
        // First layer: delta-style kernels (mass on the center tap, small
        // noise elsewhere) with thresholds spread across the unit input
        // range, so early units respond to distinct intensity bands.
        for (std::size_t j = 0; j < h1_; ++j) {
            const double sign = (j % 2 == 0) ? 1.0 : -1.0;
            const double slope = sign * (1.5 + rng::uniform_unit(gen));
            for (std::size_t k = 0; k < 27; ++k)
                params_[t[0].offset + j * 27 + k] =
                    static_cast<T>(0.05 * (2.0 * rng::uniform_unit(gen) - 1.0));
            params_[t[0].offset + j * 27 + 13] = static_cast<T>(slope); // center tap
            const double threshold = (static_cast<double>(j) + 0.5) / static_cast<double>(h1_);
            params_[t[1].offset + j] = static_cast<T>(-threshold * slope);
        }
        fill(t[2].offset, t[2].count, h1_ * 27);      // conv2.weight
        fill_bias(t[3].offset, t[3].count, h1_ * 27); // conv2.bias
        fill(t[4].offset, t[4].count, h2_ * 27);      // conv3.weight
        fill_bias(t[5].offset, t[5].count, h2_ * 27); // conv3.bias
    }

    Field<T> forward(const Field<T>& input, Cache* cache = nullptr) const {
        if (input.channels() != 1)
            throw std::invalid_argument("TinyNet: expected 1 input channel");
        const auto t = tensors();
        Field<T> a1 = conv_layer(input, t[0].offset, t[1].offset, h1_);
        relu_inplace(a1);
        Field<T> a2 = conv_layer(a1, t[2].offset, t[3].offset, h2_);
        relu_inplace(a2);
        Field<T> logits = conv_layer(a2, t[4].offset, t[5].offset, out_);
        if (cache) {
            cache->input = input;
            cache->act1 = std::move(a1);
            cache->act2 = std::move(a2);
        }
        return logits;
    }

    /// Parameter gradient (same packed layout) for one forward pass recorded
    /// in `cache`, given the loss gradient at the logits.
    std::vector<T> backward(const Cache& cache, const Field<T>& grad_logits) const {
        if (grad_logits.channels() != out_ || !(grad_logits.dims() == cache.input.dims()))
            throw std::invalid_argument("TinyNet::backward: gradient shape mismatch");
        const auto t = tensors();
        std::vector<T> grad(params_.size(), T(0));

        Field<T> da2 = conv_backward(cache.act2, grad_logits, t[4].offset, t[5].offset, out_,
                                     h2_, grad);
        relu_backward_inplace(cache.act2, da2);
        Field<T> da1 =
            conv_backward(cache.act1, da2, t[2].offset, t[3].offset, h2_, h1_, grad);
        relu_backward_inplace(cache.act1, da1);
        conv_backward_params_only(cache.input, da1, t[0].offset, t[1].offset, h1_, 1, grad);
        return grad;
    }

private:
    Field<T> conv_layer(const Field<T>& in, std::size_t w_off, std::size_t b_off,
                        std::size_t out_ch) const {
        Field<T> out(out_ch, in.dims());
        const std::size_t in_ch = in.channels();
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            auto ch = out.channel(oc);
            std::fill(ch.begin(), ch.end(), params_[b_off + oc]);
            for (std::size_t ic = 0; ic < in_ch; ++ic)
                detail::conv3_accumulate(in.channel(ic), in.dims(),
                                         params_.data() + w_off + (oc * in_ch + ic) * 27, ch);
        }
        return out;
    }

    /// Computes weight/bias gradients and returns the gradient w.r.t. the
    /// layer input (transposed convolution of dy).
    Field<T> conv_backward(const Field<T>& in, const Field<T>& dy, std::size_t w_off,
                           std::size_t b_off, std::size_t out_ch, std::size_t in_ch,
                           std::vector<T>& grad) const {
        conv_backward_params_only(in, dy, w_off, b_off, out_ch, in_ch, grad);
        Field<T> dx(in_ch, in.dims());
        T flipped[27];
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            auto ch = dx.channel(ic);
            for (std::size_t oc = 0; oc < out_ch; ++oc) {
                detail::flip_kernel(params_.data() + w_off + (oc * in_ch + ic) * 27, flipped);
                detail::conv3_accumulate(dy.channel(oc), dy.dims(), flipped, ch);
            }
        }
        return dx;
    }

    void conv_backward_params_only(const Field<T>& in, const Field<T>& dy, std::size_t w_off,
                                   std::size_t b_off, std::size_t out_ch, std::size_t in_ch,
                                   std::vector<T>& grad) const {
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            auto dyc = dy.channel(oc);
            double bacc = 0.0;
            for (T v : dyc)
                bacc += static_cast<double>(v);
            grad[b_off + oc] += static_cast<T>(bacc);
            for (std::size_t ic = 0; ic < in_ch; ++ic)
                detail::conv3_weight_grad(in.channel(ic), dyc, in.dims(),
                                          grad.data() + w_off + (oc * in_ch + ic) * 27);
        }
    }

    static void relu_inplace(Field<T>& f) {
        T* p = f.data();
        for (std::size_t i = 0; i < f.size(); ++i)
            if (p[i] < T(0))
                p[i] = T(0);
    }

    /// dx *= (activation > 0), where `act` is the post-ReLU output.
    static void relu_backward_inplace(const Field<T>& act, Field<T>& dx) {
        const T* a = act.data();
        T* g = dx.data();
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (a[i] <= T(0))
                g[i] = T(0);
    }

    std::size_t out_, h1_, h2_;
    std::vector<T> params_;
};

} // namespace salt
