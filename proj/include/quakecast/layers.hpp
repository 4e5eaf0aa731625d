// SPDX-License-Identifier: Apache-2.0
#pragma once

// Feedforward building blocks: 1-D convolution, max pooling, batch
// normalization, dropout, dense and flatten. Sequence tensors are laid out as
// (batch, channels, length) for the convolutional stack.

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "quakecast/autodiff.hpp"
#include "quakecast/module.hpp"

namespace quakecast::nn {

enum class Activation { Linear, Relu, Sigmoid, Tanh };

inline Tensor activate(const Tensor& x, Activation act) {
    switch (act) {
        case Activation::Relu: return ad::relu(x);
        case Activation::Sigmoid: return ad::sigmoid(x);
        case Activation::Tanh: return ad::tanh(x);
        case Activation::Linear: break;
    }
    return x;
}

/// Geometry of "same" padding for a window of `kernel` taps moved by `stride`.
/// The output length is ceil(length / stride); when the total padding is odd
/// the extra element goes on the right.
struct SamePadding {
    std::size_t out_length;
    std::size_t left;
    std::size_t right;
};

inline SamePadding same_padding(std::size_t length, std::size_t kernel, std::size_t stride) {
    if (kernel == 0 || stride == 0) throw ConfigError("kernel and stride must be >= 1");
    const std::size_t out = (length + stride - 1) / stride;
    const std::size_t needed = (out - 1) * stride + kernel;
    const std::size_t total = needed > length ? needed - length : 0;
    return {out, total / 2, total - total / 2};
}

// ---------------------------------------------------------------- conv1d

/// Cross-correlation of x (B, Cin, L) with w (Cout, Cin, K) plus bias (Cout),
/// zero "same" padding.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
    if (x.dim() != 3 || w.dim() != 3 || x.extent(1) != w.extent(1)) {
        throw ShapeError("conv1d: input " + ad::shape_str(x.shape()) +
                         " does not match weights " + ad::shape_str(w.shape()));
    }
    const std::size_t batch = x.extent(0), cin = x.extent(1), len = x.extent(2);
    const std::size_t cout = w.extent(0), k = w.extent(2);
    if (bias.numel() != cout) {
        throw ShapeError("conv1d: bias " + ad::shape_str(bias.shape()) + " does not match weights " +
                         ad::shape_str(w.shape()));
    }
    const SamePadding pad = same_padding(len, k, stride);
    const std::size_t lo = pad.out_length;
    const std::size_t rows = cin * k;

    auto xv = x.data();
    std::vector<double> cols(batch * rows * lo, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        double* cb = cols.data() + b * rows * lo;
        for (std::size_t c = 0; c < cin; ++c) {
            const double* xr = xv.data() + (b * cin + c) * len;
            for (std::size_t t = 0; t < k; ++t) {
                double* dst = cb + (c * k + t) * lo;
                for (std::size_t o = 0; o < lo; ++o) {
                    const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + t) -
                                               static_cast<std::ptrdiff_t>(pad.left);
                    if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dst[o] = xr[src];
                }
            }
        }
    }

    std::vector<double> y(batch * cout * lo);
    auto bv = bias.data();
    for (std::size_t b = 0; b < batch; ++b) {
        double* yb = y.data() + b * cout * lo;
        for (std::size_t c = 0; c < cout; ++c) std::fill_n(yb + c * lo, lo, bv[c]);
        ad::detail::gemm_acc(cout, lo, rows, w.data().data(), cols.data() + b * rows * lo, yb);
    }

    return ad::detail::make_result(
        {batch, cout, lo}, std::move(y), "conv1d", {x, w, bias},
        [=, cols = std::move(cols)](ad::detail::Node& self) {
            const double* wv = ad::detail::input_value(self, 1);
            double* gx = ad::detail::input_grad(self, 0);
            double* gw = ad::detail::input_grad(self, 1);
            double* gb = ad::detail::input_grad(self, 2);
            const auto wt = gx ? ad::detail::transposed(wv, cout, rows) : std::vector<double>{};
            std::vector<double> dcols(gx ? rows * lo : 0);
            for (std::size_t b = 0; b < batch; ++b) {
                const double* gy = self.grad.data() + b * cout * lo;
                const double* cb = cols.data() + b * rows * lo;
                if (gb) {
                    for (std::size_t c = 0; c < cout; ++c)
                        for (std::size_t o = 0; o < lo; ++o) gb[c] += gy[c * lo + o];
                }
                if (gw) {
                    const auto ct = ad::detail::transposed(cb, rows, lo);
                    ad::detail::gemm_acc(cout, rows, lo, gy, ct.data(), gw);
                }
                if (gx) {
                    std::fill(dcols.begin(), dcols.end(), 0.0);
                    ad::detail::gemm_acc(rows, lo, cout, wt.data(), gy, dcols.data());
                    for (std::size_t c = 0; c < cin; ++c) {
                        double* gxr = gx + (b * cin + c) * len;
                        for (std::size_t t = 0; t < k; ++t) {
                            const double* src = dcols.data() + (c * k + t) * lo;
                            for (std::size_t o = 0; o < lo; ++o) {
                                const std::ptrdiff_t at = static_cast<std::ptrdiff_t>(o * stride + t) -
                                                          static_cast<std::ptrdiff_t>(pad.left);
                                if (at >= 0 && at < static_cast<std::ptrdiff_t>(len))
                                    gxr[at] += src[o];
                            }
                        }
                    }
                }
            }
        });
}

struct Conv1D {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 0;
    std::size_t stride = 1;
    Tensor weight;  // (out, in, kernel)
    Tensor bias;    // (out)

    Conv1D() = default;
    Conv1D(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, Rng& rng)
        : in_channels(in), out_channels(out), kernel_size(kernel), stride(stride_) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in * kernel));
        weight = uniform_parameter({out, in, kernel}, bound, rng);
        bias = Tensor::zeros({out}, true);
    }

    Tensor forward(const Tensor& x) const { return conv1d(x, weight, bias, stride); }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

// ---------------------------------------------------------------- max pooling

/// Windowed maximum over the last axis of (B, C, L) with "same" padding
/// (pad value -inf). Gradient goes to the first maximal element of each window.
inline Tensor maxpool1d(const Tensor& x, std::size_t size, std::size_t stride) {
    if (x.dim() != 3) throw ShapeError("maxpool1d expects (B, C, L), got " + ad::shape_str(x.shape()));
    const std::size_t rows = x.extent(0) * x.extent(1), len = x.extent(2);
    const SamePadding pad = same_padding(len, size, stride);
    const std::size_t lo = pad.out_length;
    auto xv = x.data();
    std::vector<double> y(rows * lo);
    std::vector<std::size_t> arg(rows * lo);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < lo; ++o) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_at = r * len;
            for (std::size_t t = 0; t < size; ++t) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + t) -
                                           static_cast<std::ptrdiff_t>(pad.left);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
                const double v = xv[r * len + static_cast<std::size_t>(src)];
                if (v > best) {
                    best = v;
                    best_at = r * len + static_cast<std::size_t>(src);
                }
            }
            y[r * lo + o] = best;
            arg[r * lo + o] = best_at;
        }
    }
    return ad::detail::make_result({x.extent(0), x.extent(1), lo}, std::move(y), "maxpool1d", {x},
                                   [arg = std::move(arg)](ad::detail::Node& self) {
                                       double* gx = ad::detail::input_grad(self, 0);
                                       if (!gx) return;
                                       for (std::size_t i = 0; i < arg.size(); ++i)
                                           gx[arg[i]] += self.grad[i];
                                   });
}

struct MaxPool1D {
    std::size_t size = 2;
    std::size_t stride = 1;

    Tensor forward(const Tensor& x) const { return maxpool1d(x, size, stride); }
};

// ---------------------------------------------------------------- batch norm

/// Per-channel normalization of (B, C) or (B, C, L); statistics are taken over
/// every axis except the channel axis.
struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double epsilon = 1e-5;
    double momentum = 0.9;

    BatchNorm() = default;
    explicit BatchNorm(std::size_t channels, double eps = 1e-5, double mom = 0.9)
        : gamma(constant_parameter({channels}, 1.0)),
          beta(constant_parameter({channels}, 0.0)),
          running_mean(channels, 0.0),
          running_var(channels, 1.0),
          epsilon(eps),
          momentum(mom) {}

    std::size_t channels() const { return running_mean.size(); }

    Tensor forward(const Tensor& x, Mode mode) {
        if (x.dim() < 2 || x.extent(1) != channels()) {
            throw ShapeError("batchnorm: input " + ad::shape_str(x.shape()) + " does not have " +
                             std::to_string(channels()) + " channels");
        }
        return mode == Mode::Train ? forward_train(x) : forward_eval(x);
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }

    void collect_buffers(const std::string& prefix, BufferList& out) {
        out.push_back({prefix + ".running_mean", &running_mean});
        out.push_back({prefix + ".running_var", &running_var});
    }

private:
    Tensor forward_train(const Tensor& x) {
        const std::size_t batch = x.extent(0), ch = x.extent(1);
        if (batch < 2) throw DomainError("batchnorm in train mode needs a batch of at least 2");
        const std::size_t inner = x.numel() / (batch * ch);
        const double m = static_cast<double>(batch * inner);
        auto xv = x.data();
        auto g = gamma.data();
        auto bt = beta.data();

        std::vector<double> mean(ch, 0.0), var(ch, 0.0), inv_std(ch);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t i = 0; i < inner; ++i) mean[c] += xv[(b * ch + c) * inner + i];
        for (auto& v : mean) v /= m;
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t i = 0; i < inner; ++i) {
                    const double d = xv[(b * ch + c) * inner + i] - mean[c];
                    var[c] += d * d;
                }
        for (std::size_t c = 0; c < ch; ++c) {
            var[c] /= m;
            inv_std[c] = 1.0 / std::sqrt(var[c] + epsilon);
        }

        std::vector<double> xhat(xv.size()), y(xv.size());
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t k = (b * ch + c) * inner + i;
                    xhat[k] = (xv[k] - mean[c]) * inv_std[c];
                    y[k] = g[c] * xhat[k] + bt[c];
                }

        for (std::size_t c = 0; c < ch; ++c) {
            running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean[c];
            running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var[c];
        }

        return ad::detail::make_result(
            x.shape(), std::move(y), "batchnorm_train", {x, gamma, beta},
            [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](ad::detail::Node& self) {
                const double* gv = ad::detail::input_value(self, 1);
                double* gx = ad::detail::input_grad(self, 0);
                double* gg = ad::detail::input_grad(self, 1);
                double* gbeta = ad::detail::input_grad(self, 2);
                const auto& dy = self.grad;
                std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < ch; ++c)
                        for (std::size_t i = 0; i < inner; ++i) {
                            const std::size_t k = (b * ch + c) * inner + i;
                            sum_dy[c] += dy[k];
                            sum_dy_xhat[c] += dy[k] * xhat[k];
                        }
                if (gbeta)
                    for (std::size_t c = 0; c < ch; ++c) gbeta[c] += sum_dy[c];
                if (gg)
                    for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_dy_xhat[c];
                if (gx) {
                    for (std::size_t b = 0; b < batch; ++b)
                        for (std::size_t c = 0; c < ch; ++c)
                            for (std::size_t i = 0; i < inner; ++i) {
                                const std::size_t k = (b * ch + c) * inner + i;
                                gx[k] += gv[c] * inv_std[c] / m *
                                         (m * dy[k] - sum_dy[c] - xhat[k] * sum_dy_xhat[c]);
                            }
                }
            });
    }

    Tensor forward_eval(const Tensor& x) const {
        const std::size_t batch = x.extent(0), ch = x.extent(1);
        const std::size_t inner = batch * ch == 0 ? 0 : x.numel() / (batch * ch);
        auto xv = x.data();
        auto g = gamma.data();
        auto bt = beta.data();
        std::vector<double> inv_std(ch), xhat(xv.size()), y(xv.size());
        for (std::size_t c = 0; c < ch; ++c) inv_std[c] = 1.0 / std::sqrt(running_var[c] + epsilon);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < ch; ++c)
                for (std::size_t i = 0; i < inner; ++i) {
                    const std::size_t k = (b * ch + c) * inner + i;
                    xhat[k] = (xv[k] - running_mean[c]) * inv_std[c];
                    y[k] = g[c] * xhat[k] + bt[c];
                }
        return ad::detail::make_result(
            x.shape(), std::move(y), "batchnorm_eval", {x, gamma, beta},
            [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](ad::detail::Node& self) {
                const double* gv = ad::detail::input_value(self, 1);
                double* gx = ad::detail::input_grad(self, 0);
                double* gg = ad::detail::input_grad(self, 1);
                double* gbeta = ad::detail::input_grad(self, 2);
                for (std::size_t b = 0; b < batch; ++b)
                    for (std::size_t c = 0; c < ch; ++c)
                        for (std::size_t i = 0; i < inner; ++i) {
                            const std::size_t k = (b * ch + c) * inner + i;
                            const double d = self.grad[k];
                            if (gbeta) gbeta[c] += d;
                            if (gg) gg[c] += d * xhat[k];
                            if (gx) gx[k] += d * gv[c] * inv_std[c];
                        }
            });
    }
};

// ---------------------------------------------------------------- dropout

/// Inverted dropout: in Train mode each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1 - rate). Eval mode is the identity.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
    if (mode == Mode::Eval || rate == 0.0) return x;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    auto xv = x.data();
    std::vector<double> mask(xv.size()), y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = u(rng) < rate ? 0.0 : keep_scale;
        y[i] = xv[i] * mask[i];
    }
    return ad::detail::make_result(x.shape(), std::move(y), "dropout", {x},
                                   [mask = std::move(mask)](ad::detail::Node& self) {
                                       double* gx = ad::detail::input_grad(self, 0);
                                       if (!gx) return;
                                       for (std::size_t i = 0; i < mask.size(); ++i)
                                           gx[i] += self.grad[i] * mask[i];
                                   });
}

struct Dropout {
    double rate = 0.0;

    Tensor forward(const Tensor& x, Mode mode, Rng& rng) const { return dropout(x, rate, mode, rng); }
};

// ---------------------------------------------------------------- dense

/// y = activation(x W + b) for x (B, in), W (in, out), b (out).
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
    if (x.dim() != 2 || w.dim() != 2 || x.extent(1) != w.extent(0)) {
        throw ShapeError("dense: input " + ad::shape_str(x.shape()) + " does not match weights " +
                         ad::shape_str(w.shape()));
    }
    return activate(ad::add(ad::matmul(x, w), b), act);
}

struct Dense {
    Tensor weight;  // (in, out)
    Tensor bias;    // (out)
    Activation activation = Activation::Linear;

    Dense() = default;
    Dense(std::size_t in, std::size_t out, Activation act, Rng& rng) : activation(act) {
        const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        weight = uniform_parameter({in, out}, bound, rng);
        bias = Tensor::zeros({out}, true);
    }

    std::size_t in_features() const { return weight.extent(0); }
    std::size_t out_features() const { return weight.extent(1); }

    Tensor forward(const Tensor& x) const { return dense(x, weight, bias, activation); }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

// ---------------------------------------------------------------- flatten

enum class FlattenMode {
    Features,  // (B, C, L) -> (B, C * L)
    Sequence,  // (B, C, L) -> (B, L, C), keeps the time axis for recurrent layers
};

inline Tensor flatten(const Tensor& x, FlattenMode mode) {
    if (x.dim() < 2) throw ShapeError("flatten needs at least 2 axes, got " + ad::shape_str(x.shape()));
    if (mode == FlattenMode::Sequence) {
        if (x.dim() != 3) throw ShapeError("sequence flatten expects (B, C, L), got " + ad::shape_str(x.shape()));
        return ad::permute(x, {0, 2, 1});
    }
    return ad::reshape(x, {x.extent(0), x.numel() / x.extent(0)});
}

}  // namespace quakecast::nn
