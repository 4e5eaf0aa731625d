// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "quakecast/autodiff.hpp"
#include "quakecast/module.hpp"

namespace quakecast::nn {

/// Additive temporal attention. Each timestep gets a scalar score
/// s_t = tanh(w . h_t + b); the scores are softmax-normalized over time and the
/// context is the weighted sum of the h_t.
struct AdditiveAttention {
    Tensor weight;  // (1, hidden)
    Tensor bias;    // (1)

    struct Output {
        Tensor context;  // (B, hidden)
        Tensor weights;  // (B, T)
    };

    AdditiveAttention() = default;
    AdditiveAttention(std::size_t hidden, Rng& rng)
        : weight(uniform_parameter({1, hidden}, 1.0 / std::sqrt(static_cast<double>(hidden)), rng)),
          bias(Tensor::zeros({1}, true)) {}

    std::size_t hidden_size() const { return weight.extent(1); }
    std::size_t parameter_count() const { return weight.numel() + bias.numel(); }

    Output forward(const Tensor& h) const {
        if (h.dim() != 3 || h.extent(2) != hidden_size()) {
            throw ShapeError("attention: input " + ad::shape_str(h.shape()) +
                             " does not match hidden size " + std::to_string(hidden_size()));
        }
        const std::size_t batch = h.extent(0), time = h.extent(1), hid = h.extent(2);
        if (time == 0) throw DomainError("attention over an empty time axis");
        const Tensor flat = ad::reshape(h, {batch * time, hid});
        const Tensor scores = ad::tanh(ad::add(ad::matmul_nt(flat, weight), bias));
        const Tensor a = ad::softmax(ad::reshape(scores, {batch, time}), 1);
        const Tensor ctx = ad::bmm(ad::reshape(a, {batch, 1, time}), h);
        return {ad::reshape(ctx, {batch, hid}), a};
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".weight", weight});
        out.push_back({prefix + ".bias", bias});
    }
};

inline AdditiveAttention::Output attention_forward(const Tensor& h, const AdditiveAttention& params) {
    return params.forward(h);
}

}  // namespace quakecast::nn
