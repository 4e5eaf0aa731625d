// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "quakecast/autodiff.hpp"
#include "quakecast/module.hpp"

namespace quakecast::nn {

/// How the two directions of a bidirectional layer are merged per timestep.
enum class Combine { Sum, Concat };

/// LSTM cell without peepholes. Each gate weight acts on the concatenation
/// [h_{t-1}, x_t], so every gate matrix has shape (hidden, hidden + input).
struct LSTMCell {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    Tensor w_forget, w_input, w_candidate, w_output;
    Tensor b_forget, b_input, b_candidate, b_output;

    /// All four gates fused as rows [forget; input; candidate; output].
    struct Stacked {
        Tensor weight;  // (4 * hidden, hidden + input)
        Tensor bias;    // (4 * hidden)
    };

    LSTMCell() = default;

    LSTMCell(std::size_t input, std::size_t hidden, Rng& rng) : input_size(input), hidden_size(hidden) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        const Shape ws{hidden, hidden + input};
        w_forget = uniform_parameter(ws, bound, rng);
        w_input = uniform_parameter(ws, bound, rng);
        w_candidate = uniform_parameter(ws, bound, rng);
        w_output = uniform_parameter(ws, bound, rng);
        b_forget = constant_parameter({hidden}, 1.0);
        b_input = constant_parameter({hidden}, 0.0);
        b_candidate = constant_parameter({hidden}, 0.0);
        b_output = constant_parameter({hidden}, 0.0);
    }

    Stacked stacked() const {
        return {ad::concat({w_forget, w_input, w_candidate, w_output}, 0),
                ad::concat({b_forget, b_input, b_candidate, b_output}, 0)};
    }

    /// One timestep: x (B, input), h and c (B, hidden) -> (h_t, c_t).
    std::pair<Tensor, Tensor> step(const Stacked& gates, const Tensor& x, const Tensor& h,
                                   const Tensor& c) const {
        if (x.dim() != 2 || x.extent(1) != input_size || h.dim() != 2 ||
            h.extent(1) != hidden_size || c.shape() != h.shape() || x.extent(0) != h.extent(0)) {
            throw ShapeError("lstm step: x " + ad::shape_str(x.shape()) + ", h " +
                             ad::shape_str(h.shape()) + ", c " + ad::shape_str(c.shape()) +
                             " do not fit a cell with input " + std::to_string(input_size) +
                             " and hidden " + std::to_string(hidden_size));
        }
        const std::size_t n = hidden_size;
        const Tensor z = ad::add(ad::matmul_nt(ad::concat({h, x}, 1), gates.weight), gates.bias);
        const Tensor f = ad::sigmoid(ad::slice(z, 1, 0, n));
        const Tensor i = ad::sigmoid(ad::slice(z, 1, n, n));
        const Tensor cand = ad::tanh(ad::slice(z, 1, 2 * n, n));
        const Tensor o = ad::sigmoid(ad::slice(z, 1, 3 * n, n));
        Tensor c_next = f * c + i * cand;
        Tensor h_next = o * ad::tanh(c_next);
        return {std::move(h_next), std::move(c_next)};
    }

    std::pair<Tensor, Tensor> step(const Tensor& x, const Tensor& h, const Tensor& c) const {
        return step(stacked(), x, h, c);
    }

    std::size_t parameter_count() const {
        return 4 * hidden_size * (hidden_size + input_size) + 4 * hidden_size;
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        out.push_back({prefix + ".w_forget", w_forget});
        out.push_back({prefix + ".w_input", w_input});
        out.push_back({prefix + ".w_candidate", w_candidate});
        out.push_back({prefix + ".w_output", w_output});
        out.push_back({prefix + ".b_forget", b_forget});
        out.push_back({prefix + ".b_input", b_input});
        out.push_back({prefix + ".b_candidate", b_candidate});
        out.push_back({prefix + ".b_output", b_output});
    }
};

inline std::pair<Tensor, Tensor> lstm_cell_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                                const LSTMCell& cell) {
    return cell.step(x, h, c);
}

/// Runs `cell` over x (B, T, F) from zero state. With `reverse` the sequence is
/// consumed last-to-first and the outputs are stored back in input time order.
inline Tensor lstm_forward(const Tensor& x, const LSTMCell& cell, bool reverse) {
    if (x.dim() != 3) throw ShapeError("lstm expects (B, T, F), got " + ad::shape_str(x.shape()));
    const std::size_t batch = x.extent(0), time = x.extent(1), feat = x.extent(2);
    if (time == 0) throw DomainError("lstm over an empty time axis");
    if (feat != cell.input_size) {
        throw ShapeError("lstm: input " + ad::shape_str(x.shape()) + " does not match cell input " +
                         std::to_string(cell.input_size));
    }
    const auto gates = cell.stacked();
    Tensor h = Tensor::zeros({batch, cell.hidden_size});
    Tensor c = Tensor::zeros({batch, cell.hidden_size});
    std::vector<Tensor> outputs(time);
    for (std::size_t s = 0; s < time; ++s) {
        const std::size_t t = reverse ? time - 1 - s : s;
        const Tensor xt = ad::reshape(ad::slice(x, 1, t, 1), {batch, feat});
        std::tie(h, c) = cell.step(gates, xt, h, c);
        outputs[t] = ad::reshape(h, {batch, 1, cell.hidden_size});
    }
    return time == 1 ? outputs.front() : ad::concat(outputs, 1);
}

/// Forward and backward LSTM passes merged per timestep.
struct BiLSTM {
    LSTMCell forward_cell;
    LSTMCell backward_cell;
    Combine combine = Combine::Sum;

    BiLSTM() = default;
    BiLSTM(std::size_t input, std::size_t hidden, Combine mode, Rng& rng)
        : forward_cell(input, hidden, rng), backward_cell(input, hidden, rng), combine(mode) {}

    std::size_t hidden_size() const { return forward_cell.hidden_size; }
    std::size_t output_width() const {
        return combine == Combine::Sum ? hidden_size() : 2 * hidden_size();
    }

    Tensor forward(const Tensor& x) const {
        const Tensor fwd = lstm_forward(x, forward_cell, false);
        const Tensor bwd = lstm_forward(x, backward_cell, true);
        return combine == Combine::Sum ? ad::add(fwd, bwd) : ad::concat({fwd, bwd}, 2);
    }

    void collect(const std::string& prefix, ParameterList& out) const {
        forward_cell.collect(prefix + ".fwd", out);
        backward_cell.collect(prefix + ".bwd", out);
    }
};

inline Tensor bilstm_forward(const Tensor& x, const BiLSTM& layer) { return layer.forward(x); }

}  // namespace quakecast::nn
