// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared helpers for the test suites: random tensors and a central-difference
// gradient checker.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "quakecast/autodiff.hpp"
#include "quakecast/module.hpp"

namespace qtest {

using quakecast::ad::Shape;
using quakecast::ad::Tensor;
using Rng = quakecast::nn::Rng;

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(quakecast::ad::shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v), grad);
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

/// Largest norm-wise relative error ||a - n|| / (||a|| + ||n||) over `inputs`,
/// comparing backprop gradients of L = sum(f() * R) for a random R against
/// central differences with step h.
inline double grad_check(const std::vector<Tensor>& inputs, const std::function<Tensor()>& f, Rng& rng,
                         double h = 1e-5) {
    const Tensor probe = f();
    const auto r = random_vector(probe.numel(), rng);
    auto weighted = [&](const Tensor& out) {
        double s = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) s += out.data()[i] * r[i];
        return s;
    };
    for (auto t : inputs) t.zero_grad();
    const Tensor out = f();
    const Tensor loss = quakecast::ad::reduce_sum(quakecast::ad::mul(out, Tensor(out.shape(), r)));
    loss.backward();

    double worst = 0.0;
    for (auto t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto w = t.data_mut();
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double keep = w[i];
            w[i] = keep + h;
            const double up = weighted(f());
            w[i] = keep - h;
            const double down = weighted(f());
            w[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
        }
        const double denom = std::sqrt(na) + std::sqrt(nn);
        if (denom > 1e-10) worst = std::max(worst, std::sqrt(diff) / denom);
    }
    return worst;
}

}  // namespace qtest
