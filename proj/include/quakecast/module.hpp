// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "quakecast/autodiff.hpp"

namespace quakecast::nn {

using ad::Shape;
using ad::Tensor;

/// Random engine used for initialization, dropout masks and shuffling.
using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

/// Non-trainable state that still belongs in a checkpoint (BN running stats).
struct NamedBuffer {
    std::string name;
    std::vector<double>* values;
};

using ParameterList = std::vector<NamedParameter>;
using BufferList = std::vector<NamedBuffer>;

/// Trainable leaf filled with U(-bound, bound).
inline Tensor uniform_parameter(Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

inline Tensor constant_parameter(Shape shape, double value) {
    return Tensor::full(std::move(shape), value, true);
}

}  // namespace quakecast::nn
