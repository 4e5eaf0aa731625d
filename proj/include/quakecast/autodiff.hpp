// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over dense row-major double tensors.
//
// Every operation returns a new Tensor. When at least one input requires a
// gradient, the result remembers its inputs and a backward rule, so the graph
// is rebuilt on every forward pass and released when the last Tensor handle
// referencing it goes away.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "quakecast/error.hpp"

namespace quakecast::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    if (shape.size() == 1) os << ',';
    os << ')';
    return os.str();
}

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::string_view op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Gradient buffer of input `i`, or nullptr when that input is not tracked.
inline double* input_grad(Node& self, std::size_t i) {
    Node& in = *self.inputs[i];
    if (!in.requires_grad) return nullptr;
    in.ensure_grad();
    return in.grad.data();
}

inline const double* input_value(const Node& self, std::size_t i) {
    return self.inputs[i]->value.data();
}

// C[M x N] += A[M x K] * B[K x N]; all row-major and contiguous.
inline void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                     double* c) {
    constexpr std::size_t kBlock = 64;
    for (std::size_t k0 = 0; k0 < k; k0 += kBlock) {
        const std::size_t k1 = std::min(k, k0 + kBlock);
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            const double* arow = a + i * k;
            for (std::size_t p = k0; p < k1; ++p) {
                const double av = arow[p];
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
}

inline std::vector<double> transposed(const double* a, std::size_t rows, std::size_t cols) {
    std::vector<double> t(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
    return t;
}

Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward);

}  // namespace detail

/// Dense n-dimensional value participating in reverse-mode gradient tracking.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->value = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), 0.0, requires_grad);
    }

    static Tensor full(Shape shape, double v, bool requires_grad = false) {
        const std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor(Shape{1}, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }

    const Shape& shape() const { return node().shape; }
    std::size_t dim() const { return node().shape.size(); }
    std::size_t extent(std::size_t axis) const { return node().shape.at(axis); }
    std::size_t numel() const { return node().value.size(); }

    std::span<const double> data() const { return node().value; }

    /// Mutable view of the values. Intended for leaves (parameter updates,
    /// finite-difference probes); mutating an interior node does not
    /// invalidate gradients already recorded downstream.
    std::span<double> data_mut() { return node().value; }

    double operator[](std::size_t i) const { return node().value.at(i); }

    double item() const {
        if (numel() != 1) throw UsageError("item() on tensor of shape " + shape_str(shape()));
        return node().value[0];
    }

    bool requires_grad() const { return node().requires_grad; }
    bool is_leaf() const { return node().is_leaf; }
    std::string_view op() const { return node().op; }

    Tensor& set_requires_grad(bool on) {
        if (!node().is_leaf) throw UsageError("requires_grad can only be changed on leaf tensors");
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node().grad.size() == node().value.size(); }

    /// Accumulated gradient; empty when backward never reached this tensor.
    std::span<const double> grad() const {
        if (!has_grad()) return {};
        return node().grad;
    }

    void zero_grad() {
        if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    /// Values copied into a fresh leaf with no history.
    Tensor detach() const { return Tensor(shape(), node().value, false); }

    /// Propagates dThis/dX into every reachable tensor that requires a gradient.
    /// Leaf gradients accumulate across calls until zero_grad().
    void backward() const {
        if (numel() != 1) {
            throw UsageError("backward() requires a scalar, got shape " + shape_str(shape()));
        }
        if (!requires_grad()) throw UsageError("backward() on a tensor that does not require grad");

        std::vector<detail::Node*> order;
        std::unordered_set<detail::Node*> seen;
        std::vector<std::pair<detail::Node*, std::size_t>> stack;
        stack.emplace_back(node_.get(), 0);
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->inputs.size()) {
                detail::Node* child = n->inputs[next++].get();
                if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        for (detail::Node* n : order) {
            if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
        }
        node_->ensure_grad();
        node_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            detail::Node* n = *it;
            if (!n->is_leaf && n->backward) n->backward(*n);
        }
    }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

private:
    friend Tensor detail::make_result(Shape, std::vector<double>, std::string_view,
                                      std::vector<Tensor>, std::function<void(detail::Node&)>);

    detail::Node& node() const {
        if (!node_) throw UsageError("use of an undefined tensor");
        return *node_;
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(value), false);
    const bool tracked = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor& t) { return t.requires_grad(); });
    Node& n = *out.node_;
    n.op = op;
    if (tracked) {
        n.requires_grad = true;
        n.is_leaf = false;
        n.inputs.reserve(inputs.size());
        for (auto& t : inputs) n.inputs.push_back(t.node_);
        n.backward = std::move(backward);
    }
    return out;
}

inline void require_same_numel_grad(const Node& self) {
    if (self.grad.size() != self.value.size()) throw UsageError("gradient buffer missing");
}

// Returns true when `small` is a trailing suffix of `big`.
inline bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <class Fwd, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view op, Fwd fwd, DA da, DB db) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    Shape out_shape;
    if (sa == sb || is_suffix(sb, sa)) {
        out_shape = sa;
    } else if (is_suffix(sa, sb)) {
        out_shape = sb;
    } else {
        throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                         shape_str(sb));
    }
    const std::size_t n = shape_numel(out_shape);
    const std::size_t na = a.numel();
    const std::size_t nb = b.numel();
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i % na], bv[i % nb]);
    return make_result(std::move(out_shape), std::move(out), op, {a, b},
                       [na, nb, da, db](Node& self) {
                           const double* x = input_value(self, 0);
                           const double* y = input_value(self, 1);
                           double* gx = input_grad(self, 0);
                           double* gy = input_grad(self, 1);
                           const std::size_t n = self.value.size();
                           for (std::size_t i = 0; i < n; ++i) {
                               const double g = self.grad[i];
                               const double xv = x[i % na];
                               const double yv = y[i % nb];
                               if (gx) gx[i % na] += g * da(xv, yv, self.value[i]);
                               if (gy) gy[i % nb] += g * db(xv, yv, self.value[i]);
                           }
                       });
}

template <class Fwd, class D>
Tensor unary(const Tensor& a, std::string_view op, Fwd fwd, D deriv) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return make_result(a.shape(), std::move(out), op, {a}, [deriv](Node& self) {
        double* gx = input_grad(self, 0);
        if (!gx) return;
        const double* x = input_value(self, 0);
        for (std::size_t i = 0; i < self.value.size(); ++i)
            gx[i] += self.grad[i] * deriv(x[i], self.value[i]);
    });
}

// Splits `shape` around `axis` into (outer, extent, inner) counts.
inline void axis_split(const Shape& shape, std::size_t axis, std::size_t& outer, std::size_t& ext,
                       std::size_t& inner) {
    if (axis >= shape.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape));
    }
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    ext = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y, double) { return 1.0 / y; },
        [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

inline Tensor scale(const Tensor& a, double s) {
    return detail::unary(
        a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return detail::unary(
        a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

inline Tensor square(const Tensor& a) {
    return detail::unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor abs(const Tensor& a) {
    return detail::unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------- activations

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(
        a, "sigmoid", [](double x) { return sigmoid_scalar(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Softmax normalized along `axis`, with max-subtraction.
inline Tensor softmax(const Tensor& a, std::size_t axis) {
    std::size_t outer, ext, inner;
    detail::axis_split(a.shape(), axis, outer, ext, inner);
    auto x = a.data();
    std::vector<double> y(x.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * ext * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < ext; ++e) mx = std::max(mx, x[base + e * inner]);
            double sum = 0.0;
            for (std::size_t e = 0; e < ext; ++e) {
                const double v = std::exp(x[base + e * inner] - mx);
                y[base + e * inner] = v;
                sum += v;
            }
            for (std::size_t e = 0; e < ext; ++e) y[base + e * inner] /= sum;
        }
    }
    return detail::make_result(a.shape(), std::move(y), "softmax", {a},
                               [outer, ext, inner](detail::Node& self) {
                                   double* gx = detail::input_grad(self, 0);
                                   if (!gx) return;
                                   const auto& y = self.value;
                                   const auto& gy = self.grad;
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       for (std::size_t in = 0; in < inner; ++in) {
                                           const std::size_t base = o * ext * inner + in;
                                           double dot = 0.0;
                                           for (std::size_t e = 0; e < ext; ++e)
                                               dot += gy[base + e * inner] * y[base + e * inner];
                                           for (std::size_t e = 0; e < ext; ++e) {
                                               const std::size_t k = base + e * inner;
                                               gx[k] += y[k] * (gy[k] - dot);
                                           }
                                       }
                                   }
                               });
}

// ---------------------------------------------------------------- linear algebra

/// (M, K) x (K, N) -> (M, N).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<double> c(m * n, 0.0);
    detail::gemm_acc(m, n, k, a.data().data(), b.data().data(), c.data());
    return detail::make_result({m, n}, std::move(c), "matmul", {a, b},
                               [m, n, k](detail::Node& self) {
                                   const double* av = detail::input_value(self, 0);
                                   const double* bv = detail::input_value(self, 1);
                                   if (double* ga = detail::input_grad(self, 0)) {
                                       const auto bt = detail::transposed(bv, k, n);
                                       detail::gemm_acc(m, k, n, self.grad.data(), bt.data(), ga);
                                   }
                                   if (double* gb = detail::input_grad(self, 1)) {
                                       const auto at = detail::transposed(av, m, k);
                                       detail::gemm_acc(k, n, m, at.data(), self.grad.data(), gb);
                                   }
                               });
}

/// (M, K) x (N, K)^T -> (M, N).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2 || a.extent(1) != b.extent(1)) {
        throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    const auto bt = detail::transposed(b.data().data(), n, k);
    std::vector<double> c(m * n, 0.0);
    detail::gemm_acc(m, n, k, a.data().data(), bt.data(), c.data());
    return detail::make_result({m, n}, std::move(c), "matmul_nt", {a, b},
                               [m, n, k](detail::Node& self) {
                                   const double* av = detail::input_value(self, 0);
                                   const double* bv = detail::input_value(self, 1);
                                   // dA = dC * B ; dB = dC^T * A
                                   if (double* ga = detail::input_grad(self, 0))
                                       detail::gemm_acc(m, k, n, self.grad.data(), bv, ga);
                                   if (double* gb = detail::input_grad(self, 1)) {
                                       const auto gt = detail::transposed(self.grad.data(), m, n);
                                       detail::gemm_acc(n, k, m, gt.data(), av, gb);
                                   }
                               });
}

/// Batched (B, M, K) x (B, K, N) -> (B, M, N).
inline Tensor bmm(const Tensor& a, const Tensor& b) {
    if (a.dim() != 3 || b.dim() != 3 || a.extent(0) != b.extent(0) || a.extent(2) != b.extent(1)) {
        throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t bs = a.extent(0), m = a.extent(1), k = a.extent(2), n = b.extent(2);
    std::vector<double> c(bs * m * n, 0.0);
    for (std::size_t i = 0; i < bs; ++i)
        detail::gemm_acc(m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n,
                         c.data() + i * m * n);
    return detail::make_result(
        {bs, m, n}, std::move(c), "bmm", {a, b}, [bs, m, n, k](detail::Node& self) {
            const double* av = detail::input_value(self, 0);
            const double* bv = detail::input_value(self, 1);
            double* ga = detail::input_grad(self, 0);
            double* gb = detail::input_grad(self, 1);
            for (std::size_t i = 0; i < bs; ++i) {
                const double* gc = self.grad.data() + i * m * n;
                if (ga) {
                    const auto bt = detail::transposed(bv + i * k * n, k, n);
                    detail::gemm_acc(m, k, n, gc, bt.data(), ga + i * m * k);
                }
                if (gb) {
                    const auto at = detail::transposed(av + i * m * k, m, k);
                    detail::gemm_acc(k, n, m, at.data(), gc, gb + i * k * n);
                }
            }
        });
}

// ---------------------------------------------------------------- shape ops

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
    }
    std::vector<double> v(a.data().begin(), a.data().end());
    return detail::make_result(std::move(shape), std::move(v), "reshape", {a},
                               [](detail::Node& self) {
                                   double* gx = detail::input_grad(self, 0);
                                   if (!gx) return;
                                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                                       gx[i] += self.grad[i];
                               });
}

/// Reorders axes: output axis i is input axis `axes[i]`.
inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const Shape& in = a.shape();
    const std::size_t nd = in.size();
    std::vector<bool> used(nd, false);
    if (axes.size() != nd) throw ShapeError("permute: axis list does not match " + shape_str(in));
    for (auto ax : axes) {
        if (ax >= nd || used[ax]) throw ShapeError("permute: invalid axis list for " + shape_str(in));
        used[ax] = true;
    }
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = in[axes[i]];
    std::vector<std::size_t> in_strides(nd, 1);
    for (std::size_t i = nd; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
    // map[out flat index] = in flat index
    const std::size_t n = a.numel();
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(nd, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < nd; ++d) src += idx[d] * in_strides[axes[d]];
        map[o] = src;
        for (std::size_t d = nd; d-- > 0;) {
            if (++idx[d] < out_shape[d]) break;
            idx[d] = 0;
        }
    }
    auto x = a.data();
    std::vector<double> y(n);
    for (std::size_t o = 0; o < n; ++o) y[o] = x[map[o]];
    return detail::make_result(std::move(out_shape), std::move(y), "permute", {a},
                               [map = std::move(map)](detail::Node& self) {
                                   double* gx = detail::input_grad(self, 0);
                                   if (!gx) return;
                                   for (std::size_t o = 0; o < map.size(); ++o)
                                       gx[map[o]] += self.grad[o];
                               });
}

/// Contiguous range [start, start + length) along `axis`.
inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    std::size_t outer, ext, inner;
    detail::axis_split(a.shape(), axis, outer, ext, inner);
    if (length == 0 || start + length > ext) {
        throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range on axis " + std::to_string(axis) + " of " +
                         shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = length;
    auto x = a.data();
    std::vector<double> y(outer * length * inner);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.begin() + (o * ext + start) * inner, length * inner,
                    y.begin() + o * length * inner);
    return detail::make_result(std::move(out_shape), std::move(y), "slice", {a},
                               [outer, ext, inner, start, length](detail::Node& self) {
                                   double* gx = detail::input_grad(self, 0);
                                   if (!gx) return;
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       double* dst = gx + (o * ext + start) * inner;
                                       const double* src = self.grad.data() + o * length * inner;
                                       for (std::size_t i = 0; i < length * inner; ++i)
                                           dst[i] += src[i];
                                   }
                               });
}

/// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of an empty list");
    const Shape& ref = parts.front().shape();
    if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
    Shape out_shape = ref;
    out_shape[axis] = 0;
    std::vector<std::size_t> exts;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t d = 0; ok && d < s.size(); ++d)
            if (d != axis && s[d] != ref[d]) ok = false;
        if (!ok) {
            throw ShapeError("concat: incompatible shapes " + shape_str(ref) + " and " +
                             shape_str(s));
        }
        exts.push_back(s[axis]);
        out_shape[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
    for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];
    const std::size_t total = out_shape[axis];
    std::vector<double> y(outer * total * inner);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto x = parts[p].data();
        const std::size_t chunk = exts[p] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(x.begin() + o * chunk, chunk, y.begin() + (o * total + offset) * inner);
        offset += exts[p];
    }
    return detail::make_result(std::move(out_shape), std::move(y), "concat", parts,
                               [exts, outer, inner, total](detail::Node& self) {
                                   std::size_t offset = 0;
                                   for (std::size_t p = 0; p < exts.size(); ++p) {
                                       const std::size_t chunk = exts[p] * inner;
                                       if (double* gx = detail::input_grad(self, p)) {
                                           for (std::size_t o = 0; o < outer; ++o) {
                                               const double* src =
                                                   self.grad.data() + (o * total + offset) * inner;
                                               double* dst = gx + o * chunk;
                                               for (std::size_t i = 0; i < chunk; ++i)
                                                   dst[i] += src[i];
                                           }
                                       }
                                       offset += exts[p];
                                   }
                               });
}

// ---------------------------------------------------------------- reductions

inline Tensor reduce_sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return detail::make_result({1}, {s}, "reduce_sum", {a}, [](detail::Node& self) {
        double* gx = detail::input_grad(self, 0);
        if (!gx) return;
        const double g = self.grad[0];
        const std::size_t n = self.inputs[0]->value.size();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
}

inline Tensor reduce_mean(const Tensor& a) {
    if (a.numel() == 0) throw DomainError("reduce_mean of an empty tensor");
    return scale(reduce_sum(a), 1.0 / static_cast<double>(a.numel()));
}

/// Sums out `axis`; the axis is removed from the result shape.
inline Tensor reduce_sum(const Tensor& a, std::size_t axis) {
    std::size_t outer, ext, inner;
    detail::axis_split(a.shape(), axis, outer, ext, inner);
    Shape out_shape = a.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    auto x = a.data();
    std::vector<double> y(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < ext; ++e)
            for (std::size_t in = 0; in < inner; ++in)
                y[o * inner + in] += x[(o * ext + e) * inner + in];
    return detail::make_result(std::move(out_shape), std::move(y), "reduce_sum_axis", {a},
                               [outer, ext, inner](detail::Node& self) {
                                   double* gx = detail::input_grad(self, 0);
                                   if (!gx) return;
                                   for (std::size_t o = 0; o < outer; ++o)
                                       for (std::size_t e = 0; e < ext; ++e)
                                           for (std::size_t in = 0; in < inner; ++in)
                                               gx[(o * ext + e) * inner + in] +=
                                                   self.grad[o * inner + in];
                               });
}

inline Tensor reduce_mean(const Tensor& a, std::size_t axis) {
    const std::size_t ext = a.shape().at(axis);
    return scale(reduce_sum(a, axis), 1.0 / static_cast<double>(ext));
}

}  // namespace quakecast::ad
