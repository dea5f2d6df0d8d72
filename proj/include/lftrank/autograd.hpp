// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "lftrank/tensor.hpp"

namespace lftrank {

// Plain matrix kernels shared by forward and backward passes.
namespace kernels {

// a[m×k] · b[k×n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// a[m×k] · b[n×k]ᵀ
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// a[k×m]ᵀ · b[k×n]
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

}  // namespace kernels

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::uint32_t id = 0;

    bool valid() const { return tape != nullptr; }
    const Tensor<T>& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Ordered record of executed operations. Nodes are appended in execution
/// order, so a reverse sweep visits every node after all of its consumers.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

    explicit Tape(bool record = true, bool check_finite = false)
        : record_(record), check_finite_(check_finite) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }
    bool checks_finite() const { return check_finite_; }

    Var<T> constant(Tensor<T> value) { return push("constant", std::move(value), false, nullptr); }

    Var<T> leaf(Tensor<T> value, bool requires_grad) {
        return push("leaf", std::move(value), requires_grad && record_, nullptr);
    }

    // Leaf that aliases an external tensor; it must outlive the tape.
    Var<T> reference(const Tensor<T>& external, bool requires_grad);

    Var<T> push(const char* op, Tensor<T> value, bool requires_grad, Backward backward);

    const Tensor<T>& value(Var<T> v) const {
        const Node& n = nodes_[v.id];
        return n.external != nullptr ? *n.external : n.value;
    }
    bool requires_grad(Var<T> v) const { return nodes_[v.id].requires_grad; }

    template <typename... Vars>
    bool any_requires_grad(Vars... vars) const {
        return record_ && (... || requires_grad(vars));
    }

    void accumulate(Var<T> v, Tensor<T>&& grad);

    /// Reverse pass from a scalar loss. Gradients accumulate additively.
    void backward(Var<T> loss);

    /// Gradient of the last backward() for v; zeros when v was unreachable.
    Tensor<T> grad(Var<T> v) const;

    std::size_t size() const { return nodes_.size(); }

    // Id the next pushed node will receive; lets a backward closure refer to
    // its own output.
    std::uint32_t next_id() const { return static_cast<std::uint32_t>(nodes_.size()); }

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        bool requires_grad = false;
        Backward backward;
    };

    std::deque<Node> nodes_;  // stable references across push_back
    bool record_;
    bool check_finite_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(*this);
}

// Differentiable operations. Rank-1 inputs are treated as a single row;
// outputs are rank 2.

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Var<T> a, Var<T> b);

template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Var<T> a, T factor);

// Adds bias[n] to every row of a[m×n].
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias);

// x · Wᵀ (+ bias); W is [out×in].
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias = {});

template <typename T>
Var<T> relu(Var<T> x);

// tanh approximation
template <typename T>
Var<T> gelu(Var<T> x);

template <typename T>
Var<T> abs_value(Var<T> x);

template <typename T>
Var<T> sigmoid(Var<T> x);

template <typename T>
Var<T> softmax_rows(Var<T> x);

// Columns with key_mask[j] == 0 get probability exactly zero.
template <typename T>
Var<T> masked_softmax_rows(Var<T> x, std::span<const std::uint8_t> key_mask);

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps);

// Inverted dropout with a Bernoulli keep mask drawn from rng.
template <typename T>
Var<T> dropout(Var<T> x, double rate, std::mt19937_64& rng);

template <typename T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count);

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids);

// Rows [begin, begin + src.rows) of x replaced by src. No gradient reaches
// the replaced rows of x.
template <typename T>
Var<T> overwrite_rows(Var<T> x, std::size_t begin, Var<T> src);

template <typename T>
Var<T> l2_normalize_rows(Var<T> x);

// [m×n] -> [m×1]; gradient routes to the first maximal column.
template <typename T>
Var<T> row_max(Var<T> x);

template <typename T>
Var<T> sum(Var<T> x);

template <typename T>
Var<T> mean(Var<T> x);

// Mean over rows of -log softmax(logits)[target].
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::int32_t> targets);

}  // namespace lftrank
