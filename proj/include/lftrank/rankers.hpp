// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "lftrank/graph.hpp"

namespace lftrank {

enum class RankerKind { mono, twin, colbert };

const char* to_string(RankerKind kind);

struct RankerDims {
    std::size_t colbert_dim = 32;
    std::size_t twin_hidden = 0;  // 0 selects the model width d
};

/// ranker.mono.{weight,bias}, ranker.twin.{fc1,fc2}.{weight,bias} or
/// ranker.col.proj.weight. Weights ~ N(0, 1/sqrt(fan_in)), biases zero.
template <typename T>
void add_ranker_head(ParamStore<T>& store, RankerKind kind, std::size_t model_dim, const RankerDims& dims,
                     std::uint64_t seed);

/// Linear score of the final-layer CLS row [1×d].
template <typename T>
Var<T> score_mono(Graph<T>& graph, Var<T> cls);

/// [q ‖ d ‖ |q−d| ‖ q⊙d], the input of the twin head.
template <typename T>
Var<T> twin_features(Var<T> cls_q, Var<T> cls_d);

/// MLP over twin_features: fc2(ReLU(fc1(features))).
template <typename T>
Var<T> score_twin(Graph<T>& graph, Var<T> cls_q, Var<T> cls_d);

/// Σ_i max_j Q[i]·D[j].
template <typename T>
Var<T> score_colbert(Var<T> q_tokens, Var<T> d_tokens);

/// Projects hidden rows to the ColBERT space and normalizes each row.
template <typename T>
Var<T> colbert_project(Graph<T>& graph, Var<T> rows);

}  // namespace lftrank
