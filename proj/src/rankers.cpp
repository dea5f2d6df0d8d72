// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/rankers.hpp"

#include <cmath>

namespace lftrank {

const char* to_string(RankerKind kind) {
    switch (kind) {
        case RankerKind::mono:
            return "mono";
        case RankerKind::twin:
            return "twin";
        case RankerKind::colbert:
            return "colbert";
    }
    return "?";
}

namespace {

template <typename T>
void add_weight(ParamStore<T>& store, const std::string& name, std::size_t out, std::size_t in, std::uint64_t seed) {
    auto rng = named_rng(seed, name);
    store.add(name, normal_tensor<T>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng), true);
}

}  // namespace

template <typename T>
void add_ranker_head(ParamStore<T>& store, RankerKind kind, std::size_t d, const RankerDims& dims,
                     std::uint64_t seed) {
    switch (kind) {
        case RankerKind::mono:
            add_weight(store, "ranker.mono.weight", 1, d, seed);
            store.add("ranker.mono.bias", Tensor<T>({1}), true);
            break;
        case RankerKind::twin: {
            const std::size_t hidden = dims.twin_hidden == 0 ? d : dims.twin_hidden;
            add_weight(store, "ranker.twin.fc1.weight", hidden, 4 * d, seed);
            store.add("ranker.twin.fc1.bias", Tensor<T>({hidden}), true);
            add_weight(store, "ranker.twin.fc2.weight", 1, hidden, seed);
            store.add("ranker.twin.fc2.bias", Tensor<T>({1}), true);
            break;
        }
        case RankerKind::colbert:
            if (dims.colbert_dim == 0) {
                throw ConfigError("ranker.colbert_dim must be positive");
            }
            add_weight(store, "ranker.col.proj.weight", dims.colbert_dim, d, seed);
            break;
    }
}

template <typename T>
Var<T> score_mono(Graph<T>& g, Var<T> cls) {
    return linear(cls, g.param("ranker.mono.weight"), g.param("ranker.mono.bias"));
}

template <typename T>
Var<T> twin_features(Var<T> cls_q, Var<T> cls_d) {
    if (cls_q.cols() != cls_d.cols() || cls_q.rows() != 1 || cls_d.rows() != 1) {
        throw DimensionError("twin head: CLS vectors " + shape_string(cls_q.value().shape()) + " and " +
                             shape_string(cls_d.value().shape()) + " differ");
    }
    return concat_cols<T>({cls_q, cls_d, abs_value(sub(cls_q, cls_d)), mul(cls_q, cls_d)});
}

template <typename T>
Var<T> score_twin(Graph<T>& g, Var<T> cls_q, Var<T> cls_d) {
    Var<T> hidden = relu(linear(twin_features(cls_q, cls_d), g.param("ranker.twin.fc1.weight"),
                                g.param("ranker.twin.fc1.bias")));
    return linear(hidden, g.param("ranker.twin.fc2.weight"), g.param("ranker.twin.fc2.bias"));
}

template <typename T>
Var<T> score_colbert(Var<T> q_tokens, Var<T> d_tokens) {
    if (q_tokens.rows() == 0 || d_tokens.rows() == 0 || q_tokens.value().numel() == 0 ||
        d_tokens.value().numel() == 0) {
        throw ContractError("score_colbert: query and document need at least one token row");
    }
    return sum(row_max(matmul_nt(q_tokens, d_tokens)));
}

template <typename T>
Var<T> colbert_project(Graph<T>& g, Var<T> rows) {
    return l2_normalize_rows(linear(rows, g.param("ranker.col.proj.weight")));
}

#define LFTRANK_INSTANTIATE_RANKERS(T)                                                                 \
    template void add_ranker_head<T>(ParamStore<T>&, RankerKind, std::size_t, const RankerDims&,      \
                                     std::uint64_t);                                                   \
    template Var<T> score_mono<T>(Graph<T>&, Var<T>);                                                  \
    template Var<T> twin_features<T>(Var<T>, Var<T>);                                                  \
    template Var<T> score_twin<T>(Graph<T>&, Var<T>, Var<T>);                                          \
    template Var<T> score_colbert<T>(Var<T>, Var<T>);                                                  \
    template Var<T> colbert_project<T>(Graph<T>&, Var<T>);

LFTRANK_INSTANTIATE_RANKERS(float)
LFTRANK_INSTANTIATE_RANKERS(double)

}  // namespace lftrank
