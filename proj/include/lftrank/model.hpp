// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "lftrank/rankers.hpp"
#include "lftrank/towers.hpp"

namespace lftrank {

struct ModelSpec {
    EncoderConfig encoder;
    RankerKind ranker = RankerKind::colbert;
    LftSpec lft = FullFT{};
    TowerBinding binding = SiameseBinding{};
    RankerDims head;

    /// Throws ConfigError on any inconsistency between ranker, binding,
    /// spec and encoder.
    void validate() const;
    std::string describe() const;
};

/// Query or document representation: CLS row [1×d] for twin heads,
/// normalized token rows [n×p] for ColBERT.
template <typename T>
struct Rep {
    Tensor<T> cls;
    Tensor<T> tokens;
};

template <typename T>
struct RepVars {
    Var<T> cls;
    Var<T> tokens;
};

/// Encoder, adapters and ranker head in one ParamStore, plus the spec that
/// routes them.
template <typename T>
class RankingModel {
public:
    RankingModel(ModelSpec spec, ParamStore<T> params);

    /// Copies a pre-trained encoder (twice under hetero_full), adds seeded
    /// adapters and head, and applies the spec's freeze plan.
    static RankingModel create(const ModelSpec& spec, const ParamStore<T>& encoder, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    const ParamStore<T>& params() const { return params_; }
    ParamStore<T>& params() { return params_; }

    std::size_t slots() const { return slot_count(spec_.lft); }

    /// Tower representation for the bi-encoder rankers.
    RepVars<T> represent(Graph<T>& graph, Tower tower, const TokenIds& text) const;
    Var<T> score_reps(Graph<T>& graph, const RepVars<T>& q, const RepVars<T>& d) const;

    /// Score of a (query, document) pair under any binding.
    Var<T> score(Graph<T>& graph, const TokenIds& query, const TokenIds& document) const;
    T score(const TokenIds& query, const TokenIds& document) const;

    Rep<T> rep(Tower tower, const TokenIds& text) const;
    T score_cached(const Rep<T>& q, const Rep<T>& d) const;

private:
    ModelSpec spec_;
    ParamStore<T> params_;
};

/// Folds every LoRA pair into its encoder weight and returns a model without
/// the LoRA module: FullFT for a plain LoRA spec, the remaining module for a
/// hybrid. Tower-specific LoRA cannot fold into one shared encoder and
/// throws ContractError, as does a model without LoRA.
template <typename T>
RankingModel<T> merge_lora(const RankingModel<T>& model);

/// Document representations computed once, stamped with the parameter
/// version they were computed from.
template <typename T>
struct DocCache {
    const RankingModel<T>* model = nullptr;
    std::uint64_t version = 0;
    std::map<std::string, Rep<T>> reps;

    /// Throws StaleCacheError if the model parameters changed since caching.
    void check(const RankingModel<T>& model) const;
};

template <typename T>
DocCache<T> precompute_docs(const RankingModel<T>& model, const std::map<std::string, TokenIds>& docs);

}  // namespace lftrank
