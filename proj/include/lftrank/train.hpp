// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lftrank/metrics.hpp"
#include "lftrank/model.hpp"
#include "lftrank/optim.hpp"

namespace lftrank {

using DocTable = std::map<std::string, TokenIds>;

struct TrainConfig {
    LrGroups learning_rates{{"ranker", 1e-4}, {"encoder", 2e-5}, {"prefix", 1e-4}, {"prompt", 1e-4}, {"lora", 1e-4}};
    std::size_t batch_size = 16;
    std::size_t max_epochs = 10;
    // Validation metric is mean P@val_k.
    std::size_t val_k = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TokenTriplet {
    TokenIds query;
    std::string pos;
    std::string neg;
};

struct RerankQuery {
    std::string qid;
    TokenIds text;
    std::vector<std::string> candidates;
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_metric = 0.0;
    int stage = 0;          // hybrid stage; 0 when not staged
};

/// `{epoch}\t{loss:.6f}\t{val:.6f}\t{stage}\n`
std::string format_epoch_log(const EpochLog& entry);

template <typename T>
struct TrainResult {
    ParamStore<T> best;
    ParamStore<T> last;  // after the final epoch, before restoring best
    std::size_t best_epoch = 0;  // 0: initialization
    double best_val = 0.0;
    std::vector<EpochLog> log;
};

/// sigmoid(s_neg − s_pos) = 1 − softmax(s_pos | s_pos, s_neg).
double triplet_loss(double s_pos, double s_neg);

template <typename T>
Var<T> triplet_loss(Var<T> s_pos, Var<T> s_neg);

/// Mean triplet loss over a batch, built on one graph.
template <typename T>
Var<T> batch_loss(Graph<T>& graph, const RankingModel<T>& model, const std::vector<const TokenTriplet*>& batch,
                  const DocTable& docs);

/// Adam over seeded shuffled batches; after each epoch the validation
/// metric picks the best parameters, which are left in the model and
/// returned. Sequential hybrids switch stages at epoch m: the best stage-1
/// parameters are restored, the first module is frozen and Adam restarts.
template <typename T>
TrainResult<T> train(RankingModel<T>& model, const std::vector<TokenTriplet>& triplets, const DocTable& docs,
                     const std::vector<RerankQuery>& val, const Qrels& val_qrels, const TrainConfig& config,
                     std::ostream* log = nullptr);

/// Candidates by descending score, ties by ascending docid. Bi-encoders
/// score against `cache`, which must be current.
template <typename T>
std::vector<RunRecord> rerank(const RankingModel<T>& model, const RerankQuery& query, const DocTable& docs,
                              const DocCache<T>* cache, const std::string& tag);

/// Reranks every query, caching the needed documents first for bi-encoders.
template <typename T>
Run rerank_all(const RankingModel<T>& model, const std::vector<RerankQuery>& queries, const DocTable& docs,
               const std::string& tag);

}  // namespace lftrank
