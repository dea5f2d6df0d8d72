// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

namespace lftrank {

void TrainConfig::validate() const {
    if (batch_size == 0) {
        throw ConfigError("train.batch_size must be at least 1");
    }
    if (val_k == 0) {
        throw ConfigError("train.val_k must be at least 1");
    }
    for (const auto& [group, lr] : learning_rates) {
        if (!(lr > 0.0) || !std::isfinite(lr)) {
            throw ConfigError("train.lr_" + group + " must be positive");
        }
    }
}

std::string format_epoch_log(const EpochLog& entry) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\t%d\n", entry.epoch, entry.train_loss, entry.val_metric,
                  entry.stage);
    return buf;
}

double triplet_loss(double s_pos, double s_neg) {
    const double margin = s_pos - s_neg;
    // 1 / (1 + e^margin) without overflow for either sign.
    if (margin >= 0) {
        const double e = std::exp(-margin);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(margin));
}

template <typename T>
Var<T> triplet_loss(Var<T> s_pos, Var<T> s_neg) {
    return sigmoid(sub(s_neg, s_pos));
}

namespace {

const TokenIds& lookup(const DocTable& docs, const std::string& docid) {
    auto it = docs.find(docid);
    if (it == docs.end()) {
        throw DataError("unknown docid '" + docid + "'");
    }
    return it->second;
}

template <typename T>
void copy_values(const ParamStore<T>& from, ParamStore<T>& to) {
    for (const auto& [name, entry] : from.entries()) {
        if (!(to.get(name) == entry.tensor)) {
            to.mutable_tensor(name) = entry.tensor;
        }
    }
}

template <typename T>
double validation_metric(const RankingModel<T>& model, const std::vector<RerankQuery>& val, const DocTable& docs,
                         const Qrels& qrels, std::size_t k) {
    if (val.empty()) {
        return 0.0;
    }
    return precision_at_k(rerank_all(model, val, docs, "val"), qrels, k).mean();
}

}  // namespace

template <typename T>
Var<T> batch_loss(Graph<T>& g, const RankingModel<T>& model, const std::vector<const TokenTriplet*>& batch,
                  const DocTable& docs) {
    if (batch.empty()) {
        throw ContractError("batch_loss: empty batch");
    }
    std::vector<Var<T>> losses;
    losses.reserve(batch.size());
    const bool cross = model.spec().ranker == RankerKind::mono;
    for (const TokenTriplet* t : batch) {
        const TokenIds& pos = lookup(docs, t->pos);
        const TokenIds& neg = lookup(docs, t->neg);
        if (cross) {
            losses.push_back(triplet_loss(model.score(g, t->query, pos), model.score(g, t->query, neg)));
        } else {
            const RepVars<T> q = model.represent(g, Tower::query, t->query);
            const Var<T> s_pos = model.score_reps(g, q, model.represent(g, Tower::document, pos));
            const Var<T> s_neg = model.score_reps(g, q, model.represent(g, Tower::document, neg));
            losses.push_back(triplet_loss(s_pos, s_neg));
        }
    }
    return scale(sum(concat_rows(losses)), static_cast<T>(1.0 / static_cast<double>(batch.size())));
}

template <typename T>
TrainResult<T> train(RankingModel<T>& model, const std::vector<TokenTriplet>& triplets, const DocTable& docs,
                     const std::vector<RerankQuery>& val, const Qrels& val_qrels, const TrainConfig& config,
                     std::ostream* log) {
    config.validate();
    if (triplets.empty()) {
        throw DataError("training set is empty: no triplets");
    }
    for (const auto& t : triplets) {
        lookup(docs, t.pos);
        lookup(docs, t.neg);
        if (t.pos == t.neg) {
            throw DataError("triplet positive and negative are both '" + t.pos + "'");
        }
    }
    const LftSpec& spec = model.spec().lft;
    const Hybrid* hybrid = std::get_if<Hybrid>(&spec);
    const bool sequential = hybrid != nullptr && hybrid->mode == HybridMode::sequential;
    if (sequential && config.max_epochs > hybrid->m_epochs + hybrid->n_epochs) {
        throw ScheduleError("train.epochs=" + std::to_string(config.max_epochs) + " exceeds the hybrid schedule of " +
                            std::to_string(hybrid->m_epochs + hybrid->n_epochs) + " epochs (m + n)");
    }
    build_freeze_plan(spec, model.params(), sequential ? HybridPhase::first : HybridPhase::both)
        .apply(model.params());

    TrainResult<T> result;
    result.best = model.params();
    bool have_best = false;
    AdamState<T> adam;
    std::vector<std::size_t> order(triplets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = named_rng(config.seed, "train.shuffle");
    const std::uint64_t dropout_base = derive_seed(config.seed, "train.dropout");
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        int stage = 0;
        if (hybrid != nullptr) {
            const StageInfo info = hybrid_stage(*hybrid, epoch);
            stage = info.stage;
            if (sequential && info.boundary) {
                if (have_best) {
                    copy_values(result.best, model.params());
                }
                build_freeze_plan(spec, model.params(), HybridPhase::second).apply(model.params());
                adam = AdamState<T>{};
            }
        }
        portable_shuffle(order, rng);
        double loss_total = 0.0;
        for (std::size_t start = 0, batch_index = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            std::vector<const TokenTriplet*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
                batch.push_back(&triplets[order[i]]);
            }
            Graph<T> g(model.params(), {true, true, dropout_base + step++, false});
            Var<T> loss = batch_loss(g, model, batch, docs);
            const double value = static_cast<double>(loss.value().item());
            if (!std::isfinite(value)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                   std::to_string(batch_index + 1));
            }
            g.tape().backward(loss);
            const auto grads = g.param_grads();
            for (const auto& [name, grad] : grads) {
                if (!grad.all_finite()) {
                    throw NumericError("non-finite gradient for '" + name + "' at epoch " + std::to_string(epoch + 1) +
                                       ", batch " + std::to_string(batch_index + 1));
                }
            }
            adam_step(model.params(), grads, adam, config.learning_rates);
            loss_total += value * static_cast<double>(batch.size());
        }
        EpochLog entry;
        entry.epoch = epoch + 1;
        entry.train_loss = loss_total / static_cast<double>(order.size());
        entry.val_metric = validation_metric(model, val, docs, val_qrels, config.val_k);
        entry.stage = stage;
        result.log.push_back(entry);
        if (log != nullptr) {
            *log << format_epoch_log(entry) << std::flush;
        }
        if (!have_best || entry.val_metric > result.best_val) {
            have_best = true;
            result.best = model.params();
            result.best_epoch = entry.epoch;
            result.best_val = entry.val_metric;
        }
    }
    result.last = model.params();
    copy_values(result.best, model.params());
    return result;
}

template <typename T>
std::vector<RunRecord> rerank(const RankingModel<T>& model, const RerankQuery& query, const DocTable& docs,
                              const DocCache<T>* cache, const std::string& tag) {
    std::vector<RunRecord> records;
    records.reserve(query.candidates.size());
    std::set<std::string> seen;
    for (const auto& docid : query.candidates) {
        if (!seen.insert(docid).second) {
            throw DataError("query '" + query.qid + "' lists candidate '" + docid + "' twice");
        }
    }
    if (is_cross(model.spec().binding)) {
        for (const auto& docid : query.candidates) {
            const TokenIds& doc = lookup(docs, docid);
            records.push_back({query.qid, docid, 0, static_cast<double>(model.score(query.text, doc)), tag});
        }
    } else {
        if (cache == nullptr) {
            throw ContractError("bi-encoder reranking needs a document cache");
        }
        cache->check(model);
        const Rep<T> q = model.rep(Tower::query, query.text);
        for (const auto& docid : query.candidates) {
            auto it = cache->reps.find(docid);
            if (it == cache->reps.end()) {
                throw DataError("unknown docid '" + docid + "' for query '" + query.qid + "'");
            }
            records.push_back({query.qid, docid, 0, static_cast<double>(model.score_cached(q, it->second)), tag});
        }
    }
    sort_and_rank(records);
    return records;
}

template <typename T>
Run rerank_all(const RankingModel<T>& model, const std::vector<RerankQuery>& queries, const DocTable& docs,
               const std::string& tag) {
    Run run;
    if (is_cross(model.spec().binding)) {
        for (const auto& q : queries) {
            auto records = rerank<T>(model, q, docs, nullptr, tag);
            run.insert(run.end(), records.begin(), records.end());
        }
        return run;
    }
    DocTable needed;
    for (const auto& q : queries) {
        for (const auto& docid : q.candidates) {
            needed.emplace(docid, lookup(docs, docid));
        }
    }
    const DocCache<T> cache = precompute_docs(model, needed);
    for (const auto& q : queries) {
        auto records = rerank(model, q, docs, &cache, tag);
        run.insert(run.end(), records.begin(), records.end());
    }
    return run;
}

#define LFTRANK_INSTANTIATE_TRAIN(T)                                                                               \
    template Var<T> triplet_loss<T>(Var<T>, Var<T>);                                                               \
    template Var<T> batch_loss<T>(Graph<T>&, const RankingModel<T>&, const std::vector<const TokenTriplet*>&,      \
                                  const DocTable&);                                                                \
    template TrainResult<T> train<T>(RankingModel<T>&, const std::vector<TokenTriplet>&, const DocTable&,          \
                                     const std::vector<RerankQuery>&, const Qrels&, const TrainConfig&,            \
                                     std::ostream*);                                                               \
    template std::vector<RunRecord> rerank<T>(const RankingModel<T>&, const RerankQuery&, const DocTable&,         \
                                              const DocCache<T>*, const std::string&);                             \
    template Run rerank_all<T>(const RankingModel<T>&, const std::vector<RerankQuery>&, const DocTable&,           \
                               const std::string&);

LFTRANK_INSTANTIATE_TRAIN(float)
LFTRANK_INSTANTIATE_TRAIN(double)

}  // namespace lftrank
