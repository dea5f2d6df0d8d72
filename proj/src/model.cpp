// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/model.hpp"

namespace lftrank {

void ModelSpec::validate() const {
    validate_spec(lft, encoder);
    validate_binding(binding, lft, encoder);
    if (ranker == RankerKind::mono && !is_cross(binding)) {
        throw ConfigError("model=mono is a cross-encoder; set binding=cross");
    }
    if (ranker != RankerKind::mono && is_cross(binding)) {
        throw ConfigError(std::string("model=") + to_string(ranker) + " is a bi-encoder; binding=cross needs model=mono");
    }
}

std::string ModelSpec::describe() const {
    return std::string(to_string(ranker)) + " / " + lftrank::describe(binding) + " / " + lftrank::describe(lft);
}

template <typename T>
RankingModel<T>::RankingModel(ModelSpec spec, ParamStore<T> params) : spec_(std::move(spec)), params_(std::move(params)) {
    spec_.validate();
    std::vector<std::string> scopes{""};
    if (std::holds_alternative<HeteroFullBinding>(spec_.binding)) {
        scopes.push_back("doc.");
    }
    for (const auto& scope : scopes) {
        for (const auto& [name, shape] : encoder_layout(spec_.encoder, scope)) {
            if (!params_.contains(name)) {
                throw ConfigError("model parameters lack encoder tensor '" + name + "'");
            }
            if (params_.get(name).shape() != shape) {
                throw DimensionError("encoder tensor '" + name + "' has shape " +
                                     shape_string(params_.get(name).shape()) + ", config expects " +
                                     shape_string(shape));
            }
        }
    }
}

template <typename T>
RankingModel<T> RankingModel<T>::create(const ModelSpec& spec, const ParamStore<T>& encoder, std::uint64_t seed) {
    spec.validate();
    ParamStore<T> params;
    const bool hetero = std::holds_alternative<HeteroFullBinding>(spec.binding);
    for (const auto& [name, entry] : encoder.entries()) {
        params.add(name, entry.tensor);
        if (hetero) {
            params.add("doc." + name, entry.tensor);
        }
    }
    add_adapters(params, spec.lft, spec.binding, spec.encoder, seed);
    add_ranker_head(params, spec.ranker, spec.encoder.model_dim(), spec.head, seed);
    build_freeze_plan(spec.lft, params).apply(params);
    return RankingModel(spec, std::move(params));
}

template <typename T>
RepVars<T> RankingModel<T>::represent(Graph<T>& g, Tower tower, const TokenIds& text) const {
    if (spec_.ranker == RankerKind::mono) {
        throw ContractError("cross-encoder models have no per-tower representations");
    }
    const std::size_t slots = this->slots();
    const TokenSequence seq = single_sequence(text, spec_.encoder.max_seq_len() - slots);
    const auto states = encode_tower(g, spec_.lft, spec_.binding, spec_.encoder, tower, seq);
    const Var<T> final_layer = states.back();
    RepVars<T> out;
    if (spec_.ranker == RankerKind::twin) {
        out.cls = slice_rows(final_layer, slots, 1);
    } else {
        // CLS and text rows; prefix slots and [SEP] are excluded.
        out.tokens = colbert_project(g, slice_rows(final_layer, slots, seq.length() - 1));
    }
    return out;
}

template <typename T>
Var<T> RankingModel<T>::score_reps(Graph<T>& g, const RepVars<T>& q, const RepVars<T>& d) const {
    switch (spec_.ranker) {
        case RankerKind::twin:
            return score_twin(g, q.cls, d.cls);
        case RankerKind::colbert:
            return score_colbert(q.tokens, d.tokens);
        case RankerKind::mono:
            break;
    }
    throw ContractError("cross-encoder models score pairs jointly");
}

template <typename T>
Var<T> RankingModel<T>::score(Graph<T>& g, const TokenIds& query, const TokenIds& document) const {
    if (spec_.ranker == RankerKind::mono) {
        const std::size_t slots = this->slots();
        const TokenSequence seq = pair_sequence(query, document, spec_.encoder.max_seq_len() - slots);
        const auto states = encode_tower(g, spec_.lft, spec_.binding, spec_.encoder, Tower::joint, seq);
        return score_mono(g, slice_rows(states.back(), slots, 1));
    }
    const RepVars<T> q = represent(g, Tower::query, query);
    const RepVars<T> d = represent(g, Tower::document, document);
    return score_reps(g, q, d);
}

template <typename T>
T RankingModel<T>::score(const TokenIds& query, const TokenIds& document) const {
    auto g = Graph<T>::inference(params_);
    return score(g, query, document).value().item();
}

template <typename T>
Rep<T> RankingModel<T>::rep(Tower tower, const TokenIds& text) const {
    auto g = Graph<T>::inference(params_);
    const RepVars<T> vars = represent(g, tower, text);
    Rep<T> out;
    if (vars.cls.valid()) {
        out.cls = vars.cls.value();
    }
    if (vars.tokens.valid()) {
        out.tokens = vars.tokens.value();
    }
    return out;
}

template <typename T>
T RankingModel<T>::score_cached(const Rep<T>& q, const Rep<T>& d) const {
    auto g = Graph<T>::inference(params_);
    RepVars<T> qv;
    RepVars<T> dv;
    if (spec_.ranker == RankerKind::twin) {
        qv.cls = g.constant(q.cls);
        dv.cls = g.constant(d.cls);
    } else {
        qv.tokens = g.constant(q.tokens);
        dv.tokens = g.constant(d.tokens);
    }
    return score_reps(g, qv, dv).value().item();
}

template <typename T>
void DocCache<T>::check(const RankingModel<T>& m) const {
    if (model != &m || version != m.params().version()) {
        throw StaleCacheError("document cache is stale: model parameters changed after pre-computation");
    }
}

template <typename T>
DocCache<T> precompute_docs(const RankingModel<T>& model, const std::map<std::string, TokenIds>& docs) {
    if (is_cross(model.spec().binding)) {
        throw ContractError("pre-computation is impossible for cross-encoders: documents are encoded jointly with "
                            "the query");
    }
    DocCache<T> cache;
    cache.model = &model;
    cache.version = model.params().version();
    for (const auto& [docid, text] : docs) {
        cache.reps.emplace(docid, model.rep(Tower::document, text));
    }
    return cache;
}

template <typename T>
RankingModel<T> merge_lora(const RankingModel<T>& model) {
    const ModelSpec& spec = model.spec();
    const LoraTuning* lora = lora_of(spec.lft);
    if (lora == nullptr) {
        throw ContractError("merge_lora: " + lftrank::describe(spec.lft) + " has no LoRA module");
    }
    if (const auto* ss = std::get_if<SemiSiameseBinding>(&spec.binding); ss != nullptr && ss->lora != LoraSharing::off) {
        throw ContractError(std::string("merge_lora: ss.lora=") + to_string(ss->lora) +
                            " keeps tower-specific LoRA modules that cannot fold into one encoder");
    }
    ParamStore<T> store = model.params();
    const char* weights[] = {"attn.wq.weight", "attn.wv.weight", "attn.dense.weight"};
    for (std::size_t l = 0; l < spec.encoder.layers(); ++l) {
        for (LoraTarget target : lora->targets()) {
            const std::string stem = lora_stem(l, target);
            lora_merge(store, layer_param("", l, weights[static_cast<std::size_t>(target)]), stem, lora->scale());
            store.erase(stem + ".A");
            store.erase(stem + ".B");
        }
    }
    ModelSpec merged = spec;
    if (const auto* hybrid = std::get_if<Hybrid>(&spec.lft)) {
        const LftModule& rest = std::holds_alternative<LoraTuning>(hybrid->first) ? hybrid->second : hybrid->first;
        merged.lft = std::visit([](const auto& m) -> LftSpec { return m; }, rest);
    } else {
        merged.lft = FullFT{};
    }
    return RankingModel<T>(merged, std::move(store));
}

template class RankingModel<float>;
template class RankingModel<double>;
template struct DocCache<float>;
template struct DocCache<double>;
template DocCache<float> precompute_docs(const RankingModel<float>&, const std::map<std::string, TokenIds>&);
template RankingModel<float> merge_lora(const RankingModel<float>&);
template RankingModel<double> merge_lora(const RankingModel<double>&);
template DocCache<double> precompute_docs(const RankingModel<double>&, const std::map<std::string, TokenIds>&);

}  // namespace lftrank
