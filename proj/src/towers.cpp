// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/towers.hpp"

namespace lftrank {

namespace {

const SemiSiameseBinding* semi(const TowerBinding& binding) { return std::get_if<SemiSiameseBinding>(&binding); }

bool split_prefix(const TowerBinding& binding) {
    const auto* ss = semi(binding);
    return ss != nullptr && ss->prefix != PrefixSharing::off;
}

bool split_lora_target(const TowerBinding& binding, LoraTarget target) {
    const auto* ss = semi(binding);
    if (ss == nullptr) {
        return false;
    }
    switch (ss->lora) {
        case LoraSharing::shared_q:
            return target == LoraTarget::v;
        case LoraSharing::shared_v:
            return target == LoraTarget::q;
        case LoraSharing::hetero_both:
            return true;
        case LoraSharing::off:
            return false;
    }
    return false;
}

const char* tower_suffix(Tower tower) { return tower == Tower::document ? ".doc" : ".query"; }

}  // namespace

const char* to_string(PrefixSharing v) {
    switch (v) {
        case PrefixSharing::average:
            return "average";
        case PrefixSharing::concat:
            return "concat";
        case PrefixSharing::none:
            return "none";
        case PrefixSharing::off:
            return "off";
    }
    return "?";
}

const char* to_string(LoraSharing v) {
    switch (v) {
        case LoraSharing::shared_q:
            return "shared_q";
        case LoraSharing::shared_v:
            return "shared_v";
        case LoraSharing::hetero_both:
            return "hetero_both";
        case LoraSharing::off:
            return "off";
    }
    return "?";
}

const char* to_string(Tower t) {
    switch (t) {
        case Tower::joint:
            return "joint";
        case Tower::query:
            return "query";
        case Tower::document:
            return "document";
    }
    return "?";
}

std::string describe(const TowerBinding& binding) {
    if (std::holds_alternative<CrossBinding>(binding)) {
        return "cross";
    }
    if (std::holds_alternative<SiameseBinding>(binding)) {
        return "siamese";
    }
    if (std::holds_alternative<HeteroFullBinding>(binding)) {
        return "hetero_full";
    }
    const auto& ss = std::get<SemiSiameseBinding>(binding);
    return std::string("semi_siamese(prefix=") + to_string(ss.prefix) + ", lora=" + to_string(ss.lora) + ")";
}

bool is_cross(const TowerBinding& binding) { return std::holds_alternative<CrossBinding>(binding); }

void validate_binding(const TowerBinding& binding, const LftSpec& spec, const EncoderConfig&) {
    if (std::holds_alternative<HeteroFullBinding>(binding) && !is_full_ft(spec)) {
        throw ConfigError("binding=hetero_full requires lft.method=full");
    }
    const auto* ss = semi(binding);
    if (ss == nullptr) {
        return;
    }
    const PrefixTuning* prefix = prefix_of(spec);
    if (ss->prefix != PrefixSharing::off && prefix == nullptr) {
        throw ConfigError(std::string("ss.prefix=") + to_string(ss->prefix) +
                          " needs a prefix-tuning module; set ss.prefix=off");
    }
    if (ss->lora != LoraSharing::off && lora_of(spec) == nullptr) {
        throw ConfigError(std::string("ss.lora=") + to_string(ss->lora) + " needs a LoRA module; set ss.lora=off");
    }
    if (ss->prefix == PrefixSharing::off && ss->lora == LoraSharing::off) {
        throw ConfigError("semi_siamese binding with ss.prefix=off and ss.lora=off is Siamese; use binding=siamese");
    }
    if (ss->prefix == PrefixSharing::concat && prefix != nullptr && ss->concat_specific > prefix->prefix_len) {
        throw ConfigError("ss.concat_specific exceeds lft.prefix_len");
    }
    if (is_full_ft(spec)) {
        throw ConfigError("semi_siamese binding needs a lightweight module; lft.method=full has none");
    }
}

std::string encoder_scope(const TowerBinding& binding, Tower tower) {
    return std::holds_alternative<HeteroFullBinding>(binding) && tower == Tower::document ? "doc." : "";
}

template <typename T>
void add_adapters(ParamStore<T>& store, const LftSpec& spec, const TowerBinding& binding,
                  const EncoderConfig& config, std::uint64_t seed) {
    if (const auto* prompt = prompt_of(spec)) {
        add_prompt(store, *prompt, config, seed);
    }
    if (const auto* prefix = prefix_of(spec)) {
        add_prefix_source(store, *prefix, seed);
        if (split_prefix(binding)) {
            if (semi(binding)->prefix != PrefixSharing::none) {
                add_prefix_mlps(store, "prefix.common", *prefix, config, seed);
            }
            add_prefix_mlps(store, "prefix.query", *prefix, config, seed);
            add_prefix_mlps(store, "prefix.doc", *prefix, config, seed);
        } else {
            add_prefix_mlps(store, "prefix", *prefix, config, seed);
        }
    }
    if (const auto* lora = lora_of(spec)) {
        const std::size_t d = config.model_dim();
        for (std::size_t l = 0; l < config.layers(); ++l) {
            for (LoraTarget target : lora->targets()) {
                const std::string stem = lora_stem(l, target);
                if (split_lora_target(binding, target)) {
                    add_lora_pair(store, stem + ".query", d, d, lora->rank, seed);
                    add_lora_pair(store, stem + ".doc", d, d, lora->rank, seed);
                } else {
                    add_lora_pair(store, stem, d, d, lora->rank, seed);
                }
            }
        }
    }
}

template <typename T>
std::vector<Var<T>> ss_prefix_compose(const std::vector<Var<T>>& common, const std::vector<Var<T>>& specific,
                                      PrefixSharing variant, std::size_t concat_specific) {
    std::vector<Var<T>> out;
    out.reserve(specific.size());
    switch (variant) {
        case PrefixSharing::none:
            return specific;
        case PrefixSharing::average:
            if (common.size() != specific.size()) {
                throw DimensionError("ss_prefix_compose: point counts differ");
            }
            for (std::size_t p = 0; p < specific.size(); ++p) {
                out.push_back(add(common[p], specific[p]));
            }
            return out;
        case PrefixSharing::concat:
            if (common.size() != specific.size()) {
                throw DimensionError("ss_prefix_compose: point counts differ");
            }
            for (std::size_t p = 0; p < specific.size(); ++p) {
                const std::size_t len = specific[p].rows();
                if (concat_specific > len) {
                    throw ConfigError("ss_prefix_compose: concat split exceeds prefix length");
                }
                if (concat_specific == 0) {
                    out.push_back(common[p]);
                } else if (concat_specific == len) {
                    out.push_back(specific[p]);
                } else {
                    out.push_back(concat_rows<T>({slice_rows(specific[p], 0, concat_specific),
                                                  slice_rows(common[p], concat_specific, len - concat_specific)}));
                }
            }
            return out;
        case PrefixSharing::off:
            break;
    }
    throw ConfigError(std::string("ss_prefix_compose: unsupported variant ") + to_string(variant));
}

LoraRouting ss_lora_bind(const LoraTuning& lora, const TowerBinding& binding, Tower tower, std::size_t layers) {
    const auto* ss = semi(binding);
    if (ss != nullptr && ss->lora != LoraSharing::off && tower == Tower::joint) {
        throw ContractError("semi-Siamese LoRA routing needs a query or document tower");
    }
    LoraRouting routing(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        for (LoraTarget target : lora.targets()) {
            std::string stem = lora_stem(l, target);
            if (split_lora_target(binding, target)) {
                stem += tower_suffix(tower);
            }
            routing[l][static_cast<std::size_t>(target)] = stem;
        }
    }
    return routing;
}

template <typename T>
AdapterHooks<T> tower_hooks(Graph<T>& g, const LftSpec& spec, const TowerBinding& binding,
                            const EncoderConfig& config, Tower tower) {
    AdapterHooks<T> hooks;
    hooks.slots = slot_count(spec);
    if (prompt_of(spec) != nullptr) {
        hooks.prompt = g.param(prompt_name);
    }
    if (prefix_of(spec) != nullptr) {
        if (split_prefix(binding)) {
            const auto& ss = *semi(binding);
            const std::string key = std::string("prefix.") + (tower == Tower::document ? "doc" : "query");
            const auto* cached = g.memo(key);
            if (cached == nullptr) {
                const std::string own = tower == Tower::document ? "prefix.doc" : "prefix.query";
                std::vector<Var<T>> common;
                if (ss.prefix != PrefixSharing::none) {
                    const auto* c = g.memo("prefix.common");
                    common = c != nullptr ? *c : g.remember("prefix.common", materialize_prefixes(g, "prefix.common", config));
                }
                cached = &g.remember(key, ss_prefix_compose(common, materialize_prefixes(g, own, config), ss.prefix,
                                                            ss.concat_specific));
            }
            hooks.prefixes = *cached;
        } else {
            const auto* cached = g.memo("prefix");
            hooks.prefixes = cached != nullptr ? *cached : g.remember("prefix", materialize_prefixes(g, "prefix", config));
        }
    }
    if (const auto* lora = lora_of(spec)) {
        const LoraRouting routing = ss_lora_bind(*lora, binding, tower, config.layers());
        hooks.lora.resize(config.layers());
        for (std::size_t l = 0; l < config.layers(); ++l) {
            auto make = [&](std::size_t target) -> std::optional<LoraHook<T>> {
                if (!routing[l][target]) {
                    return std::nullopt;
                }
                const std::string& stem = *routing[l][target];
                return LoraHook<T>{g.param(stem + ".A"), g.param(stem + ".B"), lora->scale(), lora->dropout};
            };
            hooks.lora[l].q = make(static_cast<std::size_t>(LoraTarget::q));
            hooks.lora[l].v = make(static_cast<std::size_t>(LoraTarget::v));
            hooks.lora[l].dense = make(static_cast<std::size_t>(LoraTarget::dense));
        }
    }
    return hooks;
}

template <typename T>
std::vector<Var<T>> encode_tower(Graph<T>& g, const LftSpec& spec, const TowerBinding& binding,
                                 const EncoderConfig& config, Tower tower, const TokenSequence& seq) {
    if (is_cross(binding) && tower != Tower::joint) {
        throw ContractError(std::string("cross-encoder binding has a single joint tower; ") + to_string(tower) +
                            " tower requested");
    }
    if (!is_cross(binding) && tower == Tower::joint) {
        throw ContractError("bi-encoder binding needs a query or document tower");
    }
    return encode(g, config, seq, tower_hooks(g, spec, binding, config, tower), encoder_scope(binding, tower));
}

std::size_t count_trainable(const LftSpec& spec, const TowerBinding& binding, const EncoderConfig& config,
                            CountConvention convention) {
    if (std::holds_alternative<HeteroFullBinding>(binding)) {
        return 2 * count_parameters(config);
    }
    const auto* ss = semi(binding);
    if (ss == nullptr) {
        return count_trainable(spec, config, convention);
    }
    const std::size_t d = config.model_dim();
    const std::size_t points = config.layers() + 1;
    std::size_t total = 0;
    if (const auto* prompt = prompt_of(spec)) {
        total += prompt->prompt_len * d;
    }
    if (const auto* prefix = prefix_of(spec)) {
        const std::size_t stacks_base = prefix->source_dim * prefix->mlp_hidden + prefix->mlp_hidden +
                                        prefix->mlp_hidden * d + d;
        std::size_t stacks = 1;
        std::size_t retained_rows = prefix->prefix_len;
        switch (ss->prefix) {
            case PrefixSharing::average:
                stacks = 3;
                retained_rows = 3 * prefix->prefix_len;
                break;
            case PrefixSharing::concat:
                stacks = 3;
                retained_rows = prefix->prefix_len + ss->concat_specific;
                break;
            case PrefixSharing::none:
                stacks = 2;
                retained_rows = 2 * prefix->prefix_len;
                break;
            case PrefixSharing::off:
                break;
        }
        total += convention == CountConvention::retained
                     ? points * retained_rows * d
                     : prefix->prefix_len * prefix->source_dim + stacks * points * stacks_base;
    }
    if (const auto* lora = lora_of(spec)) {
        for (LoraTarget target : lora->targets()) {
            const std::size_t copies = split_lora_target(binding, target) ? 2 : 1;
            total += copies * config.layers() * lora->rank * (d + d);
        }
    }
    return total;
}

#define LFTRANK_INSTANTIATE_TOWERS(T)                                                                             \
    template void add_adapters<T>(ParamStore<T>&, const LftSpec&, const TowerBinding&, const EncoderConfig&,      \
                                  std::uint64_t);                                                                 \
    template std::vector<Var<T>> ss_prefix_compose<T>(const std::vector<Var<T>>&, const std::vector<Var<T>>&,     \
                                                      PrefixSharing, std::size_t);                                \
    template AdapterHooks<T> tower_hooks<T>(Graph<T>&, const LftSpec&, const TowerBinding&, const EncoderConfig&, \
                                            Tower);                                                               \
    template std::vector<Var<T>> encode_tower<T>(Graph<T>&, const LftSpec&, const TowerBinding&,                  \
                                                 const EncoderConfig&, Tower, const TokenSequence&);

LFTRANK_INSTANTIATE_TOWERS(float)
LFTRANK_INSTANTIATE_TOWERS(double)

}  // namespace lftrank
