// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/lft.hpp"

#include <cmath>
#include <cstdio>

namespace lftrank {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

void validate_module(const LftModule& module, const EncoderConfig& config, const std::string& key) {
    std::visit(Overloaded{
                   [&](const PromptTuning& p) {
                       if (p.prompt_len == 0) {
                           throw ConfigError(key + "prompt_len must be at least 1");
                       }
                       if (p.prompt_len + 3 > config.max_seq_len()) {
                           throw ConfigError(key + "prompt_len leaves no room for text within max_seq_len");
                       }
                   },
                   [&](const PrefixTuning& p) {
                       if (p.prefix_len == 0) {
                           throw ConfigError(key + "prefix_len must be at least 1");
                       }
                       if (p.source_dim == 0 || p.mlp_hidden == 0) {
                           throw ConfigError(key + "source_dim and mlp_hidden must be positive");
                       }
                       if (p.prefix_len + 3 > config.max_seq_len()) {
                           throw ConfigError(key + "prefix_len + 3 exceeds encoder max_seq_len");
                       }
                   },
                   [&](const LoraTuning& l) {
                       if (l.rank == 0 || l.rank >= config.model_dim()) {
                           throw ConfigError(key + "rank must satisfy 1 <= rank < model_dim (got " +
                                             std::to_string(l.rank) + ")");
                       }
                       if (!(l.dropout >= 0.0 && l.dropout < 1.0)) {
                           throw ConfigError(key + "dropout must lie in [0, 1)");
                       }
                       if (!std::isfinite(l.alpha)) {
                           throw ConfigError(key + "alpha must be finite");
                       }
                   },
               },
               module);
}

std::string describe_module(const LftModule& module) {
    return std::visit(Overloaded{
                          [](const PromptTuning& p) { return "prompt(len=" + std::to_string(p.prompt_len) + ")"; },
                          [](const PrefixTuning& p) {
                              return "prefix(len=" + std::to_string(p.prefix_len) + ", source=" +
                                     std::to_string(p.source_dim) + ", hidden=" + std::to_string(p.mlp_hidden) + ")";
                          },
                          [](const LoraTuning& l) {
                              char alpha[32];
                              std::snprintf(alpha, sizeof alpha, "%g", l.alpha);
                              return std::string(l.plus ? "lora+" : "lora") + "(r=" + std::to_string(l.rank) +
                                     ", alpha=" + alpha + ")";
                          },
                      },
                      module);
}

std::size_t count_module(const LftModule& module, const EncoderConfig& config, CountConvention convention) {
    const std::size_t d = config.model_dim();
    const std::size_t points = config.layers() + 1;
    return std::visit(Overloaded{
                          [&](const PromptTuning& p) { return p.prompt_len * d; },
                          [&](const PrefixTuning& p) {
                              if (convention == CountConvention::retained) {
                                  return points * p.prefix_len * d;
                              }
                              const std::size_t mlp = p.source_dim * p.mlp_hidden + p.mlp_hidden +
                                                      p.mlp_hidden * d + d;
                              return p.prefix_len * p.source_dim + points * mlp;
                          },
                          [&](const LoraTuning& l) {
                              return config.layers() * l.targets().size() * l.rank * (d + d);
                          },
                      },
                      module);
}

template <typename M>
const M* find_module(const LftSpec& spec) {
    if (const auto* direct = std::get_if<M>(&spec)) {
        return direct;
    }
    if (const auto* hybrid = std::get_if<Hybrid>(&spec)) {
        if (const auto* m = std::get_if<M>(&hybrid->first)) {
            return m;
        }
        return std::get_if<M>(&hybrid->second);
    }
    return nullptr;
}

}  // namespace

const char* to_string(LoraTarget target) {
    switch (target) {
        case LoraTarget::q:
            return "q";
        case LoraTarget::v:
            return "v";
        case LoraTarget::dense:
            return "dense";
    }
    return "?";
}

std::vector<LoraTarget> LoraTuning::targets() const {
    if (plus) {
        return {LoraTarget::q, LoraTarget::v, LoraTarget::dense};
    }
    return {LoraTarget::q, LoraTarget::v};
}

void validate_spec(const LftSpec& spec, const EncoderConfig& config) {
    std::visit(Overloaded{
                   [](const FullFT&) {},
                   [&](const Hybrid& h) {
                       validate_module(h.first, config, "lft.first.");
                       validate_module(h.second, config, "lft.second.");
                       if (h.first.index() == h.second.index()) {
                           throw ConfigError("lft.method: hybrid members must be different methods");
                       }
                       const bool both_slots = !std::holds_alternative<LoraTuning>(h.first) &&
                                               !std::holds_alternative<LoraTuning>(h.second);
                       if (both_slots) {
                           throw ConfigError("lft.method: prompt and prefix tuning cannot be combined (both use the "
                                             "leading slots)");
                       }
                       if (h.mode == HybridMode::sequential && (h.m_epochs == 0 || h.n_epochs == 0)) {
                           throw ConfigError("lft.hybrid.m and lft.hybrid.n must be positive for sequential hybrids");
                       }
                   },
                   [&](const auto& module) { validate_module(module, config, "lft."); },
               },
               spec);
}

std::string describe(const LftSpec& spec) {
    return std::visit(Overloaded{
                          [](const FullFT&) { return std::string("full"); },
                          [](const Hybrid& h) {
                              return describe_module(h.first) +
                                     (h.mode == HybridMode::sequential ? " -> " : " + ") + describe_module(h.second);
                          },
                          [](const auto& module) { return describe_module(module); },
                      },
                      spec);
}

std::vector<LftModule> modules_of(const LftSpec& spec) {
    return std::visit(Overloaded{
                          [](const FullFT&) { return std::vector<LftModule>{}; },
                          [](const Hybrid& h) { return std::vector<LftModule>{h.first, h.second}; },
                          [](const auto& module) { return std::vector<LftModule>{module}; },
                      },
                      spec);
}

const PromptTuning* prompt_of(const LftSpec& spec) { return find_module<PromptTuning>(spec); }
const PrefixTuning* prefix_of(const LftSpec& spec) { return find_module<PrefixTuning>(spec); }
const LoraTuning* lora_of(const LftSpec& spec) { return find_module<LoraTuning>(spec); }
bool is_full_ft(const LftSpec& spec) { return std::holds_alternative<FullFT>(spec); }

std::size_t slot_count(const LftSpec& spec) {
    if (const auto* p = prompt_of(spec)) {
        return p->prompt_len;
    }
    if (const auto* p = prefix_of(spec)) {
        return p->prefix_len;
    }
    return 0;
}

std::string module_namespace(const LftModule& module) {
    return std::visit(Overloaded{
                          [](const PromptTuning&) { return std::string("prompt."); },
                          [](const PrefixTuning&) { return std::string("prefix."); },
                          [](const LoraTuning&) { return std::string("lora."); },
                      },
                      module);
}

template <typename T>
void add_prompt(ParamStore<T>& store, const PromptTuning& spec, const EncoderConfig& config, std::uint64_t seed) {
    auto rng = named_rng(seed, prompt_name);
    store.add(prompt_name, normal_tensor<T>({spec.prompt_len, config.model_dim()}, 0.02, rng));
}

template <typename T>
void add_prefix_source(ParamStore<T>& store, const PrefixTuning& spec, std::uint64_t seed) {
    auto rng = named_rng(seed, prefix_source_name);
    store.add(prefix_source_name, normal_tensor<T>({spec.prefix_len, spec.source_dim}, 1.0, rng));
}

template <typename T>
void add_prefix_mlps(ParamStore<T>& store, const std::string& stem, const PrefixTuning& spec,
                     const EncoderConfig& config, std::uint64_t seed) {
    const std::size_t d = config.model_dim();
    for (std::size_t point = 0; point <= config.layers(); ++point) {
        const std::string base = stem + ".mlp." + std::to_string(point) + ".";
        auto down_rng = named_rng(seed, base + "down.weight");
        store.add(base + "down.weight",
                  normal_tensor<T>({spec.mlp_hidden, spec.source_dim},
                                   1.0 / std::sqrt(static_cast<double>(spec.source_dim)), down_rng));
        store.add(base + "down.bias", Tensor<T>({spec.mlp_hidden}));
        auto up_rng = named_rng(seed, base + "up.weight");
        store.add(base + "up.weight",
                  normal_tensor<T>({d, spec.mlp_hidden}, 1.0 / std::sqrt(static_cast<double>(spec.mlp_hidden)),
                                   up_rng));
        store.add(base + "up.bias", Tensor<T>({d}));
    }
}

template <typename T>
void add_lora_pair(ParamStore<T>& store, const std::string& stem, std::size_t in, std::size_t out, std::size_t rank,
                   std::uint64_t seed) {
    auto rng = named_rng(seed, stem + ".A");
    store.add(stem + ".A", normal_tensor<T>({rank, in}, 0.02, rng));
    store.add(stem + ".B", Tensor<T>({out, rank}));
}

std::string lora_stem(std::size_t layer, LoraTarget target) {
    return "lora." + std::to_string(layer) + "." + to_string(target);
}

template <typename T>
std::vector<Var<T>> materialize_prefixes(Graph<T>& g, const std::string& stem, const EncoderConfig& config) {
    Var<T> source = g.param(prefix_source_name);
    std::vector<Var<T>> out;
    out.reserve(config.layers() + 1);
    for (std::size_t point = 0; point <= config.layers(); ++point) {
        const std::string base = stem + ".mlp." + std::to_string(point) + ".";
        Var<T> hidden = relu(linear(source, g.param(base + "down.weight"), g.param(base + "down.bias")));
        out.push_back(linear(hidden, g.param(base + "up.weight"), g.param(base + "up.bias")));
    }
    return out;
}

template <typename T>
Var<T> apply_prefix(Var<T> hidden, Var<T> prefix) {
    if (!prefix.valid() || prefix.value().numel() == 0) {
        return hidden;
    }
    if (hidden.rows() < prefix.rows()) {
        throw ContractError("apply_prefix: sequence of " + std::to_string(hidden.rows()) + " rows is shorter than " +
                            std::to_string(prefix.rows()) + " prefix slots");
    }
    return overwrite_rows(hidden, 0, prefix);
}

template <typename T>
Var<T> prompt_prepend(Var<T> embeddings, Var<T> prompt, std::size_t max_seq_len) {
    if (!prompt.valid() || prompt.value().numel() == 0) {
        return embeddings;
    }
    if (prompt.rows() + embeddings.rows() > max_seq_len) {
        throw LengthError("prompt of " + std::to_string(prompt.rows()) + " plus " + std::to_string(embeddings.rows()) +
                          " tokens exceeds max_seq_len " + std::to_string(max_seq_len));
    }
    return concat_rows<T>({prompt, embeddings});
}

template <typename T>
Tensor<T> lora_merged_weight(const Tensor<T>& w0, const Tensor<T>& a, const Tensor<T>& b, double scale) {
    if (b.cols() != a.rows() || b.rows() != w0.rows() || a.cols() != w0.cols()) {
        throw DimensionError("lora merge: W0 " + shape_string(w0.shape()) + ", A " + shape_string(a.shape()) +
                             ", B " + shape_string(b.shape()) + " do not align");
    }
    Tensor<T> delta = kernels::matmul(b, a);
    Tensor<T> out = w0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = static_cast<T>(out[i] + static_cast<T>(scale) * delta[i]);
    }
    return out;
}

template <typename T>
void lora_merge(ParamStore<T>& store, const std::string& weight_name, const std::string& stem, double scale) {
    Tensor<T> merged =
        lora_merged_weight(store.get(weight_name), store.get(stem + ".A"), store.get(stem + ".B"), scale);
    store.mutable_tensor(weight_name) = std::move(merged);
    store.mutable_tensor(stem + ".B").fill(T(0));
}

template <typename T>
FreezePlan build_freeze_plan(const LftSpec& spec, const ParamStore<T>& store, HybridPhase phase) {
    std::vector<std::string> namespaces;
    if (const auto* h = std::get_if<Hybrid>(&spec)) {
        if (phase != HybridPhase::second) {
            namespaces.push_back(module_namespace(h->first));
        }
        if (phase != HybridPhase::first) {
            namespaces.push_back(module_namespace(h->second));
        }
    } else {
        for (const auto& m : modules_of(spec)) {
            namespaces.push_back(module_namespace(m));
        }
    }
    const bool full = is_full_ft(spec);
    FreezePlan plan;
    for (const auto& name : store.names()) {
        bool train = starts_with(name, "ranker.");
        for (const auto& ns : namespaces) {
            train = train || starts_with(name, ns);
        }
        if (full && !starts_with(name, "prompt.") && !starts_with(name, "prefix.") && !starts_with(name, "lora.")) {
            train = true;
        }
        if (train) {
            plan.trainable.insert(name);
        }
    }
    return plan;
}

StageInfo hybrid_stage(const Hybrid& spec, std::size_t epoch) {
    const std::size_t total = spec.m_epochs + spec.n_epochs;
    if (epoch >= total) {
        throw ScheduleError("epoch " + std::to_string(epoch) + " outside hybrid schedule of " + std::to_string(total) +
                            " epochs");
    }
    StageInfo info;
    if (spec.mode == HybridMode::concurrent) {
        info.stage = 0;
        info.first_active = true;
        info.second_active = true;
        return info;
    }
    if (epoch < spec.m_epochs) {
        info.stage = 1;
        info.first_active = true;
        info.second_active = false;
    } else {
        info.stage = 2;
        info.first_active = false;
        info.second_active = true;
        info.boundary = epoch == spec.m_epochs;
    }
    return info;
}

std::size_t count_trainable(const LftSpec& spec, const EncoderConfig& config, CountConvention convention) {
    if (is_full_ft(spec)) {
        return count_parameters(config);
    }
    std::size_t total = 0;
    for (const auto& m : modules_of(spec)) {
        total += count_module(m, config, convention);
    }
    return total;
}

std::string format_count(std::size_t count) {
    if (count == 0) {
        return "0";
    }
    const double value = static_cast<double>(count);
    const int digits = static_cast<int>(std::floor(std::log10(value))) + 1;
    const int significant = value >= 1e7 ? 2 : 1;
    const double unit = std::pow(10.0, digits - significant);
    const double rounded = std::round(value / unit) * unit;
    char buf[32];
    if (rounded < 1e5) {
        std::snprintf(buf, sizeof buf, "%gK", rounded / 1e3);
    } else {
        std::snprintf(buf, sizeof buf, "%gM", rounded / 1e6);
    }
    return buf;
}

#define LFTRANK_INSTANTIATE_LFT(T)                                                                              \
    template void add_prompt<T>(ParamStore<T>&, const PromptTuning&, const EncoderConfig&, std::uint64_t);     \
    template void add_prefix_source<T>(ParamStore<T>&, const PrefixTuning&, std::uint64_t);                     \
    template void add_prefix_mlps<T>(ParamStore<T>&, const std::string&, const PrefixTuning&,                   \
                                     const EncoderConfig&, std::uint64_t);                                      \
    template void add_lora_pair<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t, std::size_t,   \
                                   std::uint64_t);                                                              \
    template std::vector<Var<T>> materialize_prefixes<T>(Graph<T>&, const std::string&, const EncoderConfig&);  \
    template Var<T> apply_prefix<T>(Var<T>, Var<T>);                                                            \
    template Var<T> prompt_prepend<T>(Var<T>, Var<T>, std::size_t);                                             \
    template Tensor<T> lora_merged_weight<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);     \
    template void lora_merge<T>(ParamStore<T>&, const std::string&, const std::string&, double);                \
    template FreezePlan build_freeze_plan<T>(const LftSpec&, const ParamStore<T>&, HybridPhase);

LFTRANK_INSTANTIATE_LFT(float)
LFTRANK_INSTANTIATE_LFT(double)

}  // namespace lftrank
