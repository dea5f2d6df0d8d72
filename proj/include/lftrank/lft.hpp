// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "lftrank/encoder.hpp"

namespace lftrank {

enum class LoraTarget { q, v, dense };

const char* to_string(LoraTarget target);

struct FullFT {};

struct PromptTuning {
    std::size_t prompt_len = 10;
};

struct PrefixTuning {
    std::size_t prefix_len = 10;
    std::size_t source_dim = 768;
    std::size_t mlp_hidden = 256;
};

/// LoRA on q and v; LoRA+ (plus = true) adds the post-attention dense
/// projection.
struct LoraTuning {
    std::size_t rank = 16;
    double alpha = 32.0;
    double dropout = 0.1;
    bool plus = false;

    std::vector<LoraTarget> targets() const;
    double scale() const { return alpha / static_cast<double>(rank); }
};

using LftModule = std::variant<PromptTuning, PrefixTuning, LoraTuning>;

enum class HybridMode { sequential, concurrent };

struct Hybrid {
    LftModule first;
    LftModule second;
    HybridMode mode = HybridMode::sequential;
    std::size_t m_epochs = 30;
    std::size_t n_epochs = 10;
};

using LftSpec = std::variant<FullFT, PromptTuning, PrefixTuning, LoraTuning, Hybrid>;

/// Throws ConfigError naming the offending field.
void validate_spec(const LftSpec& spec, const EncoderConfig& config);

std::string describe(const LftSpec& spec);

/// The adapter modules of a spec in training order (empty for FullFT).
std::vector<LftModule> modules_of(const LftSpec& spec);

const PromptTuning* prompt_of(const LftSpec& spec);
const PrefixTuning* prefix_of(const LftSpec& spec);
const LoraTuning* lora_of(const LftSpec& spec);
bool is_full_ft(const LftSpec& spec);

/// Leading sequence positions reserved for prompt or prefix vectors.
std::size_t slot_count(const LftSpec& spec);

/// Name prefix owning a module's parameters: "prompt.", "prefix." or "lora.".
std::string module_namespace(const LftModule& module);

// Parameter construction --------------------------------------------------

inline const std::string prefix_source_name = "prefix.source";
inline const std::string prompt_name = "prompt.embeddings";

template <typename T>
void add_prompt(ParamStore<T>& store, const PromptTuning& spec, const EncoderConfig& config, std::uint64_t seed);

/// Shared source at prefix.source ~ N(0, 1).
template <typename T>
void add_prefix_source(ParamStore<T>& store, const PrefixTuning& spec, std::uint64_t seed);

/// L+1 MLP stacks under `{stem}.mlp.{point}.{down,up}.{weight,bias}`.
template <typename T>
void add_prefix_mlps(ParamStore<T>& store, const std::string& stem, const PrefixTuning& spec,
                     const EncoderConfig& config, std::uint64_t seed);

/// `{stem}.A` [rank × in] ~ N(0, 0.02) and `{stem}.B` [out × rank] = 0.
template <typename T>
void add_lora_pair(ParamStore<T>& store, const std::string& stem, std::size_t in, std::size_t out, std::size_t rank,
                   std::uint64_t seed);

std::string lora_stem(std::size_t layer, LoraTarget target);

// Forward pieces ------------------------------------------------------------

/// Prefix vectors for every prepend point: entry ℓ row i is
/// up_ℓ(ReLU(down_ℓ(source[i]))). Recomputed per graph, so gradients reach
/// the source and every MLP.
template <typename T>
std::vector<Var<T>> materialize_prefixes(Graph<T>& graph, const std::string& stem, const EncoderConfig& config);

/// Replaces the first prefix.rows() rows of hidden. Identity for an invalid
/// or empty prefix.
template <typename T>
Var<T> apply_prefix(Var<T> hidden, Var<T> prefix);

/// Prompt rows followed by the embedding rows.
template <typename T>
Var<T> prompt_prepend(Var<T> embeddings, Var<T> prompt, std::size_t max_seq_len);

// Merging -------------------------------------------------------------------

/// W0 + scale·B·A.
template <typename T>
Tensor<T> lora_merged_weight(const Tensor<T>& w0, const Tensor<T>& a, const Tensor<T>& b, double scale);

/// Folds `{stem}.{A,B}` into the named weight and zeroes B so a second merge
/// is a no-op.
template <typename T>
void lora_merge(ParamStore<T>& store, const std::string& weight_name, const std::string& stem, double scale);

// Freezing and scheduling ---------------------------------------------------

enum class HybridPhase { both, first, second };

struct FreezePlan {
    std::set<std::string> trainable;

    template <typename T>
    void apply(ParamStore<T>& store) const {
        for (const auto& name : store.names()) {
            store.set_trainable(name, trainable.count(name) != 0);
        }
    }

    template <typename T>
    std::size_t element_count(const ParamStore<T>& store, bool include_ranker = true) const {
        std::size_t n = 0;
        for (const auto& name : trainable) {
            if (include_ranker || name.rfind("ranker.", 0) != 0) {
                n += store.get(name).numel();
            }
        }
        return n;
    }
};

/// Trainable names over an assembled model store. Ranker parameters are
/// always trainable; encoder parameters only under FullFT.
template <typename T>
FreezePlan build_freeze_plan(const LftSpec& spec, const ParamStore<T>& store, HybridPhase phase = HybridPhase::both);

struct StageInfo {
    int stage = 1;                 // 1 or 2; 0 under concurrent training
    bool first_active = true;
    bool second_active = false;
    bool boundary = false;         // first epoch of stage 2
};

StageInfo hybrid_stage(const Hybrid& spec, std::size_t epoch);

// Parameter accounting ------------------------------------------------------

enum class CountConvention { optimizer, retained };

/// Trainable adapter parameters (ranker excluded) for a Siamese or
/// cross-encoder model. Retained counting keeps materialized prefixes
/// instead of source and MLPs.
std::size_t count_trainable(const LftSpec& spec, const EncoderConfig& config, CountConvention convention);

/// Compact display: one significant figure in K below 100,000, otherwise in
/// M, with two significant figures from 10M up. 7680 -> "8K",
/// 589824 -> "0.6M", 108891648 -> "110M".
std::string format_count(std::size_t count);

}  // namespace lftrank
