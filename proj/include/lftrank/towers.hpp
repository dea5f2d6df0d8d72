// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lftrank/lft.hpp"

namespace lftrank {

/// How the two towers of a semi-Siamese model combine prefixes. `off`
/// shares the prefix module Siamese-style (or the spec has none).
enum class PrefixSharing { average, concat, none, off };

/// Which LoRA targets get tower-specific modules. shared_q keeps one q
/// module and splits v; shared_v mirrors it; hetero_both splits both.
/// `off` shares every LoRA module (or the spec has none).
enum class LoraSharing { shared_q, shared_v, hetero_both, off };

struct CrossBinding {};
struct SiameseBinding {};
struct SemiSiameseBinding {
    PrefixSharing prefix = PrefixSharing::average;
    LoraSharing lora = LoraSharing::shared_q;
    // concat: leading positions taken from the tower-specific prefixes; the
    // rest come from the common prefixes.
    std::size_t concat_specific = 5;
};
struct HeteroFullBinding {};

using TowerBinding = std::variant<CrossBinding, SiameseBinding, SemiSiameseBinding, HeteroFullBinding>;

enum class Tower { joint, query, document };

const char* to_string(PrefixSharing v);
const char* to_string(LoraSharing v);
const char* to_string(Tower t);
std::string describe(const TowerBinding& binding);

bool is_cross(const TowerBinding& binding);

/// Throws ConfigError when binding and spec disagree.
void validate_binding(const TowerBinding& binding, const LftSpec& spec, const EncoderConfig& config);

/// Name prefix of the encoder weights a tower reads ("" or "doc.").
std::string encoder_scope(const TowerBinding& binding, Tower tower);

/// Adds every adapter parameter the spec and binding need.
template <typename T>
void add_adapters(ParamStore<T>& store, const LftSpec& spec, const TowerBinding& binding,
                  const EncoderConfig& config, std::uint64_t seed);

/// Combines common and tower-specific materialized prefixes, point by point.
template <typename T>
std::vector<Var<T>> ss_prefix_compose(const std::vector<Var<T>>& common, const std::vector<Var<T>>& specific,
                                      PrefixSharing variant, std::size_t concat_specific);

/// LoRA parameter stems (`{stem}.A`, `{stem}.B`) per layer and target for a
/// tower. Shared targets resolve to the same stem for both towers.
using LoraRouting = std::vector<std::array<std::optional<std::string>, 3>>;

LoraRouting ss_lora_bind(const LoraTuning& lora, const TowerBinding& binding, Tower tower, std::size_t layers);

/// Adapter hooks for one tower, with prefixes memoized per graph.
template <typename T>
AdapterHooks<T> tower_hooks(Graph<T>& graph, const LftSpec& spec, const TowerBinding& binding,
                            const EncoderConfig& config, Tower tower);

template <typename T>
std::vector<Var<T>> encode_tower(Graph<T>& graph, const LftSpec& spec, const TowerBinding& binding,
                                 const EncoderConfig& config, Tower tower, const TokenSequence& seq);

/// count_trainable extended to tower-specific modules and heterogeneous
/// full fine-tuning.
std::size_t count_trainable(const LftSpec& spec, const TowerBinding& binding, const EncoderConfig& config,
                            CountConvention convention);

}  // namespace lftrank
