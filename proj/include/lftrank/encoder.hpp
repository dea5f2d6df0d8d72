// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lftrank/graph.hpp"
#include "lftrank/optim.hpp"

namespace lftrank {

using TokenIds = std::vector<std::int32_t>;

// Reserved vocabulary ids.
namespace token {
inline constexpr std::int32_t pad = 0;
inline constexpr std::int32_t cls = 1;
inline constexpr std::int32_t sep = 2;
inline constexpr std::int32_t mask = 3;
inline constexpr std::int32_t unk = 4;
inline constexpr std::int32_t first_free = 5;
}  // namespace token

enum class Precision { f32, f64 };

/// Transformer hyperparameters. Validated on construction.
class EncoderConfig {
public:
    struct Dims {
        std::size_t layers = 2;
        std::size_t model_dim = 64;
        std::size_t heads = 4;
        std::size_t ffn_dim = 256;
        std::size_t vocab_size = 512;
        std::size_t max_seq_len = 128;
        double dropout_rate = 0.1;
        Precision precision = Precision::f32;
    };

    explicit EncoderConfig(Dims dims);

    /// L=12, d=768, H=12, ffn=3072, vocab=30522, max_seq=512.
    static EncoderConfig bert_base_like();

    const Dims& dims() const { return dims_; }
    std::size_t layers() const { return dims_.layers; }
    std::size_t model_dim() const { return dims_.model_dim; }
    std::size_t heads() const { return dims_.heads; }
    std::size_t head_dim() const { return dims_.model_dim / dims_.heads; }
    std::size_t ffn_dim() const { return dims_.ffn_dim; }
    std::size_t vocab_size() const { return dims_.vocab_size; }
    std::size_t max_seq_len() const { return dims_.max_seq_len; }
    double dropout_rate() const { return dims_.dropout_rate; }
    Precision precision() const { return dims_.precision; }

    static constexpr double layer_norm_eps = 1e-12;
    static constexpr std::size_t segment_count = 2;

private:
    Dims dims_;
};

/// Token ids with attention mask and segment ids. Padding, when present, is
/// a contiguous suffix.
struct TokenSequence {
    TokenIds ids;
    std::vector<std::uint8_t> mask;
    std::vector<std::int32_t> segments;

    std::size_t length() const { return ids.size(); }
    std::size_t real_length() const;
    void validate() const;

    TokenSequence padded_to(std::size_t length) const;
};

/// [CLS] text [SEP], text truncated so the sequence fits `capacity`.
TokenSequence single_sequence(const TokenIds& text, std::size_t capacity);

/// [CLS] query [SEP] document [SEP] with segments 0/1; the document is
/// truncated first.
TokenSequence pair_sequence(const TokenIds& query, const TokenIds& document, std::size_t capacity);

template <typename T>
struct LoraHook {
    Var<T> a;  // [rank × in]
    Var<T> b;  // [out × rank]
    double scale = 1.0;
    double dropout = 0.0;
};

template <typename T>
struct LayerLoraHooks {
    std::optional<LoraHook<T>> q;
    std::optional<LoraHook<T>> v;
    std::optional<LoraHook<T>> dense;
};

/// Adapter state routed into one encode call. Slots are the leading
/// positions reserved for prompt or prefix vectors.
/// x·W0ᵀ + bias + scale·(dropout(x)·Aᵀ)·Bᵀ; the frozen path alone when
/// hook is null. Dropout applies only while the graph is training.
template <typename T>
Var<T> lora_forward(Graph<T>& graph, Var<T> x, Var<T> weight, Var<T> bias, const LoraHook<T>* hook);

template <typename T>
struct AdapterHooks {
    std::size_t slots = 0;
    std::optional<Var<T>> prompt;      // [slots × d], embedding layer only
    std::vector<Var<T>> prefixes;      // L+1 entries of [slots × d], or empty
    std::vector<LayerLoraHooks<T>> lora;  // L entries, or empty
};

/// Parameter name under the encoder naming scheme, e.g.
/// encoder_param("doc.", 3, "attn.wq.weight") == "doc.layer.3.attn.wq.weight".
std::string layer_param(const std::string& scope, std::size_t layer, const std::string& leaf);

/// Every parameter name and shape of an encoder, in naming-scheme order.
std::vector<std::pair<std::string, Shape>> encoder_layout(const EncoderConfig& config,
                                                          const std::string& scope = "");

/// True when `name` (with the scope stripped) parses against the scheme.
bool is_encoder_param_name(const std::string& name, const EncoderConfig& config);

/// Seeded initialization: N(0, 0.02) weights, zero biases, unit LN gains.
template <typename T>
ParamStore<T> init_encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& scope = "");

/// Closed-form parameter count of an encoder.
std::size_t count_parameters(const EncoderConfig& config);

/// Per-layer hidden states: index 0 is the embedding output, index ℓ the
/// output of transformer layer ℓ. Each entry is [slots + seq.length() × d].
template <typename T>
std::vector<Var<T>> encode(Graph<T>& graph, const EncoderConfig& config, const TokenSequence& seq,
                           const AdapterHooks<T>& hooks, const std::string& scope = "");

/// Self-attention sublayer with residual and layer norm. q, v and dense
/// projections route through the LoRA hooks when present.
template <typename T>
Var<T> attention_block(Graph<T>& graph, const EncoderConfig& config, const std::string& scope,
                       std::size_t layer, Var<T> hidden, std::span<const std::uint8_t> key_mask,
                       const LayerLoraHooks<T>& lora);

struct PretrainSchedule {
    std::size_t steps = 500;
    std::size_t batch_size = 8;
    double mask_prob = 0.15;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

template <typename T>
struct PretrainResult {
    ParamStore<T> encoder;
    ParamStore<T> head;  // mlm.* prediction head, not part of the encoder state
    std::vector<double> losses;
};

/// Masked-token pre-training used in place of published BERT weights.
template <typename T>
PretrainResult<T> pretrain_masked(const std::vector<TokenIds>& corpus, const EncoderConfig& config,
                                  const PretrainSchedule& schedule);

/// Fraction of masked positions predicted correctly on `corpus`, with the
/// same masking procedure as pre-training (no dropout).
template <typename T>
double masked_token_accuracy(const ParamStore<T>& encoder, const ParamStore<T>& head,
                             const EncoderConfig& config, const std::vector<TokenIds>& corpus,
                             double mask_prob, std::uint64_t seed);

}  // namespace lftrank
