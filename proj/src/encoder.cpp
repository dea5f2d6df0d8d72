// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/encoder.hpp"

#include "lftrank/lft.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace lftrank {

EncoderConfig::EncoderConfig(Dims dims) : dims_(dims) {
    const auto positive = [](std::size_t v, const char* key) {
        if (v == 0) {
            throw ConfigError(std::string("encoder.") + key + " must be positive");
        }
    };
    positive(dims.layers, "layers");
    positive(dims.model_dim, "model_dim");
    positive(dims.heads, "heads");
    positive(dims.ffn_dim, "ffn_dim");
    positive(dims.vocab_size, "vocab_size");
    positive(dims.max_seq_len, "max_seq_len");
    if (dims.model_dim % dims.heads != 0) {
        throw ConfigError("encoder.model_dim (" + std::to_string(dims.model_dim) +
                          ") is not divisible by encoder.heads (" + std::to_string(dims.heads) + ")");
    }
    if (dims.vocab_size <= static_cast<std::size_t>(token::first_free)) {
        throw ConfigError("encoder.vocab_size must exceed the reserved token ids");
    }
    if (dims.max_seq_len < 3) {
        throw ConfigError("encoder.max_seq_len must be at least 3");
    }
    if (!(dims.dropout_rate >= 0.0 && dims.dropout_rate < 1.0)) {
        throw ConfigError("encoder.dropout must lie in [0, 1)");
    }
}

EncoderConfig EncoderConfig::bert_base_like() {
    Dims dims;
    dims.layers = 12;
    dims.model_dim = 768;
    dims.heads = 12;
    dims.ffn_dim = 3072;
    dims.vocab_size = 30522;
    dims.max_seq_len = 512;
    return EncoderConfig(dims);
}

std::size_t TokenSequence::real_length() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

void TokenSequence::validate() const {
    if (mask.size() != ids.size() || segments.size() != ids.size()) {
        throw DimensionError("token sequence fields disagree in length");
    }
    bool in_padding = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] > 1) {
            throw ContractError("attention mask values must be 0 or 1");
        }
        if (mask[i] == 0) {
            in_padding = true;
        } else if (in_padding) {
            throw ContractError("padding must be a contiguous suffix (real token at position " +
                                std::to_string(i) + ")");
        }
    }
}

TokenSequence TokenSequence::padded_to(std::size_t length) const {
    if (length < ids.size()) {
        throw LengthError("cannot pad a sequence of length " + std::to_string(ids.size()) + " to " +
                          std::to_string(length));
    }
    TokenSequence out = *this;
    out.ids.resize(length, token::pad);
    out.mask.resize(length, 0);
    out.segments.resize(length, 0);
    return out;
}

TokenSequence single_sequence(const TokenIds& text, std::size_t capacity) {
    if (capacity < 2) {
        throw LengthError("sequence capacity " + std::to_string(capacity) + " leaves no room for [CLS] and [SEP]");
    }
    const std::size_t keep = std::min(text.size(), capacity - 2);
    TokenSequence seq;
    seq.ids.reserve(keep + 2);
    seq.ids.push_back(token::cls);
    seq.ids.insert(seq.ids.end(), text.begin(), text.begin() + static_cast<std::ptrdiff_t>(keep));
    seq.ids.push_back(token::sep);
    seq.mask.assign(seq.ids.size(), 1);
    seq.segments.assign(seq.ids.size(), 0);
    return seq;
}

TokenSequence pair_sequence(const TokenIds& query, const TokenIds& document, std::size_t capacity) {
    if (capacity < 4) {
        throw LengthError("sequence capacity " + std::to_string(capacity) + " too small for a pair");
    }
    const std::size_t q_keep = std::min(query.size(), capacity - 3);
    const std::size_t d_keep = std::min(document.size(), capacity - 3 - q_keep);
    TokenSequence seq;
    seq.ids.push_back(token::cls);
    seq.ids.insert(seq.ids.end(), query.begin(), query.begin() + static_cast<std::ptrdiff_t>(q_keep));
    seq.ids.push_back(token::sep);
    const std::size_t first_segment = seq.ids.size();
    seq.ids.insert(seq.ids.end(), document.begin(), document.begin() + static_cast<std::ptrdiff_t>(d_keep));
    seq.ids.push_back(token::sep);
    seq.mask.assign(seq.ids.size(), 1);
    seq.segments.assign(seq.ids.size(), 0);
    std::fill(seq.segments.begin() + static_cast<std::ptrdiff_t>(first_segment), seq.segments.end(), 1);
    return seq;
}

std::string layer_param(const std::string& scope, std::size_t layer, const std::string& leaf) {
    return scope + "layer." + std::to_string(layer) + "." + leaf;
}

std::vector<std::pair<std::string, Shape>> encoder_layout(const EncoderConfig& config, const std::string& scope) {
    const std::size_t d = config.model_dim();
    const std::size_t f = config.ffn_dim();
    std::vector<std::pair<std::string, Shape>> out{
        {scope + "embeddings.token", {config.vocab_size(), d}},
        {scope + "embeddings.position", {config.max_seq_len(), d}},
        {scope + "embeddings.segment", {EncoderConfig::segment_count, d}},
        {scope + "embeddings.ln.gain", {d}},
        {scope + "embeddings.ln.bias", {d}},
    };
    for (std::size_t l = 0; l < config.layers(); ++l) {
        for (const char* proj : {"wq", "wk", "wv", "dense"}) {
            out.push_back({layer_param(scope, l, std::string("attn.") + proj + ".weight"), {d, d}});
            out.push_back({layer_param(scope, l, std::string("attn.") + proj + ".bias"), {d}});
        }
        out.push_back({layer_param(scope, l, "ffn.up.weight"), {f, d}});
        out.push_back({layer_param(scope, l, "ffn.up.bias"), {f}});
        out.push_back({layer_param(scope, l, "ffn.down.weight"), {d, f}});
        out.push_back({layer_param(scope, l, "ffn.down.bias"), {d}});
        for (const char* ln : {"ln1", "ln2"}) {
            out.push_back({layer_param(scope, l, std::string(ln) + ".gain"), {d}});
            out.push_back({layer_param(scope, l, std::string(ln) + ".bias"), {d}});
        }
    }
    return out;
}

bool is_encoder_param_name(const std::string& name, const EncoderConfig& config) {
    std::string stem = name;
    if (stem.rfind("doc.", 0) == 0) {
        stem = stem.substr(4);
    }
    if (stem.rfind("embeddings.", 0) == 0) {
        static const std::vector<std::string> leaves{"token", "position", "segment", "ln.gain", "ln.bias"};
        return std::find(leaves.begin(), leaves.end(), stem.substr(11)) != leaves.end();
    }
    if (stem.rfind("layer.", 0) != 0) {
        return false;
    }
    std::istringstream in(stem.substr(6));
    std::size_t layer = 0;
    char dot = 0;
    if (!(in >> layer) || !in.get(dot) || dot != '.' || layer >= config.layers()) {
        return false;
    }
    std::string leaf;
    std::getline(in, leaf);
    static const std::vector<std::string> leaves{
        "attn.wq.weight", "attn.wq.bias", "attn.wk.weight",   "attn.wk.bias",  "attn.wv.weight",
        "attn.wv.bias",   "attn.dense.weight", "attn.dense.bias", "ffn.up.weight", "ffn.up.bias",
        "ffn.down.weight", "ffn.down.bias", "ln1.gain", "ln1.bias", "ln2.gain", "ln2.bias"};
    return std::find(leaves.begin(), leaves.end(), leaf) != leaves.end();
}

template <typename T>
ParamStore<T> init_encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& scope) {
    ParamStore<T> store;
    for (auto& [name, shape] : encoder_layout(config, scope)) {
        const bool is_gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
        const bool is_bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
        if (is_gain) {
            store.add(name, Tensor<T>(shape, T(1)));
        } else if (is_bias) {
            store.add(name, Tensor<T>(shape));
        } else {
            // Seeds ignore the scope so a document tower starts as a copy.
            auto rng = named_rng(seed, name.substr(scope.size()));
            store.add(name, normal_tensor<T>(shape, 0.02, rng));
        }
    }
    return store;
}

std::size_t count_parameters(const EncoderConfig& config) {
    const std::size_t d = config.model_dim();
    const std::size_t f = config.ffn_dim();
    const std::size_t embeddings = (config.vocab_size() + config.max_seq_len() + EncoderConfig::segment_count) * d + 2 * d;
    const std::size_t block = 4 * (d * d + d) + (f * d + f) + (d * f + d) + 4 * d;
    return embeddings + config.layers() * block;
}

template <typename T>
Var<T> lora_forward(Graph<T>& g, Var<T> x, Var<T> weight, Var<T> bias, const LoraHook<T>* hook) {
    Var<T> base = linear(x, weight, bias);
    if (hook == nullptr) {
        return base;
    }
    Var<T> input = dropout(x, g.dropout_rate(hook->dropout), g.rng());
    Var<T> delta = matmul_nt(matmul_nt(input, hook->a), hook->b);
    return add(base, scale(delta, static_cast<T>(hook->scale)));
}

namespace {

template <typename T>
Var<T> projection(Graph<T>& g, Var<T> x, const std::string& stem, const std::optional<LoraHook<T>>& hook) {
    return lora_forward(g, x, g.param(stem + ".weight"), g.param(stem + ".bias"), hook ? &*hook : nullptr);
}

template <typename T>
Var<T> ffn_block(Graph<T>& g, const EncoderConfig& config, const std::string& scope, std::size_t layer,
                 Var<T> hidden) {
    Var<T> up = gelu(linear(hidden, g.param(layer_param(scope, layer, "ffn.up.weight")),
                            g.param(layer_param(scope, layer, "ffn.up.bias"))));
    Var<T> down = linear(up, g.param(layer_param(scope, layer, "ffn.down.weight")),
                         g.param(layer_param(scope, layer, "ffn.down.bias")));
    down = dropout(down, g.dropout_rate(config.dropout_rate()), g.rng());
    return layer_norm(add(hidden, down), g.param(layer_param(scope, layer, "ln2.gain")),
                      g.param(layer_param(scope, layer, "ln2.bias")), EncoderConfig::layer_norm_eps);
}

}  // namespace

template <typename T>
Var<T> attention_block(Graph<T>& g, const EncoderConfig& config, const std::string& scope, std::size_t layer,
                       Var<T> hidden, std::span<const std::uint8_t> key_mask, const LayerLoraHooks<T>& lora) {
    if (hidden.cols() != config.model_dim() || hidden.rows() != key_mask.size()) {
        throw DimensionError("attention_block: hidden " + shape_string(hidden.value().shape()) +
                             " does not match d=" + std::to_string(config.model_dim()) + " and mask length " +
                             std::to_string(key_mask.size()));
    }
    const std::string attn = layer_param(scope, layer, "attn.");
    Var<T> q = projection(g, hidden, attn + "wq", lora.q);
    Var<T> k = projection(g, hidden, attn + "wk", std::optional<LoraHook<T>>{});
    Var<T> v = projection(g, hidden, attn + "wv", lora.v);

    const std::size_t dh = config.head_dim();
    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Var<T>> heads;
    heads.reserve(config.heads());
    for (std::size_t h = 0; h < config.heads(); ++h) {
        Var<T> qh = config.heads() == 1 ? q : slice_cols(q, h * dh, dh);
        Var<T> kh = config.heads() == 1 ? k : slice_cols(k, h * dh, dh);
        Var<T> vh = config.heads() == 1 ? v : slice_cols(v, h * dh, dh);
        Var<T> weights = masked_softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_mask);
        weights = dropout(weights, g.dropout_rate(config.dropout_rate()), g.rng());
        heads.push_back(matmul(weights, vh));
    }
    Var<T> context = heads.size() == 1 ? heads.front() : concat_cols(heads);
    Var<T> out = projection(g, context, attn + "dense", lora.dense);
    return layer_norm(add(hidden, out), g.param(layer_param(scope, layer, "ln1.gain")),
                      g.param(layer_param(scope, layer, "ln1.bias")), EncoderConfig::layer_norm_eps);
}

template <typename T>
std::vector<Var<T>> encode(Graph<T>& g, const EncoderConfig& config, const TokenSequence& seq,
                           const AdapterHooks<T>& hooks, const std::string& scope) {
    seq.validate();
    const std::size_t slots = hooks.slots;
    const std::size_t n = slots + seq.length();
    if (n > config.max_seq_len()) {
        throw LengthError("sequence of " + std::to_string(seq.length()) + " tokens plus " + std::to_string(slots) +
                          " slots exceeds max_seq_len " + std::to_string(config.max_seq_len()));
    }
    if (seq.length() == 0) {
        throw LengthError("cannot encode an empty sequence");
    }
    if (!hooks.prefixes.empty() && hooks.prefixes.size() != config.layers() + 1) {
        throw ContractError("prefix hooks need " + std::to_string(config.layers() + 1) + " points, got " +
                            std::to_string(hooks.prefixes.size()));
    }
    if (!hooks.lora.empty() && hooks.lora.size() != config.layers()) {
        throw ContractError("LoRA hooks need one entry per layer");
    }
    for (std::int32_t id : seq.ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size()) {
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(config.vocab_size()));
        }
    }

    const std::size_t d = config.model_dim();
    Var<T> tokens = gather_rows(g.param(scope + "embeddings.token"), std::span<const std::int32_t>(seq.ids));
    if (slots > 0) {
        Var<T> slot_rows = hooks.prompt ? *hooks.prompt : g.constant(Tensor<T>({slots, d}));
        if (slot_rows.rows() != slots || slot_rows.cols() != d) {
            throw DimensionError("slot embeddings " + shape_string(slot_rows.value().shape()) + " do not match " +
                                 std::to_string(slots) + " slots of width " + std::to_string(d));
        }
        tokens = prompt_prepend(tokens, slot_rows, config.max_seq_len());
    }

    std::vector<std::int32_t> positions(n);
    std::iota(positions.begin(), positions.end(), 0);
    std::vector<std::int32_t> segments(slots, 0);
    segments.insert(segments.end(), seq.segments.begin(), seq.segments.end());
    std::vector<std::uint8_t> key_mask(slots, 1);
    key_mask.insert(key_mask.end(), seq.mask.begin(), seq.mask.end());

    Var<T> embedded = add(add(tokens, gather_rows(g.param(scope + "embeddings.position"),
                                                  std::span<const std::int32_t>(positions))),
                          gather_rows(g.param(scope + "embeddings.segment"), std::span<const std::int32_t>(segments)));
    Var<T> hidden = layer_norm(embedded, g.param(scope + "embeddings.ln.gain"), g.param(scope + "embeddings.ln.bias"),
                               EncoderConfig::layer_norm_eps);

    std::vector<Var<T>> states;
    states.reserve(config.layers() + 1);
    if (!hooks.prefixes.empty()) {
        hidden = apply_prefix(hidden, hooks.prefixes[0]);
    }
    states.push_back(hidden);
    static const LayerLoraHooks<T> no_lora{};
    for (std::size_t l = 0; l < config.layers(); ++l) {
        const LayerLoraHooks<T>& lora = hooks.lora.empty() ? no_lora : hooks.lora[l];
        hidden = attention_block(g, config, scope, l, hidden, std::span<const std::uint8_t>(key_mask), lora);
        hidden = ffn_block(g, config, scope, l, hidden);
        if (!hooks.prefixes.empty()) {
            hidden = apply_prefix(hidden, hooks.prefixes[l + 1]);
        }
        states.push_back(hidden);
    }
    return states;
}

namespace {

struct MaskedExample {
    TokenSequence seq;
    std::vector<std::int32_t> positions;
    std::vector<std::int32_t> targets;
};

MaskedExample mask_example(const TokenIds& text, const EncoderConfig& config, double mask_prob,
                           std::mt19937_64& rng) {
    MaskedExample ex;
    ex.seq = single_sequence(text, config.max_seq_len());
    const std::size_t real = ex.seq.length() - 2;
    std::bernoulli_distribution pick(mask_prob);
    for (std::size_t i = 1; i <= real; ++i) {
        if (pick(rng)) {
            ex.positions.push_back(static_cast<std::int32_t>(i));
        }
    }
    if (ex.positions.empty() && real > 0) {
        std::uniform_int_distribution<std::size_t> any(1, real);
        ex.positions.push_back(static_cast<std::int32_t>(any(rng)));
    }
    for (std::int32_t p : ex.positions) {
        ex.targets.push_back(ex.seq.ids[static_cast<std::size_t>(p)]);
        ex.seq.ids[static_cast<std::size_t>(p)] = token::mask;
    }
    return ex;
}

template <typename T>
Var<T> masked_logits(Graph<T>& g, const EncoderConfig& config, const MaskedExample& ex) {
    auto states = encode(g, config, ex.seq, AdapterHooks<T>{});
    Var<T> rows = gather_rows(states.back(), std::span<const std::int32_t>(ex.positions));
    return linear(rows, g.param("mlm.weight"), g.param("mlm.bias"));
}

template <typename T>
ParamStore<T> mlm_head(const EncoderConfig& config, std::uint64_t seed) {
    ParamStore<T> head;
    auto rng = named_rng(seed, "mlm.weight");
    head.add("mlm.weight", normal_tensor<T>({config.vocab_size(), config.model_dim()}, 0.02, rng), true);
    head.add("mlm.bias", Tensor<T>({config.vocab_size()}), true);
    return head;
}

}  // namespace

template <typename T>
PretrainResult<T> pretrain_masked(const std::vector<TokenIds>& corpus, const EncoderConfig& config,
                                  const PretrainSchedule& schedule) {
    if (corpus.empty()) {
        throw DataError("pre-training corpus is empty");
    }
    if (!(schedule.mask_prob > 0.0 && schedule.mask_prob < 1.0)) {
        throw ConfigError("pretrain.mask_prob must lie in (0, 1)");
    }
    if (schedule.batch_size == 0) {
        throw ConfigError("pretrain.batch_size must be positive");
    }

    ParamStore<T> work = init_encoder<T>(config, schedule.seed);
    for (const auto& name : work.names()) {
        work.set_trainable(name, true);
    }
    ParamStore<T> head = mlm_head<T>(config, schedule.seed);
    for (const auto& [name, e] : head.entries()) {
        work.add(name, e.tensor, true);
    }

    PretrainResult<T> result;
    AdamState<T> adam;
    const LrGroups lrs{{"encoder", schedule.learning_rate}};
    std::mt19937_64 rng(derive_seed(schedule.seed, "pretrain.batches"));
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    for (std::size_t step = 0; step < schedule.steps; ++step) {
        typename Graph<T>::Options opts;
        opts.training = true;
        opts.dropout_seed = derive_seed(schedule.seed, "pretrain.dropout." + std::to_string(step));
        Graph<T> g(work, opts);
        std::vector<Var<T>> losses;
        for (std::size_t b = 0; b < schedule.batch_size; ++b) {
            const TokenIds& text = corpus[pick(rng)];
            if (text.empty()) {
                continue;
            }
            MaskedExample ex = mask_example(text, config, schedule.mask_prob, rng);
            losses.push_back(cross_entropy(masked_logits(g, config, ex), std::span<const std::int32_t>(ex.targets)));
        }
        if (losses.empty()) {
            continue;
        }
        Var<T> total = losses.size() == 1 ? losses.front() : concat_rows(losses);
        Var<T> loss = mean(total);
        result.losses.push_back(static_cast<double>(loss.value().item()));
        g.tape().backward(loss);
        auto grads = g.param_grads();
        adam_step(work, grads, adam, lrs);
    }

    for (const auto& [name, e] : work.entries()) {
        if (name.rfind("mlm.", 0) == 0) {
            result.head.add(name, e.tensor);
        } else {
            result.encoder.add(name, e.tensor);
        }
    }
    return result;
}

template <typename T>
double masked_token_accuracy(const ParamStore<T>& encoder, const ParamStore<T>& head, const EncoderConfig& config,
                             const std::vector<TokenIds>& corpus, double mask_prob, std::uint64_t seed) {
    ParamStore<T> joint;
    for (const auto& [name, e] : encoder.entries()) {
        joint.add(name, e.tensor);
    }
    for (const auto& [name, e] : head.entries()) {
        joint.add(name, e.tensor);
    }
    std::mt19937_64 rng(seed);
    std::size_t correct = 0;
    std::size_t total = 0;
    for (const TokenIds& text : corpus) {
        if (text.empty()) {
            continue;
        }
        MaskedExample ex = mask_example(text, config, mask_prob, rng);
        auto g = Graph<T>::inference(joint);
        const Tensor<T>& logits = masked_logits(g, config, ex).value();
        for (std::size_t r = 0; r < ex.targets.size(); ++r) {
            auto row = logits.row(r);
            const auto best = std::max_element(row.begin(), row.end()) - row.begin();
            correct += best == ex.targets[r] ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

#define LFTRANK_INSTANTIATE_ENCODER(T)                                                                          \
    template Var<T> lora_forward<T>(Graph<T>&, Var<T>, Var<T>, Var<T>, const LoraHook<T>*);                     \
    template ParamStore<T> init_encoder<T>(const EncoderConfig&, std::uint64_t, const std::string&);            \
    template std::vector<Var<T>> encode<T>(Graph<T>&, const EncoderConfig&, const TokenSequence&,               \
                                           const AdapterHooks<T>&, const std::string&);                         \
    template Var<T> attention_block<T>(Graph<T>&, const EncoderConfig&, const std::string&, std::size_t, Var<T>, \
                                       std::span<const std::uint8_t>, const LayerLoraHooks<T>&);                \
    template PretrainResult<T> pretrain_masked<T>(const std::vector<TokenIds>&, const EncoderConfig&,           \
                                                  const PretrainSchedule&);                                     \
    template double masked_token_accuracy<T>(const ParamStore<T>&, const ParamStore<T>&, const EncoderConfig&,  \
                                             const std::vector<TokenIds>&, double, std::uint64_t);

LFTRANK_INSTANTIATE_ENCODER(float)
LFTRANK_INSTANTIATE_ENCODER(double)

}  // namespace lftrank
