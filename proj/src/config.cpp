// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/config.hpp"

#include <charconv>
#include <cmath>

#include "lftrank/io.hpp"

namespace lftrank {

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"seed", "7", "experiment seed"},
        {"model", "", "ranker: mono | twin | colbert"},
        {"binding", "siamese", "cross | siamese | semi_siamese | hetero_full"},
        {"ss.prefix", "off", "semi-Siamese prefix sharing: average | concat | none | off"},
        {"ss.lora", "off", "semi-Siamese LoRA sharing: shared_q | shared_v | hetero_both | off"},
        {"ss.concat_specific", "5", "tower-specific leading positions under ss.prefix=concat"},
        {"lft.method", "", "full | prompt | prefix | lora | lora_plus | hybrid"},
        {"lft.first", "prefix", "hybrid stage-1 module: prompt | prefix | lora | lora_plus"},
        {"lft.second", "lora", "hybrid stage-2 module"},
        {"lft.schedule", "sequential", "hybrid schedule: sequential | concurrent"},
        {"lft.m_epochs", "30", "hybrid stage-1 epochs"},
        {"lft.n_epochs", "10", "hybrid stage-2 epochs"},
        {"lft.prompt_len", "10", "prompt vectors"},
        {"lft.prefix_len", "10", "prefix vectors per layer"},
        {"lft.source_dim", "768", "prefix source width"},
        {"lft.mlp_hidden", "256", "prefix MLP hidden width"},
        {"lft.lora_rank", "16", "LoRA rank"},
        {"lft.lora_alpha", "32", "LoRA alpha (scale = alpha / rank)"},
        {"lft.lora_dropout", "0.1", "LoRA input dropout"},
        {"encoder.preset", "custom", "custom | bert_base (bert_base ignores the other encoder.* keys)"},
        {"encoder.layers", "2", "transformer layers"},
        {"encoder.dim", "64", "model width"},
        {"encoder.heads", "4", "attention heads"},
        {"encoder.ffn", "256", "feed-forward width"},
        {"encoder.vocab", "1024", "vocabulary size"},
        {"encoder.max_seq", "128", "maximum sequence length"},
        {"encoder.dropout", "0.1", "hidden and attention dropout"},
        {"ranker.colbert_dim", "32", "ColBERT projection width"},
        {"ranker.twin_hidden", "0", "twin head hidden width (0 = model width)"},
        {"train.epochs", "10", "maximum epochs"},
        {"train.batch_size", "16", "triplets per batch"},
        {"train.lr_ranker", "1e-4", "ranker head learning rate"},
        {"train.lr_encoder", "2e-5", "encoder learning rate (full fine-tuning)"},
        {"train.lr_prefix", "1e-4", "prefix learning rate"},
        {"train.lr_prompt", "1e-4", "prompt learning rate"},
        {"train.lr_lora", "1e-4", "LoRA learning rate"},
        {"train.val_k", "10", "validation metric cutoff (mean P@k)"},
        {"train.folds", "5", "query folds"},
        {"train.fold", "0", "fold rotation: test = fold r, validation = fold r+1"},
        {"corpus.topics", "5", "topic clusters"},
        {"corpus.docs", "200", "documents"},
        {"corpus.queries", "40", "queries"},
        {"corpus.candidates", "20", "candidates per query"},
        {"corpus.regime", "short", "query regime: short | long"},
        {"corpus.doc_length", "40", "mean document length in words"},
        {"corpus.doc_spread", "8", "document length standard deviation"},
        {"corpus.words", "600", "distinct content words"},
        {"corpus.triplets_per_query", "12", "training triplets per query"},
        {"corpus.secondary_share", "0.6", "share of off-topic words taken from a secondary topic"},
        {"corpus.hard_negatives", "0.5", "share of negatives whose secondary topic is the query topic"},
        {"corpus.query_core", "0.3", "fraction of a topic's words that queries draw from"},
        {"corpus.lexical_overlap", "1", "share of document topic words that may be query words"},
        {"pretrain.steps", "500", "masked-token pre-training steps"},
        {"pretrain.batch_size", "8", "sequences per pre-training step"},
        {"pretrain.mask_prob", "0.15", "masking probability"},
        {"pretrain.lr", "1e-3", "pre-training learning rate"},
        {"paths.data", "", "corpus directory"},
        {"paths.encoder", "", "pre-trained encoder checkpoint"},
    };
    return keys;
}

namespace {

const ConfigKey* find_key(const std::string& name) {
    for (const auto& k : config_keys()) {
        if (name == k.name) {
            return &k;
        }
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& text, const std::string& where) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
        throw ConfigError(where + ": expected key = value, got '" + text + "'");
    }
    std::string key = trim(text.substr(0, eq));
    std::string value = trim(text.substr(eq + 1));
    if (key.empty()) {
        throw ConfigError(where + ": missing key in '" + text + "'");
    }
    if (find_key(key) == nullptr) {
        throw ConfigError(where + ": unknown key '" + key + "'");
    }
    return {key, value};
}

LftModule module_from(const ExperimentConfig& c, const std::string& key) {
    const std::string name = c.get(key);
    if (name == "prompt") {
        return PromptTuning{c.get_size("lft.prompt_len")};
    }
    if (name == "prefix") {
        return PrefixTuning{c.get_size("lft.prefix_len"), c.get_size("lft.source_dim"), c.get_size("lft.mlp_hidden")};
    }
    if (name == "lora" || name == "lora_plus") {
        return LoraTuning{c.get_size("lft.lora_rank"), c.get_double("lft.lora_alpha"), c.get_double("lft.lora_dropout"),
                          name == "lora_plus"};
    }
    throw ConfigError(key + ": unknown module '" + name + "' (expected prompt, prefix, lora or lora_plus)");
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& content, const std::string& source) {
    ExperimentConfig config;
    std::size_t number = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) {
            end = content.size();
        }
        ++number;
        std::string line = content.substr(start, end - start);
        start = end + 1;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const std::string where = source + ":" + std::to_string(number);
        auto [key, value] = split_assignment(line, where);
        if (!config.values_.emplace(key, value).second) {
            throw ConfigError(where + ": duplicate key '" + key + "'");
        }
    }
    return config;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

void ExperimentConfig::set(const std::string& assignment) {
    auto [key, value] = split_assignment(assignment, "--set");
    values_[key] = value;
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string ExperimentConfig::get(const std::string& key) const {
    const ConfigKey* k = find_key(key);
    if (k == nullptr) {
        throw InvariantError("undocumented config key '" + key + "'");
    }
    auto it = values_.find(key);
    if (it != values_.end()) {
        return it->second;
    }
    if (std::string(k->default_value).empty()) {
        throw ConfigError("missing required key: " + key);
    }
    return k->default_value;
}

std::size_t ExperimentConfig::get_size(const std::string& key) const {
    const std::string v = get(key);
    std::size_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
    const std::string v = get(key);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

double ExperimentConfig::get_double(const std::string& key) const {
    const std::string v = get(key);
    double out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

void ExperimentConfig::require(const std::vector<std::string>& keys) const {
    std::string missing;
    for (const auto& key : keys) {
        const ConfigKey* k = find_key(key);
        if (k == nullptr) {
            throw InvariantError("undocumented config key '" + key + "'");
        }
        const bool present = values_.count(key) != 0 && !values_.at(key).empty();
        if (!present && std::string(k->default_value).empty()) {
            missing += (missing.empty() ? "" : ", ") + key;
        }
    }
    if (!missing.empty()) {
        throw ConfigError("missing required keys: " + missing);
    }
}

EncoderConfig encoder_config_from(const ExperimentConfig& c) {
    const std::string preset = c.get("encoder.preset");
    if (preset == "bert_base") {
        return EncoderConfig::bert_base_like();
    }
    if (preset != "custom") {
        throw ConfigError("encoder.preset: unknown preset '" + preset + "' (expected custom or bert_base)");
    }
    EncoderConfig::Dims dims;
    dims.layers = c.get_size("encoder.layers");
    dims.model_dim = c.get_size("encoder.dim");
    dims.heads = c.get_size("encoder.heads");
    dims.ffn_dim = c.get_size("encoder.ffn");
    dims.vocab_size = c.get_size("encoder.vocab");
    dims.max_seq_len = c.get_size("encoder.max_seq");
    dims.dropout_rate = c.get_double("encoder.dropout");
    return EncoderConfig(dims);
}

LftSpec lft_spec_from(const ExperimentConfig& c) {
    const std::string method = c.get("lft.method");
    if (method == "full") {
        return FullFT{};
    }
    if (method == "hybrid") {
        Hybrid h{module_from(c, "lft.first"), module_from(c, "lft.second")};
        const std::string schedule = c.get("lft.schedule");
        if (schedule == "sequential") {
            h.mode = HybridMode::sequential;
        } else if (schedule == "concurrent") {
            h.mode = HybridMode::concurrent;
        } else {
            throw ConfigError("lft.schedule: unknown schedule '" + schedule + "'");
        }
        h.m_epochs = c.get_size("lft.m_epochs");
        h.n_epochs = c.get_size("lft.n_epochs");
        return h;
    }
    if (method == "prompt" || method == "prefix" || method == "lora" || method == "lora_plus") {
        ExperimentConfig single = c;
        single.set("lft.first=" + method);
        return std::visit([](const auto& m) -> LftSpec { return m; }, module_from(single, "lft.first"));
    }
    throw ConfigError("lft.method: unknown method '" + method + "'");
}

TowerBinding binding_from(const ExperimentConfig& c) {
    const std::string b = c.get("binding");
    if (b == "cross") {
        return CrossBinding{};
    }
    if (b == "siamese") {
        return SiameseBinding{};
    }
    if (b == "hetero_full") {
        return HeteroFullBinding{};
    }
    if (b != "semi_siamese") {
        throw ConfigError("binding: unknown binding '" + b + "'");
    }
    SemiSiameseBinding ss;
    const std::string p = c.get("ss.prefix");
    if (p == "average") {
        ss.prefix = PrefixSharing::average;
    } else if (p == "concat") {
        ss.prefix = PrefixSharing::concat;
    } else if (p == "none") {
        ss.prefix = PrefixSharing::none;
    } else if (p == "off") {
        ss.prefix = PrefixSharing::off;
    } else {
        throw ConfigError("ss.prefix: unknown variant '" + p + "'");
    }
    const std::string l = c.get("ss.lora");
    if (l == "shared_q") {
        ss.lora = LoraSharing::shared_q;
    } else if (l == "shared_v") {
        ss.lora = LoraSharing::shared_v;
    } else if (l == "hetero_both") {
        ss.lora = LoraSharing::hetero_both;
    } else if (l == "off") {
        ss.lora = LoraSharing::off;
    } else {
        throw ConfigError("ss.lora: unknown variant '" + l + "'");
    }
    ss.concat_specific = c.get_size("ss.concat_specific");
    return ss;
}

RankerKind ranker_from(const ExperimentConfig& c) {
    const std::string m = c.get("model");
    if (m == "mono") {
        return RankerKind::mono;
    }
    if (m == "twin") {
        return RankerKind::twin;
    }
    if (m == "colbert") {
        return RankerKind::colbert;
    }
    throw ConfigError("model: unknown model '" + m + "' (expected mono, twin or colbert)");
}

ModelSpec model_spec_from(const ExperimentConfig& c) {
    c.require({"model", "lft.method"});
    ModelSpec spec{encoder_config_from(c), ranker_from(c), lft_spec_from(c), binding_from(c), {}};
    spec.head.colbert_dim = c.get_size("ranker.colbert_dim");
    spec.head.twin_hidden = c.get_size("ranker.twin_hidden");
    spec.validate();
    return spec;
}

TrainConfig train_config_from(const ExperimentConfig& c) {
    TrainConfig t;
    t.max_epochs = c.get_size("train.epochs");
    t.batch_size = c.get_size("train.batch_size");
    t.val_k = c.get_size("train.val_k");
    t.seed = c.get_u64("seed");
    t.learning_rates = {{"ranker", c.get_double("train.lr_ranker")},
                        {"encoder", c.get_double("train.lr_encoder")},
                        {"prefix", c.get_double("train.lr_prefix")},
                        {"prompt", c.get_double("train.lr_prompt")},
                        {"lora", c.get_double("train.lr_lora")}};
    t.validate();
    return t;
}

SyntheticCorpusConfig corpus_config_from(const ExperimentConfig& c) {
    SyntheticCorpusConfig s;
    s.n_topics = c.get_size("corpus.topics");
    s.n_docs = c.get_size("corpus.docs");
    s.n_queries = c.get_size("corpus.queries");
    s.candidates_per_query = c.get_size("corpus.candidates");
    const std::string regime = c.get("corpus.regime");
    if (regime == "short") {
        s.regime = QueryRegime::short_queries;
    } else if (regime == "long") {
        s.regime = QueryRegime::long_queries;
    } else {
        throw ConfigError("corpus.regime: unknown regime '" + regime + "' (expected short or long)");
    }
    s.doc_length_mean = c.get_double("corpus.doc_length");
    s.doc_length_spread = c.get_double("corpus.doc_spread");
    s.vocab_size = c.get_size("corpus.words");
    s.triplets_per_query = c.get_size("corpus.triplets_per_query");
    s.secondary_share = c.get_double("corpus.secondary_share");
    s.hard_negative_share = c.get_double("corpus.hard_negatives");
    s.query_core_share = c.get_double("corpus.query_core");
    s.lexical_overlap = c.get_double("corpus.lexical_overlap");
    s.seed = c.get_u64("seed");
    s.validate();
    return s;
}

PretrainSchedule pretrain_schedule_from(const ExperimentConfig& c) {
    PretrainSchedule p;
    p.steps = c.get_size("pretrain.steps");
    p.batch_size = c.get_size("pretrain.batch_size");
    p.mask_prob = c.get_double("pretrain.mask_prob");
    p.learning_rate = c.get_double("pretrain.lr");
    p.seed = c.get_u64("seed");
    return p;
}

}  // namespace lftrank
