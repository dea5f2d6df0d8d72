// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lftrank/corpus.hpp"
#include "lftrank/model.hpp"
#include "lftrank/train.hpp"

namespace lftrank {

/// Documented configuration keys with their defaults ("" = no default).
struct ConfigKey {
    const char* name;
    const char* default_value;
    const char* help;
};

const std::vector<ConfigKey>& config_keys();

/// `key = value` lines; `#` starts a comment. Unknown keys and duplicate
/// keys are rejected with the line number.
class ExperimentConfig {
public:
    static ExperimentConfig parse(const std::string& content, const std::string& source);
    static ExperimentConfig load(const std::filesystem::path& path);

    /// Applies a `key=value` override.
    void set(const std::string& assignment);

    bool has(const std::string& key) const;
    /// Value or documented default; ConfigError when neither exists.
    std::string get(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    /// Throws one ConfigError listing every key that has neither a value
    /// nor a default.
    void require(const std::vector<std::string>& keys) const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

EncoderConfig encoder_config_from(const ExperimentConfig& config);
LftSpec lft_spec_from(const ExperimentConfig& config);
TowerBinding binding_from(const ExperimentConfig& config);
RankerKind ranker_from(const ExperimentConfig& config);
ModelSpec model_spec_from(const ExperimentConfig& config);
TrainConfig train_config_from(const ExperimentConfig& config);
SyntheticCorpusConfig corpus_config_from(const ExperimentConfig& config);
PretrainSchedule pretrain_schedule_from(const ExperimentConfig& config);

}  // namespace lftrank
