// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>

#include "lftrank/model.hpp"

namespace lftrank::testing {

inline EncoderConfig tiny_config(std::size_t layers = 2, std::size_t d = 8, std::size_t heads = 2,
                                 std::size_t vocab = 40, std::size_t max_seq = 48) {
    EncoderConfig::Dims dims;
    dims.layers = layers;
    dims.model_dim = d;
    dims.heads = heads;
    dims.ffn_dim = 2 * d;
    dims.vocab_size = vocab;
    dims.max_seq_len = max_seq;
    dims.dropout_rate = 0.1;
    return EncoderConfig(dims);
}

inline TokenIds random_text(std::mt19937_64& rng, std::size_t len, std::size_t vocab) {
    std::uniform_int_distribution<std::int32_t> pick(token::first_free, static_cast<std::int32_t>(vocab) - 1);
    TokenIds out(len);
    for (auto& t : out) {
        t = pick(rng);
    }
    return out;
}

/// Small prefix settings sized for tiny encoders.
inline PrefixTuning small_prefix(std::size_t len = 4) { return PrefixTuning{len, 6, 5}; }

inline LoraTuning small_lora(bool plus = false) { return LoraTuning{2, 4.0, 0.1, plus}; }

/// Fills every B matrix (and other zero-initialized adapters) with noise so
/// adapter paths are exercised.
template <typename T>
void perturb(ParamStore<T>& store, const std::string& prefix, double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& name : store.names()) {
        if (name.rfind(prefix, 0) == 0) {
            auto& t = store.mutable_tensor(name);
            t = normal_tensor<T>(t.shape(), stddev, rng);
        }
    }
}

// sin((offset + i + 1) * 0.7) over a row-major [rows × cols] block.
inline Tensor<double> sin_block(std::size_t rows, std::size_t cols, std::size_t offset) {
    Tensor<double> t(cols == 0 ? Shape{rows} : Shape{rows, cols});
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t[i] = std::sin(static_cast<double>(offset + i + 1) * 0.7);
    }
    return t;
}

}  // namespace lftrank::testing
