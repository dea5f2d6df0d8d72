// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lftrank/tensor.hpp"

namespace lftrank {

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
    struct Moments {
        Tensor<T> first;
        Tensor<T> second;
    };

    AdamHyper hyper;
    std::map<std::string, Moments> moments;
    std::uint64_t step = 0;
};

/// Learning rate per parameter group (ranker, encoder, prefix, prompt, lora).
using LrGroups = std::map<std::string, double>;

/// Group a parameter belongs to, derived from the first name component.
std::string lr_group(const std::string& param_name);

/// One bias-corrected Adam update over the trainable parameters of store.
/// Frozen parameters are never touched.
template <typename T>
void adam_step(ParamStore<T>& store, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, const LrGroups& lr_by_group);

}  // namespace lftrank
