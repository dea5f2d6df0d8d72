// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lftrank/autograd.hpp"

namespace lftrank {

/// Binds a ParamStore to a tape for one forward (and optional backward)
/// pass. Each parameter becomes a single leaf, so shared modules accumulate
/// gradient from every use.
template <typename T>
class Graph {
public:
    struct Options {
        bool record = true;         // build backward closures for trainable params
        bool training = false;      // dropout active
        std::uint64_t dropout_seed = 0;
        bool check_finite = false;
    };

    Graph(const ParamStore<T>& params, Options options)
        : params_(&params),
          options_(options),
          tape_(options.record, options.check_finite),
          rng_(options.dropout_seed) {}

    static Graph inference(const ParamStore<T>& params) { return Graph(params, Options{false, false, 0, false}); }

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = delete;

    Tape<T>& tape() { return tape_; }
    const ParamStore<T>& params() const { return *params_; }
    bool training() const { return options_.training; }
    std::mt19937_64& rng() { return rng_; }

    // Dropout rate to use for a configured rate, honoring training mode.
    double dropout_rate(double configured) const { return options_.training ? configured : 0.0; }

    Var<T> param(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) {
            return it->second;
        }
        const Tensor<T>& t = params_->get(name);
        Var<T> v = tape_.reference(t, params_->trainable(name));
        bound_.emplace(name, v);
        return v;
    }

    Var<T> constant(Tensor<T> value) { return tape_.constant(std::move(value)); }

    /// Gradients for every trainable parameter after backward(); parameters
    /// the loss never reached get zeros.
    std::map<std::string, Tensor<T>> param_grads() const {
        std::map<std::string, Tensor<T>> out;
        for (const auto& name : params_->trainable_names()) {
            auto it = bound_.find(name);
            if (it == bound_.end()) {
                out.emplace(name, Tensor<T>(params_->get(name).shape()));
            } else {
                out.emplace(name, tape_.grad(it->second));
            }
        }
        return out;
    }

    /// Per-graph memo for values derived only from parameters, such as
    /// materialized prefixes shared by every sequence in a batch.
    const std::vector<Var<T>>* memo(const std::string& key) const {
        auto it = memo_.find(key);
        return it == memo_.end() ? nullptr : &it->second;
    }
    const std::vector<Var<T>>& remember(const std::string& key, std::vector<Var<T>> values) {
        return memo_[key] = std::move(values);
    }

private:
    const ParamStore<T>* params_;
    Options options_;
    Tape<T> tape_;
    std::mt19937_64 rng_;
    std::unordered_map<std::string, Var<T>> bound_;
    std::map<std::string, std::vector<Var<T>>> memo_;
};

}  // namespace lftrank
