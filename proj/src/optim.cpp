// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/optim.hpp"

#include <cmath>

namespace lftrank {

std::string lr_group(const std::string& param_name) {
    const std::string head = param_name.substr(0, param_name.find('.'));
    if (head == "ranker" || head == "prefix" || head == "prompt" || head == "lora") {
        return head;
    }
    return "encoder";
}

template <typename T>
void adam_step(ParamStore<T>& store, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, const LrGroups& lr_by_group) {
    const auto trainable = store.trainable_names();
    // Validate everything before the first mutation.
    for (const auto& name : trainable) {
        if (lr_by_group.count(lr_group(name)) == 0) {
            throw ConfigError("no learning rate for group '" + lr_group(name) +
                              "' (parameter '" + name + "')");
        }
        auto it = grads.find(name);
        if (it == grads.end()) {
            throw ContractError("adam_step: missing gradient for trainable parameter '" + name + "'");
        }
        if (it->second.numel() != store.get(name).numel()) {
            throw DimensionError("adam_step: gradient for '" + name + "' has shape " +
                                 shape_string(it->second.shape()) + ", parameter has " +
                                 shape_string(store.get(name).shape()));
        }
    }

    ++state.step;
    const AdamHyper& h = state.hyper;
    const double step = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, step);
    const double correction2 = 1.0 - std::pow(h.beta2, step);

    for (const auto& name : trainable) {
        const Tensor<T>& g = grads.at(name);
        Tensor<T>& param = store.mutable_tensor(name);
        auto& mom = state.moments[name];
        if (mom.first.empty()) {
            mom.first = Tensor<T>(param.shape());
            mom.second = Tensor<T>(param.shape());
        }
        const double lr = lr_by_group.at(lr_group(name));
        for (std::size_t i = 0; i < param.numel(); ++i) {
            double gi = static_cast<double>(g[i]);
            if (h.weight_decay != 0.0) {
                gi += h.weight_decay * static_cast<double>(param[i]);
            }
            const double m = h.beta1 * static_cast<double>(mom.first[i]) + (1.0 - h.beta1) * gi;
            const double v = h.beta2 * static_cast<double>(mom.second[i]) + (1.0 - h.beta2) * gi * gi;
            mom.first[i] = static_cast<T>(m);
            mom.second[i] = static_cast<T>(v);
            const double update = lr * (m / correction1) / (std::sqrt(v / correction2) + h.epsilon);
            param[i] = static_cast<T>(static_cast<double>(param[i]) - update);
        }
    }
}

template void adam_step(ParamStore<float>&, const std::map<std::string, Tensor<float>>&,
                        AdamState<float>&, const LrGroups&);
template void adam_step(ParamStore<double>&, const std::map<std::string, Tensor<double>>&,
                        AdamState<double>&, const LrGroups&);

}  // namespace lftrank
