// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lftrank {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

namespace {

double evaluate(const LossBuilder& loss, const ParamStore<double>& store) {
    Graph<double> graph(store, {false, false, 0, true});
    return loss(graph).value().item();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, ParamStore<double>& store,
                           const GradCheckOptions& options) {
    std::map<std::string, Tensor<double>> analytic;
    {
        Graph<double> graph(store, {true, false, 0, true});
        Var<double> value = loss(graph);
        graph.tape().backward(value);
        analytic = graph.param_grads();
    }

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    for (const auto& [name, grad] : analytic) {
        const std::size_t n = grad.numel();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > options.samples_per_param) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.samples_per_param);
            std::sort(coords.begin(), coords.end());
        }
        for (std::size_t idx : coords) {
            const double original = store.get(name)[idx];
            store.mutable_tensor(name)[idx] = original + options.step;
            const double plus = evaluate(loss, store);
            store.mutable_tensor(name)[idx] = original - options.step;
            const double minus = evaluate(loss, store);
            store.mutable_tensor(name)[idx] = original;

            const double numeric = (plus - minus) / (2.0 * options.step);
            ++report.coordinates;
            if (std::abs(grad[idx]) < options.noise_floor && std::abs(numeric) < options.noise_floor) {
                ++report.floor_coordinates;
                report.max_floor_abs_err = std::max(report.max_floor_abs_err, std::abs(grad[idx] - numeric));
                continue;
            }
            const double err = relative_error(grad[idx], numeric);
            if (err > report.max_rel_err || report.worst_param.empty()) {
                report.max_rel_err = std::max(report.max_rel_err, err);
                report.worst_param = name;
                report.worst_index = idx;
                report.worst_analytic = grad[idx];
                report.worst_numeric = numeric;
            }
        }
    }
    report.passed = report.max_rel_err <= options.tolerance && report.max_floor_abs_err <= options.noise_floor;
    return report;
}

}  // namespace lftrank
