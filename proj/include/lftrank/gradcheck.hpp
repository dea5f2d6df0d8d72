// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "lftrank/graph.hpp"

namespace lftrank {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-5;
    // Coordinates sampled per trainable parameter; tensors at or below this
    // size are checked exhaustively.
    std::size_t samples_per_param = 6;
    std::uint64_t seed = 0;
    // Coordinates whose analytic and numeric values are both below this
    // magnitude are compared by absolute difference against it instead of
    // by relative error. 0 disables the rule.
    double noise_floor = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coordinates = 0;
    std::size_t floor_coordinates = 0;  // compared absolutely
    double max_floor_abs_err = 0.0;
    bool passed = true;
};

/// Builds a scalar loss from the parameters bound in a graph. Must be
/// deterministic.
using LossBuilder = std::function<Var<double>(Graph<double>&)>;

/// Compares reverse-mode gradients against central differences
/// (f(θ+h) − f(θ−h)) / 2h on sampled coordinates of every trainable
/// parameter. Failure is reported, never thrown.
GradCheckReport grad_check(const LossBuilder& loss, ParamStore<double>& store,
                           const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric);

}  // namespace lftrank
