// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of every differentiable op and of the
// composed model graph, in 64-bit mode.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "awracle/tensor.hpp"

namespace awracle {

struct GradCheckOptions {
    std::size_t seeds = 10;
    double step = 1e-5;
    double op_tolerance = 1e-4;
    double graph_tolerance = 1e-3;
    std::size_t max_graph_entries = 2000;  // parameter entries probed in composed checks
    std::string only;                      // run just this op when non-empty
    bool inject_fault = false;             // adds an op with a deliberately wrong backward
};

struct GradCheckResult {
    std::string op;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t entries = 0;  // gradient entries compared
    bool passed() const { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, 1e-3): relative for ordinary gradients, absolute
/// near zero where central differences only resolve round-off.
double grad_relative_error(double analytic, double numeric);

/// A function of some leaf tensors returning a scalar. Called with and
/// without an active tape.
using ScalarFn = std::function<Tensor64()>;

/// Compares tape gradients of `fn` w.r.t. `inputs` with central differences.
/// With `max_entries` > 0 only an evenly strided subset is probed.
double check_gradients(const ScalarFn& fn, std::vector<Tensor64> inputs, double step, std::size_t max_entries = 0);

std::vector<std::string> gradcheck_op_names(bool include_fault = false);
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options,
                                           const std::function<void(const GradCheckResult&)>& on_result = {});

}  // namespace awracle
