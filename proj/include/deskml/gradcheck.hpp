#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "deskml/autograd.hpp"

namespace deskml {

struct ParamDiff {
    std::size_t input = 0;  // which input / parameter tensor
    std::size_t index = 0;  // flat element index inside it
    double analytic = 0.0;
    double numeric = 0.0;
    double abs_diff = 0.0;
    double rel_diff = 0.0;
};

/// Comparison of tape gradients against central finite differences.
///
/// rel_diff = |analytic - numeric| / max(|analytic|, 1e-2), so a tolerance of
/// 1e-4 accepts any element within max(1e-6, 1e-4 * |analytic|).
struct GradCheckReport {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
    std::vector<ParamDiff> diffs;

    bool passed(double rel_tol = 1e-4) const { return max_rel_diff < rel_tol; }
};

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Checks d f / d inputs at `point` with step h: (f(x+h) - f(x-h)) / 2h.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& point, double h = 1e-5);

/// Like grad_check, but the finite differences are taken on `probe` instead of
/// `f`. Used for surrogate gradients (straight-through estimators).
GradCheckReport grad_check_surrogate(const ScalarFn& f, const ScalarFn& probe, const std::vector<Tensor>& point,
                                     double h = 1e-5);

/// Checks gradients of `f` w.r.t. parameter tensors bound inside it with
/// Tape::param(). The tensors are perturbed in place and restored.
GradCheckReport grad_check_params(const std::function<Var(Tape&)>& f, std::span<Tensor* const> params,
                                  double h = 1e-5);

}  // namespace deskml
