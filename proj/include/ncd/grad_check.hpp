#pragma once

#include "ncd/autodiff.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ncd {

/// Builds a scalar loss on `tape` from leaf variables holding the parameters.
using LossBuilder = std::function<ad::Var(ad::Tape& tape, std::span<const ad::Var> params)>;

/// Gradients of the loss w.r.t. each parameter via one backward pass.
std::vector<Tensor> analytic_gradient(const LossBuilder& f, const std::vector<Tensor>& params);

/// Evaluates the loss without recording gradients.
double evaluate_loss(const LossBuilder& f, const std::vector<Tensor>& params);

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates probed across all parameters; 0 means every coordinate.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
};

/// max over probed coordinates of |analytic − central| / max(1e-8, |central|), where
/// `analytic` is supplied by the caller (so a corrupted gradient can be checked too).
double gradient_error(const LossBuilder& f, const std::vector<Tensor>& params,
                      const std::vector<Tensor>& analytic, const GradCheckOptions& opts = {});

/// gradient_error against the tape's own backward pass.
double grad_check(const LossBuilder& f, const std::vector<Tensor>& params, const GradCheckOptions& opts = {});

} // namespace ncd
