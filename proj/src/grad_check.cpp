#include "ncd/grad_check.hpp"

#include "ncd/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ncd {

namespace {

std::vector<ad::Var> bind(ad::Tape& tape, const std::vector<Tensor>& params, bool track) {
    std::vector<ad::Var> vars;
    vars.reserve(params.size());
    for (const auto& p : params) vars.push_back(track ? tape.variable(p) : tape.constant(p));
    return vars;
}

} // namespace

std::vector<Tensor> analytic_gradient(const LossBuilder& f, const std::vector<Tensor>& params) {
    ad::Tape tape;
    auto vars = bind(tape, params, true);
    ad::Var loss = f(tape, vars);
    tape.backward(loss);
    std::vector<Tensor> grads;
    grads.reserve(vars.size());
    for (auto v : vars) grads.push_back(tape.grad(v));
    return grads;
}

double evaluate_loss(const LossBuilder& f, const std::vector<Tensor>& params) {
    ad::Tape tape;
    auto vars = bind(tape, params, false);
    ad::Var loss = f(tape, vars);
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("evaluate_loss: loss is not scalar");
    return loss.value()[0];
}

double gradient_error(const LossBuilder& f, const std::vector<Tensor>& params,
                      const std::vector<Tensor>& analytic, const GradCheckOptions& opts) {
    if (analytic.size() != params.size()) throw std::invalid_argument("gradient_error: gradient count mismatch");
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!analytic[p].same_shape(params[p])) throw std::invalid_argument("gradient_error: gradient shape mismatch");
        for (std::size_t i = 0; i < params[p].size(); ++i) coords.emplace_back(p, i);
    }
    if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
        Rng rng(derive_seed(opts.seed, "grad-check"));
        std::shuffle(coords.begin(), coords.end(), rng.engine());
        coords.resize(opts.max_coords);
    }

    std::vector<Tensor> probe = params;
    double worst = 0.0;
    for (const auto& [p, i] : coords) {
        const double orig = probe[p][i];
        probe[p][i] = orig + opts.eps;
        const double up = evaluate_loss(f, probe);
        probe[p][i] = orig - opts.eps;
        const double down = evaluate_loss(f, probe);
        probe[p][i] = orig;
        const double central = (up - down) / (2.0 * opts.eps);
        const double err = std::abs(analytic[p][i] - central) / std::max(1e-8, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

double grad_check(const LossBuilder& f, const std::vector<Tensor>& params, const GradCheckOptions& opts) {
    return gradient_error(f, params, analytic_gradient(f, params), opts);
}

} // namespace ncd
