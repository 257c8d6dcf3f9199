#include "ncd/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace ncd {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("Adam: parameter/gradient count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.emplace_back(p->rows(), p->cols());
            v_.emplace_back(p->rows(), p->cols());
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("Adam: parameter count changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->same_shape(grads[k]) || !params[k]->same_shape(m_[k])) {
            throw std::invalid_argument("Adam: shape mismatch for parameter " + std::to_string(k) + ": " +
                                        params[k]->shape_string() + " vs grad " + grads[k].shape_string());
        }
    }

    ++step_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = grads[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i] + config_.weight_decay * p[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void Adam::restore(std::uint64_t step, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != v.size()) throw std::invalid_argument("Adam::restore: moment count mismatch");
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

} // namespace ncd
