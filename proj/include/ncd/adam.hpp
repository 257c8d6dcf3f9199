#pragma once

#include "ncd/tensor.hpp"

#include <cstdint>
#include <vector>

namespace ncd {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Classic L2: weight_decay · θ is added to the gradient before the moment updates.
    double weight_decay = 5e-4;
};

/// Adam moments for an ordered list of parameter tensors.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Applies one update to every parameter. Moments are created lazily on the first step
    /// and must keep matching the parameter shapes afterwards.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    const AdamConfig& config() const { return config_; }
    std::uint64_t steps() const { return step_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

    /// Restores moments and step counter (checkpoint load).
    void restore(std::uint64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    AdamConfig config_;
    std::uint64_t step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

} // namespace ncd
