#pragma once

#include <cstdint>
#include <vector>

#include "funie/tensor.hpp"

namespace funie {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adaptive-moment state for an ordered list of parameters. Moment buffers are
/// allocated on the first step and must keep matching the parameter shapes.
template <typename T>
struct OptimState {
    AdamConfig config;
    std::int64_t step_count = 0;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// Parameters without a grad buffer are treated as having a zero gradient.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, OptimState<T>& state);

template <typename T>
void zero_grads(std::vector<Tensor<T>>& params) {
    for (auto& p : params) p.zero_grad();
}

extern template void adam_step(std::vector<Tensor<float>>&, OptimState<float>&);
extern template void adam_step(std::vector<Tensor<double>>&, OptimState<double>&);

}  // namespace funie
