#include "funie/optim.hpp"

#include <cmath>
#include <string>

namespace funie {

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, OptimState<T>& state) {
    const auto& cfg = state.config;
    if (!(cfg.learning_rate > 0) || !(cfg.beta1 > 0 && cfg.beta1 < 1) || !(cfg.beta2 > 0 && cfg.beta2 < 1) ||
        !(cfg.epsilon > 0)) {
        throw InvalidArgument("adam: invalid hyper-parameters");
    }
    if (state.first_moment.empty() && state.second_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), T(0));
            state.second_moment.emplace_back(p.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw InvalidArgument("adam: state tracks " + std::to_string(state.first_moment.size()) +
                              " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].numel() ||
            state.second_moment[i].size() != params[i].numel()) {
            throw InvalidArgument("adam: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                                  shape_str(params[i].shape()));
        }
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T step = static_cast<T>(cfg.learning_rate / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(cfg.epsilon);

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            // Zero gradient: moments decay, update is m_hat / (sqrt(v_hat) + eps).
            auto& m = state.first_moment[i];
            auto& v = state.second_moment[i];
            auto w = params[i].mutable_values();
            for (std::size_t j = 0; j < m.size(); ++j) {
                m[j] = b1 * m[j];
                v[j] = b2 * v[j];
                w[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
            }
            continue;
        }
        auto g = params[i].grad();
        auto w = params[i].mutable_values();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            w[j] -= step * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
        }
    }
}

template void adam_step(std::vector<Tensor<float>>&, OptimState<float>&);
template void adam_step(std::vector<Tensor<double>>&, OptimState<double>&);

}  // namespace funie
