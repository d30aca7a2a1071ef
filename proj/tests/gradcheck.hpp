#pragma once

// Central finite-difference oracle for the autodiff operators. Test-only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "funie/ops.hpp"
#include "funie/tensor.hpp"

namespace funie::testing {

using DTensor = Tensor<double>;

inline DTensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& e : v) e = dist(rng);
    return DTensor(std::move(shape), std::move(v), requires_grad);
}

/// Values bounded away from zero, for kinked ops (leaky_relu, |.|).
inline DTensor random_nonzero(Shape shape, std::mt19937_64& rng, double min_abs = 0.05) {
    auto t = random_tensor(std::move(shape), rng);
    for (auto& e : t.mutable_values()) e = e >= 0 ? e + min_abs : e - min_abs;
    return t;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Compares analytic gradients of `loss(inputs)` against central differences
/// with step `h` for every element of every input that requires grad.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult grad_check(const std::function<DTensor(const std::vector<DTensor>&)>& loss,
                                  std::vector<DTensor> inputs, double h = 1e-4, double floor = 1e-6) {
    for (auto& in : inputs) in.zero_grad();
    loss(inputs).backward();
    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        if (in.has_grad()) {
            analytic.emplace_back(in.grad().begin(), in.grad().end());
        } else {
            analytic.emplace_back(in.numel(), 0.0);
        }
    }

    GradCheckResult result;
    NoGradGuard no_grad;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (!inputs[t].requires_grad()) continue;
        auto vals = inputs[t].mutable_values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double up = loss(inputs).item();
            vals[i] = orig - h;
            const double down = loss(inputs).item();
            vals[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic[t][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
            ++result.checked;
        }
    }
    return result;
}

/// Generic scalar functional of an operator output: mean squared distance to
/// a fixed random target.
inline DTensor probe_loss(const DTensor& out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto target = random_tensor(out.shape(), rng, -1.0, 1.0, false);
    return ops::reduce_loss(out, target, ops::LossKind::mean_sq);
}

struct NamedGradCheck {
    std::string name;
    GradCheckResult result;
};

/// Finite-difference sweep over every differentiable operator on random
/// tensors of at most 64 elements each.
inline std::vector<NamedGradCheck> grad_check_all_operators(std::uint64_t seed) {
    using namespace funie::ops;
    std::mt19937_64 rng(seed);
    std::vector<NamedGradCheck> out;
    auto run = [&](std::string name, auto fn, std::vector<DTensor> inputs) {
        out.push_back({std::move(name), grad_check(fn, std::move(inputs))});
    };

    run("conv2d",
        [](const std::vector<DTensor>& in) { return probe_loss(conv2d(in[0], in[1], in[2], 2, 1), 1); },
        {random_tensor({2, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    run("conv2d_k4s2p1",
        [](const std::vector<DTensor>& in) { return probe_loss(conv2d(in[0], in[1], in[2], 2, 1), 2); },
        {random_tensor({1, 2, 4, 4}, rng), random_tensor({2, 2, 4, 4}, rng), random_tensor({2}, rng)});
    run("conv2d_transpose",
        [](const std::vector<DTensor>& in) { return probe_loss(conv2d_transpose(in[0], in[1], in[2], 2, 1), 3); },
        {random_tensor({2, 3, 2, 2}, rng), random_tensor({3, 2, 4, 4}, rng), random_tensor({2}, rng)});
    run("leaky_relu", [](const std::vector<DTensor>& in) { return probe_loss(leaky_relu(in[0], 0.2), 4); },
        {random_nonzero({2, 2, 3, 3}, rng)});
    run("batch_norm_train",
        [](const std::vector<DTensor>& in) {
            RunningStats<double> stats{DTensor::zeros({3}), DTensor::full({3}, 1.0)};
            return probe_loss(batch_norm(in[0], in[1], in[2], Mode::train, stats, 1e-5), 5);
        },
        {random_tensor({2, 3, 3, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    run("batch_norm_infer",
        [](const std::vector<DTensor>& in) {
            RunningStats<double> stats{DTensor({3}, {0.1, -0.2, 0.3}), DTensor({3}, {0.5, 1.5, 2.0})};
            return probe_loss(batch_norm(in[0], in[1], in[2], Mode::infer, stats, 1e-5), 6);
        },
        {random_tensor({2, 3, 2, 2}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    run("concat_channels",
        [](const std::vector<DTensor>& in) { return probe_loss(concat_channels(in[0], in[1]), 7); },
        {random_tensor({2, 2, 2, 2}, rng), random_tensor({2, 3, 2, 2}, rng)});
    run("tanh",
        [](const std::vector<DTensor>& in) { return probe_loss(activation(in[0], ActivationKind::tanh), 8); },
        {random_tensor({2, 3, 3, 3}, rng, -2, 2)});
    run("sigmoid",
        [](const std::vector<DTensor>& in) { return probe_loss(activation(in[0], ActivationKind::sigmoid), 9); },
        {random_tensor({2, 3, 3, 3}, rng, -3, 3)});
    run("dropout",
        [](const std::vector<DTensor>& in) {
            std::mt19937_64 mask_rng(42);
            return probe_loss(dropout(in[0], 0.5, mask_rng), 10);
        },
        {random_tensor({1, 4, 4, 4}, rng)});
    run("mean_abs",
        [](const std::vector<DTensor>& in) { return reduce_loss(in[0], in[1], LossKind::mean_abs); },
        {random_nonzero({1, 2, 4, 4}, rng, 0.0), random_tensor({1, 2, 4, 4}, rng, 2.0, 3.0)});
    run("mean_sq",
        [](const std::vector<DTensor>& in) { return reduce_loss(in[0], in[1], LossKind::mean_sq); },
        {random_tensor({1, 2, 4, 4}, rng), random_tensor({1, 2, 4, 4}, rng)});
    run("bce_target1", [](const std::vector<DTensor>& in) { return bce(in[0], 1); },
        {random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95)});
    run("bce_target0", [](const std::vector<DTensor>& in) { return bce(in[0], 0); },
        {random_tensor({1, 1, 4, 4}, rng, 0.05, 0.95)});
    run("bce_with_logits_target1", [](const std::vector<DTensor>& in) { return bce_with_logits(in[0], 1); },
        {random_tensor({1, 1, 4, 4}, rng, -4, 4)});
    run("bce_with_logits_target0", [](const std::vector<DTensor>& in) { return bce_with_logits(in[0], 0); },
        {random_tensor({1, 1, 4, 4}, rng, -4, 4)});
    run("mean", [](const std::vector<DTensor>& in) { return probe_loss(mean(in[0]), 11); },
        {random_tensor({2, 2, 2, 2}, rng)});
    run("add_sub_scale",
        [](const std::vector<DTensor>& in) { return probe_loss(scale(sub(add(in[0], in[1]), in[0] * 0.5), 3.0), 12); },
        {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)});
    run("slice_channels", [](const std::vector<DTensor>& in) { return probe_loss(slice_channels(in[0], 1, 3), 13); },
        {random_tensor({2, 4, 2, 2}, rng)});
    run("stack_batch",
        [](const std::vector<DTensor>& in) { return probe_loss(stack_batch(std::vector<DTensor>{in[0], in[1]}), 14); },
        {random_tensor({1, 2, 2, 2}, rng), random_tensor({1, 2, 2, 2}, rng)});
    return out;
}

}  // namespace funie::testing
