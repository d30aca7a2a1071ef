#pragma once

#include <cstdint>
#include <random>

#include "funie/tensor.hpp"

/// Differentiable operators over NCHW tensors. Every operator records its
/// backward rule when any input requires grad and grad mode is enabled.
namespace funie::ops {

enum class Mode { train, infer };
enum class ActivationKind { tanh, sigmoid };
enum class LossKind { mean_abs, mean_sq };

/// Largest per-element BCE value: -ln(1e-12).
inline constexpr double kBceProbFloor = 1e-12;

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride,
                 int padding);

/// Kernel layout is [C_in, F_out, kh, kw]; the op is the adjoint of conv2d in its input.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           int stride, int padding);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

/// Per-channel running statistics; empty vectors mean "not populated".
template <typename T>
struct RunningStats {
    Tensor<T> mean;
    Tensor<T> var;
    bool populated() const { return mean.defined() && var.defined(); }
};

/// Train mode normalizes with batch statistics (biased variance) and updates
/// `stats` by an exponential moving average; infer mode uses `stats`.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                     RunningStats<T>& stats, T epsilon = T(1e-5), T momentum = T(0.1));

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, ActivationKind kind);

/// Inverted dropout; `rate` in [0,1). The mask is drawn from `rng`.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, std::mt19937_64& rng);

/// Mean of |a-b| or (a-b)^2 over all elements, as a [1] tensor.
template <typename T>
Tensor<T> reduce_loss(const Tensor<T>& a, const Tensor<T>& b, LossKind kind);

/// Binary cross-entropy of probabilities against a constant target in {0,1}.
template <typename T>
Tensor<T> bce(const Tensor<T>& prob, int target);

/// Same quantity computed from pre-sigmoid logits; stable for large |logit|.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, int target);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Channel slice [begin, end) of an NCHW tensor (used for skip inspection).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);

/// Stacks [1,C,H,W] tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items);

/// Output spatial size of a strided convolution.
std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding);
std::int64_t conv_transpose_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding);

}  // namespace funie::ops

namespace funie {

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return ops::add(a, b);
}
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return ops::sub(a, b);
}
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T factor) {
    return ops::scale(a, factor);
}
template <typename T>
Tensor<T> operator*(T factor, const Tensor<T>& a) {
    return ops::scale(a, factor);
}

}  // namespace funie
