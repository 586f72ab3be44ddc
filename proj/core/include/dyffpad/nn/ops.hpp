#pragma once

#include <span>
#include <vector>

#include "dyffpad/nn/tensor.hpp"

namespace dyffpad::nn {

// Every op is instantiated for float and double. Backward functions return
// fresh gradient tensors; callers accumulate into parameter gradients.

// ------------------------------------------------------------ convolution

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

inline std::size_t conv_out_size(std::size_t in, std::size_t k, ConvGeometry g) {
  return (in + 2 * g.pad - k) / g.stride + 1;
}

/// Cross-correlation of x (N,C,H,W) with weights (O,C,K,K); bias (O) may be null.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>* bias, ConvGeometry g);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the layer has no bias
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, bool has_bias,
                               const Tensor<T>& grad_out, ConvGeometry g);

// ------------------------------------------------------------ batch norm

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;       // x-hat
  std::vector<T> inv_std;     // per channel
  std::vector<T> batch_mean;  // per channel
  std::vector<T> batch_var;   // per channel, biased
};

/// Per-channel batch statistics over (N, H, W); rank-2 input treats features as channels.
/// Throws BatchTooSmall when batch < 2.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                           BatchNormCache<T>& cache);

template <typename T>
Tensor<T> batch_norm_infer(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                           const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps);

/// Exponential update with the unbiased batch variance.
template <typename T>
void batch_norm_update_running(Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormCache<T>& cache,
                               std::size_t count_per_channel, T momentum);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma,
                                      const BatchNormCache<T>& cache);

// ------------------------------------------------------------ elementwise

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Subgradient at exactly zero is zero.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

// ------------------------------------------------------------ pooling

template <typename T>
Tensor<T> avg_pool_forward(const Tensor<T>& x, std::size_t k, std::size_t stride);
template <typename T>
Tensor<T> avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out, std::size_t k, std::size_t stride);

/// (N,C,H,W) -> (N,C).
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

// ------------------------------------------------------------ fully connected

/// x (N,in), weight (out,in), bias (out).
template <typename T>
Tensor<T> fully_connected_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> fully_connected_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out);

// ------------------------------------------------------------ concat

/// Joins along axis 1 (features or channels); remaining dimensions must agree.
template <typename T>
Tensor<T> concat(std::span<const Tensor<T>* const> parts);
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b);

/// Inverse of concat for gradients: splits axis 1 into the given widths.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, std::span<const std::size_t> widths);

// ------------------------------------------------------------ loss

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy; scores are clamped to [1e-7, 1-1e-7].
template <typename T>
T bce_loss(const Tensor<T>& scores, std::span<const T> labels);
template <typename T>
Tensor<T> bce_backward(const Tensor<T>& scores, std::span<const T> labels);

}  // namespace dyffpad::nn
