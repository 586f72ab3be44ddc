#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dyffpad/nn/ops.hpp"
#include "dyffpad/nn/tensor.hpp"
#include "dyffpad/rng.hpp"

namespace dyffpad::nn {

enum class Mode { Train, Infer };

using dyffpad::Rng;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T>* tensor;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Accumulates parameter gradients and returns the gradient w.r.t. the last forward input.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void parameters(const std::string& /*prefix*/, std::vector<NamedTensor<T>>& /*out*/) {}
  /// Non-trainable state that must be persisted (running statistics).
  virtual void buffers(const std::string& /*prefix*/, std::vector<NamedTensor<T>>& /*out*/) {}
  virtual void reset_parameters(Rng& /*rng*/) {}
  virtual Shape output_shape(const Shape& input) const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry geom, bool bias);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void reset_parameters(Rng& rng) override;
  Shape output_shape(const Shape& input) const override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>* bias() { return has_bias_ ? &bias_ : nullptr; }

 private:
  ConvGeometry geom_;
  bool has_bias_;
  Tensor<T> weight_;
  Tensor<T> bias_;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  explicit BatchNorm(std::size_t channels, T eps = T(1e-5), T momentum = T(0.1));

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void reset_parameters(Rng& rng) override;
  Shape output_shape(const Shape& input) const override { return input; }

  Tensor<T>& gamma() { return gamma_; }
  Tensor<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  T eps_;
  T momentum_;
  Tensor<T> gamma_;
  Tensor<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  Tensor<T> input_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override { return input; }

 private:
  Tensor<T> output_;
};

template <typename T>
class AvgPool final : public Layer<T> {
 public:
  AvgPool(std::size_t kernel, std::size_t stride) : kernel_(kernel), stride_(stride) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;

 private:
  std::size_t kernel_;
  std::size_t stride_;
  Shape input_shape_;
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  Shape output_shape(const Shape& input) const override;

 private:
  Shape input_shape_;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void reset_parameters(Rng& rng) override;
  Shape output_shape(const Shape& input) const override;

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  Tensor<T> input_;
};

/// Ordered container; child names are "<prefix><index>." unless given explicitly.
template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;

  Layer<T>& add(std::unique_ptr<Layer<T>> layer, std::string name = {});
  template <typename L, typename... Args>
  L& emplace(std::string name, Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    add(std::move(p), std::move(name));
    return ref;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void reset_parameters(Rng& rng) override;
  Shape output_shape(const Shape& input) const override;

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::string> names_;
};

struct DenseBlockSpec {
  int num_layers = 1;
  int growth_rate = 1;
  friend bool operator==(const DenseBlockSpec&, const DenseBlockSpec&) = default;
};

/// Each composite layer sees the channel concatenation of the block input and
/// every earlier layer output and applies BN -> ReLU -> 3x3 conv (growth_rate
/// outputs). The block emits the concatenation of all of them.
template <typename T>
class DenseBlock final : public Layer<T> {
 public:
  DenseBlock(std::size_t in_channels, DenseBlockSpec spec, T bn_eps = T(1e-5), T bn_momentum = T(0.1));

  std::size_t out_channels() const noexcept { return in_channels_ + layers_.size() * growth_; }
  Sequential<T>& layer(std::size_t i) { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) override;
  void reset_parameters(Rng& rng) override;
  Shape output_shape(const Shape& input) const override;

 private:
  std::size_t in_channels_;
  std::size_t growth_;
  std::vector<std::unique_ptr<Sequential<T>>> layers_;
};

/// BN -> ReLU -> 1x1 conv -> 2x2 average pool (stride 2).
template <typename T>
std::unique_ptr<Sequential<T>> make_transition(std::size_t in_channels, std::size_t out_channels, T bn_eps = T(1e-5),
                                               T bn_momentum = T(0.1));

/// Collects trainable tensors of a layer tree.
template <typename T>
std::vector<NamedTensor<T>> collect_parameters(Layer<T>& root, const std::string& prefix = {});

}  // namespace dyffpad::nn
