#include "dyffpad/nn/layers.hpp"

#include <cmath>

#include "dyffpad/error.hpp"

namespace dyffpad::nn {

namespace {

template <typename T>
void accumulate(Tensor<T>& param, const Tensor<T>& g) {
  auto dst = param.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

// Kaiming-uniform on fan-in with ReLU gain: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

// ------------------------------------------------------------ Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, ConvGeometry geom, bool bias)
    : geom_(geom),
      has_bias_(bias),
      weight_({out_channels, in_channels, kernel, kernel}),
      bias_(bias ? Tensor<T>({out_channels}) : Tensor<T>()) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || geom.stride == 0) {
    throw Error(ErrorCode::InvalidConfig, "conv2d dimensions must be positive");
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return conv2d_forward(x, weight_, has_bias_ ? &bias_ : nullptr, geom_);
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  auto g = conv2d_backward(input_, weight_, has_bias_, grad_out, geom_);
  accumulate(weight_, g.weight);
  if (has_bias_) accumulate(bias_, g.bias);
  return std::move(g.input);
}

template <typename T>
void Conv2d<T>::parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
  if (has_bias_) out.push_back({prefix + "bias", &bias_});
}

template <typename T>
void Conv2d<T>::reset_parameters(Rng& rng) {
  kaiming_uniform(weight_, weight_.dim(1) * weight_.dim(2) * weight_.dim(3), rng);
  if (has_bias_) std::fill(bias_.values().begin(), bias_.values().end(), T(0));
}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != weight_.dim(1) || input[2] + 2 * geom_.pad < weight_.dim(2) ||
      input[3] + 2 * geom_.pad < weight_.dim(3)) {
    throw Error(ErrorCode::ShapeMismatch, "conv2d cannot consume " + shape_string(input));
  }
  return {input[0], weight_.dim(0), conv_out_size(input[2], weight_.dim(2), geom_),
          conv_out_size(input[3], weight_.dim(3), geom_)};
}

// ------------------------------------------------------------ BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels, T eps, T momentum)
    : eps_(eps),
      momentum_(momentum),
      gamma_({channels}, T(1)),
      beta_({channels}, T(0)),
      running_mean_({channels}, T(0)),
      running_var_({channels}, T(1)) {
  running_mean_.set_requires_grad(false);
  running_var_.set_requires_grad(false);
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::Infer) return batch_norm_infer(x, gamma_, beta_, running_mean_, running_var_, eps_);
  Tensor<T> y = batch_norm_train(x, gamma_, beta_, eps_, cache_);
  const std::size_t per_channel = x.size() / x.dim(1);
  batch_norm_update_running(running_mean_, running_var_, cache_, per_channel, momentum_);
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& grad_out) {
  auto g = batch_norm_backward(grad_out, gamma_, cache_);
  accumulate(gamma_, g.gamma);
  accumulate(beta_, g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm<T>::parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + "gamma", &gamma_});
  out.push_back({prefix + "beta", &beta_});
}

template <typename T>
void BatchNorm<T>::buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + "running_mean", &running_mean_});
  out.push_back({prefix + "running_var", &running_var_});
}

template <typename T>
void BatchNorm<T>::reset_parameters(Rng&) {
  std::fill(gamma_.values().begin(), gamma_.values().end(), T(1));
  std::fill(beta_.values().begin(), beta_.values().end(), T(0));
  std::fill(running_mean_.values().begin(), running_mean_.values().end(), T(0));
  std::fill(running_var_.values().begin(), running_var_.values().end(), T(1));
}

// ------------------------------------------------------------ activations

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return relu_forward(x);
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out) {
  return relu_backward(input_, grad_out);
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, Mode) {
  output_ = sigmoid_forward(x);
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& grad_out) {
  return sigmoid_backward(output_, grad_out);
}

// ------------------------------------------------------------ pooling

template <typename T>
Tensor<T> AvgPool<T>::forward(const Tensor<T>& x, Mode) {
  input_shape_ = x.shape();
  return avg_pool_forward(x, kernel_, stride_);
}

template <typename T>
Tensor<T> AvgPool<T>::backward(const Tensor<T>& grad_out) {
  return avg_pool_backward(input_shape_, grad_out, kernel_, stride_);
}

template <typename T>
Shape AvgPool<T>::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[2] < kernel_ || input[3] < kernel_) {
    throw Error(ErrorCode::ShapeMismatch, "avg_pool cannot consume " + shape_string(input));
  }
  return {input[0], input[1], (input[2] - kernel_) / stride_ + 1, (input[3] - kernel_) / stride_ + 1};
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, Mode) {
  input_shape_ = x.shape();
  return global_avg_pool_forward(x);
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& grad_out) {
  return global_avg_pool_backward(input_shape_, grad_out);
}

template <typename T>
Shape GlobalAvgPool<T>::output_shape(const Shape& input) const {
  if (input.size() != 4) throw Error(ErrorCode::ShapeMismatch, "global_avg_pool needs rank 4");
  return {input[0], input[1]};
}

// ------------------------------------------------------------ Linear

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features)
    : weight_({out_features, in_features}), bias_({out_features}) {
  if (in_features == 0 || out_features == 0) throw Error(ErrorCode::InvalidConfig, "linear widths must be positive");
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode) {
  input_ = x;
  return fully_connected_forward(x, weight_, bias_);
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  auto g = fully_connected_backward(input_, weight_, grad_out);
  accumulate(weight_, g.weight);
  accumulate(bias_, g.bias);
  return std::move(g.input);
}

template <typename T>
void Linear<T>::parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + "weight", &weight_});
  out.push_back({prefix + "bias", &bias_});
}

template <typename T>
void Linear<T>::reset_parameters(Rng& rng) {
  kaiming_uniform(weight_, weight_.dim(1), rng);
  std::fill(bias_.values().begin(), bias_.values().end(), T(0));
}

template <typename T>
Shape Linear<T>::output_shape(const Shape& input) const {
  if (input.size() != 2 || input[1] != weight_.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "linear cannot consume " + shape_string(input));
  }
  return {input[0], weight_.dim(0)};
}

// ------------------------------------------------------------ Sequential

template <typename T>
Layer<T>& Sequential<T>::add(std::unique_ptr<Layer<T>> layer, std::string name) {
  if (name.empty()) name = std::to_string(layers_.size());
  layers_.push_back(std::move(layer));
  names_.push_back(std::move(name));
  return *layers_.back();
}

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front()->forward(x, mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  if (layers_.empty()) return grad_out;
  Tensor<T> g = layers_.back()->backward(grad_out);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->parameters(prefix + names_[i] + ".", out);
}

template <typename T>
void Sequential<T>::buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->buffers(prefix + names_[i] + ".", out);
}

template <typename T>
void Sequential<T>::reset_parameters(Rng& rng) {
  for (auto& l : layers_) l->reset_parameters(rng);
}

template <typename T>
Shape Sequential<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

// ------------------------------------------------------------ DenseBlock

template <typename T>
DenseBlock<T>::DenseBlock(std::size_t in_channels, DenseBlockSpec spec, T bn_eps, T bn_momentum)
    : in_channels_(in_channels), growth_(static_cast<std::size_t>(spec.growth_rate)) {
  if (spec.num_layers < 1 || spec.growth_rate < 1 || in_channels == 0) {
    throw Error(ErrorCode::InvalidConfig, "dense block needs >= 1 layer, growth >= 1 and input channels");
  }
  for (int i = 0; i < spec.num_layers; ++i) {
    const std::size_t ch = in_channels_ + static_cast<std::size_t>(i) * growth_;
    auto seq = std::make_unique<Sequential<T>>();
    seq->template emplace<BatchNorm<T>>("norm", ch, bn_eps, bn_momentum);
    seq->template emplace<ReLU<T>>("relu");
    seq->template emplace<Conv2d<T>>("conv", ch, growth_, 3, ConvGeometry{1, 1}, false);
    layers_.push_back(std::move(seq));
  }
}

template <typename T>
Tensor<T> DenseBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != in_channels_) {
    throw Error(ErrorCode::ShapeMismatch, "dense block expects " + std::to_string(in_channels_) +
                                              " input channels, got " + shape_string(x.shape()));
  }
  std::vector<Tensor<T>> features;
  features.reserve(layers_.size() + 1);
  features.push_back(x);
  for (auto& layer : layers_) {
    std::vector<const Tensor<T>*> parts;
    for (const auto& f : features) parts.push_back(&f);
    Tensor<T> joined = concat<T>(std::span<const Tensor<T>* const>(parts));
    features.push_back(layer->forward(joined, mode));
  }
  std::vector<const Tensor<T>*> parts;
  for (const auto& f : features) parts.push_back(&f);
  return concat<T>(std::span<const Tensor<T>* const>(parts));
}

template <typename T>
Tensor<T> DenseBlock<T>::backward(const Tensor<T>& grad_out) {
  std::vector<std::size_t> widths{in_channels_};
  for (std::size_t i = 0; i < layers_.size(); ++i) widths.push_back(growth_);
  std::vector<Tensor<T>> grads = split<T>(grad_out, widths);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    // Layer i consumed pieces [0, i] and produced piece i+1.
    Tensor<T> g_in = layers_[i]->backward(grads[i + 1]);
    std::vector<std::size_t> in_widths(widths.begin(), widths.begin() + static_cast<std::ptrdiff_t>(i + 1));
    auto pieces = split<T>(g_in, in_widths);
    for (std::size_t j = 0; j <= i; ++j) {
      auto dst = grads[j].values();
      const auto src = pieces[j].values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return std::move(grads[0]);
}

template <typename T>
void DenseBlock<T>::parameters(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->parameters(prefix + "layer" + std::to_string(i) + ".", out);
}

template <typename T>
void DenseBlock<T>::buffers(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->buffers(prefix + "layer" + std::to_string(i) + ".", out);
}

template <typename T>
void DenseBlock<T>::reset_parameters(Rng& rng) {
  for (auto& l : layers_) l->reset_parameters(rng);
}

template <typename T>
Shape DenseBlock<T>::output_shape(const Shape& input) const {
  if (input.size() != 4 || input[1] != in_channels_) {
    throw Error(ErrorCode::ShapeMismatch, "dense block cannot consume " + shape_string(input));
  }
  return {input[0], out_channels(), input[2], input[3]};
}

template <typename T>
std::unique_ptr<Sequential<T>> make_transition(std::size_t in_channels, std::size_t out_channels, T bn_eps,
                                               T bn_momentum) {
  auto seq = std::make_unique<Sequential<T>>();
  seq->template emplace<BatchNorm<T>>("norm", in_channels, bn_eps, bn_momentum);
  seq->template emplace<ReLU<T>>("relu");
  seq->template emplace<Conv2d<T>>("conv", in_channels, out_channels, 1, ConvGeometry{1, 0}, false);
  seq->template emplace<AvgPool<T>>("pool", 2, 2);
  return seq;
}

template <typename T>
std::vector<NamedTensor<T>> collect_parameters(Layer<T>& root, const std::string& prefix) {
  std::vector<NamedTensor<T>> out;
  root.parameters(prefix, out);
  return out;
}

#define DYFFPAD_INSTANTIATE_LAYERS(T)                                                                \
  template class Conv2d<T>;                                                                          \
  template class BatchNorm<T>;                                                                       \
  template class ReLU<T>;                                                                            \
  template class Sigmoid<T>;                                                                         \
  template class AvgPool<T>;                                                                         \
  template class GlobalAvgPool<T>;                                                                   \
  template class Linear<T>;                                                                          \
  template class Sequential<T>;                                                                      \
  template class DenseBlock<T>;                                                                      \
  template std::unique_ptr<Sequential<T>> make_transition(std::size_t, std::size_t, T, T);           \
  template std::vector<NamedTensor<T>> collect_parameters(Layer<T>&, const std::string&);

DYFFPAD_INSTANTIATE_LAYERS(float)
DYFFPAD_INSTANTIATE_LAYERS(double)

#undef DYFFPAD_INSTANTIATE_LAYERS

}  // namespace dyffpad::nn
