#include <cmath>

#include "dyffpad/error.hpp"
#include "dyffpad/fusion.hpp"

namespace dyffpad::fusion {

namespace {

template <typename T>
std::unique_ptr<nn::Sequential<T>> make_mlp(std::size_t in, const std::vector<int>& widths, bool relu_last) {
  auto seq = std::make_unique<nn::Sequential<T>>();
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto out = static_cast<std::size_t>(widths[i]);
    seq->template emplace<nn::Linear<T>>("fc" + std::to_string(i), in, out);
    if (relu_last || i + 1 < widths.size()) seq->template emplace<nn::ReLU<T>>("relu" + std::to_string(i));
    in = out;
  }
  return seq;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> make_cnn(const DyffpadConfig& cfg) {
  const T eps = static_cast<T>(cfg.bn_eps);
  const T mom = static_cast<T>(cfg.bn_momentum);
  auto seq = std::make_unique<nn::Sequential<T>>();
  const auto& s = cfg.stem;
  auto ch = static_cast<std::size_t>(s.channels);
  seq->template emplace<nn::Conv2d<T>>("stem_conv", 1, ch, static_cast<std::size_t>(s.kernel),
                                       nn::ConvGeometry{static_cast<std::size_t>(s.stride),
                                                        static_cast<std::size_t>(s.pad)},
                                       false);
  seq->template emplace<nn::BatchNorm<T>>("stem_norm", ch, eps, mom);
  seq->template emplace<nn::ReLU<T>>("stem_relu");
  if (s.pool) seq->template emplace<nn::AvgPool<T>>("stem_pool", 2, 2);
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    auto& block = seq->template emplace<nn::DenseBlock<T>>("block" + std::to_string(i), ch, cfg.blocks[i], eps, mom);
    ch = block.out_channels();
    if (i < cfg.transitions.size()) {
      const auto out = static_cast<std::size_t>(cfg.transitions[i]);
      seq->add(nn::make_transition<T>(ch, out, eps, mom), "transition" + std::to_string(i));
      ch = out;
    }
  }
  seq->template emplace<nn::BatchNorm<T>>("final_norm", ch, eps, mom);
  seq->template emplace<nn::ReLU<T>>("final_relu");
  seq->template emplace<nn::GlobalAvgPool<T>>("pool");
  return seq;
}

}  // namespace

template <typename T>
BasicDyffpadModel<T>::BasicDyffpadModel(DyffpadConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      norm_mean_({static_cast<std::size_t>(kQualityFeatures)}, T(0)),
      norm_std_({static_cast<std::size_t>(kQualityFeatures)}, T(1)) {
  cfg_.validate();
  norm_mean_.set_requires_grad(false);
  norm_std_.set_requires_grad(false);
  if (cfg_.uses_images()) {
    cnn_ = make_cnn<T>(cfg_);
    cnn_head_ = make_mlp<T>(static_cast<std::size_t>(cfg_.cnn_channels()), cfg_.cnn_head, true);
  }
  if (cfg_.uses_features()) {
    feat_dnn_ = make_mlp<T>(static_cast<std::size_t>(cfg_.feature_dim), cfg_.feat_dnn, true);
  }
  final_head_ = make_mlp<T>(static_cast<std::size_t>(cfg_.final_input_width()), cfg_.final_head, false);

  nn::Rng rng(seed);
  for (auto* part : {cnn_.get(), cnn_head_.get(), feat_dnn_.get(), final_head_.get()}) {
    if (part) part->reset_parameters(rng);
  }
}

template <typename T>
void BasicDyffpadModel<T>::check_inputs(const Tensor<T>& images, const Tensor<T>& features,
                                        std::size_t& batch) const {
  std::optional<std::size_t> n;
  if (cfg_.uses_images()) {
    const auto side = static_cast<std::size_t>(cfg_.input_side);
    if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != side || images.dim(3) != side) {
      throw Error(ErrorCode::ShapeMismatch, "images must be (N,1," + std::to_string(side) + "," +
                                                std::to_string(side) + "), got " + nn::shape_string(images.shape()));
    }
    n = images.dim(0);
  }
  if (cfg_.uses_features()) {
    if (features.rank() != 2 || features.dim(1) != static_cast<std::size_t>(cfg_.feature_dim)) {
      throw Error(ErrorCode::ShapeMismatch, "features must be (N," + std::to_string(cfg_.feature_dim) + "), got " +
                                                nn::shape_string(features.shape()));
    }
    if (n && *n != features.dim(0)) throw Error(ErrorCode::ShapeMismatch, "image and feature batch sizes differ");
    n = features.dim(0);
  }
  if (!n || *n == 0) throw Error(ErrorCode::ShapeMismatch, "empty batch");
  batch = *n;
}

template <typename T>
Tensor<T> BasicDyffpadModel<T>::normalize(const Tensor<T>& features) const {
  Tensor<T> out = features;
  const std::size_t dim = features.dim(1);
  for (std::size_t r = 0; r < features.dim(0); ++r) {
    T* row = out.data() + r * dim;
    for (std::size_t j = 0; j < static_cast<std::size_t>(kQualityFeatures); ++j) {
      row[j] = (row[j] - norm_mean_[j]) / norm_std_[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> BasicDyffpadModel<T>::forward_logits(const Tensor<T>& images, const Tensor<T>& features, Mode mode) {
  check_inputs(images, features, last_batch_);
  Tensor<T> cnn_out;
  Tensor<T> feat_out;
  if (cnn_) cnn_out = cnn_head_->forward(cnn_->forward(images, mode), mode);
  if (feat_dnn_) feat_out = feat_dnn_->forward(normalize(features), mode);
  if (cnn_ && feat_dnn_) return final_head_->forward(nn::concat(feat_out, cnn_out), mode);
  return final_head_->forward(cnn_ ? cnn_out : feat_out, mode);
}

template <typename T>
Tensor<T> BasicDyffpadModel<T>::forward(const Tensor<T>& images, const Tensor<T>& features, Mode mode) {
  return nn::sigmoid_forward(forward_logits(images, features, mode));
}

template <typename T>
void BasicDyffpadModel<T>::backward(const Tensor<T>& grad_logits) {
  nn::require_shape(grad_logits.shape(), {last_batch_, 1}, "logit gradient");
  Tensor<T> g = final_head_->backward(grad_logits);
  if (cnn_ && feat_dnn_) {
    const std::size_t widths[] = {static_cast<std::size_t>(kBranchWidth), static_cast<std::size_t>(kBranchWidth)};
    auto parts = nn::split<T>(g, widths);
    feat_dnn_->backward(parts[0]);
    cnn_->backward(cnn_head_->backward(parts[1]));
  } else if (cnn_) {
    cnn_->backward(cnn_head_->backward(g));
  } else {
    feat_dnn_->backward(g);
  }
}

template <typename T>
std::vector<NamedTensor<T>> BasicDyffpadModel<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  if (cnn_) cnn_->parameters("cnn.", out);
  if (cnn_head_) cnn_head_->parameters("cnn_head.", out);
  if (feat_dnn_) feat_dnn_->parameters("feat_dnn.", out);
  final_head_->parameters("final_head.", out);
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> BasicDyffpadModel<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  if (cnn_) cnn_->buffers("cnn.", out);
  out.push_back({"feature_norm.mean", &norm_mean_});
  out.push_back({"feature_norm.std", &norm_std_});
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> BasicDyffpadModel<T>::state() {
  auto out = parameters();
  auto buf = buffers();
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

template <typename T>
std::size_t BasicDyffpadModel<T>::parameter_count() {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor->size();
  return n;
}

template <typename T>
void BasicDyffpadModel<T>::fit_normalizer(const Tensor<T>& features) {
  if (features.rank() != 2 || features.dim(1) != static_cast<std::size_t>(cfg_.feature_dim) || features.dim(0) == 0) {
    throw Error(ErrorCode::ShapeMismatch, "normalizer needs a non-empty (N," + std::to_string(cfg_.feature_dim) +
                                              ") matrix, got " + nn::shape_string(features.shape()));
  }
  const std::size_t n = features.dim(0);
  const std::size_t dim = features.dim(1);
  for (std::size_t j = 0; j < static_cast<std::size_t>(kQualityFeatures); ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < n; ++r) sum += static_cast<double>(features[r * dim + j]);
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = static_cast<double>(features[r * dim + j]) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    norm_mean_[j] = static_cast<T>(mean);
    norm_std_[j] = static_cast<T>(sd > 1e-12 ? sd : 1.0);
  }
}

DyffpadModel build_model(const DyffpadConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return DyffpadModel(cfg, seed);
}

template class BasicDyffpadModel<float>;
template class BasicDyffpadModel<double>;

}  // namespace dyffpad::fusion
