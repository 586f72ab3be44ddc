#include "dyffpad/nn/optim.hpp"

#include <cmath>

#include "dyffpad/error.hpp"

namespace dyffpad::nn {

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0) ||
      !(cfg_.eps > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "adam hyper-parameters out of range");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor->size(), 0.0);
    v_.emplace_back(p.tensor->size(), 0.0);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = *params_[i].tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double update = cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - update);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace dyffpad::nn
