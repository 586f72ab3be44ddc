#include "dyffpad/nn/tensor.hpp"

#include "dyffpad/error.hpp"

namespace dyffpad::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw Error(ErrorCode::ShapeMismatch,
                "value count " + std::to_string(values_.size()) + " does not fill shape " + shape_string(shape_));
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

void require_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (actual != expected) {
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": got " + shape_string(actual) + ", expected " + shape_string(expected));
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace dyffpad::nn
