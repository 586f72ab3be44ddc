#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dyffpad::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional same-shaped gradient buffer.
/// Rank-4 tensors are (batch, channels, height, width); rank-2 are (batch, features).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// Gradient buffer; allocated (zeroed) on first request.
  std::span<T> grad() {
    if (grad_.size() != values_.size()) grad_.assign(values_.size(), T(0));
    return grad_;
  }
  std::span<const T> grad() const noexcept { return grad_; }
  bool has_grad() const noexcept { return !grad_.empty() && grad_.size() == values_.size(); }
  void zero_grad() { grad_.assign(values_.size(), T(0)); }

  /// Parameters with requires_grad == false are skipped by optimizers.
  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  /// Same values with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<T> values_;
  std::vector<T> grad_;
  bool requires_grad_ = true;
};

/// Throws ShapeMismatch with `what` when the shapes differ.
void require_shape(const Shape& actual, const Shape& expected, const char* what);

}  // namespace dyffpad::nn
