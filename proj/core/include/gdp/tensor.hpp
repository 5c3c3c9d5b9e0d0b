#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gdp {

#ifdef GDP_SCALAR_FLOAT
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

// Dense row-major array. Rank 0 is a scalar. Every dimension is positive.
//
// Layout conventions used by the ops: odd rank means a single sample
// ([c] or [c,h,w]); even rank carries a leading batch axis ([b,c] or
// [b,c,h,w]). The channel axis is therefore 0 for odd rank and 1 otherwise.
class Tensor {
 public:
  Tensor() : data_(1, Scalar{0}) {}
  explicit Tensor(Shape shape, Scalar fill = Scalar{0});
  Tensor(Shape shape, std::vector<Scalar> data);

  static Tensor scalar(Scalar value) { return Tensor(Shape{}, {value}); }
  static Tensor vector(std::vector<Scalar> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }
  Scalar item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on);

  // Gradient buffer; present only for tensors that require grad.
  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<Scalar> grad();
  std::span<const Scalar> grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const Scalar> delta);

  // Same data under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<Scalar> data_;
  bool requires_grad_ = false;
  std::optional<std::vector<Scalar>> grad_;
};

}  // namespace gdp
