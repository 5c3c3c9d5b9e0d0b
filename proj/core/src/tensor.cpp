#include "gdp/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gdp/error.hpp"

namespace gdp {

std::size_t numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_dims(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw Error(ErrorCode::ShapeMismatch, "tensor dimension must be positive, got " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != numel(shape_)) {
    throw Error(ErrorCode::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::vector(std::vector<Scalar> values) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Scalar Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on && !grad_) grad_.emplace(data_.size(), Scalar{0});
  if (!on) grad_.reset();
}

std::span<Scalar> Tensor::grad() {
  if (!grad_) throw Error(ErrorCode::InvalidArgument, "tensor does not require grad");
  return *grad_;
}

std::span<const Scalar> Tensor::grad() const {
  if (!grad_) throw Error(ErrorCode::InvalidArgument, "tensor does not require grad");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), Scalar{0});
}

void Tensor::accumulate_grad(std::span<const Scalar> delta) {
  if (!grad_) return;
  if (delta.size() != grad_->size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient length mismatch for tensor " + shape_str(shape_));
  }
  for (std::size_t i = 0; i < delta.size(); ++i) (*grad_)[i] += delta[i];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

}  // namespace gdp
