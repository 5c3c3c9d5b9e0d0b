#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gdp/tensor.hpp"

namespace gdp {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Linear record of a forward pass. Nodes are appended in evaluation order, so
// the record is topologically sorted by construction and backward() is a
// single reverse sweep.
//
// Gradients of parameter leaves accumulate into the bound Tensor's grad buffer;
// repeated backward() calls add up until the caller zeroes them.
class Tape {
 public:
  // Receives the gradient flowing into this node; pushes it to the inputs via
  // add_grad().
  using BackwardFn = std::function<void(Tape&, const std::vector<Scalar>& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  // Leaf bound to an external tensor. The tensor must outlive the tape and not
  // be reallocated while it is in use. Binding the same tensor twice returns
  // the same Var.
  Var parameter(Tensor& param);

  Var record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }

  // Adds `delta` into the gradient buffer of node `id` (no-op for nodes that do
  // not require grad).
  void add_grad(std::size_t id, std::span<const Scalar> delta);
  std::vector<Scalar>& grad_buffer(std::size_t id);

  void backward(const Var& loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    bool requires_grad = false;
    Tensor* bound = nullptr;
    BackwardFn backward;
    std::optional<std::vector<Scalar>> grad;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> bound_ids_;
};

// Reverse sweep from a scalar loss. Throws if `loss` is not a single element.
void backward(const Var& loss);

}  // namespace gdp
