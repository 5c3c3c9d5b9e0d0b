#include "gdp/autodiff.hpp"

#include "gdp/error.hpp"

namespace gdp {

const Tensor& Var::value() const {
  if (!tape_) throw Error(ErrorCode::InvalidArgument, "use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  if (auto it = bound_ids_.find(&param); it != bound_ids_.end()) return Var(this, it->second);
  Node node;
  node.op = "parameter";
  node.value = param;
  node.requires_grad = param.requires_grad();
  node.bound = &param;
  nodes_.push_back(std::move(node));
  bound_ids_.emplace(&param, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw Error(ErrorCode::NonFinite, std::string(op) + " produced a non-finite value");
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw Error(ErrorCode::InvalidArgument, std::string(op) + ": input from another tape");
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::vector<Scalar>& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_.at(id);
  if (!node.grad) node.grad.emplace(node.value.size(), Scalar{0});
  return *node.grad;
}

void Tape::add_grad(std::size_t id, std::span<const Scalar> delta) {
  if (!nodes_.at(id).requires_grad) return;
  auto& g = grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw Error(ErrorCode::InvalidArgument, "backward: loss was recorded on another tape");
  const auto& lv = nodes_.at(loss.id()).value;
  if (lv.size() != 1) {
    throw Error(ErrorCode::ShapeMismatch, "backward: loss must be scalar, got shape " + shape_str(lv.shape()));
  }
  for (auto& node : nodes_) node.grad.reset();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = Scalar{1};

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.grad) continue;
    if (node.bound) {
      node.bound->accumulate_grad(*node.grad);
    } else if (node.backward) {
      node.backward(*this, *node.grad);
    }
  }
}

void backward(const Var& loss) {
  if (!loss.tape()) throw Error(ErrorCode::InvalidArgument, "backward on an unbound Var");
  loss.tape()->backward(loss);
}

}  // namespace gdp
