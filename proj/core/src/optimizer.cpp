#include "gdp/optimizer.hpp"

#include <cmath>
#include <string>

#include "gdp/error.hpp"
#include "gdp/ops.hpp"

namespace gdp {

void SgdConfig::validate() const {
  if (!(lr >= 0)) throw Error(ErrorCode::Config, "learning rate must be nonnegative");
  if (!(alpha_lr_scale >= 0)) throw Error(ErrorCode::Config, "alpha_lr_scale must be nonnegative");
  if (!(momentum >= 0 && momentum < 1)) throw Error(ErrorCode::Config, "momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw Error(ErrorCode::Config, "weight decay must be nonnegative");
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t k = logits.shape().back();
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (logits[b * k + j] > logits[b * k + best]) best = j;
    correct += static_cast<int>(best) == labels[b];
  }
  return correct;
}

namespace {

// sum_{l<k} a_lk S_l S_k + sum_l b_l S_l with S_l the sum of group l's gates.
Var smooth_resource(const ResourceModel& model, const std::vector<Var>& gates) {
  std::vector<Var> sums;
  for (const auto& g : gates) sums.push_back(sum(g));
  Var total = scale(sums.at(0), static_cast<Scalar>(model.b.at(0)));
  for (std::size_t l = 1; l < sums.size(); ++l) total = add(total, scale(sums[l], static_cast<Scalar>(model.b[l])));
  for (const auto& [key, coef] : model.a)
    total = add(total, scale(mul(sums[key.first], sums[key.second]), static_cast<Scalar>(coef)));
  return total;
}

}  // namespace

StepResult loss_step(NetworkGraph& graph, const Batch& batch, const SgdConfig& cfg, SgdState& state,
                     const LossStepOptions& options) {
  cfg.validate();
  if (batch.size() == 0) throw Error(ErrorCode::InvalidArgument, "loss_step: empty batch");
  auto params = weight_parameters(graph);
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    for (auto* p : params) state.velocity.emplace_back(p->size(), Scalar{0});
  }
  for (auto* p : params) p->zero_grad();
  const bool param_gates = graph.gated() && graph.mode() == GateMode::IntroducedParam;
  if (param_gates)
    for (auto& gv : graph.gates) gv.alpha.zero_grad();

  StepResult result;
  Tape tape;
  ForwardOptions fo;
  fo.training = true;
  fo.gate_override = options.gate_override;
  const auto pass = forward_gated(graph, tape, batch.images, fo);
  Var loss = softmax_cross_entropy(pass.logits, batch.labels);
  result.loss = loss.value().item();
  result.correct = count_correct(pass.logits.value(), batch.labels);
  if (graph.gated() && graph.mode() == GateMode::RegularizerOnly && options.resource && options.penalty_weight > 0) {
    const Var penalty = scale(smooth_resource(*options.resource, pass.gates), options.penalty_weight);
    result.penalty = penalty.value().item();
    loss = add(loss, penalty);
  }
  if (!std::isfinite(loss.value().item())) throw Error(ErrorCode::NonFinite, "loss_step: non-finite loss");
  tape.backward(loss);

  for (std::size_t j = 0; j < params.size(); ++j) {
    auto w = params[j]->data();
    const auto g = params[j]->grad();
    auto& v = state.velocity[j];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = cfg.momentum * v[i] + g[i] + cfg.weight_decay * w[i];
      w[i] -= cfg.lr * v[i];
    }
  }
  if (param_gates) {
    const Scalar step = cfg.lr * cfg.alpha_lr_scale;
    for (auto& gv : graph.gates) {
      auto a = gv.alpha.data();
      const auto g = gv.alpha.grad();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] -= step * g[i];
    }
  }
  for (auto* p : params) {
    if (!p->all_finite()) throw Error(ErrorCode::NonFinite, "loss_step: parameters became non-finite");
  }
  refresh_norm_gates(graph);
  return result;
}

void clear_pruned_momentum(NetworkGraph& graph, SgdState& state) {
  if (state.velocity.empty() || graph.mode() == GateMode::IntroducedParam) return;
  auto params = weight_parameters(graph);
  for (std::size_t g = 0; g < graph.groups.size(); ++g) {
    const auto norms = graph.gates[g].alpha.data();
    for (auto site : graph.groups[g].sites) {
      const Tensor* w = &graph.layers[site].weight;
      std::size_t j = 0;
      while (j < params.size() && params[j] != w) ++j;
      if (j == params.size()) continue;
      auto& v = state.velocity[j];
      const std::size_t rows = w->dim(0), cols = w->dim(1), inner = w->size() / (rows * cols);
      for (std::size_t c = 0; c < cols; ++c) {
        if (norms[c] != 0) continue;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < inner; ++k) v[(r * cols + c) * inner + k] = 0;
      }
    }
  }
}

void EpsilonSchedule::validate() const {
  if (!(init > 0)) throw Error(ErrorCode::Config, "epsilon init must be positive");
  if (!(decay > 0 && decay <= 1)) throw Error(ErrorCode::Config, "epsilon decay must be in (0, 1]");
}

Scalar EpsilonSchedule::at(int epoch) const {
  Scalar eps = init;
  for (int e = 0; e < epoch; ++e) eps *= decay;
  return eps;
}

void epsilon_step(const EpsilonSchedule& schedule, std::span<GateVector> gates, int epoch) {
  schedule.validate();
  if (epoch < 0) throw Error(ErrorCode::InvalidArgument, "epsilon_step: epoch must be nonnegative");
  for (auto& gv : gates) {
    gv.epsilon *= schedule.decay;
    for (auto& e : gv.gate_epsilon) e *= schedule.decay;
  }
}

}  // namespace gdp
