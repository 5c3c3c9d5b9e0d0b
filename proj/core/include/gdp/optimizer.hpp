#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdp/network.hpp"
#include "gdp/resource_model.hpp"

namespace gdp {

struct SgdConfig {
  Scalar lr = 0.05;
  Scalar alpha_lr_scale = 0.1;
  Scalar momentum = 0.9;      // weights only
  Scalar weight_decay = 5e-4;  // weights only

  void validate() const;
};

// Momentum buffers, one per weight tensor in weight_parameters() order.
struct SgdState {
  std::vector<std::vector<Scalar>> velocity;
};

struct LossStepOptions {
  // RegularizerOnly mode: adds penalty_weight * R(g(norms)) to the loss, with
  // R the bilinear model evaluated at per-group gate sums.
  const ResourceModel* resource = nullptr;
  Scalar penalty_weight = 0;
  const GateOverride* gate_override = nullptr;
};

struct StepResult {
  Scalar loss = 0;  // cross-entropy only
  Scalar penalty = 0;
  std::size_t correct = 0;
};

// One SGD step on the training loss. Weights move with step lr (momentum and
// weight decay applied); alpha moves with lr * alpha_lr_scale, plain SGD.
StepResult loss_step(NetworkGraph& graph, const Batch& batch, const SgdConfig& cfg, SgdState& state,
                     const LossStepOptions& options = {});

// After a prox step has zeroed kernel slices (WeightNorm mode), drop their
// momentum so the slices stay at zero.
void clear_pruned_momentum(NetworkGraph& graph, SgdState& state);

struct EpsilonSchedule {
  Scalar init = 0.1;
  Scalar decay = 0.96;

  void validate() const;
  // init * decay^epoch.
  Scalar at(int epoch) const;
};

// Multiplies every gate epsilon (shared or per-gate) by the decay factor; call
// once per epoch boundary.
void epsilon_step(const EpsilonSchedule& schedule, std::span<GateVector> gates, int epoch);

std::size_t count_correct(const Tensor& logits, std::span<const int> labels);

}  // namespace gdp
