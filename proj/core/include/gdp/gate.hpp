#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "gdp/tensor.hpp"

namespace gdp {

// Smoothed-L0 gate g(x) = x^2 / (x^2 + eps). Exactly 0 at x == 0, in [0, 1)
// for finite x, and close to 1 once |x| >> sqrt(eps).
Scalar gate_value(Scalar x, Scalar eps);

// dg/dx = 2 x eps / (x^2 + eps)^2.
Scalar gate_grad(Scalar x, Scalar eps);

enum class GateMode {
  // Trainable alpha per channel; the gate multiplies the consumer's input.
  IntroducedParam,
  // Gate argument is the L2 norm of the consumer kernels' input slices, with
  // one epsilon per gate.
  WeightNorm,
  // Gates never touch activations; g(||W_i||) only enters a smooth resource
  // penalty added to the loss.
  RegularizerOnly,
};

std::string_view to_string(GateMode mode) noexcept;
GateMode parse_gate_mode(std::string_view text);

struct GateVector {
  GateMode mode = GateMode::IntroducedParam;
  // IntroducedParam: trainable alpha. Other modes: the current slice norms,
  // refreshed from the kernels after every weight update.
  Tensor alpha;
  Scalar epsilon = 0.1;
  // WeightNorm / RegularizerOnly only: one epsilon per gate.
  std::vector<Scalar> gate_epsilon;

  std::size_t size() const noexcept { return alpha.size(); }
  Scalar eps(std::size_t i) const { return gate_epsilon.empty() ? epsilon : gate_epsilon.at(i); }
  std::vector<Scalar> epsilons() const;
  std::vector<Scalar> values() const;
};

// Number of entries whose argument is exactly zero. No threshold.
std::size_t zero_gate_count(const GateVector& gv) noexcept;

// ||alpha||_0 = size - zero_gate_count.
std::size_t l0_norm(const GateVector& gv) noexcept;

}  // namespace gdp
