#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdp/gate.hpp"
#include "gdp/network.hpp"
#include "gdp/resource_model.hpp"
#include "gdp/tensor.hpp"

namespace gdp {

struct ProxConfig {
  Scalar eta1 = 0.01;
  Scalar lambda = 0;
  int inner_iters = 1;  // sweeps over all groups
  // false: the b_l term of the threshold is used without the eta1*lambda factor.
  bool scale_linear_term = true;

  void validate() const;
};

// argmin_a 1/2 (a - alpha_hat)^2 + beta |a|. The dead band returns exact 0.
Scalar soft_threshold(Scalar alpha_hat, Scalar beta);

// beta_l = eta1 * lambda * (sum_{k != l} a_lk c_k + b_l) at the given counts.
Scalar prox_threshold(const ResourceModel& model, std::span<const std::int64_t> counts, std::size_t group,
                      const ProxConfig& cfg);

// Alternating l1 relaxation of the l0 resource prox. Groups are visited in
// order; each one is shrunk from its pre-prox value with a threshold computed
// from the other groups' current l0 counts.
void prox_step(std::span<GateVector> gates, const ResourceModel& model, const ProxConfig& cfg);

// prox_step on the graph's gates. In WeightNorm mode the shrunken norms are
// written back by rescaling the consumer kernels' input slices. No-op in
// RegularizerOnly mode (the resource term lives in the loss there).
void prox_step(NetworkGraph& graph, const ResourceModel& model, const ProxConfig& cfg);

// min_x 1/2 sum_l ||x_l - u_l||^2 + eta1 * lambda * R(||x_1||_0, ..., ||x_G||_0)
// with R(c) = sum_{l<k} a_lk c_l c_k + sum_l b_l c_l. `a` is dense GxG and must
// be symmetric with a zero diagonal.
struct BilinearInstance {
  std::vector<std::vector<Scalar>> u;
  std::vector<std::vector<Scalar>> init;  // starting iterate (only its l0 counts matter)
  std::vector<std::vector<Scalar>> a;
  std::vector<Scalar> b;

  void validate() const;
};

struct BilinearSolution {
  std::vector<std::vector<Scalar>> x;
  // objective[0] at the initial iterate, objective[t] after sweep t.
  std::vector<Scalar> objective;
  // First sweep whose result the next sweep reproduced exactly; -1 if the
  // run ended before that was observed.
  int fixed_point_sweep = -1;
};

Scalar bilinear_objective(const BilinearInstance& instance, const std::vector<std::vector<Scalar>>& x,
                          const ProxConfig& cfg);

// Runs cfg.inner_iters sweeps of the alternating relaxation.
BilinearSolution solve_bilinear_l0(const BilinearInstance& instance, const ProxConfig& cfg);

}  // namespace gdp
