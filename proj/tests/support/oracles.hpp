#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the code it checks beyond reading graph structure.

#include <cstdint>
#include <functional>
#include <vector>

#include "gdp/autodiff.hpp"
#include "gdp/network.hpp"

namespace gdp::testing {

// Direct loops over one sample: input [c,h,w], kernel [d,c,k,k] -> [d,h',w'].
Tensor naive_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
// kernel [c,k,k].
Tensor naive_depthwise(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);

using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// max over every element of every input of |analytic - numeric| / max(1, |numeric|),
// numeric from central differences with step h.
double gradcheck(std::vector<Tensor> inputs, const LossBuilder& loss, double h = 1e-4);

// Central difference of a scalar function.
double central_difference(const std::function<double(double)>& f, double x, double h);

// Minimizer of a convex function on [lo, hi], by bisection on its one-sided
// derivatives: x* is where left(x) <= 0 <= right(x). Resolves to adjacent
// doubles, unlike comparisons of function values.
double convex_min_bisect(const std::function<double(double)>& left_deriv,
                         const std::function<double(double)>& right_deriv, double lo, double hi);

// MACs of conv, depthwise and dense layers, by walking the graph with its own
// shape arithmetic.
std::uint64_t direct_mac_count(const NetworkGraph& graph);

// f(x) = 1/2 sum ||x_l - u_l||^2 + sum_{l<k} a_lk ||x_l||_0 ||x_k||_0 (+ b_l ||x_l||_0).
struct ToyBilinear {
  std::vector<std::vector<double>> u;
  std::vector<std::vector<double>> a;  // symmetric, zero diagonal
  std::vector<double> b;
};
double toy_objective(const ToyBilinear& p, const std::vector<std::vector<double>>& x);

// Minimum over every support pattern, each restricted quadratic solved exactly
// (x = u on the support, 0 off it).
struct SupportOptimum {
  double value = 0;
  std::vector<std::vector<double>> x;
};
SupportOptimum exhaustive_support_optimum(const ToyBilinear& p);

// Alternating proximal gradient with fixed step: each group takes a gradient
// step on its quadratic, then the prox of step * beta_l * ||.||_0 (hard
// threshold) or of step * beta_l * ||.||_1 (soft threshold), with beta_l
// computed from the other groups' current supports. Stops when a sweep
// changes nothing.
enum class Penalty { L0, L1 };
std::vector<std::vector<double>> alternating_prox_gradient(const ToyBilinear& p,
                                                           std::vector<std::vector<double>> init, double step,
                                                           Penalty penalty, int max_sweeps = 10000);

std::vector<std::vector<bool>> support_of(const std::vector<std::vector<double>>& x);

}  // namespace gdp::testing
