#include "gdp/prox.hpp"

#include <cmath>
#include <string>

#include "gdp/error.hpp"

namespace gdp {
namespace {

std::int64_t count_nonzero(std::span<const Scalar> v) {
  std::int64_t n = 0;
  for (auto x : v) n += x != 0;
  return n;
}

Scalar threshold_from_marginal(Scalar coupled, Scalar linear, const ProxConfig& cfg) {
  const Scalar scale = cfg.eta1 * cfg.lambda;
  return cfg.scale_linear_term ? scale * (coupled + linear) : scale * coupled + linear;
}

}  // namespace

void ProxConfig::validate() const {
  if (!(eta1 > 0)) throw Error(ErrorCode::Config, "prox eta1 must be positive");
  if (!(lambda >= 0)) throw Error(ErrorCode::Config, "prox lambda must be nonnegative");
  if (inner_iters < 1) throw Error(ErrorCode::Config, "prox inner iterations must be at least 1");
}

Scalar soft_threshold(Scalar alpha_hat, Scalar beta) {
  if (!(beta >= 0)) throw Error(ErrorCode::InvalidArgument, "soft_threshold: beta must be nonnegative");
  if (alpha_hat >= beta) return alpha_hat - beta;
  if (alpha_hat <= -beta) return alpha_hat + beta;
  return 0;
}

Scalar prox_threshold(const ResourceModel& model, std::span<const std::int64_t> counts, std::size_t group,
                      const ProxConfig& cfg) {
  const auto total = model.marginal(group, counts);
  const auto linear = model.b.at(group);
  return threshold_from_marginal(static_cast<Scalar>(total - linear), static_cast<Scalar>(linear), cfg);
}

void prox_step(std::span<GateVector> gates, const ResourceModel& model, const ProxConfig& cfg) {
  cfg.validate();
  if (gates.size() != model.groups()) {
    throw Error(ErrorCode::ShapeMismatch, "prox_step: " + std::to_string(gates.size()) + " gate vectors for " +
                                              std::to_string(model.groups()) + " resource groups");
  }
  std::vector<std::vector<Scalar>> target;
  for (const auto& gv : gates) target.emplace_back(gv.alpha.data().begin(), gv.alpha.data().end());
  auto counts = l0_counts(gates);
  for (int t = 0; t < cfg.inner_iters; ++t) {
    for (std::size_t l = 0; l < gates.size(); ++l) {
      const Scalar beta = prox_threshold(model, counts, l, cfg);
      auto alpha = gates[l].alpha.data();
      for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = soft_threshold(target[l][i], beta);
      counts[l] = count_nonzero(alpha);
    }
  }
}

void prox_step(NetworkGraph& graph, const ResourceModel& model, const ProxConfig& cfg) {
  const GateMode mode = graph.mode();
  if (mode == GateMode::RegularizerOnly) return;
  if (mode == GateMode::IntroducedParam) {
    prox_step(std::span<GateVector>(graph.gates), model, cfg);
    return;
  }
  std::vector<std::vector<Scalar>> before;
  for (const auto& gv : graph.gates) before.emplace_back(gv.alpha.data().begin(), gv.alpha.data().end());
  prox_step(std::span<GateVector>(graph.gates), model, cfg);
  for (std::size_t g = 0; g < graph.groups.size(); ++g) {
    const auto after = graph.gates[g].alpha.data();
    for (auto site : graph.groups[g].sites) {
      auto& w = graph.layers[site].weight;
      const std::size_t rows = w.dim(0), cols = w.dim(1);
      const std::size_t inner = w.size() / (rows * cols);
      for (std::size_t c = 0; c < cols; ++c) {
        if (after[c] == before[g][c]) continue;
        const Scalar factor = before[g][c] > 0 ? after[c] / before[g][c] : 0;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t k = 0; k < inner; ++k) w[(r * cols + c) * inner + k] *= factor;
      }
    }
  }
}

void BilinearInstance::validate() const {
  const std::size_t G = u.size();
  if (G == 0) throw Error(ErrorCode::InvalidArgument, "bilinear instance has no groups");
  if (init.size() != G || a.size() != G || b.size() != G) {
    throw Error(ErrorCode::ShapeMismatch, "bilinear instance: u, init, a and b disagree on the group count");
  }
  for (std::size_t l = 0; l < G; ++l) {
    if (init[l].size() != u[l].size()) {
      throw Error(ErrorCode::ShapeMismatch, "bilinear instance: init and u sizes differ for group " + std::to_string(l));
    }
    if (a[l].size() != G) throw Error(ErrorCode::ShapeMismatch, "bilinear instance: a must be square");
    if (a[l][l] != 0) throw Error(ErrorCode::InvalidArgument, "bilinear instance: a must have a zero diagonal");
    if (b[l] < 0) throw Error(ErrorCode::InvalidArgument, "bilinear instance: b must be nonnegative");
    for (std::size_t k = 0; k < G; ++k) {
      if (a[l][k] != a[k][l] || a[l][k] < 0) {
        throw Error(ErrorCode::InvalidArgument, "bilinear instance: a must be symmetric and nonnegative");
      }
    }
  }
}

Scalar bilinear_objective(const BilinearInstance& instance, const std::vector<std::vector<Scalar>>& x,
                          const ProxConfig& cfg) {
  const std::size_t G = instance.u.size();
  Scalar fit = 0;
  std::vector<Scalar> counts(G);
  for (std::size_t l = 0; l < G; ++l) {
    for (std::size_t i = 0; i < x[l].size(); ++i) {
      const Scalar d = x[l][i] - instance.u[l][i];
      fit += d * d;
    }
    counts[l] = static_cast<Scalar>(count_nonzero(x[l]));
  }
  Scalar coupled = 0, linear = 0;
  for (std::size_t l = 0; l < G; ++l) {
    for (std::size_t k = l + 1; k < G; ++k) coupled += instance.a[l][k] * counts[l] * counts[k];
    linear += instance.b[l] * counts[l];
  }
  return fit / 2 + threshold_from_marginal(coupled, linear, cfg);
}

BilinearSolution solve_bilinear_l0(const BilinearInstance& instance, const ProxConfig& cfg) {
  cfg.validate();
  instance.validate();
  const std::size_t G = instance.u.size();
  BilinearSolution sol;
  sol.x = instance.init;
  sol.objective.push_back(bilinear_objective(instance, sol.x, cfg));
  std::vector<std::int64_t> counts(G);
  for (std::size_t l = 0; l < G; ++l) counts[l] = count_nonzero(sol.x[l]);

  for (int t = 1; t <= cfg.inner_iters; ++t) {
    const auto previous = sol.x;
    for (std::size_t l = 0; l < G; ++l) {
      Scalar coupled = 0;
      for (std::size_t k = 0; k < G; ++k)
        if (k != l) coupled += instance.a[l][k] * static_cast<Scalar>(counts[k]);
      const Scalar beta = threshold_from_marginal(coupled, instance.b[l], cfg);
      for (std::size_t i = 0; i < sol.x[l].size(); ++i) sol.x[l][i] = soft_threshold(instance.u[l][i], beta);
      counts[l] = count_nonzero(sol.x[l]);
    }
    sol.objective.push_back(bilinear_objective(instance, sol.x, cfg));
    if (sol.fixed_point_sweep < 0 && t > 1 && sol.x == previous) sol.fixed_point_sweep = t - 1;
  }
  return sol;
}

}  // namespace gdp
