#include "gdp/gate.hpp"

#include <algorithm>
#include <string>

#include "gdp/error.hpp"

namespace gdp {
namespace {

void check_eps(Scalar eps, const char* op) {
  if (!(eps > 0)) throw Error(ErrorCode::InvalidArgument, std::string(op) + ": epsilon must be positive");
}

}  // namespace

Scalar gate_value(Scalar x, Scalar eps) {
  check_eps(eps, "gate_value");
  const Scalar sq = x * x;
  return sq / (sq + eps);
}

Scalar gate_grad(Scalar x, Scalar eps) {
  check_eps(eps, "gate_grad");
  const Scalar den = x * x + eps;
  return 2 * x * eps / (den * den);
}

std::string_view to_string(GateMode mode) noexcept {
  switch (mode) {
    case GateMode::IntroducedParam: return "param";
    case GateMode::WeightNorm: return "weightnorm";
    case GateMode::RegularizerOnly: return "reg";
  }
  return "param";
}

GateMode parse_gate_mode(std::string_view text) {
  if (text == "param") return GateMode::IntroducedParam;
  if (text == "weightnorm") return GateMode::WeightNorm;
  if (text == "reg") return GateMode::RegularizerOnly;
  throw Error(ErrorCode::Config, "unknown gate mode '" + std::string(text) + "' (expected param, weightnorm, reg)");
}

std::vector<Scalar> GateVector::epsilons() const {
  if (!gate_epsilon.empty()) return gate_epsilon;
  return {epsilon};
}

std::vector<Scalar> GateVector::values() const {
  std::vector<Scalar> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gate_value(alpha[i], eps(i));
  return out;
}

std::size_t zero_gate_count(const GateVector& gv) noexcept {
  const auto a = gv.alpha.data();
  return static_cast<std::size_t>(std::count(a.begin(), a.end(), Scalar{0}));
}

std::size_t l0_norm(const GateVector& gv) noexcept { return gv.size() - zero_gate_count(gv); }

}  // namespace gdp
