#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "gdp/gate.hpp"
#include "gdp/network.hpp"

namespace gdp {

// Kernel MACs as a bilinear function of the gate groups' channel counts:
//   R(c) = sum_{l<k} a_lk c_l c_k + sum_l b_l c_l + constant.
// Each unordered pair is stored once, so a_ll never exists.
struct ResourceModel {
  std::vector<std::size_t> group_channels;
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> a;  // key (l,k), l < k
  std::vector<std::uint64_t> b;
  // MACs between two ungated spaces (e.g. a conv reading the image into an
  // ungated space). Never affected by pruning.
  std::uint64_t constant = 0;

  std::size_t groups() const noexcept { return b.size(); }
  // Symmetric lookup; 0 for l == k and for absent pairs.
  std::uint64_t coupling(std::size_t l, std::size_t k) const;
  // dR/dc_l = sum_{k != l} a_lk c_k + b_l.
  std::uint64_t marginal(std::size_t l, std::span<const std::int64_t> counts) const;
};

ResourceModel derive_coefficients(const NetworkGraph& graph);

std::uint64_t flops_of_counts(const ResourceModel& model, std::span<const std::int64_t> counts);

// R evaluated at ||alpha_l||_0 (exact-zero semantics).
std::uint64_t flops_of_gates(const ResourceModel& model, std::span<const GateVector> gates);

std::uint64_t full_flops(const ResourceModel& model);

std::vector<std::int64_t> l0_counts(std::span<const GateVector> gates);

// Direct MAC count of conv, depthwise and dense kernels in the graph.
std::uint64_t count_macs(const NetworkGraph& graph);

// group_l,group_k,a_lk and group_l,b_l.
void write_coefficients_csv(const ResourceModel& model, std::ostream& a_csv, std::ostream& b_csv);

}  // namespace gdp
