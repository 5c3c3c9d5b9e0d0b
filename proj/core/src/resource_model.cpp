#include "gdp/resource_model.hpp"

#include <string>

#include "gdp/error.hpp"

namespace gdp {
namespace {

void check_counts(const ResourceModel& model, std::span<const std::int64_t> counts) {
  if (counts.size() != model.groups()) {
    throw Error(ErrorCode::ShapeMismatch, "resource model has " + std::to_string(model.groups()) + " groups, got " +
                                              std::to_string(counts.size()) + " counts");
  }
  for (auto c : counts)
    if (c < 0) throw Error(ErrorCode::InvalidArgument, "channel count must be nonnegative, got " + std::to_string(c));
}

}  // namespace

std::uint64_t ResourceModel::coupling(std::size_t l, std::size_t k) const {
  if (l == k) return 0;
  const auto it = a.find(l < k ? std::pair{l, k} : std::pair{k, l});
  return it == a.end() ? 0 : it->second;
}

std::uint64_t ResourceModel::marginal(std::size_t l, std::span<const std::int64_t> counts) const {
  check_counts(*this, counts);
  std::uint64_t total = b.at(l);
  for (const auto& [key, coef] : a) {
    if (key.first == l) total += coef * static_cast<std::uint64_t>(counts[key.second]);
    if (key.second == l) total += coef * static_cast<std::uint64_t>(counts[key.first]);
  }
  return total;
}

ResourceModel derive_coefficients(const NetworkGraph& graph) {
  const auto shapes = infer_shapes(graph);
  const auto cs = analyze_channels(graph);
  ResourceModel m;
  int groups = 0;
  for (int g : cs.space_group) groups = std::max(groups, g + 1);
  m.b.assign(static_cast<std::size_t>(groups), 0);
  m.group_channels.assign(static_cast<std::size_t>(groups), 0);
  for (std::size_t s = 0; s < cs.space_group.size(); ++s)
    if (cs.space_group[s] >= 0) m.group_channels[static_cast<std::size_t>(cs.space_group[s])] = cs.space_channels[s];

  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& L = graph.layers[i];
    if (L.kind != LayerKind::Conv && L.kind != LayerKind::Dense && L.kind != LayerKind::DepthwiseConv) continue;
    const int in = L.inputs[0];
    const std::size_t in_space = in == kNetworkInput ? cs.input_space : cs.layer_space[in];
    const std::size_t out_space = cs.layer_space[i];
    const int gi = cs.space_group[in_space];
    const int go = cs.space_group[out_space];
    const std::uint64_t per_pair =
        L.kind == LayerKind::Dense ? 1 : std::uint64_t{L.kernel} * L.kernel * shapes[i].height * shapes[i].width;
    const std::uint64_t c_in = cs.space_channels[in_space];
    const std::uint64_t c_out = cs.space_channels[out_space];

    if (L.kind == LayerKind::DepthwiseConv) {
      if (go >= 0) {
        m.b[go] += per_pair;
      } else {
        m.constant += per_pair * c_out;
      }
      continue;
    }
    if (gi >= 0 && go >= 0) {
      const auto key = gi < go ? std::pair<std::size_t, std::size_t>(gi, go) : std::pair<std::size_t, std::size_t>(go, gi);
      m.a[key] += per_pair;
    } else if (gi >= 0) {
      m.b[gi] += per_pair * c_out;
    } else if (go >= 0) {
      m.b[go] += per_pair * c_in;
    } else {
      m.constant += per_pair * c_in * c_out;
    }
  }
  return m;
}

std::uint64_t flops_of_counts(const ResourceModel& model, std::span<const std::int64_t> counts) {
  check_counts(model, counts);
  std::uint64_t total = model.constant;
  for (const auto& [key, coef] : model.a)
    total += coef * static_cast<std::uint64_t>(counts[key.first]) * static_cast<std::uint64_t>(counts[key.second]);
  for (std::size_t l = 0; l < model.groups(); ++l) total += model.b[l] * static_cast<std::uint64_t>(counts[l]);
  return total;
}

std::vector<std::int64_t> l0_counts(std::span<const GateVector> gates) {
  std::vector<std::int64_t> counts;
  counts.reserve(gates.size());
  for (const auto& gv : gates) counts.push_back(static_cast<std::int64_t>(l0_norm(gv)));
  return counts;
}

std::uint64_t flops_of_gates(const ResourceModel& model, std::span<const GateVector> gates) {
  if (gates.size() != model.groups()) {
    throw Error(ErrorCode::ShapeMismatch, "resource model has " + std::to_string(model.groups()) + " groups, got " +
                                              std::to_string(gates.size()) + " gate vectors");
  }
  for (std::size_t l = 0; l < gates.size(); ++l) {
    if (gates[l].size() != model.group_channels[l]) {
      throw Error(ErrorCode::ShapeMismatch, "gate vector " + std::to_string(l) + " has " +
                                                std::to_string(gates[l].size()) + " entries, group has " +
                                                std::to_string(model.group_channels[l]) + " channels");
    }
  }
  const auto counts = l0_counts(gates);
  return flops_of_counts(model, counts);
}

std::uint64_t full_flops(const ResourceModel& model) {
  std::vector<std::int64_t> counts(model.group_channels.begin(), model.group_channels.end());
  return flops_of_counts(model, counts);
}

std::uint64_t count_macs(const NetworkGraph& graph) {
  const auto shapes = infer_shapes(graph);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& L = graph.layers[i];
    const std::uint64_t spatial = std::uint64_t{shapes[i].height} * shapes[i].width;
    const int in = L.inputs.empty() ? kNetworkInput : L.inputs[0];
    const std::uint64_t c_in = in == kNetworkInput ? graph.input_shape[0] : shapes[in].channels;
    switch (L.kind) {
      case LayerKind::Conv: total += shapes[i].channels * c_in * L.kernel * L.kernel * spatial; break;
      case LayerKind::DepthwiseConv: total += shapes[i].channels * L.kernel * L.kernel * spatial; break;
      case LayerKind::Dense: total += shapes[i].channels * c_in; break;
      default: break;
    }
  }
  return total;
}

void write_coefficients_csv(const ResourceModel& model, std::ostream& a_csv, std::ostream& b_csv) {
  a_csv << "group_l,group_k,a_lk\n";
  for (const auto& [key, coef] : model.a) a_csv << key.first << ',' << key.second << ',' << coef << '\n';
  b_csv << "group_l,b_l\n";
  for (std::size_t l = 0; l < model.groups(); ++l) b_csv << l << ',' << model.b[l] << '\n';
}

}  // namespace gdp
