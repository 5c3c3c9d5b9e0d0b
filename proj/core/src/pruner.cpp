#include "gdp/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gdp/error.hpp"
#include "gdp/ops.hpp"
#include "gdp/optimizer.hpp"
#include "gdp/resource_model.hpp"

namespace gdp {
namespace {

enum class Status { Live, Constant, Dead };

// Channel axis 0 selection of a per-sample tensor (or a kernel's rows).
Tensor select_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  Shape s = t.shape();
  const std::size_t inner = t.size() / s.at(0);
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy_n(t.data().begin() + static_cast<long>(rows[r] * inner), inner,
                out.data().begin() + static_cast<long>(r * inner));
  return out;
}

// Kernel [d,c,...] restricted to (rows, cols), each input column scaled by its gain.
Tensor select_kernel(const Tensor& w, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                     const std::vector<Scalar>& gain) {
  Shape s = w.shape();
  const std::size_t c = s[1];
  const std::size_t inner = w.size() / (s[0] * c);
  s[0] = rows.size();
  s[1] = cols.size();
  Tensor out(s);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t k = 0; k < inner; ++k)
        out[(r * cols.size() + j) * inner + k] = w[(rows[r] * c + cols[j]) * inner + k] * gain[cols[j]];
  return out;
}

// Per-sample constant of every kept channel equal to `bias` (or zero), broadcast over `shape`.
Tensor broadcast_bias(const ActivationShape& shape, std::size_t channels, const Tensor* bias) {
  const Shape s = shape.spatial ? Shape{channels, shape.height, shape.width} : Shape{channels};
  Tensor out(s);
  if (!bias) return out;
  const std::size_t inner = out.size() / channels;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t k = 0; k < inner; ++k) out[c * inner + k] = (*bias)[c];
  return out;
}

// Evaluates a channel-preserving, MAC-free layer on one constant sample.
Tensor eval_constant(const LayerSpec& layer, const Tensor& x) {
  Tape tape;
  const Var in = tape.constant(x);
  switch (layer.kind) {
    case LayerKind::Relu: return relu(in).value();
    case LayerKind::AvgPool: return avgpool2d(in, layer.window).value();
    case LayerKind::GlobalAvgPool: return global_avgpool(in).value();
    case LayerKind::BatchNorm: {
      Tensor mean = layer.running_mean, var = layer.running_var;
      return batchnorm2d(in, tape.constant(layer.weight), tape.constant(layer.bias),
                         BatchNormStats{mean, var, layer.bn_momentum, layer.bn_eps}, false)
          .value();
    }
    default: throw Error(ErrorCode::InvalidGraph, "cannot fold layer '" + layer.name + "' into a constant");
  }
}

// Per-channel value when the constant is uniform over space.
std::optional<std::vector<Scalar>> uniform_channels(const Tensor& t) {
  const std::size_t c = t.dim(0);
  const std::size_t inner = t.size() / c;
  std::vector<Scalar> v(c);
  for (std::size_t i = 0; i < c; ++i) {
    v[i] = t[i * inner];
    for (std::size_t k = 1; k < inner; ++k)
      if (t[i * inner + k] != v[i]) return std::nullopt;
  }
  return v;
}

void check_groups(const NetworkGraph& g, const ChannelSpaces& cs) {
  if (g.gates.size() != g.groups.size()) throw Error(ErrorCode::InvalidGraph, "gate vectors do not match gate groups");
  for (std::size_t k = 0; k < g.groups.size(); ++k) {
    for (auto site : g.groups[k].sites) {
      if (site >= g.layers.size() || cs.site_group[site] != static_cast<int>(k)) {
        throw Error(ErrorCode::InvalidGraph, fmt::format("share group {} does not match the channel ties at its sites", k));
      }
    }
    if (g.gates[k].size() != g.groups[k].channels) {
      throw Error(ErrorCode::InvalidGraph, fmt::format("gate vector {} has the wrong length", k));
    }
  }
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const int k = cs.site_group[i];
    if (k < 0) continue;
    const auto& sites = g.groups.at(static_cast<std::size_t>(k)).sites;
    if (std::find(sites.begin(), sites.end(), i) == sites.end()) {
      throw Error(ErrorCode::InvalidGraph, "layer '" + g.layers[i].name + "' is missing from its share group");
    }
  }
}

}  // namespace

PruneResult absorb_and_remove(const NetworkGraph& gated) {
  validate(gated);
  const auto cs = analyze_channels(gated);
  const auto shapes = infer_shapes(gated);
  if (gated.gated()) check_groups(gated, cs);

  const std::size_t spaces = cs.space_channels.size();
  std::vector<std::vector<std::size_t>> keep(spaces);
  for (std::size_t s = 0; s < spaces; ++s) {
    const int g = gated.gated() ? cs.space_group[s] : -1;
    for (std::size_t c = 0; c < cs.space_channels[s]; ++c)
      if (g < 0 || gated.gates[static_cast<std::size_t>(g)].alpha[c] != 0) keep[s].push_back(c);
  }
  std::vector<std::vector<Scalar>> gains;
  for (const auto& gv : gated.gates) {
    gains.push_back(gated.mode() == GateMode::RegularizerOnly ? std::vector<Scalar>(gv.size(), 1) : gv.values());
  }

  PruneResult result;
  auto& report = result.report;
  for (std::size_t g = 0; g < gated.groups.size(); ++g) {
    GroupPruneSummary sum;
    for (auto site : gated.groups[g].sites) sum.sites.push_back(gated.layers[site].name);
    for (std::size_t c = 0; c < gated.groups[g].channels; ++c)
      (gated.gates[g].alpha[c] != 0 ? sum.kept : sum.removed).push_back(c);
    report.groups.push_back(std::move(sum));
  }

  NetworkGraph& out = result.graph;
  out.input_shape = gated.input_shape;
  const std::size_t n = gated.layers.size();
  std::vector<Status> status(n, Status::Live);
  std::vector<Tensor> value(n);
  std::vector<int> index(n, -1);  // emitted layer, for Live layers and materialized constants

  const auto emit = [&](LayerSpec spec) {
    out.layers.push_back(std::move(spec));
    return static_cast<int>(out.layers.size()) - 1;
  };
  const auto emit_constant = [&](std::string name, Tensor v) {
    LayerSpec c;
    c.name = std::move(name);
    c.kind = LayerKind::Constant;
    c.weight = std::move(v);
    return emit(std::move(c));
  };
  const auto source = [&](int in) -> int {
    if (in == kNetworkInput) return kNetworkInput;
    if (status[in] == Status::Constant && index[in] < 0) {
      const auto& orig = gated.layers[in];
      index[in] = emit_constant(orig.kind == LayerKind::Constant ? orig.name : orig.name + "_const", value[in]);
      report.notes.push_back("layer '" + orig.name + "' folded into constant '" + out.layers[index[in]].name + "'");
    }
    return index[in];
  };
  const auto in_status = [&](int in) { return in == kNetworkInput ? Status::Live : status[in]; };
  const auto in_space = [&](int in) { return in == kNetworkInput ? cs.input_space : cs.layer_space[in]; };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& L = gated.layers[i];
    const auto& out_keep = keep[cs.layer_space[i]];
    if (out_keep.empty()) {
      status[i] = Status::Dead;
      report.notes.push_back("layer '" + L.name + "' removed (no channels left)");
      continue;
    }
    LayerSpec P = L;
    P.inputs.clear();
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        const int in = L.inputs[0];
        const auto& in_keep = keep[in_space(in)];
        const int g = gated.gated() ? cs.site_group[i] : -1;
        const std::vector<Scalar> ones(cs.space_channels[in_space(in)], 1);
        P.out_channels = out_keep.size();
        if (L.has_bias) P.bias = select_rows(L.bias, out_keep);
        if (in_status(in) == Status::Dead) {
          status[i] = Status::Constant;
          value[i] = broadcast_bias(shapes[i], out_keep.size(), L.has_bias ? &P.bias : nullptr);
          report.notes.push_back("layer '" + L.name + "' lost every input channel");
          continue;
        }
        P.weight = select_kernel(L.weight, out_keep, in_keep, g >= 0 ? gains[static_cast<std::size_t>(g)] : ones);
        P.inputs = {source(in)};
        index[i] = emit(std::move(P));
        break;
      }
      case LayerKind::DepthwiseConv:
        P.weight = select_rows(L.weight, out_keep);
        if (L.has_bias) P.bias = select_rows(L.bias, out_keep);
        P.inputs = {source(L.inputs[0])};
        index[i] = emit(std::move(P));
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool: {
        if (L.kind == LayerKind::BatchNorm) {
          P.weight = select_rows(L.weight, out_keep);
          P.bias = select_rows(L.bias, out_keep);
          P.running_mean = select_rows(L.running_mean, out_keep);
          P.running_var = select_rows(L.running_var, out_keep);
        }
        const int in = L.inputs[0];
        if (in_status(in) == Status::Constant) {
          status[i] = Status::Constant;
          value[i] = eval_constant(P, value[in]);
          continue;
        }
        P.inputs = {source(in)};
        index[i] = emit(std::move(P));
        break;
      }
      case LayerKind::Add: {
        if (L.has_bias) P.bias = select_rows(L.bias, out_keep);
        std::optional<Tensor> folded;
        for (int in : L.inputs) {
          if (in_status(in) == Status::Live) {
            P.inputs.push_back(source(in));
          } else if (!folded) {
            folded = value[in];
          } else {
            auto f = folded->data();
            const auto v = value[in].data();
            for (std::size_t k = 0; k < f.size(); ++k) f[k] += v[k];
          }
        }
        if (P.inputs.empty()) {
          status[i] = Status::Constant;
          value[i] = *folded;
          if (P.has_bias) {
            const std::size_t inner = value[i].size() / out_keep.size();
            for (std::size_t c = 0; c < out_keep.size(); ++c)
              for (std::size_t k = 0; k < inner; ++k) value[i][c * inner + k] += P.bias[c];
          }
          continue;
        }
        if (folded) {
          if (const auto per_channel = uniform_channels(*folded)) {
            if (!P.has_bias) P.bias = Tensor(Shape{out_keep.size()}, 0);
            P.has_bias = true;
            for (std::size_t c = 0; c < out_keep.size(); ++c) P.bias[c] += (*per_channel)[c];
            report.notes.push_back("constant inputs of '" + L.name + "' folded into its bias");
          } else {
            P.inputs.push_back(emit_constant(L.name + "_const", *folded));
            report.notes.push_back("constant inputs of '" + L.name + "' kept as constant '" + L.name + "_const'");
          }
        }
        index[i] = emit(std::move(P));
        break;
      }
      case LayerKind::Constant:
        status[i] = Status::Constant;
        value[i] = select_rows(L.weight, out_keep);
        continue;
    }
  }
  if (status[n - 1] == Status::Constant) {
    index[n - 1] = emit_constant(gated.layers[n - 1].name, value[n - 1]);
    report.notes.push_back("network output is constant");
  }
  validate(out);
  {
    std::vector<bool> live(out.layers.size(), false);
    live.back() = true;
    for (std::size_t i = out.layers.size(); i-- > 0;)
      if (live[i])
        for (int in : out.layers[i].inputs)
          if (in >= 0) live[in] = true;
    for (std::size_t i = 0; i < out.layers.size(); ++i)
      if (!live[i]) report.notes.push_back("layer '" + out.layers[i].name + "' no longer reaches the output");
  }

  report.flops_before = count_macs(gated);
  report.flops_after = count_macs(out);
  report.params_before = count_parameters(gated);
  report.params_after = count_parameters(out);
  return result;
}

ConsistencyResult consistency_check(const NetworkGraph& super_graph, const NetworkGraph& pruned_graph,
                                    std::span<const Batch> probes) {
  ConsistencyResult r;
  std::size_t super_correct = 0, pruned_correct = 0;
  for (const auto& batch : probes) {
    const Tensor a = predict(super_graph, batch.images);
    const Tensor b = predict(pruned_graph, batch.images);
    if (a.shape() != b.shape()) throw Error(ErrorCode::ShapeMismatch, "consistency_check: logit shapes differ");
    for (std::size_t k = 0; k < a.size(); ++k) r.max_abs_deviation = std::max(r.max_abs_deviation, std::abs(a[k] - b[k]));
    super_correct += count_correct(a, batch.labels);
    pruned_correct += count_correct(b, batch.labels);
    r.samples += batch.size();
  }
  if (r.samples > 0) {
    r.super_accuracy = static_cast<double>(super_correct) / static_cast<double>(r.samples);
    r.pruned_accuracy = static_cast<double>(pruned_correct) / static_cast<double>(r.samples);
  }
  return r;
}

void write_prune_report_text(std::ostream& out, const PruneReport& report) {
  out << fmt::format("flops (MACs): {} -> {}\n", report.flops_before, report.flops_after);
  out << fmt::format("parameters:   {} -> {}\n", report.params_before, report.params_after);
  if (report.probe_samples > 0) {
    out << fmt::format("probe samples: {}\n", report.probe_samples);
    out << fmt::format("max abs logit deviation: {}\n", report.max_abs_deviation);
    out << fmt::format("accuracy super-net: {}  pruned: {}\n", report.super_accuracy, report.pruned_accuracy);
  }
  for (std::size_t g = 0; g < report.groups.size(); ++g) {
    const auto& s = report.groups[g];
    out << fmt::format("group {} [{}]: kept {}/{} removed {}\n", g, fmt::join(s.sites, " "), s.kept.size(),
                       s.kept.size() + s.removed.size(), fmt::join(s.removed, " "));
  }
  for (const auto& note : report.notes) out << "note: " << note << '\n';
}

void write_prune_report_csv(std::ostream& out, const PruneReport& report) {
  out << "group,site_layers,channels,kept,removed,kept_indices,removed_indices\n";
  for (std::size_t g = 0; g < report.groups.size(); ++g) {
    const auto& s = report.groups[g];
    out << fmt::format("{},{},{},{},{},{},{}\n", g, fmt::join(s.sites, " "), s.kept.size() + s.removed.size(),
                       s.kept.size(), s.removed.size(), fmt::join(s.kept, " "), fmt::join(s.removed, " "));
  }
}

}  // namespace gdp
