#include "gdp/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "gdp/error.hpp"
#include "gdp/ops.hpp"

namespace gdp {
namespace {

[[noreturn]] void graph_error(const std::string& message) { throw Error(ErrorCode::InvalidGraph, message); }

bool preserves_channels(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Relu:
    case LayerKind::AvgPool:
    case LayerKind::GlobalAvgPool:
    case LayerKind::BatchNorm:
    case LayerKind::DepthwiseConv:
    case LayerKind::Add:
      return true;
    default:
      return false;
  }
}

std::size_t spatial_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0 || in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

ActivationShape input_activation(const NetworkGraph& g) {
  if (g.input_shape.size() != 3 || numel(g.input_shape) == 0) {
    graph_error("network input shape must be [c,h,w], got " + shape_str(g.input_shape));
  }
  return {g.input_shape[0], g.input_shape[1], g.input_shape[2], true};
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::mt19937_64 seeded_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::DepthwiseConv: return "depthwise";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "relu";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::GlobalAvgPool: return "global_avgpool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Add: return "add";
    case LayerKind::Constant: return "constant";
  }
  return "relu";
}

LayerKind parse_layer_kind(std::string_view text) {
  for (auto kind : {LayerKind::Conv, LayerKind::DepthwiseConv, LayerKind::Dense, LayerKind::Relu, LayerKind::AvgPool,
                    LayerKind::GlobalAvgPool, LayerKind::BatchNorm, LayerKind::Add, LayerKind::Constant}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::Config, "unknown layer kind '" + std::string(text) + "'");
}

int NetworkGraph::find(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  return -2;
}

std::vector<ActivationShape> infer_shapes(const NetworkGraph& graph) {
  const ActivationShape input = input_activation(graph);
  std::vector<ActivationShape> shapes;
  shapes.reserve(graph.layers.size());
  if (graph.layers.empty()) graph_error("network has no layers");
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& L = graph.layers[i];
    const auto where = "layer '" + L.name + "' (" + std::string(to_string(L.kind)) + ")";
    for (int in : L.inputs) {
      if (in < kNetworkInput || in >= static_cast<int>(i)) graph_error(where + " reads a layer that is not earlier in the order");
    }
    const std::size_t arity = L.inputs.size();
    if (L.kind == LayerKind::Constant ? arity != 0 : L.kind == LayerKind::Add ? arity < 1 : arity != 1) {
      graph_error(where + " has " + std::to_string(arity) + " inputs");
    }
    const auto in_shape = [&](std::size_t k) { return L.inputs[k] == kNetworkInput ? input : shapes[L.inputs[k]]; };
    ActivationShape out;
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::DepthwiseConv: {
        const auto x = in_shape(0);
        if (!x.spatial) graph_error(where + " needs a spatial input");
        out.channels = L.kind == LayerKind::Conv ? L.out_channels : x.channels;
        out.height = spatial_out(x.height, L.kernel, L.stride, L.padding);
        out.width = spatial_out(x.width, L.kernel, L.stride, L.padding);
        if (out.height == 0 || out.width == 0) graph_error(where + " kernel/stride do not fit its input");
        break;
      }
      case LayerKind::Dense: {
        const auto x = in_shape(0);
        if (x.spatial) graph_error(where + " needs a flat [c] input (use global_avgpool first)");
        out = {L.out_channels, 1, 1, false};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::BatchNorm:
        out = in_shape(0);
        break;
      case LayerKind::AvgPool: {
        const auto x = in_shape(0);
        if (!x.spatial || L.window == 0 || L.window > x.height || L.window > x.width) {
          graph_error(where + " window does not fit its input");
        }
        out = {x.channels, x.height / L.window, x.width / L.window, true};
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const auto x = in_shape(0);
        if (!x.spatial) graph_error(where + " needs a spatial input");
        out = {x.channels, 1, 1, false};
        break;
      }
      case LayerKind::Add: {
        out = in_shape(0);
        for (std::size_t k = 1; k < arity; ++k)
          if (!(in_shape(k) == out)) graph_error(where + " adds tensors of different shapes");
        break;
      }
      case LayerKind::Constant: {
        const auto& s = L.weight.shape();
        if (s.size() == 3) {
          out = {s[0], s[1], s[2], true};
        } else if (s.size() == 1) {
          out = {s[0], 1, 1, false};
        } else {
          graph_error(where + " value must be [c,h,w] or [c]");
        }
        break;
      }
    }
    if (out.channels == 0) graph_error(where + " has no output channels");
    shapes.push_back(out);
  }
  return shapes;
}

void validate(const NetworkGraph& graph) {
  const auto shapes = infer_shapes(graph);
  const ActivationShape input = input_activation(graph);
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const auto& L = graph.layers[i];
    const auto in_c = L.inputs.empty() ? 0 : (L.inputs[0] == kNetworkInput ? input : shapes[L.inputs[0]]).channels;
    const auto c = shapes[i].channels;
    const auto where = "layer '" + L.name + "'";
    auto expect = [&](const Tensor& t, const Shape& s, const char* what) {
      if (t.shape() != s) {
        throw Error(ErrorCode::ShapeMismatch,
                    where + " " + what + " has shape " + shape_str(t.shape()) + ", expected " + shape_str(s));
      }
    };
    switch (L.kind) {
      case LayerKind::Conv: expect(L.weight, {c, in_c, L.kernel, L.kernel}, "kernel"); break;
      case LayerKind::DepthwiseConv: expect(L.weight, {c, L.kernel, L.kernel}, "kernel"); break;
      case LayerKind::Dense: expect(L.weight, {c, in_c}, "weight"); break;
      case LayerKind::BatchNorm:
        expect(L.weight, {c}, "gamma");
        expect(L.bias, {c}, "beta");
        expect(L.running_mean, {c}, "running mean");
        expect(L.running_var, {c}, "running variance");
        break;
      default: break;
    }
    const bool biased = L.has_bias && (mixes_channels(L.kind) || L.kind == LayerKind::DepthwiseConv || L.kind == LayerKind::Add);
    if (biased) expect(L.bias, {c}, "bias");
  }
  for (std::size_t i = 0; i < graph.layers.size(); ++i)
    for (std::size_t j = i + 1; j < graph.layers.size(); ++j)
      if (graph.layers[i].name == graph.layers[j].name) graph_error("duplicate layer name '" + graph.layers[i].name + "'");
}

ChannelSpaces analyze_channels(const NetworkGraph& graph) {
  const auto shapes = infer_shapes(graph);
  const std::size_t L = graph.layers.size();
  DisjointSets sets(L + 1);
  const auto node = [](int layer) { return static_cast<std::size_t>(layer + 1); };
  for (std::size_t i = 0; i < L; ++i) {
    const auto& layer = graph.layers[i];
    if (!preserves_channels(layer.kind)) continue;
    for (int in : layer.inputs) sets.unite(node(static_cast<int>(i)), node(in));
  }

  ChannelSpaces cs;
  std::map<std::size_t, std::size_t> root_to_space;
  const auto space_of = [&](std::size_t n) {
    const auto root = sets.find(n);
    auto [it, inserted] = root_to_space.emplace(root, root_to_space.size());
    return it->second;
  };
  cs.input_space = space_of(0);
  cs.space_channels.push_back(graph.input_shape.at(0));
  cs.layer_space.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    const auto s = space_of(node(static_cast<int>(i)));
    cs.layer_space[i] = s;
    if (s >= cs.space_channels.size()) cs.space_channels.push_back(shapes[i].channels);
  }

  const auto in_space = [&](int in) { return in == kNetworkInput ? cs.input_space : cs.layer_space[in]; };
  cs.space_group.assign(cs.space_channels.size(), -1);
  cs.site_group.assign(L, -1);
  int groups = 0;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& layer = graph.layers[i];
    if (!mixes_channels(layer.kind)) continue;
    const auto s = in_space(layer.inputs[0]);
    if (s == cs.input_space) continue;
    if (cs.space_group[s] < 0) cs.space_group[s] = groups++;
    cs.site_group[i] = cs.space_group[s];
  }

  if (cs.space_group[cs.layer_space[graph.output()]] >= 0) {
    graph_error("network output '" + graph.layers[graph.output()].name + "' lies in a gated channel space");
  }
  std::vector<std::optional<ActivationShape>> site_input(static_cast<std::size_t>(groups));
  for (std::size_t i = 0; i < L; ++i) {
    const int g = cs.site_group[i];
    if (g < 0) continue;
    const auto& layer = graph.layers[i];
    if (cs.space_group[cs.layer_space[i]] == g) {
      graph_error("layer '" + layer.name + "' reads and writes the same gated channel space");
    }
    const int in = layer.inputs[0];
    const ActivationShape x = in == kNetworkInput ? input_activation(graph) : shapes[in];
    auto& ref = site_input[static_cast<std::size_t>(g)];
    if (!ref) {
      ref = x;
    } else if (ref->height != x.height || ref->width != x.width || ref->spatial != x.spatial) {
      graph_error("gate shared by layer '" + layer.name + "' spans consumers at different spatial resolutions");
    }
  }
  return cs;
}

void allocate_parameters(NetworkGraph& graph) {
  const auto shapes = infer_shapes(graph);
  const ActivationShape input = input_activation(graph);
  const auto ensure = [](Tensor& t, const Shape& s, Scalar fill, bool trainable) {
    if (t.shape() != s) t = Tensor(s, fill);
    if (trainable && !t.requires_grad()) t.set_requires_grad(true);
  };
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    auto& L = graph.layers[i];
    const auto c = shapes[i].channels;
    const auto in_c = L.inputs.empty() ? 0 : (L.inputs[0] == kNetworkInput ? input : shapes[L.inputs[0]]).channels;
    switch (L.kind) {
      case LayerKind::Conv: ensure(L.weight, {c, in_c, L.kernel, L.kernel}, 0, true); break;
      case LayerKind::DepthwiseConv: ensure(L.weight, {c, L.kernel, L.kernel}, 0, true); break;
      case LayerKind::Dense: ensure(L.weight, {c, in_c}, 0, true); break;
      case LayerKind::BatchNorm:
        ensure(L.weight, {c}, 1, true);
        ensure(L.bias, {c}, 0, true);
        ensure(L.running_mean, {c}, 0, false);
        ensure(L.running_var, {c}, 1, false);
        break;
      default: break;
    }
    if (L.has_bias && (mixes_channels(L.kind) || L.kind == LayerKind::DepthwiseConv || L.kind == LayerKind::Add)) {
      ensure(L.bias, {c}, 0, true);
    }
  }
}

void initialize_weights(NetworkGraph& graph, std::uint64_t seed) {
  allocate_parameters(graph);
  auto rng = seeded_rng(seed);
  for (auto& L : graph.layers) {
    std::size_t fan_in = 0;
    switch (L.kind) {
      case LayerKind::Conv: fan_in = L.weight.dim(1) * L.kernel * L.kernel; break;
      case LayerKind::DepthwiseConv: fan_in = L.kernel * L.kernel; break;
      case LayerKind::Dense: fan_in = L.weight.dim(1); break;
      case LayerKind::BatchNorm:
        for (auto& v : L.weight.data()) v = 1;
        for (auto& v : L.bias.data()) v = 0;
        for (auto& v : L.running_mean.data()) v = 0;
        for (auto& v : L.running_var.data()) v = 1;
        continue;
      default: continue;
    }
    std::normal_distribution<Scalar> dist(0, std::sqrt(Scalar{2} / static_cast<Scalar>(fan_in)));
    for (auto& v : L.weight.data()) v = dist(rng);
    if (L.has_bias)
      for (auto& v : L.bias.data()) v = 0;
  }
  refresh_norm_gates(graph);
}

std::vector<Tensor*> weight_parameters(NetworkGraph& graph) {
  std::vector<Tensor*> params;
  for (auto& L : graph.layers) {
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::DepthwiseConv:
      case LayerKind::Dense:
        params.push_back(&L.weight);
        if (L.has_bias) params.push_back(&L.bias);
        break;
      case LayerKind::BatchNorm:
        params.push_back(&L.weight);
        params.push_back(&L.bias);
        break;
      case LayerKind::Add:
        if (L.has_bias) params.push_back(&L.bias);
        break;
      default: break;
    }
  }
  return params;
}

std::size_t count_parameters(const NetworkGraph& graph) {
  std::size_t n = 0;
  for (auto* t : weight_parameters(const_cast<NetworkGraph&>(graph))) n += t->size();
  return n;
}

namespace {

std::vector<Scalar> slice_norms(const NetworkGraph& graph, const GateGroup& group) {
  std::vector<Scalar> sq(group.channels, 0);
  for (auto site : group.sites) {
    const auto& w = graph.layers[site].weight;
    const std::size_t rows = w.dim(0);
    const std::size_t inner = w.rank() == 4 ? w.dim(2) * w.dim(3) : 1;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < group.channels; ++c)
        for (std::size_t i = 0; i < inner; ++i) {
          const Scalar v = w[(r * group.channels + c) * inner + i];
          sq[c] += v * v;
        }
  }
  for (auto& v : sq) v = std::sqrt(v);
  return sq;
}

}  // namespace

void refresh_norm_gates(NetworkGraph& graph) {
  for (std::size_t g = 0; g < graph.groups.size(); ++g) {
    auto& gv = graph.gates[g];
    if (gv.mode == GateMode::IntroducedParam) continue;
    const auto norms = slice_norms(graph, graph.groups[g]);
    std::copy(norms.begin(), norms.end(), gv.alpha.data().begin());
  }
}

std::vector<std::vector<Scalar>> gate_values(const NetworkGraph& graph) {
  std::vector<std::vector<Scalar>> out;
  for (const auto& gv : graph.gates) out.push_back(gv.values());
  return out;
}

NetworkGraph attach_gates(NetworkGraph graph, const GateInit& init) {
  validate(graph);
  if (!(init.epsilon > 0)) throw Error(ErrorCode::InvalidArgument, "attach_gates: epsilon must be positive");
  const auto cs = analyze_channels(graph);
  const auto shapes = infer_shapes(graph);

  std::vector<GateGroup> groups;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const int g = cs.site_group[i];
    if (g < 0) continue;
    if (static_cast<std::size_t>(g) >= groups.size()) groups.resize(static_cast<std::size_t>(g) + 1);
    auto& group = groups[static_cast<std::size_t>(g)];
    group.sites.push_back(i);
    const int in = graph.layers[i].inputs[0];
    group.channels = in == kNetworkInput ? graph.input_shape[0] : shapes[in].channels;
  }

  if (!graph.share_groups.empty()) {
    const auto in_channels = [&](std::size_t site) {
      const int in = graph.layers.at(site).inputs.at(0);
      return in == kNetworkInput ? graph.input_shape[0] : shapes[in].channels;
    };
    auto declared = graph.share_groups;
    for (auto& d : declared) {
      std::sort(d.begin(), d.end());
      for (auto site : d) {
        if (site >= graph.layers.size() || !mixes_channels(graph.layers[site].kind)) {
          graph_error("declared gate site " + std::to_string(site) + " is not a regular convolution or dense layer");
        }
        if (in_channels(site) != in_channels(d.front())) {
          graph_error("share group containing '" + graph.layers[d.front()].name + "' and '" + graph.layers[site].name +
                      "' has inconsistent channel counts (" + std::to_string(in_channels(d.front())) + " vs " +
                      std::to_string(in_channels(site)) + ")");
        }
      }
    }
    std::sort(declared.begin(), declared.end());
    std::vector<std::vector<std::size_t>> derived;
    for (const auto& g : groups) derived.push_back(g.sites);
    std::sort(derived.begin(), derived.end());
    if (declared != derived) {
      graph_error("declared share groups do not match the channel ties of the topology");
    }
  }

  graph.groups = groups;
  graph.share_groups.clear();
  for (const auto& g : groups) graph.share_groups.push_back(g.sites);
  graph.gates.clear();
  for (const auto& group : groups) {
    GateVector gv;
    gv.mode = init.mode;
    gv.epsilon = init.epsilon;
    if (init.mode == GateMode::IntroducedParam) {
      gv.alpha = Tensor(Shape{group.channels}, init.alpha);
      gv.alpha.set_requires_grad(true);
    } else {
      for (auto site : group.sites) {
        if (graph.layers[site].weight.rank() < 2 || graph.layers[site].weight.dim(1) != group.channels) {
          throw Error(ErrorCode::InvalidArgument, "attach_gates: weight-norm gates need allocated kernels");
        }
      }
      const auto norms = slice_norms(graph, group);
      gv.alpha = Tensor(Shape{group.channels}, norms);
      gv.gate_epsilon.resize(group.channels);
      for (std::size_t i = 0; i < group.channels; ++i) gv.gate_epsilon[i] = norms[i] > 0 ? norms[i] / 10 : init.epsilon;
    }
    graph.gates.push_back(std::move(gv));
  }
  return graph;
}

ForwardPass forward_gated(NetworkGraph& graph, Tape& tape, const Tensor& input, const ForwardOptions& options) {
  const auto& in_shape = input.shape();
  const bool batched = in_shape.size() == 4;
  const Shape sample(batched ? in_shape.begin() + 1 : in_shape.begin(), in_shape.end());
  if (sample != graph.input_shape) {
    throw Error(ErrorCode::ShapeMismatch,
                "forward: input " + shape_str(in_shape) + " does not match network input " + shape_str(graph.input_shape));
  }
  const auto param = [&](Tensor& t) { return options.track_gradients ? tape.parameter(t) : tape.constant(t); };

  ForwardPass pass;
  const GateMode mode = graph.mode();
  for (std::size_t g = 0; g < graph.groups.size(); ++g) {
    auto& gv = graph.gates[g];
    if (options.gate_override) {
      const auto& values = options.gate_override->at(g);
      if (values.size() != gv.size()) throw Error(ErrorCode::ShapeMismatch, "forward: gate override has wrong length");
      pass.gates.push_back(tape.constant(Tensor::vector(values)));
      continue;
    }
    const auto eps = gv.epsilons();
    if (gv.mode == GateMode::IntroducedParam) {
      pass.gates.push_back(gate_values(param(gv.alpha), eps));
    } else {
      std::vector<Var> kernels;
      for (auto site : graph.groups[g].sites) kernels.push_back(param(graph.layers[site].weight));
      pass.gates.push_back(gate_values(input_channel_norms(kernels), eps));
    }
  }
  const bool scale_inputs = options.gate_override != nullptr || mode != GateMode::RegularizerOnly;

  std::vector<int> site_group(graph.layers.size(), -1);
  for (std::size_t g = 0; g < graph.groups.size(); ++g)
    for (auto site : graph.groups[g].sites) site_group[site] = static_cast<int>(g);

  const Var x0 = tape.constant(input);
  std::vector<Var> out(graph.layers.size());
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    auto& L = graph.layers[i];
    const auto in = [&](std::size_t k) { return L.inputs[k] == kNetworkInput ? x0 : out[L.inputs[k]]; };
    const auto bias = [&]() -> std::optional<Var> {
      if (!L.has_bias) return std::nullopt;
      return param(L.bias);
    };
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        Var x = in(0);
        if (site_group[i] >= 0 && scale_inputs) x = channel_scale(x, pass.gates[site_group[i]]);
        out[i] = L.kind == LayerKind::Conv ? conv2d(x, param(L.weight), L.stride, L.padding, bias())
                                           : dense(x, param(L.weight), bias());
        break;
      }
      case LayerKind::DepthwiseConv:
        out[i] = depthwise_conv2d(in(0), param(L.weight), L.stride, L.padding, bias());
        break;
      case LayerKind::Relu: out[i] = relu(in(0)); break;
      case LayerKind::AvgPool: out[i] = avgpool2d(in(0), L.window); break;
      case LayerKind::GlobalAvgPool: out[i] = global_avgpool(in(0)); break;
      case LayerKind::BatchNorm:
        out[i] = batchnorm2d(in(0), param(L.weight), param(L.bias),
                             BatchNormStats{L.running_mean, L.running_var, L.bn_momentum, L.bn_eps}, options.training);
        break;
      case LayerKind::Add: {
        Var acc = in(0);
        for (std::size_t k = 1; k < L.inputs.size(); ++k) acc = add(acc, in(k));
        if (L.has_bias) acc = channel_bias(acc, param(L.bias));
        out[i] = acc;
        break;
      }
      case LayerKind::Constant: {
        if (!batched) {
          out[i] = tape.constant(L.weight);
          break;
        }
        Shape s{in_shape[0]};
        s.insert(s.end(), L.weight.shape().begin(), L.weight.shape().end());
        Tensor value(s);
        const auto src = L.weight.data();
        for (std::size_t b = 0; b < in_shape[0]; ++b)
          std::copy(src.begin(), src.end(), value.data().begin() + static_cast<long>(b * src.size()));
        out[i] = tape.constant(std::move(value));
        break;
      }
    }
  }
  pass.logits = out.back();
  return pass;
}

Tensor predict(const NetworkGraph& graph, const Tensor& input, const GateOverride* gate_override) {
  NetworkGraph copy = graph;
  Tape tape;
  ForwardOptions options;
  options.gate_override = gate_override;
  options.track_gradients = false;
  return forward_gated(copy, tape, input, options).logits.value();
}

GraphBuilder::GraphBuilder(Shape input_shape) { graph_.input_shape = std::move(input_shape); }

NetworkGraph GraphBuilder::build() const {
  NetworkGraph g = graph_;
  allocate_parameters(g);
  return g;
}

std::size_t GraphBuilder::push(LayerSpec spec, std::optional<int> from) {
  if (spec.inputs.empty() && spec.kind != LayerKind::Add) spec.inputs = {from.value_or(last())};
  graph_.layers.push_back(std::move(spec));
  return graph_.layers.size() - 1;
}

std::size_t GraphBuilder::conv(std::string name, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                               std::size_t padding, bool bias, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Conv;
  s.out_channels = out_channels;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.has_bias = bias;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::depthwise(std::string name, std::size_t kernel, std::size_t stride, std::size_t padding,
                                    bool bias, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::DepthwiseConv;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.has_bias = bias;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::dense(std::string name, std::size_t out_features, bool bias, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Dense;
  s.out_channels = out_features;
  s.has_bias = bias;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::relu(std::string name, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Relu;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::avgpool(std::string name, std::size_t window, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::AvgPool;
  s.window = window;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::global_avgpool(std::string name, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::GlobalAvgPool;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::batchnorm(std::string name, std::optional<int> from) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::BatchNorm;
  return push(std::move(s), from);
}

std::size_t GraphBuilder::add(std::string name, std::vector<int> inputs) {
  LayerSpec s;
  s.name = std::move(name);
  s.kind = LayerKind::Add;
  s.inputs = std::move(inputs);
  return push(std::move(s), std::nullopt);
}

}  // namespace gdp
