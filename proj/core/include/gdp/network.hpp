#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gdp/autodiff.hpp"
#include "gdp/gate.hpp"
#include "gdp/tensor.hpp"

namespace gdp {

enum class LayerKind {
  Conv,
  DepthwiseConv,
  Dense,
  Relu,
  AvgPool,
  GlobalAvgPool,
  BatchNorm,
  Add,
  // Fixed per-sample tensor; only produced by pruning when a whole block folds away.
  Constant,
};

std::string_view to_string(LayerKind kind) noexcept;
LayerKind parse_layer_kind(std::string_view text);

// Regular convolutions and dense layers mix channels; a gate sits on their input.
inline bool mixes_channels(LayerKind kind) noexcept { return kind == LayerKind::Conv || kind == LayerKind::Dense; }

inline constexpr int kNetworkInput = -1;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::vector<int> inputs;  // earlier layer indices or kNetworkInput

  std::size_t out_channels = 0;  // conv, dense
  std::size_t kernel = 1;        // conv, depthwise (square)
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 2;  // avgpool
  bool has_bias = false;   // conv, depthwise, dense, add
  Scalar bn_eps = 1e-5;
  Scalar bn_momentum = 0.1;

  // conv [d,c,k,k]; depthwise [c,k,k]; dense [n,m]; batchnorm gamma [c];
  // constant: the per-sample value ([c,h,w] or [c]).
  Tensor weight;
  // conv/depthwise/dense/add bias; batchnorm beta.
  Tensor bias;
  Tensor running_mean, running_var;  // batchnorm
};

struct ActivationShape {
  std::size_t channels = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  bool spatial = true;

  Shape sample_shape() const { return spatial ? Shape{channels, height, width} : Shape{channels}; }
  bool operator==(const ActivationShape&) const = default;
};

// One gate vector's worth of sites: every consumer kernel whose input lives in
// the same channel space. Sites are layer indices in increasing order.
struct GateGroup {
  std::vector<std::size_t> sites;
  std::size_t channels = 0;
};

struct GateInit {
  GateMode mode = GateMode::IntroducedParam;
  Scalar alpha = 1.0;
  Scalar epsilon = 0.1;
};

struct NetworkGraph {
  Shape input_shape;  // [c,h,w]
  std::vector<LayerSpec> layers;
  // Declared gate sharing (consumer layer indices). Optional on input to
  // attach_gates, which checks it against the skip-connection structure.
  std::vector<std::vector<std::size_t>> share_groups;
  std::vector<GateGroup> groups;
  std::vector<GateVector> gates;  // parallel to groups

  bool gated() const noexcept { return !groups.empty(); }
  GateMode mode() const noexcept { return gates.empty() ? GateMode::IntroducedParam : gates.front().mode; }
  std::size_t output() const noexcept { return layers.size() - 1; }
  int find(std::string_view name) const noexcept;
};

// Channel spaces are the equivalence classes of activations whose channel i
// must be kept or removed together: channel-preserving ops (relu, batchnorm,
// pooling, depthwise, add) tie their output to their inputs.
struct ChannelSpaces {
  std::vector<std::size_t> layer_space;  // per layer output
  std::size_t input_space = 0;
  std::vector<std::size_t> space_channels;
  std::vector<int> space_group;  // gate group gating the space, -1 when ungated
  std::vector<int> site_group;   // per layer: gate group on its input, -1 when none
};

std::vector<ActivationShape> infer_shapes(const NetworkGraph& graph);

// Structural checks: topological inputs, arity, parameter shapes. Layers that
// never reach the output are allowed; pruning can leave them behind.
void validate(const NetworkGraph& graph);

// Gate grouping derived from the topology alone (ignores graph.groups).
ChannelSpaces analyze_channels(const NetworkGraph& graph);

// One GateVector per share group, sized to the consumers' input channels.
NetworkGraph attach_gates(NetworkGraph graph, const GateInit& init = {});

// Allocates zero parameter tensors of the right shape for every layer.
void allocate_parameters(NetworkGraph& graph);

// He-normal kernels, zero biases, identity batchnorm. Deterministic in `seed`.
void initialize_weights(NetworkGraph& graph, std::uint64_t seed);

// Trainable layer tensors (kernels, biases, batchnorm affine), in declaration order.
std::vector<Tensor*> weight_parameters(NetworkGraph& graph);

// Elements in kernels, biases and batchnorm affine parameters.
std::size_t count_parameters(const NetworkGraph& graph);

// Gate arguments for WeightNorm/RegularizerOnly groups are kernel slice norms;
// this recomputes them after the kernels change. No-op in IntroducedParam mode.
void refresh_norm_gates(NetworkGraph& graph);

// Current gate values per group (g(alpha) or g(norm)).
std::vector<std::vector<Scalar>> gate_values(const NetworkGraph& graph);

struct Batch {
  Tensor images;  // [b,c,h,w]
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

using GateOverride = std::vector<std::vector<Scalar>>;

struct ForwardOptions {
  bool training = false;
  // Replace every group's gate values (tests use it to force gates to 1).
  const GateOverride* gate_override = nullptr;
  // When false, parameters enter the tape as constants.
  bool track_gradients = true;
};

struct ForwardPass {
  Var logits;
  std::vector<Var> gates;  // per group
};

// Y_l = W_l * (g_l (.) X_{l-1}) at every gate site. Batchnorm running
// statistics are updated in training mode.
ForwardPass forward_gated(NetworkGraph& graph, Tape& tape, const Tensor& input, const ForwardOptions& options = {});

// Inference-mode logits without gradient bookkeeping.
Tensor predict(const NetworkGraph& graph, const Tensor& input, const GateOverride* gate_override = nullptr);

// Small fluent helper for building graphs in code. Each call appends a layer
// fed by `from` (default: the previous layer, or the network input).
class GraphBuilder {
 public:
  explicit GraphBuilder(Shape input_shape);

  std::size_t conv(std::string name, std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                   std::size_t padding = 0, bool bias = true, std::optional<int> from = std::nullopt);
  std::size_t depthwise(std::string name, std::size_t kernel, std::size_t stride = 1, std::size_t padding = 0,
                        bool bias = false, std::optional<int> from = std::nullopt);
  std::size_t dense(std::string name, std::size_t out_features, bool bias = true,
                    std::optional<int> from = std::nullopt);
  std::size_t relu(std::string name, std::optional<int> from = std::nullopt);
  std::size_t avgpool(std::string name, std::size_t window, std::optional<int> from = std::nullopt);
  std::size_t global_avgpool(std::string name, std::optional<int> from = std::nullopt);
  std::size_t batchnorm(std::string name, std::optional<int> from = std::nullopt);
  std::size_t add(std::string name, std::vector<int> inputs);

  int last() const noexcept { return static_cast<int>(graph_.layers.size()) - 1; }
  // The graph with zero-filled parameters of the right shapes.
  NetworkGraph build() const;

 private:
  std::size_t push(LayerSpec spec, std::optional<int> from);

  NetworkGraph graph_;
};

}  // namespace gdp
