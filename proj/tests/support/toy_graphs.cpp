#include "toy_graphs.hpp"

#include <random>

namespace gdp::testing {

NetworkGraph plain_chain() {
  GraphBuilder b({2, 8, 8});
  b.conv("conv1", 6, 3, 1, 1);
  b.relu("relu1");
  b.conv("conv2", 8, 3, 2, 1);
  b.relu("relu2");
  b.conv("conv3", 5, 3, 1, 1);
  b.relu("relu3");
  b.global_avgpool("gap");
  b.dense("head", 4);
  return b.build();
}

MacFormula plain_chain_macs() {
  return [](const std::vector<std::uint64_t>& c) {
    return c[0] * 2 * 9 * 64 + c[0] * c[1] * 9 * 16 + c[1] * c[2] * 9 * 16 + c[2] * 4;
  };
}

NetworkGraph skip_block() {
  GraphBuilder b({3, 8, 8});
  b.conv("stem", 6, 3, 1, 1);
  b.batchnorm("stem_bn");
  const int stem = static_cast<int>(b.relu("stem_relu"));
  b.conv("expand", 12, 1, 1, 0);
  b.batchnorm("expand_bn");
  b.relu("expand_relu");
  b.depthwise("dw", 3, 1, 1);
  b.batchnorm("dw_bn");
  b.relu("dw_relu");
  b.conv("project", 6, 1, 1, 0);
  const int proj = static_cast<int>(b.batchnorm("project_bn"));
  b.add("add", {stem, proj});
  b.conv("post", 8, 1, 1, 0);
  b.relu("post_relu");
  b.global_avgpool("gap");
  b.dense("head", 5);
  return b.build();
}

// Groups in site order: stem space (expand, post), expanded space (project), post space (head).
MacFormula skip_block_macs() {
  return [](const std::vector<std::uint64_t>& c) {
    const auto s = c[0], e = c[1], h = c[2];
    return s * 3 * 9 * 64 + s * e * 64 + e * 9 * 64 + e * s * 64 + s * h * 64 + h * 5;
  };
}

NetworkGraph depthwise_block() {
  GraphBuilder b({2, 8, 8});
  b.conv("conv1", 4, 1, 1, 0);
  b.relu("relu1");
  b.depthwise("dw1", 3, 1, 1);
  b.relu("relu2");
  b.depthwise("dw2", 3, 2, 1);
  b.conv("conv2", 6, 1, 1, 0);
  b.relu("relu3");
  b.global_avgpool("gap");
  b.dense("head", 3);
  return b.build();
}

MacFormula depthwise_block_macs() {
  return [](const std::vector<std::uint64_t>& c) {
    return c[0] * (2 * 64 + 9 * 64 + 9 * 16) + c[0] * c[1] * 16 + c[1] * 3;
  };
}

NetworkGraph depthwise_only() {
  GraphBuilder b({3, 6, 6});
  b.depthwise("dw1", 3, 1, 1);
  b.relu("relu1");
  b.depthwise("dw2", 3, 1, 0);
  b.global_avgpool("gap");
  return b.build();
}

void assign_gate_pattern(NetworkGraph& g, std::uint64_t seed, double zero_prob) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& gv : g.gates)
    for (auto& a : gv.alpha.data()) {
      const double mag = 0.3 + 1.7 * u(rng);
      a = u(rng) < zero_prob ? 0 : (u(rng) < 0.5 ? -mag : mag);
    }
  if (!g.gates.empty() && seed % 5 == 0) {
    auto& gv = g.gates[static_cast<std::size_t>(seed / 5) % g.gates.size()];
    for (auto& a : gv.alpha.data()) a = 0;
  }
}

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(shape);
  for (auto& v : t.data()) v = static_cast<Scalar>(u(rng));
  return t;
}

NetworkGraph with_random_weights(NetworkGraph g, std::uint64_t seed) {
  allocate_parameters(g);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& L : g.layers) {
    const auto fill = [&](Tensor& t, double lo, double hi) {
      for (auto& v : t.data()) v = static_cast<Scalar>(lo + (hi - lo) * (u(rng) + 0.5));
    };
    switch (L.kind) {
      case LayerKind::Conv:
      case LayerKind::DepthwiseConv:
      case LayerKind::Dense:
        fill(L.weight, -0.5, 0.5);
        if (L.has_bias) fill(L.bias, -0.3, 0.3);
        break;
      case LayerKind::BatchNorm:
        fill(L.weight, 0.5, 1.5);
        fill(L.bias, -0.3, 0.3);
        fill(L.running_mean, -0.2, 0.2);
        fill(L.running_var, 0.5, 2.0);
        break;
      default: break;
    }
  }
  return g;
}

}  // namespace gdp::testing
