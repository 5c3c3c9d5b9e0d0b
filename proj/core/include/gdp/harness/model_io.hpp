#pragma once

#include <filesystem>
#include <string>

#include "gdp/network.hpp"

namespace gdp::harness {

// Topology is a JSON document:
//   {"input": [c,h,w],
//    "layers": [{"name": "conv1", "kind": "conv", "inputs": ["input"], "out_channels": 8,
//                "kernel": 3, "stride": 1, "padding": 1, "bias": true}, ...],
//    "share_groups": [["conv2", "head"], ...],          (optional)
//    "gates": {"mode": "param", "groups": [["conv2"], ...]},  (checkpoints only)
//    "weights": "model.bin"}                            (optional sidecar)
// "inputs" defaults to the previous layer. Constant layers carry "shape".
//
// The sidecar holds "GDPWGT01", a u64 tensor count, one u64 element count per
// tensor, then every element as a little-endian IEEE-754 double. Tensors come
// in declaration order: per layer kernel/gamma/value, bias/beta, running mean,
// running variance (whichever exist); then per gate group epsilon, alpha and,
// outside IntroducedParam mode, the per-gate epsilons.
struct LoadedModel {
  NetworkGraph graph;
  bool has_weights = false;
};

LoadedModel load_model(const std::filesystem::path& json_path);
LoadedModel parse_model(const std::string& json_text, const std::filesystem::path& base_dir = {});

// Writes <stem>.json and <stem>.bin next to each other.
void save_model(const NetworkGraph& graph, const std::filesystem::path& json_path);

}  // namespace gdp::harness
