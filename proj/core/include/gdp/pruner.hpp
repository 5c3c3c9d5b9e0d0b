#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gdp/network.hpp"

namespace gdp {

struct GroupPruneSummary {
  std::vector<std::string> sites;  // consumer layer names
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
};

struct PruneReport {
  std::vector<GroupPruneSummary> groups;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  // Filled by consistency_check when probes are available.
  Scalar max_abs_deviation = 0;
  double super_accuracy = 0;
  double pruned_accuracy = 0;
  std::size_t probe_samples = 0;
  // Layers removed or folded into constants/biases, in plain words.
  std::vector<std::string> notes;
};

struct PruneResult {
  NetworkGraph graph;  // ungated
  PruneReport report;
};

// Multiplies every surviving gate into its consumer kernels' input slices,
// deletes exact-zero channels everywhere in their channel space, and folds
// layers whose input vanished into constants. A constant reaching an add is
// folded into the add's per-channel bias when spatially uniform, otherwise it
// stays as a Constant input.
PruneResult absorb_and_remove(const NetworkGraph& gated);

struct ConsistencyResult {
  Scalar max_abs_deviation = 0;
  double super_accuracy = 0;
  double pruned_accuracy = 0;
  std::size_t samples = 0;
};

// Inference-mode comparison of logits and accuracy over the probe batches.
ConsistencyResult consistency_check(const NetworkGraph& super_graph, const NetworkGraph& pruned_graph,
                                    std::span<const Batch> probes);

void write_prune_report_text(std::ostream& out, const PruneReport& report);
// group,site_layers,channels,kept,removed,kept_indices,removed_indices
void write_prune_report_csv(std::ostream& out, const PruneReport& report);

}  // namespace gdp
