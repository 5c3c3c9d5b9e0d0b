#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gdp/harness/config.hpp"
#include "gdp/harness/dataset.hpp"
#include "gdp/network.hpp"
#include "gdp/prox.hpp"
#include "gdp/pruner.hpp"

namespace gdp::harness {

struct MetricsRow {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double flops_ratio = 1;
  std::size_t zero_gates = 0;
  double epsilon = 0;
};

struct Evaluation {
  double loss = 0;
  double accuracy = 0;
};

Evaluation evaluate(const NetworkGraph& graph, const Dataset& data, std::size_t batch_size);

// 20 equal bins over [0, 1) for nonzero-argument gates plus an exact_zero row.
void write_gate_histogram(std::ostream& out, const NetworkGraph& graph);

struct TrainResult {
  NetworkGraph graph;  // gated super-net
  std::vector<MetricsRow> metrics;
  Evaluation val;
  std::uint64_t flops_full = 0;
  std::uint64_t flops_final = 0;
  double flops_ratio = 1;
};

// Full gated training run. Writes metrics.csv, gates_epochN.csv and
// model.json/model.bin into cfg.out_dir.
TrainResult cmd_train(const TrainConfig& cfg);

struct PruneOutcome {
  PruneResult result;
  NetworkGraph super_graph;
};

// Prunes a gated checkpoint; probes come from the validation split when
// `probe_cfg` is given. Writes pruned_model.json/.bin, prune_report.txt/.csv.
PruneOutcome cmd_prune(const std::filesystem::path& model_path, const TrainConfig* probe_cfg,
                       const std::filesystem::path& out_dir);
PruneOutcome prune_graph(const NetworkGraph& gated, const Splits* data, const std::filesystem::path& out_dir);

struct FinetuneResult {
  NetworkGraph graph;
  Evaluation train_before, train_after, val_after;
};

// Plain SGD on an ungated model using cfg.finetune. Writes finetune_metrics.csv
// and finetuned_model.json/.bin.
FinetuneResult finetune_graph(const NetworkGraph& pruned, const TrainConfig& cfg, const Splits& data,
                              const std::filesystem::path& out_dir);
FinetuneResult cmd_finetune(const std::filesystem::path& model_path, const TrainConfig& cfg,
                            const std::filesystem::path& out_dir);

struct SweepPoint {
  double lambda = 0;
  double epsilon_decay = 0;
  double flops_ratio = 1;
  double supernet_acc = 0;
  double pruned_acc = 0;
  double finetuned_acc = 0;
};

// Grid over lambdas x epsilon_decays (an empty list means the config value).
// Each point trains, prunes and fine-tunes in out_dir/point_<k>; summary.csv
// collects the results. `jobs` > 1 runs points on worker threads.
std::vector<SweepPoint> cmd_sweep(const TrainConfig& cfg, const std::vector<double>& lambdas,
                                  const std::vector<double>& epsilon_decays, int jobs = 1);

// Plain-text instance:
//   groups G
//   u <g> v1 v2 ...
//   init <g> v1 v2 ...      (defaults to u)
//   a <l> <k> value         (symmetric; one line per pair)
//   b <l> value
//   eta1 x / lambda x / iters n / unscaled_linear
// '#' starts a comment.
struct ProxInstanceFile {
  BilinearInstance instance;
  ProxConfig cfg;
};
ProxInstanceFile parse_prox_instance(const std::string& text);

// Writes solution.csv (group,index,value) and objective.csv (sweep,objective).
BilinearSolution cmd_solve_prox(const std::filesystem::path& instance_path, const std::filesystem::path& out_dir);

// Prints a summary of a checkpoint and dumps resource_a.csv / resource_b.csv.
void cmd_report(const std::filesystem::path& model_path, const std::filesystem::path& out_dir, std::ostream& out);

std::string format_number(double v);

}  // namespace gdp::harness
