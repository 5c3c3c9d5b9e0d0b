// Runs every acceptance criterion and prints one PASS/FAIL line each; the exit
// status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gdp/error.hpp"
#include "gdp/gate.hpp"
#include "gdp/harness/commands.hpp"
#include "gdp/harness/config.hpp"
#include "gdp/ops.hpp"
#include "gdp/prox.hpp"
#include "gdp/pruner.hpp"
#include "gdp/resource_model.hpp"
#include "oracles.hpp"
#include "toy_graphs.hpp"

namespace {

namespace fs = std::filesystem;
using namespace gdp;
using gdp::testing::random_tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path kSource = GDP_SOURCE_DIR;

// 1 -----------------------------------------------------------------------

struct OpCheck {
  std::string name;
  std::vector<Tensor> inputs;
  testing::LossBuilder loss;
};

std::vector<OpCheck> op_checks(std::uint64_t s) {
  std::vector<OpCheck> c;
  const auto sq = [](const Var& y) { return sum(mul(y, y)); };
  const auto eps = std::make_shared<std::vector<Scalar>>(std::vector<Scalar>{0.1, 0.02, 0.5});
  const auto labels = std::make_shared<std::vector<int>>(std::vector<int>{1, 0, 4});
  c.push_back({"conv2d", {random_tensor({2, 3, 6, 6}, s), random_tensor({4, 3, 3, 3}, s + 1), random_tensor({4}, s + 2)},
               [=](Tape&, const std::vector<Var>& p) { return sq(conv2d(p[0], p[1], 2, 1, p[2])); }});
  c.push_back({"depthwise_conv2d",
               {random_tensor({2, 3, 6, 6}, s + 3), random_tensor({3, 3, 3}, s + 4), random_tensor({3}, s + 5)},
               [=](Tape&, const std::vector<Var>& p) { return sq(depthwise_conv2d(p[0], p[1], 1, 1, p[2])); }});
  c.push_back({"channel_scale", {random_tensor({2, 3, 4, 4}, s + 6), random_tensor({3}, s + 7)},
               [=](Tape&, const std::vector<Var>& p) { return sq(channel_scale(p[0], p[1])); }});
  c.push_back({"channel_bias", {random_tensor({2, 3, 4, 4}, s + 8), random_tensor({3}, s + 9)},
               [=](Tape&, const std::vector<Var>& p) { return sq(channel_bias(p[0], p[1])); }});
  c.push_back({"dense", {random_tensor({3, 5}, s + 10), random_tensor({4, 5}, s + 11), random_tensor({4}, s + 12)},
               [=](Tape&, const std::vector<Var>& p) { return sq(dense(p[0], p[1], p[2])); }});
  c.push_back({"relu", {random_tensor({2, 3, 4, 4}, s + 13)},
               [=](Tape&, const std::vector<Var>& p) { return sq(relu(p[0])); }});
  c.push_back({"avgpool2d", {random_tensor({2, 3, 5, 4}, s + 14)},
               [=](Tape&, const std::vector<Var>& p) { return sq(avgpool2d(p[0], 2)); }});
  c.push_back({"global_avgpool", {random_tensor({2, 3, 4, 4}, s + 15)},
               [=](Tape&, const std::vector<Var>& p) { return sq(global_avgpool(p[0])); }});
  for (bool training : {true, false}) {
    c.push_back({training ? "batchnorm2d(train)" : "batchnorm2d(eval)",
                 {random_tensor({3, 3, 3, 3}, s + 16), random_tensor({3}, s + 17), random_tensor({3}, s + 18)},
                 [=](Tape&, const std::vector<Var>& p) {
                   Tensor mean(Shape{3}, 0.1), var(Shape{3}, 1.2);
                   const Var y = batchnorm2d(p[0], p[1], p[2], BatchNormStats{mean, var, 0.1, 1e-5}, training);
                   return sum(mul(y, relu(p[0])));
                 }});
  }
  c.push_back({"softmax_cross_entropy", {random_tensor({3, 6}, s + 19, 2.0)},
               [=](Tape&, const std::vector<Var>& p) { return softmax_cross_entropy(p[0], *labels); }});
  c.push_back({"add/mul/scale/sum", {random_tensor({5}, s + 20), random_tensor({5}, s + 21)},
               [=](Tape&, const std::vector<Var>& p) { return sum(scale(mul(add(p[0], p[1]), p[1]), -0.7)); }});
  c.push_back({"gate_values", {random_tensor({3}, s + 22)},
               [=](Tape&, const std::vector<Var>& p) { return sq(gate_values(p[0], *eps)); }});
  c.push_back({"input_channel_norms", {random_tensor({4, 3, 3, 3}, s + 23), random_tensor({2, 3}, s + 24)},
               [=](Tape&, const std::vector<Var>& p) { return sq(input_channel_norms({p[0], p[1]})); }});
  return c;
}

// Gradient of the cross-entropy with respect to every alpha of a gated graph,
// against central differences of the inference loss.
double gated_alpha_error() {
  auto g = attach_gates(testing::with_random_weights(testing::skip_block(), 3));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (auto& gv : g.gates)
    for (auto& a : gv.alpha.data()) a = u(rng);
  const Tensor x = random_tensor({3, 3, 8, 8}, 5);
  const std::vector<int> labels{0, 3, 1};
  {
    Tape tape;
    const auto pass = forward_gated(g, tape, x);
    tape.backward(softmax_cross_entropy(pass.logits, labels));
  }
  const auto loss = [&] {
    Tape t;
    return softmax_cross_entropy(t.constant(predict(g, x)), labels).value().item();
  };
  double worst = 0;
  const double h = 1e-5;
  for (auto& gv : g.gates)
    for (std::size_t i = 0; i < gv.size(); ++i) {
      const Scalar keep = gv.alpha[i];
      gv.alpha[i] = keep + h;
      const double up = loss();
      gv.alpha[i] = keep - h;
      const double down = loss();
      gv.alpha[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(gv.alpha.grad()[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  return worst;
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  double worst_op = 0;
  std::string worst_name;
  for (std::uint64_t seed : {100u, 200u, 300u}) {
    for (auto& c : op_checks(seed)) {
      const double e = testing::gradcheck(c.inputs, c.loss);
      if (e > worst_op) worst_op = e, worst_name = c.name;
    }
  }
  const double alpha_err = gated_alpha_error();
  if (alpha_err > worst_op) worst_op = alpha_err, worst_name = "gated network alpha";

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> la(-3, 1), le(-6, 0), sign(0, 1);
  double worst_gate = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = std::pow(10.0, la(rng)) * (sign(rng) < 0.5 ? -1 : 1);
    const double eps = std::pow(10.0, le(rng));
    const double h = 1e-5 * std::min(std::abs(x), std::sqrt(eps));
    const double fd = testing::central_difference([eps](double t) { return gate_value(t, eps); }, x, h);
    worst_gate = std::max(worst_gate, std::abs(gate_grad(x, eps) - fd) / std::max(1.0, std::abs(fd)));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_op < 1e-4 && worst_gate < 1e-6 && secs < 60;
  o.detail = fmt::format("ops max rel err {:.2e} ({}), scalar gate max rel err {:.2e} over 1e4 draws, {:.1f}s",
                         worst_op, worst_name, worst_gate, secs);
  return o;
}

// 2 -----------------------------------------------------------------------

Outcome criterion_soft_threshold() {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ah(-5, 5), bt(0, 3);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = ah(rng), beta = i % 50 == 0 ? 0.0 : bt(rng);
    const auto left = [=](double x) { return (x - a) + (x > 0 ? beta : -beta); };
    const auto right = [=](double x) { return (x - a) + (x >= 0 ? beta : -beta); };
    const double oracle = testing::convex_min_bisect(left, right, -10, 10);
    worst = std::max(worst, std::abs(soft_threshold(a, beta) - oracle));
  }
  return {worst < 1e-10, fmt::format("max |closed form - scalar minimizer| {:.2e} over 1e4 draws", worst)};
}

// 3, 8 --------------------------------------------------------------------

testing::ToyBilinear toy() { return {{{0.1, 0.2}, {-0.3, 0.5, 0.6}}, {{0, 0.01}, {0.01, 0}}, {0, 0}}; }

std::vector<std::vector<double>> to_double(const std::vector<std::vector<Scalar>>& x) {
  std::vector<std::vector<double>> out;
  for (const auto& v : x) out.emplace_back(v.begin(), v.end());
  return out;
}

Outcome criterion_toy_solver() {
  const auto best = testing::exhaustive_support_optimum(toy());
  Outcome o{true, ""};
  for (const char* file : {"toy_bilinear_init1.txt", "toy_bilinear_init2.txt"}) {
    const auto inst = harness::parse_prox_instance(slurp(kSource / "configs" / file));
    const auto sol = solve_bilinear_l0(inst.instance, inst.cfg);
    const double analytic = testing::toy_objective(toy(), to_double(sol.x));
    const bool ok = sol.fixed_point_sweep >= 1 && sol.fixed_point_sweep <= 5 &&
                    std::abs(sol.objective.back() - analytic) < 1e-8;
    o.pass = o.pass && ok;
    o.detail += fmt::format("{}: fixed point after sweep {}, objective {:.6g} (analytic {:.6g}), gap to exhaustive "
                            "optimum {:.6g} is {:.4g}; ",
                            file, sol.fixed_point_sweep, sol.objective.back(), analytic, best.value,
                            sol.objective.back() - best.value);
  }
  o.detail.resize(o.detail.size() - 2);
  return o;
}

std::string support_str(const std::vector<std::vector<bool>>& s) {
  std::string out;
  for (const auto& g : s) {
    out += '[';
    for (bool b : g) out += b ? '1' : '0';
    out += ']';
  }
  return out;
}

Outcome criterion_l0_sensitivity() {
  const auto p = toy();
  const std::vector<std::vector<double>> init1{{0.1, 0.8}, {0.7, 0.3, 0.8}}, init2{{0.4, 0.1}, {0.7, 0.5, 0.0}};
  using testing::Penalty;
  const auto l0a = testing::support_of(testing::alternating_prox_gradient(p, init1, 0.1, Penalty::L0));
  const auto l0b = testing::support_of(testing::alternating_prox_gradient(p, init2, 0.1, Penalty::L0));
  const auto l1a = testing::support_of(testing::alternating_prox_gradient(p, init1, 0.1, Penalty::L1));
  const auto l1b = testing::support_of(testing::alternating_prox_gradient(p, init2, 0.1, Penalty::L1));
  std::vector<std::vector<bool>> solver[2];
  int k = 0;
  for (const char* file : {"toy_bilinear_init1.txt", "toy_bilinear_init2.txt"}) {
    const auto inst = harness::parse_prox_instance(slurp(kSource / "configs" / file));
    solver[k++] = testing::support_of(to_double(solve_bilinear_l0(inst.instance, inst.cfg).x));
  }
  const bool l0_depends = l0a != l0b;
  const bool l1_same = l1a == l1b && solver[0] == solver[1];
  return {l0_depends && l1_same,
          fmt::format("(l0 support depends on init, l1 support independent) = ({}, {}); l0 {} vs {}, l1 {} vs {}, "
                      "alternating solver {} vs {}",
                      l0_depends, l1_same, support_str(l0a), support_str(l0b), support_str(l1a), support_str(l1b),
                      support_str(solver[0]), support_str(solver[1]))};
}

// 4 -----------------------------------------------------------------------

Outcome criterion_flops_exact() {
  struct Graph {
    const char* name;
    NetworkGraph (*make)();
  };
  std::size_t checked = 0, mismatches = 0;
  for (const Graph& gr : {Graph{"plain chain", testing::plain_chain}, Graph{"skip block", testing::skip_block},
                          Graph{"depthwise block", testing::depthwise_block}}) {
    const auto base = attach_gates(testing::with_random_weights(gr.make(), 11));
    const auto model = derive_coefficients(base);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto g = base;
      testing::assign_gate_pattern(g, 1000 + seed);
      const auto pruned = absorb_and_remove(g).graph;
      ++checked;
      if (flops_of_gates(model, g.gates) != testing::direct_mac_count(pruned)) {
        ++mismatches;
        std::cerr << gr.name << " pattern " << seed << ": model " << flops_of_gates(model, g.gates) << " vs direct "
                  << testing::direct_mac_count(pruned) << '\n';
      }
    }
  }
  return {mismatches == 0 && checked == 300,
          fmt::format("{} patterns over 3 graphs, {} integer mismatches", checked, mismatches)};
}

// 5, 6, 7 -----------------------------------------------------------------

struct PolarizationRun {
  harness::TrainResult result;
  harness::TrainConfig cfg;
  double seconds = 0;
};

PolarizationRun train_toy(const fs::path& work, double lambda) {
  PolarizationRun run;
  run.cfg = harness::load_config(kSource / "configs" / "toy_cnn.json");
  run.cfg.lambda = lambda;
  run.cfg.out_dir = work / fmt::format("toy_cnn_lambda{}", lambda);
  const auto t0 = Clock::now();
  run.result = harness::cmd_train(run.cfg);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome criterion_polarization(const PolarizationRun& run) {
  std::size_t total = 0, zeros = 0, mid = 0, low_nonzero = 0;
  double min_nonzero = 1;
  for (const auto& gv : run.result.graph.gates) {
    const auto v = gv.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      ++total;
      if (gv.alpha[i] == 0) {
        ++zeros;
        continue;
      }
      min_nonzero = std::min(min_nonzero, v[i]);
      if (v[i] > 0.01 && v[i] < 0.5) ++mid;
      if (v[i] <= 0.5) ++low_nonzero;
    }
  }
  const double frac = static_cast<double>(zeros) / static_cast<double>(total);
  const std::size_t params = count_parameters(run.result.graph);
  const bool setup = run.cfg.epochs >= 60 && run.cfg.epsilon_decay == 0.9 && params <= 50000 &&
                     run.cfg.dataset.train == 2000 && run.cfg.dataset.val == 500 && run.cfg.dataset.classes == 10;
  return {setup && mid == 0 && low_nonzero == 0 && frac >= 0.10 && run.seconds < 600,
          fmt::format("{} gates: {} exact zero ({:.1f}%), {} in (0.01, 0.5), {} nonzero <= 0.5, smallest nonzero "
                      "{:.4f}; {} params, {} epochs, decay {}, lambda {}, flops ratio {:.4f}, val acc {:.3f}, {:.0f}s",
                      total, zeros, 100 * frac, mid, low_nonzero, min_nonzero, params, run.cfg.epochs,
                      run.cfg.epsilon_decay, run.cfg.lambda, run.result.flops_ratio, run.result.val.accuracy,
                      run.seconds)};
}

Outcome criterion_removal(const PolarizationRun& run, const fs::path& work) {
  const auto outcome = harness::cmd_prune(run.cfg.out_dir / "model.json", &run.cfg, work / "toy_cnn_pruned");
  const auto& r = outcome.result.report;
  const bool same_acc = r.super_accuracy == r.pruned_accuracy;
  return {r.max_abs_deviation < 1e-10 && same_acc && r.probe_samples == 500,
          fmt::format("max abs logit deviation {:.3e} over {} validation samples; accuracy {} -> {}; flops {} -> {}",
                      r.max_abs_deviation, r.probe_samples, harness::format_number(r.super_accuracy),
                      harness::format_number(r.pruned_accuracy), r.flops_before, r.flops_after)};
}

// The polarization run sits in the middle of the grid: lambda0 is half its
// lambda, so the grid spans the point where pruning starts.
Outcome criterion_lambda_pressure(const PolarizationRun& mid, const fs::path& work) {
  const double l0 = mid.cfg.lambda / 2;
  const auto low = train_toy(work, l0);
  const auto high = train_toy(work, 4 * l0);
  const double secs = low.seconds + mid.seconds + high.seconds;
  const std::vector<double> ratios{low.result.flops_ratio, mid.result.flops_ratio, high.result.flops_ratio};
  const bool monotone = ratios[1] <= ratios[0] && ratios[2] <= ratios[1];
  return {monotone && secs < 1800,
          fmt::format("flops ratios at lambda {}, {}, {}: {:.4f}, {:.4f}, {:.4f}; {:.0f}s for three runs", l0, 2 * l0,
                      4 * l0, ratios[0], ratios[1], ratios[2], secs)};
}

// 9 -----------------------------------------------------------------------

void write_reduced_config(const fs::path& path) {
  std::ofstream out(path);
  out << fmt::format(R"({{
  "model": "{}",
  "dataset": {{"kind": "synthetic", "classes": 10, "train": 300, "val": 100, "seed": 5}},
  "epochs": 3,
  "batch_size": 50,
  "lr": 0.05,
  "lambda": 4.0,
  "epsilon_decay": 0.9,
  "seed": 3,
  "out_dir": "unused",
  "finetune": {{"epochs": 1, "lr": 0.01}}
}}
)",
                     (kSource / "models" / "toy_cnn.json").generic_string());
}

int run_cli(const fs::path& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>&1", cli.string(), args, log.string());
  return std::system(cmd.c_str());
}

// Every command once into `dir`, through the CLI when available.
void run_all_commands(const fs::path& dir, const fs::path& config, const fs::path& cli) {
  fs::create_directories(dir);
  const auto inst = kSource / "configs" / "toy_bilinear_init2.txt";
  if (!cli.empty()) {
    const auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    const std::vector<std::string> commands{
        fmt::format("train --config {} --out {}", q(config), q(dir / "train")),
        fmt::format("prune --model {} --config {} --out {}", q(dir / "train" / "model.json"), q(config),
                    q(dir / "prune")),
        fmt::format("finetune --model {} --config {} --out {}", q(dir / "prune" / "pruned_model.json"), q(config),
                    q(dir / "finetune")),
        fmt::format("sweep --config {} --lambdas 2,8 --epochs 2 --jobs 2 --out {}", q(config), q(dir / "sweep")),
        fmt::format("solve-prox --instance {} --out {}", q(inst), q(dir / "prox")),
        fmt::format("report --model {} --out {}", q(dir / "train" / "model.json"), q(dir / "report")),
    };
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (run_cli(cli, commands[i], dir / fmt::format("cli_{}.log", i)) != 0) {
        throw Error(ErrorCode::Io, "command failed: " + commands[i]);
      }
    }
    return;
  }
  auto cfg = harness::load_config(config);
  cfg.out_dir = dir / "train";
  harness::cmd_train(cfg);
  harness::cmd_prune(dir / "train" / "model.json", &cfg, dir / "prune");
  harness::cmd_finetune(dir / "prune" / "pruned_model.json", cfg, dir / "finetune");
  auto sweep = cfg;
  sweep.epochs = 2;
  sweep.out_dir = dir / "sweep";
  harness::cmd_sweep(sweep, {2, 8}, {}, 2);
  harness::cmd_solve_prox(inst, dir / "prox");
  std::ostringstream sink;
  harness::cmd_report(dir / "train" / "model.json", dir / "report", sink);
}

Outcome criterion_determinism(const fs::path& work, const fs::path& cli) {
  const auto root = work / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  write_reduced_config(root / "reduced.json");
  run_all_commands(root / "first", root / "reduced.json", cli);
  run_all_commands(root / "second", root / "reduced.json", cli);
  std::size_t files = 0, differing = 0;
  std::string first_diff;
  for (const auto& entry : fs::recursive_directory_iterator(root / "first")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
    ++files;
    const auto rel = fs::relative(entry.path(), root / "first");
    if (!fs::exists(root / "second" / rel) || slurp(entry.path()) != slurp(root / "second" / rel)) {
      ++differing;
      if (first_diff.empty()) first_diff = rel.generic_string();
    }
  }
  return {files >= 10 && differing == 0,
          fmt::format("{} CSV files from train, prune, finetune, sweep, solve-prox and report ({}), {} differ{}", files,
                      cli.empty() ? "library calls" : "CLI", differing,
                      first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  fs::path cli;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (arg == "--cli" && i + 1 < argc) {
      cli = argv[++i];
    } else {
      std::cerr << "usage: gdp_acceptance [--work DIR] [--cli PATH]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  std::map<int, Outcome> outcomes;
  const auto run = [&](int id, const std::function<Outcome()>& f) {
    try {
      outcomes[id] = f();
    } catch (const std::exception& e) {
      outcomes[id] = {false, std::string("threw: ") + e.what()};
    }
    std::cout << fmt::format("criterion {} {}: {}", id, outcomes[id].pass ? "PASS" : "FAIL", outcomes[id].detail)
              << std::endl;
  };

  run(1, criterion_gradients);
  run(2, criterion_soft_threshold);
  run(3, criterion_toy_solver);
  run(4, criterion_flops_exact);

  std::optional<PolarizationRun> base;
  try {
    base = train_toy(work, harness::load_config(kSource / "configs" / "toy_cnn.json").lambda);
  } catch (const std::exception& e) {
    std::cerr << "polarization run failed: " << e.what() << '\n';
  }
  const auto need_base = [&]() -> const PolarizationRun& {
    if (!base) throw Error(ErrorCode::Io, "the polarization training run did not complete");
    return *base;
  };
  run(5, [&] { return criterion_polarization(need_base()); });
  run(6, [&] { return criterion_removal(need_base(), work); });
  run(7, [&] { return criterion_lambda_pressure(need_base(), work); });
  run(8, criterion_l0_sensitivity);
  run(9, [&] { return criterion_determinism(work, cli); });

  int failed = 0;
  for (const auto& [id, o] : outcomes) failed += !o.pass;
  std::cout << fmt::format("{} of {} criteria passed", outcomes.size() - static_cast<std::size_t>(failed),
                           outcomes.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
