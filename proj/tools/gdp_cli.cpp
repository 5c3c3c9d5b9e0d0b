#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gdp/error.hpp"
#include "gdp/harness/commands.hpp"
#include "gdp/harness/config.hpp"

namespace {

using namespace gdp;
using namespace gdp::harness;

struct Overrides {
  std::optional<double> lambda, epsilon_init, epsilon_decay, lr, alpha_lr_scale;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode, prox_cadence, out;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--lambda", o.lambda, "resource weight");
  cmd->add_option("--epsilon-init", o.epsilon_init, "initial gate epsilon");
  cmd->add_option("--epsilon-decay", o.epsilon_decay, "per-epoch epsilon factor");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "base learning rate");
  cmd->add_option("--alpha-lr-scale", o.alpha_lr_scale, "gate learning-rate factor");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--mode", o.mode, "gate parameterization")->check(CLI::IsMember({"param", "weightnorm", "reg"}));
  cmd->add_option("--prox-cadence", o.prox_cadence, "prox step cadence")->check(CLI::IsMember({"batch", "epoch"}));
}

TrainConfig resolve(const std::string& path, const Overrides& o, const std::string& out) {
  TrainConfig c = load_config(path);
  if (o.lambda) c.lambda = *o.lambda;
  if (o.epsilon_init) c.epsilon_init = *o.epsilon_init;
  if (o.epsilon_decay) c.epsilon_decay = *o.epsilon_decay;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.lr) c.lr = *o.lr;
  if (o.alpha_lr_scale) c.alpha_lr_scale = *o.alpha_lr_scale;
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.mode = parse_gate_mode(*o.mode);
  if (o.prox_cadence) c.prox_cadence = parse_prox_cadence(*o.prox_cadence);
  if (!out.empty()) c.out_dir = out;
  c.validate();
  return c;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size() && !text.empty()) {
    const auto comma = text.find(',', start);
    const auto item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Config, "bad number '" + item + "' in list '" + text + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable-polarization channel pruning"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, out, model, instance, lambdas, decays;
  int jobs = 1;

  auto* train = app.add_subcommand("train", "train a gated network");
  train->add_option("--config", config, "config JSON")->required();
  train->add_option("--out", out, "output directory (overrides config)");
  add_overrides(train, o);

  auto* prune = app.add_subcommand("prune", "remove zero-gated channels from a checkpoint");
  prune->add_option("--model", model, "gated checkpoint JSON")->required();
  prune->add_option("--config", config, "config whose validation split serves as probes");
  prune->add_option("--out", out, "output directory")->required();

  auto* finetune = app.add_subcommand("finetune", "plain SGD on a pruned model");
  finetune->add_option("--model", model, "pruned model JSON")->required();
  finetune->add_option("--config", config, "config JSON (finetune section)")->required();
  finetune->add_option("--out", out, "output directory");
  add_overrides(finetune, o);

  auto* sweep = app.add_subcommand("sweep", "train/prune/finetune over a lambda or epsilon-decay grid");
  sweep->add_option("--config", config, "config JSON template")->required();
  sweep->add_option("--lambdas", lambdas, "comma-separated lambda values");
  sweep->add_option("--epsilon-decays", decays, "comma-separated epsilon decay values");
  sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out, "output directory");
  add_overrides(sweep, o);

  auto* solve = app.add_subcommand("solve-prox", "solve a bilinear l0 prox instance");
  solve->add_option("--instance", instance, "instance file")->required();
  solve->add_option("--out", out, "output directory")->required();

  auto* report = app.add_subcommand("report", "summarize a checkpoint and dump resource coefficients");
  report->add_option("--model", model, "model JSON")->required();
  report->add_option("--out", out, "directory for resource_a.csv / resource_b.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      const auto r = cmd_train(resolve(config, o, out));
      std::cout << "final flops ratio " << format_number(r.flops_ratio) << ", val accuracy "
                << format_number(r.val.accuracy) << '\n';
    } else if (*prune) {
      std::optional<TrainConfig> cfg;
      if (!config.empty()) cfg = load_config(config);
      const auto r = cmd_prune(model, cfg ? &*cfg : nullptr, out);
      write_prune_report_text(std::cout, r.result.report);
    } else if (*finetune) {
      const auto cfg = resolve(config, o, out);
      const auto r = cmd_finetune(model, cfg, cfg.out_dir);
      std::cout << "train accuracy " << format_number(r.train_before.accuracy) << " -> "
                << format_number(r.train_after.accuracy) << ", val accuracy " << format_number(r.val_after.accuracy)
                << '\n';
    } else if (*sweep) {
      const auto cfg = resolve(config, o, out);
      const auto points = cmd_sweep(cfg, parse_list(lambdas), parse_list(decays), jobs);
      std::cout << "wrote " << (cfg.out_dir / "summary.csv").string() << " (" << points.size() << " points)\n";
    } else if (*solve) {
      const auto sol = cmd_solve_prox(instance, out);
      std::cout << "objective " << format_number(sol.objective.back()) << ", fixed point at sweep "
                << sol.fixed_point_sweep << '\n';
    } else if (*report) {
      cmd_report(model, out, std::cout);
    }
  } catch (const gdp::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
