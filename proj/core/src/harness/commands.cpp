#include "gdp/harness/commands.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "gdp/error.hpp"
#include "gdp/harness/model_io.hpp"
#include "gdp/optimizer.hpp"
#include "gdp/resource_model.hpp"

namespace gdp::harness {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  return out;
}

double lr_at(const TrainConfig& cfg, double base, int epoch, int epochs) {
  if (cfg.lr_schedule == LrSchedule::Step) return base * std::pow(cfg.lr_step_gamma, epoch / cfg.lr_step_epochs);
  return base * 0.5 * (1 + std::cos(std::numbers::pi * epoch / std::max(1, epochs)));
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  return seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch);
}

void check_data_matches(const NetworkGraph& graph, const Splits& data) {
  if (data.train.sample_shape != graph.input_shape) {
    throw Error(ErrorCode::ShapeMismatch, "dataset samples are " + shape_str(data.train.sample_shape) +
                                              " but the model takes " + shape_str(graph.input_shape));
  }
  const auto classes = infer_shapes(graph).back().channels;
  if (static_cast<std::size_t>(std::max(data.train.classes, data.val.classes)) > classes) {
    throw Error(ErrorCode::ShapeMismatch, "dataset has more classes than the model has outputs");
  }
}

// Cumulative batch statistics over the training set, replacing the running estimates.
void recompute_bn_statistics(NetworkGraph& graph, const Dataset& train, std::size_t batch_size) {
  std::vector<Scalar> momentum;
  for (auto& L : graph.layers) {
    momentum.push_back(L.bn_momentum);
    if (L.kind != LayerKind::BatchNorm) continue;
    for (auto& v : L.running_mean.data()) v = 0;
    for (auto& v : L.running_var.data()) v = 1;
  }
  const auto batches = ordered_batches(train, batch_size);
  for (std::size_t k = 0; k < batches.size(); ++k) {
    if (batches[k].size() < 2) continue;
    for (auto& L : graph.layers) L.bn_momentum = Scalar{1} / static_cast<Scalar>(k + 1);
    Tape tape;
    ForwardOptions fo;
    fo.training = true;
    fo.track_gradients = false;
    forward_gated(graph, tape, batches[k].images, fo);
  }
  for (std::size_t i = 0; i < graph.layers.size(); ++i) graph.layers[i].bn_momentum = momentum[i];
}

Splits load_checked(const TrainConfig& cfg, const NetworkGraph& graph) {
  auto data = load_dataset(cfg.dataset);
  check_data_matches(graph, data);
  return data;
}

NetworkGraph strip_gates(NetworkGraph g) {
  g.groups.clear();
  g.gates.clear();
  return g;
}

}  // namespace

std::string format_number(double v) { return fmt::format("{}", v); }

Evaluation evaluate(const NetworkGraph& graph, const Dataset& data, std::size_t batch_size) {
  Evaluation ev;
  if (data.size() == 0) return ev;
  double loss = 0;
  std::size_t correct = 0;
  for (const auto& batch : ordered_batches(data, batch_size)) {
    const Tensor logits = predict(graph, batch.images);
    const std::size_t k = logits.shape().back();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      double m = logits[b * k];
      for (std::size_t j = 1; j < k; ++j) m = std::max(m, static_cast<double>(logits[b * k + j]));
      double z = 0;
      for (std::size_t j = 0; j < k; ++j) z += std::exp(logits[b * k + j] - m);
      loss += m + std::log(z) - logits[b * k + static_cast<std::size_t>(batch.labels[b])];
    }
    correct += count_correct(logits, batch.labels);
  }
  ev.loss = loss / static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

void write_gate_histogram(std::ostream& out, const NetworkGraph& graph) {
  constexpr int kBins = 20;
  std::vector<std::size_t> counts(kBins, 0);
  std::size_t zeros = 0;
  for (const auto& gv : graph.gates) {
    const auto values = gv.values();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      if (gv.alpha[i] == 0) {
        ++zeros;
        continue;
      }
      counts[static_cast<std::size_t>(std::clamp(static_cast<int>(values[i] * kBins), 0, kBins - 1))]++;
    }
  }
  out << "bin_lo,bin_hi,count\n";
  for (int k = 0; k < kBins; ++k)
    out << format_number(static_cast<double>(k) / kBins) << ',' << format_number(static_cast<double>(k + 1) / kBins)
        << ',' << counts[k] << '\n';
  out << "exact_zero,exact_zero," << zeros << '\n';
}

TrainResult cmd_train(const TrainConfig& cfg) {
  cfg.validate();
  auto loaded = load_model(cfg.model_path);
  NetworkGraph graph = strip_gates(std::move(loaded.graph));
  if (cfg.start == StartMode::Pretrained) {
    if (!loaded.has_weights) throw Error(ErrorCode::Config, "start 'pretrained' needs a model with a weights file");
  } else {
    initialize_weights(graph, cfg.seed);
  }
  const Splits data = load_checked(cfg, graph);
  graph = attach_gates(std::move(graph), GateInit{cfg.mode, cfg.alpha_init, cfg.epsilon_init});

  const ResourceModel model = derive_coefficients(graph);
  TrainResult result;
  result.flops_full = flops_of_counts(
      model, std::vector<std::int64_t>(model.group_channels.begin(), model.group_channels.end()));
  const double full = static_cast<double>(result.flops_full);

  SgdConfig sgd;
  sgd.lr = cfg.lr;
  sgd.alpha_lr_scale = cfg.alpha_lr_scale;
  sgd.momentum = cfg.momentum;
  sgd.weight_decay = cfg.weight_decay;
  SgdState state;
  const EpsilonSchedule schedule{cfg.epsilon_init, cfg.epsilon_decay};
  LossStepOptions options;
  options.resource = &model;
  options.penalty_weight = cfg.lambda / full;

  std::filesystem::create_directories(cfg.out_dir);
  auto metrics = open_out(cfg.out_dir / "metrics.csv");
  metrics << "epoch,train_loss,val_loss,flops_ratio,zero_gates,epsilon\n";
  {
    auto h = open_out(cfg.out_dir / "gates_epoch0.csv");
    write_gate_histogram(h, graph);
  }
  const int hist_every = std::max(1, cfg.epochs / 20);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    sgd.lr = lr_at(cfg, cfg.lr, epoch - 1, cfg.epochs);
    ProxConfig prox;
    prox.lambda = cfg.lambda / full;
    prox.inner_iters = cfg.prox_iters;
    prox.scale_linear_term = cfg.prox_scale_linear;
    const double gate_step = cfg.mode == GateMode::IntroducedParam ? sgd.lr * sgd.alpha_lr_scale : sgd.lr;
    prox.eta1 = cfg.eta1 > 0 ? cfg.eta1 : gate_step;

    const auto batches = shuffled_batches(data.train, bs, epoch_seed(cfg.seed, epoch));
    double loss_sum = 0;
    for (const auto& batch : batches) {
      const auto step = loss_step(graph, batch, sgd, state, options);
      loss_sum += step.loss * static_cast<double>(batch.size());
      if (cfg.prox_cadence == ProxCadence::Batch && prox.eta1 > 0) {
        prox_step(graph, model, prox);
        clear_pruned_momentum(graph, state);
      }
    }
    if (cfg.prox_cadence == ProxCadence::Epoch && prox.eta1 > 0) {
      if (cfg.eta1 == 0) prox.eta1 *= static_cast<double>(batches.size());
      prox_step(graph, model, prox);
      clear_pruned_momentum(graph, state);
    }
    epsilon_step(schedule, graph.gates, epoch);
    if (cfg.recompute_bn) recompute_bn_statistics(graph, data.train, bs);

    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(data.train.size());
    row.val_loss = evaluate(graph, data.val, bs).loss;
    const auto flops = flops_of_gates(model, graph.gates);
    row.flops_ratio = static_cast<double>(flops) / full;
    for (const auto& gv : graph.gates) row.zero_gates += zero_gate_count(gv);
    row.epsilon = graph.gates.empty() ? schedule.at(epoch) : graph.gates.front().epsilon;
    metrics << row.epoch << ',' << format_number(row.train_loss) << ',' << format_number(row.val_loss) << ','
            << format_number(row.flops_ratio) << ',' << row.zero_gates << ',' << format_number(row.epsilon) << '\n';
    metrics.flush();
    result.metrics.push_back(row);
    if (epoch % hist_every == 0 || epoch == cfg.epochs) {
      auto h = open_out(cfg.out_dir / fmt::format("gates_epoch{}.csv", epoch));
      write_gate_histogram(h, graph);
    }
  }
  save_model(graph, cfg.out_dir / "model.json");
  result.flops_final = flops_of_gates(model, graph.gates);
  result.flops_ratio = static_cast<double>(result.flops_final) / full;
  result.val = evaluate(graph, data.val, bs);
  result.graph = std::move(graph);
  return result;
}

PruneOutcome prune_graph(const NetworkGraph& gated, const Splits* data, const std::filesystem::path& out_dir) {
  PruneOutcome o;
  o.super_graph = gated;
  o.result = absorb_and_remove(gated);
  auto& report = o.result.report;
  if (data) {
    const auto probes = ordered_batches(data->val, 100);
    const auto c = consistency_check(gated, o.result.graph, probes);
    report.max_abs_deviation = c.max_abs_deviation;
    report.super_accuracy = c.super_accuracy;
    report.pruned_accuracy = c.pruned_accuracy;
    report.probe_samples = c.samples;
  }
  std::filesystem::create_directories(out_dir);
  save_model(o.result.graph, out_dir / "pruned_model.json");
  auto txt = open_out(out_dir / "prune_report.txt");
  write_prune_report_text(txt, report);
  auto csv = open_out(out_dir / "prune_report.csv");
  write_prune_report_csv(csv, report);
  return o;
}

PruneOutcome cmd_prune(const std::filesystem::path& model_path, const TrainConfig* probe_cfg,
                       const std::filesystem::path& out_dir) {
  auto loaded = load_model(model_path);
  if (!loaded.has_weights) throw Error(ErrorCode::Config, "prune needs a model with weights");
  if (!probe_cfg) return prune_graph(loaded.graph, nullptr, out_dir);
  const Splits data = load_checked(*probe_cfg, loaded.graph);
  return prune_graph(loaded.graph, &data, out_dir);
}

FinetuneResult finetune_graph(const NetworkGraph& pruned, const TrainConfig& cfg, const Splits& data,
                              const std::filesystem::path& out_dir) {
  if (pruned.gated()) throw Error(ErrorCode::Config, "finetune expects a pruned (ungated) model");
  FinetuneResult r;
  r.graph = pruned;
  allocate_parameters(r.graph);
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  r.train_before = evaluate(r.graph, data.train, bs);
  SgdConfig sgd;
  sgd.momentum = cfg.finetune.momentum;
  sgd.weight_decay = cfg.finetune.weight_decay;
  SgdState state;
  std::filesystem::create_directories(out_dir);
  auto metrics = open_out(out_dir / "finetune_metrics.csv");
  metrics << "epoch,train_loss,val_loss,train_acc,val_acc\n";
  const int epochs = cfg.finetune.epochs;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    sgd.lr = lr_at(cfg, cfg.finetune.lr, epoch - 1, epochs);
    double loss_sum = 0;
    for (const auto& batch : shuffled_batches(data.train, bs, epoch_seed(cfg.seed + 1, epoch))) {
      loss_sum += loss_step(r.graph, batch, sgd, state).loss * static_cast<double>(batch.size());
    }
    const auto tr = evaluate(r.graph, data.train, bs);
    const auto va = evaluate(r.graph, data.val, bs);
    metrics << epoch << ',' << format_number(loss_sum / static_cast<double>(data.train.size())) << ','
            << format_number(va.loss) << ',' << format_number(tr.accuracy) << ',' << format_number(va.accuracy)
            << '\n';
  }
  r.train_after = evaluate(r.graph, data.train, bs);
  r.val_after = evaluate(r.graph, data.val, bs);
  save_model(r.graph, out_dir / "finetuned_model.json");
  return r;
}

FinetuneResult cmd_finetune(const std::filesystem::path& model_path, const TrainConfig& cfg,
                            const std::filesystem::path& out_dir) {
  cfg.validate();
  auto loaded = load_model(model_path);
  if (!loaded.has_weights) throw Error(ErrorCode::Config, "finetune needs a model with weights");
  const Splits data = load_checked(cfg, loaded.graph);
  return finetune_graph(loaded.graph, cfg, data, out_dir);
}

std::vector<SweepPoint> cmd_sweep(const TrainConfig& cfg, const std::vector<double>& lambdas,
                                  const std::vector<double>& epsilon_decays, int jobs) {
  cfg.validate();
  const auto ls = lambdas.empty() ? std::vector<double>{cfg.lambda} : lambdas;
  const auto ds = epsilon_decays.empty() ? std::vector<double>{cfg.epsilon_decay} : epsilon_decays;
  std::vector<SweepPoint> points;
  for (double d : ds)
    for (double l : ls) points.push_back({l, d});
  if (points.size() < 2) throw Error(ErrorCode::Config, "a sweep needs at least two points");
  for (const auto& p : points) {
    TrainConfig c = cfg;
    c.lambda = p.lambda;
    c.epsilon_decay = p.epsilon_decay;
    c.validate();
  }

  std::vector<std::string> errors(points.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < points.size(); k = next++) {
      try {
        TrainConfig c = cfg;
        c.lambda = points[k].lambda;
        c.epsilon_decay = points[k].epsilon_decay;
        c.out_dir = cfg.out_dir / fmt::format("point_{}", k);
        auto trained = cmd_train(c);
        const Splits data = load_checked(c, trained.graph);
        const auto pruned = prune_graph(trained.graph, &data, c.out_dir);
        const auto tuned = finetune_graph(pruned.result.graph, c, data, c.out_dir);
        points[k].flops_ratio = trained.flops_ratio;
        points[k].supernet_acc = pruned.result.report.super_accuracy;
        points[k].pruned_acc = pruned.result.report.pruned_accuracy;
        points[k].finetuned_acc = tuned.val_after.accuracy;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(points.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (!errors[k].empty()) throw Error(ErrorCode::Config, fmt::format("sweep point {} failed: {}", k, errors[k]));
  }
  auto out = open_out(cfg.out_dir / "summary.csv");
  out << "lambda,epsilon_decay,flops_ratio,supernet_acc,pruned_acc,finetuned_acc\n";
  for (const auto& p : points) {
    out << format_number(p.lambda) << ',' << format_number(p.epsilon_decay) << ',' << format_number(p.flops_ratio)
        << ',' << format_number(p.supernet_acc) << ',' << format_number(p.pruned_acc) << ','
        << format_number(p.finetuned_acc) << '\n';
  }
  return points;
}

ProxInstanceFile parse_prox_instance(const std::string& text) {
  ProxInstanceFile f;
  auto& in = f.instance;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  std::size_t groups = 0;
  bool sized = false;
  const auto fail = [&](const std::string& msg) {
    throw Error(ErrorCode::Config, fmt::format("instance line {}: {}", lineno, msg));
  };
  const auto group_index = [&](std::istringstream& ss) {
    long long g = -1;
    if (!(ss >> g) || g < 0 || static_cast<std::size_t>(g) >= groups) fail("bad group index");
    return static_cast<std::size_t>(g);
  };
  while (std::getline(lines, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key)) continue;
    if (key == "groups") {
      if (sized || !(ss >> groups) || groups == 0) fail("'groups' must appear once with a positive count");
      sized = true;
      in.u.assign(groups, {});
      in.init.assign(groups, {});
      in.a.assign(groups, std::vector<Scalar>(groups, 0));
      in.b.assign(groups, 0);
      continue;
    }
    if (!sized && key != "eta1" && key != "lambda" && key != "iters" && key != "unscaled_linear") {
      fail("'groups' must come first");
    }
    double v = 0;
    if (key == "u" || key == "init") {
      const auto g = group_index(ss);
      auto& dst = key == "u" ? in.u[g] : in.init[g];
      dst.clear();
      while (ss >> v) dst.push_back(static_cast<Scalar>(v));
      if (dst.empty()) fail("empty vector");
    } else if (key == "a") {
      const auto l = group_index(ss);
      const auto k = group_index(ss);
      if (!(ss >> v)) fail("missing coefficient");
      if (l == k) fail("a_ll must be zero");
      in.a[l][k] = in.a[k][l] = static_cast<Scalar>(v);
    } else if (key == "b") {
      const auto l = group_index(ss);
      if (!(ss >> v)) fail("missing coefficient");
      in.b[l] = static_cast<Scalar>(v);
    } else if (key == "eta1") {
      if (!(ss >> v)) fail("missing value");
      f.cfg.eta1 = static_cast<Scalar>(v);
    } else if (key == "lambda") {
      if (!(ss >> v)) fail("missing value");
      f.cfg.lambda = static_cast<Scalar>(v);
    } else if (key == "iters") {
      if (!(ss >> f.cfg.inner_iters)) fail("missing value");
    } else if (key == "unscaled_linear") {
      f.cfg.scale_linear_term = false;
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!sized) throw Error(ErrorCode::Config, "instance has no 'groups' line");
  for (std::size_t g = 0; g < groups; ++g) {
    if (in.u[g].empty()) throw Error(ErrorCode::Config, fmt::format("instance has no u for group {}", g));
    if (in.init[g].empty()) in.init[g] = in.u[g];
  }
  f.cfg.validate();
  in.validate();
  return f;
}

BilinearSolution cmd_solve_prox(const std::filesystem::path& instance_path, const std::filesystem::path& out_dir) {
  std::ifstream in(instance_path);
  if (!in) throw Error(ErrorCode::Io, "cannot read instance '" + instance_path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const auto file = parse_prox_instance(ss.str());
  auto sol = solve_bilinear_l0(file.instance, file.cfg);
  std::filesystem::create_directories(out_dir);
  auto s = open_out(out_dir / "solution.csv");
  s << "group,index,value\n";
  for (std::size_t g = 0; g < sol.x.size(); ++g)
    for (std::size_t i = 0; i < sol.x[g].size(); ++i) s << g << ',' << i << ',' << format_number(sol.x[g][i]) << '\n';
  auto o = open_out(out_dir / "objective.csv");
  o << "sweep,objective\n";
  for (std::size_t t = 0; t < sol.objective.size(); ++t) o << t << ',' << format_number(sol.objective[t]) << '\n';
  return sol;
}

void cmd_report(const std::filesystem::path& model_path, const std::filesystem::path& out_dir, std::ostream& out) {
  const auto loaded = load_model(model_path);
  const auto& g = loaded.graph;
  out << fmt::format("layers: {}\nparameters: {}\nMACs (all gates open): {}\n", g.layers.size(), count_parameters(g),
                     count_macs(g));
  if (!g.gated()) return;
  const auto model = derive_coefficients(g);
  const auto full = full_flops(model);
  const auto now = flops_of_gates(model, g.gates);
  out << fmt::format("gate mode: {}\ngroups: {}\nflops (MACs) at current gates: {} of {} (ratio {})\n",
                     to_string(g.mode()), g.groups.size(), now, full,
                     format_number(static_cast<double>(now) / static_cast<double>(full)));
  for (std::size_t k = 0; k < g.groups.size(); ++k) {
    std::string sites;
    for (auto s : g.groups[k].sites) sites += (sites.empty() ? "" : " ") + g.layers[s].name;
    out << fmt::format("  group {} [{}]: {} channels, {} exact zeros\n", k, sites, g.groups[k].channels,
                       zero_gate_count(g.gates[k]));
  }
  std::filesystem::create_directories(out_dir);
  auto a = open_out(out_dir / "resource_a.csv");
  auto b = open_out(out_dir / "resource_b.csv");
  write_coefficients_csv(model, a, b);
}

}  // namespace gdp::harness
