#include "gdp/harness/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gdp/error.hpp"

namespace gdp::harness {
namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::Config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).string();
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::Step ? "step" : "cosine"; }
std::string to_string(ProxCadence c) { return c == ProxCadence::Batch ? "batch" : "epoch"; }
std::string to_string(StartMode s) { return s == StartMode::Scratch ? "scratch" : "pretrained"; }

ProxCadence parse_prox_cadence(const std::string& text) {
  if (text == "batch") return ProxCadence::Batch;
  if (text == "epoch") return ProxCadence::Epoch;
  throw Error(ErrorCode::Config, "prox cadence must be 'batch' or 'epoch', got '" + text + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorCode::Config, "epochs must be at least 1");
  if (batch_size < 1) throw Error(ErrorCode::Config, "batch_size must be at least 1");
  if (!(lr >= 0)) throw Error(ErrorCode::Config, "lr must be nonnegative");
  if (!(lambda >= 0)) throw Error(ErrorCode::Config, "lambda must be nonnegative");
  if (!(eta1 >= 0)) throw Error(ErrorCode::Config, "eta1 must be nonnegative (0 selects the automatic value)");
  if (prox_iters < 1) throw Error(ErrorCode::Config, "prox_iters must be at least 1");
  if (!(epsilon_init > 0)) throw Error(ErrorCode::Config, "epsilon_init must be positive");
  if (!(epsilon_decay > 0 && epsilon_decay <= 1)) throw Error(ErrorCode::Config, "epsilon_decay must be in (0, 1]");
  if (!(momentum >= 0 && momentum < 1)) throw Error(ErrorCode::Config, "momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw Error(ErrorCode::Config, "weight_decay must be nonnegative");
  if (!(alpha_lr_scale >= 0)) throw Error(ErrorCode::Config, "alpha_lr_scale must be nonnegative");
  if (lr_step_epochs < 1) throw Error(ErrorCode::Config, "lr_step_epochs must be at least 1");
  if (finetune.epochs < 0) throw Error(ErrorCode::Config, "finetune.epochs must be nonnegative");
  if (model_path.empty()) throw Error(ErrorCode::Config, "config needs a 'model' path");
  const auto& d = dataset;
  if (d.kind != "synthetic" && d.kind != "idx" && d.kind != "csv") {
    throw Error(ErrorCode::Config, "dataset.kind must be synthetic, idx or csv");
  }
  if (d.classes < 2) throw Error(ErrorCode::Config, "dataset.classes must be at least 2");
  if (d.kind == "synthetic" && (d.train < 1 || d.val < 1 || d.channels < 1 || d.height < 4 || d.width < 4)) {
    throw Error(ErrorCode::Config, "synthetic dataset sizes are out of range");
  }
}

TrainConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::Config, "config must be a JSON object");
  reject_unknown(j,
                 {"model", "dataset", "epochs", "batch_size", "lr", "lr_schedule", "lr_step_epochs", "lr_step_gamma",
                  "momentum", "weight_decay", "alpha_lr_scale", "lambda", "eta1", "prox_iters", "prox_scale_linear",
                  "prox_cadence", "epsilon_init", "epsilon_decay", "alpha_init", "mode", "start", "seed", "out_dir",
                  "recompute_bn", "finetune"},
                 "config");
  TrainConfig c;
  std::string s;
  read(j, "model", s);
  c.model_path = resolve(s, base_dir);
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.lr);
  if (j.contains("lr_schedule")) {
    read(j, "lr_schedule", s);
    if (s == "step") {
      c.lr_schedule = LrSchedule::Step;
    } else if (s == "cosine") {
      c.lr_schedule = LrSchedule::Cosine;
    } else {
      throw Error(ErrorCode::Config, "lr_schedule must be 'step' or 'cosine'");
    }
  }
  read(j, "lr_step_epochs", c.lr_step_epochs);
  read(j, "lr_step_gamma", c.lr_step_gamma);
  read(j, "momentum", c.momentum);
  read(j, "weight_decay", c.weight_decay);
  read(j, "alpha_lr_scale", c.alpha_lr_scale);
  read(j, "lambda", c.lambda);
  read(j, "eta1", c.eta1);
  read(j, "prox_iters", c.prox_iters);
  read(j, "prox_scale_linear", c.prox_scale_linear);
  if (j.contains("prox_cadence")) {
    read(j, "prox_cadence", s);
    c.prox_cadence = parse_prox_cadence(s);
  }
  read(j, "epsilon_init", c.epsilon_init);
  read(j, "epsilon_decay", c.epsilon_decay);
  read(j, "alpha_init", c.alpha_init);
  if (j.contains("mode")) {
    read(j, "mode", s);
    c.mode = parse_gate_mode(s);
  }
  if (j.contains("start")) {
    read(j, "start", s);
    if (s == "scratch") {
      c.start = StartMode::Scratch;
    } else if (s == "pretrained") {
      c.start = StartMode::Pretrained;
    } else {
      throw Error(ErrorCode::Config, "start must be 'scratch' or 'pretrained'");
    }
  }
  read(j, "seed", c.seed);
  if (j.contains("out_dir")) {
    read(j, "out_dir", s);
    c.out_dir = resolve(s, base_dir);
  }
  read(j, "recompute_bn", c.recompute_bn);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d,
                   {"kind", "classes", "train", "val", "channels", "height", "width", "noise", "jitter", "seed",
                    "train_images", "train_labels", "val_images", "val_labels", "train_csv", "val_csv"},
                   "dataset");
    auto& ds = c.dataset;
    read(d, "kind", ds.kind);
    read(d, "classes", ds.classes);
    read(d, "train", ds.train);
    read(d, "val", ds.val);
    read(d, "channels", ds.channels);
    read(d, "height", ds.height);
    read(d, "width", ds.width);
    read(d, "noise", ds.noise);
    read(d, "jitter", ds.jitter);
    read(d, "seed", ds.seed);
    for (auto [key, field] : {std::pair{"train_images", &ds.train_images}, std::pair{"train_labels", &ds.train_labels},
                              std::pair{"val_images", &ds.val_images}, std::pair{"val_labels", &ds.val_labels},
                              std::pair{"train_csv", &ds.train_csv}, std::pair{"val_csv", &ds.val_csv}}) {
      read(d, key, *field);
      *field = resolve(*field, base_dir);
    }
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    reject_unknown(f, {"epochs", "lr", "momentum", "weight_decay"}, "finetune");
    read(f, "epochs", c.finetune.epochs);
    read(f, "lr", c.finetune.lr);
    read(f, "momentum", c.finetune.momentum);
    read(f, "weight_decay", c.finetune.weight_decay);
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

}  // namespace gdp::harness
