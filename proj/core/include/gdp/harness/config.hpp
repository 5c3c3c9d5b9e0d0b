#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "gdp/gate.hpp"
#include "gdp/tensor.hpp"

namespace gdp::harness {

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | idx | csv
  int classes = 10;
  int train = 2000;
  int val = 500;
  int channels = 1;
  int height = 12;
  int width = 12;
  double noise = 0.35;
  double jitter = 1.0;  // max blob displacement, pixels
  std::uint64_t seed = 7;
  // idx: images/labels file pairs; csv: one file per split (label first, then pixels).
  std::string train_images, train_labels, val_images, val_labels;
  std::string train_csv, val_csv;
};

enum class LrSchedule { Step, Cosine };
enum class ProxCadence { Batch, Epoch };
enum class StartMode { Scratch, Pretrained };

struct FinetuneConfig {
  int epochs = 0;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct TrainConfig {
  std::filesystem::path model_path;
  DatasetSpec dataset;
  int epochs = 60;
  int batch_size = 50;
  double lr = 0.05;
  LrSchedule lr_schedule = LrSchedule::Cosine;
  int lr_step_epochs = 30;
  double lr_step_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double alpha_lr_scale = 0.1;
  double lambda = 0;
  double eta1 = 0;  // 0: the gate argument's own step size
  int prox_iters = 1;
  bool prox_scale_linear = true;
  ProxCadence prox_cadence = ProxCadence::Batch;
  double epsilon_init = 0.1;
  double epsilon_decay = 0.96;
  double alpha_init = 1.0;
  GateMode mode = GateMode::IntroducedParam;
  StartMode start = StartMode::Scratch;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  bool recompute_bn = false;
  FinetuneConfig finetune;

  void validate() const;
};

// Relative paths inside the file resolve against the file's directory.
// Unknown keys are errors.
TrainConfig load_config(const std::filesystem::path& path);
TrainConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});

std::string to_string(LrSchedule s);
std::string to_string(ProxCadence c);
std::string to_string(StartMode s);
ProxCadence parse_prox_cadence(const std::string& text);

}  // namespace gdp::harness
