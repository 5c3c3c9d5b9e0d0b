#include <benchmark/benchmark.h>

#include <random>

#include "gdp/ops.hpp"
#include "gdp/optimizer.hpp"
#include "gdp/prox.hpp"
#include "gdp/resource_model.hpp"

namespace {

using namespace gdp;

Tensor noise(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 0.5);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = n(rng);
  return t;
}

NetworkGraph toy_cnn() {
  GraphBuilder b({1, 12, 12});
  b.conv("conv1", 12, 3, 1, 1);
  b.relu("relu1");
  b.avgpool("pool1", 2);
  b.conv("conv2", 24, 3, 1, 1);
  b.relu("relu2");
  b.avgpool("pool2", 2);
  b.conv("conv3", 24, 3);
  b.relu("relu3");
  b.global_avgpool("gap");
  b.dense("head", 10);
  auto g = b.build();
  allocate_parameters(g);
  initialize_weights(g, 1);
  return attach_gates(std::move(g));
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({16, c, 12, 12}, 1);
  const Tensor k = noise({c, c, 3, 3}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(conv2d(tape.constant(x), tape.constant(k), 1, 1).value().data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 16 * c * c * 9 * 144));
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = noise({16, c, 12, 12}, 3);
  Tensor k = noise({c, c, 3, 3}, 4);
  k.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    tape.backward(sum(conv2d(tape.constant(x), tape.parameter(k), 1, 1)));
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(16);

void BM_ProxStep(benchmark::State& state) {
  const auto groups = static_cast<std::size_t>(state.range(0));
  ResourceModel m;
  std::vector<GateVector> gates(groups);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t l = 0; l < groups; ++l) {
    m.group_channels.push_back(64);
    m.b.push_back(1000 + l);
    if (l + 1 < groups) m.a[{l, l + 1}] = 9 * 49;
    gates[l].alpha = Tensor(Shape{64});
    for (auto& a : gates[l].alpha.data()) a = u(rng);
  }
  const ProxConfig cfg{1e-3, 1e-6, 3, true};
  for (auto _ : state) {
    auto work = gates;
    prox_step(work, m, cfg);
    benchmark::DoNotOptimize(work.front().alpha.data().data());
  }
}
BENCHMARK(BM_ProxStep)->Arg(4)->Arg(32);

void BM_TrainingStep(benchmark::State& state) {
  auto g = toy_cnn();
  Batch batch;
  batch.images = noise({50, 1, 12, 12}, 6);
  for (int i = 0; i < 50; ++i) batch.labels.push_back(i % 10);
  SgdState sgd;
  const auto model = derive_coefficients(g);
  const ProxConfig prox{0.005, 1e-4, 1, true};
  for (auto _ : state) {
    loss_step(g, batch, SgdConfig{}, sgd);
    prox_step(g, model, prox);
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
