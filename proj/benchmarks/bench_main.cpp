#include "samct/config.hpp"
#include "samct/dataset.hpp"
#include "samct/ingest.hpp"
#include "samct/interaction.hpp"
#include "samct/metrics.hpp"
#include "samct/model.hpp"
#include "samct/prompt_synthesis.hpp"
#include "samct/train.hpp"

#include <benchmark/benchmark.h>

using namespace samct;

namespace {

Mask blob(int side, uint64_t seed) {
  Rng rng(seed);
  Mask m(side, side);
  const double cy = side * rng.uniform(0.3, 0.7), cx = side * rng.uniform(0.3, 0.7), r = side * rng.uniform(0.1, 0.3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) m(y, x) = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r;
  return m;
}

void BM_Windowing(benchmark::State& state) {
  std::vector<float> hu(static_cast<size_t>(state.range(0)));
  Rng rng(1);
  for (auto& v : hu) v = static_cast<float>(rng.uniform(-2000, 2000));
  for (auto _ : state) benchmark::DoNotOptimize(ingest::window_and_rescale(hu, ingest::DensityWindow::lung()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Windowing)->Arg(1 << 16)->Arg(1 << 20);

void BM_Metrics(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  auto p = blob(side, 1), g = blob(side, 2);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(p, g));
}
BENCHMARK(BM_Metrics)->Arg(64)->Arg(256);

void BM_CenterPoint(benchmark::State& state) {
  auto m = blob(static_cast<int>(state.range(0)), 3);
  Rng rng(0);
  for (auto _ : state) benchmark::DoNotOptimize(synthesis::sample_positive_point(m, synthesis::PointMode::kCenter, rng));
}
BENCHMARK(BM_CenterPoint)->Arg(64)->Arg(256);

void BM_CrossBranch(benchmark::State& state) {
  torch::NoGradGuard g;
  torch::manual_seed(0);
  const auto k = state.range(0);
  interaction::CrossBranch site(64, 16);
  auto f_cnn = torch::randn({4, 16, 8 * k, 8 * k}), f_trans = torch::randn({4, 8, 8, 64});
  for (auto _ : state) benchmark::DoNotOptimize(site->forward(f_cnn, f_trans));
}
BENCHMARK(BM_CrossBranch)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

struct ToyModel {
  SamCt model{nullptr};
  torch::Tensor images;
  std::vector<prompt::PromptSet> prompts;

  explicit ToyModel(int64_t batch) {
    torch::manual_seed(0);
    model = SamCt(toy_profile(), AblationSwitches{});
    model->eval();
    images = torch::rand({batch, 3, 64, 64});
    for (int64_t i = 0; i < batch; ++i) prompts.push_back({{{20, 30}}, {}, Box{10, 12, 40, 44}});
  }
};

void BM_ToyEncode(benchmark::State& state) {
  torch::NoGradGuard g;
  ToyModel t(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(t.model->encode(t.images));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToyEncode)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ToySegment(benchmark::State& state) {
  torch::NoGradGuard g;
  ToyModel t(state.range(0));
  auto feats = t.model->encode(t.images);
  for (auto _ : state) benchmark::DoNotOptimize(t.model->segment(feats, t.prompts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ToySegment)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ToyIndicator(benchmark::State& state) {
  torch::NoGradGuard g;
  ToyModel t(state.range(0));
  auto feats = t.model->encode(t.images);
  prompt::TaskIndicator ind(prompt::IndicatorDims::from_config(toy_profile()), "bench");
  for (auto _ : state) benchmark::DoNotOptimize(prompt::gate_batch(ind->forward({feats.cnn, feats.vit}), *t.model->prompt_encoder));
}
BENCHMARK(BM_ToyIndicator)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ToyTrainStep(benchmark::State& state) {
  train::deterministic_setup(0);
  SamCt model(toy_profile(), AblationSwitches{});
  auto data = data::ct_like_set(64, 64, 1);
  train::TrainConfig tc;
  tc.schedule.epochs = 1;
  tc.schedule.batch_size = static_cast<int>(state.range(0));
  tc.schedule.max_steps = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_main(*model, data, tc));
}
BENCHMARK(BM_ToyTrainStep)->Arg(16)->Unit(benchmark::kMillisecond)->Iterations(5);

}  // namespace

BENCHMARK_MAIN();
