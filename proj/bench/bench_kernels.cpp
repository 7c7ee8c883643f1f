// OpenMP kernels against their serial reference versions.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "statprec/channels.hpp"
#include "statprec/gmm_prior.hpp"
#include "statprec/gnn_precoder.hpp"

namespace statprec {
namespace {

const ChannelModel kModel;

void BM_DatasetParallel(benchmark::State& state) {
  const auto g = ArrayGeometry::ula(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(g, 500, kModel, 1));
}

void BM_DatasetReference(benchmark::State& state) {
  const auto g = ArrayGeometry::ula(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::generate_dataset(g, 500, kModel, 1));
}

struct EStepInput {
  GmmModel model;
  std::vector<CVec> samples;
  CMat stacked;
};

EStepInput make_estep(int antennas) {
  const auto g = ArrayGeometry::ula(antennas);
  const SpectralDictionary dict(g);
  Rng rng(3);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  RMat spectra(dict.spectrum_length(), 16);
  for (Index i = 0; i < spectra.size(); ++i) spectra.data()[i] = unit(rng);
  GmmModel model(dict, RVec::Constant(16, 1.0 / 16), spectra, 1e-6);
  auto samples = generate_dataset(g, 4000, kModel, 4);
  CMat stacked(antennas, static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) stacked.col(static_cast<Index>(i)) = samples[i];
  return {std::move(model), std::move(samples), std::move(stacked)};
}

void BM_EStepParallel(benchmark::State& state) {
  const auto in = make_estep(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(detail::component_log_densities(in.model, in.stacked));
}

void BM_EStepReference(benchmark::State& state) {
  const auto in = make_estep(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::component_log_densities(in.model, in.samples));
}

struct GnnInput {
  GnnModel model;
  std::vector<TrainingSample> batch;
  RMat features;
};

GnnInput make_gnn(int antennas) {
  const auto g = ArrayGeometry::ula(antennas);
  Rng rng(5);
  GnnModel model = glorot_init(GnnShape::make(antennas, 3, 64), rng);
  std::vector<TrainingSample> batch;
  for (const auto& s : generate_scenarios(g, 100, 4, kModel, 6)) {
    TrainingSample t;
    for (const auto& u : s.users) {
      t.inputs.push_back(u.genie_row);
      t.channels.push_back(u.channel);
    }
    t.noise_var = 0.1;
    batch.push_back(std::move(t));
  }
  RMat features = RMat::Random(64, antennas * 4);
  return {std::move(model), std::move(batch), std::move(features)};
}

void BM_GradientParallel(benchmark::State& state) {
  const auto in = make_gnn(static_cast<int>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(in.model, in.batch, 1.0, grad));
}

void BM_GradientReference(benchmark::State& state) {
  const auto in = make_gnn(static_cast<int>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state)
    benchmark::DoNotOptimize(reference::loss_and_gradient(in.model, in.batch, 1.0, grad));
}

void BM_LayerFast(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto in = make_gnn(n);
  for (auto _ : state)
    benchmark::DoNotOptimize(layer_forward(in.features, in.model.layer(1), 0.1 / n, 0.1, n, true));
}

void BM_LayerReference(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto in = make_gnn(n);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        reference::layer_forward(in.features, in.model.layer(1), 0.1 / n, 0.1, n, true));
}

BENCHMARK(BM_DatasetParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DatasetReference)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepReference)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientReference)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LayerFast)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LayerReference)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace statprec

BENCHMARK_MAIN();
