#include <random>

#include <benchmark/benchmark.h>

#include "frictionml/mlp.hpp"
#include "frictionml/pca.hpp"
#include "frictionml/pipeline.hpp"
#include "frictionml/sne.hpp"
#include "frictionml/svm.hpp"

using namespace frictionml;

namespace {

Eigen::MatrixXd gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

void BM_JacobiEigen(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  const Eigen::MatrixXd c = covariance(gaussian(4 * d, d, 1));
  for (auto _ : state) benchmark::DoNotOptimize(eig_symmetric(c));
}
BENCHMARK(BM_JacobiEigen)->Arg(14)->Arg(36)->Arg(96);

void BM_SmoFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Eigen::MatrixXd x = gaussian(n, 10, 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = i % 2 ? 1 : -1;
    x(static_cast<Eigen::Index>(i), 0) += 0.8 * y[i];
  }
  SmoOptions o;
  o.kernel.sigma = median_pairwise_distance(x);
  for (auto _ : state) benchmark::DoNotOptimize(fit_smo(x, y, o));
}
BENCHMARK(BM_SmoFit)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

// one epoch of minibatch Adam over 500 samples
void BM_MlpEpoch(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  MlpTopology t;
  t.layer_sizes = {width, width, 1};
  MlpData d;
  d.x = gaussian(500, width, 3);
  d.targets = (d.x.col(0).array() > 0.0).cast<double>().matrix();
  OptimizerSpec opt;
  FitOptions fo;
  fo.epochs = 1;
  fo.patience = 0;
  const auto init = init_mlp(t);
  for (auto _ : state) benchmark::DoNotOptimize(fit(init, d, {}, {}, opt, fo));
}
BENCHMARK(BM_MlpEpoch)->Arg(12)->Arg(48);

// 10 gradient steps after the perplexity search
void BM_SneIterations(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Eigen::MatrixXd x = gaussian(n, 24, 4);
  SneConfig c;
  c.n_iter = 10;
  for (auto _ : state) benchmark::DoNotOptimize(embed(x, c));
}
BENCHMARK(BM_SneIterations)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

void BM_BuildSamples(benchmark::State& state) {
  RunConfig c;
  c.segments = 1;
  const auto seg = synthesize_segments(c).front();
  for (auto _ : state)
    benchmark::DoNotOptimize(build_samples(seg.measurements, c.window, c.label, c.horizon_mode, c.impute));
}
BENCHMARK(BM_BuildSamples)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
