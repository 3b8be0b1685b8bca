#include <benchmark/benchmark.h>

#include "idm/harness.hpp"
#include "idm/verifier.hpp"

using namespace idm;

static void BM_LinearForwardBackward(benchmark::State& state) {
  const int b = 64, in = 100, out = 100;
  std::mt19937_64 rng(1);
  ad::Parameter w("w", ad::Tensor::zeros({out, in}));
  ad::Parameter bias("b", ad::Tensor::zeros({out}));
  ad::init_uniform_fan_in(w.value, in, rng);
  ad::Tensor x = ad::Tensor::full({b, in}, 0.1);
  for (auto _ : state) {
    ad::Tape tape;
    auto* y = ad::relu(ad::linear(tape.leaf(x), tape.leaf(w), tape.leaf(bias)));
    auto* loss = ad::mse_loss(y, tape.leaf(ad::Tensor::zeros({b, out})));
    tape.backward(loss);
    benchmark::DoNotOptimize(w.grad.values.data());
  }
}
BENCHMARK(BM_LinearForwardBackward);

static void BM_Conv2dForwardBackward(benchmark::State& state) {
  const int b = 8, c = 3, oc = 16;
  std::mt19937_64 rng(1);
  ad::Parameter k("k", ad::Tensor::zeros({oc, c, 3, 3}));
  ad::init_uniform_fan_in(k.value, c * 9, rng);
  ad::Tensor x = ad::Tensor::full({b, c, 10, 10}, 0.5);
  for (auto _ : state) {
    ad::Tape tape;
    auto* y = ad::conv2d(tape.leaf(x), tape.leaf(k), 1, 1);
    auto* loss = ad::mse_loss(y, tape.leaf(ad::Tensor::zeros(y->val.shape)));
    tape.backward(loss);
    benchmark::DoNotOptimize(k.grad.values.data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward);

static void BM_VerifierTrial(benchmark::State& state) {
  std::mt19937_64 rng(7);
  for (auto _ : state) {
    auto mdp = tab::random_mdp(6, 3, 5, rng);
    auto pi = tab::random_policy(6, 3, rng);
    auto h = tab::random_idm(6, 3, rng);
    auto kl = tab::check_kl_decomposition(mdp, pi, h);
    benchmark::DoNotOptimize(kl.equality_residual);
  }
}
BENCHMARK(BM_VerifierTrial);

static void BM_MazeExpert(benchmark::State& state) {
  for (auto _ : state) {
    auto g = grid::generate_maze(50, 3);
    auto e = grid::solve_expert(g);
    benchmark::DoNotOptimize(e.dist.data());
  }
}
BENCHMARK(BM_MazeExpert);

BENCHMARK_MAIN();
