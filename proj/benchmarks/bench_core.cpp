// Microbenchmarks for the hot paths: tape forward/backward, convolution,
// the Concrete sampler, and one full model step.
#include <benchmark/benchmark.h>

#include "pact/models.hpp"
#include "pact/stochastic.hpp"
#include "pact/train.hpp"

using namespace pact;

static void BM_Conv3x3ForwardBackward(benchmark::State& state) {
  RngStream rng = RngStream::root(1).derive("bench");
  const int c = 8, h = 16, w = 16;
  std::vector<double> xv(c * h * w), kv(c * c * 9);
  for (auto& v : xv) v = rng.next_uniform() - 0.5;
  for (auto& v : kv) v = rng.next_uniform() - 0.5;
  for (auto _ : state) {
    ad::Tape tape;
    auto x = tape.leaf({c, h, w}, xv);
    auto k = tape.leaf({c, c, 3, 3}, kv);
    auto y = ad::sum(ad::conv3x3(x, k));
    tape.backward(y);
    benchmark::DoNotOptimize(x.grad()[0]);
  }
}
BENCHMARK(BM_Conv3x3ForwardBackward);

static void BM_RelaxedBernoulli(benchmark::State& state) {
  RngStream rng = RngStream::root(2).derive("bench");
  double acc = 0.0;
  for (auto _ : state) {
    acc += sample_relaxed_bernoulli_value(0.3, 2.0 / 3.0, rng);
    benchmark::DoNotOptimize(acc);
  }
}
BENCHMARK(BM_RelaxedBernoulli);

static void BM_RelaxedBlockStep(benchmark::State& state) {
  ModelSpec spec{"residual_stack", {{"blocks", 2}, {"max_iterations", 3}, {"width", 16},
                                    {"input_dim", 8}, {"classes", 4}}};
  auto model = make_model(spec, 3);
  MixtureTask task;
  Example ex = task.example(1, "bench", 0);
  BlockOptions opts;
  uint64_t i = 0;
  for (auto _ : state) {
    ad::Tape tape;
    BoundParams bound = bind(tape, model->params());
    RngStream rng = RngStream::root(4).derive("bench", i++);
    ForwardOut fwd = model->forward(tape, bound, ex, BlockMode::kRelaxed, opts, rng, true);
    auto loss = loss_relaxed(fwd, 0.01);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value());
  }
}
BENCHMARK(BM_RelaxedBlockStep);

static void BM_GridForward(benchmark::State& state) {
  ModelSpec spec{"grid", {{"blocks", 1}, {"max_iterations", 4}, {"channels", 4},
                          {"height", 16}, {"width", 16}, {"classes", 4},
                          {"grouping", static_cast<int>(state.range(0))}}};
  auto model = make_model(spec, 5);
  QuadrantTask task;
  Example ex = task.example(1, "bench", 0);
  BlockOptions opts;
  uint64_t i = 0;
  for (auto _ : state) {
    ad::Tape tape;
    BoundParams bound = bind(tape, model->params());
    RngStream rng = RngStream::root(6).derive("bench", i++);
    ForwardOut fwd = model->forward(tape, bound, ex, BlockMode::kRelaxed, opts, rng, false);
    benchmark::DoNotOptimize(fwd.flops);
  }
}
BENCHMARK(BM_GridForward)->Arg(1)->Arg(4);

BENCHMARK_MAIN();
