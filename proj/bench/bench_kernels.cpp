// bench/bench_kernels.cpp
//
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels against their OpenMP counterparts. The thread
// count is the last benchmark argument; serial runs ignore it.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "w2lp/kernels.hpp"

namespace {

using namespace w2lp::kernels;

std::vector<float> Random(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Args: batch, time, channels in/out, kernel, threads.
ConvShape ShapeFrom(const benchmark::State& st) {
  ConvShape s;
  s.batch = st.range(0);
  s.time_in = st.range(1);
  s.c_in = st.range(2);
  s.c_out = st.range(2);
  s.kernel = st.range(3);
  return s;
}

void SetFlops(benchmark::State& st, const ConvShape& s) {
  st.counters["flops"] = benchmark::Counter(
      2.0 * s.batch * s.time_out() * s.c_out * s.kernel * s.c_in,
      benchmark::Counter::kIsIterationInvariantRate);
}

template <bool kParallel>
void ConvForward(benchmark::State& st) {
  const auto s = ShapeFrom(st);
  SetNumThreads(static_cast<int>(st.range(4)));
  const auto x = Random(s.batch * s.time_in * s.c_in, 1);
  const auto w = Random(s.weight_size(), 2);
  const auto b = Random(s.c_out, 3);
  std::vector<float> y(s.batch * s.time_out() * s.c_out);
  for (auto _ : st) {
    if constexpr (kParallel) {
      parallel::Conv1dForward(s, x.data(), w.data(), b.data(), y.data());
    } else {
      serial::Conv1dForward(s, x.data(), w.data(), b.data(), y.data());
    }
    benchmark::DoNotOptimize(y.data());
  }
  SetFlops(st, s);
}

template <bool kParallel>
void ConvBackward(benchmark::State& st) {
  const auto s = ShapeFrom(st);
  SetNumThreads(static_cast<int>(st.range(4)));
  const auto x = Random(s.batch * s.time_in * s.c_in, 1);
  const auto w = Random(s.weight_size(), 2);
  const auto dy = Random(s.batch * s.time_out() * s.c_out, 3);
  std::vector<float> dx(x.size()), dw(w.size()), db(s.c_out);
  for (auto _ : st) {
    std::fill(dx.begin(), dx.end(), 0.0f);
    if constexpr (kParallel) {
      parallel::Conv1dBackwardInput(s, dy.data(), w.data(), dx.data());
      parallel::Conv1dBackwardWeight(s, x.data(), dy.data(), dw.data(), db.data());
    } else {
      serial::Conv1dBackwardInput(s, dy.data(), w.data(), dx.data());
      serial::Conv1dBackwardWeight(s, x.data(), dy.data(), dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
  st.counters["flops"] = benchmark::Counter(
      4.0 * s.batch * s.time_out() * s.c_out * s.kernel * s.c_in,
      benchmark::Counter::kIsIterationInvariantRate);
}

template <bool kParallel>
void BatchNorm(benchmark::State& st) {
  const BatchNormShape s{static_cast<std::size_t>(st.range(0)),
                         static_cast<std::size_t>(st.range(1)),
                         static_cast<std::size_t>(st.range(2))};
  SetNumThreads(static_cast<int>(st.range(4)));
  const std::vector<std::size_t> lengths(s.batch, s.time);
  const auto x = Random(s.batch * s.time * s.channels, 1);
  const auto dy = Random(x.size(), 2);
  const std::vector<float> gamma(s.channels, 1.0f), beta(s.channels, 0.0f);
  std::vector<float> xhat(x.size()), y(x.size()), dx(x.size()), dg(s.channels), dbeta(s.channels);
  for (auto _ : st) {
    if constexpr (kParallel) {
      const auto saved = parallel::BatchNormTrainForward(s, lengths, x.data(), gamma.data(),
                                                         beta.data(), 1e-5f, xhat.data(), y.data());
      parallel::BatchNormBackward(s, lengths, dy.data(), xhat.data(), gamma.data(), saved,
                                  dx.data(), dg.data(), dbeta.data());
    } else {
      const auto saved = serial::BatchNormTrainForward(s, lengths, x.data(), gamma.data(),
                                                       beta.data(), 1e-5f, xhat.data(), y.data());
      serial::BatchNormBackward(s, lengths, dy.data(), xhat.data(), gamma.data(), saved,
                                dx.data(), dg.data(), dbeta.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

// w2lp-tiny block layer, then a w2lp-19 first-block layer.
void ConvArgs(benchmark::internal::Benchmark* b, bool threaded) {
  for (const auto& shape : {std::vector<std::int64_t>{8, 200, 32, 5},
                            std::vector<std::int64_t>{4, 200, 256, 11}}) {
    for (int t : threaded ? std::vector<int>{1, 2, 4, 8} : std::vector<int>{1}) {
      auto args = shape;
      args.push_back(t);
      b->Args(args);
    }
  }
  b->ArgNames({"batch", "time", "ch", "k", "threads"})->UseRealTime()->Unit(benchmark::kMillisecond);
}

BENCHMARK(ConvForward<false>)->Apply([](auto* b) { ConvArgs(b, false); })->Name("conv_forward/serial");
BENCHMARK(ConvForward<true>)->Apply([](auto* b) { ConvArgs(b, true); })->Name("conv_forward/parallel");
BENCHMARK(ConvBackward<false>)->Apply([](auto* b) { ConvArgs(b, false); })->Name("conv_backward/serial");
BENCHMARK(ConvBackward<true>)->Apply([](auto* b) { ConvArgs(b, true); })->Name("conv_backward/parallel");
BENCHMARK(BatchNorm<false>)->Apply([](auto* b) { ConvArgs(b, false); })->Name("batchnorm/serial");
BENCHMARK(BatchNorm<true>)->Apply([](auto* b) { ConvArgs(b, true); })->Name("batchnorm/parallel");

}  // namespace

BENCHMARK_MAIN();
