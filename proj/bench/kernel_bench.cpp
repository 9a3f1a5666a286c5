// Serial references against the OpenMP kernels. Thread count follows
// BARKID_THREADS / OMP_NUM_THREADS.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "barkid/image.hpp"
#include "barkid/kernels.hpp"

namespace k = barkid::kernels;

namespace {

std::vector<float> random_rows(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(n * k::kDescriptorDim);
  for (float& x : v) x = d(rng);
  return v;
}

template <bool Serial>
void BM_NearestTwo(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  const auto q = random_rows(n, 1);
  const auto b = random_rows(n, 2);
  const std::vector<uint8_t> valid(n, 1);
  std::vector<k::NearestTwo> out(n);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::nearest_two_serial(q, b, valid, out);
    } else {
      k::nearest_two(q, b, valid, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n));
}

template <bool Serial>
void BM_AssignNearest(benchmark::State& state) {
  const auto n = static_cast<size_t>(state.range(0));
  const auto pts = random_rows(n, 3);
  const auto ctr = random_rows(1000, 4);
  std::vector<int> labels(n);
  std::vector<float> dist(n);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::assign_nearest_serial(pts, ctr, labels, dist);
    } else {
      k::assign_nearest(pts, ctr, labels, dist);
    }
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * 1000));
}

template <bool Serial>
void BM_Convolve(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  barkid::FloatImage img(side, side);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) img(x, y) = u(rng);
  }
  const std::vector<float> kernel = barkid::gaussian_kernel(3.0f);
  barkid::FloatImage tmp(side, side), out(side, side);
  for (auto _ : state) {
    if constexpr (Serial) {
      k::convolve_rows_serial(img, kernel, tmp);
      k::convolve_cols_serial(tmp, kernel, out);
    } else {
      k::convolve_rows(img, kernel, tmp);
      k::convolve_cols(tmp, kernel, out);
    }
    benchmark::DoNotOptimize(out(0, 0));
  }
  state.SetItemsProcessed(state.iterations() * int64_t(side) * side);
}

}  // namespace

BENCHMARK(BM_NearestTwo<true>)->Name("nearest_two/serial")->Arg(200)->Arg(500);
BENCHMARK(BM_NearestTwo<false>)->Name("nearest_two/parallel")->Arg(200)->Arg(500);
BENCHMARK(BM_AssignNearest<true>)->Name("assign_nearest/serial")->Arg(2000);
BENCHMARK(BM_AssignNearest<false>)->Name("assign_nearest/parallel")->Arg(2000);
BENCHMARK(BM_Convolve<true>)->Name("gaussian_blur/serial")->Arg(512)->Arg(1024);
BENCHMARK(BM_Convolve<false>)->Name("gaussian_blur/parallel")->Arg(512)->Arg(1024);

int main(int argc, char** argv) {
  k::configure_threads();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
