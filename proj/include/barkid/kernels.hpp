#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference
// (suffix _serial) that the tests and benchmarks compare against; the
// production entry points are OpenMP-parallel and use lane-split
// accumulation so the compiler can vectorize them.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>

#include "barkid/image.hpp"

namespace barkid::kernels {

inline constexpr size_t kDescriptorDim = 128;
inline constexpr float kInfinity = std::numeric_limits<float>::infinity();

// Caps the OpenMP worker pool; 0 leaves the runtime default. Reads
// BARKID_THREADS when called with no argument.
void configure_threads();
void set_threads(int threads);
int max_threads();

// Squared l2 distance between two 128-d vectors.
float squared_l2(const float* a, const float* b) noexcept;
double squared_l2_serial(const float* a, const float* b) noexcept;

struct NearestTwo {
  int index = -1;
  float d1 = kInfinity;
  float d2 = kInfinity;
};

// For each row of `queries` (n x 128), the nearest and second nearest rows of
// `base` (m x 128) by squared l2. Rows with base_valid[j] == 0 are skipped.
// Ties resolve to the lowest base index.
void nearest_two(std::span<const float> queries, std::span<const float> base,
                 std::span<const uint8_t> base_valid,
                 std::span<NearestTwo> out);
void nearest_two_serial(std::span<const float> queries,
                        std::span<const float> base,
                        std::span<const uint8_t> base_valid,
                        std::span<NearestTwo> out);

// Nearest center for every point (ties -> lowest center index), writing the
// label and its squared distance.
void assign_nearest(std::span<const float> points, std::span<const float> centers,
                    std::span<int> labels, std::span<float> distances);
void assign_nearest_serial(std::span<const float> points,
                           std::span<const float> centers,
                           std::span<int> labels, std::span<float> distances);

// One pass of a separable convolution with replicated borders. `kernel` has
// odd length 2r+1.
void convolve_rows(const FloatImage& in, std::span<const float> kernel,
                   FloatImage& out);
void convolve_rows_serial(const FloatImage& in, std::span<const float> kernel,
                          FloatImage& out);
void convolve_cols(const FloatImage& in, std::span<const float> kernel,
                   FloatImage& out);
void convolve_cols_serial(const FloatImage& in, std::span<const float> kernel,
                          FloatImage& out);

}  // namespace barkid::kernels
