#include "barkid/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>

namespace barkid::kernels {

void configure_threads() {
  const char* env = std::getenv("BARKID_THREADS");
  if (env == nullptr) return;
  try {
    set_threads(std::stoi(env));
  } catch (const std::exception&) {
    // Malformed values leave the runtime default in place.
  }
}

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() { return omp_get_max_threads(); }

float squared_l2(const float* a, const float* b) noexcept {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  for (size_t i = 0; i < kDescriptorDim; i += 8) {
    for (size_t l = 0; l < 8; ++l) {
      const float d = a[i + l] - b[i + l];
      acc[l] += d * d;
    }
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) +
         ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

double squared_l2_serial(const float* a, const float* b) noexcept {
  double s = 0.0;
  for (size_t i = 0; i < kDescriptorDim; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

namespace {

template <typename DistFn>
NearestTwo scan_two(const float* q, std::span<const float> base,
                    std::span<const uint8_t> valid, DistFn dist) {
  NearestTwo best;
  const size_t m = base.size() / kDescriptorDim;
  for (size_t j = 0; j < m; ++j) {
    if (!valid.empty() && valid[j] == 0) continue;
    const float d = static_cast<float>(dist(q, base.data() + j * kDescriptorDim));
    if (d < best.d1) {
      best.d2 = best.d1;
      best.d1 = d;
      best.index = static_cast<int>(j);
    } else if (d < best.d2) {
      best.d2 = d;
    }
  }
  return best;
}

}  // namespace

void nearest_two(std::span<const float> queries, std::span<const float> base,
                 std::span<const uint8_t> base_valid,
                 std::span<NearestTwo> out) {
  const auto n = static_cast<std::ptrdiff_t>(queries.size() / kDescriptorDim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = scan_two(queries.data() + i * kDescriptorDim, base, base_valid,
                      squared_l2);
  }
}

void nearest_two_serial(std::span<const float> queries,
                        std::span<const float> base,
                        std::span<const uint8_t> base_valid,
                        std::span<NearestTwo> out) {
  const size_t n = queries.size() / kDescriptorDim;
  for (size_t i = 0; i < n; ++i) {
    out[i] = scan_two(queries.data() + i * kDescriptorDim, base, base_valid,
                      squared_l2_serial);
  }
}

void assign_nearest(std::span<const float> points, std::span<const float> centers,
                    std::span<int> labels, std::span<float> distances) {
  const auto n = static_cast<std::ptrdiff_t>(points.size() / kDescriptorDim);
  const size_t k = centers.size() / kDescriptorDim;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const float* p = points.data() + i * kDescriptorDim;
    int best = -1;
    float best_d = kInfinity;
    for (size_t c = 0; c < k; ++c) {
      const float d = squared_l2(p, centers.data() + c * kDescriptorDim);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    distances[i] = best_d;
  }
}

void assign_nearest_serial(std::span<const float> points,
                           std::span<const float> centers,
                           std::span<int> labels, std::span<float> distances) {
  const size_t n = points.size() / kDescriptorDim;
  const size_t k = centers.size() / kDescriptorDim;
  for (size_t i = 0; i < n; ++i) {
    const float* p = points.data() + i * kDescriptorDim;
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < k; ++c) {
      const double d = squared_l2_serial(p, centers.data() + c * kDescriptorDim);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[i] = best;
    distances[i] = static_cast<float>(best_d);
  }
}

namespace {

inline float row_tap(const float* row, int w, int x, std::span<const float> kernel,
                     int r) {
  float s = 0.0f;
  for (int t = -r; t <= r; ++t) {
    const int xx = std::clamp(x + t, 0, w - 1);
    s += kernel[t + r] * row[xx];
  }
  return s;
}

void rows_range(const FloatImage& in, std::span<const float> kernel,
                FloatImage& out, int y) {
  const int w = in.width;
  const int r = static_cast<int>(kernel.size() / 2);
  const float* row = in.pixels.data() + static_cast<size_t>(y) * w;
  float* dst = out.pixels.data() + static_cast<size_t>(y) * w;
  // Interior columns need no clamping.
  const int lo = std::min(r, w);
  const int hi = std::max(lo, w - r);
  for (int x = 0; x < lo; ++x) dst[x] = row_tap(row, w, x, kernel, r);
  for (int x = lo; x < hi; ++x) {
    float s = 0.0f;
    const float* src = row + x - r;
    for (int t = 0; t <= 2 * r; ++t) s += kernel[t] * src[t];
    dst[x] = s;
  }
  for (int x = hi; x < w; ++x) dst[x] = row_tap(row, w, x, kernel, r);
}

void cols_row(const FloatImage& in, std::span<const float> kernel,
              FloatImage& out, int y) {
  const int w = in.width;
  const int h = in.height;
  const int r = static_cast<int>(kernel.size() / 2);
  float* dst = out.pixels.data() + static_cast<size_t>(y) * w;
  std::fill(dst, dst + w, 0.0f);
  for (int t = -r; t <= r; ++t) {
    const int yy = std::clamp(y + t, 0, h - 1);
    const float k = kernel[t + r];
    const float* src = in.pixels.data() + static_cast<size_t>(yy) * w;
    for (int x = 0; x < w; ++x) dst[x] += k * src[x];
  }
}

}  // namespace

void convolve_rows(const FloatImage& in, std::span<const float> kernel,
                   FloatImage& out) {
  out = FloatImage(in.width, in.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) rows_range(in, kernel, out, y);
}

void convolve_cols(const FloatImage& in, std::span<const float> kernel,
                   FloatImage& out) {
  out = FloatImage(in.width, in.height);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < in.height; ++y) cols_row(in, kernel, out, y);
}

void convolve_rows_serial(const FloatImage& in, std::span<const float> kernel,
                          FloatImage& out) {
  out = FloatImage(in.width, in.height);
  const int r = static_cast<int>(kernel.size() / 2);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t) s += kernel[t + r] * in.clamped(x + t, y);
      out(x, y) = static_cast<float>(s);
    }
  }
}

void convolve_cols_serial(const FloatImage& in, std::span<const float> kernel,
                          FloatImage& out) {
  out = FloatImage(in.width, in.height);
  const int r = static_cast<int>(kernel.size() / 2);
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int t = -r; t <= r; ++t) s += kernel[t + r] * in.clamped(x, y + t);
      out(x, y) = static_cast<float>(s);
    }
  }
}

}  // namespace barkid::kernels
