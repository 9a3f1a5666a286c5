#include "barkid/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "barkid/error.hpp"
#include "barkid/kernels.hpp"

namespace barkid {

Image::Image(uint32_t width, uint32_t height, uint32_t channels, uint8_t fill)
    : width_(width),
      height_(height),
      channels_(channels),
      data_(static_cast<size_t>(width) * height * channels, fill) {
  if (width == 0 || height == 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorCode::kParameter, "image dimensions must be >= 1 with 1 or 3 channels");
  }
}

Image::Image(uint32_t width, uint32_t height, uint32_t channels,
             std::vector<uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width == 0 || height == 0 || (channels != 1 && channels != 3)) {
    throw Error(ErrorCode::kParameter, "image dimensions must be >= 1 with 1 or 3 channels");
  }
  if (data_.size() != static_cast<size_t>(width) * height * channels) {
    throw Error(ErrorCode::kParameter,
                "image data length " + std::to_string(data_.size()) +
                    " does not match dimensions");
  }
}

float FloatImage::clamped(int x, int y) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return (*this)(x, y);
}

float FloatImage::sample(float x, float y) const {
  const float fx = std::floor(x);
  const float fy = std::floor(y);
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const float ax = x - fx;
  const float ay = y - fy;
  const float top = (1.0f - ax) * clamped(x0, y0) + ax * clamped(x0 + 1, y0);
  const float bot = (1.0f - ax) * clamped(x0, y0 + 1) + ax * clamped(x0 + 1, y0 + 1);
  return (1.0f - ay) * top + ay * bot;
}

namespace {

inline uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

FloatImage channel_plane(const Image& img, uint32_t c) {
  FloatImage out(static_cast<int>(img.width()), static_cast<int>(img.height()));
  for (uint32_t y = 0; y < img.height(); ++y) {
    for (uint32_t x = 0; x < img.width(); ++x) out(x, y) = img.value(x, y, c);
  }
  return out;
}

}  // namespace

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.width(), img.height(), 1);
  for (uint32_t y = 0; y < img.height(); ++y) {
    for (uint32_t x = 0; x < img.width(); ++x) {
      const double lum = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) +
                         0.114 * img.at(x, y, 2);
      out.at(x, y) = static_cast<uint8_t>(std::clamp(std::lround(lum), 0L, 255L));
    }
  }
  return out;
}

std::vector<float> gaussian_kernel(float sigma) {
  if (sigma < 0.0f || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kParameter, "blur sigma must be >= 0");
  }
  const int r = static_cast<int>(std::ceil(3.0f * sigma));
  std::vector<float> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = sigma > 0.0f ? std::exp(-0.5 * i * i / (double(sigma) * sigma)) : 1.0;
    k[i + r] = static_cast<float>(v);
    sum += v;
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

FloatImage gaussian_blur(const FloatImage& img, float sigma) {
  const std::vector<float> k = gaussian_kernel(sigma);
  if (sigma == 0.0f) return img;
  FloatImage tmp;
  FloatImage out;
  kernels::convolve_rows(img, k, tmp);
  kernels::convolve_cols(tmp, k, out);
  return out;
}

Image gaussian_blur(const Image& img, float sigma) {
  const std::vector<float> k = gaussian_kernel(sigma);
  if (sigma == 0.0f) return img;
  Image out(img.width(), img.height(), img.channels());
  for (uint32_t c = 0; c < img.channels(); ++c) {
    const FloatImage blurred = gaussian_blur(channel_plane(img, c), sigma);
    for (uint32_t y = 0; y < img.height(); ++y) {
      for (uint32_t x = 0; x < img.width(); ++x) out.at(x, y, c) = to_byte(blurred(x, y));
    }
  }
  return out;
}

namespace {

uint32_t scaled_dim(uint32_t n, float phi) {
  return std::max<uint32_t>(1, static_cast<uint32_t>(std::lround(n / double(phi))));
}

void check_phi(float phi) {
  if (!(phi >= 1.0f) || !std::isfinite(phi)) {
    throw Error(ErrorCode::kParameter, "downsampling factor phi must be >= 1");
  }
}

}  // namespace

FloatImage downsample(const FloatImage& img, float phi) {
  check_phi(phi);
  if (phi == 1.0f) return img;
  const int ow = static_cast<int>(scaled_dim(img.width, phi));
  const int oh = static_cast<int>(scaled_dim(img.height, phi));
  const double sx = double(img.width) / ow;
  const double sy = double(img.height) / oh;
  FloatImage out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    const auto fy = static_cast<float>((y + 0.5) * sy - 0.5);
    for (int x = 0; x < ow; ++x) {
      out(x, y) = img.sample(static_cast<float>((x + 0.5) * sx - 0.5), fy);
    }
  }
  return out;
}

Image downsample(const Image& img, float phi) {
  check_phi(phi);
  if (phi == 1.0f) return img;
  const uint32_t ow = scaled_dim(img.width(), phi);
  const uint32_t oh = scaled_dim(img.height(), phi);
  Image out(ow, oh, img.channels());
  for (uint32_t c = 0; c < img.channels(); ++c) {
    const FloatImage plane = downsample(channel_plane(img, c), phi);
    for (uint32_t y = 0; y < oh; ++y) {
      for (uint32_t x = 0; x < ow; ++x) out.at(x, y, c) = to_byte(plane(x, y));
    }
  }
  return out;
}

GradientField gradients(const FloatImage& img) {
  constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;
  GradientField g{FloatImage(img.width, img.height), FloatImage(img.width, img.height)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const float dx = 0.5f * (img.clamped(x + 1, y) - img.clamped(x - 1, y));
      const float dy = 0.5f * (img.clamped(x, y + 1) - img.clamped(x, y - 1));
      g.magnitude(x, y) = std::sqrt(dx * dx + dy * dy);
      float theta = std::atan2(dy, dx);
      if (theta < 0.0f) theta += kTwoPi;
      if (theta >= kTwoPi) theta = 0.0f;
      g.orientation(x, y) = theta;
    }
  }
  return g;
}

GradientField gradients(const Image& img) { return gradients(to_float(img)); }

FloatImage to_float(const Image& img, bool normalize) {
  FloatImage out = channel_plane(to_grayscale(img), 0);
  if (normalize) {
    for (float& v : out.pixels) v /= 255.0f;
  }
  return out;
}

Image to_image(const FloatImage& img, bool normalized) {
  Image out(static_cast<uint32_t>(img.width), static_cast<uint32_t>(img.height), 1);
  const float scale = normalized ? 255.0f : 1.0f;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) out.at(x, y) = to_byte(img(x, y) * scale);
  }
  return out;
}

}  // namespace barkid
