#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace barkid {

// 8-bit interleaved image, row-major. Immutable after construction apart from
// the explicit mutable accessors used by producers.
class Image {
 public:
  Image() = default;
  Image(uint32_t width, uint32_t height, uint32_t channels, uint8_t fill = 0);
  Image(uint32_t width, uint32_t height, uint32_t channels,
        std::vector<uint8_t> data);

  uint32_t width() const noexcept { return width_; }
  uint32_t height() const noexcept { return height_; }
  uint32_t channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }

  uint8_t at(uint32_t x, uint32_t y, uint32_t c = 0) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  uint8_t& at(uint32_t x, uint32_t y, uint32_t c = 0) {
    return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  float value(uint32_t x, uint32_t y, uint32_t c = 0) const {
    return static_cast<float>(at(x, y, c));
  }

  std::span<const uint8_t> data() const noexcept { return data_; }
  std::span<uint8_t> data() noexcept { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  uint32_t width_ = 0;
  uint32_t height_ = 0;
  uint32_t channels_ = 0;
  std::vector<uint8_t> data_;
};

// Single-channel float plane used for all scale-space and gradient math.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  FloatImage() = default;
  FloatImage(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

  float& operator()(int x, int y) {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  float operator()(int x, int y) const {
    return pixels[static_cast<size_t>(y) * width + x];
  }
  // Border-replicated read.
  float clamped(int x, int y) const;
  // Bilinear sample with border replication.
  float sample(float x, float y) const;
};

struct GradientField {
  FloatImage magnitude;
  FloatImage orientation;  // radians in [0, 2*pi)
};

Image to_grayscale(const Image& img);

// Separable Gaussian with radius ceil(3*sigma) and replicated borders.
// sigma == 0 returns the input unchanged; sigma < 0 throws kParameter.
Image gaussian_blur(const Image& img, float sigma);
FloatImage gaussian_blur(const FloatImage& img, float sigma);
std::vector<float> gaussian_kernel(float sigma);

// Bilinear resampling to round(size / phi); phi == 1 is the identity.
Image downsample(const Image& img, float phi);
FloatImage downsample(const FloatImage& img, float phi);

GradientField gradients(const FloatImage& img);
GradientField gradients(const Image& img);

// Grayscale conversion followed by scaling to [0, 1] when `normalize` is set.
FloatImage to_float(const Image& img, bool normalize = false);
Image to_image(const FloatImage& img, bool normalized = false);

}  // namespace barkid
