#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "barkid/image.hpp"

namespace barkid {

struct Keypoint {
  float x = 0.0f;  // in the frame of the image handed to the detector
  float y = 0.0f;
  float scale = 1.0f;
  float orientation = 0.0f;  // radians in [0, 2*pi)
  float response = 0.0f;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct DetectorConfig {
  int gamma = 500;
  float phi = 2.0f;
  // 3 suits the built-in gradient descriptor; learned descriptors use 0.
  float sigma_blur = 3.0f;
  int octaves = 4;
  int scales_per_octave = 3;
  float contrast_threshold = 0.01f;  // on [0, 1] intensities
  float edge_ratio_threshold = 10.0f;

  static DetectorConfig for_builtin() { return {}; }
  static DetectorConfig for_learned() {
    DetectorConfig c;
    c.sigma_blur = 0.0f;
    return c;
  }

  // Throws kParameter on out-of-range values.
  void validate() const;
  std::string canonical() const;
};

// The grayscale, phi-downsized and sigma_blur-blurred image on [0, 1] that
// detection runs on and the built-in descriptor samples.
FloatImage detection_image(const Image& img, const DetectorConfig& cfg);

// Difference-of-Gaussians detection on a prepared detection image. Keypoints
// are sorted by (response desc, y, x) and truncated to cfg.gamma.
std::vector<Keypoint> detect_prepared(const FloatImage& prepared,
                                      const DetectorConfig& cfg);

// Full pipeline: grayscale -> downsample(phi) -> blur(sigma) -> DoG.
std::vector<Keypoint> detect(const Image& img, const DetectorConfig& cfg);

// Regular grid inset by spacing/2; a single centre keypoint when the image is
// smaller than the spacing.
std::vector<Keypoint> grid_fallback(uint32_t width, uint32_t height, int spacing);
inline std::vector<Keypoint> grid_fallback(const Image& img, int spacing) {
  return grid_fallback(img.width(), img.height(), spacing);
}

// Maps downsized-frame coordinates back to the original image (x, y, scale * phi).
std::vector<Keypoint> to_original_frame(std::vector<Keypoint> kps, float phi);

// JSONL, one keypoint per line, 6 significant digits.
void write_keypoints_jsonl(std::ostream& out, const std::vector<Keypoint>& kps);
std::vector<Keypoint> read_keypoints_jsonl(std::istream& in);

}  // namespace barkid
