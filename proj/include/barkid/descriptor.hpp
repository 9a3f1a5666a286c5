#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "barkid/detector.hpp"
#include "barkid/image.hpp"

namespace barkid {

inline constexpr int kDescriptorDim = 128;
inline constexpr int kPatchSize = 64;

// 128-d unit vector, or all zeros with `degenerate` set.
struct Descriptor {
  std::array<float, kDescriptorDim> values{};
  bool degenerate = false;

  // Normalizes raw values in double precision; a zero vector becomes the
  // degenerate descriptor.
  static Descriptor from_raw(std::span<const double> raw);
  double norm() const;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

struct Patch {
  Image pixels;  // kPatchSize x kPatchSize
  Keypoint source_keypoint;
  std::string source_image_id;
};

// SIFT-style 4x4x8 gradient histogram descriptor. Holds a small octave
// pyramid of the blurred detection image so that large keypoints are sampled
// at a coarser level.
class BuiltinDescriber {
 public:
  explicit BuiltinDescriber(const FloatImage& blurred);

  Descriptor describe(const Keypoint& kp) const;

 private:
  struct Level {
    FloatImage image;
    GradientField grad;
  };
  std::vector<Level> levels_;
};

Descriptor describe_builtin(const FloatImage& blurred, const Keypoint& kp);

// Axis-aligned 64x64 crop centred at (round(x), round(y)) with replicated
// borders. Orientation is not compensated.
Patch crop_patch(const Image& unblurred, const Keypoint& kp, std::string image_id = {});

// True when the 64x64 window around the keypoint lies entirely inside the image.
bool patch_fits(uint32_t width, uint32_t height, float x, float y);

struct DescriptorRecord {
  std::string image_id;
  uint32_t keypoint_index = 0;
  Descriptor descriptor;
};

// Resolves descriptors for the keypoints of an image: either computed by the
// built-in descriptor or looked up in an externally produced table.
class DescriptorProvider {
 public:
  enum class Kind { kBuiltin, kExternal };

  static DescriptorProvider builtin();
  static DescriptorProvider external(std::vector<DescriptorRecord> records);

  Kind kind() const noexcept { return kind_; }
  size_t size() const noexcept;
  const Descriptor* lookup(std::string_view image_id, uint32_t keypoint_index) const;

  // One descriptor per keypoint. External providers throw kExtraction naming
  // the first keypoint they cannot resolve.
  std::vector<Descriptor> describe(std::string_view image_id, const FloatImage& blurred,
                                   std::span<const Keypoint> keypoints) const;

 private:
  using Table = std::unordered_map<std::string, std::unordered_map<uint32_t, Descriptor>>;
  Kind kind_ = Kind::kBuiltin;
  std::shared_ptr<const Table> table_;
};

// "BKD1" little-endian descriptor file.
void write_descriptor_file(const std::filesystem::path& path,
                           std::span<const DescriptorRecord> records);
std::vector<DescriptorRecord> read_descriptor_file(const std::filesystem::path& path);
DescriptorProvider load_descriptor_file(const std::filesystem::path& path);

}  // namespace barkid
