#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "barkid/descriptor.hpp"
#include "barkid/detector.hpp"
#include "barkid/image.hpp"

namespace barkid {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

// Projective map, stored row-major and scaled so m[8] == 1 when nonzero.
class Homography {
 public:
  Homography() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
  explicit Homography(const std::array<double, 9>& m);

  static Homography identity() { return Homography(); }

  const std::array<double, 9>& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_[r * 3 + c]; }
  double determinant() const;
  Homography inverse() const;
  Homography operator*(const Homography& rhs) const;

 private:
  std::array<double, 9> m_;
};

// Perspective division; throws kProjection when the point maps to infinity.
Point2 project(const Homography& h, Point2 p);

struct Correspondence {
  Point2 image;      // source
  Point2 reference;  // destination
};

struct HomographyFit {
  Homography h;
  double mean_reprojection_error = 0.0;
};

// Normalized DLT: Hartley conditioning of both point sets, SVD of the 2n x 9
// system, denormalization. Needs >= 4 correspondences in general position;
// otherwise throws kEstimation.
HomographyFit estimate_homography(std::span<const Correspondence> correspondences);

struct CropRect {
  double x = 0, y = 0, width = 0, height = 0;
};

struct ManifestImage {
  std::string image_id;
  std::string path;
  uint32_t width = 0;  // 0 = read from the image file
  uint32_t height = 0;
  std::vector<Correspondence> correspondences;  // image point -> reference frame
  std::optional<CropRect> crop;                 // region of interest, original pixels
};

struct SurfaceManifest {
  std::string surface_id;
  std::string reference_image_id;
  std::vector<ManifestImage> images;

  // >= 2 images, >= 4 correspondences each, unique image ids.
  void validate() const;
};

void to_json(nlohmann::json& j, const SurfaceManifest& m);
void from_json(const nlohmann::json& j, SurfaceManifest& m);
SurfaceManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SurfaceManifest& m, const std::filesystem::path& path);

struct AlignedKeypoint {
  Point2 reference;
  float response = 0.0f;
  // Indexed like SurfaceManifest::images; absent when the 64x64 window would
  // leave the (downsized) image or its crop rectangle.
  std::vector<std::optional<Point2>> positions;

  size_t visible_count() const;
};

struct AlignedKeypointSet {
  std::string surface_id;
  std::vector<std::string> image_ids;
  std::vector<Homography> to_reference;  // H^r per image
  std::vector<AlignedKeypoint> keypoints;
};

struct ConsolidationParams {
  double min_spacing = 32.0;
  // Frame in which patches are cut: positions are reported in original pixels
  // but the fit check runs on the phi-downsized image.
  float phi = 2.0f;
};

// Greedy response-ordered thinning in the reference frame, then projection of
// every survivor back into each image. `per_image_keypoints` are in original
// image coordinates, one list per manifest image. Image sizes must be set in
// the manifest.
AlignedKeypointSet consolidate_keypoints(const SurfaceManifest& manifest,
                                         std::span<const std::vector<Keypoint>> per_image_keypoints,
                                         const ConsolidationParams& params = {});

struct PatchRecord {
  std::string surface_id;
  uint32_t keypoint_id = 0;
  std::string image_id;
  float x = 0.0f;  // centre in the downsized frame
  float y = 0.0f;
  Image pixels;
};

struct PatchArchive {
  std::vector<PatchRecord> records;
};

// Cuts one patch per present (keypoint, image) pair. Keypoints visible in fewer
// than two images are dropped. `images` are the original, unblurred images in
// manifest order.
PatchArchive build_patch_dataset(const SurfaceManifest& manifest, const AlignedKeypointSet& aligned,
                                 std::span<const Image> images, float phi = 2.0f);

// Writes <out>/<surface>/<keypoint>/<image>.png and appends manifest rows to
// <out>/manifest.jsonl.
void write_patch_archive(const PatchArchive& archive, const std::filesystem::path& out_dir);

struct DatasetBuildConfig {
  DetectorConfig detector = [] {
    DetectorConfig c = DetectorConfig::for_learned();
    c.gamma = 5000;
    return c;
  }();
  ConsolidationParams consolidation;
};

struct SurfaceBuildResult {
  std::string surface_id;
  size_t keypoints = 0;
  size_t patches = 0;
  std::string error;  // empty on success
  std::vector<std::string> image_ids;
  std::vector<Homography> homographies;
};

// End-to-end builder over several surfaces; surfaces are processed in parallel
// and a failing surface does not stop the others. Relative image paths are
// resolved against `base_dir`.
std::vector<SurfaceBuildResult> build_patch_datasets(std::span<const SurfaceManifest> manifests,
                                                     const std::filesystem::path& base_dir,
                                                     const DatasetBuildConfig& cfg,
                                                     const std::filesystem::path& out_dir);

// Audit record: image id -> 9 row-major floats of H^r.
nlohmann::json homographies_json(const SurfaceBuildResult& r);

}  // namespace barkid
