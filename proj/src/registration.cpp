#include "barkid/registration.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include "barkid/error.hpp"
#include "barkid/image_io.hpp"

namespace barkid {
namespace {

using Mat3 = Eigen::Matrix3d;

Mat3 to_eigen(const Homography& h) {
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = h(r, c);
  return m;
}

Homography from_eigen(const Mat3& m) {
  std::array<double, 9> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[r * 3 + c] = m(r, c);
  return Homography(a);
}

// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
Mat3 conditioning(std::span<const Point2> pts) {
  double cx = 0, cy = 0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean = 0;
  for (const Point2& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= pts.size();
  if (!(mean > 0)) throw Error(ErrorCode::kEstimation, "all correspondence points coincide");
  const double s = std::sqrt(2.0) / mean;
  Mat3 t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

bool has_collinear_triple(std::span<const Point2> pts) {
  double extent = 0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      extent = std::max(extent, std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
  const double tol = 1e-9 * extent * extent;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j)
      for (size_t k = j + 1; k < pts.size(); ++k) {
        const double cross = (pts[j].x - pts[i].x) * (pts[k].y - pts[i].y) -
                             (pts[j].y - pts[i].y) * (pts[k].x - pts[i].x);
        if (std::abs(cross) <= tol) return true;
      }
  return false;
}

}  // namespace

Homography::Homography(const std::array<double, 9>& m) : m_(m) {
  if (m_[8] != 0.0) {
    const double s = m_[8];
    for (double& v : m_) v /= s;
  }
}

double Homography::determinant() const { return to_eigen(*this).determinant(); }

Homography Homography::inverse() const {
  const Mat3 m = to_eigen(*this);
  const double scale = m.norm();
  if (std::abs(m.determinant()) <= 1e-9 * scale * scale * scale) {
    throw Error(ErrorCode::kEstimation, "homography is singular");
  }
  return from_eigen(m.inverse());
}

Homography Homography::operator*(const Homography& rhs) const {
  return from_eigen(to_eigen(*this) * to_eigen(rhs));
}

Point2 project(const Homography& h, Point2 p) {
  const double z = h(2, 0) * p.x + h(2, 1) * p.y + h(2, 2);
  if (std::abs(z) < 1e-12) throw Error(ErrorCode::kProjection, "point maps to infinity");
  return {(h(0, 0) * p.x + h(0, 1) * p.y + h(0, 2)) / z,
          (h(1, 0) * p.x + h(1, 1) * p.y + h(1, 2)) / z};
}

HomographyFit estimate_homography(std::span<const Correspondence> corr) {
  const size_t n = corr.size();
  if (n < 4) {
    throw Error(ErrorCode::kEstimation,
                "homography needs >= 4 correspondences, got " + std::to_string(n));
  }
  std::vector<Point2> src(n), dst(n);
  for (size_t i = 0; i < n; ++i) {
    src[i] = corr[i].image;
    dst[i] = corr[i].reference;
  }
  if (n == 4 && (has_collinear_triple(src) || has_collinear_triple(dst))) {
    throw Error(ErrorCode::kEstimation, "degenerate configuration: collinear points");
  }
  const Mat3 ts = conditioning(src);
  const Mat3 td = conditioning(dst);

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d d = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -s.x(), -s.y(), -1, 0, 0, 0, d.x() * s.x(), d.x() * s.y(), d.x();
    a.row(r + 1) << 0, 0, 0, -s.x(), -s.y(), -1, d.y() * s.x(), d.y() * s.y(), d.y();
  }
  // Pad to a square system so the full right singular basis is available.
  if (a.rows() < 9) {
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(9, 9);
    padded.topRows(a.rows()) = a;
    a = padded;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  if (sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::kEstimation, "degenerate configuration: rank-deficient system");
  }
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Mat3 hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Mat3 h = td.inverse() * hn * ts;
  if (std::abs(h(2, 2)) > 1e-15) {
    h /= h(2, 2);
  } else {
    h /= h.norm();
  }
  const double scale = h.norm();
  if (std::abs(h.determinant()) <= 1e-9 * scale * scale * scale) {
    throw Error(ErrorCode::kEstimation, "degenerate configuration: singular homography");
  }

  HomographyFit fit{from_eigen(h), 0.0};
  for (size_t i = 0; i < n; ++i) {
    const Point2 p = project(fit.h, src[i]);
    fit.mean_reprojection_error += std::hypot(p.x - dst[i].x, p.y - dst[i].y);
  }
  fit.mean_reprojection_error /= n;
  return fit;
}

void SurfaceManifest::validate() const {
  if (images.size() < 2) {
    throw Error(ErrorCode::kValidation, "surface '" + surface_id + "' needs >= 2 images");
  }
  std::set<std::string> ids;
  bool has_reference = false;
  for (const ManifestImage& im : images) {
    if (!ids.insert(im.image_id).second) {
      throw Error(ErrorCode::kValidation, "duplicate image id '" + im.image_id + "'");
    }
    if (im.correspondences.size() < 4) {
      throw Error(ErrorCode::kValidation,
                  "image '" + im.image_id + "' needs >= 4 fiducial correspondences");
    }
    has_reference = has_reference || im.image_id == reference_image_id;
  }
  if (!has_reference) {
    throw Error(ErrorCode::kValidation,
                "reference image '" + reference_image_id + "' is not part of the surface");
  }
}

void to_json(nlohmann::json& j, const SurfaceManifest& m) {
  j = nlohmann::json{{"surface_id", m.surface_id},
                     {"reference_image_id", m.reference_image_id},
                     {"images", nlohmann::json::array()}};
  for (const ManifestImage& im : m.images) {
    nlohmann::json e{{"image_id", im.image_id}, {"path", im.path}};
    if (im.width > 0) e["width"] = im.width;
    if (im.height > 0) e["height"] = im.height;
    e["correspondences"] = nlohmann::json::array();
    for (const Correspondence& c : im.correspondences) {
      e["correspondences"].push_back(
          {{"image", {c.image.x, c.image.y}}, {"reference", {c.reference.x, c.reference.y}}});
    }
    if (im.crop) e["crop"] = {im.crop->x, im.crop->y, im.crop->width, im.crop->height};
    j["images"].push_back(std::move(e));
  }
}

void from_json(const nlohmann::json& j, SurfaceManifest& m) {
  static const std::set<std::string> kImageKeys = {"image_id", "path", "width", "height",
                                                   "correspondences", "crop"};
  j.at("surface_id").get_to(m.surface_id);
  j.at("reference_image_id").get_to(m.reference_image_id);
  m.images.clear();
  for (const auto& e : j.at("images")) {
    for (const auto& [key, value] : e.items()) {
      if (!kImageKeys.contains(key)) {
        throw Error(ErrorCode::kValidation, "unknown manifest image key '" + key + "'");
      }
    }
    ManifestImage im;
    e.at("image_id").get_to(im.image_id);
    im.path = e.value("path", std::string{});
    im.width = e.value("width", 0u);
    im.height = e.value("height", 0u);
    for (const auto& c : e.at("correspondences")) {
      const auto& a = c.at("image");
      const auto& b = c.at("reference");
      im.correspondences.push_back(
          {{a.at(0).get<double>(), a.at(1).get<double>()}, {b.at(0).get<double>(), b.at(1).get<double>()}});
    }
    if (e.contains("crop")) {
      const auto& c = e.at("crop");
      im.crop = CropRect{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>(),
                         c.at(3).get<double>()};
    }
    m.images.push_back(std::move(im));
  }
}

SurfaceManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open manifest " + path.string());
  try {
    SurfaceManifest m = nlohmann::json::parse(in).get<SurfaceManifest>();
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "bad manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const SurfaceManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest " + path.string());
  out << nlohmann::json(m).dump(2) << '\n';
}

size_t AlignedKeypoint::visible_count() const {
  return static_cast<size_t>(
      std::count_if(positions.begin(), positions.end(), [](const auto& p) { return p.has_value(); }));
}

AlignedKeypointSet consolidate_keypoints(const SurfaceManifest& manifest,
                                         std::span<const std::vector<Keypoint>> per_image,
                                         const ConsolidationParams& params) {
  manifest.validate();
  if (!(params.min_spacing > 0.0)) throw Error(ErrorCode::kParameter, "min_spacing must be > 0");
  if (per_image.size() != manifest.images.size()) {
    throw Error(ErrorCode::kParameter, "keypoint lists do not match manifest images");
  }
  AlignedKeypointSet out;
  out.surface_id = manifest.surface_id;
  for (const ManifestImage& im : manifest.images) {
    out.image_ids.push_back(im.image_id);
    try {
      out.to_reference.push_back(estimate_homography(im.correspondences).h);
    } catch (const Error& e) {
      throw Error(e.code(), "homography failed for image '" + im.image_id + "': " + e.what());
    }
  }

  struct Candidate {
    Point2 p;
    float response;
  };
  std::vector<Candidate> pool;
  for (size_t i = 0; i < per_image.size(); ++i) {
    for (const Keypoint& k : per_image[i]) {
      try {
        pool.push_back({project(out.to_reference[i], {k.x, k.y}), k.response});
      } catch (const Error&) {
        // Keypoints on the horizon line cannot be placed in the reference frame.
      }
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.p.y != b.p.y) return a.p.y < b.p.y;
    return a.p.x < b.p.x;
  });

  // Greedy thinning; a hash grid with cell = min_spacing limits each check to
  // the 3x3 neighbouring cells.
  const double spacing = params.min_spacing;
  const double spacing2 = spacing * spacing;
  auto cell_of = [&](const Point2& p) {
    return std::pair<long, long>{static_cast<long>(std::floor(p.x / spacing)),
                                 static_cast<long>(std::floor(p.y / spacing))};
  };
  auto key = [](long cx, long cy) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(cx)) << 32) | static_cast<uint32_t>(cy);
  };
  std::unordered_map<uint64_t, std::vector<size_t>> grid;
  std::vector<Candidate> accepted;
  for (const Candidate& c : pool) {
    const auto [cx, cy] = cell_of(c.p);
    bool ok = true;
    for (long dy = -1; dy <= 1 && ok; ++dy) {
      for (long dx = -1; dx <= 1 && ok; ++dx) {
        const auto it = grid.find(key(cx + dx, cy + dy));
        if (it == grid.end()) continue;
        for (size_t idx : it->second) {
          const double ex = accepted[idx].p.x - c.p.x;
          const double ey = accepted[idx].p.y - c.p.y;
          if (ex * ex + ey * ey < spacing2) {
            ok = false;
            break;
          }
        }
      }
    }
    if (!ok) continue;
    grid[key(cx, cy)].push_back(accepted.size());
    accepted.push_back(c);
  }

  std::vector<Homography> from_reference;
  for (const Homography& h : out.to_reference) from_reference.push_back(h.inverse());
  for (const Candidate& c : accepted) {
    AlignedKeypoint ak;
    ak.reference = c.p;
    ak.response = c.response;
    for (size_t i = 0; i < manifest.images.size(); ++i) {
      const ManifestImage& im = manifest.images[i];
      std::optional<Point2> pos;
      try {
        const Point2 p = project(from_reference[i], c.p);
        const auto dw = static_cast<uint32_t>(std::max(1L, std::lround(im.width / double(params.phi))));
        const auto dh = static_cast<uint32_t>(std::max(1L, std::lround(im.height / double(params.phi))));
        bool fits = im.width > 0 && im.height > 0 &&
                    patch_fits(dw, dh, static_cast<float>(p.x / params.phi),
                               static_cast<float>(p.y / params.phi));
        if (fits && im.crop) {
          const double half = kPatchSize / 2.0 * params.phi;
          fits = p.x - half >= im.crop->x && p.y - half >= im.crop->y &&
                 p.x + half <= im.crop->x + im.crop->width &&
                 p.y + half <= im.crop->y + im.crop->height;
        }
        if (fits) pos = p;
      } catch (const Error&) {
      }
      ak.positions.push_back(pos);
    }
    out.keypoints.push_back(std::move(ak));
  }
  return out;
}

PatchArchive build_patch_dataset(const SurfaceManifest& manifest, const AlignedKeypointSet& aligned,
                                 std::span<const Image> images, float phi) {
  if (images.size() != manifest.images.size() || aligned.image_ids.size() != images.size()) {
    throw Error(ErrorCode::kParameter, "aligned set does not match manifest images");
  }
  std::vector<Image> downsized;
  downsized.reserve(images.size());
  for (const Image& im : images) downsized.push_back(downsample(im, phi));

  PatchArchive archive;
  for (size_t k = 0; k < aligned.keypoints.size(); ++k) {
    const AlignedKeypoint& ak = aligned.keypoints[k];
    if (ak.visible_count() < 2) continue;
    for (size_t i = 0; i < ak.positions.size(); ++i) {
      if (!ak.positions[i]) continue;
      Keypoint kp;
      kp.x = static_cast<float>(ak.positions[i]->x / phi);
      kp.y = static_cast<float>(ak.positions[i]->y / phi);
      Patch patch = crop_patch(downsized[i], kp, manifest.images[i].image_id);
      archive.records.push_back({manifest.surface_id, static_cast<uint32_t>(k),
                                 manifest.images[i].image_id, kp.x, kp.y, std::move(patch.pixels)});
    }
  }
  return archive;
}

void write_patch_archive(const PatchArchive& archive, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::app);
  if (!manifest) throw Error(ErrorCode::kIo, "cannot write patch manifest in " + out_dir.string());
  for (const PatchRecord& r : archive.records) {
    const fs::path rel = fs::path(r.surface_id) / std::to_string(r.keypoint_id) / (r.image_id + ".png");
    fs::create_directories((out_dir / rel).parent_path());
    write_image(r.pixels, out_dir / rel);
    nlohmann::json row{{"surface_id", r.surface_id}, {"keypoint_id", r.keypoint_id},
                       {"image_id", r.image_id},     {"x", r.x},
                       {"y", r.y},                   {"path", rel.generic_string()}};
    manifest << row.dump() << '\n';
  }
}

std::vector<SurfaceBuildResult> build_patch_datasets(std::span<const SurfaceManifest> manifests,
                                                     const std::filesystem::path& base_dir,
                                                     const DatasetBuildConfig& cfg,
                                                     const std::filesystem::path& out_dir) {
  std::vector<SurfaceBuildResult> results(manifests.size());
  std::vector<PatchArchive> archives(manifests.size());
  const auto n = static_cast<std::ptrdiff_t>(manifests.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    SurfaceBuildResult& res = results[s];
    SurfaceManifest manifest = manifests[s];
    res.surface_id = manifest.surface_id;
    try {
      std::vector<Image> images;
      std::vector<std::vector<Keypoint>> kps;
      for (ManifestImage& im : manifest.images) {
        const std::filesystem::path p =
            std::filesystem::path(im.path).is_absolute() ? std::filesystem::path(im.path) : base_dir / im.path;
        images.push_back(read_image(p));
        im.width = images.back().width();
        im.height = images.back().height();
        std::vector<Keypoint> found =
            to_original_frame(detect(images.back(), cfg.detector), cfg.detector.phi);
        if (im.crop) {
          const CropRect c = *im.crop;
          std::erase_if(found, [&](const Keypoint& k) {
            return k.x < c.x || k.y < c.y || k.x >= c.x + c.width || k.y >= c.y + c.height;
          });
        }
        kps.push_back(std::move(found));
      }
      ConsolidationParams cp = cfg.consolidation;
      cp.phi = cfg.detector.phi;
      const AlignedKeypointSet aligned = consolidate_keypoints(manifest, kps, cp);
      res.image_ids = aligned.image_ids;
      res.homographies = aligned.to_reference;
      archives[s] = build_patch_dataset(manifest, aligned, images, cp.phi);
      res.keypoints = static_cast<size_t>(std::count_if(
          aligned.keypoints.begin(), aligned.keypoints.end(),
          [](const AlignedKeypoint& k) { return k.visible_count() >= 2; }));
      res.patches = archives[s].records.size();
    } catch (const std::exception& e) {
      res.error = e.what();
      archives[s].records.clear();
    }
  }
  // Written serially so the manifest row order is deterministic.
  for (const PatchArchive& a : archives) write_patch_archive(a, out_dir);
  return results;
}

nlohmann::json homographies_json(const SurfaceBuildResult& r) {
  nlohmann::json j = nlohmann::json::object();
  for (size_t i = 0; i < r.image_ids.size() && i < r.homographies.size(); ++i) {
    j[r.image_ids[i]] = r.homographies[i].matrix();
  }
  return j;
}

}  // namespace barkid
