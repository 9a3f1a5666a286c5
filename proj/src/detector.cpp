#include "barkid/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "barkid/error.hpp"

namespace barkid {
namespace {

constexpr float kBaseSigma = 1.6f;
constexpr float kAssumedInputBlur = 0.5f;
constexpr int kOrientationBins = 36;
constexpr float kPeakRatio = 0.8f;
constexpr int kMaxRefineSteps = 5;
constexpr int kMinOctaveSize = 8;
constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;

struct Octave {
  std::vector<FloatImage> gauss;  // scales_per_octave + 3 levels
  std::vector<FloatImage> dog;    // scales_per_octave + 2 levels
};

FloatImage decimate2(const FloatImage& img) {
  FloatImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out(x, y) = img(2 * x, 2 * y);
  }
  return out;
}

std::vector<Octave> build_scale_space(const FloatImage& img, int octaves, int s) {
  std::vector<Octave> pyramid;
  const int levels = s + 3;
  std::vector<float> incr(levels, 0.0f);
  const float k = std::pow(2.0f, 1.0f / s);
  for (int i = 1; i < levels; ++i) {
    const float prev = kBaseSigma * std::pow(k, float(i - 1));
    const float total = prev * k;
    incr[i] = std::sqrt(total * total - prev * prev);
  }
  FloatImage base = gaussian_blur(
      img, std::sqrt(kBaseSigma * kBaseSigma - kAssumedInputBlur * kAssumedInputBlur));
  for (int o = 0; o < octaves; ++o) {
    if (std::min(base.width, base.height) < kMinOctaveSize) break;
    Octave oct;
    oct.gauss.reserve(levels);
    oct.gauss.push_back(std::move(base));
    for (int i = 1; i < levels; ++i) {
      oct.gauss.push_back(gaussian_blur(oct.gauss.back(), incr[i]));
    }
    for (int i = 0; i + 1 < levels; ++i) {
      FloatImage d(oct.gauss[i].width, oct.gauss[i].height);
      for (size_t p = 0; p < d.pixels.size(); ++p) {
        d.pixels[p] = oct.gauss[i + 1].pixels[p] - oct.gauss[i].pixels[p];
      }
      oct.dog.push_back(std::move(d));
    }
    base = decimate2(oct.gauss[s]);
    pyramid.push_back(std::move(oct));
  }
  return pyramid;
}

bool is_extremum(const std::vector<FloatImage>& dog, int s, int x, int y) {
  const float v = dog[s](x, y);
  const bool is_max = v > 0.0f;
  for (int ds = -1; ds <= 1; ++ds) {
    const FloatImage& layer = dog[s + ds];
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (ds == 0 && dx == 0 && dy == 0) continue;
        const float n = layer(x + dx, y + dy);
        if (is_max ? n >= v : n <= v) return false;
      }
    }
  }
  return true;
}

struct Refined {
  int x, y, s;
  float ox, oy, os;
  float value;
};

// Quadratic fit of the DoG around a discrete extremum. Returns false if the
// fit drifts out of the octave or fails the contrast/edge tests.
bool refine(const std::vector<FloatImage>& dog, int s_count, int x, int y, int s,
            const DetectorConfig& cfg, Refined& out) {
  const int w = dog[0].width;
  const int h = dog[0].height;
  float ox = 0, oy = 0, os = 0;
  int step = 0;
  for (; step < kMaxRefineSteps; ++step) {
    const FloatImage& c = dog[s];
    const FloatImage& p = dog[s - 1];
    const FloatImage& n = dog[s + 1];
    const float v = c(x, y);
    const float gx = 0.5f * (c(x + 1, y) - c(x - 1, y));
    const float gy = 0.5f * (c(x, y + 1) - c(x, y - 1));
    const float gs = 0.5f * (n(x, y) - p(x, y));
    const float hxx = c(x + 1, y) + c(x - 1, y) - 2 * v;
    const float hyy = c(x, y + 1) + c(x, y - 1) - 2 * v;
    const float hss = n(x, y) + p(x, y) - 2 * v;
    const float hxy = 0.25f * (c(x + 1, y + 1) - c(x - 1, y + 1) - c(x + 1, y - 1) + c(x - 1, y - 1));
    const float hxs = 0.25f * (n(x + 1, y) - n(x - 1, y) - p(x + 1, y) + p(x - 1, y));
    const float hys = 0.25f * (n(x, y + 1) - n(x, y - 1) - p(x, y + 1) + p(x, y - 1));
    // Solve H * off = -g by Cramer's rule.
    const double a = hxx, b = hxy, cc = hxs, d = hyy, e = hys, f = hss;
    const double det = a * (d * f - e * e) - b * (b * f - e * cc) + cc * (b * e - d * cc);
    if (std::abs(det) < 1e-12) return false;
    const double rx = -gx, ry = -gy, rs = -gs;
    ox = static_cast<float>((rx * (d * f - e * e) - b * (ry * f - e * rs) + cc * (ry * e - d * rs)) / det);
    oy = static_cast<float>((a * (ry * f - e * rs) - rx * (b * f - e * cc) + cc * (b * rs - ry * cc)) / det);
    os = static_cast<float>((a * (d * rs - ry * e) - b * (b * rs - ry * cc) + rx * (b * e - d * cc)) / det);
    if (std::abs(ox) < 0.5f && std::abs(oy) < 0.5f && std::abs(os) < 0.5f) {
      out.value = v + 0.5f * (gx * ox + gy * oy + gs * os);
      break;
    }
    x += static_cast<int>(std::lround(ox));
    y += static_cast<int>(std::lround(oy));
    s += static_cast<int>(std::lround(os));
    if (s < 1 || s > s_count || x < 1 || x >= w - 1 || y < 1 || y >= h - 1) return false;
  }
  if (step == kMaxRefineSteps) return false;
  if (std::abs(out.value) < cfg.contrast_threshold) return false;

  const FloatImage& c = dog[s];
  const float v = c(x, y);
  const float dxx = c(x + 1, y) + c(x - 1, y) - 2 * v;
  const float dyy = c(x, y + 1) + c(x, y - 1) - 2 * v;
  const float dxy = 0.25f * (c(x + 1, y + 1) - c(x - 1, y + 1) - c(x + 1, y - 1) + c(x - 1, y - 1));
  const float tr = dxx + dyy;
  const float det = dxx * dyy - dxy * dxy;
  const float r = cfg.edge_ratio_threshold;
  if (det <= 0.0f || tr * tr * r >= (r + 1) * (r + 1) * det) return false;

  out.x = x;
  out.y = y;
  out.s = s;
  out.ox = ox;
  out.oy = oy;
  out.os = os;
  return true;
}

// Dominant orientations of the gradient histogram around (x, y) in octave
// coordinates; one entry per peak >= 0.8 * max.
std::vector<float> orientations(const FloatImage& g, float x, float y, float sigma_oct) {
  std::array<float, kOrientationBins> hist{};
  const int radius = std::max(1, static_cast<int>(std::lround(3.0f * sigma_oct)));
  const float weight_sigma = 1.5f * sigma_oct;
  const float denom = 2.0f * weight_sigma * weight_sigma;
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  for (int dy = -radius; dy <= radius; ++dy) {
    const int py = cy + dy;
    if (py <= 0 || py >= g.height - 1) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = cx + dx;
      if (px <= 0 || px >= g.width - 1) continue;
      if (dx * dx + dy * dy > radius * radius) continue;
      const float gx = 0.5f * (g(px + 1, py) - g(px - 1, py));
      const float gy = 0.5f * (g(px, py + 1) - g(px, py - 1));
      const float mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0f) continue;
      float theta = std::atan2(gy, gx);
      if (theta < 0.0f) theta += kTwoPi;
      const float w = std::exp(-float(dx * dx + dy * dy) / denom);
      int bin = static_cast<int>(std::floor(theta * kOrientationBins / kTwoPi));
      bin = (bin % kOrientationBins + kOrientationBins) % kOrientationBins;
      hist[bin] += w * mag;
    }
  }
  // [1 4 6 4 1] circular smoothing.
  std::array<float, kOrientationBins> smooth{};
  for (int i = 0; i < kOrientationBins; ++i) {
    auto at = [&](int j) { return hist[(j + kOrientationBins) % kOrientationBins]; };
    smooth[i] = (at(i - 2) + at(i + 2)) * (1.0f / 16) + (at(i - 1) + at(i + 1)) * (4.0f / 16) +
                at(i) * (6.0f / 16);
  }
  const float max_v = *std::max_element(smooth.begin(), smooth.end());
  std::vector<float> result;
  if (max_v <= 0.0f) {
    result.push_back(0.0f);
    return result;
  }
  for (int i = 0; i < kOrientationBins; ++i) {
    const float l = smooth[(i + kOrientationBins - 1) % kOrientationBins];
    const float r = smooth[(i + 1) % kOrientationBins];
    const float c = smooth[i];
    if (c > l && c > r && c >= kPeakRatio * max_v) {
      const float offset = 0.5f * (l - r) / (l - 2 * c + r);
      float theta = (i + 0.5f + offset) * kTwoPi / kOrientationBins;
      theta = std::fmod(theta + kTwoPi, kTwoPi);
      if (theta >= kTwoPi) theta = 0.0f;
      result.push_back(theta);
    }
  }
  return result;
}

bool keypoint_order(const Keypoint& a, const Keypoint& b) {
  if (a.response != b.response) return a.response > b.response;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  if (a.scale != b.scale) return a.scale < b.scale;
  return a.orientation < b.orientation;
}

}  // namespace

void DetectorConfig::validate() const {
  if (gamma < 1) throw Error(ErrorCode::kParameter, "gamma must be >= 1");
  if (!(phi >= 1.0f)) throw Error(ErrorCode::kParameter, "phi must be >= 1");
  if (!(sigma_blur >= 0.0f)) throw Error(ErrorCode::kParameter, "sigma_blur must be >= 0");
  if (octaves < 1 || scales_per_octave < 1) {
    throw Error(ErrorCode::kParameter, "octaves and scales_per_octave must be >= 1");
  }
  if (!(contrast_threshold >= 0.0f) || !(edge_ratio_threshold >= 1.0f)) {
    throw Error(ErrorCode::kParameter, "invalid contrast or edge threshold");
  }
}

std::string DetectorConfig::canonical() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "gamma=%d;phi=%.9g;sigma=%.9g;octaves=%d;scales=%d;contrast=%.9g;edge=%.9g",
                gamma, phi, sigma_blur, octaves, scales_per_octave, contrast_threshold,
                edge_ratio_threshold);
  return buf;
}

FloatImage detection_image(const Image& img, const DetectorConfig& cfg) {
  cfg.validate();
  FloatImage f = downsample(to_float(img, /*normalize=*/true), cfg.phi);
  return gaussian_blur(f, cfg.sigma_blur);
}

std::vector<Keypoint> detect_prepared(const FloatImage& prepared, const DetectorConfig& cfg) {
  cfg.validate();
  std::vector<Keypoint> kps;
  if (std::min(prepared.width, prepared.height) < kMinOctaveSize) return kps;

  const int s_count = cfg.scales_per_octave;
  const std::vector<Octave> pyramid = build_scale_space(prepared, cfg.octaves, s_count);
  const float prefilter = 0.5f * cfg.contrast_threshold;
  for (size_t o = 0; o < pyramid.size(); ++o) {
    const Octave& oct = pyramid[o];
    const int w = oct.dog[0].width;
    const int h = oct.dog[0].height;
    const float octave_scale = std::ldexp(1.0f, static_cast<int>(o));
    for (int s = 1; s <= s_count; ++s) {
      for (int y = 1; y < h - 1; ++y) {
        for (int x = 1; x < w - 1; ++x) {
          if (std::abs(oct.dog[s](x, y)) < prefilter) continue;
          if (!is_extremum(oct.dog, s, x, y)) continue;
          Refined r{};
          if (!refine(oct.dog, s_count, x, y, s, cfg, r)) continue;
          const float xo = r.x + r.ox;
          const float yo = r.y + r.oy;
          const float sigma_oct = kBaseSigma * std::pow(2.0f, (r.s + r.os) / s_count);
          Keypoint kp;
          kp.x = std::clamp(xo * octave_scale, 0.0f, std::nextafter(float(prepared.width), 0.0f));
          kp.y = std::clamp(yo * octave_scale, 0.0f, std::nextafter(float(prepared.height), 0.0f));
          kp.scale = sigma_oct * octave_scale;
          kp.response = std::abs(r.value);
          for (float theta : orientations(oct.gauss[r.s], xo, yo, sigma_oct)) {
            kp.orientation = theta;
            kps.push_back(kp);
          }
        }
      }
    }
  }
  std::sort(kps.begin(), kps.end(), keypoint_order);
  if (kps.size() > static_cast<size_t>(cfg.gamma)) kps.resize(cfg.gamma);
  return kps;
}

std::vector<Keypoint> detect(const Image& img, const DetectorConfig& cfg) {
  return detect_prepared(detection_image(img, cfg), cfg);
}

std::vector<Keypoint> grid_fallback(uint32_t width, uint32_t height, int spacing) {
  if (spacing < 8) throw Error(ErrorCode::kParameter, "grid spacing must be >= 8");
  std::vector<Keypoint> kps;
  const float half = spacing / 2.0f;
  const float scale = spacing / 4.0f;
  if (width < static_cast<uint32_t>(spacing) || height < static_cast<uint32_t>(spacing)) {
    kps.push_back({width / 2.0f, height / 2.0f, scale, 0.0f, 0.0f});
    return kps;
  }
  for (float y = half; y < static_cast<float>(height); y += spacing) {
    for (float x = half; x < static_cast<float>(width); x += spacing) {
      kps.push_back({x, y, scale, 0.0f, 0.0f});
    }
  }
  return kps;
}

std::vector<Keypoint> to_original_frame(std::vector<Keypoint> kps, float phi) {
  for (Keypoint& k : kps) {
    k.x *= phi;
    k.y *= phi;
    k.scale *= phi;
  }
  return kps;
}

void write_keypoints_jsonl(std::ostream& out, const std::vector<Keypoint>& kps) {
  char buf[256];
  for (const Keypoint& k : kps) {
    std::snprintf(buf, sizeof(buf),
                  "{\"x\":%.6g,\"y\":%.6g,\"scale\":%.6g,\"orientation\":%.6g,\"response\":%.6g}\n",
                  k.x, k.y, k.scale, k.orientation, k.response);
    out << buf;
  }
}

std::vector<Keypoint> read_keypoints_jsonl(std::istream& in) {
  std::vector<Keypoint> kps;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      kps.push_back({j.at("x").get<float>(), j.at("y").get<float>(), j.at("scale").get<float>(),
                     j.at("orientation").get<float>(), j.at("response").get<float>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kFormat,
                  "bad keypoint record on line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return kps;
}

}  // namespace barkid
