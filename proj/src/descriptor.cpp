#include "barkid/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "barkid/binary_io.hpp"
#include "barkid/error.hpp"

namespace barkid {
namespace {

constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;
constexpr float kBaseScale = 1.6f;
constexpr int kCells = 4;
constexpr int kOriBins = 8;
constexpr double kClamp = 0.2;
constexpr int kMaxLevels = 6;
constexpr uint32_t kDescriptorFileVersion = 1;

FloatImage decimate2(const FloatImage& img) {
  FloatImage out(std::max(1, img.width / 2), std::max(1, img.height / 2));
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out(x, y) = img(2 * x, 2 * y);
  }
  return out;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Descriptor Descriptor::from_raw(std::span<const double> raw) {
  Descriptor d;
  std::array<double, kDescriptorDim> v{};
  std::copy_n(raw.begin(), kDescriptorDim, v.begin());
  double n = l2(v);
  if (!(n > 1e-12)) {
    d.degenerate = true;
    return d;
  }
  for (double& x : v) x = std::min(x / n, kClamp);
  n = l2(v);
  for (int i = 0; i < kDescriptorDim; ++i) d.values[i] = static_cast<float>(v[i] / n);
  return d;
}

double Descriptor::norm() const {
  double s = 0.0;
  for (float x : values) s += double(x) * x;
  return std::sqrt(s);
}

BuiltinDescriber::BuiltinDescriber(const FloatImage& blurred) {
  FloatImage level = blurred;
  for (int i = 0; i < kMaxLevels; ++i) {
    GradientField g = gradients(level);
    levels_.push_back({level, std::move(g)});
    if (std::min(level.width, level.height) < 32) break;
    level = decimate2(gaussian_blur(level, 1.0f));
  }
}

Descriptor BuiltinDescriber::describe(const Keypoint& kp) const {
  // Window of 16 px at the base scale, growing with the keypoint scale.
  const float window = 16.0f * kp.scale / kBaseScale;
  int o = 0;
  if (window >= 32.0f) o = static_cast<int>(std::floor(std::log2(window / 16.0f)));
  o = std::clamp(o, 0, static_cast<int>(levels_.size()) - 1);
  const Level& lv = levels_[o];
  const float f = std::ldexp(1.0f, -o);
  const float x = kp.x * f;
  const float y = kp.y * f;
  const float win = window * f;
  const float cell = win / kCells;
  const float half = win / 2.0f;
  const float weight_denom = 2.0f * half * half;
  const int radius = static_cast<int>(std::ceil(half * std::numbers::sqrt2_v<float>)) + 1;
  const float c = std::cos(kp.orientation);
  const float s = std::sin(kp.orientation);
  const int cx = static_cast<int>(std::lround(x));
  const int cy = static_cast<int>(std::lround(y));
  const FloatImage& img = lv.image;

  std::array<double, kDescriptorDim> hist{};
  for (int py = cy - radius; py <= cy + radius; ++py) {
    for (int px = cx - radius; px <= cx + radius; ++px) {
      const float dx = px - x;
      const float dy = py - y;
      const float u = (c * dx + s * dy) / cell;
      const float v = (-s * dx + c * dy) / cell;
      const float cb = u + 1.5f;
      const float rb = v + 1.5f;
      if (cb <= -1.0f || cb >= kCells || rb <= -1.0f || rb >= kCells) continue;

      float mag;
      float theta;
      if (px >= 0 && py >= 0 && px < img.width && py < img.height) {
        mag = lv.grad.magnitude(px, py);
        theta = lv.grad.orientation(px, py);
      } else {
        // Gradient of the border-replicated extension.
        const float gx = 0.5f * (img.clamped(px + 1, py) - img.clamped(px - 1, py));
        const float gy = 0.5f * (img.clamped(px, py + 1) - img.clamped(px, py - 1));
        mag = std::sqrt(gx * gx + gy * gy);
        theta = std::atan2(gy, gx);
      }
      if (mag == 0.0f) continue;
      float rel = std::fmod(theta - kp.orientation, kTwoPi);
      if (rel < 0.0f) rel += kTwoPi;
      const float ob = rel * kOriBins / kTwoPi;
      const double w = std::exp(-(dx * dx + dy * dy) / weight_denom) * mag;

      const int r0 = static_cast<int>(std::floor(rb));
      const int c0 = static_cast<int>(std::floor(cb));
      const int o0 = static_cast<int>(std::floor(ob));
      const float fr = rb - r0;
      const float fc = cb - c0;
      const float fo = ob - o0;
      for (int dr = 0; dr <= 1; ++dr) {
        const int r = r0 + dr;
        if (r < 0 || r >= kCells) continue;
        const double wr = w * (dr ? fr : 1.0f - fr);
        for (int dc = 0; dc <= 1; ++dc) {
          const int cc = c0 + dc;
          if (cc < 0 || cc >= kCells) continue;
          const double wc = wr * (dc ? fc : 1.0f - fc);
          for (int d0 = 0; d0 <= 1; ++d0) {
            const int ob_i = (o0 + d0) % kOriBins;
            hist[(r * kCells + cc) * kOriBins + ob_i] += wc * (d0 ? fo : 1.0f - fo);
          }
        }
      }
    }
  }
  return Descriptor::from_raw(hist);
}

Descriptor describe_builtin(const FloatImage& blurred, const Keypoint& kp) {
  return BuiltinDescriber(blurred).describe(kp);
}

Patch crop_patch(const Image& unblurred, const Keypoint& kp, std::string image_id) {
  const int cx = static_cast<int>(std::lround(kp.x));
  const int cy = static_cast<int>(std::lround(kp.y));
  const int x0 = cx - kPatchSize / 2;
  const int y0 = cy - kPatchSize / 2;
  const int w = static_cast<int>(unblurred.width());
  const int h = static_cast<int>(unblurred.height());
  Image out(kPatchSize, kPatchSize, unblurred.channels());
  for (int y = 0; y < kPatchSize; ++y) {
    const auto sy = static_cast<uint32_t>(std::clamp(y0 + y, 0, h - 1));
    for (int x = 0; x < kPatchSize; ++x) {
      const auto sx = static_cast<uint32_t>(std::clamp(x0 + x, 0, w - 1));
      for (uint32_t ch = 0; ch < unblurred.channels(); ++ch) {
        out.at(x, y, ch) = unblurred.at(sx, sy, ch);
      }
    }
  }
  return {std::move(out), kp, std::move(image_id)};
}

bool patch_fits(uint32_t width, uint32_t height, float x, float y) {
  const long cx = std::lround(x);
  const long cy = std::lround(y);
  return cx - kPatchSize / 2 >= 0 && cy - kPatchSize / 2 >= 0 &&
         cx + kPatchSize / 2 <= static_cast<long>(width) &&
         cy + kPatchSize / 2 <= static_cast<long>(height);
}

DescriptorProvider DescriptorProvider::builtin() { return {}; }

DescriptorProvider DescriptorProvider::external(std::vector<DescriptorRecord> records) {
  auto table = std::make_shared<Table>();
  for (size_t i = 0; i < records.size(); ++i) {
    auto& slot = (*table)[records[i].image_id];
    if (!slot.emplace(records[i].keypoint_index, records[i].descriptor).second) {
      throw Error(ErrorCode::kValidation,
                  "duplicate descriptor record " + std::to_string(i) + " for image '" +
                      records[i].image_id + "' keypoint " +
                      std::to_string(records[i].keypoint_index));
    }
  }
  DescriptorProvider p;
  p.kind_ = Kind::kExternal;
  p.table_ = std::move(table);
  return p;
}

size_t DescriptorProvider::size() const noexcept {
  if (!table_) return 0;
  size_t n = 0;
  for (const auto& [id, m] : *table_) n += m.size();
  return n;
}

const Descriptor* DescriptorProvider::lookup(std::string_view image_id,
                                             uint32_t keypoint_index) const {
  if (!table_) return nullptr;
  const auto it = table_->find(std::string(image_id));
  if (it == table_->end()) return nullptr;
  const auto jt = it->second.find(keypoint_index);
  return jt == it->second.end() ? nullptr : &jt->second;
}

std::vector<Descriptor> DescriptorProvider::describe(std::string_view image_id,
                                                     const FloatImage& blurred,
                                                     std::span<const Keypoint> keypoints) const {
  std::vector<Descriptor> out;
  out.reserve(keypoints.size());
  if (kind_ == Kind::kBuiltin) {
    if (keypoints.empty()) return out;
    const BuiltinDescriber describer(blurred);
    for (const Keypoint& kp : keypoints) out.push_back(describer.describe(kp));
    return out;
  }
  for (size_t i = 0; i < keypoints.size(); ++i) {
    const Descriptor* d = lookup(image_id, static_cast<uint32_t>(i));
    if (d == nullptr) {
      throw Error(ErrorCode::kExtraction, "external descriptors missing image '" +
                                              std::string(image_id) + "' keypoint " +
                                              std::to_string(i));
    }
    out.push_back(*d);
  }
  return out;
}

void write_descriptor_file(const std::filesystem::path& path,
                           std::span<const DescriptorRecord> records) {
  ByteWriter w;
  w.magic("BKD1");
  w.u32(kDescriptorFileVersion);
  w.u32(kDescriptorDim);
  w.u64(records.size());
  for (const DescriptorRecord& r : records) {
    w.str16(r.image_id);
    w.u32(r.keypoint_index);
    for (float v : r.descriptor.values) w.f32(v);
  }
  w.save(path);
}

std::vector<DescriptorRecord> read_descriptor_file(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path, ErrorCode::kFormat);
  if (!r.expect_magic("BKD1")) throw Error(ErrorCode::kFormat, "bad descriptor file magic");
  const uint32_t version = r.u32();
  if (version != kDescriptorFileVersion) {
    throw Error(ErrorCode::kFormat, "unsupported descriptor file version " + std::to_string(version));
  }
  const uint32_t dim = r.u32();
  if (dim != kDescriptorDim) {
    throw Error(ErrorCode::kFormat, "descriptor dimension " + std::to_string(dim) + " != 128");
  }
  const uint64_t count = r.u64();
  std::vector<DescriptorRecord> records;
  records.reserve(static_cast<size_t>(std::min<uint64_t>(count, 1u << 20)));
  for (uint64_t i = 0; i < count; ++i) {
    DescriptorRecord rec;
    rec.image_id = r.str16();
    rec.keypoint_index = r.u32();
    bool all_zero = true;
    for (float& v : rec.descriptor.values) {
      v = r.f32();
      all_zero = all_zero && v == 0.0f;
    }
    rec.descriptor.degenerate = all_zero;
    if (!all_zero && !(std::abs(rec.descriptor.norm() - 1.0) <= 1e-3)) {
      throw Error(ErrorCode::kValidation,
                  "descriptor record " + std::to_string(i) + " is not unit-norm (norm " +
                      std::to_string(rec.descriptor.norm()) + ")");
    }
    records.push_back(std::move(rec));
  }
  if (!r.at_end()) throw Error(ErrorCode::kFormat, "trailing bytes in descriptor file");
  return records;
}

DescriptorProvider load_descriptor_file(const std::filesystem::path& path) {
  return DescriptorProvider::external(read_descriptor_file(path));
}

}  // namespace barkid
