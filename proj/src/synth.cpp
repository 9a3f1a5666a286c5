#include "barkid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "barkid/error.hpp"
#include "barkid/image_io.hpp"

namespace barkid {
namespace {

constexpr double kPi = 3.14159265358979323846;

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// The standard distributions are not specified bit-for-bit across libraries.
struct Rng {
  std::mt19937_64 gen;
  explicit Rng(uint64_t seed) : gen(seed) {}
  double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() {
    const double u = std::max(uniform(), 1e-300);
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * uniform());
  }
};

// Difference of two blurs of white noise on a grid of the given size.
FloatImage band(Rng& rng, int w, int h) {
  FloatImage noise(w, h);
  for (float& v : noise.pixels) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const FloatImage fine = gaussian_blur(noise, 1.0f);
  const FloatImage coarse = gaussian_blur(noise, 2.0f);
  for (size_t i = 0; i < noise.pixels.size(); ++i) noise.pixels[i] = fine.pixels[i] - coarse.pixels[i];
  return noise;
}

std::string view_id(const std::string& prefix, int surface, int view) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%03d_v%02d", surface, view);
  return prefix + buf;
}

Homography corner_warp(Rng& rng, double magnitude, int size) {
  if (magnitude == 0.0) return Homography::identity();
  const double s = size;
  const double d = magnitude * s;
  std::vector<Correspondence> cs;
  for (const Point2 c : {Point2{0, 0}, Point2{s, 0}, Point2{s, s}, Point2{0, s}}) {
    cs.push_back({c, {c.x + rng.uniform(-d, d), c.y + rng.uniform(-d, d)}});
  }
  return estimate_homography(cs).h;
}

struct Texture {
  FloatImage canvas;
  int pad = 0;
};

Texture make_texture(uint64_t seed, int size, double magnitude) {
  Texture t;
  t.pad = static_cast<int>(std::ceil(2.0 * magnitude * size)) + 4;
  const int side = size + 2 * t.pad;
  t.canvas = to_float(synth_texture(seed, side, side));
  return t;
}

SynthView render(const Texture& tex, Rng& rng, const SynthParams& p, std::string id, std::string surface) {
  SynthView v;
  v.image_id = std::move(id);
  v.surface_id = std::move(surface);
  v.warp = corner_warp(rng, p.warp_magnitude, p.size);
  const Homography back = v.warp.inverse();
  const double j = p.illum_jitter;
  const double gain = rng.uniform(1.0 - j, 1.0 + j);
  const double contrast = rng.uniform(1.0 - j, 1.0 + j);
  const double gamma = rng.uniform(1.0 - j, 1.0 + j);
  const bool jittered = p.warp_magnitude > 0.0 || j > 0.0;
  const double noise = jittered ? p.noise_sigma : 0.0;

  Image img(static_cast<uint32_t>(p.size), static_cast<uint32_t>(p.size), 1);
  for (int y = 0; y < p.size; ++y) {
    for (int x = 0; x < p.size; ++x) {
      const Point2 t = project(back, {x + 0.5, y + 0.5});
      double value = tex.canvas.sample(static_cast<float>(t.x - 0.5 + tex.pad),
                                       static_cast<float>(t.y - 0.5 + tex.pad));
      if (j > 0.0) {
        double u = std::clamp(value / 255.0, 0.0, 1.0);
        u = std::pow(u, gamma);
        u = 0.5 + contrast * (u - 0.5);
        value = 255.0 * gain * u;
      }
      if (noise > 0.0) value += noise * rng.normal();
      img.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y)) =
          static_cast<uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  v.image = std::move(img);
  return v;
}

}  // namespace

void SynthParams::validate() const {
  if (surfaces < 2) throw Error(ErrorCode::kParameter, "surfaces must be >= 2");
  if (views_per_surface < 2) throw Error(ErrorCode::kParameter, "views_per_surface must be >= 2");
  if (!(warp_magnitude >= 0.0 && warp_magnitude < 0.25)) {
    throw Error(ErrorCode::kParameter, "warp_magnitude must be in [0, 0.25)");
  }
  if (!(illum_jitter >= 0.0 && illum_jitter < 1.0)) throw Error(ErrorCode::kParameter, "illum_jitter must be in [0, 1)");
  if (size < 32) throw Error(ErrorCode::kParameter, "size must be >= 32");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::kParameter, "noise_sigma must be >= 0");
}

Image synth_texture(uint64_t seed, int width, int height) {
  Rng rng(mix(seed, 0x7e47));
  FloatImage sum(width, height);
  // Octave bands, each made on a grid 2^b coarser and upsampled bilinearly.
  const double weights[] = {0.6, 1.0, 1.0, 0.8, 0.6};
  for (int b = 0; b < 5; ++b) {
    const int f = 1 << b;
    const int gw = width / f + 3;
    const int gh = height / f + 3;
    const FloatImage g = band(rng, gw, gh);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        sum(x, y) += static_cast<float>(weights[b]) * g.sample((x + 0.5f) / f - 0.5f + 1.0f, (y + 0.5f) / f - 0.5f + 1.0f);
      }
    }
  }
  double mean = 0.0, sq = 0.0;
  for (float v : sum.pixels) mean += v;
  mean /= static_cast<double>(sum.pixels.size());
  for (float v : sum.pixels) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(sum.pixels.size()));
  const double scale = sd > 0.0 ? 45.0 / sd : 0.0;
  Image img(static_cast<uint32_t>(width), static_cast<uint32_t>(height), 1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double v = 128.0 + (sum(x, y) - mean) * scale;
      img.at(static_cast<uint32_t>(x), static_cast<uint32_t>(y)) =
          static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return img;
}

SynthCorpus synth_corpus(const SynthParams& p) {
  p.validate();
  SynthCorpus corpus;
  corpus.views.resize(static_cast<size_t>(p.surfaces) * p.views_per_surface);
  corpus.manifests.resize(static_cast<size_t>(p.surfaces));
#pragma omp parallel for schedule(dynamic, 1)
  for (int s = 0; s < p.surfaces; ++s) {
    const std::string surface = p.prefix + "surf" + std::to_string(s);
    const Texture tex = make_texture(mix(p.seed, static_cast<uint64_t>(s)), p.size, p.warp_magnitude);
    SurfaceManifest& m = corpus.manifests[static_cast<size_t>(s)];
    m.surface_id = surface;
    for (int v = 0; v < p.views_per_surface; ++v) {
      Rng rng(mix(mix(p.seed, static_cast<uint64_t>(s)), 1000 + static_cast<uint64_t>(v)));
      SynthView view = render(tex, rng, p, view_id(p.prefix, s, v), surface);
      ManifestImage mi;
      mi.image_id = view.image_id;
      mi.path = "images/" + view.image_id + ".png";
      mi.width = view.image.width();
      mi.height = view.image.height();
      const double side = p.size;
      for (const Point2 c : {Point2{0, 0}, Point2{side, 0}, Point2{side, side}, Point2{0, side}}) {
        mi.correspondences.push_back({project(view.warp, c), c});
      }
      m.images.push_back(std::move(mi));
      corpus.views[static_cast<size_t>(s) * p.views_per_surface + v] = std::move(view);
    }
    m.reference_image_id = m.images.front().image_id;
  }
  std::vector<std::pair<std::string, std::string>> labels;
  for (const SynthView& v : corpus.views) labels.emplace_back(v.image_id, v.surface_id);
  corpus.truth = GroundTruth::from_labels(labels);
  return corpus;
}

std::vector<SynthView> synth_distractors(const SynthParams& p, int count) {
  if (count < 0) throw Error(ErrorCode::kParameter, "distractor count must be >= 0");
  std::vector<SynthView> out(static_cast<size_t>(count));
  const uint64_t base = mix(p.seed, 0xd157ULL);
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < count; ++i) {
    const uint64_t s = mix(base, static_cast<uint64_t>(i));
    const Texture tex = make_texture(s, p.size, p.warp_magnitude);
    Rng rng(mix(s, 1));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "d%05d", i);
    out[static_cast<size_t>(i)] = render(tex, rng, p, p.prefix + buf, p.prefix + buf);
  }
  return out;
}

void write_corpus(const SynthCorpus& corpus, const std::vector<SynthView>& distractors,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "manifests");
  nlohmann::json list = nlohmann::json::array();
  auto emit = [&](const SynthView& v, bool labeled) {
    const std::string rel = "images/" + v.image_id + ".png";
    write_image(v.image, dir / rel);
    list.push_back({{"image_id", v.image_id}, {"surface_id", labeled ? v.surface_id : ""}, {"path", rel}});
  };
  for (const SynthView& v : corpus.views) emit(v, true);
  for (const SynthView& v : distractors) emit(v, false);
  for (const SurfaceManifest& m : corpus.manifests) write_manifest(m, dir / "manifests" / (m.surface_id + ".json"));
  save_ground_truth(corpus.truth, dir / "ground_truth.json");
  std::ofstream out(dir / "corpus.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (dir / "corpus.json").string());
  out << nlohmann::json{{"images", list}}.dump(1) << '\n';
}

std::vector<CorpusEntry> read_corpus_list(const std::filesystem::path& dir) {
  const std::filesystem::path file = std::filesystem::is_directory(dir) ? dir / "corpus.json" : dir;
  const std::filesystem::path base = file.parent_path();
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + file.string());
  std::vector<CorpusEntry> out;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& e : j.at("images")) {
      CorpusEntry c;
      c.image_id = e.at("image_id").get<std::string>();
      c.surface_id = e.value("surface_id", std::string());
      const std::filesystem::path p = e.at("path").get<std::string>();
      c.path = p.is_absolute() ? p : base / p;
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "bad corpus list " + file.string() + ": " + e.what());
  }
  return out;
}

}  // namespace barkid
