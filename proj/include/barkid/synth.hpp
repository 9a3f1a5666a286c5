#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "barkid/image.hpp"
#include "barkid/metrics.hpp"
#include "barkid/registration.hpp"

namespace barkid {

struct SynthParams {
  uint64_t seed = 1;
  int surfaces = 20;
  int views_per_surface = 12;
  double warp_magnitude = 0.08;  // max corner displacement, fraction of the side
  double illum_jitter = 0.25;    // max relative gain / contrast / gamma change
  int size = 384;                // square views
  double noise_sigma = 2.0;      // additive noise, grey levels; off when both jitters are 0
  std::string prefix = "s";

  void validate() const;
};

struct SynthView {
  std::string image_id;
  std::string surface_id;
  Image image;
  Homography warp;  // texture frame -> view
};

struct SynthCorpus {
  std::vector<SynthView> views;
  std::vector<SurfaceManifest> manifests;  // one per surface; paths are images/<id>.png
  GroundTruth truth;
};

// Band-pass filtered seeded noise, mean 128.
Image synth_texture(uint64_t seed, int width, int height);

// Each view is the surface texture under a random corner-jitter homography with
// photometric jitter and noise. Correspondences are the texture corners.
SynthCorpus synth_corpus(const SynthParams& params);

// Single views of fresh surfaces; relevant to nothing.
std::vector<SynthView> synth_distractors(const SynthParams& params, int count);

// images/<id>.png, manifests/<surface>.json, ground_truth.json and
// corpus.json (image list with surface labels).
void write_corpus(const SynthCorpus& corpus, const std::vector<SynthView>& distractors,
                  const std::filesystem::path& dir);

struct CorpusEntry {
  std::string image_id;
  std::string surface_id;  // empty for unlabeled images
  std::filesystem::path path;
};
// Reads corpus.json written by write_corpus; paths are resolved against `dir`.
std::vector<CorpusEntry> read_corpus_list(const std::filesystem::path& dir);

}  // namespace barkid
