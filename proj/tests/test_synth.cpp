#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "barkid/bench.hpp"
#include "barkid/error.hpp"
#include "barkid/report.hpp"
#include "barkid/synth.hpp"
#include "test_util.hpp"

using namespace barkid;
namespace fs = std::filesystem;

namespace {

SynthParams small_params() {
  SynthParams p;
  p.seed = 9;
  p.surfaces = 3;
  p.views_per_surface = 4;
  p.size = 128;
  return p;
}

}  // namespace

TEST(Synth, TextureStatistics) {
  const Image t = synth_texture(1, 256, 256);
  double m = 0, s = 0;
  for (uint8_t v : t.data()) m += v;
  m /= t.data().size();
  for (uint8_t v : t.data()) s += (v - m) * (v - m);
  s = std::sqrt(s / t.data().size());
  EXPECT_NEAR(m, 128, 3);
  EXPECT_NEAR(s, 45, 5);
  EXPECT_EQ(synth_texture(1, 256, 256).data().size(), t.data().size());
  EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), synth_texture(1, 256, 256).data().begin()));
  const Image u = synth_texture(2, 256, 256);
  EXPECT_FALSE(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
}

TEST(Synth, DeterministicCorpusAndGroundTruth) {
  const SynthCorpus a = synth_corpus(small_params());
  const SynthCorpus b = synth_corpus(small_params());
  ASSERT_EQ(a.views.size(), 12u);
  for (size_t i = 0; i < a.views.size(); ++i) {
    EXPECT_EQ(a.views[i].image_id, b.views[i].image_id);
    EXPECT_TRUE(std::equal(a.views[i].image.data().begin(), a.views[i].image.data().end(),
                           b.views[i].image.data().begin()));
  }
  EXPECT_EQ(a.manifests.size(), 3u);
  for (const SynthView& v : a.views) {
    const RelevantSet& rel = a.truth.of(v.image_id);
    EXPECT_EQ(rel.size(), 3u);
    EXPECT_EQ(rel.count(v.image_id), 0u);
    for (const std::string& r : rel) EXPECT_EQ(r.substr(0, 4), v.image_id.substr(0, 4));
  }
}

TEST(Synth, ZeroJitterViewsAreIdentical) {
  SynthParams p = small_params();
  p.warp_magnitude = 0;
  p.illum_jitter = 0;
  const SynthCorpus c = synth_corpus(p);
  for (size_t i = 1; i < 4; ++i) {
    EXPECT_TRUE(std::equal(c.views[0].image.data().begin(), c.views[0].image.data().end(),
                           c.views[i].image.data().begin()));
  }
}

TEST(Synth, CorrespondencesRecoverTheWarp) {
  const SynthCorpus c = synth_corpus(small_params());
  for (size_t s = 0; s < c.manifests.size(); ++s) {
    const SurfaceManifest& m = c.manifests[s];
    m.validate();
    for (size_t i = 0; i < m.images.size(); ++i) {
      const SynthView& v = c.views[s * 4 + i];
      ASSERT_EQ(m.images[i].image_id, v.image_id);
      const Homography hr = estimate_homography(m.images[i].correspondences).h;
      for (double x : {0.0, 40.0, 128.0}) {
        for (double y : {0.0, 77.0, 128.0}) {
          const Point2 back = project(hr, project(v.warp, {x, y}));
          EXPECT_NEAR(back.x, x, 1e-6);
          EXPECT_NEAR(back.y, y, 1e-6);
        }
      }
    }
  }
}

TEST(Synth, ParameterValidation) {
  SynthParams p = small_params();
  p.surfaces = 1;
  EXPECT_THROW(synth_corpus(p), Error);
  p = small_params();
  p.views_per_surface = 1;
  EXPECT_THROW(synth_corpus(p), Error);
  p = small_params();
  p.warp_magnitude = 0.3;
  EXPECT_THROW(synth_corpus(p), Error);
}

TEST(Synth, CorpusOnDisk) {
  const fs::path dir = fs::temp_directory_path() / "barkid_test_synth";
  fs::remove_all(dir);
  const SynthCorpus c = synth_corpus(small_params());
  const auto d = synth_distractors(small_params(), 2);
  write_corpus(c, d, dir);
  const auto list = read_corpus_list(dir);
  ASSERT_EQ(list.size(), 14u);
  EXPECT_EQ(list.back().surface_id, "");
  EXPECT_TRUE(fs::exists(list.front().path));
  const GroundTruth gt = load_ground_truth(dir / "ground_truth.json");
  EXPECT_EQ(gt.of(c.views[0].image_id), c.truth.of(c.views[0].image_id));
  const SurfaceManifest m = read_manifest(dir / "manifests" / (c.manifests[0].surface_id + ".json"));
  EXPECT_EQ(m.images.size(), 4u);
  fs::remove_all(dir);
}

TEST(Bench, BowComparisonIsFastest) {
  std::mt19937_64 rng(3);
  std::vector<ImageSignature> sigs(6);
  std::vector<std::vector<Descriptor>> train;
  for (size_t i = 0; i < sigs.size(); ++i) {
    sigs[i].image_id = "b" + std::to_string(i);
    sigs[i].keypoints = testutil::random_keypoints(rng, 300, 640, 480);
    sigs[i].descriptors = testutil::random_units(rng, 300);
    train.push_back(sigs[i].descriptors);
  }
  const Vocabulary voc = train_vocab(train, {.k = 100, .seed = 1, .max_iterations = 5});
  quantize_all(sigs, voc);
  const std::vector<Method> methods{Method::kBow, Method::kLr, Method::kGv};
  const auto rows = bench_compare(sigs, sigs, methods, {.comparisons = 100});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].method, "bow");
  EXPECT_EQ(rows[0].comparisons, 100u);
  EXPECT_NEAR(rows[1].mean_descriptors, 300, 1e-9);
  EXPECT_LT(rows[0].mean_ms, rows[1].mean_ms);
  EXPECT_LT(rows[0].mean_ms, rows[2].mean_ms);
  EXPECT_THROW(bench_compare(sigs, sigs, methods, {.comparisons = 50}), Error);
}

TEST(Report, EvaluateAndArtifacts) {
  SynthParams p = small_params();
  p.size = 192;
  const SynthCorpus c = synth_corpus(p);
  std::vector<std::string> ids, labels;
  for (const auto& v : c.views) {
    ids.push_back(v.image_id);
    labels.push_back(v.surface_id);
  }
  DetectorConfig cfg;
  cfg.gamma = 150;
  cfg.sigma_blur = 1.0f;
  auto sigs = extract_signatures(ids, labels, [&](size_t i) { return c.views[i].image; }, cfg,
                                 DescriptorProvider::builtin(), nullptr);
  std::vector<std::vector<Descriptor>> train;
  for (const auto& s : sigs) train.push_back(s.descriptors);
  const Vocabulary voc = train_vocab(train, {.k = 32, .seed = 1, .max_iterations = 10});
  quantize_all(sigs, voc);
  const SignatureDb db = SignatureDb::build(sigs, voc);
  EvalSetup setup;
  setup.recall_ks = {1, 3, 5};
  const EvalReport r = evaluate(db, db.signatures(), c.truth, setup);
  EXPECT_EQ(r.query_count, 12u);
  EXPECT_EQ(r.corpus_size, 12u);
  for (const MethodSummary& m : r.methods) {
    EXPECT_GE(m.map.mean, 0.0);
    EXPECT_LE(m.map.mean, 1.0);
    EXPECT_EQ(m.per_query_ap.size(), 12u);
    for (const auto& [k, v] : m.recall_at) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  const nlohmann::json j = report_json(r);
  EXPECT_TRUE(j.contains("methods"));
  const fs::path dir = fs::temp_directory_path() / "barkid_test_report";
  fs::remove_all(dir);
  write_report(r, dir);
  for (const char* f : {"report.json", "report.csv", "recall_at_k.csv", "pr.svg"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  fs::remove_all(dir);
}
