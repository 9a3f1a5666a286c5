#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "barkid/descriptor.hpp"

namespace barkid {

// Sparse TF-IDF histogram, entries sorted by word index, weights > 0,
// l2-normalized unless empty.
struct BowVector {
  std::vector<std::pair<uint32_t, double>> entries;

  bool empty() const noexcept { return entries.empty(); }
  double norm() const;
  friend bool operator==(const BowVector&, const BowVector&) = default;
};

struct VocabularyMeta {
  uint64_t descriptor_count = 0;
  uint32_t training_images = 0;
  int iterations = 0;
  double inertia = 0.0;
  uint64_t seed = 0;
  std::vector<double> inertia_history;  // one entry per assignment step
  std::string init = "kmeans++";
  std::string tfidf = "tf=count/n, idf=ln(N/n_w)";
};

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<float> centers, std::vector<float> idf, VocabularyMeta meta = {});

  int k() const noexcept { return static_cast<int>(idf_.size()); }
  std::span<const float> centers() const noexcept { return centers_; }
  std::span<const float> center(int i) const {
    return std::span(centers_).subspan(static_cast<size_t>(i) * kDescriptorDim, kDescriptorDim);
  }
  std::span<const float> idf() const noexcept { return idf_; }
  const VocabularyMeta& meta() const noexcept { return meta_; }

  // FNV-1a of the serialized file image; identifies the vocabulary in DBs.
  uint64_t hash() const;
  std::vector<uint8_t> serialize() const;

 private:
  std::vector<float> centers_;  // k x 128
  std::vector<float> idf_;
  VocabularyMeta meta_;
};

struct KMeansParams {
  int k = 1000;
  uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-4;  // max center shift
};

// Seeded k-means++ and Lloyd iterations over the non-degenerate descriptors of
// the training images; idf is computed from the same images. Throws kTraining
// when fewer than k distinct descriptors are available.
Vocabulary train_vocab(std::span<const std::vector<Descriptor>> per_image, const KMeansParams& params);

// Nearest word per descriptor (ties -> lowest index), tf = count / n,
// weight = tf * idf, one l2 normalization.
BowVector quantize(const Vocabulary& voc, std::span<const Descriptor> descriptors);

// Sum of squared differences over the union of supports. One empty operand
// gives 2, both empty give 0.
double bow_distance(const BowVector& a, const BowVector& b);
double bow_dot(const BowVector& a, const BowVector& b);

void save_vocabulary(const Vocabulary& voc, const std::filesystem::path& path);
Vocabulary load_vocabulary(const std::filesystem::path& path);

struct ScoredImage {
  std::string image_id;
  double distance = 0.0;
};

class InvertedIndex {
 public:
  struct Posting {
    uint32_t image;
    double weight;
    friend bool operator==(const Posting&, const Posting&) = default;
  };

  InvertedIndex() = default;
  // Throws kBuild on duplicate image ids.
  static InvertedIndex build(std::span<const std::pair<std::string, BowVector>> bows, int k);
  static InvertedIndex from_parts(std::vector<std::string> ids, std::vector<std::vector<Posting>> postings);

  size_t image_count() const noexcept { return image_ids_.size(); }
  int word_count() const noexcept { return static_cast<int>(postings_.size()); }
  const std::string& image_id(uint32_t ordinal) const { return image_ids_[ordinal]; }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::vector<Posting>& postings(uint32_t word) const { return postings_[word]; }

  BowVector reconstruct(uint32_t ordinal) const;
  // Fraction of zero entries in the dense image x word matrix.
  double sparsity() const;

  // l2^2 distance to every image through the postings touched by q, returned
  // as the top_t smallest (ties by image id).
  std::vector<ScoredImage> score(const BowVector& q, size_t top_t) const;
  // Same distances for all images, indexed by ordinal.
  std::vector<double> distances(const BowVector& q) const;

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

 private:
  std::vector<std::string> image_ids_;
  std::vector<uint8_t> empty_;  // per image: stored BoW is empty
  std::vector<std::vector<Posting>> postings_;
};

}  // namespace barkid
