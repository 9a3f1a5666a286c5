#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "barkid/descriptor.hpp"
#include "barkid/detector.hpp"
#include "barkid/matching.hpp"
#include "barkid/vocabulary.hpp"

namespace barkid {

// s_i = (K_i, V_i, b_i) plus the derived caches used for matching.
struct ImageSignature {
  std::string image_id;
  std::string surface_id;  // ground-truth label, may be empty
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
  BowVector bow;

  PackedDescriptors packed;
  NeighborTable neighbors;

  // Rebuilds `packed` and `neighbors`; called by extraction and DB load.
  void prepare(int alpha = GvParams{}.alpha);
  size_t valid_descriptors() const;
};

// detect -> describe -> quantize. Degenerate descriptors stay in V_i but are
// left out of the BoW and of matching. `voc` may be null (empty BoW).
ImageSignature extract_signature(const Image& img, std::string image_id, const DetectorConfig& cfg,
                                 const DescriptorProvider& provider, const Vocabulary* voc,
                                 std::string surface_id = {});

// Parallel extraction over many images; `load(i)` supplies image i. Labels may
// be empty.
std::vector<ImageSignature> extract_signatures(const std::vector<std::string>& image_ids,
                                               const std::vector<std::string>& surface_ids,
                                               const std::function<Image(size_t)>& load,
                                               const DetectorConfig& cfg, const DescriptorProvider& provider,
                                               const Vocabulary* voc);

// Recomputes every BoW with `voc`.
void quantize_all(std::vector<ImageSignature>& signatures, const Vocabulary& voc);

// LR and GV scores of one pair, sharing the putative match set.
struct PairScores {
  size_t lr = 0;
  size_t gv = 0;
};
PairScores score_pair(const ImageSignature& query, const ImageSignature& db, const MatchParams& params);

class SignatureDb {
 public:
  SignatureDb() = default;
  // Throws kBuild on duplicate ids.
  static SignatureDb build(std::vector<ImageSignature> signatures, const Vocabulary& voc,
                           std::string config = {});

  size_t size() const noexcept { return signatures_.size(); }
  const std::vector<ImageSignature>& signatures() const noexcept { return signatures_; }
  const ImageSignature* find(std::string_view image_id) const;
  const InvertedIndex& index() const noexcept { return index_; }
  uint64_t vocabulary_hash() const noexcept { return vocabulary_hash_; }
  const std::string& config() const noexcept { return config_; }
  int vocabulary_size() const noexcept { return vocabulary_size_; }

 private:
  friend SignatureDb load_db(const std::filesystem::path&, const Vocabulary&);
  void reindex();

  std::vector<ImageSignature> signatures_;
  std::unordered_map<std::string, size_t> by_id_;
  InvertedIndex index_;
  uint64_t vocabulary_hash_ = 0;
  int vocabulary_size_ = 0;
  std::string config_;
};

struct RankedEntry {
  std::string image_id;
  double score = 0.0;
  Method method = Method::kBow;
};

struct StageTiming {
  std::string stage;
  double ms = 0.0;
};

struct RetrievalResult {
  std::vector<RankedEntry> ranking;
  std::vector<StageTiming> timings;

  std::vector<std::string> ids() const;
};

// Scores every database signature except the query's own id. BoW ranks by
// ascending distance, LR/GV by descending match count; ties by image id.
RetrievalResult query_full(const SignatureDb& db, const ImageSignature& query, Method method,
                           const MatchParams& params = {});

// BoW prefilter through the inverted index, then LR/GV rescoring of the top_t
// candidates. The rescored block leads; the rest keep BoW order.
RetrievalResult query_two_stage(const SignatureDb& db, const ImageSignature& query, size_t top_t,
                                Method rerank, const MatchParams& params = {});

void save_db(const SignatureDb& db, const std::filesystem::path& path);
std::vector<uint8_t> serialize_db(const SignatureDb& db);
// Verifies the vocabulary hash and that the index reproduces every stored BoW.
SignatureDb load_db(const std::filesystem::path& path, const Vocabulary& voc);

}  // namespace barkid
