#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace barkid {

using Ranking = std::vector<std::string>;
using RelevantSet = std::unordered_set<std::string>;

// Per query image: the other images of the same surface.
struct GroundTruth {
  std::unordered_map<std::string, RelevantSet> relevant;

  // Builds the same-label relation; the query is never its own relevant image.
  static GroundTruth from_labels(const std::vector<std::pair<std::string, std::string>>& image_labels);
  const RelevantSet& of(const std::string& query) const;
};

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

// p(K): relevant images among the first K ranks.
size_t relevant_in_top(const Ranking& ranking, const RelevantSet& relevant, size_t k);

// p(K)/K; K outside [1, |ranking|] throws kParameter.
double precision_at_k(const Ranking& ranking, const RelevantSet& relevant, size_t k);
// p(K)/|I|; absent when |I| = 0.
std::optional<double> recall_at_k(const Ranking& ranking, const RelevantSet& relevant, size_t k);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  friend bool operator==(const PrPoint&, const PrPoint&) = default;
};

// One (R@i_k, P@i_k) point per relevant image, by ascending recall. A relevant
// image missing from the ranking contributes precision 0. Empty relevant set
// throws kParameter.
std::vector<PrPoint> pr_curve(const Ranking& ranking, const RelevantSet& relevant);

// Mean of the P@i_k of pr_curve.
double average_precision(const Ranking& ranking, const RelevantSet& relevant);

// P@|I|, counting over the whole ranking if it is shorter than |I|.
double r_precision(const Ranking& ranking, const RelevantSet& relevant);

struct MapResult {
  double map = 0.0;
  size_t queries = 0;
  std::vector<std::string> excluded;  // queries without relevant images
};

MapResult mean_average_precision(const std::vector<std::pair<std::string, Ranking>>& rankings,
                                 const GroundTruth& gt);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over queries
};
MeanStd mean_std(const std::vector<double>& values);

}  // namespace barkid
