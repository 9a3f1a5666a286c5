#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "barkid/descriptor.hpp"
#include "barkid/detector.hpp"

namespace barkid {

struct Match {
  uint32_t query_index = 0;
  uint32_t db_index = 0;
  float d1 = 0.0f;  // squared l2 to the nearest database descriptor
  float d2 = 0.0f;  // squared l2 to the second nearest, +inf if none

  friend bool operator==(const Match&, const Match&) = default;
};

struct GvParams {
  int alpha = 15;
  double rho = 0.33;

  void validate() const;
  // ceil(rho * neighbor_count): the number of consistent neighbours required.
  int threshold(size_t neighbor_count) const;
};

struct MatchParams {
  double ratio = 0.8;
  GvParams gv;
};

enum class Method { kBow, kLr, kGv };
std::string_view method_name(Method m);
Method parse_method(std::string_view s);  // "bow" | "lr" | "gv", else kParameter

// Descriptors packed row-major for the distance kernels; degenerate rows are
// zero with valid == 0.
struct PackedDescriptors {
  std::vector<float> data;
  std::vector<uint8_t> valid;

  static PackedDescriptors pack(std::span<const Descriptor> descriptors);
  size_t size() const noexcept { return valid.size(); }
};

// Alpha spatially nearest keypoints of every keypoint (self excluded, ties by
// index), found with a uniform bucket grid.
class NeighborTable {
 public:
  NeighborTable() = default;
  NeighborTable(std::span<const Keypoint> keypoints, int alpha);

  int alpha() const noexcept { return alpha_; }
  size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::span<const uint32_t> neighbors(size_t i) const {
    return std::span(ids_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
  }

 private:
  int alpha_ = 0;
  std::vector<uint32_t> offsets_;
  std::vector<uint32_t> ids_;
};

// One match per non-degenerate query descriptor: nearest and second-nearest
// non-degenerate database descriptors (ties -> lowest index).
std::vector<Match> putative_matches(std::span<const Descriptor> query, std::span<const Descriptor> db);
std::vector<Match> putative_matches(const PackedDescriptors& query, const PackedDescriptors& db);

// Keeps d1 < ratio^2 * d2, i.e. sqrt(d1) < ratio * sqrt(d2); d2 = inf is kept.
std::vector<Match> lr_filter(std::span<const Match> matches, double ratio = 0.8);

// Neighbour-consistency check against the full putative set `matches`.
std::vector<Match> gv_filter(std::span<const Match> matches, std::span<const Keypoint> query_kps,
                             std::span<const Keypoint> db_kps, const GvParams& params = {});
std::vector<Match> gv_filter(std::span<const Match> matches, const NeighborTable& query_nb,
                             const NeighborTable& db_nb, const GvParams& params = {});

struct MatchInput {
  std::span<const Keypoint> keypoints;
  std::span<const Descriptor> descriptors;
};

// Number of matches surviving the chosen filter (LR or GV).
size_t match_score(const MatchInput& query, const MatchInput& db, Method method,
                   const MatchParams& params = {});

}  // namespace barkid
