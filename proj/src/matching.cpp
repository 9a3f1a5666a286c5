#include "barkid/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "barkid/error.hpp"
#include "barkid/kernels.hpp"

namespace barkid {

void GvParams::validate() const {
  if (alpha < 1) throw Error(ErrorCode::kParameter, "alpha must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorCode::kParameter, "rho must be in [0, 1]");
}

int GvParams::threshold(size_t neighbor_count) const {
  // The epsilon keeps products such as 0.2 * 15 = 3.0000000000000004 at 3.
  return static_cast<int>(std::ceil(rho * static_cast<double>(neighbor_count) - 1e-9));
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kBow: return "bow";
    case Method::kLr: return "lr";
    case Method::kGv: return "gv";
  }
  return "unknown";
}

Method parse_method(std::string_view s) {
  if (s == "bow") return Method::kBow;
  if (s == "lr") return Method::kLr;
  if (s == "gv") return Method::kGv;
  throw Error(ErrorCode::kParameter, "unknown method '" + std::string(s) + "'");
}

PackedDescriptors PackedDescriptors::pack(std::span<const Descriptor> descriptors) {
  PackedDescriptors p;
  p.data.reserve(descriptors.size() * kDescriptorDim);
  p.valid.reserve(descriptors.size());
  for (const Descriptor& d : descriptors) {
    p.data.insert(p.data.end(), d.values.begin(), d.values.end());
    p.valid.push_back(d.degenerate ? 0 : 1);
  }
  return p;
}

NeighborTable::NeighborTable(std::span<const Keypoint> kps, int alpha) : alpha_(alpha) {
  const size_t n = kps.size();
  offsets_.assign(n + 1, 0);
  if (n == 0) return;
  const size_t want = std::min<size_t>(static_cast<size_t>(std::max(alpha, 0)), n - 1);
  if (want == 0) return;

  float min_x = kps[0].x, max_x = kps[0].x, min_y = kps[0].y, max_y = kps[0].y;
  for (const Keypoint& k : kps) {
    min_x = std::min(min_x, k.x);
    max_x = std::max(max_x, k.x);
    min_y = std::min(min_y, k.y);
    max_y = std::max(max_y, k.y);
  }
  // About four points per bucket.
  const double area = std::max(1.0, double(max_x - min_x) * double(max_y - min_y));
  const double cell = std::max(1e-3, std::sqrt(area * 4.0 / n));
  const int gw = static_cast<int>((max_x - min_x) / cell) + 1;
  const int gh = static_cast<int>((max_y - min_y) / cell) + 1;
  std::vector<std::vector<uint32_t>> buckets(static_cast<size_t>(gw) * gh);
  auto bx = [&](float x) { return std::min(gw - 1, static_cast<int>((x - min_x) / cell)); };
  auto by = [&](float y) { return std::min(gh - 1, static_cast<int>((y - min_y) / cell)); };
  for (size_t i = 0; i < n; ++i) buckets[static_cast<size_t>(by(kps[i].y)) * gw + bx(kps[i].x)].push_back(static_cast<uint32_t>(i));

  ids_.reserve(n * want);
  std::vector<std::pair<double, uint32_t>> cand;
  for (size_t i = 0; i < n; ++i) {
    cand.clear();
    const int cx = bx(kps[i].x);
    const int cy = by(kps[i].y);
    const int max_ring = std::max(gw, gh);
    for (int r = 0; r <= max_ring; ++r) {
      for (int yy = cy - r; yy <= cy + r; ++yy) {
        if (yy < 0 || yy >= gh) continue;
        const bool edge_row = yy == cy - r || yy == cy + r;
        for (int xx = cx - r; xx <= cx + r; ++xx) {
          if (xx < 0 || xx >= gw) continue;
          if (!edge_row && xx != cx - r && xx != cx + r) continue;
          for (uint32_t j : buckets[static_cast<size_t>(yy) * gw + xx]) {
            if (j == i) continue;
            const double dx = double(kps[j].x) - kps[i].x;
            const double dy = double(kps[j].y) - kps[i].y;
            cand.emplace_back(dx * dx + dy * dy, j);
          }
        }
      }
      if (cand.size() >= want) {
        // Everything outside ring r is at least r * cell away.
        std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(want) - 1, cand.end());
        const double kth = cand[want - 1].first;
        const double reach = r * cell;
        if (kth < reach * reach) break;
      }
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(want), cand.end());
    for (size_t t = 0; t < want; ++t) ids_.push_back(cand[t].second);
    offsets_[i + 1] = static_cast<uint32_t>(ids_.size());
  }
}

std::vector<Match> putative_matches(const PackedDescriptors& query, const PackedDescriptors& db) {
  std::vector<Match> out;
  if (db.size() == 0 || query.size() == 0) return out;
  std::vector<float> rows;
  std::vector<uint32_t> ids;
  rows.reserve(query.data.size());
  for (size_t i = 0; i < query.size(); ++i) {
    if (!query.valid[i]) continue;
    ids.push_back(static_cast<uint32_t>(i));
    rows.insert(rows.end(), query.data.begin() + static_cast<std::ptrdiff_t>(i * kDescriptorDim),
                query.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * kDescriptorDim));
  }
  std::vector<kernels::NearestTwo> best(ids.size());
  kernels::nearest_two(rows, db.data, db.valid, best);
  out.reserve(ids.size());
  for (size_t t = 0; t < ids.size(); ++t) {
    if (best[t].index < 0) continue;  // every database descriptor is degenerate
    out.push_back({ids[t], static_cast<uint32_t>(best[t].index), best[t].d1, best[t].d2});
  }
  return out;
}

std::vector<Match> putative_matches(std::span<const Descriptor> query, std::span<const Descriptor> db) {
  return putative_matches(PackedDescriptors::pack(query), PackedDescriptors::pack(db));
}

std::vector<Match> lr_filter(std::span<const Match> matches, double ratio) {
  const double r2 = ratio * ratio;
  std::vector<Match> out;
  for (const Match& m : matches) {
    if (std::isinf(m.d2) || static_cast<double>(m.d1) < r2 * static_cast<double>(m.d2)) out.push_back(m);
  }
  return out;
}

std::vector<Match> gv_filter(std::span<const Match> matches, const NeighborTable& query_nb,
                             const NeighborTable& db_nb, const GvParams& params) {
  params.validate();
  std::vector<int> match_of(query_nb.size(), -1);
  for (const Match& m : matches) match_of[m.query_index] = static_cast<int>(m.db_index);
  std::vector<uint32_t> stamp(db_nb.size(), 0);
  std::vector<Match> out;
  uint32_t current = 0;
  for (const Match& m : matches) {
    ++current;
    for (uint32_t y : db_nb.neighbors(m.db_index)) stamp[y] = current;
    const auto nx = query_nb.neighbors(m.query_index);
    int consistent = 0;
    for (uint32_t x : nx) {
      const int y = match_of[x];
      if (y >= 0 && stamp[static_cast<size_t>(y)] == current) ++consistent;
    }
    if (consistent >= params.threshold(nx.size())) out.push_back(m);
  }
  return out;
}

std::vector<Match> gv_filter(std::span<const Match> matches, std::span<const Keypoint> query_kps,
                             std::span<const Keypoint> db_kps, const GvParams& params) {
  params.validate();
  return gv_filter(matches, NeighborTable(query_kps, params.alpha), NeighborTable(db_kps, params.alpha),
                   params);
}

size_t match_score(const MatchInput& query, const MatchInput& db, Method method,
                   const MatchParams& params) {
  const std::vector<Match> m = putative_matches(query.descriptors, db.descriptors);
  switch (method) {
    case Method::kLr: return lr_filter(m, params.ratio).size();
    case Method::kGv: return gv_filter(m, query.keypoints, db.keypoints, params.gv).size();
    case Method::kBow: break;
  }
  throw Error(ErrorCode::kParameter, "match_score supports lr and gv only");
}

}  // namespace barkid
