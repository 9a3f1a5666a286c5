#include "barkid/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>

#include "barkid/binary_io.hpp"
#include "barkid/error.hpp"
#include "barkid/kernels.hpp"

namespace barkid {
namespace {

// Uniform double in [0, 1) from raw engine bits; avoids the
// implementation-defined std::uniform_real_distribution.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void normalize(BowVector& v) {
  const double n = v.norm();
  if (n <= 0.0) {
    v.entries.clear();
    return;
  }
  for (auto& [w, x] : v.entries) x /= n;
}

}  // namespace

double BowVector::norm() const {
  double s = 0.0;
  for (const auto& [w, x] : entries) s += x * x;
  return std::sqrt(s);
}

Vocabulary::Vocabulary(std::vector<float> centers, std::vector<float> idf, VocabularyMeta meta)
    : centers_(std::move(centers)), idf_(std::move(idf)), meta_(std::move(meta)) {
  if (centers_.size() != idf_.size() * kDescriptorDim) {
    throw Error(ErrorCode::kParameter, "vocabulary centers do not match idf length");
  }
  for (float v : idf_) {
    if (!std::isfinite(v) || v < 0.0f) throw Error(ErrorCode::kValidation, "idf must be finite and >= 0");
  }
}

std::vector<uint8_t> Vocabulary::serialize() const {
  ByteWriter w;
  w.magic("BKV1");
  w.u32(static_cast<uint32_t>(k()));
  w.u32(kDescriptorDim);
  for (float v : centers_) w.f32(v);
  for (float v : idf_) w.f32(v);
  return w.buffer();
}

uint64_t Vocabulary::hash() const { return fnv1a(serialize()); }

Vocabulary train_vocab(std::span<const std::vector<Descriptor>> per_image, const KMeansParams& params) {
  if (params.k < 1) throw Error(ErrorCode::kParameter, "k must be >= 1");
  std::vector<float> data;
  std::vector<uint32_t> owner;
  for (size_t i = 0; i < per_image.size(); ++i) {
    for (const Descriptor& d : per_image[i]) {
      if (d.degenerate) continue;
      data.insert(data.end(), d.values.begin(), d.values.end());
      owner.push_back(static_cast<uint32_t>(i));
    }
  }
  const size_t n = owner.size();
  const auto k = static_cast<size_t>(params.k);
  if (n < k) {
    throw Error(ErrorCode::kTraining, "vocabulary training needs >= " + std::to_string(k) +
                                          " descriptors, got " + std::to_string(n));
  }
  auto point = [&](size_t i) { return data.data() + i * kDescriptorDim; };

  // k-means++ seeding.
  std::mt19937_64 rng(params.seed);
  std::vector<float> centers;
  centers.reserve(k * kDescriptorDim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  size_t pick = static_cast<size_t>(uniform01(rng) * n);
  for (size_t c = 0; c < k; ++c) {
    centers.insert(centers.end(), point(pick), point(pick) + kDescriptorDim);
    const float* ctr = centers.data() + c * kDescriptorDim;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      d2[i] = std::min<double>(d2[i], kernels::squared_l2(point(i), ctr));
      total += d2[i];
    }
    if (c + 1 == k) break;
    if (!(total > 0.0)) {
      throw Error(ErrorCode::kTraining, "fewer than k distinct descriptors");
    }
    const double target = uniform01(rng) * total;
    double acc = 0.0;
    pick = n;
    for (size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (pick == n) {
      // Rounding left the target past the end; take the last positive point.
      for (size_t i = n; i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
  }

  VocabularyMeta meta;
  meta.descriptor_count = n;
  meta.training_images = static_cast<uint32_t>(per_image.size());
  meta.seed = params.seed;

  std::vector<int> labels(n);
  std::vector<float> dists(n);
  std::vector<double> sums(k * kDescriptorDim);
  std::vector<size_t> counts(k);
  for (int it = 0; it < params.max_iterations; ++it) {
    kernels::assign_nearest(data, centers, labels, dists);
    double inertia = 0.0;
    for (float d : dists) inertia += d;
    meta.inertia_history.push_back(inertia);
    meta.inertia = inertia;
    meta.iterations = it + 1;

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (size_t i = 0; i < n; ++i) {
      const size_t c = static_cast<size_t>(labels[i]);
      ++counts[c];
      const float* p = point(i);
      double* s = sums.data() + c * kDescriptorDim;
      for (size_t j = 0; j < kDescriptorDim; ++j) s[j] += p[j];
    }
    double max_shift = 0.0;
    for (size_t c = 0; c < k; ++c) {
      float* ctr = centers.data() + c * kDescriptorDim;
      std::array<float, kDescriptorDim> next{};
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its center.
        const auto far = static_cast<size_t>(std::max_element(dists.begin(), dists.end()) - dists.begin());
        std::copy_n(point(far), kDescriptorDim, next.begin());
        dists[far] = 0.0f;
      } else {
        const double* s = sums.data() + c * kDescriptorDim;
        for (size_t j = 0; j < kDescriptorDim; ++j) next[j] = static_cast<float>(s[j] / counts[c]);
      }
      max_shift = std::max(max_shift, std::sqrt(kernels::squared_l2_serial(ctr, next.data())));
      std::copy(next.begin(), next.end(), ctr);
    }
    if (max_shift < params.tolerance) break;
  }

  // Document frequencies over the training images with the final centers.
  kernels::assign_nearest(data, centers, labels, dists);
  std::vector<uint32_t> df(k, 0);
  std::vector<uint32_t> last_seen(k, UINT32_MAX);
  for (size_t i = 0; i < n; ++i) {
    const auto c = static_cast<size_t>(labels[i]);
    if (last_seen[c] != owner[i]) {
      last_seen[c] = owner[i];
      ++df[c];
    }
  }
  const double images = static_cast<double>(per_image.size());
  std::vector<float> idf(k, 0.0f);
  for (size_t c = 0; c < k; ++c) {
    if (df[c] > 0) idf[c] = static_cast<float>(std::log(images / df[c]));
  }
  return Vocabulary(std::move(centers), std::move(idf), std::move(meta));
}

BowVector quantize(const Vocabulary& voc, std::span<const Descriptor> descriptors) {
  std::vector<float> data;
  for (const Descriptor& d : descriptors) {
    if (!d.degenerate) data.insert(data.end(), d.values.begin(), d.values.end());
  }
  BowVector out;
  const size_t n = data.size() / kDescriptorDim;
  if (n == 0 || voc.k() == 0) return out;
  std::vector<int> labels(n);
  std::vector<float> dists(n);
  kernels::assign_nearest(data, voc.centers(), labels, dists);
  std::vector<uint32_t> counts(static_cast<size_t>(voc.k()), 0);
  for (int l : labels) ++counts[static_cast<size_t>(l)];
  const auto idf = voc.idf();
  for (size_t w = 0; w < counts.size(); ++w) {
    if (counts[w] == 0) continue;
    const double weight = (static_cast<double>(counts[w]) / n) * idf[w];
    if (weight > 0.0) out.entries.emplace_back(static_cast<uint32_t>(w), weight);
  }
  normalize(out);
  return out;
}

double bow_dot(const BowVector& a, const BowVector& b) {
  double s = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      s += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return s;
}

double bow_distance(const BowVector& a, const BowVector& b) {
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : 2.0;
  double s = 0.0;
  auto i = a.entries.begin();
  auto j = b.entries.begin();
  while (i != a.entries.end() || j != b.entries.end()) {
    double d;
    if (j == b.entries.end() || (i != a.entries.end() && i->first < j->first)) {
      d = i->second;
      ++i;
    } else if (i == a.entries.end() || j->first < i->first) {
      d = j->second;
      ++j;
    } else {
      d = i->second - j->second;
      ++i;
      ++j;
    }
    s += d * d;
  }
  return s;
}

void save_vocabulary(const Vocabulary& voc, const std::filesystem::path& path) {
  ByteWriter w;
  const std::vector<uint8_t> bytes = voc.serialize();
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path, ErrorCode::kFormat);
  if (!r.expect_magic("BKV1")) throw Error(ErrorCode::kFormat, "bad vocabulary magic in " + path.string());
  const uint32_t k = r.u32();
  const uint32_t dim = r.u32();
  if (dim != kDescriptorDim) throw Error(ErrorCode::kFormat, "vocabulary dimension != 128");
  std::vector<float> centers(static_cast<size_t>(k) * dim);
  for (float& v : centers) v = r.f32();
  std::vector<float> idf(k);
  for (float& v : idf) v = r.f32();
  if (!r.at_end()) throw Error(ErrorCode::kFormat, "trailing bytes in vocabulary file");
  return Vocabulary(std::move(centers), std::move(idf));
}

InvertedIndex InvertedIndex::build(std::span<const std::pair<std::string, BowVector>> bows, int k) {
  InvertedIndex idx;
  idx.postings_.resize(static_cast<size_t>(k));
  std::unordered_set<std::string> seen;
  for (size_t i = 0; i < bows.size(); ++i) {
    const auto& [id, bow] = bows[i];
    if (!seen.insert(id).second) throw Error(ErrorCode::kBuild, "duplicate image id '" + id + "'");
    idx.image_ids_.push_back(id);
    idx.empty_.push_back(bow.empty() ? 1 : 0);
    for (const auto& [w, x] : bow.entries) {
      if (w >= static_cast<uint32_t>(k)) throw Error(ErrorCode::kBuild, "word index out of range");
      idx.postings_[w].push_back({static_cast<uint32_t>(i), x});
    }
  }
  return idx;
}

InvertedIndex InvertedIndex::from_parts(std::vector<std::string> ids,
                                        std::vector<std::vector<Posting>> postings) {
  InvertedIndex idx;
  idx.image_ids_ = std::move(ids);
  idx.postings_ = std::move(postings);
  idx.empty_.assign(idx.image_ids_.size(), 1);
  for (const auto& list : idx.postings_) {
    for (size_t p = 0; p < list.size(); ++p) {
      if (list[p].image >= idx.image_ids_.size() || (p > 0 && list[p - 1].image >= list[p].image)) {
        throw Error(ErrorCode::kLoad, "inverted index postings are not sorted or out of range");
      }
      idx.empty_[list[p].image] = 0;
    }
  }
  return idx;
}

BowVector InvertedIndex::reconstruct(uint32_t ordinal) const {
  BowVector v;
  for (size_t w = 0; w < postings_.size(); ++w) {
    const auto& list = postings_[w];
    const auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                                     [](const Posting& p, uint32_t o) { return p.image < o; });
    if (it != list.end() && it->image == ordinal) v.entries.emplace_back(static_cast<uint32_t>(w), it->weight);
  }
  return v;
}

double InvertedIndex::sparsity() const {
  if (image_ids_.empty() || postings_.empty()) return 1.0;
  size_t nnz = 0;
  for (const auto& list : postings_) nnz += list.size();
  return 1.0 - static_cast<double>(nnz) / (static_cast<double>(image_ids_.size()) * postings_.size());
}

std::vector<double> InvertedIndex::distances(const BowVector& q) const {
  std::vector<double> dist(image_ids_.size());
  if (q.empty()) {
    for (size_t i = 0; i < dist.size(); ++i) dist[i] = empty_[i] ? 0.0 : 2.0;
    return dist;
  }
  std::vector<double> dot(image_ids_.size(), 0.0);
  for (const auto& [w, qw] : q.entries) {
    if (w >= postings_.size()) continue;
    for (const Posting& p : postings_[w]) dot[p.image] += qw * p.weight;
  }
  for (size_t i = 0; i < dist.size(); ++i) dist[i] = std::max(0.0, 2.0 - 2.0 * dot[i]);
  return dist;
}

std::vector<ScoredImage> InvertedIndex::score(const BowVector& q, size_t top_t) const {
  if (top_t < 1) throw Error(ErrorCode::kParameter, "top_t must be >= 1");
  const std::vector<double> dist = distances(q);
  std::vector<uint32_t> order(dist.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<uint32_t>(i);
  const size_t keep = std::min(top_t, order.size());
  auto better = [&](uint32_t a, uint32_t b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return image_ids_[a] < image_ids_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), better);
  std::vector<ScoredImage> out;
  out.reserve(keep);
  for (size_t i = 0; i < keep; ++i) out.push_back({image_ids_[order[i]], dist[order[i]]});
  return out;
}

}  // namespace barkid
