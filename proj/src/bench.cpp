#include "barkid/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include <omp.h>

#include "barkid/error.hpp"

namespace barkid {
namespace {

volatile double g_sink = 0.0;  // keeps timed work observable

double run_once(const ImageSignature& q, const ImageSignature& d, Method m, const MatchParams& p) {
  switch (m) {
    case Method::kBow: return bow_distance(q.bow, d.bow);
    case Method::kLr: {
      const std::vector<Match> put = putative_matches(q.packed, d.packed);
      return static_cast<double>(lr_filter(put, p.ratio).size());
    }
    case Method::kGv: {
      const std::vector<Match> put = putative_matches(q.packed, d.packed);
      return static_cast<double>(gv_filter(put, q.neighbors, d.neighbors, p.gv).size());
    }
  }
  return 0.0;
}

double time_pair(const ImageSignature& q, const ImageSignature& d, Method m, const BenchParams& p) {
  using clock = std::chrono::steady_clock;
  size_t reps = 1;
  for (;;) {
    const auto t0 = clock::now();
    double acc = 0.0;
    for (size_t r = 0; r < reps; ++r) acc += run_once(q, d, m, p.match);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    g_sink = g_sink + acc;
    if (ms >= p.min_sample_ms || reps >= (1u << 20)) return ms / static_cast<double>(reps);
    reps *= 4;
  }
}

}  // namespace

std::vector<BenchRow> bench_compare(std::span<const ImageSignature> db, std::span<const ImageSignature> queries,
                                    std::span<const Method> methods, const BenchParams& params) {
  if (params.comparisons < 100) throw Error(ErrorCode::kParameter, "bench needs >= 100 comparisons per method");
  if (db.empty() || queries.empty()) throw Error(ErrorCode::kParameter, "bench needs queries and a database");
  params.match.gv.validate();

  // Pair list cycling over (query, db), self pairs skipped.
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t t = 0; pairs.size() < params.comparisons; ++t) {
    const size_t qi = t % queries.size();
    const size_t di = (t / queries.size() + t) % db.size();
    if (queries[qi].image_id == db[di].image_id) continue;
    pairs.emplace_back(qi, di);
    if (t > 100 * params.comparisons + 1000) throw Error(ErrorCode::kParameter, "no non-self pairs to time");
  }

  // Caches used by the timed code, in case the signatures arrive without them.
  std::vector<ImageSignature> q(queries.begin(), queries.end());
  std::vector<ImageSignature> d(db.begin(), db.end());
  for (auto* set : {&q, &d}) {
    for (ImageSignature& s : *set) {
      if (s.neighbors.alpha() != params.match.gv.alpha || s.packed.size() != s.descriptors.size()) {
        s.prepare(params.match.gv.alpha);
      }
    }
  }

  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  std::vector<BenchRow> rows;
  for (Method m : methods) {
    for (size_t w = 0; w < std::min(params.warmup, pairs.size()); ++w) {
      g_sink = g_sink + run_once(q[pairs[w].first], d[pairs[w].second], m, params.match);
    }
    std::vector<double> samples;
    samples.reserve(pairs.size());
    double descriptors = 0.0;
    for (const auto& [qi, di] : pairs) {
      samples.push_back(time_pair(q[qi], d[di], m, params));
      descriptors += 0.5 * static_cast<double>(q[qi].descriptors.size() + d[di].descriptors.size());
    }
    BenchRow row;
    row.method = std::string(method_name(m));
    row.comparisons = samples.size();
    for (double s : samples) row.mean_ms += s;
    row.mean_ms /= static_cast<double>(samples.size());
    for (double s : samples) row.std_ms += (s - row.mean_ms) * (s - row.mean_ms);
    row.std_ms = std::sqrt(row.std_ms / static_cast<double>(samples.size()));
    std::vector<double> sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const size_t n = sorted.size();
    row.median_ms = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    row.mean_descriptors = descriptors / static_cast<double>(samples.size());
    rows.push_back(std::move(row));
  }
  omp_set_num_threads(saved);
  return rows;
}

}  // namespace barkid
