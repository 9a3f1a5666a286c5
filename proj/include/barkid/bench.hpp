#pragma once

#include <span>
#include <string>
#include <vector>

#include "barkid/matching.hpp"
#include "barkid/retrieval.hpp"

namespace barkid {

struct BenchRow {
  std::string method;
  size_t comparisons = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double std_ms = 0.0;
  double mean_descriptors = 0.0;  // per signature, over the pairs timed
};

struct BenchParams {
  size_t comparisons = 500;  // >= 100
  size_t warmup = 10;
  double min_sample_ms = 0.02;  // short comparisons are repeated up to this
  MatchParams match;
};

// Per-comparison wall time of each method, OpenMP pinned to one thread.
// Pairs cycle through queries x db (self pairs skipped). The query's neighbour
// table is built once per query; LR and GV each include putative matching.
std::vector<BenchRow> bench_compare(std::span<const ImageSignature> db, std::span<const ImageSignature> queries,
                                    std::span<const Method> methods, const BenchParams& params = {});

}  // namespace barkid
