#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "barkid/metrics.hpp"
#include "barkid/retrieval.hpp"

namespace barkid {

struct EvalSetup {
  std::vector<Method> methods{Method::kBow, Method::kLr, Method::kGv};
  MatchParams params;
  size_t top_t = 0;  // 0: full scan; otherwise BoW prefilter + rerank (BoW stays a full scan)
  std::vector<size_t> recall_ks{1, 5, 11, 20, 50, 100};
};

// Rankings of one query for every method of the setup, in setup order. LR and
// GV share one putative match set per pair.
std::vector<RetrievalResult> rank_query(const SignatureDb& db, const ImageSignature& query, const EvalSetup& setup);

struct MethodSummary {
  std::string method;
  MeanStd map;
  MeanStd p_at_1;
  MeanStd r_precision;
  std::vector<std::pair<size_t, double>> recall_at;  // mean R@K
  std::vector<PrPoint> pr_samples;                   // mean precision at fixed recall levels
  std::vector<StageTiming> mean_timings;
  std::vector<std::pair<std::string, double>> per_query_ap;
  std::vector<std::string> excluded;
};

struct EvalReport {
  std::vector<MethodSummary> methods;
  size_t query_count = 0;
  size_t corpus_size = 0;
  size_t top_t = 0;

  const MethodSummary& method(std::string_view name) const;
};

MethodSummary summarize(Method method, const std::vector<std::pair<std::string, RetrievalResult>>& results,
                        const GroundTruth& gt, std::span<const size_t> recall_ks);

// Queries every signature in `queries` against `db`.
EvalReport evaluate(const SignatureDb& db, std::span<const ImageSignature> queries, const GroundTruth& gt,
                    const EvalSetup& setup);

nlohmann::json report_json(const EvalReport& r);
std::string report_csv(const EvalReport& r);
std::string recall_table_csv(const EvalReport& r);
std::string pr_svg(const EvalReport& r);
// report.json, report.csv, recall_at_k.csv and pr.svg in `dir`.
void write_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace barkid
