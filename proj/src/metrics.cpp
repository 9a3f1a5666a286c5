#include "barkid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

#include "barkid/error.hpp"

namespace barkid {

GroundTruth GroundTruth::from_labels(const std::vector<std::pair<std::string, std::string>>& image_labels) {
  std::map<std::string, std::vector<std::string>> by_label;
  for (const auto& [id, label] : image_labels) by_label[label].push_back(id);
  GroundTruth gt;
  for (const auto& [id, label] : image_labels) {
    RelevantSet& rel = gt.relevant[id];
    for (const std::string& other : by_label[label]) {
      if (other != id) rel.insert(other);
    }
  }
  return gt;
}

const RelevantSet& GroundTruth::of(const std::string& query) const {
  static const RelevantSet empty;
  const auto it = relevant.find(query);
  return it == relevant.end() ? empty : it->second;
}

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::object();
  std::map<std::string, std::vector<std::string>> sorted;
  for (const auto& [q, rel] : gt.relevant) {
    std::vector<std::string> v(rel.begin(), rel.end());
    std::sort(v.begin(), v.end());
    sorted[q] = std::move(v);
  }
  for (auto& [q, v] : sorted) j[q] = v;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  GroundTruth gt;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& [q, rel] : j.items()) {
      RelevantSet& s = gt.relevant[q];
      for (const auto& r : rel) s.insert(r.get<std::string>());
      if (s.count(q)) throw Error(ErrorCode::kValidation, "query '" + q + "' listed as its own relevant image");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "bad ground truth " + path.string() + ": " + e.what());
  }
  return gt;
}

size_t relevant_in_top(const Ranking& ranking, const RelevantSet& relevant, size_t k) {
  const size_t n = std::min(k, ranking.size());
  size_t p = 0;
  for (size_t i = 0; i < n; ++i) p += relevant.count(ranking[i]);
  return p;
}

double precision_at_k(const Ranking& ranking, const RelevantSet& relevant, size_t k) {
  if (k < 1 || k > ranking.size()) {
    throw Error(ErrorCode::kParameter,
                "K=" + std::to_string(k) + " outside [1, " + std::to_string(ranking.size()) + "]");
  }
  return static_cast<double>(relevant_in_top(ranking, relevant, k)) / static_cast<double>(k);
}

std::optional<double> recall_at_k(const Ranking& ranking, const RelevantSet& relevant, size_t k) {
  if (k < 1 || k > ranking.size()) {
    throw Error(ErrorCode::kParameter,
                "K=" + std::to_string(k) + " outside [1, " + std::to_string(ranking.size()) + "]");
  }
  if (relevant.empty()) return std::nullopt;
  return static_cast<double>(relevant_in_top(ranking, relevant, k)) / static_cast<double>(relevant.size());
}

std::vector<PrPoint> pr_curve(const Ranking& ranking, const RelevantSet& relevant) {
  if (relevant.empty()) throw Error(ErrorCode::kParameter, "pr_curve needs a non-empty relevant set");
  const double total = static_cast<double>(relevant.size());
  std::vector<PrPoint> out;
  out.reserve(relevant.size());
  size_t found = 0;
  for (size_t r = 0; r < ranking.size() && found < relevant.size(); ++r) {
    if (!relevant.count(ranking[r])) continue;
    ++found;
    out.push_back({static_cast<double>(found) / total, static_cast<double>(found) / static_cast<double>(r + 1)});
  }
  // Never retrieved: rank is unbounded, P -> 0.
  while (out.size() < relevant.size()) out.push_back({static_cast<double>(found) / total, 0.0});
  std::stable_sort(out.begin(), out.end(), [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  return out;
}

double average_precision(const Ranking& ranking, const RelevantSet& relevant) {
  const std::vector<PrPoint> pr = pr_curve(ranking, relevant);
  double sum = 0.0;
  for (const PrPoint& p : pr) sum += p.precision;
  return sum / static_cast<double>(pr.size());
}

double r_precision(const Ranking& ranking, const RelevantSet& relevant) {
  if (relevant.empty()) throw Error(ErrorCode::kParameter, "r_precision needs a non-empty relevant set");
  return static_cast<double>(relevant_in_top(ranking, relevant, relevant.size())) /
         static_cast<double>(relevant.size());
}

MapResult mean_average_precision(const std::vector<std::pair<std::string, Ranking>>& rankings,
                                 const GroundTruth& gt) {
  MapResult res;
  double sum = 0.0;
  for (const auto& [q, ranking] : rankings) {
    const RelevantSet& rel = gt.of(q);
    if (rel.empty()) {
      std::fprintf(stderr, "warning: query '%s' has no relevant images, excluded from mAP\n", q.c_str());
      res.excluded.push_back(q);
      continue;
    }
    sum += average_precision(ranking, rel);
    ++res.queries;
  }
  res.map = res.queries == 0 ? 0.0 : sum / static_cast<double>(res.queries);
  return res;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

}  // namespace barkid
