#include "barkid/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "barkid/error.hpp"

namespace barkid {
namespace {

constexpr int kPrLevels = 20;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<RetrievalResult> rank_query(const SignatureDb& db, const ImageSignature& query, const EvalSetup& setup) {
  if (db.size() == 0) throw Error(ErrorCode::kParameter, "database is empty");
  setup.params.gv.validate();
  const auto& sigs = db.signatures();
  const bool need_pairs = std::any_of(setup.methods.begin(), setup.methods.end(),
                                      [](Method m) { return m != Method::kBow; });
  std::vector<RetrievalResult> out(setup.methods.size());

  if (setup.top_t == 0) {
    auto start = std::chrono::steady_clock::now();
    const std::vector<double> bow = db.index().distances(query.bow);
    const double bow_ms = elapsed_ms(start);
    start = std::chrono::steady_clock::now();
    std::vector<PairScores> pairs(need_pairs ? sigs.size() : 0);
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (sigs[i].image_id != query.image_id) pairs[i] = score_pair(query, sigs[i], setup.params);
    }
    const double pair_ms = elapsed_ms(start);
    for (size_t m = 0; m < setup.methods.size(); ++m) {
      const Method method = setup.methods[m];
      RetrievalResult& r = out[m];
      for (size_t i = 0; i < sigs.size(); ++i) {
        if (sigs[i].image_id == query.image_id) continue;
        double score = bow[i];
        if (method == Method::kLr) score = static_cast<double>(pairs[i].lr);
        if (method == Method::kGv) score = static_cast<double>(pairs[i].gv);
        r.ranking.push_back({sigs[i].image_id, score, method});
      }
      const bool ascending = method == Method::kBow;
      std::sort(r.ranking.begin(), r.ranking.end(), [ascending](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return ascending ? a.score < b.score : a.score > b.score;
        return a.image_id < b.image_id;
      });
      r.timings.push_back({std::string(method_name(method)) + "_full", method == Method::kBow ? bow_ms : pair_ms});
    }
    return out;
  }

  // Two-stage: one prefilter, one rescoring pass shared by LR and GV.
  auto start = std::chrono::steady_clock::now();
  std::vector<ScoredImage> prefilter = db.index().score(query.bow, db.index().image_count());
  std::erase_if(prefilter, [&](const ScoredImage& s) { return s.image_id == query.image_id; });
  const double prefilter_ms = elapsed_ms(start);
  start = std::chrono::steady_clock::now();
  const size_t keep = need_pairs ? std::min(setup.top_t, prefilter.size()) : 0;
  std::vector<PairScores> pairs(keep);
  const auto n = static_cast<std::ptrdiff_t>(keep);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    pairs[i] = score_pair(query, *db.find(prefilter[i].image_id), setup.params);
  }
  const double rerank_ms = elapsed_ms(start);
  for (size_t m = 0; m < setup.methods.size(); ++m) {
    const Method method = setup.methods[m];
    RetrievalResult& r = out[m];
    r.timings.push_back({"bow_prefilter", prefilter_ms});
    if (method == Method::kBow) {
      for (const ScoredImage& s : prefilter) r.ranking.push_back({s.image_id, s.distance, method});
      continue;
    }
    std::vector<RankedEntry> block;
    for (size_t i = 0; i < keep; ++i) {
      block.push_back({prefilter[i].image_id,
                       static_cast<double>(method == Method::kLr ? pairs[i].lr : pairs[i].gv), method});
    }
    std::sort(block.begin(), block.end(), [](const RankedEntry& a, const RankedEntry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.image_id < b.image_id;
    });
    r.ranking = std::move(block);
    for (size_t i = keep; i < prefilter.size(); ++i) {
      r.ranking.push_back({prefilter[i].image_id, prefilter[i].distance, Method::kBow});
    }
    r.timings.push_back({std::string(method_name(method)) + "_rerank", rerank_ms});
  }
  return out;
}

const MethodSummary& EvalReport::method(std::string_view name) const {
  for (const MethodSummary& m : methods) {
    if (m.method == name) return m;
  }
  throw Error(ErrorCode::kParameter, "report has no method '" + std::string(name) + "'");
}

MethodSummary summarize(Method method, const std::vector<std::pair<std::string, RetrievalResult>>& results,
                        const GroundTruth& gt, std::span<const size_t> recall_ks) {
  MethodSummary s;
  s.method = std::string(method_name(method));
  std::vector<double> ap, p1, rp;
  std::vector<double> recall_sum(recall_ks.size(), 0.0);
  std::vector<double> pr_sum(kPrLevels, 0.0);
  std::map<std::string, std::pair<double, size_t>> timing;
  std::vector<std::string> timing_order;
  for (const auto& [q, res] : results) {
    for (const StageTiming& t : res.timings) {
      auto [it, fresh] = timing.try_emplace(t.stage, 0.0, 0);
      if (fresh) timing_order.push_back(t.stage);
      it->second.first += t.ms;
      ++it->second.second;
    }
    const RelevantSet& rel = gt.of(q);
    if (rel.empty()) {
      s.excluded.push_back(q);
      continue;
    }
    const Ranking ranking = res.ids();
    const double a = average_precision(ranking, rel);
    ap.push_back(a);
    s.per_query_ap.emplace_back(q, a);
    p1.push_back(ranking.empty() ? 0.0 : precision_at_k(ranking, rel, 1));
    rp.push_back(r_precision(ranking, rel));
    for (size_t k = 0; k < recall_ks.size(); ++k) {
      const size_t kk = std::min(recall_ks[k], ranking.size());
      recall_sum[k] += static_cast<double>(relevant_in_top(ranking, rel, kk)) / static_cast<double>(rel.size());
    }
    const std::vector<PrPoint> pr = pr_curve(ranking, rel);
    for (int l = 0; l < kPrLevels; ++l) {
      const double level = static_cast<double>(l + 1) / kPrLevels;
      for (const PrPoint& p : pr) {
        if (p.recall + 1e-12 >= level) {
          pr_sum[l] += p.precision;
          break;
        }
      }
    }
  }
  s.map = mean_std(ap);
  s.p_at_1 = mean_std(p1);
  s.r_precision = mean_std(rp);
  const double nq = std::max<double>(1.0, static_cast<double>(ap.size()));
  for (size_t k = 0; k < recall_ks.size(); ++k) s.recall_at.emplace_back(recall_ks[k], recall_sum[k] / nq);
  for (int l = 0; l < kPrLevels; ++l) s.pr_samples.push_back({static_cast<double>(l + 1) / kPrLevels, pr_sum[l] / nq});
  for (const std::string& stage : timing_order) {
    const auto& [sum, count] = timing.at(stage);
    s.mean_timings.push_back({stage, sum / static_cast<double>(count)});
  }
  return s;
}

EvalReport evaluate(const SignatureDb& db, std::span<const ImageSignature> queries, const GroundTruth& gt,
                    const EvalSetup& setup) {
  std::vector<std::vector<std::pair<std::string, RetrievalResult>>> per_method(setup.methods.size());
  for (const ImageSignature& q : queries) {
    std::vector<RetrievalResult> r = rank_query(db, q, setup);
    for (size_t m = 0; m < r.size(); ++m) per_method[m].emplace_back(q.image_id, std::move(r[m]));
  }
  EvalReport report;
  report.query_count = queries.size();
  report.corpus_size = db.size();
  report.top_t = setup.top_t;
  for (size_t m = 0; m < setup.methods.size(); ++m) {
    report.methods.push_back(summarize(setup.methods[m], per_method[m], gt, setup.recall_ks));
  }
  return report;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["query_count"] = r.query_count;
  j["corpus_size"] = r.corpus_size;
  j["top_t"] = r.top_t;
  j["spread"] = "population standard deviation over queries";
  j["methods"] = nlohmann::json::array();
  for (const MethodSummary& m : r.methods) {
    nlohmann::json mj;
    mj["method"] = m.method;
    mj["map"] = {{"mean", m.map.mean}, {"std", m.map.std}};
    mj["p_at_1"] = {{"mean", m.p_at_1.mean}, {"std", m.p_at_1.std}};
    mj["r_precision"] = {{"mean", m.r_precision.mean}, {"std", m.r_precision.std}};
    nlohmann::json rk = nlohmann::json::object();
    for (const auto& [k, v] : m.recall_at) rk[std::to_string(k)] = v;
    mj["recall_at"] = rk;
    nlohmann::json pr = nlohmann::json::array();
    for (const PrPoint& p : m.pr_samples) pr.push_back({p.recall, p.precision});
    mj["pr_curve"] = pr;
    nlohmann::json t = nlohmann::json::object();
    for (const StageTiming& st : m.mean_timings) t[st.stage] = st.ms;
    mj["mean_timings_ms"] = t;
    nlohmann::json ap = nlohmann::json::object();
    for (const auto& [q, v] : m.per_query_ap) ap[q] = v;
    mj["per_query_ap"] = ap;
    mj["excluded_queries"] = m.excluded;
    j["methods"].push_back(std::move(mj));
  }
  return j;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "method,map,map_std,p_at_1,p_at_1_std,r_precision,r_precision_std,queries,corpus_size\n";
  for (const MethodSummary& m : r.methods) {
    out << m.method << ',' << fmt(m.map.mean) << ',' << fmt(m.map.std) << ',' << fmt(m.p_at_1.mean) << ','
        << fmt(m.p_at_1.std) << ',' << fmt(m.r_precision.mean) << ',' << fmt(m.r_precision.std) << ','
        << r.query_count << ',' << r.corpus_size << '\n';
  }
  return out.str();
}

std::string recall_table_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "method";
  if (!r.methods.empty()) {
    for (const auto& [k, v] : r.methods.front().recall_at) out << ",r_at_" << k;
  }
  out << '\n';
  for (const MethodSummary& m : r.methods) {
    out << m.method;
    for (const auto& [k, v] : m.recall_at) out << ',' << fmt(v);
    out << '\n';
  }
  return out.str();
}

std::string pr_svg(const EvalReport& r) {
  const int w = 480, h = 360, left = 50, bottom = 40, top = 20, right = 110;
  const int pw = w - left - right, ph = h - top - bottom;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    s << "<text x=\"" << left + v * pw << "\" y=\"" << h - bottom + 15 << "\" font-size=\"10\" text-anchor=\"middle\">"
      << v << "</text>\n";
    s << "<text x=\"" << left - 5 << "\" y=\"" << top + (1 - v) * ph + 3 << "\" font-size=\"10\" text-anchor=\"end\">"
      << v << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 8 << "\" font-size=\"12\" text-anchor=\"middle\">recall</text>\n";
  s << "<text x=\"14\" y=\"" << top + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << top + ph / 2
    << ")\" text-anchor=\"middle\">precision</text>\n";
  for (size_t m = 0; m < r.methods.size(); ++m) {
    const char* c = colors[m % 5];
    s << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const PrPoint& p : r.methods[m].pr_samples) {
      s << left + p.recall * pw << ',' << top + (1 - p.precision) * ph << ' ';
    }
    s << "\"/>\n";
    s << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 15 + 16 * m << "\" font-size=\"12\" fill=\"" << c
      << "\">" << r.methods[m].method << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", report_json(r).dump(1) + "\n");
  write_text(dir / "report.csv", report_csv(r));
  write_text(dir / "recall_at_k.csv", recall_table_csv(r));
  write_text(dir / "pr.svg", pr_svg(r));
}

}  // namespace barkid
