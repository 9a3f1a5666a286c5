#include "barkid/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

#include "barkid/binary_io.hpp"
#include "barkid/error.hpp"

namespace barkid {
namespace {

constexpr uint32_t kDbVersion = 1;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void sort_ranking(std::vector<RankedEntry>& r, Method method) {
  const bool ascending = method == Method::kBow;
  std::sort(r.begin(), r.end(), [ascending](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return ascending ? a.score < b.score : a.score > b.score;
    return a.image_id < b.image_id;
  });
}

// Keypoints embedded in the DB use 17 significant digits of the widened float
// so that the text round trip is exact.
std::string keypoints_to_text(const std::vector<Keypoint>& kps) {
  std::string out;
  char buf[320];
  for (const Keypoint& k : kps) {
    std::snprintf(buf, sizeof(buf),
                  "{\"x\":%.17g,\"y\":%.17g,\"scale\":%.17g,\"orientation\":%.17g,\"response\":%.17g}\n",
                  double(k.x), double(k.y), double(k.scale), double(k.orientation), double(k.response));
    out += buf;
  }
  return out;
}

std::vector<Keypoint> keypoints_from_text(const std::string& text) {
  std::vector<Keypoint> kps;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      kps.push_back({static_cast<float>(j.at("x").get<double>()), static_cast<float>(j.at("y").get<double>()),
                     static_cast<float>(j.at("scale").get<double>()),
                     static_cast<float>(j.at("orientation").get<double>()),
                     static_cast<float>(j.at("response").get<double>())});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kLoad, std::string("bad embedded keypoint record: ") + e.what());
    }
  }
  return kps;
}

}  // namespace

void ImageSignature::prepare(int alpha) {
  packed = PackedDescriptors::pack(descriptors);
  neighbors = NeighborTable(keypoints, alpha);
}

size_t ImageSignature::valid_descriptors() const {
  return static_cast<size_t>(std::count_if(descriptors.begin(), descriptors.end(),
                                           [](const Descriptor& d) { return !d.degenerate; }));
}

ImageSignature extract_signature(const Image& img, std::string image_id, const DetectorConfig& cfg,
                                 const DescriptorProvider& provider, const Vocabulary* voc,
                                 std::string surface_id) {
  ImageSignature s;
  s.image_id = std::move(image_id);
  s.surface_id = std::move(surface_id);
  const FloatImage prepared = detection_image(img, cfg);
  s.keypoints = detect_prepared(prepared, cfg);
  s.descriptors = provider.describe(s.image_id, prepared, s.keypoints);
  if (voc != nullptr) s.bow = quantize(*voc, s.descriptors);
  s.prepare();
  return s;
}

std::vector<ImageSignature> extract_signatures(const std::vector<std::string>& image_ids,
                                               const std::vector<std::string>& surface_ids,
                                               const std::function<Image(size_t)>& load,
                                               const DetectorConfig& cfg, const DescriptorProvider& provider,
                                               const Vocabulary* voc) {
  cfg.validate();
  if (!surface_ids.empty() && surface_ids.size() != image_ids.size()) {
    throw Error(ErrorCode::kParameter, "surface label count does not match image count");
  }
  std::vector<ImageSignature> out(image_ids.size());
  std::vector<std::string> errors(image_ids.size());
  const auto n = static_cast<std::ptrdiff_t>(image_ids.size());
  std::vector<int> codes(image_ids.size(), 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = extract_signature(load(static_cast<size_t>(i)), image_ids[i], cfg, provider, voc,
                                 surface_ids.empty() ? std::string() : surface_ids[i]);
    } catch (const Error& e) {
      errors[i] = e.what();
      codes[i] = static_cast<int>(e.code());
    } catch (const std::exception& e) {
      errors[i] = e.what();
      codes[i] = static_cast<int>(ErrorCode::kExtraction);
    }
  }
  for (size_t i = 0; i < errors.size(); ++i) {
    if (codes[i] != 0) throw Error(static_cast<ErrorCode>(codes[i]), image_ids[i] + ": " + errors[i]);
  }
  return out;
}

void quantize_all(std::vector<ImageSignature>& signatures, const Vocabulary& voc) {
  const auto n = static_cast<std::ptrdiff_t>(signatures.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) signatures[i].bow = quantize(voc, signatures[i].descriptors);
}

PairScores score_pair(const ImageSignature& query, const ImageSignature& db, const MatchParams& params) {
  const std::vector<Match> m = putative_matches(query.packed, db.packed);
  PairScores s;
  s.lr = lr_filter(m, params.ratio).size();
  if (query.neighbors.alpha() == params.gv.alpha && db.neighbors.alpha() == params.gv.alpha &&
      query.neighbors.size() == query.keypoints.size() && db.neighbors.size() == db.keypoints.size()) {
    s.gv = gv_filter(m, query.neighbors, db.neighbors, params.gv).size();
  } else {
    s.gv = gv_filter(m, query.keypoints, db.keypoints, params.gv).size();
  }
  return s;
}

SignatureDb SignatureDb::build(std::vector<ImageSignature> signatures, const Vocabulary& voc,
                               std::string config) {
  SignatureDb db;
  std::vector<std::pair<std::string, BowVector>> bows;
  bows.reserve(signatures.size());
  for (const ImageSignature& s : signatures) {
    if (s.keypoints.size() != s.descriptors.size()) {
      throw Error(ErrorCode::kBuild, "signature '" + s.image_id + "' has mismatched keypoints/descriptors");
    }
    bows.emplace_back(s.image_id, s.bow);
  }
  db.index_ = InvertedIndex::build(bows, voc.k());
  db.signatures_ = std::move(signatures);
  for (ImageSignature& s : db.signatures_) {
    if (s.packed.size() != s.descriptors.size() || s.neighbors.size() != s.keypoints.size()) s.prepare();
  }
  db.vocabulary_hash_ = voc.hash();
  db.vocabulary_size_ = voc.k();
  db.config_ = std::move(config);
  db.reindex();
  return db;
}

void SignatureDb::reindex() {
  by_id_.clear();
  for (size_t i = 0; i < signatures_.size(); ++i) by_id_.emplace(signatures_[i].image_id, i);
}

const ImageSignature* SignatureDb::find(std::string_view image_id) const {
  const auto it = by_id_.find(std::string(image_id));
  return it == by_id_.end() ? nullptr : &signatures_[it->second];
}

std::vector<std::string> RetrievalResult::ids() const {
  std::vector<std::string> out;
  out.reserve(ranking.size());
  for (const RankedEntry& e : ranking) out.push_back(e.image_id);
  return out;
}

RetrievalResult query_full(const SignatureDb& db, const ImageSignature& query, Method method,
                           const MatchParams& params) {
  if (db.size() == 0) throw Error(ErrorCode::kParameter, "database is empty");
  params.gv.validate();
  RetrievalResult result;
  const auto start = std::chrono::steady_clock::now();
  const auto& sigs = db.signatures();
  std::vector<double> scores(sigs.size(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(sigs.size());
  if (method == Method::kBow) {
    // Index ordinals follow signature order; same distances as the two-stage prefilter.
    scores = db.index().distances(query.bow);
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (sigs[i].image_id == query.image_id) continue;
      const PairScores s = score_pair(query, sigs[i], params);
      scores[i] = static_cast<double>(method == Method::kLr ? s.lr : s.gv);
    }
  }
  for (size_t i = 0; i < sigs.size(); ++i) {
    if (sigs[i].image_id == query.image_id) continue;
    result.ranking.push_back({sigs[i].image_id, scores[i], method});
  }
  sort_ranking(result.ranking, method);
  result.timings.push_back({std::string(method_name(method)) + "_full", elapsed_ms(start)});
  return result;
}

RetrievalResult query_two_stage(const SignatureDb& db, const ImageSignature& query, size_t top_t,
                                Method rerank, const MatchParams& params) {
  if (top_t < 1) throw Error(ErrorCode::kParameter, "top_t must be >= 1");
  if (rerank == Method::kBow) throw Error(ErrorCode::kParameter, "rerank method must be lr or gv");
  params.gv.validate();
  RetrievalResult result;

  auto start = std::chrono::steady_clock::now();
  const InvertedIndex& index = db.index();
  std::vector<ScoredImage> prefilter = index.score(query.bow, std::max<size_t>(1, index.image_count()));
  std::erase_if(prefilter, [&](const ScoredImage& s) { return s.image_id == query.image_id; });
  result.timings.push_back({"bow_prefilter", elapsed_ms(start)});

  start = std::chrono::steady_clock::now();
  const size_t keep = std::min(top_t, prefilter.size());
  std::vector<RankedEntry> block(keep);
  const auto n = static_cast<std::ptrdiff_t>(keep);
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const ImageSignature* s = db.find(prefilter[i].image_id);
    const PairScores ps = score_pair(query, *s, params);
    block[i] = {prefilter[i].image_id, static_cast<double>(rerank == Method::kLr ? ps.lr : ps.gv), rerank};
  }
  sort_ranking(block, rerank);
  result.ranking = std::move(block);
  for (size_t i = keep; i < prefilter.size(); ++i) {
    result.ranking.push_back({prefilter[i].image_id, prefilter[i].distance, Method::kBow});
  }
  result.timings.push_back({std::string(method_name(rerank)) + "_rerank", elapsed_ms(start)});
  return result;
}

std::vector<uint8_t> serialize_db(const SignatureDb& db) {
  ByteWriter w;
  w.magic("BKDB");
  w.u32(kDbVersion);
  w.u64(db.vocabulary_hash());
  w.u32(static_cast<uint32_t>(db.vocabulary_size()));
  w.str32(db.config());
  w.u64(db.size());
  for (const ImageSignature& s : db.signatures()) {
    w.str16(s.image_id);
    w.str16(s.surface_id);
    w.str32(keypoints_to_text(s.keypoints));
    w.u32(static_cast<uint32_t>(s.descriptors.size()));
    for (const Descriptor& d : s.descriptors) w.u8(d.degenerate ? 1 : 0);
    for (const Descriptor& d : s.descriptors) {
      for (float v : d.values) w.f32(v);
    }
    w.u32(static_cast<uint32_t>(s.bow.entries.size()));
    for (const auto& [word, weight] : s.bow.entries) {
      w.u32(word);
      w.f64(weight);
    }
  }
  const InvertedIndex& idx = db.index();
  w.u32(static_cast<uint32_t>(idx.word_count()));
  for (int word = 0; word < idx.word_count(); ++word) {
    const auto& list = idx.postings(static_cast<uint32_t>(word));
    w.u32(static_cast<uint32_t>(list.size()));
    for (const auto& p : list) {
      w.u32(p.image);
      w.f64(p.weight);
    }
  }
  return w.buffer();
}

void save_db(const SignatureDb& db, const std::filesystem::path& path) {
  ByteWriter w;
  const std::vector<uint8_t> bytes = serialize_db(db);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

SignatureDb load_db(const std::filesystem::path& path, const Vocabulary& voc) {
  ByteReader r = ByteReader::open(path, ErrorCode::kLoad);
  if (!r.expect_magic("BKDB")) throw Error(ErrorCode::kLoad, "bad database magic in " + path.string());
  const uint32_t version = r.u32();
  if (version != kDbVersion) {
    throw Error(ErrorCode::kLoad, "unsupported database version " + std::to_string(version));
  }
  SignatureDb db;
  db.vocabulary_hash_ = r.u64();
  if (db.vocabulary_hash_ != voc.hash()) {
    throw Error(ErrorCode::kLoad, "vocabulary hash mismatch: database " + hex64(db.vocabulary_hash_) +
                                      ", vocabulary " + hex64(voc.hash()));
  }
  db.vocabulary_size_ = static_cast<int>(r.u32());
  db.config_ = r.str32();
  const uint64_t count = r.u64();
  std::unordered_set<std::string> ids;
  for (uint64_t i = 0; i < count; ++i) {
    ImageSignature s;
    s.image_id = r.str16();
    if (!ids.insert(s.image_id).second) throw Error(ErrorCode::kLoad, "duplicate image id '" + s.image_id + "'");
    s.surface_id = r.str16();
    s.keypoints = keypoints_from_text(r.str32());
    const uint32_t nd = r.u32();
    if (nd != s.keypoints.size()) throw Error(ErrorCode::kLoad, "keypoint/descriptor count mismatch");
    s.descriptors.resize(nd);
    for (Descriptor& d : s.descriptors) d.degenerate = r.u8() != 0;
    for (Descriptor& d : s.descriptors) {
      for (float& v : d.values) v = r.f32();
    }
    const uint32_t nnz = r.u32();
    for (uint32_t e = 0; e < nnz; ++e) {
      const uint32_t word = r.u32();
      const double weight = r.f64();
      s.bow.entries.emplace_back(word, weight);
    }
    s.prepare();
    db.signatures_.push_back(std::move(s));
  }
  const uint32_t words = r.u32();
  std::vector<std::vector<InvertedIndex::Posting>> postings(words);
  for (auto& list : postings) {
    const uint32_t len = r.u32();
    list.resize(len);
    for (auto& p : list) {
      p.image = r.u32();
      p.weight = r.f64();
    }
  }
  if (!r.at_end()) throw Error(ErrorCode::kLoad, "trailing bytes in database file");
  std::vector<std::string> order;
  for (const ImageSignature& s : db.signatures_) order.push_back(s.image_id);
  db.index_ = InvertedIndex::from_parts(std::move(order), std::move(postings));
  db.reindex();
  for (size_t i = 0; i < db.signatures_.size(); ++i) {
    if (!(db.index_.reconstruct(static_cast<uint32_t>(i)) == db.signatures_[i].bow)) {
      throw Error(ErrorCode::kLoad, "inverted index disagrees with stored BoW of '" +
                                        db.signatures_[i].image_id + "'");
    }
  }
  return db;
}

}  // namespace barkid
