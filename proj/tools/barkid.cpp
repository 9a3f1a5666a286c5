// barkid command line: synth, patches, vocab, index, query, eval, bench, sweep.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "barkid/bench.hpp"
#include "barkid/binary_io.hpp"
#include "barkid/error.hpp"
#include "barkid/image_io.hpp"
#include "barkid/kernels.hpp"
#include "barkid/registration.hpp"
#include "barkid/report.hpp"
#include "barkid/retrieval.hpp"
#include "barkid/synth.hpp"
#include "barkid/vocabulary.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace barkid;

namespace {

struct RunConfig {
  // detector
  int gamma = 500;
  double phi = 2.0;
  double sigma = -1.0;  // < 0: 3 for builtin, 0 for external descriptors
  double contrast = DetectorConfig{}.contrast_threshold;
  std::string descriptor = "builtin";
  // matching / retrieval
  std::string method = "gv";
  double ratio = 0.8;
  int alpha = 15;
  double rho = 0.33;
  size_t top_t = 0;
  uint64_t seed = 1;
  // synth
  int surfaces = 20;
  int views = 12;
  double warp = 0.08;
  double jitter = 0.25;
  int size = 384;
  double noise = 2.0;
  int distractors = 0;
  // patches
  double min_spacing = 32.0;
  bool requests = false;
  // vocab
  int k = 1000;
  int max_iter = 100;
  // bench
  size_t comparisons = 500;
  // sweep
  std::string phis = "1,2,4";
  std::string sigmas = "0,1,3";
  // paths
  std::string corpus, manifests, vocab, db, truth, image, image_id, query_id, out;
  size_t limit = 0;
};

using Setter = std::function<void(RunConfig&, const json&)>;

template <typename T>
Setter setter(T RunConfig::*field) {
  return [field](RunConfig& c, const json& v) { c.*field = v.get<T>(); };
}

const std::map<std::string, Setter>& config_keys() {
  static const std::map<std::string, Setter> keys = {
      {"gamma", setter(&RunConfig::gamma)},
      {"phi", setter(&RunConfig::phi)},
      {"sigma", setter(&RunConfig::sigma)},
      {"contrast", setter(&RunConfig::contrast)},
      {"descriptor", setter(&RunConfig::descriptor)},
      {"method", setter(&RunConfig::method)},
      {"ratio", setter(&RunConfig::ratio)},
      {"alpha", setter(&RunConfig::alpha)},
      {"rho", setter(&RunConfig::rho)},
      {"top_t", setter(&RunConfig::top_t)},
      {"seed", setter(&RunConfig::seed)},
      {"surfaces", setter(&RunConfig::surfaces)},
      {"views", setter(&RunConfig::views)},
      {"warp", setter(&RunConfig::warp)},
      {"jitter", setter(&RunConfig::jitter)},
      {"size", setter(&RunConfig::size)},
      {"noise", setter(&RunConfig::noise)},
      {"distractors", setter(&RunConfig::distractors)},
      {"min_spacing", setter(&RunConfig::min_spacing)},
      {"requests", setter(&RunConfig::requests)},
      {"k", setter(&RunConfig::k)},
      {"max_iter", setter(&RunConfig::max_iter)},
      {"comparisons", setter(&RunConfig::comparisons)},
      {"phis", setter(&RunConfig::phis)},
      {"sigmas", setter(&RunConfig::sigmas)},
      {"corpus", setter(&RunConfig::corpus)},
      {"manifests", setter(&RunConfig::manifests)},
      {"vocab", setter(&RunConfig::vocab)},
      {"db", setter(&RunConfig::db)},
      {"truth", setter(&RunConfig::truth)},
      {"image", setter(&RunConfig::image)},
      {"image_id", setter(&RunConfig::image_id)},
      {"query_id", setter(&RunConfig::query_id)},
      {"out", setter(&RunConfig::out)},
      {"limit", setter(&RunConfig::limit)},
  };
  return keys;
}

std::string flag_for(const std::string& key) {
  std::string f = "--" + key;
  for (char& c : f) {
    if (c == '_') c = '-';
  }
  return f;
}

// Config file values fill in whatever was not given on the command line.
void apply_config_file(RunConfig& cfg, const std::string& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, "config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config " + path + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const auto it = config_keys().find(key);
    if (it == config_keys().end()) throw Error(ErrorCode::kConfig, "unknown config key '" + key + "'");
    const CLI::Option* opt = sub.get_option_no_throw(flag_for(key));
    if (opt != nullptr && opt->count() > 0) continue;
    try {
      it->second(cfg, value);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, "config key '" + key + "': " + e.what());
    }
  }
}

json resolved_json(const RunConfig& c) {
  return {{"gamma", c.gamma},         {"phi", c.phi},
          {"sigma", c.sigma},         {"contrast", c.contrast},
          {"descriptor", c.descriptor}, {"method", c.method},
          {"ratio", c.ratio},         {"alpha", c.alpha},
          {"rho", c.rho},             {"top_t", c.top_t},
          {"seed", c.seed},           {"surfaces", c.surfaces},
          {"views", c.views},         {"warp", c.warp},
          {"jitter", c.jitter},       {"size", c.size},
          {"noise", c.noise},         {"distractors", c.distractors},
          {"min_spacing", c.min_spacing}, {"requests", c.requests},
          {"k", c.k},                 {"max_iter", c.max_iter},
          {"comparisons", c.comparisons}, {"phis", c.phis},
          {"sigmas", c.sigmas},       {"corpus", c.corpus},
          {"manifests", c.manifests}, {"vocab", c.vocab},
          {"db", c.db},               {"truth", c.truth},
          {"image", c.image},         {"image_id", c.image_id},
          {"query_id", c.query_id},   {"out", c.out},
          {"limit", c.limit}};
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::kConfig, std::string("missing required ") + flag);
}

std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kConfig, std::string("bad number in ") + what + ": '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorCode::kConfig, std::string(what) + " is empty");
  return out;
}

std::vector<Method> parse_methods(const std::string& s) {
  std::vector<Method> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_method(item));
  if (out.empty()) throw Error(ErrorCode::kParameter, "no method given");
  return out;
}

bool is_external(const std::string& descriptor) { return descriptor.rfind("external:", 0) == 0; }

DetectorConfig detector_config(const RunConfig& c) {
  DetectorConfig d;
  d.gamma = c.gamma;
  d.phi = static_cast<float>(c.phi);
  d.sigma_blur = static_cast<float>(c.sigma >= 0.0 ? c.sigma : (is_external(c.descriptor) ? 0.0 : 3.0));
  d.contrast_threshold = static_cast<float>(c.contrast);
  d.validate();
  return d;
}

DescriptorProvider make_provider(const std::string& descriptor) {
  if (descriptor == "builtin") return DescriptorProvider::builtin();
  if (is_external(descriptor)) return load_descriptor_file(descriptor.substr(9));
  throw Error(ErrorCode::kConfig, "descriptor must be 'builtin' or 'external:<path>', got '" + descriptor + "'");
}

MatchParams match_params(const RunConfig& c) {
  MatchParams p;
  if (!(c.ratio > 0.0 && c.ratio <= 1.0)) throw Error(ErrorCode::kParameter, "ratio must be in (0, 1]");
  p.ratio = c.ratio;
  p.gv.alpha = c.alpha;
  p.gv.rho = c.rho;
  p.gv.validate();
  return p;
}

// Stored in the DB so queries re-extract with the same settings.
json extraction_json(const DetectorConfig& d, const std::string& descriptor) {
  return {{"gamma", d.gamma},
          {"phi", d.phi},
          {"sigma", d.sigma_blur},
          {"contrast", d.contrast_threshold},
          {"octaves", d.octaves},
          {"scales", d.scales_per_octave},
          {"edge", d.edge_ratio_threshold},
          {"descriptor", descriptor}};
}

DetectorConfig detector_from_db(const SignatureDb& db) {
  DetectorConfig d;
  try {
    const json j = json::parse(db.config());
    d.gamma = j.at("gamma").get<int>();
    d.phi = j.at("phi").get<float>();
    d.sigma_blur = j.at("sigma").get<float>();
    d.contrast_threshold = j.at("contrast").get<float>();
    d.octaves = j.at("octaves").get<int>();
    d.scales_per_octave = j.at("scales").get<int>();
    d.edge_ratio_threshold = j.at("edge").get<float>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kLoad, std::string("database config is unreadable: ") + e.what());
  }
  return d;
}

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "missing";
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

// Records the resolved configuration and input hashes next to the artifact.
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& cfg) {
    j_["command"] = std::move(command);
    j_["config"] = resolved_json(cfg);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }
  void input(const fs::path& p) {
    if (fs::is_directory(p)) {
      const fs::path list = p / "corpus.json";
      if (fs::exists(list)) {
        j_["inputs"][p.string()] = file_hash(list);
        for (const CorpusEntry& e : read_corpus_list(p)) j_["inputs"][e.path.string()] = file_hash(e.path);
        return;
      }
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) j_["inputs"][e.path().string()] = file_hash(e.path());
      }
      return;
    }
    j_["inputs"][p.string()] = file_hash(p);
  }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  void set(const std::string& key, json v) { j_[key] = std::move(v); }
  void write(const fs::path& path) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << j_.dump(1) << '\n';
  }

 private:
  json j_;
};

fs::path manifest_path_for_file(const fs::path& out) { return fs::path(out.string() + ".run.json"); }

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

struct LoadedCorpus {
  std::vector<CorpusEntry> entries;
  std::vector<std::string> ids;
  std::vector<std::string> labels;
};

LoadedCorpus load_corpus(const std::string& dir) {
  LoadedCorpus c;
  c.entries = read_corpus_list(dir);
  for (const CorpusEntry& e : c.entries) {
    c.ids.push_back(e.image_id);
    c.labels.push_back(e.surface_id);
  }
  return c;
}

std::vector<ImageSignature> extract_corpus(const LoadedCorpus& c, const DetectorConfig& d,
                                           const DescriptorProvider& provider, const Vocabulary* voc) {
  return extract_signatures(c.ids, c.labels, [&](size_t i) { return read_image(c.entries[i].path); }, d, provider,
                            voc);
}

// ---------------------------------------------------------------- commands

int cmd_synth(const RunConfig& c) {
  require(c.out, "--out");
  SynthParams p;
  p.seed = c.seed;
  p.surfaces = c.surfaces;
  p.views_per_surface = c.views;
  p.warp_magnitude = c.warp;
  p.illum_jitter = c.jitter;
  p.size = c.size;
  p.noise_sigma = c.noise;
  const SynthCorpus corpus = synth_corpus(p);
  const std::vector<SynthView> distractors = synth_distractors(p, c.distractors);
  write_corpus(corpus, distractors, c.out);
  RunManifest m("synth", c);
  m.output(fs::path(c.out) / "corpus.json");
  m.output(fs::path(c.out) / "ground_truth.json");
  m.set("images", corpus.views.size() + distractors.size());
  m.write(fs::path(c.out) / "run_manifest.json");
  return 0;
}

int cmd_patches_requests(const RunConfig& c) {
  require(c.corpus, "--corpus");
  const DetectorConfig d = detector_config(c);
  const LoadedCorpus corpus = load_corpus(c.corpus);
  const fs::path out = c.out;
  std::vector<std::string> rows(corpus.entries.size());
  fs::create_directories(out / "keypoints");
  const auto n = static_cast<std::ptrdiff_t>(corpus.entries.size());
  std::vector<std::string> errors(corpus.entries.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const CorpusEntry& e = corpus.entries[i];
      const Image img = read_image(e.path);
      const std::vector<Keypoint> kps = detect(img, d);
      const Image small = downsample(img, d.phi);
      const fs::path dir = out / "patches" / e.image_id;
      fs::create_directories(dir);
      std::ofstream kf(out / "keypoints" / (e.image_id + ".jsonl"));
      write_keypoints_jsonl(kf, kps);
      for (size_t k = 0; k < kps.size(); ++k) {
        const std::string rel = "patches/" + e.image_id + "/" + std::to_string(k) + ".png";
        write_image(crop_patch(small, kps[k], e.image_id).pixels, out / rel);
        rows[i] += json{{"image_id", e.image_id}, {"keypoint_index", k}, {"x", kps[k].x}, {"y", kps[k].y},
                        {"patch", rel}}
                       .dump() +
                   "\n";
      }
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  }
  for (size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw Error(ErrorCode::kExtraction, corpus.ids[i] + ": " + errors[i]);
  }
  std::ofstream req(out / "requests.jsonl");
  for (const std::string& r : rows) req << r;
  RunManifest m("patches", c);
  m.input(c.corpus);
  m.output(out / "requests.jsonl");
  m.write(out / "run_manifest.json");
  return 0;
}

int cmd_patches(const RunConfig& c) {
  require(c.out, "--out");
  fs::create_directories(c.out);
  if (c.requests) return cmd_patches_requests(c);
  require(c.manifests, "--manifests");
  std::vector<fs::path> files;
  if (fs::is_directory(c.manifests)) {
    for (const auto& e : fs::directory_iterator(c.manifests)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(c.manifests);
  }
  std::vector<SurfaceManifest> manifests;
  for (const fs::path& f : files) manifests.push_back(read_manifest(f));
  DatasetBuildConfig cfg;
  cfg.detector = detector_config(c);
  cfg.consolidation.min_spacing = c.min_spacing;
  cfg.consolidation.phi = cfg.detector.phi;
  // Manifest image paths are relative to the corpus root, one level above manifests/.
  const fs::path base = c.corpus.empty() ? fs::path(files.front()).parent_path().parent_path() : fs::path(c.corpus);
  const std::vector<SurfaceBuildResult> results = build_patch_datasets(manifests, base, cfg, c.out);
  json summary = json::array();
  json homographies = json::object();
  int failed = 0;
  for (const SurfaceBuildResult& r : results) {
    summary.push_back({{"surface_id", r.surface_id}, {"keypoints", r.keypoints}, {"patches", r.patches},
                       {"error", r.error}});
    if (!r.error.empty()) {
      ++failed;
      std::fprintf(stderr, "warning: surface %s skipped: %s\n", r.surface_id.c_str(), r.error.c_str());
    } else {
      homographies[r.surface_id] = homographies_json(r);
    }
  }
  write_json_file(fs::path(c.out) / "homographies.json", homographies);
  RunManifest m("patches", c);
  for (const fs::path& f : files) m.input(f);
  m.set("surfaces", summary);
  m.output(fs::path(c.out) / "manifest.jsonl");
  m.write(fs::path(c.out) / "run_manifest.json");
  if (failed == static_cast<int>(results.size())) throw Error(ErrorCode::kBuild, "every surface failed");
  return 0;
}

int cmd_vocab(const RunConfig& c) {
  require(c.corpus, "--corpus");
  require(c.out, "--out");
  const DetectorConfig d = detector_config(c);
  const DescriptorProvider provider = make_provider(c.descriptor);
  const LoadedCorpus corpus = load_corpus(c.corpus);
  const std::vector<ImageSignature> sigs = extract_corpus(corpus, d, provider, nullptr);
  std::vector<std::vector<Descriptor>> per_image;
  for (const ImageSignature& s : sigs) per_image.push_back(s.descriptors);
  KMeansParams kp;
  kp.k = c.k;
  kp.seed = c.seed;
  kp.max_iterations = c.max_iter;
  const Vocabulary voc = train_vocab(per_image, kp);
  save_vocabulary(voc, c.out);
  RunManifest m("vocab", c);
  m.input(c.corpus);
  m.output(c.out);
  m.set("vocabulary", {{"k", voc.k()},
                       {"hash", hex64(voc.hash())},
                       {"descriptors", voc.meta().descriptor_count},
                       {"iterations", voc.meta().iterations},
                       {"inertia", voc.meta().inertia}});
  m.write(manifest_path_for_file(c.out));
  return 0;
}

int cmd_index(const RunConfig& c) {
  require(c.corpus, "--corpus");
  require(c.vocab, "--vocab");
  require(c.out, "--out");
  const DetectorConfig d = detector_config(c);
  const DescriptorProvider provider = make_provider(c.descriptor);
  const Vocabulary voc = load_vocabulary(c.vocab);
  const LoadedCorpus corpus = load_corpus(c.corpus);
  std::vector<ImageSignature> sigs = extract_corpus(corpus, d, provider, &voc);
  const SignatureDb db = SignatureDb::build(std::move(sigs), voc, extraction_json(d, c.descriptor).dump());
  save_db(db, c.out);
  RunManifest m("index", c);
  m.input(c.corpus);
  m.input(c.vocab);
  if (is_external(c.descriptor)) m.input(c.descriptor.substr(9));
  m.output(c.out);
  m.set("signatures", db.size());
  m.set("index_sparsity", db.index().sparsity());
  m.write(manifest_path_for_file(c.out));
  return 0;
}

json ranking_json(const std::string& query, const RetrievalResult& r, size_t limit) {
  json rows = json::array();
  for (size_t i = 0; i < r.ranking.size() && (limit == 0 || i < limit); ++i) {
    rows.push_back({{"rank", i + 1},
                    {"image_id", r.ranking[i].image_id},
                    {"score", r.ranking[i].score},
                    {"scored_by", method_name(r.ranking[i].method)}});
  }
  return {{"query", query}, {"ranking", rows}};
}

int cmd_query(const RunConfig& c) {
  require(c.db, "--db");
  require(c.vocab, "--vocab");
  require(c.out, "--out");
  const Vocabulary voc = load_vocabulary(c.vocab);
  const SignatureDb db = load_db(c.db, voc);
  const Method method = parse_method(c.method);
  const MatchParams params = match_params(c);
  ImageSignature query;
  if (!c.query_id.empty()) {
    const ImageSignature* s = db.find(c.query_id);
    if (s == nullptr) throw Error(ErrorCode::kParameter, "query id '" + c.query_id + "' is not in the database");
    query = *s;
  } else {
    require(c.image, "--image or --query-id");
    const std::string id = c.image_id.empty() ? fs::path(c.image).stem().string() : c.image_id;
    const json stored = json::parse(db.config());
    const std::string descriptor = stored.value("descriptor", std::string("builtin"));
    query = extract_signature(read_image(c.image), id, detector_from_db(db), make_provider(descriptor), &voc);
  }
  query.prepare(params.gv.alpha);
  RetrievalResult r;
  if (c.top_t > 0 && method != Method::kBow) {
    r = query_two_stage(db, query, c.top_t, method, params);
  } else {
    r = query_full(db, query, method, params);
  }
  json out = ranking_json(query.image_id, r, c.limit);
  out["method"] = c.method;
  out["top_t"] = c.top_t;
  write_json_file(c.out, out);
  RunManifest m("query", c);
  m.input(c.db);
  m.input(c.vocab);
  if (!c.image.empty()) m.input(c.image);
  json timings = json::object();
  for (const StageTiming& t : r.timings) timings[t.stage] = t.ms;
  m.set("timings_ms", timings);
  m.output(c.out);
  m.write(manifest_path_for_file(c.out));
  return 0;
}

GroundTruth truth_for(const RunConfig& c) {
  if (!c.truth.empty()) return load_ground_truth(c.truth);
  if (!c.corpus.empty()) return load_ground_truth(fs::path(c.corpus) / "ground_truth.json");
  throw Error(ErrorCode::kConfig, "missing required --truth (or --corpus holding ground_truth.json)");
}

int cmd_eval(const RunConfig& c) {
  require(c.db, "--db");
  require(c.vocab, "--vocab");
  require(c.out, "--out");
  const Vocabulary voc = load_vocabulary(c.vocab);
  const SignatureDb db = load_db(c.db, voc);
  const GroundTruth gt = truth_for(c);
  EvalSetup setup;
  setup.methods = parse_methods(c.method);
  setup.params = match_params(c);
  setup.top_t = c.top_t;
  std::vector<ImageSignature> queries;
  for (const ImageSignature& s : db.signatures()) {
    if (gt.relevant.count(s.image_id)) {
      queries.push_back(s);
      queries.back().prepare(setup.params.gv.alpha);
    }
  }
  if (queries.empty()) throw Error(ErrorCode::kValidation, "no database image appears in the ground truth");
  const EvalReport report = evaluate(db, queries, gt, setup);
  write_report(report, c.out);
  RunManifest m("eval", c);
  m.input(c.db);
  m.input(c.vocab);
  if (!c.truth.empty()) m.input(c.truth);
  for (const char* f : {"report.json", "report.csv", "recall_at_k.csv", "pr.svg"}) m.output(fs::path(c.out) / f);
  m.write(fs::path(c.out) / "run_manifest.json");
  return 0;
}

int cmd_bench(const RunConfig& c) {
  require(c.db, "--db");
  require(c.vocab, "--vocab");
  require(c.out, "--out");
  const Vocabulary voc = load_vocabulary(c.vocab);
  const SignatureDb db = load_db(c.db, voc);
  BenchParams bp;
  bp.comparisons = c.comparisons;
  bp.match = match_params(c);
  const std::vector<Method> methods = parse_methods(c.method == "gv" ? "bow,lr,gv" : c.method);
  const std::vector<BenchRow> rows = bench_compare(db.signatures(), db.signatures(), methods, bp);
  std::ostringstream csv;
  csv << "method,comparisons,mean_ms,median_ms,std_ms,mean_descriptors\n";
  json j = json::array();
  for (const BenchRow& r : rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%zu,%.6f,%.6f,%.6f,%.1f\n", r.method.c_str(), r.comparisons, r.mean_ms,
                  r.median_ms, r.std_ms, r.mean_descriptors);
    csv << line;
    j.push_back({{"method", r.method},
                 {"comparisons", r.comparisons},
                 {"mean_ms", r.mean_ms},
                 {"median_ms", r.median_ms},
                 {"std_ms", r.std_ms},
                 {"mean_descriptors", r.mean_descriptors}});
  }
  std::ofstream(c.out) << csv.str();
  std::cout << csv.str();
  RunManifest m("bench", c);
  m.input(c.db);
  m.input(c.vocab);
  m.set("rows", j);
  m.output(c.out);
  m.write(manifest_path_for_file(c.out));
  return 0;
}

int cmd_sweep(const RunConfig& c) {
  require(c.corpus, "--corpus");
  require(c.out, "--out");
  const LoadedCorpus corpus = load_corpus(c.corpus);
  const GroundTruth gt = truth_for(c);
  const DescriptorProvider provider = make_provider(c.descriptor);
  EvalSetup setup;
  setup.methods = parse_methods(c.method);
  setup.params = match_params(c);
  const bool needs_vocab = std::find(setup.methods.begin(), setup.methods.end(), Method::kBow) != setup.methods.end();
  std::ostringstream csv;
  csv << "phi,sigma,method,mean_keypoints,map,map_std,p_at_1,r_precision\n";
  for (double phi : parse_list(c.phis, "--phis")) {
    for (double sigma : parse_list(c.sigmas, "--sigmas")) {
      RunConfig cell = c;
      cell.phi = phi;
      cell.sigma = sigma;
      const DetectorConfig d = detector_config(cell);
      std::vector<ImageSignature> sigs = extract_corpus(corpus, d, provider, nullptr);
      Vocabulary voc;
      if (needs_vocab) {
        // Each cell trains its own vocabulary on the corpus it is scored on.
        std::vector<std::vector<Descriptor>> per_image;
        for (const ImageSignature& s : sigs) per_image.push_back(s.descriptors);
        KMeansParams kp;
        kp.k = c.k;
        kp.seed = c.seed;
        kp.max_iterations = c.max_iter;
        voc = train_vocab(per_image, kp);
        quantize_all(sigs, voc);
      } else {
        voc = Vocabulary(std::vector<float>(kDescriptorDim, 0.0f), std::vector<float>(1, 0.0f));
      }
      double kps = 0.0;
      for (const ImageSignature& s : sigs) kps += static_cast<double>(s.keypoints.size());
      kps /= std::max<double>(1.0, static_cast<double>(sigs.size()));
      std::vector<ImageSignature> queries;
      for (const ImageSignature& s : sigs) {
        if (gt.relevant.count(s.image_id)) queries.push_back(s);
      }
      const SignatureDb db = SignatureDb::build(std::move(sigs), voc);
      const EvalReport report = evaluate(db, queries, gt, setup);
      for (const MethodSummary& ms : report.methods) {
        char line[256];
        std::snprintf(line, sizeof(line), "%g,%g,%s,%.1f,%.6f,%.6f,%.6f,%.6f\n", phi, sigma, ms.method.c_str(), kps,
                      ms.map.mean, ms.map.std, ms.p_at_1.mean, ms.r_precision.mean);
        csv << line;
      }
    }
  }
  if (fs::path(c.out).has_parent_path()) fs::create_directories(fs::path(c.out).parent_path());
  std::ofstream(c.out) << csv.str();
  std::cout << csv.str();
  RunManifest m("sweep", c);
  m.input(c.corpus);
  m.output(c.out);
  m.write(manifest_path_for_file(c.out));
  return 0;
}

void print_error(ErrorCode code, const std::string& message) {
  const json j = {{"error", error_name(code)}, {"code", static_cast<int>(code)}, {"message", message}};
  std::cerr << j.dump() << '\n';
}

struct Command {
  CLI::App* app;
  std::function<int(const RunConfig&)> run;
};

void add_detector_flags(CLI::App* s, RunConfig& c) {
  s->add_option("--gamma", c.gamma, "max keypoints per image");
  s->add_option("--phi", c.phi, "downsizing factor");
  s->add_option("--sigma", c.sigma, "pre-detection blur (default 3 builtin, 0 external)");
  s->add_option("--contrast", c.contrast, "DoG contrast threshold on [0,1] intensities");
  s->add_option("--descriptor", c.descriptor, "builtin | external:<BKD1 file>");
}

void add_match_flags(CLI::App* s, RunConfig& c) {
  s->add_option("--method", c.method, "bow | lr | gv (comma list for eval/bench/sweep)");
  s->add_option("--ratio", c.ratio, "LR ratio");
  s->add_option("--alpha", c.alpha, "GV neighbourhood size");
  s->add_option("--rho", c.rho, "GV consistent fraction");
  s->add_option("--top-t", c.top_t, "BoW prefilter size, 0 = full scan");
}

}  // namespace

int main(int argc, char** argv) {
  kernels::configure_threads();
  CLI::App app{"barkid: surface re-identification by local features"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_file;
  std::vector<Command> commands;

  auto add = [&](const char* name, const char* help, std::function<int(const RunConfig&)> run) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_file, "JSON config; flags override it");
    s->add_option("--out", cfg.out, "output path");
    s->add_option("--seed", cfg.seed, "random seed");
    commands.push_back({s, std::move(run)});
    return s;
  };

  CLI::App* synth = add("synth", "generate a synthetic surface corpus", cmd_synth);
  synth->add_option("--surfaces", cfg.surfaces);
  synth->add_option("--views", cfg.views);
  synth->add_option("--warp", cfg.warp, "max corner jitter, fraction of the side");
  synth->add_option("--jitter", cfg.jitter, "max illumination jitter");
  synth->add_option("--size", cfg.size, "view side in pixels");
  synth->add_option("--noise", cfg.noise, "additive noise sigma, grey levels");
  synth->add_option("--distractors", cfg.distractors, "extra unrelated single views");

  CLI::App* patches = add("patches", "build the aligned patch archive (or keypoint requests)", cmd_patches);
  add_detector_flags(patches, cfg);
  patches->add_option("--manifests", cfg.manifests, "surface manifest file or directory");
  patches->add_option("--corpus", cfg.corpus, "corpus directory (image root / requests input)");
  patches->add_option("--min-spacing", cfg.min_spacing, "consolidation spacing in reference pixels");
  patches->add_flag("--requests", cfg.requests, "export per-image keypoints and patches for external describing");

  CLI::App* vocab = add("vocab", "train a visual vocabulary", cmd_vocab);
  add_detector_flags(vocab, cfg);
  vocab->add_option("--corpus", cfg.corpus, "training corpus directory");
  vocab->add_option("--k", cfg.k, "number of words");
  vocab->add_option("--max-iter", cfg.max_iter, "Lloyd iterations");

  CLI::App* index = add("index", "extract signatures and build the database", cmd_index);
  add_detector_flags(index, cfg);
  index->add_option("--corpus", cfg.corpus);
  index->add_option("--vocab", cfg.vocab);

  CLI::App* query = add("query", "rank the database for one query", cmd_query);
  add_match_flags(query, cfg);
  query->add_option("--db", cfg.db);
  query->add_option("--vocab", cfg.vocab);
  query->add_option("--image", cfg.image, "query image file");
  query->add_option("--image-id", cfg.image_id, "id of the query image (external descriptors)");
  query->add_option("--query-id", cfg.query_id, "use a stored signature as the query");
  query->add_option("--limit", cfg.limit, "keep only the first N ranks, 0 = all");

  CLI::App* eval = add("eval", "evaluate retrieval against ground truth", cmd_eval);
  add_match_flags(eval, cfg);
  eval->add_option("--db", cfg.db);
  eval->add_option("--vocab", cfg.vocab);
  eval->add_option("--truth", cfg.truth, "ground_truth.json");
  eval->add_option("--corpus", cfg.corpus, "corpus directory holding ground_truth.json");

  CLI::App* bench = add("bench", "single-thread comparison timings", cmd_bench);
  add_match_flags(bench, cfg);
  bench->add_option("--db", cfg.db);
  bench->add_option("--vocab", cfg.vocab);
  bench->add_option("--comparisons", cfg.comparisons, "pairs timed per method (>= 100)");

  CLI::App* sweep = add("sweep", "grid over (phi, sigma), one CSV row per cell and method", cmd_sweep);
  add_detector_flags(sweep, cfg);
  add_match_flags(sweep, cfg);
  sweep->add_option("--corpus", cfg.corpus);
  sweep->add_option("--truth", cfg.truth);
  sweep->add_option("--phis", cfg.phis, "comma list");
  sweep->add_option("--sigmas", cfg.sigmas, "comma list");
  sweep->add_option("--k", cfg.k, "vocabulary size when bow is swept");
  sweep->add_option("--max-iter", cfg.max_iter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(ErrorCode::kConfig, e.what());
    return static_cast<int>(ErrorCode::kConfig);
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      if (!config_file.empty()) apply_config_file(cfg, config_file, *c.app);
      return c.run(cfg);
    } catch (const Error& e) {
      print_error(e.code(), e.what());
      return static_cast<int>(e.code());
    } catch (const fs::filesystem_error& e) {
      print_error(ErrorCode::kIo, e.what());
      return static_cast<int>(ErrorCode::kIo);
    } catch (const std::exception& e) {
      std::cerr << json{{"error", "internal_error"}, {"code", 1}, {"message", e.what()}}.dump() << '\n';
      return 1;
    }
  }
  return 1;
}
