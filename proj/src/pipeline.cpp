#include "chronotopic/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>

#include "chronotopic/classical.hpp"
#include "chronotopic/dynamics.hpp"
#include "chronotopic/embedding.hpp"
#include "chronotopic/manifold.hpp"
#include "chronotopic/svg.hpp"

namespace chronotopic {

namespace {

using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

double seconds_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

[[noreturn]] void bad_config(const std::string& what) {
  throw ParseError("config: " + what);
}

const json& section_of(const json& j, const std::string& name) {
  static const json empty = json::object();
  if (!j.contains(name) || j.at(name).is_null()) return empty;
  const json& s = j.at(name);
  if (!s.is_object()) bad_config(name + " must be an object");
  return s;
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<std::string_view> allowed) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      bad_config("unknown key \"" + (section.empty() ? item.key() : section + "." + item.key()) +
                 "\"");
  }
}

bool has_value(const json& j, const std::string& key) {
  return j.contains(key) && !j.at(key).is_null();
}

int int_or(const json& j, const std::string& section, const std::string& key, int fallback) {
  if (!has_value(j, key)) return fallback;
  if (!j.at(key).is_number_integer()) bad_config(section + "." + key + " must be an integer");
  return j.at(key).get<int>();
}

double real_or(const json& j, const std::string& section, const std::string& key,
               double fallback) {
  if (!has_value(j, key)) return fallback;
  if (!j.at(key).is_number()) bad_config(section + "." + key + " must be a number");
  return j.at(key).get<double>();
}

bool bool_or(const json& j, const std::string& section, const std::string& key, bool fallback) {
  if (!has_value(j, key)) return fallback;
  if (!j.at(key).is_boolean()) bad_config(section + "." + key + " must be a boolean");
  return j.at(key).get<bool>();
}

std::string str_or(const json& j, const std::string& section, const std::string& key,
                   const std::string& fallback) {
  if (!has_value(j, key)) return fallback;
  if (!j.at(key).is_string()) bad_config(section + "." + key + " must be a string");
  return j.at(key).get<std::string>();
}

fs::path path_or(const json& j, const std::string& section, const std::string& key,
                 const fs::path& base, const fs::path& fallback) {
  std::string s = str_or(j, section, key, std::string());
  if (s.empty()) return fallback;
  fs::path p(s);
  return p.is_absolute() ? p : base / p;
}

void check_file(const fs::path& p, const std::string& what) {
  if (!p.empty() && !fs::exists(p))
    throw ValidationError(what + " not found: " + p.string());
}

void validate_cluster_params(const ClusterParams& c) {
  auto bad = [](const std::string& m) { throw ValidationError("config: cluster." + m); };
  if (c.n_neighbors < 2) bad("n_neighbors must be >= 2");
  if (c.n_components < 1) bad("n_components must be >= 1");
  if (c.min_dist < 0) bad("min_dist must be >= 0");
  if (c.spread <= 0) bad("spread must be > 0");
  if (c.metric != "cosine" && c.metric != "euclidean") bad("metric must be cosine or euclidean");
  if (c.epochs < 50) bad("epochs must be >= 50 (layout optimizer minimum)");
  if (c.min_cluster_size < 2) bad("min_cluster_size must be >= 2");
  if (c.min_samples < 0) bad("min_samples must be >= 0");
  if (c.min_topic_size < 0) bad("min_topic_size must be >= 0");
}

void apply_cluster_fragment(ClusterParams& c, const json& j, const std::string& section) {
  check_keys(j, section,
             {"n_neighbors", "n_components", "min_dist", "spread", "metric", "epochs",
              "min_cluster_size", "min_samples", "min_topic_size"});
  c.n_neighbors = int_or(j, section, "n_neighbors", c.n_neighbors);
  c.n_components = int_or(j, section, "n_components", c.n_components);
  c.min_dist = real_or(j, section, "min_dist", c.min_dist);
  c.spread = real_or(j, section, "spread", c.spread);
  c.metric = str_or(j, section, "metric", c.metric);
  c.epochs = int_or(j, section, "epochs", c.epochs);
  c.min_cluster_size = int_or(j, section, "min_cluster_size", c.min_cluster_size);
  c.min_samples = int_or(j, section, "min_samples", c.min_samples);
  c.min_topic_size = int_or(j, section, "min_topic_size", c.min_topic_size);
}

// ---------------------------------------------------------------------------
// artifact layout
// ---------------------------------------------------------------------------

struct ArtifactPaths {
  fs::path out, prepared, tokens, vocab, summary;
  fs::path emb_vectors, emb_index;
  fs::path models, dynamic_dir, tune_dir, trials, best;
  fs::path report_dir, comparison_csv, comparison_md, direction, index_html;
};

ArtifactPaths artifact_paths(const PipelineConfig& cfg) {
  ArtifactPaths p;
  p.out = cfg.output_dir;
  p.prepared = p.out / "prepared";
  p.tokens = p.prepared / "tokens.jsonl";
  p.vocab = p.prepared / "vocabulary.csv";
  p.summary = p.prepared / "summary.json";
  p.emb_vectors = p.out / "embeddings" / "vectors.bin";
  p.emb_index = p.out / "embeddings" / "index.jsonl";
  p.models = p.out / "models";
  p.dynamic_dir = p.out / "dynamic";
  p.tune_dir = p.out / "tune";
  p.trials = p.tune_dir / "trials.jsonl";
  p.best = p.tune_dir / "best.json";
  p.report_dir = p.out / "report";
  p.comparison_csv = p.report_dir / "comparison.csv";
  p.comparison_md = p.report_dir / "comparison.md";
  p.direction = p.report_dir / "expected_direction.json";
  p.index_html = p.report_dir / "index.html";
  return p;
}

// ---------------------------------------------------------------------------
// prepared artifacts
// ---------------------------------------------------------------------------

struct Prepared {
  std::vector<TokenizedDocument> docs;
  std::vector<std::string> uids;
  std::vector<int> years;
  std::vector<int> bins;  // -1 when no bins were configured
  Vocabulary vocab;
  std::unordered_map<std::string, int> bin_map;  // uids with a bin only
};

Prepared load_prepared(const ArtifactPaths& p) {
  if (!fs::exists(p.tokens) || !fs::exists(p.vocab))
    throw ValidationError("prepared artifacts missing under " + p.prepared.string() +
                          "; run prepare first");
  Prepared out;
  for_each_jsonl(p.tokens, [&](std::size_t line, const json& rec) {
    TokenizedDocument d;
    try {
      d.uid = rec.at("uid").get<std::string>();
      d.tokens = rec.at("tokens").get<std::vector<std::string>>();
      out.years.push_back(rec.at("year").get<int>());
      out.bins.push_back(rec.at("bin").get<int>());
    } catch (const json::exception& e) {
      throw ParseError(p.tokens.string() + " line " + std::to_string(line) + ": " + e.what());
    }
    if (out.bins.back() >= 0) out.bin_map.emplace(d.uid, out.bins.back());
    out.uids.push_back(d.uid);
    out.docs.push_back(std::move(d));
  });
  if (out.docs.empty()) throw ValidationError(p.tokens.string() + " holds no documents");

  std::istringstream in(read_text_file(p.vocab));
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = csv_split(line);
    if (f.size() != 3) throw ParseError(p.vocab.string() + ": malformed row \"" + line + "\"");
    out.vocab.ids.emplace(f[0], out.vocab.size());
    out.vocab.terms.push_back(f[0]);
    out.vocab.doc_freq.push_back(std::stoi(f[1]));
    out.vocab.corpus_freq.push_back(std::stoll(f[2]));
  }
  if (out.vocab.size() == 0) throw ValidationError(p.vocab.string() + " holds no terms");
  return out;
}

// ---------------------------------------------------------------------------
// embeddings
// ---------------------------------------------------------------------------

EmbeddingMatrix obtain_embeddings(const PipelineConfig& cfg, const ArtifactPaths& p,
                                  const Prepared& prep, StageClock& clock) {
  if (fs::exists(p.emb_vectors) && fs::exists(p.emb_index))
    return load_embeddings(p.emb_vectors, p.emb_index, prep.uids);

  EmbeddingMatrix emb;
  if (cfg.embedding.source == "hash") {
    std::uint64_t seed =
        cfg.embedding.seed ? *cfg.embedding.seed : derive_seed(cfg.seed, "embedding");
    emb = hash_embed(prep.docs, prep.vocab, cfg.embedding.d, seed);
  } else {
    emb = load_embeddings(cfg.embedding.vectors, cfg.embedding.index, prep.uids);
  }
  if (!emb.fallback_rows.empty())
    std::cerr << "warning: " << emb.fallback_rows.size()
              << " documents without vocabulary terms got fallback vectors\n";
  fs::create_directories(p.emb_vectors.parent_path());
  save_embeddings(p.emb_vectors, p.emb_index, emb);
  clock.record(p.out, p.emb_vectors);
  clock.record(p.out, p.emb_index);
  return emb;
}

// ---------------------------------------------------------------------------
// shared fit helpers
// ---------------------------------------------------------------------------

std::vector<std::vector<std::string>> to_lists(const std::vector<RankedTerms>& ranked, int k) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(ranked.size());
  for (const RankedTerms& terms : ranked) {
    std::vector<std::string> l;
    for (const TermScore& t : terms) {
      if (static_cast<int>(l.size()) >= k) break;
      l.push_back(t.term);
    }
    lists.push_back(std::move(l));
  }
  return lists;
}

Real coherence_or_nan(std::span<const std::vector<std::string>> lists,
                      std::span<const TokenizedDocument> docs, int window) {
  try {
    return npmi_coherence(lists, docs, window);
  } catch (const ValidationError& e) {
    std::cerr << "warning: coherence undefined: " << e.what() << "\n";
    return std::numeric_limits<Real>::quiet_NaN();
  }
}

/// Hard document assignment for the mixture models: argmax of the doc-topic
/// row (ties to the lower topic), rows the DTM marked empty become outliers.
SizeDistribution argmax_sizes(const Matrix& doc_topic, const std::vector<int>& zero_rows) {
  SizeDistribution s;
  s.n_docs = static_cast<int>(doc_topic.rows());
  s.sizes.assign(static_cast<std::size_t>(doc_topic.cols()), 0);
  std::unordered_set<int> dead(zero_rows.begin(), zero_rows.end());
  for (int i = 0; i < doc_topic.rows(); ++i) {
    if (dead.contains(i)) {
      ++s.outliers;
      continue;
    }
    int best = 0;
    for (int k = 1; k < doc_topic.cols(); ++k)
      if (doc_topic(i, k) > doc_topic(i, best)) best = k;
    ++s.sizes[static_cast<std::size_t>(best)];
  }
  s.outlier_share = s.n_docs ? static_cast<Real>(s.outliers) / s.n_docs : 0.0;
  return s;
}

std::string metrics_note(const EvalReport& r) {
  return "tc " + format_fixed(r.tc, 2) + ", td " + format_fixed(r.td, 2) + ", " +
         format_fixed(r.fit_seconds, 2) + "s";
}

struct ClusterFit {
  TopicModel model;
  TopicMergeTrace trace;
  Matrix layout;
  double seconds = 0;
};

ClusterFit fit_cluster_model(const PipelineConfig& cfg, const ClusterParams& cp,
                             const Prepared& prep, const EmbeddingMatrix& emb) {
  auto t0 = SteadyClock::now();
  int k = std::min(cp.n_neighbors, emb.n() - 1);
  Metric metric = cp.metric == "euclidean" ? Metric::euclidean : Metric::cosine;
  NeighborList nbrs = knn(emb, k, metric);
  FuzzyGraph graph = fuzzy_graph(nbrs);
  CurveParams curve = fit_curve(cp.min_dist, cp.spread);
  Matrix points = emb.values.cast<Real>();
  // The layout runs single-threaded: bitwise reproducibility outranks the
  // speedup at pipeline scale.
  Matrix layout = reduce(graph, points, cp.n_components, cp.epochs,
                         derive_seed(cfg.seed, "fit/reduce"), curve.a, curve.b, false);
  ClusterLabels labels = hdbscan(layout, cp.min_cluster_size, cp.min_samples, Selection::eom);
  TopicModel model = build_topic_model(labels, prep.docs, prep.vocab, emb, cfg.topics);
  TopicMergeTrace trace;
  if (cp.min_topic_size >= 2) {
    auto [merged, steps] =
        merge_small_topics(model, prep.docs, prep.vocab, emb, cp.min_topic_size, cfg.topics);
    model = std::move(merged);
    trace = std::move(steps);
  }
  return {std::move(model), std::move(trace), std::move(layout), seconds_since(t0)};
}

EvalReport cluster_report(const PipelineConfig& cfg, const Prepared& prep,
                          const TopicModel& model, double seconds) {
  EvalReport rep;
  rep.model_tag = "cluster";
  rep.n_topics = model.n_topics;
  auto lists = topic_term_lists(model, cfg.evaluation.top_k);
  rep.tc = coherence_or_nan(lists, prep.docs, cfg.evaluation.coherence_window);
  rep.td = topic_diversity(lists, cfg.evaluation.top_k);
  rep.fit_seconds = seconds;
  rep.sizes = size_distribution(model);
  return rep;
}

void write_cluster_dump(const fs::path& dir, const Prepared& prep, const TopicModel& model,
                        const TopicMergeTrace& trace, const EvalReport& rep,
                        const Matrix* layout, const ArtifactPaths& p, StageClock& clock) {
  fs::create_directories(dir);
  save_topic_model(dir, model, trace);
  save_labels_csv((dir / "labels.csv").string(), prep.uids, model.labels);
  if (layout) write_matrix_f32(dir / "layout.bin", *layout);
  write_json_file(dir / "report.json", eval_report_json(rep));
  for (const char* f : {"topics.csv", "topic_words.csv", "topic_summary.json", "labels.csv",
                        "report.json"})
    clock.record(p.out, dir / f);
  if (layout) clock.record(p.out, dir / "layout.bin");
}

void fit_cluster_rows(const PipelineConfig& cfg, const ClusterParams& cp, const Prepared& prep,
                      const EmbeddingMatrix& emb, const std::vector<int>& ks,
                      const ArtifactPaths& p, StageClock& clock) {
  ClusterFit fit = fit_cluster_model(cfg, cp, prep, emb);
  EvalReport rep = cluster_report(cfg, prep, fit.model, fit.seconds);
  write_cluster_dump(p.models / "cluster", prep, fit.model, fit.trace, rep, &fit.layout, p,
                     clock);
  std::cout << "fit cluster: " << fit.model.n_topics << " topics ("
            << rep.sizes.outliers << " outliers, " << metrics_note(rep) << ")\n";

  for (int k : ks) {
    if (k > fit.model.n_topics) {
      std::cout << "skip cluster k=" << k << ": only " << fit.model.n_topics
                << " topics discovered\n";
      continue;
    }
    if (k == fit.model.n_topics) continue;  // the native dump is this row
    auto t0 = SteadyClock::now();
    auto [reduced, steps] = reduce_topics(fit.model, prep.docs, prep.vocab, emb, k, cfg.topics);
    EvalReport rrep = cluster_report(cfg, prep, reduced, fit.seconds + seconds_since(t0));
    write_cluster_dump(p.models / ("cluster_k" + std::to_string(k)), prep, reduced, steps, rrep,
                       nullptr, p, clock);
    std::cout << "fit cluster k=" << k << " (" << metrics_note(rrep) << ")\n";
  }
}

void fit_classical_rows(const PipelineConfig& cfg, const std::string& tag, const Prepared& prep,
                        const EntityAnnotations& ann, const std::vector<int>& ks,
                        const ArtifactPaths& p, StageClock& clock) {
  const bool is_lda = tag.rfind("lda", 0) == 0;
  const bool is_entity = tag.size() > 4 && tag.substr(tag.size() - 4) == "-ner";
  const bool is_tfidf = tag.size() > 6 && tag.substr(tag.size() - 6) == "-tfidf";

  // Entity variants re-tokenize annotations into documents; their vocabulary
  // is unpruned (entity lists are already sparse and curated).
  std::vector<TokenizedDocument> entity_docs;
  Vocabulary entity_vocab;
  const std::vector<TokenizedDocument>* docs = &prep.docs;
  const Vocabulary* vocab = &prep.vocab;
  if (is_entity) {
    entity_docs = entity_documents(prep.uids, ann.entities);
    entity_vocab = build_vocabulary(entity_docs, 1, 1.0);
    docs = &entity_docs;
    vocab = &entity_vocab;
  }
  WeightedDocTermMatrix dtm =
      build_bow(*docs, *vocab, is_entity ? DtmMode::entity : DtmMode::bow);
  if (is_tfidf) dtm = tfidf_transform(dtm);

  const int n_words = std::max(cfg.topics.top_n, cfg.evaluation.top_k);
  for (int k : ks) {
    std::vector<RankedTerms> words;
    Matrix topic_word, doc_topic;
    double seconds = 0;
    try {
      auto t0 = SteadyClock::now();
      std::uint64_t seed = derive_seed(cfg.seed, "fit/" + tag + "/k" + std::to_string(k));
      if (is_lda) {
        LdaModel m = fit_lda(dtm, k, cfg.classical.alpha, cfg.classical.eta,
                             cfg.classical.lda_epochs, seed);
        seconds = seconds_since(t0);
        words = lda_topic_words(m, *vocab, n_words);
        topic_word = std::move(m.topic_word);
        doc_topic = std::move(m.doc_topic);
      } else {
        NmfModel m = fit_nmf(dtm, k, cfg.classical.nmf_iters, seed);
        seconds = seconds_since(t0);
        words = nmf_topic_words(m, *vocab, n_words);
        topic_word = std::move(m.H);
        doc_topic = std::move(m.W);
      }
    } catch (const ParameterError& e) {
      std::cout << "skip " << tag << " k=" << k << ": " << e.what() << "\n";
      continue;
    }

    EvalReport rep;
    rep.model_tag = tag;
    rep.n_topics = k;
    auto lists = to_lists(words, cfg.evaluation.top_k);
    rep.tc = coherence_or_nan(lists, prep.docs, cfg.evaluation.coherence_window);
    rep.td = topic_diversity(lists, cfg.evaluation.top_k);
    rep.fit_seconds = seconds;
    rep.sizes = argmax_sizes(doc_topic, dtm.zero_rows);

    fs::path dir = p.models / (tag + "_k" + std::to_string(k));
    fs::create_directories(dir);
    std::vector<RankedTerms> dump = words;
    for (RankedTerms& t : dump)
      if (static_cast<int>(t.size()) > cfg.topics.top_n) t.resize(cfg.topics.top_n);
    save_topic_words_csv(dir / "topic_words.csv", dump);
    write_matrix_f32(dir / "topic_word.bin", topic_word);
    write_matrix_f32(dir / "doc_topic.bin", doc_topic);
    write_json_file(dir / "report.json", eval_report_json(rep));
    for (const char* f : {"topic_words.csv", "topic_word.bin", "doc_topic.bin", "report.json"})
      clock.record(p.out, dir / f);
    std::cout << "fit " << tag << " k=" << k << " (" << metrics_note(rep) << ")\n";
  }
}

// ---------------------------------------------------------------------------
// evaluate helpers
// ---------------------------------------------------------------------------

EvalReport report_from_json(const json& j, const fs::path& where) {
  try {
    EvalReport r;
    r.model_tag = j.at("model").get<std::string>();
    r.n_topics = j.at("n_topics").get<int>();
    r.tc = j.at("tc").get<Real>();
    r.td = j.at("td").get<Real>();
    r.fit_seconds = j.at("fit_seconds").get<Real>();
    r.sizes.sizes = j.at("sizes").get<std::vector<int>>();
    r.sizes.outliers = j.at("outliers").get<int>();
    r.sizes.n_docs = j.at("n_docs").get<int>();
    r.sizes.outlier_share = j.at("outlier_share").get<Real>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(where.string() + ": " + e.what());
  }
}

int tag_index(const std::string& tag) {
  const auto& tags = model_tags();
  auto it = std::find(tags.begin(), tags.end(), tag);
  return it == tags.end() ? -1 : static_cast<int>(it - tags.begin());
}

/// Model dirs are <tag> (native cluster) or <tag>_k<digits>.
bool dir_matches_tag(const std::string& name, const std::string& tag) {
  if (name == tag) return true;
  const std::string prefix = tag + "_k";
  if (name.rfind(prefix, 0) != 0 || name.size() == prefix.size()) return false;
  return std::all_of(name.begin() + static_cast<std::ptrdiff_t>(prefix.size()), name.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

std::string html_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// public: config
// ---------------------------------------------------------------------------

const std::vector<std::string>& model_tags() {
  static const std::vector<std::string> tags = {"lda", "lda-tfidf", "lda-ner", "nmf",
                                                "nmf-tfidf", "nmf-ner", "cluster"};
  return tags;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) bad_config("top level must be an object");
  check_keys(j, "",
             {"seed", "corpus", "corpus_format", "entities", "stopwords", "lemmas", "output_dir",
              "models", "topic_counts", "bins", "preprocessing", "embedding", "cluster",
              "classical", "topics", "evaluation", "dynamics", "hpo"});

  PipelineConfig cfg;
  if (has_value(j, "seed")) {
    if (!j.at("seed").is_number_integer()) bad_config("seed must be an integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  cfg.corpus = path_or(j, "", "corpus", base_dir, {});
  if (cfg.corpus.empty()) bad_config("corpus path is required");
  std::string fmt = str_or(j, "", "corpus_format", "jsonl");
  if (fmt == "jsonl")
    cfg.corpus_format = CorpusFormat::jsonl;
  else if (fmt == "csv")
    cfg.corpus_format = CorpusFormat::csv;
  else
    bad_config("corpus_format must be jsonl or csv");
  cfg.entities = path_or(j, "", "entities", base_dir, {});
  cfg.stopwords = path_or(j, "", "stopwords", base_dir, {});
  cfg.lemmas = path_or(j, "", "lemmas", base_dir, {});
  cfg.output_dir = path_or(j, "", "output_dir", base_dir, base_dir / "out");

  if (has_value(j, "models")) {
    if (!j.at("models").is_array()) bad_config("models must be an array of tags");
    cfg.models.clear();
    for (const json& m : j.at("models")) {
      if (!m.is_string()) bad_config("models entries must be strings");
      cfg.models.push_back(m.get<std::string>());
    }
  } else {
    cfg.models = model_tags();
  }

  if (has_value(j, "topic_counts")) {
    if (!j.at("topic_counts").is_array()) bad_config("topic_counts must be an array");
    cfg.topic_counts.clear();
    for (const json& k : j.at("topic_counts")) {
      if (!k.is_number_integer()) bad_config("topic_counts entries must be integers");
      cfg.topic_counts.push_back(k.get<int>());
    }
  }

  if (has_value(j, "bins")) {
    if (!j.at("bins").is_array()) bad_config("bins must be an array of [start, end] years");
    for (const json& b : j.at("bins")) {
      if (!b.is_array() || b.size() != 2 || !b[0].is_number_integer() ||
          !b[1].is_number_integer())
        bad_config("bins entries must be [start, end] integer pairs");
      cfg.bins.ranges.emplace_back(b[0].get<int>(), b[1].get<int>());
    }
  }

  {
    const json& s = section_of(j, "preprocessing");
    check_keys(s, "preprocessing",
               {"min_tokens", "length_filter_before_stopwords", "min_df", "max_df_ratio"});
    cfg.prep.min_tokens = int_or(s, "preprocessing", "min_tokens", cfg.prep.min_tokens);
    cfg.prep.length_filter_before_stopwords =
        bool_or(s, "preprocessing", "length_filter_before_stopwords",
                cfg.prep.length_filter_before_stopwords);
    cfg.prep.min_df = int_or(s, "preprocessing", "min_df", cfg.prep.min_df);
    cfg.prep.max_df_ratio = real_or(s, "preprocessing", "max_df_ratio", cfg.prep.max_df_ratio);
  }
  {
    const json& s = section_of(j, "embedding");
    check_keys(s, "embedding", {"source", "d", "seed", "vectors", "index"});
    cfg.embedding.source = str_or(s, "embedding", "source", cfg.embedding.source);
    cfg.embedding.d = int_or(s, "embedding", "d", cfg.embedding.d);
    if (has_value(s, "seed")) {
      if (!s.at("seed").is_number_integer()) bad_config("embedding.seed must be an integer");
      cfg.embedding.seed = s.at("seed").get<std::uint64_t>();
    }
    cfg.embedding.vectors = path_or(s, "embedding", "vectors", base_dir, {});
    cfg.embedding.index = path_or(s, "embedding", "index", base_dir, {});
  }
  apply_cluster_fragment(cfg.cluster, section_of(j, "cluster"), "cluster");
  {
    const json& s = section_of(j, "classical");
    check_keys(s, "classical", {"alpha", "eta", "lda_epochs", "nmf_iters"});
    cfg.classical.alpha = real_or(s, "classical", "alpha", cfg.classical.alpha);
    cfg.classical.eta = real_or(s, "classical", "eta", cfg.classical.eta);
    cfg.classical.lda_epochs = int_or(s, "classical", "lda_epochs", cfg.classical.lda_epochs);
    cfg.classical.nmf_iters = int_or(s, "classical", "nmf_iters", cfg.classical.nmf_iters);
  }
  {
    const json& s = section_of(j, "topics");
    check_keys(s, "topics", {"top_n", "mmr_candidates", "mmr_lambda"});
    cfg.topics.top_n = int_or(s, "topics", "top_n", cfg.topics.top_n);
    cfg.topics.mmr_candidates = int_or(s, "topics", "mmr_candidates", cfg.topics.mmr_candidates);
    cfg.topics.mmr_lambda = real_or(s, "topics", "mmr_lambda", cfg.topics.mmr_lambda);
  }
  {
    const json& s = section_of(j, "evaluation");
    check_keys(s, "evaluation", {"coherence_window", "top_k"});
    cfg.evaluation.coherence_window =
        int_or(s, "evaluation", "coherence_window", cfg.evaluation.coherence_window);
    cfg.evaluation.top_k = int_or(s, "evaluation", "top_k", cfg.evaluation.top_k);
  }
  {
    const json& s = section_of(j, "dynamics");
    check_keys(s, "dynamics", {"smooth", "global_tuning", "proportion"});
    cfg.dynamics.smooth = bool_or(s, "dynamics", "smooth", cfg.dynamics.smooth);
    cfg.dynamics.global_tuning =
        bool_or(s, "dynamics", "global_tuning", cfg.dynamics.global_tuning);
    cfg.dynamics.proportion = bool_or(s, "dynamics", "proportion", cfg.dynamics.proportion);
  }
  {
    const json& s = section_of(j, "hpo");
    check_keys(s, "hpo",
               {"max_evals", "gamma", "n_startup", "n_candidates", "epochs", "tc_weight",
                "td_weight", "space"});
    cfg.hpo.max_evals = int_or(s, "hpo", "max_evals", cfg.hpo.max_evals);
    cfg.hpo.gamma = real_or(s, "hpo", "gamma", cfg.hpo.gamma);
    cfg.hpo.n_startup = int_or(s, "hpo", "n_startup", cfg.hpo.n_startup);
    cfg.hpo.n_candidates = int_or(s, "hpo", "n_candidates", cfg.hpo.n_candidates);
    cfg.hpo.epochs = int_or(s, "hpo", "epochs", cfg.hpo.epochs);
    cfg.hpo.tc_weight = real_or(s, "hpo", "tc_weight", cfg.hpo.tc_weight);
    cfg.hpo.td_weight = real_or(s, "hpo", "td_weight", cfg.hpo.td_weight);
    if (has_value(s, "space")) {
      const json& sp = s.at("space");
      if (!sp.is_object()) bad_config("hpo.space must be an object");
      for (const auto& item : sp.items()) {
        const json& r = item.value();
        if (!r.is_object()) bad_config("hpo.space." + item.key() + " must be an object");
        check_keys(r, "hpo.space." + item.key(), {"lo", "hi"});
        if (!has_value(r, "lo") || !has_value(r, "hi") || !r.at("lo").is_number_integer() ||
            !r.at("hi").is_number_integer())
          bad_config("hpo.space." + item.key() + " needs integer lo and hi");
        cfg.hpo.space[item.key()] = {r.at("lo").get<long long>(), r.at("hi").get<long long>()};
      }
    }
  }

  // ---- value validation -----------------------------------------------------
  auto bad = [](const std::string& m) { throw ValidationError("config: " + m); };
  check_file(cfg.corpus, "corpus file");
  check_file(cfg.entities, "entities file");
  check_file(cfg.stopwords, "stopword file");
  check_file(cfg.lemmas, "lemma file");

  if (cfg.models.empty()) bad("models must name at least one model");
  std::set<std::string> seen;
  for (const std::string& tag : cfg.models) {
    if (tag_index(tag) < 0) bad("unknown model tag \"" + tag + "\"");
    if (!seen.insert(tag).second) bad("duplicate model tag \"" + tag + "\"");
    if (tag.ends_with("-ner") && cfg.entities.empty())
      bad("model " + tag + " requires an entities file");
  }

  if (cfg.topic_counts.empty()) bad("topic_counts must not be empty");
  for (std::size_t i = 0; i < cfg.topic_counts.size(); ++i) {
    if (cfg.topic_counts[i] <= 0) bad("topic_counts must be positive");
    if (i > 0 && cfg.topic_counts[i] <= cfg.topic_counts[i - 1])
      bad("topic_counts must be strictly ascending");
  }
  if (!cfg.bins.ranges.empty()) cfg.bins.validate();

  if (cfg.prep.min_tokens < 1) bad("preprocessing.min_tokens must be >= 1");
  if (cfg.prep.min_df < 1) bad("preprocessing.min_df must be >= 1");
  if (cfg.prep.max_df_ratio <= 0 || cfg.prep.max_df_ratio > 1)
    bad("preprocessing.max_df_ratio must be in (0, 1]");

  if (cfg.embedding.source != "hash" && cfg.embedding.source != "file")
    bad("embedding.source must be hash or file");
  if (cfg.embedding.source == "hash" && cfg.embedding.d < 8)
    bad("embedding.d must be >= 8");
  if (cfg.embedding.source == "file") {
    if (cfg.embedding.vectors.empty() || cfg.embedding.index.empty())
      bad("embedding.source \"file\" needs vectors and index paths");
    check_file(cfg.embedding.vectors, "embedding vectors file");
    check_file(cfg.embedding.index, "embedding index file");
  }

  validate_cluster_params(cfg.cluster);
  if (cfg.classical.lda_epochs < 1) bad("classical.lda_epochs must be >= 1");
  if (cfg.classical.nmf_iters < 1) bad("classical.nmf_iters must be >= 1");
  if (cfg.topics.top_n < 1) bad("topics.top_n must be >= 1");
  if (cfg.topics.mmr_candidates < 1) bad("topics.mmr_candidates must be >= 1");
  if (cfg.topics.mmr_lambda < 0 || cfg.topics.mmr_lambda > 1)
    bad("topics.mmr_lambda must be in [0, 1]");
  if (cfg.evaluation.coherence_window < 1) bad("evaluation.coherence_window must be >= 1");
  if (cfg.evaluation.top_k < 1) bad("evaluation.top_k must be >= 1");
  if (cfg.hpo.max_evals < 1) bad("hpo.max_evals must be >= 1");
  if (cfg.hpo.gamma <= 0 || cfg.hpo.gamma >= 1) bad("hpo.gamma must be in (0, 1)");
  if (cfg.hpo.n_startup < 0) bad("hpo.n_startup must be >= 0");
  if (cfg.hpo.n_candidates < 1) bad("hpo.n_candidates must be >= 1");
  if (cfg.hpo.epochs < 50) bad("hpo.epochs must be >= 50 (layout optimizer minimum)");
  if (cfg.hpo.tc_weight < 0 || cfg.hpo.td_weight < 0) bad("hpo weights must be >= 0");
  for (const auto& [name, range] : cfg.hpo.space) {
    if (range.first >= range.second) bad("hpo.space." + name + ": lo must be < hi");
    if (range.first < 1) bad("hpo.space." + name + ": lo must be >= 1");
  }

  cfg.config_hash = hex64(fnv1a64(j.dump()));
  return cfg;
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ValidationError("config file not found: " + path.string());
  std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("config: " + std::string(e.what()));
  }
  PipelineConfig cfg = config_from_json(j, fs::absolute(path).parent_path());
  cfg.config_hash = hex64(fnv1a64(text));
  return cfg;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const AlignmentError*>(&e)) return 3;
  if (dynamic_cast<const NoModelsError*>(&e)) return 4;
  if (dynamic_cast<const NoTemporalError*>(&e)) return 5;
  if (dynamic_cast<const TuningError*>(&e)) return 6;
  if (dynamic_cast<const ChronoError*>(&e)) return 2;
  return 1;
}

// ---------------------------------------------------------------------------
// public: stage clock, manifest, lock
// ---------------------------------------------------------------------------

StageClock::StageClock() : mark_(SteadyClock::now()) {}

void StageClock::begin(const std::string& name) {
  auto now = SteadyClock::now();
  if (!stages_.empty())
    stages_.back().seconds = std::chrono::duration<double>(now - mark_).count();
  stages_.push_back({name, 0, json::object()});
  mark_ = now;
}

void StageClock::record(const fs::path& out_dir, const fs::path& artifact) {
  if (stages_.empty()) begin("run");
  stages_.back().artifacts[fs::relative(artifact, out_dir).generic_string()] =
      file_checksum(artifact);
}

json StageClock::finish() {
  if (!stages_.empty())
    stages_.back().seconds = std::chrono::duration<double>(SteadyClock::now() - mark_).count();
  json arr = json::array();
  for (const Stage& s : stages_)
    arr.push_back({{"name", s.name}, {"seconds", s.seconds}, {"artifacts", s.artifacts}});
  return arr;
}

void write_run_manifest(const PipelineConfig& cfg, const std::string& command,
                        StageClock& clock) {
  json stages = clock.finish();
  double total = 0;
  for (const json& s : stages) total += s.at("seconds").get<double>();
  write_json_file(cfg.output_dir / "manifest.json", {{"command", command},
                                                     {"config_hash", cfg.config_hash},
                                                     {"seed", cfg.seed},
                                                     {"stages", stages},
                                                     {"total_seconds", total}});
}

OutputLock::OutputLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
  fs::create_directories(out_dir);
  std::error_code ec;
  if (!fs::create_directory(path_, ec) || ec)
    throw ValidationError("output directory is locked: " + path_.string() +
                          " exists (another run, or remove it if stale)");
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// public: commands
// ---------------------------------------------------------------------------

void cmd_prepare(const PipelineConfig& cfg) {
  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("load");
  Corpus corpus = load_corpus(cfg.corpus, cfg.corpus_format);
  StopwordSet custom_stopwords;
  LemmaMap lemmas;
  TokenizeOptions topt;
  topt.min_tokens = cfg.prep.min_tokens;
  topt.length_filter_before_stopwords = cfg.prep.length_filter_before_stopwords;
  if (!cfg.stopwords.empty()) {
    custom_stopwords = load_stopwords(cfg.stopwords);
    topt.stopwords = &custom_stopwords;
  }
  if (!cfg.lemmas.empty()) {
    lemmas = load_lemma_map(cfg.lemmas);
    topt.lemmas = &lemmas;
  }

  clock.begin("tokenize");
  std::vector<TokenizedDocument> docs = prepare_corpus(corpus, topt);

  clock.begin("vocabulary");
  Vocabulary vocab = build_vocabulary(docs, cfg.prep.min_df, cfg.prep.max_df_ratio);

  std::unordered_map<std::string, int> years;
  for (const Document& d : corpus.docs) years.emplace(d.uid, d.year);
  std::unordered_map<std::string, int> bin_map;
  if (!cfg.bins.ranges.empty()) {
    std::vector<Document> retained;
    retained.reserve(docs.size());
    for (const TokenizedDocument& d : docs) retained.push_back({d.uid, "", years.at(d.uid)});
    bin_map = assign_bins(retained, cfg.bins);
  }

  clock.begin("write");
  fs::create_directories(p.prepared);
  std::string lines;
  for (const TokenizedDocument& d : docs) {
    int bin = bin_map.empty() ? -1 : bin_map.at(d.uid);
    lines += json{{"uid", d.uid}, {"year", years.at(d.uid)}, {"bin", bin}, {"tokens", d.tokens}}
                 .dump() +
             "\n";
  }
  write_text_file(p.tokens, lines);
  clock.record(p.out, p.tokens);

  std::string vcsv = "term,doc_freq,corpus_freq\n";
  for (int t = 0; t < vocab.size(); ++t)
    vcsv += csv_quote(vocab.terms[static_cast<std::size_t>(t)]) + "," +
            std::to_string(vocab.doc_freq[static_cast<std::size_t>(t)]) + "," +
            std::to_string(vocab.corpus_freq[static_cast<std::size_t>(t)]) + "\n";
  write_text_file(p.vocab, vcsv);
  clock.record(p.out, p.vocab);

  write_json_file(p.summary, {{"docs_in", corpus.size()},
                              {"docs_out", docs.size()},
                              {"vocab_size", vocab.size()},
                              {"n_bins", cfg.bins.size()},
                              {"min_year", corpus.min_year},
                              {"max_year", corpus.max_year}});
  clock.record(p.out, p.summary);

  std::cout << "prepared " << docs.size() << "/" << corpus.size() << " documents, vocabulary "
            << vocab.size() << " terms";
  if (!cfg.bins.ranges.empty()) std::cout << ", " << cfg.bins.size() << " time bins";
  std::cout << "\n";
  write_run_manifest(cfg, "prepare", clock);
}

void cmd_fit(const PipelineConfig& cfg, const std::string& model, int k, const json& overrides) {
  if (!model.empty() && tag_index(model) < 0)
    throw ParameterError("unknown model tag \"" + model + "\"");
  if (!overrides.is_object())
    throw ParseError("fit overrides must be a JSON object");
  check_keys(overrides, "overrides", {"cluster", "loss", "n_trials"});
  ClusterParams cp = cfg.cluster;
  if (overrides.contains("cluster"))
    apply_cluster_fragment(cp, section_of(overrides, "cluster"), "overrides.cluster");
  validate_cluster_params(cp);

  std::set<std::string> selected;
  if (model.empty())
    selected.insert(cfg.models.begin(), cfg.models.end());
  else
    selected.insert(model);
  std::vector<int> ks = k > 0 ? std::vector<int>{k} : cfg.topic_counts;

  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("load");
  Prepared prep = load_prepared(p);
  EntityAnnotations ann;
  bool need_entities = std::any_of(selected.begin(), selected.end(),
                                   [](const std::string& t) { return t.ends_with("-ner"); });
  if (need_entities) {
    if (cfg.entities.empty())
      throw ValidationError("entity-variant models require an entities file in the config");
    std::unordered_set<std::string> uid_set(prep.uids.begin(), prep.uids.end());
    ann = load_entity_annotations(cfg.entities, uid_set);
  }

  EmbeddingMatrix emb;
  if (selected.contains("cluster")) {
    clock.begin("embeddings");
    emb = obtain_embeddings(cfg, p, prep, clock);
  }

  for (const std::string& tag : model_tags()) {
    if (!selected.contains(tag)) continue;
    clock.begin("fit:" + tag);
    if (tag == "cluster")
      fit_cluster_rows(cfg, cp, prep, emb, ks, p, clock);
    else
      fit_classical_rows(cfg, tag, prep, ann, ks, p, clock);
  }
  write_run_manifest(cfg, "fit", clock);
}

void cmd_evaluate(const PipelineConfig& cfg) {
  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("load");
  struct Row {
    int order;
    EvalReport rep;
    bool native_cluster;
  };
  std::vector<Row> rows;
  if (fs::exists(p.models)) {
    for (const auto& entry : fs::directory_iterator(p.models)) {
      if (!entry.is_directory()) continue;
      std::string name = entry.path().filename().string();
      for (const std::string& tag : model_tags()) {
        if (!dir_matches_tag(name, tag)) continue;
        fs::path rp = entry.path() / "report.json";
        if (!fs::exists(rp)) break;
        rows.push_back({tag_index(tag), report_from_json(read_json_file(rp), rp),
                        name == "cluster"});
        break;
      }
    }
  }
  if (rows.empty())
    throw NoModelsError("no fitted models under " + p.models.string() + "; run fit first");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.order != b.order ? a.order < b.order : a.rep.n_topics < b.rep.n_topics;
  });

  clock.begin("tables");
  std::vector<EvalReport> reports;
  reports.reserve(rows.size());
  for (const Row& r : rows) reports.push_back(r.rep);
  ComparisonTable table = compare(reports);
  fs::create_directories(p.report_dir);
  write_text_file(p.comparison_csv, table.csv);
  write_text_file(p.comparison_md, table.markdown);
  clock.record(p.out, p.comparison_csv);
  clock.record(p.out, p.comparison_md);

  // Expected-direction check: the native cluster row should beat plain LDA
  // at the matching topic count on both metrics. A miss is a warning, never
  // a failure — the relation is corpus-specific.
  const Row* cluster = nullptr;
  for (const Row& r : rows)
    if (r.native_cluster) cluster = &r;
  if (!cluster)  // fall back to the largest reduced row
    for (const Row& r : rows)
      if (r.rep.model_tag == "cluster" &&
          (!cluster || r.rep.n_topics > cluster->rep.n_topics))
        cluster = &r;
  const Row* lda = nullptr;
  if (cluster)
    for (const Row& r : rows) {
      if (r.rep.model_tag != "lda") continue;
      if (!lda || std::abs(r.rep.n_topics - cluster->rep.n_topics) <
                      std::abs(lda->rep.n_topics - cluster->rep.n_topics))
        lda = &r;
    }

  json direction;
  if (!cluster || !lda) {
    direction = {{"holds", nullptr},
                 {"note", "unavailable: needs both a cluster model and a plain-lda row"}};
    std::cout << "expected-direction check skipped (needs cluster and lda rows)\n";
  } else {
    bool holds = cluster->rep.tc > lda->rep.tc && cluster->rep.td > lda->rep.td;
    auto row_json = [](const EvalReport& r) {
      return json{{"n_topics", r.n_topics}, {"tc", r.tc}, {"td", r.td}};
    };
    direction = {{"cluster", row_json(cluster->rep)},
                 {"lda", row_json(lda->rep)},
                 {"holds", holds},
                 {"note", "cluster vs plain lda at the nearest topic count, raw values"}};
    std::string line = "cluster #T=" + std::to_string(cluster->rep.n_topics) + " tc " +
                       format_fixed(cluster->rep.tc, 2) + "/td " +
                       format_fixed(cluster->rep.td, 2) + " vs lda #T=" +
                       std::to_string(lda->rep.n_topics) + " tc " +
                       format_fixed(lda->rep.tc, 2) + "/td " + format_fixed(lda->rep.td, 2);
    if (holds)
      std::cout << "expected direction holds: " << line << "\n";
    else
      std::cout << "WARNING: expected direction does not hold: " << line << "\n";
  }
  write_json_file(p.direction, direction);
  clock.record(p.out, p.direction);

  std::cout << "wrote " << p.comparison_csv.string() << " (" << rows.size() << " rows)\n";
  write_run_manifest(cfg, "evaluate", clock);
}

void cmd_dynamic(const PipelineConfig& cfg) {
  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("load");
  if (cfg.bins.ranges.empty())
    throw NoTemporalError("no time bins configured; cmd_dynamic needs a bins list");
  Prepared prep = load_prepared(p);
  if (prep.bin_map.size() != prep.docs.size())
    throw NoTemporalError("prepared corpus lacks bin assignments for " +
                          std::to_string(prep.docs.size() - prep.bin_map.size()) +
                          " documents; rerun prepare with the bins configured");
  fs::path labels_csv = p.models / "cluster" / "labels.csv";
  if (!fs::exists(labels_csv))
    throw NoModelsError("no fitted cluster model (" + labels_csv.string() +
                        " missing); run fit --model cluster first");

  clock.begin("embeddings");
  EmbeddingMatrix emb = obtain_embeddings(cfg, p, prep, clock);

  clock.begin("rebuild");
  ClusterLabels labels;
  {
    std::istringstream in(read_text_file(labels_csv));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = csv_split(line);
      if (f.size() != 3)
        throw ParseError(labels_csv.string() + ": malformed row \"" + line + "\"");
      std::size_t row = labels.labels.size();
      if (row >= prep.uids.size() || f[0] != prep.uids[row])
        throw AlignmentError(labels_csv.string() + " does not match the prepared corpus (row " +
                             std::to_string(row) + ")");
      labels.labels.push_back(std::stoi(f[1]));
      labels.strengths.push_back(std::stod(f[2]));
      labels.n_clusters = std::max(labels.n_clusters, labels.labels.back() + 1);
    }
  }
  if (labels.labels.size() != prep.docs.size())
    throw AlignmentError(labels_csv.string() + " holds " + std::to_string(labels.labels.size()) +
                         " rows for " + std::to_string(prep.docs.size()) + " documents");
  TopicModel model = build_topic_model(labels, prep.docs, prep.vocab, emb, cfg.topics);

  clock.begin("dynamics");
  DynamicOptions dopt;
  dopt.global_tuning = cfg.dynamics.global_tuning;
  dopt.smooth = cfg.dynamics.smooth;
  dopt.top_n = cfg.topics.top_n;
  dopt.bins = &cfg.bins;
  TopicsOverTime tot = topics_over_time(model, prep.bin_map, prep.docs, prep.vocab, dopt);
  fs::create_directories(p.dynamic_dir);
  save_evolution_csv(p.dynamic_dir / "evolution.csv", tot, cfg.dynamics.proportion);
  save_evolution_json(p.dynamic_dir / "evolution.json", tot);
  clock.record(p.out, p.dynamic_dir / "evolution.csv");
  clock.record(p.out, p.dynamic_dir / "evolution.json");

  std::vector<std::string> x_labels;
  for (auto [lo, hi] : tot.bin_ranges)
    x_labels.push_back(std::to_string(lo) + "-" + std::to_string(hi));
  int charts = 0;
  for (int g = 0; g < tot.n_topics; g += 5) {
    int hi_topic = std::min(g + 5, tot.n_topics) - 1;
    std::vector<ChartSeries> series;
    for (int t = g; t <= hi_topic; ++t) {
      ChartSeries s;
      s.label = "t" + std::to_string(t);
      const RankedTerms& words = model.top_words[static_cast<std::size_t>(t) + 1];
      if (!words.empty()) s.label += " " + words.front().term;
      for (int b = 0; b < tot.n_bins; ++b)
        s.values.push_back(
            static_cast<Real>(tot.rows[static_cast<std::size_t>(t * tot.n_bins + b)].frequency));
      series.push_back(std::move(s));
    }
    std::string title = "topic frequency by bin (topics " + std::to_string(g) + "-" +
                        std::to_string(hi_topic) + ")";
    char name[24];
    std::snprintf(name, sizeof name, "topics_%02d.svg", g);
    fs::path svg = p.dynamic_dir / name;
    write_text_file(svg, line_chart(title, x_labels, series));
    clock.record(p.out, svg);
    ++charts;
  }

  std::cout << "wrote " << (p.dynamic_dir / "evolution.csv").string() << " ("
            << tot.rows.size() << " rows) and " << charts << " charts\n";
  write_run_manifest(cfg, "dynamic", clock);
}

void cmd_tune(const PipelineConfig& cfg) {
  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("load");
  Prepared prep = load_prepared(p);
  clock.begin("embeddings");
  EmbeddingMatrix emb = obtain_embeddings(cfg, p, prep, clock);

  clock.begin("tune");
  SearchSpace space = default_topic_space();
  for (const auto& [name, range] : cfg.hpo.space) {
    ParamSpec* spec = nullptr;
    for (ParamSpec& s : space.params)
      if (s.name == name) spec = &s;
    if (!spec || spec->kind != ParamKind::uniform_int)
      throw ValidationError("hpo.space: \"" + name + "\" is not a tunable integer parameter");
    spec->lo = static_cast<Real>(range.first);
    spec->hi = static_cast<Real>(range.second);
  }

  ObjectiveOptions oopt;
  oopt.seed = cfg.seed;
  oopt.epochs = cfg.hpo.epochs;
  oopt.min_dist = cfg.cluster.min_dist;
  oopt.spread = cfg.cluster.spread;
  oopt.coherence_window = cfg.evaluation.coherence_window;
  oopt.top_k = cfg.evaluation.top_k;
  oopt.tc_weight = cfg.hpo.tc_weight;
  oopt.td_weight = cfg.hpo.td_weight;

  FminOptions fopt;
  fopt.gamma = cfg.hpo.gamma;
  fopt.n_startup = cfg.hpo.n_startup;
  fopt.n_candidates = cfg.hpo.n_candidates;
  fopt.trials_path = p.trials;
  fopt.accept = valid_topic_params;
  fs::create_directories(p.tune_dir);

  std::pair<Params, Trials> result;
  try {
    result = fmin(
        [&](const Params& params) {
          return objective_topic_quality(params, prep.docs, prep.vocab, emb, oopt);
        },
        space, cfg.hpo.max_evals, derive_seed(cfg.seed, "tune"), fopt);
  } catch (const ValidationError& e) {
    throw TuningError(e.what());
  }

  const auto& [best, trials] = result;
  write_json_file(p.best, {{"cluster", params_json(best)},
                           {"loss", trials.best().loss},
                           {"n_trials", trials.n()}});
  clock.record(p.out, p.trials);
  clock.record(p.out, p.best);

  std::cout << "best loss " << format_fixed(trials.best().loss, 4) << " after " << trials.n()
            << " trials:";
  for (const auto& [name, value] : best)
    std::cout << " " << name << "=" << params_json({{name, value}})[name].dump();
  std::cout << "\nwrote " << p.best.string() << "\n";
  write_run_manifest(cfg, "tune", clock);
}

void cmd_report(const PipelineConfig& cfg) {
  ArtifactPaths p = artifact_paths(cfg);
  OutputLock lock(p.out);
  StageClock clock;

  clock.begin("report");
  std::string html =
      "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
      "<title>chronotopic run report</title>\n"
      "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;}"
      "pre{background:#f4f4f4;padding:1em;overflow-x:auto;}</style>\n"
      "</head><body>\n<h1>chronotopic run report</h1>\n";

  if (fs::exists(p.summary)) {
    json s = read_json_file(p.summary);
    html += "<p>documents " + s.at("docs_out").dump() + "/" + s.at("docs_in").dump() +
            ", vocabulary " + s.at("vocab_size").dump() + " terms, " + s.at("n_bins").dump() +
            " bins (" + s.at("min_year").dump() + "-" + s.at("max_year").dump() + ")</p>\n";
  }
  if (fs::exists(p.comparison_md)) {
    html += "<h2>model comparison</h2>\n<pre>" + html_escape(read_text_file(p.comparison_md)) +
            "</pre>\n<p><a href=\"comparison.csv\">comparison.csv</a></p>\n";
  }
  if (fs::exists(p.direction)) {
    json d = read_json_file(p.direction);
    if (d.at("holds").is_boolean())
      html += std::string("<p>expected-direction check (cluster beats plain LDA): ") +
              (d.at("holds").get<bool>() ? "holds" : "<strong>does not hold</strong>") +
              "</p>\n";
  }
  if (fs::exists(p.dynamic_dir)) {
    std::vector<std::string> svgs;
    for (const auto& entry : fs::directory_iterator(p.dynamic_dir))
      if (entry.path().extension() == ".svg") svgs.push_back(entry.path().filename().string());
    std::sort(svgs.begin(), svgs.end());
    if (!svgs.empty()) {
      html += "<h2>topic evolution</h2>\n";
      for (const std::string& name : svgs)
        html += "<p><img src=\"../dynamic/" + name + "\" alt=\"" + name + "\"></p>\n";
      html += "<p><a href=\"../dynamic/evolution.csv\">evolution.csv</a></p>\n";
    }
  }
  if (fs::exists(p.best)) {
    html += "<h2>tuning</h2>\n<pre>" + html_escape(read_text_file(p.best)) +
            "</pre>\n<p><a href=\"../tune/trials.jsonl\">trials.jsonl</a></p>\n";
  }
  html += "<p><a href=\"../manifest.json\">run manifest</a></p>\n</body></html>\n";

  fs::create_directories(p.report_dir);
  write_text_file(p.index_html, html);
  clock.record(p.out, p.index_html);
  std::cout << "wrote " << p.index_html.string() << "\n";
  write_run_manifest(cfg, "report", clock);
}

}  // namespace chronotopic
