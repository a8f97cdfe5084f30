#include "chronotopic/topics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "chronotopic/io.hpp"

namespace chronotopic {

namespace {

// Cosine that reports 0 for zero vectors instead of throwing: MMR and merge
// partner selection must stay total over degenerate rows.
template <typename U, typename V>
Real safe_cosine(const U& u, const V& v) {
  double dot = 0, nu = 0, nv = 0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double a = static_cast<double>(u(i));
    double b = static_cast<double>(v(i));
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

void check_labels(const ClusterLabels& labels, std::span<const TokenizedDocument> docs) {
  if (labels.n() != static_cast<int>(docs.size()))
    throw AlignmentError("topics: " + std::to_string(labels.n()) + " labels vs " +
                         std::to_string(docs.size()) + " documents");
  for (int l : labels.labels)
    if (l < -1) throw ParameterError("topics: label below -1: " + std::to_string(l));
}

int topic_count(const std::vector<int>& labels) {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  return k;
}

// Vocabulary token counts per class; row 0 collects the outliers.
Matrix class_counts(const std::vector<int>& labels, std::span<const TokenizedDocument> docs,
                    const Vocabulary& vocab, int rows) {
  Matrix tf = Matrix::Zero(rows, vocab.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (const std::string& tok : docs[i].tokens) {
      int id = vocab.id_of(tok);
      if (id >= 0) tf(labels[i] + 1, id) += 1.0;
    }
  }
  return tf;
}

// tf * ln(1 + A/f); empty classes stay zero rows and do not dilute A.
Matrix weight_counts(Matrix tf) {
  Vector per_class = tf.rowwise().sum();
  int nonempty = 0;
  for (Eigen::Index r = 0; r < per_class.size(); ++r)
    if (per_class(r) > 0) ++nonempty;
  if (nonempty == 0) {
    std::cerr << "ctfidf: no vocabulary tokens in any class\n";
    return tf;
  }
  double avg = tf.sum() / nonempty;
  Vector f = tf.colwise().sum();
  for (Eigen::Index c = 0; c < tf.cols(); ++c)
    if (f(c) > 0) tf.col(c) *= std::log(1.0 + avg / f(c));
  return tf;
}

std::vector<int> zero_rows_of(const Matrix& w) {
  std::vector<int> out;
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    if ((w.row(r).array() == 0.0).all()) out.push_back(static_cast<int>(r));
  return out;
}

void warn_empty_topics(const Matrix& w) {
  std::string ids;
  for (Eigen::Index r = 1; r < w.rows(); ++r)
    if ((w.row(r).array() == 0.0).all())
      ids += (ids.empty() ? "" : ", ") + std::to_string(r - 1);
  if (!ids.empty()) std::cerr << "ctfidf: empty class rows for topics " << ids << "\n";
}

std::vector<int> topic_sizes(const std::vector<int>& labels, int k) {
  std::vector<int> s(k, 0);
  for (int l : labels)
    if (l >= 0) ++s[l];
  return s;
}

// Relabels `source` members into the highest-cosine other surviving topic
// (strict > keeps the lowest id on ties) and records the step. Needs at
// least two surviving topics.
void merge_step(std::vector<int>& labels, std::span<const TokenizedDocument> docs,
                const Vocabulary& vocab, int rows, int source, TopicMergeTrace& trace) {
  Matrix w = weight_counts(class_counts(labels, docs, vocab, rows));
  std::vector<int> s = topic_sizes(labels, rows - 1);
  int best = -1;
  Real best_cos = 0;
  for (int t = 0; t < rows - 1; ++t) {
    if (t == source || s[t] == 0) continue;
    Real c = safe_cosine(w.row(t + 1), w.row(source + 1));
    if (best < 0 || c > best_cos) {
      best = t;
      best_cos = c;
    }
  }
  trace.push_back({source, best, best_cos});
  for (int& l : labels)
    if (l == source) l = best;
}

// Renumbers surviving topics contiguously (ascending old id) and rebuilds.
std::pair<TopicModel, TopicMergeTrace> finish_merges(
    const std::vector<int>& labels, const ClusterLabels& original,
    std::span<const TokenizedDocument> docs, const Vocabulary& vocab, const EmbeddingMatrix& emb,
    const TopicOptions& opt, TopicMergeTrace trace) {
  std::map<int, int> renumber;
  for (int l : labels)
    if (l >= 0) renumber.emplace(l, 0);
  int next = 0;
  for (auto& [old_id, new_id] : renumber) new_id = next++;
  ClusterLabels merged;
  merged.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    merged.labels[i] = labels[i] < 0 ? -1 : renumber.at(labels[i]);
  merged.strengths = original.strengths;
  merged.n_clusters = next;
  return {build_topic_model(merged, docs, vocab, emb, opt), std::move(trace)};
}

}  // namespace

Matrix ctfidf(const ClusterLabels& labels, std::span<const TokenizedDocument> docs,
              const Vocabulary& vocab, int n_topics) {
  check_labels(labels, docs);
  int derived = topic_count(labels.labels);
  bool derived_mode = n_topics < 0;
  if (derived_mode) {
    if (derived == 0) throw ParameterError("ctfidf: needs at least one non-outlier class");
    n_topics = derived;
  } else if (derived > n_topics) {
    throw ParameterError("ctfidf: labels name topic " + std::to_string(derived - 1) +
                         " but only " + std::to_string(n_topics) + " topics were declared");
  }
  Matrix w = weight_counts(class_counts(labels.labels, docs, vocab, n_topics + 1));
  if (derived_mode) warn_empty_topics(w);
  return w;
}

RankedTerms top_words(const Matrix& weights, int row, const Vocabulary& vocab, int n) {
  if (row < 0 || row >= weights.rows())
    throw ParameterError("top_words: row " + std::to_string(row) + " out of range");
  if (weights.cols() != vocab.size())
    throw AlignmentError("top_words: matrix width " + std::to_string(weights.cols()) +
                         " vs vocabulary size " + std::to_string(vocab.size()));
  RankedTerms out;
  for (int c = 0; c < vocab.size(); ++c)
    if (weights(row, c) > 0) out.push_back({vocab.terms[c], weights(row, c)});
  std::sort(out.begin(), out.end(), [](const TermScore& a, const TermScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.term < b.term;
  });
  if (n < static_cast<int>(out.size())) out.resize(std::max(n, 0));
  return out;
}

std::vector<std::string> mmr_refine(const Vector& topic_centroid,
                                    std::span<const TermVector> candidates, Real lambda, int n) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ParameterError("mmr_refine: lambda outside [0,1]");
  for (const TermVector& c : candidates)
    if (c.vec.size() != topic_centroid.size())
      throw AlignmentError("mmr_refine: dimension mismatch for candidate '" + c.term + "'");
  if (n < 0) n = 0;
  int m = static_cast<int>(candidates.size());
  if (m < n) {
    std::cerr << "mmr_refine: " << n << " keywords requested from " << m
              << " candidates; returning all\n";
    n = m;
  }
  std::vector<Real> rel(m);
  for (int i = 0; i < m; ++i) rel[i] = safe_cosine(candidates[i].vec, topic_centroid);

  std::vector<char> picked(m, 0);
  // Signed max cosine to any picked candidate; anti-correlated terms earn a
  // negative penalty (a boost), so the running max starts at -inf.
  std::vector<Real> max_pen(m, -std::numeric_limits<Real>::infinity());
  std::vector<std::string> out;
  out.reserve(n);
  for (int step = 0; step < n; ++step) {
    int best = -1;
    Real best_score = 0;
    for (int i = 0; i < m; ++i) {
      if (picked[i]) continue;
      // The first pick is pure relevance; afterwards the marginal score.
      Real s = step == 0 ? rel[i] : lambda * rel[i] - (1.0 - lambda) * max_pen[i];
      bool take = best < 0 || s > best_score ||
                  (s == best_score && candidates[i].term < candidates[best].term);
      if (take) {
        best = i;
        best_score = s;
      }
    }
    picked[best] = 1;
    out.push_back(candidates[best].term);
    for (int i = 0; i < m; ++i)
      if (!picked[i])
        max_pen[i] = std::max(max_pen[i], safe_cosine(candidates[i].vec, candidates[best].vec));
  }
  return out;
}

TopicModel build_topic_model(const ClusterLabels& labels,
                             std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                             const EmbeddingMatrix& emb, const TopicOptions& opt) {
  check_labels(labels, docs);
  if (emb.n() != static_cast<int>(docs.size()))
    throw AlignmentError("build_topic_model: " + std::to_string(emb.n()) + " embeddings vs " +
                         std::to_string(docs.size()) + " documents");
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (emb.uids[i] != docs[i].uid)
      throw AlignmentError("build_topic_model: uid mismatch at row " + std::to_string(i) +
                           ": '" + emb.uids[i] + "' vs '" + docs[i].uid + "'");
  if (opt.top_n < 1) throw ParameterError("build_topic_model: top_n must be positive");
  if (opt.mmr_candidates < 1)
    throw ParameterError("build_topic_model: mmr_candidates must be positive");

  TopicModel model;
  model.labels = labels;
  model.n_topics = topic_count(labels.labels);
  int rows = model.n_topics + 1;

  model.ctfidf = weight_counts(class_counts(labels.labels, docs, vocab, rows));
  model.empty_rows = zero_rows_of(model.ctfidf);
  warn_empty_topics(model.ctfidf);

  model.sizes.assign(rows, 0);
  for (int l : labels.labels) ++model.sizes[l + 1];

  model.centroids = Matrix::Zero(rows, emb.d());
  for (int i = 0; i < emb.n(); ++i)
    model.centroids.row(labels.labels[i] + 1) += emb.values.row(i).cast<double>();
  for (int r = 0; r < rows; ++r)
    if (model.sizes[r] > 0) model.centroids.row(r) /= model.sizes[r];

  model.top_words.resize(rows);
  model.top_words[0] = top_words(model.ctfidf, 0, vocab, opt.top_n);
  for (int t = 0; t < model.n_topics; ++t) {
    int r = t + 1;
    RankedTerms cands = top_words(model.ctfidf, r, vocab, opt.mmr_candidates);
    if (static_cast<int>(cands.size()) <= opt.top_n) {
      model.top_words[r] = std::move(cands);  // nothing to trade off
      continue;
    }

    // Term vectors: mean embedding of the topic's member docs containing the
    // term. Every positive-score candidate occurs in at least one member.
    std::unordered_map<std::string_view, std::size_t> cand_index;
    for (std::size_t ci = 0; ci < cands.size(); ++ci) cand_index.emplace(cands[ci].term, ci);
    std::vector<Vector> sums(cands.size(), Vector::Zero(emb.d()));
    std::vector<int> hits(cands.size(), 0);
    for (int i = 0; i < emb.n(); ++i) {
      if (labels.labels[i] != t) continue;
      std::unordered_set<std::string_view> seen;
      for (const std::string& tok : docs[i].tokens) {
        auto it = cand_index.find(tok);
        if (it == cand_index.end() || !seen.insert(tok).second) continue;
        sums[it->second] += emb.values.row(i).cast<double>().transpose();
        ++hits[it->second];
      }
    }
    std::vector<TermVector> tvs(cands.size());
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      tvs[ci].term = cands[ci].term;
      if (hits[ci] > 0) sums[ci] /= hits[ci];
      tvs[ci].vec = std::move(sums[ci]);
    }

    Vector centroid = model.centroids.row(r).transpose();
    std::vector<std::string> sel = mmr_refine(centroid, tvs, opt.mmr_lambda, opt.top_n);
    std::unordered_set<std::string_view> chosen(sel.begin(), sel.end());
    // cands is already score-descending, so filtering keeps that order.
    RankedTerms kept;
    kept.reserve(sel.size());
    for (const TermScore& ts : cands)
      if (chosen.contains(ts.term)) kept.push_back(ts);
    model.top_words[r] = std::move(kept);
  }
  return model;
}

std::pair<TopicModel, TopicMergeTrace> reduce_topics(const TopicModel& model,
                                                     std::span<const TokenizedDocument> docs,
                                                     const Vocabulary& vocab,
                                                     const EmbeddingMatrix& emb, int target_k,
                                                     const TopicOptions& opt) {
  if (target_k < 1) throw ParameterError("reduce_topics: target_k must be >= 1");
  std::vector<int> labels = model.labels.labels;
  std::vector<int> s = topic_sizes(labels, model.n_topics);
  int current = 0;
  for (int c : s)
    if (c > 0) ++current;
  if (target_k > current)
    throw ParameterError("reduce_topics: target " + std::to_string(target_k) +
                         " exceeds current topic count " + std::to_string(current));
  if (target_k == current) return {model, {}};

  int rows = model.n_topics + 1;
  TopicMergeTrace trace;
  while (current > target_k) {
    s = topic_sizes(labels, model.n_topics);
    int source = -1;
    for (int t = 0; t < model.n_topics; ++t)
      if (s[t] > 0 && (source < 0 || s[t] < s[source])) source = t;
    merge_step(labels, docs, vocab, rows, source, trace);
    --current;
  }
  return finish_merges(labels, model.labels, docs, vocab, emb, opt, std::move(trace));
}

std::pair<TopicModel, TopicMergeTrace> merge_small_topics(const TopicModel& model,
                                                          std::span<const TokenizedDocument> docs,
                                                          const Vocabulary& vocab,
                                                          const EmbeddingMatrix& emb,
                                                          int min_topic_size,
                                                          const TopicOptions& opt) {
  if (min_topic_size < 2) return {model, {}};
  std::vector<int> labels = model.labels.labels;
  int rows = model.n_topics + 1;
  TopicMergeTrace trace;
  while (true) {
    std::vector<int> s = topic_sizes(labels, model.n_topics);
    int alive = 0;
    for (int c : s)
      if (c > 0) ++alive;
    if (alive <= 1) break;
    int source = -1;
    for (int t = 0; t < model.n_topics; ++t)
      if (s[t] > 0 && s[t] < min_topic_size && (source < 0 || s[t] < s[source])) source = t;
    if (source < 0) break;
    merge_step(labels, docs, vocab, rows, source, trace);
  }
  if (trace.empty()) return {model, {}};
  return finish_merges(labels, model.labels, docs, vocab, emb, opt, std::move(trace));
}

void save_topic_model(const fs::path& dir, const TopicModel& model,
                      const TopicMergeTrace& trace) {
  int rows = model.n_topics + 1;
  if (static_cast<int>(model.sizes.size()) != rows ||
      static_cast<int>(model.top_words.size()) != rows)
    throw AlignmentError("save_topic_model: model rows inconsistent");
  fs::create_directories(dir);

  std::string topics_csv = "topic_id,size\n";
  for (int r = 0; r < rows; ++r)
    topics_csv += std::to_string(r - 1) + "," + std::to_string(model.sizes[r]) + "\n";
  write_text_file(dir / "topics.csv", topics_csv);

  std::string words_csv = "topic_id,rank,term,score\n";
  for (int r = 0; r < rows; ++r) {
    int rank = 1;
    for (const TermScore& ts : model.top_words[r])
      words_csv += std::to_string(r - 1) + "," + std::to_string(rank++) + "," +
                   csv_quote(ts.term) + "," + format_fixed(ts.score, 6) + "\n";
  }
  write_text_file(dir / "topic_words.csv", words_csv);

  nlohmann::json j;
  j["n_topics"] = model.n_topics;
  j["n_docs"] = model.labels.n();
  j["outliers"] = model.sizes[0];
  j["sizes"] = std::vector<int>(model.sizes.begin() + 1, model.sizes.end());
  j["empty_rows"] = model.empty_rows;
  nlohmann::json merges = nlohmann::json::array();
  for (const MergeStep& m : trace)
    merges.push_back({{"source", m.source}, {"target", m.target}, {"cosine", m.cosine}});
  j["merges"] = merges;
  write_json_file(dir / "topic_summary.json", j);
}

}  // namespace chronotopic
