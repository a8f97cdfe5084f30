#include "chronotopic/embedding.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace chronotopic {

namespace {

void check_finite(const MatrixF& m, const fs::path& path) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!std::isfinite(m(i, j)))
        throw FormatError(path.string() + ": non-finite value at row " + std::to_string(i) +
                          ", col " + std::to_string(j));
}

}  // namespace

EmbeddingMatrix load_embeddings(const fs::path& vectors_path, const fs::path& index_path) {
  EmbeddingMatrix m;
  m.values = read_matrix_f32(vectors_path);
  check_finite(m.values, vectors_path);
  const int n = m.n();
  m.uids.assign(n, {});
  std::vector<bool> row_seen(n, false);
  for_each_jsonl(index_path, [&](std::size_t lineno, const nlohmann::json& rec) {
    if (!rec.is_object() || !rec.contains("uid") || !rec.contains("row") ||
        !rec["uid"].is_string() || !rec["row"].is_number_integer())
      throw ParseError(index_path.string() + ":" + std::to_string(lineno) +
                       ": record needs uid (string) and row (integer)");
    std::string uid = rec["uid"].get<std::string>();
    int row = rec["row"].get<int>();
    if (row < 0 || row >= n)
      throw FormatError(index_path.string() + ":" + std::to_string(lineno) + ": row " +
                        std::to_string(row) + " outside matrix with " + std::to_string(n) +
                        " rows");
    if (row_seen[row])
      throw FormatError(index_path.string() + ":" + std::to_string(lineno) + ": row " +
                        std::to_string(row) + " mapped twice");
    if (m.uid_index.count(uid))
      throw FormatError(index_path.string() + ":" + std::to_string(lineno) + ": uid \"" + uid +
                        "\" mapped twice");
    row_seen[row] = true;
    m.uid_index.emplace(uid, row);
    m.uids[row] = uid;
  });
  for (int i = 0; i < n; ++i)
    if (!row_seen[i])
      throw FormatError(index_path.string() + ": row " + std::to_string(i) +
                        " has no uid (index must be a bijection)");
  return m;
}

EmbeddingMatrix load_embeddings(const fs::path& vectors_path, const fs::path& index_path,
                                std::span<const std::string> corpus_uids) {
  EmbeddingMatrix raw = load_embeddings(vectors_path, index_path);

  std::vector<std::string> missing;
  for (const auto& uid : corpus_uids)
    if (!raw.uid_index.count(uid)) missing.push_back(uid);
  if (!missing.empty()) {
    std::string list;
    std::size_t shown = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      if (i) list += ", ";
      list += missing[i];
    }
    if (missing.size() > shown)
      list += ", ... (" + std::to_string(missing.size() - shown) + " more)";
    throw AlignmentError("embeddings at " + vectors_path.string() + " lack " +
                         std::to_string(missing.size()) + " corpus uid(s): " + list);
  }

  EmbeddingMatrix aligned;
  aligned.values.resize(static_cast<Eigen::Index>(corpus_uids.size()), raw.values.cols());
  aligned.uids.reserve(corpus_uids.size());
  for (std::size_t i = 0; i < corpus_uids.size(); ++i) {
    aligned.values.row(static_cast<Eigen::Index>(i)) =
        raw.values.row(raw.uid_index.at(corpus_uids[i]));
    aligned.uids.push_back(corpus_uids[i]);
    aligned.uid_index.emplace(corpus_uids[i], static_cast<int>(i));
  }
  return aligned;
}

void save_embeddings(const fs::path& vectors_path, const fs::path& index_path,
                     const EmbeddingMatrix& m) {
  write_matrix_f32(vectors_path, m.values);
  std::string lines;
  for (int i = 0; i < m.n(); ++i) {
    nlohmann::json rec = {{"uid", m.uids[i]}, {"row", i}};
    lines += rec.dump();
    lines += '\n';
  }
  write_text_file(index_path, lines);
}

EmbeddingMatrix hash_embed(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                           int d, std::uint64_t seed) {
  if (d < 8) throw ParameterError("hash_embed: d must be >= 8");
  const int V = vocab.size();

  // One (dimension, sign) slot per vocab term, fixed by term text and seed.
  std::vector<int> term_dim(V);
  std::vector<float> term_sign(V);
  std::vector<double> term_idf(V);
  std::size_t n_docs = docs.size();
  for (int t = 0; t < V; ++t) {
    Rng r(fnv1a64(vocab.terms[t]) ^ seed);
    std::uint64_t z = r.next_u64();
    term_dim[t] = static_cast<int>(z % static_cast<std::uint64_t>(d));
    term_sign[t] = (r.next_u64() & 1) ? 1.0f : -1.0f;
    term_idf[t] =
        std::log(static_cast<double>(n_docs) / static_cast<double>(vocab.doc_freq[t]));
  }

  EmbeddingMatrix m;
  m.values = MatrixF::Zero(static_cast<Eigen::Index>(docs.size()), d);
  m.uids.reserve(docs.size());
  std::vector<char> fallback(docs.size(), 0);

  parallel_for(docs.size(), [&](std::size_t i) {
    const auto& doc = docs[i];
    std::vector<double> vec(static_cast<std::size_t>(d), 0.0);
    std::unordered_map<int, int> tf;
    for (const auto& tok : doc.tokens) {
      int t = vocab.id_of(tok);
      if (t >= 0) ++tf[t];
    }
    for (const auto& [t, count] : tf)
      vec[static_cast<std::size_t>(term_dim[t])] +=
          term_sign[t] * static_cast<double>(count) * term_idf[t];
    double norm2 = 0;
    for (double x : vec) norm2 += x * x;
    if (norm2 == 0.0) {
      fallback[i] = 1;
      Rng r(derive_seed(seed, "hash_embed/fallback/" + doc.uid));
      for (auto& x : vec) x = r.gaussian();
      norm2 = 0;
      for (double x : vec) norm2 += x * x;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (int j = 0; j < d; ++j)
      m.values(static_cast<Eigen::Index>(i), j) = static_cast<float>(vec[j] * inv);
  });

  for (std::size_t i = 0; i < docs.size(); ++i) {
    m.uids.push_back(docs[i].uid);
    m.uid_index.emplace(docs[i].uid, static_cast<int>(i));
    if (fallback[i]) m.fallback_rows.push_back(static_cast<int>(i));
  }
  return m;
}

NeighborList knn(const EmbeddingMatrix& m, int k, Metric metric) {
  const int n = m.n();
  const int d = m.d();
  if (k < 1) throw ParameterError("knn: k must be >= 1");
  if (k >= n)
    throw ParameterError("knn: k=" + std::to_string(k) + " must be smaller than n=" +
                         std::to_string(n));

  std::vector<double> norms;
  if (metric == Metric::cosine) {
    norms.resize(n);
    for (int i = 0; i < n; ++i) {
      const float* a = m.row(i);
      double s = 0;
      for (int t = 0; t < d; ++t) s += static_cast<double>(a[t]) * a[t];
      if (s == 0.0)
        throw ParameterError("knn: row " + std::to_string(i) + " is a zero vector");
      norms[i] = std::sqrt(s);
    }
  }

  NeighborList out;
  out.k = k;
  out.rows.resize(n);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    const float* a = m.row(i);
    std::vector<Neighbor> cand;
    cand.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const float* b = m.row(j);
      double dist;
      if (metric == Metric::cosine) {
        double dot = 0;
        for (int t = 0; t < d; ++t) dot += static_cast<double>(a[t]) * b[t];
        dist = 1.0 - dot / (norms[i] * norms[j]);
        if (dist < 0) dist = 0;
      } else {
        double s = 0;
        for (int t = 0; t < d; ++t) {
          double diff = static_cast<double>(a[t]) - b[t];
          s += diff * diff;
        }
        dist = std::sqrt(s);
      }
      cand.push_back({j, dist});
    }
    auto by_dist_then_id = [](const Neighbor& x, const Neighbor& y) {
      return x.dist != y.dist ? x.dist < y.dist : x.id < y.id;
    };
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), by_dist_then_id);
    cand.resize(k);
    out.rows[ii] = std::move(cand);
  });
  return out;
}

}  // namespace chronotopic
