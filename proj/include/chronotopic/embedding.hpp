#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronotopic/corpus.hpp"
#include "chronotopic/io.hpp"

namespace chronotopic {

/// Document vectors, one row per uid. Values live as float32 (matching the
/// on-disk format); all metric math accumulates in double.
struct EmbeddingMatrix {
  MatrixF values;
  std::vector<std::string> uids;                 // row -> uid
  std::unordered_map<std::string, int> uid_index;  // uid -> row
  std::vector<int> fallback_rows;                // rows synthesized by hash_embed

  int n() const { return static_cast<int>(values.rows()); }
  int d() const { return static_cast<int>(values.cols()); }

  const float* row(int i) const { return values.data() + static_cast<std::ptrdiff_t>(i) * d(); }
};

struct Neighbor {
  int id;
  Real dist;
  bool operator==(const Neighbor&) const = default;
};

/// Exact k-nearest-neighbor lists, ascending distance, ties to lower row id.
struct NeighborList {
  int k = 0;
  std::vector<std::vector<Neighbor>> rows;
};

enum class Metric { cosine, euclidean };

/// Binary vectors + jsonl {uid,row} index. The index must be a bijection
/// onto the matrix rows.
EmbeddingMatrix load_embeddings(const fs::path& vectors_path, const fs::path& index_path);

/// As above, then reordered to `corpus_uids`. Rows for uids outside the
/// corpus are dropped; corpus uids missing from the index raise
/// AlignmentError listing them.
EmbeddingMatrix load_embeddings(const fs::path& vectors_path, const fs::path& index_path,
                                std::span<const std::string> corpus_uids);

void save_embeddings(const fs::path& vectors_path, const fs::path& index_path,
                     const EmbeddingMatrix& m);

/// Deterministic fallback embedder: every vocab term hashes (with the seed)
/// to one dimension and a sign; a document is the signed sum of its terms'
/// tf·ln(N/df) weights, L2-normalized. Documents with no surviving vocab
/// terms get a seed-derived unit vector and are listed in fallback_rows.
EmbeddingMatrix hash_embed(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                           int d, std::uint64_t seed);

/// Cosine similarity with double accumulation. Throws ParameterError on a
/// zero vector or length mismatch.
template <typename U, typename V>
Real cosine(const U& u, const V& v) {
  if (u.size() != v.size()) throw ParameterError("cosine: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    double a = static_cast<double>(u(i));
    double b = static_cast<double>(v(i));
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) throw ParameterError("cosine: zero vector");
  double c = dot / std::sqrt(nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

/// Exact brute-force kNN (no self-neighbors). Rows are computed in parallel;
/// the result is independent of the thread count.
NeighborList knn(const EmbeddingMatrix& m, int k, Metric metric);

}  // namespace chronotopic
