#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chronotopic/classical.hpp"
#include "chronotopic/embedding.hpp"
#include "chronotopic/manifold.hpp"

namespace chronotopic {

/// Keyword-extraction knobs: how many words to keep per topic, how many
/// c-TF-IDF candidates feed the refiner, and the relevance/diversity
/// tradeoff.
struct TopicOptions {
  int top_n = 10;
  int mmr_candidates = 30;
  Real mmr_lambda = 0.5;
};

/// Cluster topics. Per-topic fields are indexed by row: row 0 is the outlier
/// class (-1), row t+1 is topic t, so matrices have n_topics+1 rows. The
/// keyword lists are MMR-selected sets re-sorted by c-TF-IDF score.
struct TopicModel {
  ClusterLabels labels;
  Matrix ctfidf;                       // (K+1) x V
  std::vector<RankedTerms> top_words;  // one list per row
  std::vector<int> sizes;              // document counts per row; sums to n
  Matrix centroids;                    // (K+1) x d mean member embedding
  std::vector<int> empty_rows;         // all-zero ctfidf rows (includes row 0 when no outliers)
  int n_topics = 0;

  static int row_of(int label) { return label + 1; }
};

struct MergeStep {
  int source = 0;
  int target = 0;
  Real cosine = 0;
};
using TopicMergeTrace = std::vector<MergeStep>;

/// Class-based TF-IDF: classes are the concatenated member documents of each
/// label; W(t,c) = tf(t,c) * ln(1 + A/f_t) with f_t the term's total count
/// across classes and A the mean token count over non-empty classes.
/// With n_topics -1 the topic count is derived from the labels and at least
/// one non-outlier class is required; an explicit n_topics fixes the row
/// layout instead (absent topics become zero rows without warnings), which
/// per-bin callers use to stay aligned with the global matrix.
Matrix ctfidf(const ClusterLabels& labels, std::span<const TokenizedDocument> docs,
              const Vocabulary& vocab, int n_topics = -1);

/// Positive entries of one ctfidf row, descending score, ties lexicographic.
RankedTerms top_words(const Matrix& weights, int row, const Vocabulary& vocab, int n = 10);

struct TermVector {
  std::string term;
  Vector vec;
};

/// Greedy maximal-marginal-relevance over the candidates: first pick is the
/// max-cosine term to the centroid, then argmax of
/// lambda*cos(term, centroid) - (1-lambda)*max cos(term, picked).
/// Ties break lexicographically; zero vectors count as cosine 0.
std::vector<std::string> mmr_refine(const Vector& topic_centroid,
                                    std::span<const TermVector> candidates, Real lambda, int n);

/// The single topic-model constructor: c-TF-IDF, candidate extraction, MMR
/// refinement, centroids. Inputs must be row-aligned (docs[i].uid ==
/// emb.uids[i] == labels slot i).
TopicModel build_topic_model(const ClusterLabels& labels,
                             std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                             const EmbeddingMatrix& emb, const TopicOptions& opt = {});

/// Merges the smallest topic into its max-cosine partner until target_k
/// non-outlier topics remain, then renumbers contiguously and rebuilds.
/// Trace ids refer to the labeling in effect at each merge (original
/// numbering). target_k equal to the current count is the identity.
std::pair<TopicModel, TopicMergeTrace> reduce_topics(const TopicModel& model,
                                                     std::span<const TokenizedDocument> docs,
                                                     const Vocabulary& vocab,
                                                     const EmbeddingMatrix& emb, int target_k,
                                                     const TopicOptions& opt = {});

/// Merges every non-outlier topic smaller than min_topic_size into its
/// max-cosine partner (never below one remaining topic). Thresholds under 2
/// are the identity.
std::pair<TopicModel, TopicMergeTrace> merge_small_topics(const TopicModel& model,
                                                          std::span<const TokenizedDocument> docs,
                                                          const Vocabulary& vocab,
                                                          const EmbeddingMatrix& emb,
                                                          int min_topic_size,
                                                          const TopicOptions& opt = {});

/// Writes topics.csv (topic_id,size), topic_words.csv
/// (topic_id,rank,term,score) and topic_summary.json (sizes, empty rows,
/// merge trace) under dir. Deterministic bytes for identical models.
void save_topic_model(const fs::path& dir, const TopicModel& model,
                      const TopicMergeTrace& trace);

}  // namespace chronotopic
