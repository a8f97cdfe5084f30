#pragma once

#include <span>
#include <string>
#include <vector>

#include "chronotopic/corpus.hpp"

namespace chronotopic {

enum class DtmMode { bow, tfidf, entity };

/// Non-negative weighted document-term matrix, one row per doc in corpus
/// order. Rows that carry no weight at all are listed in zero_rows.
struct WeightedDocTermMatrix {
  SparseRowMatrix weights;  // n x V
  DtmMode mode = DtmMode::bow;
  std::vector<std::string> uids;  // row -> uid
  std::vector<int> zero_rows;

  int n() const { return static_cast<int>(weights.rows()); }
  int vocab_size() const { return static_cast<int>(weights.cols()); }
};

/// Raw term counts over the vocabulary. Tokens outside the vocabulary are
/// skipped; `mode` tags bow vs entity inputs (same construction).
WeightedDocTermMatrix build_bow(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                DtmMode mode = DtmMode::bow);

/// One TokenizedDocument per uid with the uid's entity strings as tokens
/// (multi-word entities stay single tokens). Docs without annotations get
/// empty token lists so row alignment survives.
std::vector<TokenizedDocument> entity_documents(
    std::span<const std::string> uids,
    const std::unordered_map<std::string, std::vector<std::string>>& entities);

/// weight(d,t) = tf(d,t) * ln(N / df(t)), df counted from the bow matrix.
WeightedDocTermMatrix tfidf_transform(const WeightedDocTermMatrix& bow);

struct LdaModel {
  int K = 0;
  double alpha = 0;  // symmetric document-topic concentration
  double eta = 0;    // symmetric topic-word concentration
  Matrix topic_word;  // K x V variational parameters (lambda)
  Matrix doc_topic;   // n x K variational parameters (gamma)
  std::vector<double> bound_trace;  // per-epoch ELBO estimate
};

/// Batch variational Bayes. Real-valued weights are allowed (TF-IDF runs use
/// them). alpha/eta <= 0 select the 1/K default. Deterministic given seed,
/// independent of thread count.
LdaModel fit_lda(const WeightedDocTermMatrix& m, int K, double alpha, double eta, int epochs,
                 std::uint64_t seed);

struct NmfModel {
  int K = 0;
  Matrix W;  // n x K
  Matrix H;  // K x V
  std::vector<double> objective_trace;  // Frobenius error per iteration
};

/// Multiplicative updates minimizing the Frobenius error. Factors stay
/// >= 1e-12; the objective trace is non-increasing (checked in tests, not
/// assumed). Stops early when the relative objective change drops below
/// 1e-6.
NmfModel fit_nmf(const WeightedDocTermMatrix& m, int K, int iters, std::uint64_t seed);

struct TermScore {
  std::string term;
  double score;
};
using RankedTerms = std::vector<TermScore>;

/// Per-topic top_n terms by normalized topic-word probability; ties resolve
/// lexicographically. top_n above |V| is clipped with a warning on stderr.
std::vector<RankedTerms> lda_topic_words(const LdaModel& model, const Vocabulary& vocab,
                                         int top_n);

/// Same ranking over H rows (unnormalized weights).
std::vector<RankedTerms> nmf_topic_words(const NmfModel& model, const Vocabulary& vocab,
                                         int top_n);

/// CSV export: topic_id,rank,term,score (score with 6 decimals).
void save_topic_words_csv(const fs::path& path, const std::vector<RankedTerms>& topics);

/// Rows scaled to sum 1 (rows summing to 0 are left untouched).
Matrix normalize_rows(Matrix m);

}  // namespace chronotopic
