#pragma once

#include <span>
#include <string>
#include <vector>

#include "chronotopic/topics.hpp"

namespace chronotopic {

/// Mean NPMI over per-topic term pairs. Probabilities come from boolean
/// sliding windows of `window` tokens per document (docs at or under the
/// width count as one window, empty docs none), pooled across the corpus.
/// Pair conventions: zero joint count → −1; a pair occupying exactly the
/// same windows → +1; otherwise ln(P_ij/(P_i·P_j)) / (−ln P_ij). Terms
/// absent from the corpus skip their pairs with a warning, topics left
/// without pairs are skipped, and if nothing remains the score is
/// undefined (ValidationError).
Real npmi_coherence(std::span<const std::vector<std::string>> topics,
                    std::span<const TokenizedDocument> docs, int window = 10);

/// |unique terms| / (K·k) over the first k terms of each list. Lists
/// shorter than k keep the full denominator, so degenerate topics lower
/// the score.
Real topic_diversity(std::span<const std::vector<std::string>> topics, int k = 10);

/// Non-outlier keyword lists of a model, truncated to k terms each — the
/// form the metrics above consume.
std::vector<std::vector<std::string>> topic_term_lists(const TopicModel& model, int k = 10);

struct SizeDistribution {
  std::vector<int> sizes;  // per non-outlier topic
  int outliers = 0;
  int n_docs = 0;
  Real outlier_share = 0.0;
};

SizeDistribution size_distribution(const TopicModel& model);

/// One evaluated model: the TC/TD/Time columns plus the size histogram.
struct EvalReport {
  std::string model_tag;
  int n_topics = 0;
  Real tc = 0.0;
  Real td = 0.0;
  Real fit_seconds = 0.0;
  SizeDistribution sizes;
};

nlohmann::json eval_report_json(const EvalReport& report);

struct ComparisonTable {
  std::string csv;
  std::string markdown;
};

/// Rows (model, #T, TC, TD, Time) in input order, TC/TD to two decimals.
/// The best TC and best TD within each #T group are flagged — CSV gets
/// best_tc/best_td columns, Markdown bolds the cells — with ties judged on
/// the rendered two-decimal values, so every displayed winner is flagged.
ComparisonTable compare(std::span<const EvalReport> reports);

}  // namespace chronotopic
