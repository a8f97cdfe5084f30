#include "chronotopic/dynamics.hpp"

#include <algorithm>

#include "chronotopic/io.hpp"

namespace chronotopic {

TopicsOverTime topics_over_time(const TopicModel& model,
                                const std::unordered_map<std::string, int>& bin_map,
                                std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                const DynamicOptions& opt) {
  if (model.labels.n() != static_cast<int>(docs.size()))
    throw AlignmentError("topics_over_time: " + std::to_string(model.labels.n()) +
                         " labels vs " + std::to_string(docs.size()) + " documents");
  if (model.ctfidf.cols() != vocab.size())
    throw AlignmentError("topics_over_time: model vocabulary width " +
                         std::to_string(model.ctfidf.cols()) + " vs " +
                         std::to_string(vocab.size()));
  if (opt.top_n < 0) throw ParameterError("topics_over_time: top_n must be >= 0");
  if (opt.bins) opt.bins->validate();

  const int k = model.n_topics;
  const int n = static_cast<int>(docs.size());

  // Bin per doc: labeled docs must be covered, outliers may be skipped.
  std::vector<int> doc_bin(n, -1);
  int max_bin = -1;
  for (int i = 0; i < n; ++i) {
    auto it = bin_map.find(docs[i].uid);
    if (it == bin_map.end()) {
      if (model.labels.labels[i] >= 0)
        throw AlignmentError("topics_over_time: no bin for labeled doc '" + docs[i].uid + "'");
      continue;
    }
    if (it->second < 0)
      throw ParameterError("topics_over_time: negative bin for doc '" + docs[i].uid + "'");
    doc_bin[i] = it->second;
    max_bin = std::max(max_bin, it->second);
  }

  TopicsOverTime tot;
  tot.n_topics = k;
  tot.n_bins = opt.bins ? opt.bins->size() : max_bin + 1;
  if (max_bin >= tot.n_bins)
    throw ParameterError("topics_over_time: bin " + std::to_string(max_bin) +
                         " outside the declared " + std::to_string(tot.n_bins) + " bins");
  for (int b = 0; b < tot.n_bins; ++b)
    tot.bin_ranges.push_back(opt.bins ? opt.bins->ranges[b] : std::make_pair(b, b));

  // Raw bin-local weights, aligned to the global row layout. Bins without
  // any binned doc stay zero.
  std::vector<Matrix> weights(tot.n_bins, Matrix::Zero(k + 1, vocab.size()));
  Matrix freq = Matrix::Zero(k, std::max(tot.n_bins, 1));
  for (int b = 0; b < tot.n_bins; ++b) {
    std::vector<TokenizedDocument> bin_docs;
    ClusterLabels bin_labels;
    for (int i = 0; i < n; ++i) {
      if (doc_bin[i] != b) continue;
      bin_docs.push_back(docs[i]);
      bin_labels.labels.push_back(model.labels.labels[i]);
      if (model.labels.labels[i] >= 0) freq(model.labels.labels[i], b) += 1.0;
    }
    if (bin_docs.empty()) continue;
    bin_labels.strengths.assign(bin_labels.labels.size(), 1.0);
    bin_labels.n_clusters = k;
    weights[b] = ctfidf(bin_labels, bin_docs, vocab, k);
  }

  if (opt.smooth) {
    std::vector<Matrix> smoothed = weights;
    for (int b = 1; b < tot.n_bins; ++b) smoothed[b] = 0.5 * (weights[b] + weights[b - 1]);
    weights = std::move(smoothed);
  }
  if (opt.global_tuning)
    for (int b = 0; b < tot.n_bins; ++b) weights[b] = 0.5 * (weights[b] + model.ctfidf);

  for (int t = 0; t < k; ++t)
    for (int b = 0; b < tot.n_bins; ++b) {
      TotRow row;
      row.topic_id = t;
      row.bin = b;
      row.frequency = static_cast<int>(freq(t, b));
      if (row.frequency > 0) row.top_words = top_words(weights[b], t + 1, vocab, opt.top_n);
      tot.rows.push_back(std::move(row));
    }
  return tot;
}

namespace {

std::string joined_terms(const RankedTerms& words) {
  std::string out;
  for (const TermScore& ts : words) {
    if (!out.empty()) out += ", ";
    out += ts.term;
  }
  return out;
}

// Labeled docs per bin, for the proportion variant.
std::vector<long long> bin_totals(const TopicsOverTime& tot) {
  std::vector<long long> totals(std::max(tot.n_bins, 0), 0);
  for (const TotRow& r : tot.rows) totals[r.bin] += r.frequency;
  return totals;
}

}  // namespace

std::string evolution_csv(const TopicsOverTime& tot, bool proportion) {
  std::vector<long long> totals = bin_totals(tot);
  std::string out = "topic_id,bin_start,bin_end,frequency,top_words\n";
  for (const TotRow& r : tot.rows) {
    auto [lo, hi] = tot.bin_ranges[r.bin];
    out += std::to_string(r.topic_id) + "," + std::to_string(lo) + "," + std::to_string(hi) + ",";
    if (proportion) {
      double p = totals[r.bin] > 0 ? static_cast<double>(r.frequency) / totals[r.bin] : 0.0;
      out += format_fixed(p, 6);
    } else {
      out += std::to_string(r.frequency);
    }
    out += "," + csv_quote(joined_terms(r.top_words)) + "\n";
  }
  return out;
}

void save_evolution_csv(const fs::path& path, const TopicsOverTime& tot, bool proportion) {
  write_text_file(path, evolution_csv(tot, proportion));
}

nlohmann::json evolution_json(const TopicsOverTime& tot) {
  nlohmann::json rows = nlohmann::json::array();
  for (const TotRow& r : tot.rows) {
    nlohmann::json words = nlohmann::json::array();
    for (const TermScore& ts : r.top_words)
      words.push_back({{"term", ts.term}, {"score", ts.score}});
    rows.push_back({{"topic_id", r.topic_id},
                    {"bin", r.bin},
                    {"bin_start", tot.bin_ranges[r.bin].first},
                    {"bin_end", tot.bin_ranges[r.bin].second},
                    {"frequency", r.frequency},
                    {"top_words", words}});
  }
  return rows;
}

void save_evolution_json(const fs::path& path, const TopicsOverTime& tot) {
  write_json_file(path, evolution_json(tot));
}

}  // namespace chronotopic
