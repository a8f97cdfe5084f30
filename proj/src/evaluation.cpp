#include "chronotopic/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include "chronotopic/io.hpp"

namespace chronotopic {

namespace {

long long popcount_all(const std::vector<std::uint64_t>& bits) {
  long long n = 0;
  for (std::uint64_t b : bits) n += std::popcount(b);
  return n;
}

long long popcount_and(const std::vector<std::uint64_t>& a,
                       const std::vector<std::uint64_t>& b) {
  long long n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] & b[i]);
  return n;
}

}  // namespace

Real npmi_coherence(std::span<const std::vector<std::string>> topics,
                    std::span<const TokenizedDocument> docs, int window) {
  if (window < 1) throw ParameterError("npmi_coherence: window must be >= 1");
  if (topics.empty()) throw ParameterError("npmi_coherence: no topics");

  // Tracked terms: the union of all topic lists.
  std::unordered_map<std::string_view, int> term_id;
  for (const auto& topic : topics)
    for (const std::string& term : topic) term_id.emplace(term, term_id.size());
  const int n_terms = static_cast<int>(term_id.size());

  long long total = 0;
  for (const auto& d : docs) {
    int len = static_cast<int>(d.tokens.size());
    if (len > 0) total += len <= window ? 1 : len - window + 1;
  }

  // Per-term window-presence bitsets over the pooled window sequence.
  std::size_t blocks = static_cast<std::size_t>((total + 63) / 64);
  std::vector<std::vector<std::uint64_t>> bits(n_terms,
                                               std::vector<std::uint64_t>(blocks, 0));
  long long gw = 0;
  std::vector<long long> last(n_terms, -1);
  for (const auto& d : docs) {
    int len = static_cast<int>(d.tokens.size());
    if (len == 0) continue;
    std::vector<int> tid(len, -1);
    for (int q = 0; q < len; ++q) {
      auto it = term_id.find(d.tokens[q]);
      if (it != term_id.end()) tid[q] = it->second;
    }
    int width = std::min(len, window);
    int wins = len <= window ? 1 : len - window + 1;
    for (int p = 0; p < wins; ++p, ++gw) {
      for (int q = p; q < p + width; ++q) {
        int t = tid[q];
        if (t < 0 || last[t] == gw) continue;
        last[t] = gw;
        bits[t][static_cast<std::size_t>(gw >> 6)] |= 1ull << (gw & 63);
      }
    }
  }

  std::vector<long long> count(n_terms);
  for (int t = 0; t < n_terms; ++t) count[t] = popcount_all(bits[t]);

  std::set<std::string_view> warned;
  auto absent = [&](std::string_view term, int id) {
    if (count[id] > 0) return false;
    if (warned.insert(term).second)
      std::cerr << "npmi_coherence: term '" << term << "' absent from the corpus; skipping its pairs\n";
    return true;
  };

  double topic_sum = 0.0;
  int topics_scored = 0;
  for (std::size_t t = 0; t < topics.size(); ++t) {
    const auto& terms = topics[t];
    double pair_sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i + 1 < terms.size(); ++i) {
      int a = term_id.at(terms[i]);
      if (absent(terms[i], a)) continue;
      for (std::size_t j = i + 1; j < terms.size(); ++j) {
        int b = term_id.at(terms[j]);
        if (absent(terms[j], b)) continue;
        long long joint = popcount_and(bits[a], bits[b]);
        double score;
        if (joint == 0) {
          score = -1.0;
        } else if (joint == count[a] && joint == count[b]) {
          score = 1.0;  // same windows: the formula's exact limit
        } else {
          double pij = static_cast<double>(joint) / total;
          double pi = static_cast<double>(count[a]) / total;
          double pj = static_cast<double>(count[b]) / total;
          score = std::log(pij / (pi * pj)) / (-std::log(pij));
        }
        pair_sum += score;
        ++pairs;
      }
    }
    if (pairs == 0) {
      std::cerr << "npmi_coherence: topic " << t << " has no scorable pairs; skipped\n";
      continue;
    }
    topic_sum += pair_sum / pairs;
    ++topics_scored;
  }
  if (topics_scored == 0)
    throw ValidationError("npmi_coherence: every pair was skipped; score undefined");
  return topic_sum / topics_scored;
}

Real topic_diversity(std::span<const std::vector<std::string>> topics, int k) {
  if (k < 1) throw ParameterError("topic_diversity: k must be >= 1");
  if (topics.empty()) throw ParameterError("topic_diversity: no topics");
  std::set<std::string_view> unique;
  for (const auto& topic : topics) {
    std::size_t take = std::min<std::size_t>(topic.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < take; ++i) unique.insert(topic[i]);
  }
  return static_cast<double>(unique.size()) /
         (static_cast<double>(topics.size()) * static_cast<double>(k));
}

std::vector<std::vector<std::string>> topic_term_lists(const TopicModel& model, int k) {
  if (k < 1) throw ParameterError("topic_term_lists: k must be >= 1");
  std::vector<std::vector<std::string>> lists;
  for (int t = 0; t < model.n_topics; ++t) {
    const RankedTerms& row = model.top_words[t + 1];
    std::vector<std::string> terms;
    for (std::size_t i = 0; i < row.size() && i < static_cast<std::size_t>(k); ++i)
      terms.push_back(row[i].term);
    lists.push_back(std::move(terms));
  }
  return lists;
}

SizeDistribution size_distribution(const TopicModel& model) {
  SizeDistribution d;
  d.outliers = model.sizes.empty() ? 0 : model.sizes[0];
  for (std::size_t r = 1; r < model.sizes.size(); ++r) d.sizes.push_back(model.sizes[r]);
  d.n_docs = model.labels.n();
  d.outlier_share = d.n_docs > 0 ? static_cast<double>(d.outliers) / d.n_docs : 0.0;
  return d;
}

nlohmann::json eval_report_json(const EvalReport& report) {
  return {{"model", report.model_tag},
          {"n_topics", report.n_topics},
          {"tc", report.tc},
          {"td", report.td},
          {"fit_seconds", report.fit_seconds},
          {"sizes", report.sizes.sizes},
          {"outliers", report.sizes.outliers},
          {"outlier_share", report.sizes.outlier_share},
          {"n_docs", report.sizes.n_docs}};
}

ComparisonTable compare(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ParameterError("compare: no reports");

  // Winners are judged on the rendered two-decimal values so the flags
  // always agree with what the table shows.
  std::vector<std::string> tc_s, td_s;
  std::map<int, std::pair<double, double>> best;  // #T -> (max tc, max td)
  for (const EvalReport& r : reports) {
    tc_s.push_back(format_fixed(r.tc, 2));
    td_s.push_back(format_fixed(r.td, 2));
    double tc = std::stod(tc_s.back());
    double td = std::stod(td_s.back());
    auto [it, fresh] = best.emplace(r.n_topics, std::make_pair(tc, td));
    if (!fresh) {
      it->second.first = std::max(it->second.first, tc);
      it->second.second = std::max(it->second.second, td);
    }
  }

  ComparisonTable table;
  table.csv = "model,n_topics,tc,td,fit_seconds,best_tc,best_td\n";
  table.markdown = "| Model | #T | TC | TD | Time (s) |\n|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const EvalReport& r = reports[i];
    bool btc = std::stod(tc_s[i]) == best.at(r.n_topics).first;
    bool btd = std::stod(td_s[i]) == best.at(r.n_topics).second;
    std::string time_s = format_fixed(r.fit_seconds, 2);
    table.csv += csv_quote(r.model_tag) + "," + std::to_string(r.n_topics) + "," + tc_s[i] +
                 "," + td_s[i] + "," + time_s + "," + (btc ? "1" : "0") + "," +
                 (btd ? "1" : "0") + "\n";
    table.markdown += "| " + r.model_tag + " | " + std::to_string(r.n_topics) + " | " +
                      (btc ? "**" + tc_s[i] + "**" : tc_s[i]) + " | " +
                      (btd ? "**" + td_s[i] + "**" : td_s[i]) + " | " + time_s + " |\n";
  }
  return table;
}

}  // namespace chronotopic
