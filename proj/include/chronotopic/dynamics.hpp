#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "chronotopic/topics.hpp"

namespace chronotopic {

struct DynamicOptions {
  bool global_tuning = false;  // average each bin row with the topic's global row
  bool smooth = false;         // average each bin row with the previous bin's raw row
  int top_n = 10;
  const TimeBins* bins = nullptr;  // year ranges for reports; bin index stands in when absent
};

struct TotRow {
  int topic_id = 0;
  int bin = 0;
  int frequency = 0;  // member documents of the topic inside the bin
  RankedTerms top_words;
};

/// Per-(topic, bin) frequencies and bin-local representations. Rows cover
/// every non-outlier topic crossed with every bin, sorted by
/// (topic_id, bin); Σ_bins frequency(topic) equals the static topic size.
struct TopicsOverTime {
  std::vector<TotRow> rows;
  std::vector<std::pair<int, int>> bin_ranges;  // inclusive, per bin
  int n_topics = 0;
  int n_bins = 0;
};

/// Topic labels stay fixed by the static model; each bin re-represents them
/// with a bin-local c-TF-IDF over the bin's classes. Topics absent from a
/// bin get frequency 0 and an empty word list. Every labeled doc must have
/// a bin; outlier docs without one are skipped.
TopicsOverTime topics_over_time(const TopicModel& model,
                                const std::unordered_map<std::string, int>& bin_map,
                                std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                const DynamicOptions& opt = {});

/// CSV rows topic_id,bin_start,bin_end,frequency,top_words (terms joined
/// ", " and quoted). `proportion` swaps the raw count for the topic's share
/// of the bin's labeled documents (6 decimals, 0 for empty bins).
std::string evolution_csv(const TopicsOverTime& tot, bool proportion = false);
void save_evolution_csv(const fs::path& path, const TopicsOverTime& tot,
                        bool proportion = false);

/// Same rows as objects with embedded {term, score} arrays.
nlohmann::json evolution_json(const TopicsOverTime& tot);
void save_evolution_json(const fs::path& path, const TopicsOverTime& tot);

}  // namespace chronotopic
