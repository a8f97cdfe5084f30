#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>
#include <unordered_map>
#include <vector>

#include "chronotopic/dynamics.hpp"
#include "helpers.hpp"

using namespace chronotopic;
using ct_test::TempDir;

namespace {

Vocabulary make_vocab(std::vector<std::string> terms) {
  std::sort(terms.begin(), terms.end());
  Vocabulary v;
  v.terms = std::move(terms);
  for (std::size_t i = 0; i < v.terms.size(); ++i) v.ids[v.terms[i]] = static_cast<int>(i);
  v.doc_freq.assign(v.terms.size(), 0);
  v.corpus_freq.assign(v.terms.size(), 0);
  return v;
}

TokenizedDocument doc(std::string uid, std::vector<std::string> tokens) {
  return {std::move(uid), std::move(tokens), true};
}

ClusterLabels make_labels(std::vector<int> l) {
  ClusterLabels c;
  for (int v : l) c.n_clusters = std::max(c.n_clusters, v + 1);
  c.strengths.assign(l.size(), 1.0);
  c.labels = std::move(l);
  return c;
}

EmbeddingMatrix make_emb(int n, int d, const std::vector<std::string>& uids) {
  EmbeddingMatrix m;
  m.values = MatrixF::Zero(n, d);
  for (int i = 0; i < n; ++i) m.values(i, i % d) = 1.0f;
  m.uids = uids;
  for (std::size_t i = 0; i < uids.size(); ++i) m.uid_index[uids[i]] = static_cast<int>(i);
  return m;
}

struct Fixture {
  std::vector<TokenizedDocument> docs;
  Vocabulary vocab;
  ClusterLabels labels;
  EmbeddingMatrix emb;
  TopicModel model;
};

// Ten docs over three topics plus an outlier (sizes 3/2/4/1), as in the
// topics tests.
Fixture make_fruit() {
  Fixture f;
  f.docs = {doc("f0", {"kiwi", "lime"}),   doc("f1", {"kiwi", "kiwi"}),
            doc("f2", {"lime", "kiwi"}),   doc("f3", {"kiwi", "lime", "lime"}),
            doc("f4", {"lime"}),           doc("f5", {"mango", "peach"}),
            doc("f6", {"peach", "mango"}), doc("f7", {"mango"}),
            doc("f8", {"peach", "peach"}), doc("f9", {"plum"})};
  f.vocab = make_vocab({"kiwi", "lime", "mango", "peach", "plum"});
  f.labels = make_labels({0, 0, 0, 1, 1, 2, 2, 2, 2, -1});
  std::vector<std::string> uids;
  for (const auto& d : f.docs) uids.push_back(d.uid);
  f.emb = make_emb(10, 4, uids);
  f.model = build_topic_model(f.labels, f.docs, f.vocab, f.emb);
  return f;
}

// Two topics plus an outlier over the 6-doc energy/farming toy.
Fixture make_toy() {
  Fixture f;
  f.docs = {doc("d0", {"reactor", "atom", "reactor"}), doc("d1", {"power", "reactor"}),
            doc("d2", {"atom", "power"}),              doc("d3", {"farm", "wheat", "wheat"}),
            doc("d4", {"farm", "power"}),              doc("d5", {"power"})};
  f.vocab = make_vocab({"atom", "farm", "power", "reactor", "wheat"});
  f.labels = make_labels({0, 0, 0, 1, 1, -1});
  std::vector<std::string> uids;
  for (const auto& d : f.docs) uids.push_back(d.uid);
  f.emb = make_emb(6, 3, uids);
  f.model = build_topic_model(f.labels, f.docs, f.vocab, f.emb);
  return f;
}

std::unordered_map<std::string, int> bins_of(const std::vector<std::string>& uids,
                                             const std::vector<int>& bins) {
  std::unordered_map<std::string, int> m;
  for (std::size_t i = 0; i < uids.size(); ++i) m[uids[i]] = bins[i];
  return m;
}

const TotRow& row_of(const TopicsOverTime& tot, int topic, int bin) {
  auto it = std::find_if(tot.rows.begin(), tot.rows.end(), [&](const TotRow& r) {
    return r.topic_id == topic && r.bin == bin;
  });
  REQUIRE(it != tot.rows.end());
  return *it;
}

}  // namespace

TEST_CASE("topics_over_time shape, ordering and conservation") {
  Fixture f = make_fruit();
  auto bin_map = bins_of(f.emb.uids, {0, 0, 1, 0, 1, 1, 1, 1, 1, 0});
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab);
  CHECK(tot.n_topics == 3);
  CHECK(tot.n_bins == 2);
  REQUIRE(tot.rows.size() == 6);  // 3 topics x 2 bins
  for (std::size_t i = 1; i < tot.rows.size(); ++i) {
    const TotRow& a = tot.rows[i - 1];
    const TotRow& b = tot.rows[i];
    CHECK(std::make_pair(a.topic_id, a.bin) < std::make_pair(b.topic_id, b.bin));
  }
  // Per-topic frequencies sum to the static sizes.
  for (int t = 0; t < 3; ++t) {
    int sum = 0;
    for (const TotRow& r : tot.rows)
      if (r.topic_id == t) sum += r.frequency;
    CHECK(sum == f.model.sizes[t + 1]);
  }
  CHECK(row_of(tot, 0, 0).frequency == 2);
  CHECK(row_of(tot, 0, 1).frequency == 1);
  CHECK(row_of(tot, 2, 0).frequency == 0);
  CHECK(row_of(tot, 2, 0).top_words.empty());  // absent topic: no words
  CHECK(!row_of(tot, 2, 1).top_words.empty());
}

TEST_CASE("single bin with tuning off reproduces the static ranking") {
  Fixture f = make_toy();
  auto bin_map = bins_of(f.emb.uids, {0, 0, 0, 0, 0, 0});
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab);
  REQUIRE(tot.rows.size() == 2);
  for (int t = 0; t < 2; ++t) {
    RankedTerms want = top_words(f.model.ctfidf, t + 1, f.vocab, 10);
    const RankedTerms& got = row_of(tot, t, 0).top_words;
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got[i].term == want[i].term);
      CHECK(got[i].score == want[i].score);
    }
  }
  // Averaging the single bin with an identical global row changes nothing.
  DynamicOptions tuned;
  tuned.global_tuning = true;
  TopicsOverTime tot2 = topics_over_time(f.model, bin_map, f.docs, f.vocab, tuned);
  for (int t = 0; t < 2; ++t) {
    const RankedTerms& a = row_of(tot, t, 0).top_words;
    const RankedTerms& b = row_of(tot2, t, 0).top_words;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].term == b[i].term);
      CHECK(a[i].score == b[i].score);
    }
  }
}

TEST_CASE("global tuning averages bin rows with the global row") {
  Fixture f = make_toy();
  std::vector<int> bins = {0, 0, 1, 0, 1, 0};
  auto bin_map = bins_of(f.emb.uids, bins);
  DynamicOptions opt;
  opt.global_tuning = true;
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab, opt);

  // Recompose bin 0's weights from the public pieces and average by hand.
  std::vector<TokenizedDocument> bin_docs;
  std::vector<int> bin_labels;
  for (int i = 0; i < 6; ++i)
    if (bins[i] == 0) {
      bin_docs.push_back(f.docs[i]);
      bin_labels.push_back(f.labels.labels[i]);
    }
  Matrix local = ctfidf(make_labels(bin_labels), bin_docs, f.vocab, 2);
  Matrix tuned = 0.5 * (local + f.model.ctfidf);
  for (int t = 0; t < 2; ++t) {
    RankedTerms want = top_words(tuned, t + 1, f.vocab, 10);
    const RankedTerms& got = row_of(tot, t, 0).top_words;
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got[i].term == want[i].term);
      CHECK(got[i].score == want[i].score);
    }
  }
}

TEST_CASE("smoothing averages a bin with the previous raw bin") {
  Fixture f = make_toy();
  std::vector<int> bins = {0, 0, 1, 0, 1, 0};
  auto bin_map = bins_of(f.emb.uids, bins);
  DynamicOptions opt;
  opt.smooth = true;
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab, opt);

  std::vector<TokenizedDocument> d0, d1;
  std::vector<int> l0, l1;
  for (int i = 0; i < 6; ++i) {
    if (bins[i] == 0) {
      d0.push_back(f.docs[i]);
      l0.push_back(f.labels.labels[i]);
    } else {
      d1.push_back(f.docs[i]);
      l1.push_back(f.labels.labels[i]);
    }
  }
  Matrix raw0 = ctfidf(make_labels(l0), d0, f.vocab, 2);
  Matrix raw1 = ctfidf(make_labels(l1), d1, f.vocab, 2);
  Matrix sm1 = 0.5 * (raw1 + raw0);
  // Bin 0 is untouched; bin 1 is the average with bin 0.
  for (int t = 0; t < 2; ++t) {
    RankedTerms want0 = top_words(raw0, t + 1, f.vocab, 10);
    const RankedTerms& got0 = row_of(tot, t, 0).top_words;
    if (row_of(tot, t, 0).frequency > 0) {
      REQUIRE(got0.size() == want0.size());
      for (std::size_t i = 0; i < want0.size(); ++i) CHECK(got0[i].score == want0[i].score);
    }
    RankedTerms want1 = top_words(sm1, t + 1, f.vocab, 10);
    const RankedTerms& got1 = row_of(tot, t, 1).top_words;
    if (row_of(tot, t, 1).frequency > 0) {
      REQUIRE(got1.size() == want1.size());
      for (std::size_t i = 0; i < want1.size(); ++i) CHECK(got1[i].score == want1[i].score);
    }
  }
}

TEST_CASE("declared time bins add empty-bin rows") {
  Fixture f = make_fruit();
  auto bin_map = bins_of(f.emb.uids, {0, 0, 0, 0, 0, 2, 2, 2, 2, 2});
  TimeBins tb;
  tb.ranges = {{1900, 1919}, {1920, 1939}, {1940, 1959}};
  DynamicOptions opt;
  opt.bins = &tb;
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab, opt);
  CHECK(tot.n_bins == 3);
  REQUIRE(tot.rows.size() == 9);
  for (int t = 0; t < 3; ++t) {
    CHECK(row_of(tot, t, 1).frequency == 0);
    CHECK(row_of(tot, t, 1).top_words.empty());
  }
  CHECK(tot.bin_ranges[1] == std::make_pair(1920, 1939));
}

TEST_CASE("burst topic peaks in its planted bin") {
  // Topic 0 members split 2/8/3 across three bins.
  std::vector<TokenizedDocument> docs;
  std::vector<int> labels;
  std::vector<int> bins;
  std::vector<std::string> uids;
  auto add = [&](int count, int bin) {
    for (int i = 0; i < count; ++i) {
      std::string uid = "b" + std::to_string(bin) + "_" + std::to_string(i);
      docs.push_back(doc(uid, {"surge", "wave"}));
      labels.push_back(0);
      bins.push_back(bin);
      uids.push_back(uid);
    }
  };
  add(2, 0);
  add(8, 1);
  add(3, 2);
  Vocabulary vocab = make_vocab({"surge", "wave"});
  EmbeddingMatrix emb = make_emb(13, 3, uids);
  TopicModel model = build_topic_model(make_labels(labels), docs, vocab, emb);
  TopicsOverTime tot = topics_over_time(model, bins_of(uids, bins), docs, vocab);
  int peak = -1, best = -1;
  for (const TotRow& r : tot.rows)
    if (r.topic_id == 0 && r.frequency > best) {
      best = r.frequency;
      peak = r.bin;
    }
  CHECK(peak == 1);
  CHECK(best == 8);
}

TEST_CASE("relabeling bins permutes rows without changing frequencies") {
  Fixture f = make_fruit();
  std::vector<int> bins = {0, 0, 1, 0, 1, 1, 1, 1, 1, 0};
  std::vector<int> swapped = bins;
  for (int& b : swapped) b = 1 - b;
  TopicsOverTime a = topics_over_time(f.model, bins_of(f.emb.uids, bins), f.docs, f.vocab);
  TopicsOverTime b = topics_over_time(f.model, bins_of(f.emb.uids, swapped), f.docs, f.vocab);
  for (int t = 0; t < 3; ++t)
    for (int bin = 0; bin < 2; ++bin) {
      CHECK(row_of(a, t, bin).frequency == row_of(b, t, 1 - bin).frequency);
      const RankedTerms& wa = row_of(a, t, bin).top_words;
      const RankedTerms& wb = row_of(b, t, 1 - bin).top_words;
      REQUIRE(wa.size() == wb.size());
      for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i].score == wb[i].score);
    }
}

TEST_CASE("topics_over_time guards") {
  Fixture f = make_toy();
  // Labeled doc without a bin.
  auto missing = bins_of({"d0", "d1", "d2", "d3", "d5"}, {0, 0, 0, 0, 0});
  CHECK_THROWS_AS(topics_over_time(f.model, missing, f.docs, f.vocab), AlignmentError);
  // Outlier without a bin is fine.
  auto no_outlier = bins_of({"d0", "d1", "d2", "d3", "d4"}, {0, 0, 0, 0, 0});
  TopicsOverTime tot = topics_over_time(f.model, no_outlier, f.docs, f.vocab);
  CHECK(tot.rows.size() == 2);
  // Negative bin and bins outside a declared layout.
  auto negative = bins_of(f.emb.uids, {0, 0, 0, 0, 0, -2});
  CHECK_THROWS_AS(topics_over_time(f.model, negative, f.docs, f.vocab), ParameterError);
  TimeBins tb;
  tb.ranges = {{1900, 1910}};
  DynamicOptions opt;
  opt.bins = &tb;
  auto outside = bins_of(f.emb.uids, {0, 0, 0, 1, 1, 0});
  CHECK_THROWS_AS(topics_over_time(f.model, outside, f.docs, f.vocab, opt), ParameterError);
}

TEST_CASE("evolution_csv exact rows, proportion flag and json variant") {
  Fixture f = make_toy();
  auto bin_map = bins_of(f.emb.uids, {0, 0, 0, 0, 0, 0});
  TimeBins tb;
  tb.ranges = {{1900, 1910}};
  DynamicOptions opt;
  opt.bins = &tb;
  TopicsOverTime tot = topics_over_time(f.model, bin_map, f.docs, f.vocab, opt);

  CHECK(evolution_csv(tot) ==
        "topic_id,bin_start,bin_end,frequency,top_words\n"
        "0,1900,1910,3,\"reactor, atom, power\"\n"
        "1,1900,1910,2,\"farm, wheat, power\"\n");
  CHECK(evolution_csv(tot, true) ==
        "topic_id,bin_start,bin_end,frequency,top_words\n"
        "0,1900,1910,0.600000,\"reactor, atom, power\"\n"
        "1,1900,1910,0.400000,\"farm, wheat, power\"\n");

  nlohmann::json j = evolution_json(tot);
  REQUIRE(j.size() == 2);
  CHECK(j[0]["topic_id"] == 0);
  CHECK(j[0]["bin_start"] == 1900);
  CHECK(j[0]["frequency"] == 3);
  CHECK(j[0]["top_words"].size() == 3);
  CHECK(j[0]["top_words"][0]["term"] == "reactor");

  // Without declared bins the index stands in for the year range.
  TopicsOverTime plain = topics_over_time(f.model, bin_map, f.docs, f.vocab);
  std::string csv = evolution_csv(plain);
  CHECK(csv.find("0,0,0,3,") != std::string::npos);

  TempDir tmp("dynamics_save");
  save_evolution_csv(tmp.file("a.csv"), tot);
  save_evolution_csv(tmp.file("b.csv"), tot);
  save_evolution_json(tmp.file("a.json"), tot);
  save_evolution_json(tmp.file("b.json"), tot);
  CHECK(file_checksum(tmp.file("a.csv")) == file_checksum(tmp.file("b.csv")));
  CHECK(file_checksum(tmp.file("a.json")) == file_checksum(tmp.file("b.json")));
  CHECK(read_text_file(tmp.file("a.csv")) == evolution_csv(tot));
}
