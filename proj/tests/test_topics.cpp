#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chronotopic/topics.hpp"
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

EmbeddingMatrix make_emb(const Matrix& values, const std::vector<std::string>& uids) {
  EmbeddingMatrix m;
  m.values = values.cast<float>();
  m.uids = uids;
  for (std::size_t i = 0; i < uids.size(); ++i) m.uid_index[uids[i]] = static_cast<int>(i);
  return m;
}

// Six docs, two topics plus one outlier, over vocab
// [atom, farm, power, reactor, wheat].
struct Toy {
  std::vector<TokenizedDocument> docs;
  Vocabulary vocab;
  ClusterLabels labels;
  EmbeddingMatrix emb;
};

Toy make_toy() {
  Toy t;
  t.docs = {doc("d0", {"reactor", "atom", "reactor"}), doc("d1", {"power", "reactor"}),
            doc("d2", {"atom", "power"}),              doc("d3", {"farm", "wheat", "wheat"}),
            doc("d4", {"farm", "power"}),              doc("d5", {"power"})};
  t.vocab = make_vocab({"atom", "farm", "power", "reactor", "wheat"});
  t.labels = make_labels({0, 0, 0, 1, 1, -1});
  Matrix e(6, 3);
  e << 1.0, 0.0, 0.0,
       0.8, 0.2, 0.0,
       0.9, 0.1, 0.1,
       0.0, 1.0, 0.0,
       0.1, 0.9, 0.2,
       0.3, 0.3, 0.9;
  t.emb = make_emb(e, {"d0", "d1", "d2", "d3", "d4", "d5"});
  return t;
}

// Direct-summation reference over string maps: counts per (class, term),
// then tf * ln(1 + A/f) term by term. No shared code with the library path.
Matrix brute_ctfidf(const std::vector<int>& labels, const std::vector<TokenizedDocument>& docs,
                    const Vocabulary& vocab) {
  int k = 0;
  for (int l : labels) k = std::max(k, l + 1);
  std::map<std::pair<int, std::string>, double> tf;
  std::map<std::string, double> f;
  std::map<int, double> class_tokens;
  for (std::size_t i = 0; i < docs.size(); ++i)
    for (const std::string& tok : docs[i].tokens) {
      if (vocab.id_of(tok) < 0) continue;
      tf[{labels[i] + 1, tok}] += 1;
      f[tok] += 1;
      class_tokens[labels[i] + 1] += 1;
    }
  Matrix w = Matrix::Zero(k + 1, vocab.size());
  if (class_tokens.empty()) return w;
  double total = 0;
  for (auto& [term, c] : f) total += c;
  double a = total / static_cast<double>(class_tokens.size());
  for (auto& [key, count] : tf)
    w(key.first, vocab.id_of(key.second)) = count * std::log(1.0 + a / f.at(key.second));
  return w;
}

Vector v3(double x, double y, double z) {
  Vector v(3);
  v << x, y, z;
  return v;
}

Vector v2(double x, double y) {
  Vector v(2);
  v << x, y;
  return v;
}

// Eight spread-out candidates; greedy traces pinned from an independent
// reference run at lambda 0, 0.5 and 1.
std::vector<TermVector> mmr_fixture() {
  return {{"alpha", v3(1, 0, 0)},    {"bravo", v3(0.95, 0.05, 0)}, {"china", v3(0, 1, 0)},
          {"delta", v3(0.7, 0.7, 0)}, {"echo", v3(0, 0, 1)},        {"fox", v3(0.5, 0, 0.8)},
          {"golf", v3(1, 1, 1)},      {"hotel", v3(-1, 0.3, 0.2)}};
}

// Ten docs: two kiwi/lime topics (sizes 3 and 2), one mango/peach topic
// (size 4) and an outlier. Built for merge tests.
Toy make_fruit() {
  Toy t;
  t.docs = {doc("f0", {"kiwi", "lime"}),         doc("f1", {"kiwi", "kiwi"}),
            doc("f2", {"lime", "kiwi"}),         doc("f3", {"kiwi", "lime", "lime"}),
            doc("f4", {"lime"}),                 doc("f5", {"mango", "peach"}),
            doc("f6", {"peach", "mango"}),       doc("f7", {"mango"}),
            doc("f8", {"peach", "peach"}),       doc("f9", {"plum"})};
  t.vocab = make_vocab({"kiwi", "lime", "mango", "peach", "plum"});
  t.labels = make_labels({0, 0, 0, 1, 1, 2, 2, 2, 2, -1});
  Matrix e(10, 2);
  e << 1.0, 0.0,
       0.95, 0.05,
       1.0, 0.1,
       0.9, 0.1,
       0.85, 0.05,
       0.0, 1.0,
       0.05, 0.95,
       0.0, 0.9,
       0.1, 1.0,
       0.5, 0.5;
  t.emb = make_emb(e, {"f0", "f1", "f2", "f3", "f4", "f5", "f6", "f7", "f8", "f9"});
  return t;
}

}  // namespace

TEST_CASE("ctfidf matches the hand-computed toy weights") {
  Toy t = make_toy();
  Matrix w = ctfidf(t.labels, t.docs, t.vocab);
  REQUIRE(w.rows() == 3);
  REQUIRE(w.cols() == 5);
  // Columns follow the sorted vocab [atom, farm, power, reactor, wheat];
  // values pinned from a direct recomputation outside the library.
  Matrix want(3, 5);
  want << 0, 0, 0.7339691750802004, 0, 0,
          2.3053590198767706, 0, 1.4679383501604008, 2.6814536280662895, 0,
          0, 2.3053590198767706, 0.7339691750802004, 0, 2.3053590198767706;
  CHECK((w - want).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("ctfidf ignores tokens outside the vocabulary") {
  Toy t = make_toy();
  Matrix base = ctfidf(t.labels, t.docs, t.vocab);
  Toy noisy = make_toy();
  for (auto& d : noisy.docs) d.tokens.push_back("zeppelin");
  Matrix w = ctfidf(noisy.labels, noisy.docs, noisy.vocab);
  CHECK((w.array() == base.array()).all());
}

TEST_CASE("ctfidf single-class collapse") {
  // One non-empty class: A equals the class's own token count and f_t the
  // class's term counts, so W = tf * ln(1 + A/tf).
  std::vector<TokenizedDocument> docs = {doc("a", {"ant", "bee", "ant"}), doc("b", {"bee"})};
  Vocabulary vocab = make_vocab({"ant", "bee"});
  Matrix w = ctfidf(make_labels({0, 0}), docs, vocab);
  REQUIRE(w.rows() == 2);
  CHECK((w.row(0).array() == 0.0).all());
  CHECK(w(1, 0) == doctest::Approx(2.0 * std::log(1.0 + 4.0 / 2.0)).epsilon(1e-12));
  CHECK(w(1, 1) == doctest::Approx(2.0 * std::log(1.0 + 4.0 / 2.0)).epsilon(1e-12));
}

TEST_CASE("ctfidf input guards") {
  Toy t = make_toy();
  CHECK_THROWS_AS(ctfidf(make_labels({-1, -1, -1, -1, -1, -1}), t.docs, t.vocab), ParameterError);
  CHECK_THROWS_AS(ctfidf(make_labels({0, 0}), t.docs, t.vocab), AlignmentError);
  CHECK_THROWS_AS(ctfidf(make_labels({0, 0, 0, 1, 1, -3}), t.docs, t.vocab), ParameterError);
}

TEST_CASE("ctfidf with an explicit row layout") {
  Toy t = make_toy();
  // Declaring more topics than the labels use pads with zero rows.
  Matrix w = ctfidf(t.labels, t.docs, t.vocab, 4);
  REQUIRE(w.rows() == 5);
  CHECK((w.row(3).array() == 0.0).all());
  CHECK((w.row(4).array() == 0.0).all());
  Matrix derived = ctfidf(t.labels, t.docs, t.vocab);
  CHECK((w.topRows(3).array() == derived.array()).all());
  // All-outlier input is fine once the layout is pinned externally.
  Matrix o = ctfidf(make_labels({-1, -1, -1, -1, -1, -1}), t.docs, t.vocab, 2);
  REQUIRE(o.rows() == 3);
  CHECK(o(0, 2) > 0.0);
  CHECK((o.bottomRows(2).array() == 0.0).all());
  // Labels must stay inside the declared layout.
  CHECK_THROWS_AS(ctfidf(t.labels, t.docs, t.vocab, 1), ParameterError);
}

TEST_CASE("ctfidf randomized direct-summation equivalence") {
  Rng rng(20260825);
  for (int iter = 0; iter < 40; ++iter) {
    int v_count = 2 + static_cast<int>(rng.uniform_index(49));
    int n_docs = 1 + static_cast<int>(rng.uniform_index(10));
    int n_classes = 1 + static_cast<int>(rng.uniform_index(4));
    std::vector<std::string> terms;
    for (int v = 0; v < v_count; ++v)
      terms.push_back(std::string("t") + char('a' + v / 26) + char('a' + v % 26));
    Vocabulary vocab = make_vocab(terms);
    std::vector<TokenizedDocument> docs;
    std::vector<int> labels;
    bool any_topic = false;
    for (int i = 0; i < n_docs; ++i) {
      int len = 1 + static_cast<int>(rng.uniform_index(30));
      std::vector<std::string> toks;
      for (int j = 0; j < len; ++j) {
        if (rng.uniform() < 0.05)
          toks.push_back("zz_out_of_vocab");
        else
          toks.push_back(terms[rng.uniform_index(terms.size())]);
      }
      docs.push_back(doc("u" + std::to_string(i), toks));
      int lab = static_cast<int>(rng.uniform_index(n_classes + 1)) - 1;
      labels.push_back(lab);
      any_topic |= lab >= 0;
    }
    if (!any_topic) labels[0] = 0;
    Matrix got = ctfidf(make_labels(labels), docs, vocab);
    Matrix want = brute_ctfidf(labels, docs, vocab);
    REQUIRE(got.rows() == want.rows());
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("top_words keeps positive scores, descending with lexicographic ties") {
  Vocabulary vocab = make_vocab({"ash", "birch", "cedar", "doum"});
  Matrix w(2, 4);
  w << 2.0, 2.0, 5.0, 0.0,
       0.0, 0.0, 0.0, 0.0;
  RankedTerms r = top_words(w, 0, vocab, 10);
  REQUIRE(r.size() == 3);  // zero-score column excluded even with room left
  CHECK(r[0].term == "cedar");
  CHECK(r[1].term == "ash");
  CHECK(r[2].term == "birch");
  CHECK(top_words(w, 0, vocab, 2).size() == 2);
  CHECK(top_words(w, 0, vocab, 0).empty());
  CHECK(top_words(w, 1, vocab, 10).empty());
  CHECK_THROWS_AS(top_words(w, 2, vocab, 10), ParameterError);
  CHECK_THROWS_AS(top_words(w, -1, vocab, 10), ParameterError);
  CHECK_THROWS_AS(top_words(w, 0, make_vocab({"ash"}), 10), AlignmentError);
}

TEST_CASE("top_words on the toy topic rows") {
  Toy t = make_toy();
  Matrix w = ctfidf(t.labels, t.docs, t.vocab);
  RankedTerms r = top_words(w, 1, t.vocab, 10);
  REQUIRE(r.size() == 3);
  CHECK(r[0].term == "reactor");
  CHECK(r[0].score == doctest::Approx(2.6814536280662895).epsilon(1e-12));
  CHECK(r[1].term == "atom");
  CHECK(r[2].term == "power");
  RankedTerms o = top_words(w, 0, t.vocab, 10);
  REQUIRE(o.size() == 1);
  CHECK(o[0].term == "power");
}

TEST_CASE("mmr_refine matches the independent greedy traces") {
  std::vector<TermVector> cands = mmr_fixture();
  Vector centroid = v3(1.0, 0.2, 0.1);
  CHECK(mmr_refine(centroid, cands, 0.5, 5) ==
        std::vector<std::string>{"bravo", "china", "golf", "delta", "alpha"});
  CHECK(mmr_refine(centroid, cands, 1.0, 5) ==
        std::vector<std::string>{"bravo", "alpha", "delta", "golf", "fox"});
  // At lambda 0 an anti-correlated candidate earns a negative penalty, i.e.
  // a positive score: hotel comes straight after bravo.
  CHECK(mmr_refine(centroid, cands, 0.0, 5) ==
        std::vector<std::string>{"bravo", "hotel", "echo", "china", "golf"});
}

TEST_CASE("mmr_refine penalizes near-duplicates") {
  std::vector<TermVector> cands = {
      {"apple", v2(1.0, 0.05)}, {"appleb", v2(0.99, 0.06)}, {"beach", v2(0.05, 1.0)}};
  Vector centroid = v2(1.0, 1.0);
  // appleb edges out apple on relevance; at lambda 0.5 the apple duplicate
  // falls behind the orthogonal beach.
  CHECK(mmr_refine(centroid, cands, 0.5, 3) ==
        std::vector<std::string>{"appleb", "beach", "apple"});
  // Pure relevance: apple and beach score identically, lexicographic order.
  CHECK(mmr_refine(centroid, cands, 1.0, 3) ==
        std::vector<std::string>{"appleb", "apple", "beach"});
}

TEST_CASE("mmr_refine guards and degenerate vectors") {
  std::vector<TermVector> cands = mmr_fixture();
  Vector centroid = v3(1.0, 0.2, 0.1);
  CHECK_THROWS_AS(mmr_refine(centroid, cands, -0.1, 3), ParameterError);
  CHECK_THROWS_AS(mmr_refine(centroid, cands, 1.5, 3), ParameterError);
  std::vector<TermVector> short_vec = {{"w", v2(1.0, 0.0)}};
  CHECK_THROWS_AS(mmr_refine(centroid, short_vec, 0.5, 1), AlignmentError);
  CHECK(mmr_refine(centroid, cands, 0.5, 0).empty());
  // More keywords than candidates: warn and return everything.
  CHECK(mmr_refine(centroid, cands, 0.5, 50).size() == cands.size());
  // Zero centroid: all relevance 0, first pick lexicographic.
  CHECK(mmr_refine(v3(0, 0, 0), cands, 0.5, 1) == std::vector<std::string>{"alpha"});
  // Zero candidate vector scores cosine 0 rather than throwing.
  std::vector<TermVector> with_zero = {{"aa", v2(0.0, 0.0)}, {"bb", v2(1.0, 0.0)}};
  CHECK(mmr_refine(v2(1.0, 0.0), with_zero, 0.5, 2) == std::vector<std::string>{"bb", "aa"});
}

TEST_CASE("mmr_refine picks distinct candidates; lambda 1 is relevance order") {
  Rng rng(7);
  for (int iter = 0; iter < 10; ++iter) {
    std::vector<TermVector> cands(20);
    for (int i = 0; i < 20; ++i) {
      cands[i].term = "w" + std::to_string(100 + i);
      Vector v(5);
      for (int j = 0; j < 5; ++j) v(j) = rng.gaussian();
      cands[i].vec = v;
    }
    Vector centroid(5);
    for (int j = 0; j < 5; ++j) centroid(j) = rng.gaussian();

    std::vector<std::string> out = mmr_refine(centroid, cands, 0.37, 8);
    REQUIRE(out.size() == 8);
    CHECK(std::set<std::string>(out.begin(), out.end()).size() == 8);
    for (const std::string& term : out)
      CHECK(std::any_of(cands.begin(), cands.end(),
                        [&](const TermVector& c) { return c.term == term; }));

    std::vector<std::pair<double, std::string>> by_rel;
    for (const TermVector& c : cands) by_rel.emplace_back(-cosine(c.vec, centroid), c.term);
    std::sort(by_rel.begin(), by_rel.end());
    std::vector<std::string> want;
    for (auto& [neg, term] : by_rel) want.push_back(term);
    CHECK(mmr_refine(centroid, cands, 1.0, 20) == want);
  }
}

TEST_CASE("build_topic_model on the toy fixture") {
  Toy t = make_toy();
  TopicModel m = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  CHECK(m.n_topics == 2);
  REQUIRE(m.sizes == std::vector<int>{1, 3, 2});
  CHECK(m.labels.labels == t.labels.labels);
  CHECK(m.empty_rows.empty());
  REQUIRE(m.top_words.size() == 3);
  CHECK(m.top_words[1][0].term == "reactor");
  CHECK(m.top_words[1][0].score == doctest::Approx(2.6814536280662895).epsilon(1e-12));
  CHECK(m.top_words[0][0].term == "power");
  CHECK(m.top_words[2][0].term == "farm");
  REQUIRE(m.centroids.rows() == 3);
  CHECK(m.centroids(1, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(m.centroids(1, 1) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(m.centroids(2, 1) == doctest::Approx(0.95).epsilon(1e-6));
  CHECK(m.centroids(0, 2) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(TopicModel::row_of(-1) == 0);
  CHECK(TopicModel::row_of(1) == 2);
}

TEST_CASE("build_topic_model alignment guards") {
  Toy t = make_toy();
  EmbeddingMatrix wrong = t.emb;
  wrong.uids[2] = "dX";
  CHECK_THROWS_AS(build_topic_model(t.labels, t.docs, t.vocab, wrong), AlignmentError);
  EmbeddingMatrix shorter = make_emb(Matrix::Zero(5, 3), {"d0", "d1", "d2", "d3", "d4"});
  CHECK_THROWS_AS(build_topic_model(t.labels, t.docs, t.vocab, shorter), AlignmentError);
  TopicOptions bad;
  bad.top_n = 0;
  CHECK_THROWS_AS(build_topic_model(t.labels, t.docs, t.vocab, t.emb, bad), ParameterError);
}

TEST_CASE("build_topic_model with every document an outlier") {
  Toy t = make_toy();
  TopicModel m = build_topic_model(make_labels({-1, -1, -1, -1, -1, -1}), t.docs, t.vocab, t.emb);
  CHECK(m.n_topics == 0);
  REQUIRE(m.ctfidf.rows() == 1);
  REQUIRE(m.sizes == std::vector<int>{6});
  REQUIRE(m.top_words.size() == 1);
  REQUIRE(m.top_words[0].size() == 5);
  CHECK(m.top_words[0][0].term == "power");  // highest raw count wins here
}

TEST_CASE("build_topic_model flags empty classes") {
  std::vector<TokenizedDocument> docs = {doc("a", {"ant", "ant"}), doc("b", {"ant", "bee"}),
                                         doc("c", {"bee"}), doc("d", {"bee", "bee"})};
  Vocabulary vocab = make_vocab({"ant", "bee"});
  Matrix e = Matrix::Identity(4, 4);
  EmbeddingMatrix emb = make_emb(e, {"a", "b", "c", "d"});
  // Topic 1 has no members (labels skip it), so its row is zero; row 0 is
  // zero too because nothing is an outlier.
  TopicModel m = build_topic_model(make_labels({0, 0, 2, 2}), docs, vocab, emb);
  CHECK(m.n_topics == 3);
  CHECK(m.sizes == std::vector<int>{0, 2, 0, 2});
  CHECK(m.empty_rows == std::vector<int>{0, 2});
  CHECK(m.top_words[2].empty());
  CHECK((m.centroids.row(2).array() == 0.0).all());
}

TEST_CASE("keyword sets come from MMR but stay in score order") {
  // aa and ab tie for the top c-TF-IDF score and share an identical term
  // vector; MMR keeps one of them and promotes the unrelated dd instead.
  std::vector<TokenizedDocument> docs = {doc("m0", {"aa", "ab", "aa", "ab"}),
                                         doc("m1", {"cc"}), doc("m2", {"dd"})};
  Vocabulary vocab = make_vocab({"aa", "ab", "cc", "dd"});
  Matrix e(3, 2);
  e << 1.0, 0.0,
       0.9, 0.1,
       0.0, 1.0;
  EmbeddingMatrix emb = make_emb(e, {"m0", "m1", "m2"});
  TopicOptions opt;
  opt.top_n = 3;
  TopicModel m = build_topic_model(make_labels({0, 0, 0}), docs, vocab, emb, opt);
  REQUIRE(m.top_words[1].size() == 3);
  CHECK(m.top_words[1][0].term == "aa");  // stored order is score-descending
  CHECK(m.top_words[1][1].term == "cc");
  CHECK(m.top_words[1][2].term == "dd");
  CHECK(m.top_words[1][0].score > m.top_words[1][1].score);
}

TEST_CASE("build_topic_model is uid-name independent") {
  Toy a = make_toy();
  Toy b = make_toy();
  for (int i = 0; i < 6; ++i) {
    b.docs[i].uid = "renamed" + std::to_string(i);
    b.emb.uids[i] = b.docs[i].uid;
  }
  b.emb.uid_index.clear();
  for (int i = 0; i < 6; ++i) b.emb.uid_index[b.emb.uids[i]] = i;
  TopicModel ma = build_topic_model(a.labels, a.docs, a.vocab, a.emb);
  TopicModel mb = build_topic_model(b.labels, b.docs, b.vocab, b.emb);
  CHECK((ma.ctfidf.array() == mb.ctfidf.array()).all());
  REQUIRE(ma.top_words.size() == mb.top_words.size());
  for (std::size_t r = 0; r < ma.top_words.size(); ++r) {
    REQUIRE(ma.top_words[r].size() == mb.top_words[r].size());
    for (std::size_t i = 0; i < ma.top_words[r].size(); ++i) {
      CHECK(ma.top_words[r][i].term == mb.top_words[r][i].term);
      CHECK(ma.top_words[r][i].score == mb.top_words[r][i].score);
    }
  }
}

TEST_CASE("reduce_topics identity and guards") {
  Toy t = make_toy();
  TopicModel m = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  auto [same, trace] = reduce_topics(m, t.docs, t.vocab, t.emb, 2);
  CHECK(trace.empty());
  CHECK(same.labels.labels == m.labels.labels);
  CHECK((same.ctfidf.array() == m.ctfidf.array()).all());
  CHECK_THROWS_AS(reduce_topics(m, t.docs, t.vocab, t.emb, 3), ParameterError);
  CHECK_THROWS_AS(reduce_topics(m, t.docs, t.vocab, t.emb, 0), ParameterError);
}

TEST_CASE("reduce_topics merges the smallest topic into its nearest neighbor") {
  Toy t = make_fruit();
  TopicModel m = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  REQUIRE(m.n_topics == 3);
  REQUIRE(m.sizes == std::vector<int>{1, 3, 2, 4});

  auto [reduced, trace] = reduce_topics(m, t.docs, t.vocab, t.emb, 2);
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].source == 1);  // smallest topic
  CHECK(trace[0].target == 0);  // shares kiwi/lime, not mango/peach
  CHECK(trace[0].cosine > 0.5);
  CHECK(reduced.n_topics == 2);
  CHECK(reduced.sizes == std::vector<int>{1, 5, 4});
  // Document counts survive the merge and outliers stay outliers.
  int total = 0;
  for (int s : reduced.sizes) total += s;
  CHECK(total == 10);
  CHECK(reduced.labels.labels[9] == -1);
  for (int i = 0; i < 5; ++i) CHECK(reduced.labels.labels[i] == 0);
  for (int i = 5; i < 9; ++i) CHECK(reduced.labels.labels[i] == 1);
}

TEST_CASE("reduce_topics chains merges down to one topic") {
  Toy t = make_fruit();
  TopicModel m = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  auto [reduced, trace] = reduce_topics(m, t.docs, t.vocab, t.emb, 1);
  REQUIRE(trace.size() == 2);
  CHECK(trace[0].source == 1);
  CHECK(trace[0].target == 0);
  CHECK(trace[1].source == 2);  // smaller of the two survivors
  CHECK(trace[1].target == 0);
  CHECK(reduced.n_topics == 1);
  CHECK(reduced.sizes == std::vector<int>{1, 9});
  REQUIRE(reduced.top_words.size() == 2);
  CHECK(!reduced.top_words[1].empty());
}

TEST_CASE("merge_small_topics raises every topic above the threshold") {
  // Sizes 8/3/9; the undersized middle topic shares mint/basil with the
  // third, so it merges there, and 8 then 12 both clear the bar.
  std::vector<TokenizedDocument> docs;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    docs.push_back(doc("k" + std::to_string(i), {"kale", "leek"}));
    labels.push_back(0);
  }
  for (int i = 0; i < 3; ++i) {
    docs.push_back(doc("m" + std::to_string(i), {"mint", "basil"}));
    labels.push_back(1);
  }
  for (int i = 0; i < 9; ++i) {
    docs.push_back(doc("s" + std::to_string(i), {"mint", "basil", "sage"}));
    labels.push_back(2);
  }
  Vocabulary vocab = make_vocab({"basil", "kale", "leek", "mint", "sage"});
  Matrix e = Matrix::Zero(20, 2);
  for (int i = 0; i < 8; ++i) e(i, 0) = 1.0;
  for (int i = 8; i < 20; ++i) e(i, 1) = 1.0;
  std::vector<std::string> uids;
  for (const auto& d : docs) uids.push_back(d.uid);
  EmbeddingMatrix emb = make_emb(e, uids);

  TopicModel m = build_topic_model(make_labels(labels), docs, vocab, emb);
  REQUIRE(m.sizes == std::vector<int>{0, 8, 3, 9});

  auto [merged, trace] = merge_small_topics(m, docs, vocab, emb, 5);
  REQUIRE(trace.size() == 1);
  CHECK(trace[0].source == 1);
  CHECK(trace[0].target == 2);
  CHECK(merged.n_topics == 2);
  CHECK(merged.sizes == std::vector<int>{0, 8, 12});
  for (int s : merged.sizes) CHECK((s == 0 || s >= 5));

  // A threshold nothing can reach collapses everything to a single topic.
  auto [one, trace_all] = merge_small_topics(m, docs, vocab, emb, 100);
  CHECK(trace_all.size() == 2);
  CHECK(one.n_topics == 1);
  CHECK(one.sizes == std::vector<int>{0, 20});

  auto [same, none] = merge_small_topics(m, docs, vocab, emb, 1);
  CHECK(none.empty());
  CHECK(same.labels.labels == m.labels.labels);
}

TEST_CASE("save_topic_model writes deterministic files") {
  Toy t = make_toy();
  TopicModel m = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  TopicMergeTrace trace = {{0, 1, 0.25}};
  TempDir tmp("topics_save");
  save_topic_model(tmp.file("run1"), m, trace);

  CHECK(read_text_file(tmp.file("run1") / "topics.csv") ==
        "topic_id,size\n-1,1\n0,3\n1,2\n");
  CHECK(read_text_file(tmp.file("run1") / "topic_words.csv") ==
        "topic_id,rank,term,score\n"
        "-1,1,power,0.733969\n"
        "0,1,reactor,2.681454\n"
        "0,2,atom,2.305359\n"
        "0,3,power,1.467938\n"
        "1,1,farm,2.305359\n"
        "1,2,wheat,2.305359\n"
        "1,3,power,0.733969\n");

  nlohmann::json j = read_json_file(tmp.file("run1") / "topic_summary.json");
  CHECK(j["n_topics"] == 2);
  CHECK(j["n_docs"] == 6);
  CHECK(j["outliers"] == 1);
  CHECK(j["sizes"] == nlohmann::json::array({3, 2}));
  CHECK(j["empty_rows"].empty());
  REQUIRE(j["merges"].size() == 1);
  CHECK(j["merges"][0]["source"] == 0);
  CHECK(j["merges"][0]["target"] == 1);
  CHECK(j["merges"][0]["cosine"] == 0.25);

  // A fresh build produces byte-identical dumps.
  TopicModel m2 = build_topic_model(t.labels, t.docs, t.vocab, t.emb);
  save_topic_model(tmp.file("run2"), m2, trace);
  for (const char* name : {"topics.csv", "topic_words.csv", "topic_summary.json"})
    CHECK(file_checksum(tmp.file("run1") / name) == file_checksum(tmp.file("run2") / name));
}
