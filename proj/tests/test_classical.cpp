#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "chronotopic/classical.hpp"
#include "helpers.hpp"

using namespace chronotopic;
using ct_test::TempDir;

namespace {

TokenizedDocument doc(const std::string& uid, std::vector<std::string> tokens) {
  TokenizedDocument d;
  d.uid = uid;
  d.tokens = std::move(tokens);
  return d;
}

WeightedDocTermMatrix matrix_from_counts(const std::vector<std::vector<double>>& rows,
                                         DtmMode mode = DtmMode::bow) {
  WeightedDocTermMatrix m;
  m.mode = mode;
  m.weights.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(rows[0].size()));
  std::vector<Eigen::Triplet<Real>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.uids.push_back("d" + std::to_string(i));
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      if (rows[i][j] != 0.0) trips.emplace_back(static_cast<int>(i), static_cast<int>(j),
                                                rows[i][j]);
  }
  m.weights.setFromTriplets(trips.begin(), trips.end());
  return m;
}

double cell(const WeightedDocTermMatrix& m, int i, int j) { return m.weights.coeff(i, j); }

int sample_cdf(const std::vector<double>& probs, double u) {
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

double vec_cosine(const Vector& a, const Vector& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

}  // namespace

TEST_CASE("build_bow counts vocabulary terms and flags empty rows") {
  std::vector<TokenizedDocument> docs = {
      doc("a", {"x", "y", "x"}),
      doc("b", {"y", "z"}),
      doc("c", {"unknown"}),
  };
  std::vector<TokenizedDocument> vocab_docs = {doc("a", {"x", "y"}), doc("b", {"y", "z"})};
  auto vocab = build_vocabulary(vocab_docs, 1, 1.0);
  auto m = build_bow(docs, vocab);
  CHECK(m.n() == 3);
  CHECK(m.vocab_size() == 3);
  CHECK(cell(m, 0, vocab.id_of("x")) == 2.0);
  CHECK(cell(m, 1, vocab.id_of("z")) == 1.0);
  CHECK(m.zero_rows == std::vector<int>{2});
  CHECK(m.mode == DtmMode::bow);
}

TEST_CASE("entity_documents aligns rows to the uid order") {
  std::unordered_map<std::string, std::vector<std::string>> entities = {
      {"b", {"soviet union", "chernobyl"}}};
  std::vector<std::string> uids = {"a", "b"};
  auto docs = entity_documents(uids, entities);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].tokens.empty());
  CHECK(docs[1].tokens == std::vector<std::string>{"soviet union", "chernobyl"});
}

TEST_CASE("tfidf: hand oracle for a 3-doc toy corpus") {
  // term 0 in 1 of 3 docs with tf=2 -> 2 ln 3; term 1 in every doc -> 0
  auto bow = matrix_from_counts({{2, 1, 0}, {0, 1, 3}, {0, 1, 1}});
  auto tfidf = tfidf_transform(bow);
  CHECK(tfidf.mode == DtmMode::tfidf);
  CHECK(cell(tfidf, 0, 0) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-12));
  CHECK(cell(tfidf, 0, 1) == 0.0);
  CHECK(cell(tfidf, 1, 2) == doctest::Approx(3.0 * std::log(1.5)).epsilon(1e-12));
}

TEST_CASE("tfidf: single-doc corpus zeroes everything") {
  auto bow = matrix_from_counts({{4, 2, 1}});
  auto tfidf = tfidf_transform(bow);
  CHECK(tfidf.weights.nonZeros() == 0);
  CHECK(tfidf.zero_rows == std::vector<int>{0});
}

TEST_CASE("tfidf rejects non-bow input") {
  auto bow = matrix_from_counts({{1, 0}, {0, 1}});
  auto tfidf = tfidf_transform(bow);
  CHECK_THROWS_AS(tfidf_transform(tfidf), ParameterError);
}

TEST_CASE("fit_lda: K above the effective vocabulary is rejected") {
  auto m = matrix_from_counts({{3, 0}, {2, 0}});  // column 1 never used
  CHECK_THROWS_AS(fit_lda(m, 2, 0, 0, 10, 1), ParameterError);
  CHECK_THROWS_AS(fit_lda(m, 1, 0, 0, 10, 1), ParameterError);  // K >= 2
}

TEST_CASE("fit_lda recovers disjoint word sets") {
  // 4 sets of 6 words; each doc draws 30 tokens from one set
  const int sets = 4, words_per_set = 6, docs_per_set = 6;
  Rng rng(41);
  std::vector<TokenizedDocument> docs;
  for (int s = 0; s < sets; ++s) {
    for (int d = 0; d < docs_per_set; ++d) {
      std::vector<std::string> toks;
      for (int t = 0; t < 30; ++t) {
        int w = static_cast<int>(rng.uniform_index(words_per_set));
        toks.push_back("set" + std::to_string(s) + "w" + std::to_string(w));
      }
      docs.push_back(doc("s" + std::to_string(s) + "d" + std::to_string(d), toks));
    }
  }
  auto vocab = build_vocabulary(docs, 1, 1.0);
  auto bow = build_bow(docs, vocab);
  auto model = fit_lda(bow, sets, 0, 0, 50, 7);

  // per-topic mass on its dominant set must be >= 0.9, and the dominant
  // sets must cover all four
  Matrix probs = normalize_rows(model.topic_word);
  std::vector<bool> covered(sets, false);
  for (int k = 0; k < sets; ++k) {
    std::array<double, 4> mass{};
    for (int v = 0; v < vocab.size(); ++v) {
      int s = vocab.terms[v][3] - '0';  // "set3w1" -> 3
      mass[static_cast<std::size_t>(s)] += probs(k, v);
    }
    int best = static_cast<int>(std::max_element(mass.begin(), mass.end()) - mass.begin());
    CHECK(mass[static_cast<std::size_t>(best)] >= 0.9);
    covered[static_cast<std::size_t>(best)] = true;
  }
  for (bool c : covered) CHECK(c);

  // topic top words stay inside the generating set
  auto words = lda_topic_words(model, vocab, 4);
  for (const auto& topic : words) {
    char s = topic[0].term[3];
    for (const auto& ts : topic) CHECK(ts.term[3] == s);
  }
}

TEST_CASE("fit_lda recovers a synthetic LDA corpus (Hungarian-matched cosine)") {
  const int K = 3, V = 60, n = 300, doc_len = 50;
  Rng rng(99);

  // true topics: strong 20-term block + light smoothing
  Matrix beta_true(K, V);
  for (int k = 0; k < K; ++k) {
    for (int v = 0; v < V; ++v) beta_true(k, v) = (v >= 20 * k && v < 20 * (k + 1)) ? 1.0 : 0.02;
    beta_true.row(k) /= beta_true.row(k).sum();
  }

  std::vector<Eigen::Triplet<Real>> trips;
  for (int d = 0; d < n; ++d) {
    int dominant = static_cast<int>(rng.uniform_index(K));
    std::vector<double> pw(V, 0.0);
    for (int v = 0; v < V; ++v)
      for (int k = 0; k < K; ++k) pw[v] += (k == dominant ? 0.8 : 0.1) * beta_true(k, v);
    std::vector<double> counts(V, 0.0);
    for (int t = 0; t < doc_len; ++t) counts[sample_cdf(pw, rng.uniform())] += 1.0;
    for (int v = 0; v < V; ++v)
      if (counts[v] > 0) trips.emplace_back(d, v, counts[v]);
  }
  WeightedDocTermMatrix m;
  m.mode = DtmMode::bow;
  m.weights.resize(n, V);
  m.weights.setFromTriplets(trips.begin(), trips.end());
  for (int d = 0; d < n; ++d) m.uids.push_back("d" + std::to_string(d));

  auto model = fit_lda(m, K, 0, 0, 50, 5);
  Matrix learned = normalize_rows(model.topic_word);

  // best assignment over all 3! permutations
  std::array<int, 3> perm = {0, 1, 2};
  double best = -1;
  do {
    double mean = 0;
    for (int k = 0; k < K; ++k) {
      Vector a = learned.row(k).transpose();
      Vector b = beta_true.row(perm[static_cast<std::size_t>(k)]).transpose();
      mean += vec_cosine(a, b);
    }
    best = std::max(best, mean / K);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(best >= 0.8);

  // bound estimate is non-decreasing up to relative slack
  for (std::size_t i = 1; i < model.bound_trace.size(); ++i)
    CHECK(model.bound_trace[i] >= model.bound_trace[i - 1] -
                                      1e-6 * std::abs(model.bound_trace[i - 1]));
}

TEST_CASE("fit_lda is bitwise deterministic for a fixed seed") {
  Rng rng(3);
  std::vector<std::vector<double>> rows(40, std::vector<double>(25, 0.0));
  for (auto& r : rows)
    for (int t = 0; t < 15; ++t) r[rng.uniform_index(25)] += 1.0;
  auto m = matrix_from_counts(rows);
  auto a = fit_lda(m, 5, 0, 0, 20, 123);
  auto b = fit_lda(m, 5, 0, 0, 20, 123);
  CHECK(a.topic_word == b.topic_word);
  CHECK(a.doc_topic == b.doc_topic);
  auto c = fit_lda(m, 5, 0, 0, 20, 124);
  CHECK(a.topic_word != c.topic_word);
}

TEST_CASE("fit_lda: doc_topic rows normalize to simplex points") {
  auto m = matrix_from_counts({{3, 1, 0, 2}, {0, 4, 1, 0}, {1, 0, 3, 1}, {2, 2, 2, 2}});
  auto model = fit_lda(m, 2, 0, 0, 30, 9);
  Matrix norm = normalize_rows(model.doc_topic);
  for (int i = 0; i < norm.rows(); ++i) {
    CHECK(norm.row(i).sum() == doctest::Approx(1.0).epsilon(1e-8));
    for (int k = 0; k < norm.cols(); ++k) CHECK(norm(i, k) > 0.0);
  }
}

TEST_CASE("lda_topic_words: degenerate K=1 model ranks by corpus probability") {
  std::vector<TokenizedDocument> docs = {doc("a", {"rare", "common", "common", "mid", "mid",
                                                   "common"})};
  auto vocab = build_vocabulary(docs, 1, 1.0);
  LdaModel model;
  model.K = 1;
  model.topic_word.resize(1, vocab.size());
  model.topic_word(0, vocab.id_of("common")) = 3;
  model.topic_word(0, vocab.id_of("mid")) = 2;
  model.topic_word(0, vocab.id_of("rare")) = 1;
  auto words = lda_topic_words(model, vocab, 3);
  REQUIRE(words.size() == 1);
  CHECK(words[0][0].term == "common");
  CHECK(words[0][1].term == "mid");
  CHECK(words[0][2].term == "rare");
  CHECK(words[0][0].score == doctest::Approx(0.5));
}

TEST_CASE("topic words: ties fall back to lexicographic order and top_n clips") {
  std::vector<TokenizedDocument> docs = {doc("a", {"bb", "aa", "cc"})};
  auto vocab = build_vocabulary(docs, 1, 1.0);
  NmfModel model;
  model.K = 1;
  model.H = Matrix::Ones(1, 3);  // all tied
  auto words = nmf_topic_words(model, vocab, 99);  // clipped to 3
  REQUIRE(words[0].size() == 3);
  CHECK(words[0][0].term == "aa");
  CHECK(words[0][1].term == "bb");
  CHECK(words[0][2].term == "cc");
  CHECK(nmf_topic_words(model, vocab, 0)[0].empty());
}

TEST_CASE("fit_nmf: rank-2 product is recovered to 1e-3 relative error") {
  Rng rng(17);
  Matrix A(12, 2), B(2, 18);
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) A(i, j) = rng.uniform();
  for (int i = 0; i < B.rows(); ++i)
    for (int j = 0; j < B.cols(); ++j) B(i, j) = rng.uniform();
  Matrix M = A * B;
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(M.rows()));
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(M(i, j));
  auto m = matrix_from_counts(rows);

  auto model = fit_nmf(m, 2, 500, 11);
  double rel = model.objective_trace.back() / M.norm();
  CHECK(rel <= 1e-3);

  for (std::size_t i = 1; i < model.objective_trace.size(); ++i)
    CHECK(model.objective_trace[i] <= model.objective_trace[i - 1] + 1e-10);
  CHECK((model.W.array() >= 0).all());
  CHECK((model.H.array() >= 0).all());
}

TEST_CASE("fit_nmf: fuzzed sparse matrices keep the invariants") {
  Rng rng(2025);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 8 + static_cast<int>(rng.uniform_index(20));
    int V = 8 + static_cast<int>(rng.uniform_index(30));
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(n),
                                          std::vector<double>(static_cast<std::size_t>(V), 0.0));
    for (auto& r : rows)
      for (auto& x : r)
        if (rng.uniform() < 0.3) x = rng.uniform() * 5.0;
    auto m = matrix_from_counts(rows);
    int K = 2 + static_cast<int>(rng.uniform_index(3));
    NmfModel model;
    try {
      model = fit_nmf(m, K, 60, trial);
    } catch (const ParameterError&) {
      continue;  // degenerate draw (too few non-empty rows)
    }
    for (std::size_t i = 1; i < model.objective_trace.size(); ++i) {
      REQUIRE(std::isfinite(model.objective_trace[i]));
      REQUIRE(model.objective_trace[i] <= model.objective_trace[i - 1] + 1e-10);
    }
    REQUIRE((model.W.array() >= 0).all());
    REQUIRE((model.H.array() >= 0).all());
    REQUIRE(model.W.allFinite());
    REQUIRE(model.H.allFinite());
  }
}

TEST_CASE("fit_nmf: all-zero matrix collapses to zero factors") {
  WeightedDocTermMatrix m;
  m.mode = DtmMode::bow;
  m.weights.resize(4, 5);
  for (int i = 0; i < 4; ++i) m.uids.push_back("d" + std::to_string(i));
  auto model = fit_nmf(m, 2, 100, 1);
  CHECK(model.W.isZero(0.0));
  CHECK(model.H.isZero(0.0));
  CHECK(model.objective_trace.back() == 0.0);
}

TEST_CASE("fit_nmf: parameter guards") {
  auto m = matrix_from_counts({{1, 0, 0}, {0, 1, 0}});
  CHECK_THROWS_AS(fit_nmf(m, 3, 10, 1), ParameterError);  // K > min(n, V)
  auto sparse = matrix_from_counts({{1, 1, 1}, {0, 0, 0}, {0, 0, 0}});
  CHECK_THROWS_AS(fit_nmf(sparse, 2, 10, 1), ParameterError);  // 1 non-empty row
  CHECK_THROWS_AS(fit_nmf(m, 1, 10, 1), ParameterError);  // K >= 2
}

TEST_CASE("fit_nmf: scaling the input leaves top-word rankings unchanged") {
  Rng rng(8);
  std::vector<std::vector<double>> rows(15, std::vector<double>(12, 0.0));
  for (auto& r : rows)
    for (auto& x : r)
      if (rng.uniform() < 0.5) x = rng.uniform() * 3.0;
  auto m1 = matrix_from_counts(rows);
  for (auto& r : rows)
    for (auto& x : r) x *= 7.0;
  auto m7 = matrix_from_counts(rows);

  auto a = fit_nmf(m1, 3, 200, 4);
  auto b = fit_nmf(m7, 3, 200, 4);
  for (int k = 0; k < 3; ++k) {
    std::vector<int> ord_a(12), ord_b(12);
    for (int v = 0; v < 12; ++v) ord_a[v] = ord_b[v] = v;
    auto by_row = [](const Matrix& H, int kk) {
      return [&H, kk](int x, int y) {
        return H(kk, x) != H(kk, y) ? H(kk, x) > H(kk, y) : x < y;
      };
    };
    std::sort(ord_a.begin(), ord_a.end(), by_row(a.H, k));
    std::sort(ord_b.begin(), ord_b.end(), by_row(b.H, k));
    CHECK(ord_a == ord_b);
  }
}

TEST_CASE("fit_nmf is bitwise deterministic for a fixed seed") {
  Rng rng(55);
  std::vector<std::vector<double>> rows(10, std::vector<double>(8, 0.0));
  for (auto& r : rows)
    for (auto& x : r)
      if (rng.uniform() < 0.6) x = rng.uniform();
  auto m = matrix_from_counts(rows);
  auto a = fit_nmf(m, 2, 100, 42);
  auto b = fit_nmf(m, 2, 100, 42);
  CHECK(a.W == b.W);
  CHECK(a.H == b.H);
  CHECK(a.objective_trace == b.objective_trace);
}

TEST_CASE("nmf_topic_words: single-support row and CSV export") {
  std::vector<TokenizedDocument> docs = {doc("a", {"only", "other", "third"})};
  auto vocab = build_vocabulary(docs, 1, 1.0);
  NmfModel model;
  model.K = 2;
  model.H = Matrix::Zero(2, 3);
  model.H(0, vocab.id_of("only")) = 5.0;
  model.H(1, vocab.id_of("other")) = 1.0;
  model.H(1, vocab.id_of("third")) = 2.0;
  auto words = nmf_topic_words(model, vocab, 2);
  CHECK(words[0][0].term == "only");
  CHECK(words[1][0].term == "third");

  TempDir tmp("topic_csv");
  save_topic_words_csv(tmp.file("w.csv"), words);
  auto text = read_text_file(tmp.file("w.csv"));
  CHECK(text.find("topic_id,rank,term,score") == 0);
  CHECK(text.find("0,1,only,5.000000") != std::string::npos);
  CHECK(text.find("1,2,other,1.000000") != std::string::npos);
}

TEST_CASE("nmf: rank-2 disjoint supports are recovered by the top words") {
  // B row 0 lives on terms 0..8, row 1 on terms 9..17
  Rng rng(13);
  Matrix A(20, 2), B = Matrix::Zero(2, 18);
  for (int i = 0; i < 20; ++i) {
    A(i, 0) = rng.uniform();
    A(i, 1) = rng.uniform();
  }
  for (int j = 0; j < 9; ++j) B(0, j) = 0.5 + rng.uniform();
  for (int j = 9; j < 18; ++j) B(1, j) = 0.5 + rng.uniform();
  Matrix M = A * B;
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(M.rows()));
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(M(i, j));
  auto m = matrix_from_counts(rows);
  auto model = fit_nmf(m, 2, 500, 3);

  // each recovered topic's strongest 5 terms live in one generating support
  for (int k = 0; k < 2; ++k) {
    std::vector<int> ord(18);
    for (int v = 0; v < 18; ++v) ord[v] = v;
    std::sort(ord.begin(), ord.end(),
              [&](int x, int y) { return model.H(k, x) > model.H(k, y); });
    bool all_low = true, all_high = true;
    for (int r = 0; r < 5; ++r) {
      if (ord[r] >= 9) all_low = false;
      if (ord[r] < 9) all_high = false;
    }
    CHECK((all_low || all_high));
  }
}
