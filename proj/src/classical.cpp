#include "chronotopic/classical.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <thread>

namespace chronotopic {

namespace {

std::vector<int> find_zero_rows(const SparseRowMatrix& m) {
  std::vector<int> zero;
  for (int i = 0; i < m.rows(); ++i) {
    bool any = false;
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.value() != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) zero.push_back(i);
  }
  return zero;
}

}  // namespace

WeightedDocTermMatrix build_bow(std::span<const TokenizedDocument> docs, const Vocabulary& vocab,
                                DtmMode mode) {
  WeightedDocTermMatrix out;
  out.mode = mode;
  out.weights.resize(static_cast<Eigen::Index>(docs.size()), vocab.size());
  std::vector<Eigen::Triplet<Real>> trips;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out.uids.push_back(docs[i].uid);
    std::map<int, int> tf;  // ordered ids keep the triplet order canonical
    for (const auto& tok : docs[i].tokens) {
      int t = vocab.id_of(tok);
      if (t >= 0) ++tf[t];
    }
    for (const auto& [t, c] : tf)
      trips.emplace_back(static_cast<int>(i), t, static_cast<Real>(c));
  }
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.zero_rows = find_zero_rows(out.weights);
  return out;
}

std::vector<TokenizedDocument> entity_documents(
    std::span<const std::string> uids,
    const std::unordered_map<std::string, std::vector<std::string>>& entities) {
  std::vector<TokenizedDocument> docs(uids.size());
  for (std::size_t i = 0; i < uids.size(); ++i) {
    docs[i].uid = uids[i];
    auto it = entities.find(uids[i]);
    if (it != entities.end()) docs[i].tokens = it->second;
  }
  return docs;
}

WeightedDocTermMatrix tfidf_transform(const WeightedDocTermMatrix& bow) {
  if (bow.mode != DtmMode::bow)
    throw ParameterError("tfidf_transform: input must be a bow matrix");
  const int n = bow.n();
  const int V = bow.vocab_size();
  std::vector<int> df(V, 0);
  for (int i = 0; i < n; ++i)
    for (SparseRowMatrix::InnerIterator it(bow.weights, i); it; ++it)
      if (it.value() != 0.0) ++df[it.col()];

  WeightedDocTermMatrix out;
  out.mode = DtmMode::tfidf;
  out.uids = bow.uids;
  out.weights.resize(n, V);
  std::vector<Eigen::Triplet<Real>> trips;
  for (int i = 0; i < n; ++i) {
    for (SparseRowMatrix::InnerIterator it(bow.weights, i); it; ++it) {
      if (it.value() == 0.0 || df[it.col()] == 0) continue;
      double idf = std::log(static_cast<double>(n) / df[it.col()]);
      double w = it.value() * idf;
      if (w != 0.0) trips.emplace_back(i, static_cast<int>(it.col()), w);
    }
  }
  out.weights.setFromTriplets(trips.begin(), trips.end());
  out.zero_rows = find_zero_rows(out.weights);
  return out;
}

// ---------------------------------------------------------------------------
// LDA, batch variational Bayes.
// ---------------------------------------------------------------------------

namespace {

struct DocView {
  std::vector<int> ids;
  std::vector<double> cts;
};

std::vector<DocView> doc_views(const SparseRowMatrix& m) {
  std::vector<DocView> docs(m.rows());
  for (int i = 0; i < m.rows(); ++i) {
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.value() == 0.0) continue;
      docs[i].ids.push_back(static_cast<int>(it.col()));
      docs[i].cts.push_back(it.value());
    }
  }
  return docs;
}

// exp(E[log beta]) for the current lambda.
Matrix exp_dirichlet_expectation(const Matrix& lambda) {
  Matrix out(lambda.rows(), lambda.cols());
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    double dsum = digamma(lambda.row(k).sum());
    for (Eigen::Index v = 0; v < lambda.cols(); ++v)
      out(k, v) = std::exp(digamma(lambda(k, v)) - dsum);
  }
  return out;
}

// One document's E-step: optimize gamma, then add its sufficient statistics.
void estep_doc(const DocView& doc, double alpha, const Matrix& expElogbeta, Vector& gamma_out,
               Matrix& sstats) {
  const int K = static_cast<int>(expElogbeta.rows());
  const int nd = static_cast<int>(doc.ids.size());
  if (nd == 0) {
    gamma_out = Vector::Constant(K, alpha);
    return;
  }
  double total = 0;
  for (double c : doc.cts) total += c;

  Vector gamma = Vector::Constant(K, alpha + total / K);
  Vector expElogtheta(K);
  auto refresh_theta = [&] {
    double dsum = digamma(gamma.sum());
    for (int k = 0; k < K; ++k) expElogtheta(k) = std::exp(digamma(gamma(k)) - dsum);
  };
  refresh_theta();

  Matrix betad(K, nd);
  for (int j = 0; j < nd; ++j) betad.col(j) = expElogbeta.col(doc.ids[j]);

  Vector phinorm = betad.transpose() * expElogtheta;
  phinorm.array() += 1e-100;
  Vector ratio(nd);
  for (int it = 0; it < 100; ++it) {
    Vector last = gamma;
    for (int j = 0; j < nd; ++j) ratio(j) = doc.cts[j] / phinorm(j);
    gamma = (expElogtheta.array() * (betad * ratio).array()).matrix();
    gamma.array() += alpha;
    refresh_theta();
    phinorm = betad.transpose() * expElogtheta;
    phinorm.array() += 1e-100;
    if ((gamma - last).cwiseAbs().mean() < 1e-4) break;
  }
  gamma_out = gamma;
  for (int j = 0; j < nd; ++j)
    sstats.col(doc.ids[j]) += expElogtheta * (doc.cts[j] / phinorm(j));
}

// Evidence lower bound estimate (up to constants independent of the
// variational parameters), accumulated in fixed document order.
double approx_bound(const std::vector<DocView>& docs, const Matrix& gamma, const Matrix& lambda,
                    double alpha, double eta) {
  const int n = static_cast<int>(docs.size());
  const int K = static_cast<int>(lambda.rows());
  const int V = static_cast<int>(lambda.cols());

  Matrix Elogbeta(K, V);
  for (int k = 0; k < K; ++k) {
    double dsum = digamma(lambda.row(k).sum());
    for (int v = 0; v < V; ++v) Elogbeta(k, v) = digamma(lambda(k, v)) - dsum;
  }

  double score = 0;
  Vector Elogtheta(K);
  for (int d = 0; d < n; ++d) {
    double gsum = gamma.row(d).sum();
    double dgsum = digamma(gsum);
    for (int k = 0; k < K; ++k) Elogtheta(k) = digamma(gamma(d, k)) - dgsum;
    for (std::size_t j = 0; j < docs[d].ids.size(); ++j) {
      int id = docs[d].ids[j];
      double tmax = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) tmax = std::max(tmax, Elogtheta(k) + Elogbeta(k, id));
      double s = 0;
      for (int k = 0; k < K; ++k) s += std::exp(Elogtheta(k) + Elogbeta(k, id) - tmax);
      score += docs[d].cts[j] * (tmax + std::log(s));
    }
    for (int k = 0; k < K; ++k) {
      score += (alpha - gamma(d, k)) * Elogtheta(k);
      score += std::lgamma(gamma(d, k)) - std::lgamma(alpha);
    }
    score += std::lgamma(K * alpha) - std::lgamma(gsum);
  }
  for (int k = 0; k < K; ++k) {
    for (int v = 0; v < V; ++v) {
      score += (eta - lambda(k, v)) * Elogbeta(k, v);
      score += std::lgamma(lambda(k, v)) - std::lgamma(eta);
    }
    score += std::lgamma(V * eta) - std::lgamma(lambda.row(k).sum());
  }
  return score;
}

}  // namespace

LdaModel fit_lda(const WeightedDocTermMatrix& m, int K, double alpha, double eta, int epochs,
                 std::uint64_t seed) {
  const int n = m.n();
  const int V = m.vocab_size();
  if (K < 2) throw ParameterError("fit_lda: K must be >= 2");
  int eff_vocab = 0;
  {
    std::vector<char> used(V, 0);
    for (int i = 0; i < n; ++i)
      for (SparseRowMatrix::InnerIterator it(m.weights, i); it; ++it)
        if (it.value() != 0.0) used[it.col()] = 1;
    for (char u : used) eff_vocab += u;
  }
  if (K > eff_vocab)
    throw ParameterError("fit_lda: K=" + std::to_string(K) + " exceeds the effective vocabulary (" +
                         std::to_string(eff_vocab) + " terms)");
  if (alpha <= 0) alpha = 1.0 / K;
  if (eta <= 0) eta = 1.0 / K;
  if (epochs < 1) epochs = 1;

  LdaModel model;
  model.K = K;
  model.alpha = alpha;
  model.eta = eta;

  // Small jitter around 1 breaks topic symmetry; the stream order (k outer,
  // v inner) is part of the deterministic contract.
  Rng rng(derive_seed(seed, "lda/init"));
  Matrix lambda(K, V);
  for (int k = 0; k < K; ++k)
    for (int v = 0; v < V; ++v) lambda(k, v) = 0.95 + 0.1 * rng.uniform();

  const auto docs = doc_views(m.weights);
  Matrix gamma = Matrix::Zero(n, K);

  // Fixed-size blocks keep the sufficient-statistics reduction order (and
  // therefore every bit of the result) independent of the thread count.
  const int block = 256;
  const int nblocks = (n + block - 1) / block;
  const int wave = std::max(1, max_threads());

  for (int epoch = 0; epoch < epochs; ++epoch) {
    Matrix expElogbeta = exp_dirichlet_expectation(lambda);
    Matrix sstats = Matrix::Zero(K, V);
    std::vector<Matrix> block_stats(std::min(wave, nblocks));

    for (int b0 = 0; b0 < nblocks; b0 += wave) {
      int nb = std::min(wave, nblocks - b0);
      auto run_block = [&](int bi) {
        Matrix& local = block_stats[bi];
        local = Matrix::Zero(K, V);
        int lo = (b0 + bi) * block;
        int hi = std::min(n, lo + block);
        Vector g(K);
        for (int d = lo; d < hi; ++d) {
          estep_doc(docs[d], alpha, expElogbeta, g, local);
          gamma.row(d) = g.transpose();
        }
      };
      if (nb == 1 || max_threads() <= 1) {
        for (int bi = 0; bi < nb; ++bi) run_block(bi);
      } else {
        std::vector<std::thread> threads;
        for (int bi = 0; bi < nb; ++bi) threads.emplace_back(run_block, bi);
        for (auto& t : threads) t.join();
      }
      for (int bi = 0; bi < nb; ++bi) sstats += block_stats[bi];
    }

    lambda = (sstats.array() * expElogbeta.array() + eta).matrix();

    double bound = approx_bound(docs, gamma, lambda, alpha, eta);
    model.bound_trace.push_back(bound);
    if (epoch > 0) {
      double prev = model.bound_trace[model.bound_trace.size() - 2];
      if (std::abs(bound - prev) < 1e-6 * std::abs(prev)) break;
    }
  }

  model.topic_word = std::move(lambda);
  model.doc_topic = std::move(gamma);
  return model;
}

// ---------------------------------------------------------------------------
// NMF, Lee-Seung multiplicative updates for the Frobenius objective.
// ---------------------------------------------------------------------------

NmfModel fit_nmf(const WeightedDocTermMatrix& m, int K, int iters, std::uint64_t seed) {
  const int n = m.n();
  const int V = m.vocab_size();
  if (K < 2) throw ParameterError("fit_nmf: K must be >= 2");
  if (K > std::min(n, V))
    throw ParameterError("fit_nmf: K=" + std::to_string(K) + " exceeds min(n, V) = " +
                         std::to_string(std::min(n, V)));
  if (m.weights.nonZeros() == 0) {
    // Degenerate all-zero input: zero factors reproduce it exactly.
    NmfModel model;
    model.K = K;
    model.W = Matrix::Zero(n, K);
    model.H = Matrix::Zero(K, V);
    model.objective_trace.push_back(0.0);
    return model;
  }
  int non_empty = n - static_cast<int>(find_zero_rows(m.weights).size());
  if (non_empty < K)
    throw ParameterError("fit_nmf: only " + std::to_string(non_empty) +
                         " non-empty rows for K=" + std::to_string(K));
  if (iters < 1) iters = 1;

  const double floor = 1e-12;
  double total = 0;
  double norm_m2 = 0;
  for (int i = 0; i < n; ++i)
    for (SparseRowMatrix::InnerIterator it(m.weights, i); it; ++it) {
      if (it.value() < 0) throw ParameterError("fit_nmf: negative weight in input");
      total += it.value();
      norm_m2 += it.value() * it.value();
    }
  double mean = total / (static_cast<double>(n) * V);
  double scale = std::sqrt(mean / K);

  NmfModel model;
  model.K = K;
  Rng rng(derive_seed(seed, "nmf/init"));
  model.W.resize(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) model.W(i, k) = std::max(rng.uniform() * scale, floor);
  model.H.resize(K, V);
  for (int k = 0; k < K; ++k)
    for (int v = 0; v < V; ++v) model.H(k, v) = std::max(rng.uniform() * scale, floor);

  Matrix& W = model.W;
  Matrix& H = model.H;
  for (int it = 0; it < iters; ++it) {
    // H <- H . (W^T M) / ((W^T W) H)
    Matrix WtM = (m.weights.transpose() * W).transpose();
    Matrix denomH = (W.transpose() * W) * H;
    H = (H.array() * WtM.array() / denomH.array().max(floor)).max(floor).matrix();

    // W <- W . (M H^T) / (W (H H^T))
    Matrix MHt = m.weights * H.transpose();
    Matrix denomW = W * (H * H.transpose());
    W = (W.array() * MHt.array() / denomW.array().max(floor)).max(floor).matrix();

    // ||M - WH||^2 = ||M||^2 - 2<M,WH> + <W^T W, H H^T>, no dense n x V pass
    double cross = 0;
    for (int i = 0; i < n; ++i)
      for (SparseRowMatrix::InnerIterator e(m.weights, i); e; ++e)
        cross += e.value() * W.row(i).dot(H.col(e.col()));
    Matrix WtW = W.transpose() * W;
    Matrix HHt = H * H.transpose();
    double err2 = norm_m2 - 2.0 * cross + (WtW.array() * HHt.array()).sum();
    model.objective_trace.push_back(std::sqrt(std::max(err2, 0.0)));

    std::size_t t = model.objective_trace.size();
    if (t >= 2) {
      double prev = model.objective_trace[t - 2];
      double cur = model.objective_trace[t - 1];
      if (std::abs(cur - prev) < 1e-6 * std::max(prev, 1e-300)) break;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Topic-word rankings.
// ---------------------------------------------------------------------------

namespace {

std::vector<RankedTerms> rank_rows(const Matrix& scores, const Vocabulary& vocab, int top_n,
                                   const char* caller) {
  const int V = static_cast<int>(scores.cols());
  if (top_n < 0) top_n = 0;
  if (top_n > V) {
    std::cerr << caller << ": top_n=" << top_n << " clipped to vocabulary size " << V << "\n";
    top_n = V;
  }
  std::vector<RankedTerms> out(static_cast<std::size_t>(scores.rows()));
  std::vector<int> order(V);
  for (Eigen::Index k = 0; k < scores.rows(); ++k) {
    for (int v = 0; v < V; ++v) order[v] = v;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      double sa = scores(k, a), sb = scores(k, b);
      if (sa != sb) return sa > sb;
      return vocab.terms[a] < vocab.terms[b];
    });
    auto& list = out[static_cast<std::size_t>(k)];
    list.reserve(top_n);
    for (int r = 0; r < top_n; ++r) list.push_back({vocab.terms[order[r]], scores(k, order[r])});
  }
  return out;
}

}  // namespace

Matrix normalize_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double s = m.row(i).sum();
    if (s != 0.0) m.row(i) /= s;
  }
  return m;
}

std::vector<RankedTerms> lda_topic_words(const LdaModel& model, const Vocabulary& vocab,
                                         int top_n) {
  return rank_rows(normalize_rows(model.topic_word), vocab, top_n, "lda_topic_words");
}

std::vector<RankedTerms> nmf_topic_words(const NmfModel& model, const Vocabulary& vocab,
                                         int top_n) {
  return rank_rows(model.H, vocab, top_n, "nmf_topic_words");
}

void save_topic_words_csv(const fs::path& path, const std::vector<RankedTerms>& topics) {
  std::string out = "topic_id,rank,term,score\n";
  for (std::size_t k = 0; k < topics.size(); ++k) {
    for (std::size_t r = 0; r < topics[k].size(); ++r) {
      out += std::to_string(k) + "," + std::to_string(r + 1) + "," +
             csv_quote(topics[k][r].term) + "," + format_fixed(topics[k][r].score, 6) + "\n";
    }
  }
  write_text_file(path, out);
}

}  // namespace chronotopic
