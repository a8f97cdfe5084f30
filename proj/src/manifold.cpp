#include "chronotopic/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "chronotopic/io.hpp"

namespace chronotopic {

namespace {

constexpr Real kInf = std::numeric_limits<Real>::infinity();

}  // namespace

// ---------------------------------------------------------------------------
// Fuzzy graph
// ---------------------------------------------------------------------------

FuzzyGraph fuzzy_graph(const NeighborList& nbrs) {
  const int n = static_cast<int>(nbrs.rows.size());
  const int k = nbrs.k;
  if (k < 2)
    throw ParameterError("fuzzy_graph: need k >= 2 neighbors, got " + std::to_string(k));

  const Real target = std::log2(static_cast<Real>(k));

  FuzzyGraph g;
  g.rho = Vector::Zero(n);
  g.sigma = Vector::Zero(n);

  // Directed weights, one slot per (point, neighbor) entry.
  std::vector<Real> directed(static_cast<std::size_t>(n) * k, 0.0);

  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
    const int i = static_cast<int>(ui);
    const auto& row = nbrs.rows[i];
    const Real rho = row.front().dist;  // rows are sorted ascending
    const Real dmax = row.back().dist;
    Real* w = directed.data() + static_cast<std::size_t>(i) * k;

    if (dmax <= 0.0) {
      // All neighbors coincide with the point: documented degenerate path,
      // unit weights with sigma pinned to 1.
      g.rho[i] = 0.0;
      g.sigma[i] = 1.0;
      for (int j = 0; j < k; ++j) w[j] = 1.0;
      return;
    }

    auto weight_sum = [&](Real sigma) {
      Real s = 0.0;
      for (int j = 0; j < k; ++j)
        s += std::exp(-std::max(0.0, row[j].dist - rho) / sigma);
      return s;
    };

    Real lo = 1e-8, hi = dmax * k;
    for (int it = 0; it < 64; ++it) {
      Real mid = 0.5 * (lo + hi);
      if (weight_sum(mid) > target)
        hi = mid;
      else
        lo = mid;
    }
    const Real sigma = 0.5 * (lo + hi);

    Real sum = 0.0;
    for (int j = 0; j < k; ++j) {
      w[j] = std::exp(-std::max(0.0, row[j].dist - rho) / sigma);
      sum += w[j];
    }
    // The search cannot reach log2(k) when too many neighbors sit exactly at
    // rho (e.g. all equidistant); normalize the row so the calibration
    // invariant holds regardless.
    if (std::abs(sum - target) > 1e-3 && sum > 0.0) {
      const Real scale = target / sum;
      for (int j = 0; j < k; ++j) w[j] *= scale;
    }

    g.rho[i] = rho;
    g.sigma[i] = sigma;
  });

  // Symmetrize: combined(i,j) = a + b - a*b over the two directions.
  std::unordered_map<std::uint64_t, std::pair<Real, Real>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i) {
    const auto& row = nbrs.rows[i];
    for (int j = 0; j < k; ++j) {
      const int t = row[j].id;
      if (t == i) continue;
      const Real w = directed[static_cast<std::size_t>(i) * k + j];
      if (w <= 0.0) continue;
      const bool flip = t < i;
      const std::uint64_t key = (static_cast<std::uint64_t>(flip ? t : i) << 32) |
                                static_cast<std::uint64_t>(flip ? i : t);
      auto& slot = pairs[key];
      (flip ? slot.second : slot.first) = w;
    }
  }

  std::vector<Eigen::Triplet<Real>> trips;
  trips.reserve(2 * pairs.size());
  for (const auto& [key, ab] : pairs) {
    const int i = static_cast<int>(key >> 32);
    const int j = static_cast<int>(key & 0xffffffffu);
    const Real s = ab.first + ab.second - ab.first * ab.second;
    if (s <= 0.0) continue;
    trips.emplace_back(i, j, s);
    trips.emplace_back(j, i, s);
  }
  g.weights.resize(n, n);
  g.weights.setFromTriplets(trips.begin(), trips.end());
  return g;
}

// ---------------------------------------------------------------------------
// Similarity curve
// ---------------------------------------------------------------------------

CurveParams fit_curve(Real min_dist, Real spread) {
  if (!(spread > 0.0)) throw ParameterError("fit_curve: spread must be positive");
  if (min_dist < 0.0) throw ParameterError("fit_curve: min_dist must be >= 0");
  if (!(min_dist < 3.0 * spread))
    throw ParameterError("fit_curve: min_dist must be below 3*spread");

  constexpr int kSamples = 300;
  Vector x(kSamples), y(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    x[i] = 3.0 * spread * i / (kSamples - 1);
    y[i] = x[i] < min_dist ? 1.0 : std::exp(-(x[i] - min_dist) / spread);
  }

  auto cost_at = [&](Real a, Real b, Vector* r) {
    Real c = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const Real xp = x[i] > 0.0 ? std::pow(x[i], 2.0 * b) : 0.0;
      const Real ri = 1.0 / (1.0 + a * xp) - y[i];
      if (r) (*r)[i] = ri;
      c += ri * ri;
    }
    return c;
  };

  // Levenberg-Marquardt on (a, b) from (1, 1).
  Real a = 1.0, b = 1.0;
  Vector r(kSamples), rtry(kSamples);
  Matrix jac(kSamples, 2);
  Real cost = cost_at(a, b, &r);
  Real lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < 200 && !converged; ++it) {
    for (int i = 0; i < kSamples; ++i) {
      if (x[i] <= 0.0) {
        jac(i, 0) = 0.0;
        jac(i, 1) = 0.0;
        continue;
      }
      const Real xp = std::pow(x[i], 2.0 * b);
      const Real den = 1.0 + a * xp;
      jac(i, 0) = -xp / (den * den);
      jac(i, 1) = -2.0 * a * xp * std::log(x[i]) / (den * den);
    }
    const Eigen::Matrix2d jtj = jac.transpose() * jac;
    const Eigen::Vector2d grad = jac.transpose() * r;
    if (grad.norm() < 1e-10) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Eigen::Matrix2d lhs = jtj;
      lhs(0, 0) += lambda * jtj(0, 0);
      lhs(1, 1) += lambda * jtj(1, 1);
      const Eigen::Vector2d step = lhs.ldlt().solve(-grad);
      const Real a2 = a + step[0], b2 = b + step[1];
      // The curve degenerates outside a,b > 0; treat such proposals as
      // rejected rather than letting pow() blow up at x = 0.
      const Real c2 = (a2 > 1e-12 && b2 > 1e-6) ? cost_at(a2, b2, &rtry)
                                                : std::numeric_limits<Real>::infinity();
      if (c2 < cost) {
        if (step.norm() < 1e-13 * (1.0 + std::hypot(a, b)) || cost - c2 < 1e-16 * cost)
          converged = true;
        a = a2;
        b = b2;
        cost = c2;
        r.swap(rtry);
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 3.0;
    }
    if (!accepted) {
      // No descent step left: done if the gradient is already tiny,
      // otherwise genuinely stuck.
      if (grad.norm() < 1e-6)
        converged = true;
      else
        break;
    }
  }
  if (!converged)
    throw ValidationError("fit_curve did not converge: min_dist=" +
                          format_fixed(min_dist, 4) + " spread=" + format_fixed(spread, 4) +
                          " iterations=" + std::to_string(it) +
                          " rmse=" + format_fixed(std::sqrt(cost / kSamples), 6));

  CurveParams p;
  p.a = a;
  p.b = b;
  p.rmse = std::sqrt(cost / kSamples);
  return p;
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

namespace {

Matrix pca_init(const Matrix& points, int m) {
  const auto n = points.rows();
  const auto d = points.cols();
  Matrix centered = points.rowwise() - points.colwise().mean();
  Matrix cov =
      (centered.transpose() * centered) / static_cast<Real>(std::max<Eigen::Index>(1, n - 1));
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.info() != Eigen::Success)
    throw ValidationError("reduce: eigendecomposition failed in PCA init");
  Matrix y = Matrix::Zero(n, m);
  const auto take = std::min<Eigen::Index>(m, d);
  for (Eigen::Index c = 0; c < take; ++c)
    y.col(c) = centered * es.eigenvectors().col(d - 1 - c);
  const Real extent = y.cwiseAbs().maxCoeff();
  if (extent > 0.0) y *= 10.0 / extent;
  return y;
}

struct LayoutEdge {
  int i = 0;
  int j = 0;
  Real pace = 0;  // epochs between samples: max weight / weight
};

inline Real clip4(Real v) { return std::clamp(v, -4.0, 4.0); }

// One positive move plus `negatives` uniform repulsions for the head.
void sgd_move(Matrix& y, int i, int j, Real a, Real b, Real alpha, int negatives, int n,
              Rng& rng) {
  const int m = static_cast<int>(y.cols());
  Real d2 = 0.0;
  for (int c = 0; c < m; ++c) {
    const Real diff = y(i, c) - y(j, c);
    d2 += diff * diff;
  }
  if (d2 > 0.0) {
    const Real gc = -2.0 * a * b * std::pow(d2, b - 1.0) / (a * std::pow(d2, b) + 1.0);
    for (int c = 0; c < m; ++c) {
      const Real g = clip4(gc * (y(i, c) - y(j, c)));
      y(i, c) += alpha * g;
      y(j, c) -= alpha * g;
    }
  }
  for (int s = 0; s < negatives; ++s) {
    const int t = static_cast<int>(rng.uniform_index(n));
    if (t == i) continue;
    Real e2 = 0.0;
    for (int c = 0; c < m; ++c) {
      const Real diff = y(i, c) - y(t, c);
      e2 += diff * diff;
    }
    if (e2 > 0.0) {
      const Real gc = 2.0 * b / ((0.001 + e2) * (a * std::pow(e2, b) + 1.0));
      for (int c = 0; c < m; ++c) y(i, c) += alpha * clip4(gc * (y(i, c) - y(t, c)));
    } else {
      // Coincides with a non-neighbor: push hard in every coordinate.
      for (int c = 0; c < m; ++c) y(i, c) += alpha * 4.0;
    }
  }
}

}  // namespace

Matrix reduce(const FuzzyGraph& graph, const Matrix& points, int n_components, int epochs,
              std::uint64_t seed, Real a, Real b, bool parallel) {
  const int n = graph.n();
  if (points.rows() != n)
    throw ParameterError("reduce: graph has " + std::to_string(n) + " points but " +
                         std::to_string(points.rows()) + " vectors were given");
  if (n_components < 2) throw ParameterError("reduce: n_components must be >= 2");
  if (epochs < 50) throw ParameterError("reduce: need at least 50 epochs");
  if (!(a > 0.0) || !(b > 0.0))
    throw ParameterError("reduce: curve parameters must be positive");

  Matrix y = pca_init(points, n_components);

  // Undirected edges in deterministic row-major order.
  Real wmax = 0.0;
  for (int i = 0; i < n; ++i)
    for (SparseRowMatrix::InnerIterator it(graph.weights, i); it; ++it)
      if (it.col() > i) wmax = std::max(wmax, it.value());
  std::vector<LayoutEdge> edges;
  for (int i = 0; i < n; ++i)
    for (SparseRowMatrix::InnerIterator it(graph.weights, i); it; ++it)
      if (it.col() > i && it.value() > 0.0)
        edges.push_back({i, static_cast<int>(it.col()), wmax / it.value()});
  if (edges.empty()) return y;

  constexpr int kNegatives = 5;
  const int nthreads = parallel ? max_threads() : 1;

  if (nthreads <= 1) {
    Rng rng(derive_seed(seed, "reduce/sgd"));
    std::vector<Real> next_due(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) next_due[e] = edges[e].pace;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      const Real alpha = 1.0 - static_cast<Real>(epoch) / epochs;
      for (std::size_t e = 0; e < edges.size(); ++e) {
        if (next_due[e] > epoch) continue;
        sgd_move(y, edges[e].i, edges[e].j, a, b, alpha, kNegatives, n, rng);
        next_due[e] += edges[e].pace;
      }
    }
    return y;
  }

  // Lock-free parallel batches: threads own disjoint edge ranges but write to
  // the shared layout concurrently, so runs are not reproducible.
  const std::size_t chunk = (edges.size() + nthreads - 1) / nthreads;
  std::vector<std::thread> workers;
  for (int t = 0; t < nthreads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(edges.size(), lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&, lo, hi, t] {
      Rng rng(derive_seed(seed, "reduce/sgd/" + std::to_string(t)));
      std::vector<Real> next_due(hi - lo);
      for (std::size_t e = lo; e < hi; ++e) next_due[e - lo] = edges[e].pace;
      for (int epoch = 0; epoch < epochs; ++epoch) {
        const Real alpha = 1.0 - static_cast<Real>(epoch) / epochs;
        for (std::size_t e = lo; e < hi; ++e) {
          if (next_due[e - lo] > epoch) continue;
          sgd_move(y, edges[e].i, edges[e].j, a, b, alpha, kNegatives, n, rng);
          next_due[e - lo] += edges[e].pace;
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  return y;
}

// ---------------------------------------------------------------------------
// Density clustering
// ---------------------------------------------------------------------------

Vector core_distances(const Matrix& x, int min_samples) {
  const int n = static_cast<int>(x.rows());
  if (n < 2) throw ParameterError("core_distances: need at least 2 points");
  if (min_samples < 1) throw ParameterError("core_distances: min_samples must be >= 1");
  const int ms = std::min(min_samples, n - 1);

  Vector core(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ui) {
    const int i = static_cast<int>(ui);
    std::vector<Real> d;
    d.reserve(n - 1);
    for (int j = 0; j < n; ++j)
      if (j != i) d.push_back((x.row(i) - x.row(j)).norm());
    std::nth_element(d.begin(), d.begin() + (ms - 1), d.end());
    core[i] = d[ms - 1];
  });
  return core;
}

std::vector<MstEdge> mutual_reachability_mst(const Matrix& x, int min_samples) {
  const int n = static_cast<int>(x.rows());
  const Vector core = core_distances(x, min_samples);

  auto mreach = [&](int i, int j) {
    return std::max({core[i], core[j], (x.row(i) - x.row(j)).norm()});
  };

  std::vector<char> done(n, 0);
  std::vector<Real> dist(n, kInf);
  std::vector<int> from(n, 0);
  done[0] = 1;
  for (int j = 1; j < n; ++j) dist[j] = mreach(0, j);

  std::vector<MstEdge> edges;
  edges.reserve(n - 1);
  for (int step = 1; step < n; ++step) {
    int best = -1;
    for (int j = 0; j < n; ++j)
      if (!done[j] && (best < 0 || dist[j] < dist[best])) best = j;
    edges.push_back({from[best], best, dist[best]});
    done[best] = 1;
    for (int j = 0; j < n; ++j) {
      if (done[j]) continue;
      const Real d = mreach(best, j);
      if (d < dist[j]) {
        dist[j] = d;
        from[j] = best;
      }
    }
  }
  return edges;
}

namespace {

// Single-linkage dendrogram node: children are leaves (< n) or earlier
// merges (n + index).
struct Merge {
  int a = 0;
  int b = 0;
  Real dist = 0;
};

struct CondensedRow {
  int parent = 0;
  int child = 0;  // < n is a point, otherwise a cluster
  Real lambda = 0;
  int size = 0;
};

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int v) {
    while (parent[v] != v) {
      parent[v] = parent[parent[v]];
      v = parent[v];
    }
    return v;
  }
};

std::vector<Merge> single_linkage(std::vector<MstEdge> edges, int n) {
  std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
    return std::tie(a.w, a.u, a.v) < std::tie(b.w, b.u, b.v);
  });
  DisjointSet ds(n);
  std::vector<int> node_of(n);
  for (int i = 0; i < n; ++i) node_of[i] = i;
  std::vector<Merge> merges;
  merges.reserve(edges.size());
  for (const auto& e : edges) {
    const int ra = ds.find(e.u), rb = ds.find(e.v);
    merges.push_back({node_of[ra], node_of[rb], e.w});
    ds.parent[ra] = rb;
    node_of[ds.find(rb)] = n + static_cast<int>(merges.size()) - 1;
  }
  return merges;
}

void collect_leaves(const std::vector<Merge>& merges, int n, int node, std::vector<int>* out) {
  std::vector<int> stack{node};
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    if (v < n) {
      out->push_back(v);
    } else {
      stack.push_back(merges[v - n].a);
      stack.push_back(merges[v - n].b);
    }
  }
}

// Walk the dendrogram top-down, keeping a cluster alive while one side stays
// >= min_cluster_size and recording everything else as point exits. Cluster
// ids start at n (the root) and grow in BFS order.
std::vector<CondensedRow> condense(const std::vector<Merge>& merges, int n,
                                   int min_cluster_size, int* n_clusters) {
  std::vector<int> leaf_count(n + merges.size(), 1);
  for (std::size_t t = 0; t < merges.size(); ++t)
    leaf_count[n + t] = leaf_count[merges[t].a] + leaf_count[merges[t].b];

  std::vector<CondensedRow> rows;
  int next_label = n + 1;
  std::queue<std::pair<int, int>> work;  // (dendrogram node, cluster label)
  work.push({n + static_cast<int>(merges.size()) - 1, n});
  std::vector<int> leaves;
  while (!work.empty()) {
    const auto [node, label] = work.front();
    work.pop();
    const Merge& m = merges[node - n];
    const Real lambda = m.dist > 0.0 ? 1.0 / m.dist : kInf;
    const int sa = leaf_count[m.a], sb = leaf_count[m.b];
    const bool keep_a = sa >= min_cluster_size;
    const bool keep_b = sb >= min_cluster_size;
    if (keep_a && keep_b) {
      const int la = next_label++;
      const int lb = next_label++;
      rows.push_back({label, la, lambda, sa});
      rows.push_back({label, lb, lambda, sb});
      work.push({m.a, la});
      work.push({m.b, lb});
    } else if (keep_a || keep_b) {
      leaves.clear();
      collect_leaves(merges, n, keep_a ? m.b : m.a, &leaves);
      for (int p : leaves) rows.push_back({label, p, lambda, 1});
      work.push({keep_a ? m.a : m.b, label});
    } else {
      leaves.clear();
      collect_leaves(merges, n, node, &leaves);
      for (int p : leaves) rows.push_back({label, p, lambda, 1});
    }
  }
  *n_clusters = next_label - n;
  return rows;
}

}  // namespace

ClusterLabels hdbscan(const Matrix& x, int min_cluster_size, int min_samples,
                      Selection selection) {
  const int n = static_cast<int>(x.rows());
  if (min_cluster_size < 2) throw ParameterError("hdbscan: min_cluster_size must be >= 2");
  if (min_samples < 0)
    throw ParameterError("hdbscan: min_samples must be >= 1 (0 for the default)");
  if (min_samples == 0) min_samples = min_cluster_size;

  ClusterLabels out;
  out.labels.assign(n, -1);
  out.strengths.assign(n, 0.0);
  if (n < min_cluster_size) return out;  // valid all-outlier result

  const auto mst = mutual_reachability_mst(x, min_samples);
  const auto merges = single_linkage(mst, n);
  int n_clusters = 0;
  const auto rows = condense(merges, n, min_cluster_size, &n_clusters);
  const int total = n + n_clusters;

  // Stability: birth lambda per cluster, then the sum of (lambda - birth)
  // over everything that exits it. The root (id n) is born at lambda 0.
  std::vector<Real> birth(total, 0.0), stability(total, 0.0);
  std::vector<std::vector<int>> children(total);
  std::vector<int> cluster_parent(total, -1);
  for (const auto& r : rows)
    if (r.child >= n) birth[r.child] = r.lambda;
  for (const auto& r : rows) {
    if (!(std::isinf(r.lambda) && std::isinf(birth[r.parent])))
      stability[r.parent] += (r.lambda - birth[r.parent]) * r.size;
    if (r.child >= n) {
      children[r.parent].push_back(r.child);
      cluster_parent[r.child] = r.parent;
    }
  }

  // Excess of mass: a cluster wins over its descendants when its own
  // stability is at least the best total from its subtrees. The root
  // competes like any other cluster, so an undivided heap of points (e.g.
  // all-identical input) can still come back as one cluster.
  std::vector<char> winner(total, 0);
  if (selection == Selection::eom) {
    std::vector<Real> subtree(total, 0.0);
    for (int c = total - 1; c >= n; --c) {
      Real child_sum = 0.0;
      for (int d : children[c]) child_sum += subtree[d];
      if (children[c].empty() || stability[c] >= child_sum) {
        winner[c] = 1;
        subtree[c] = stability[c];
      } else {
        subtree[c] = child_sum;
      }
    }
  } else {
    for (int c = n; c < total; ++c)
      if (children[c].empty()) winner[c] = 1;
  }

  // Keep only the topmost winners so no selected cluster contains another.
  std::vector<char> chosen(total, 0);
  std::vector<int> stack{n};
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    if (winner[c]) {
      chosen[c] = 1;
    } else {
      for (int d : children[c]) stack.push_back(d);
    }
  }

  std::vector<int> label_of(total, -1);
  for (int c = n; c < total; ++c)
    if (chosen[c]) label_of[c] = out.n_clusters++;

  // Max exit lambda per cluster, for membership strengths.
  std::vector<Real> death(total, 0.0);
  for (const auto& r : rows) death[r.parent] = std::max(death[r.parent], r.lambda);

  for (const auto& r : rows) {
    if (r.child >= n) continue;
    int c = r.parent;
    while (c >= 0 && !chosen[c]) c = cluster_parent[c];
    if (c < 0) continue;
    out.labels[r.child] = label_of[c];
    const Real dmax = death[c];
    out.strengths[r.child] =
        (std::isinf(dmax) || dmax <= 0.0) ? 1.0 : std::min(r.lambda, dmax) / dmax;
  }
  return out;
}

void save_labels_csv(const std::string& path, const std::vector<std::string>& uids,
                     const ClusterLabels& labels) {
  if (static_cast<int>(uids.size()) != labels.n())
    throw AlignmentError("save_labels_csv: " + std::to_string(uids.size()) + " uids vs " +
                         std::to_string(labels.n()) + " labels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "uid,label,strength\n";
  for (std::size_t i = 0; i < uids.size(); ++i)
    out << csv_quote(uids[i]) << ',' << labels.labels[i] << ','
        << format_fixed(labels.strengths[i], 6) << '\n';
  if (!out.flush()) throw ParseError("failed writing " + path);
}

}  // namespace chronotopic
