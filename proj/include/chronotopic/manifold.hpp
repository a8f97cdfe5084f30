#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chronotopic/common.hpp"
#include "chronotopic/embedding.hpp"

namespace chronotopic {

/// Symmetric fuzzy neighborhood graph. Per point, rho is the distance to the
/// nearest neighbor and sigma the bandwidth calibrated so the outgoing
/// weights sum to log2(k); directed weights are combined as a + b - a*b.
struct FuzzyGraph {
  SparseRowMatrix weights;  // n x n, symmetric, entries in (0, 1]
  Vector rho;
  Vector sigma;

  int n() const { return static_cast<int>(weights.rows()); }
};

FuzzyGraph fuzzy_graph(const NeighborList& nbrs);

/// Low-dimensional similarity curve 1/(1 + a*d^(2b)), least-squares fitted to
/// the target that is 1 inside min_dist and exp(-(d - min_dist)/spread)
/// beyond it. rmse is the residual of the converged fit, kept as a
/// diagnostic (at min_dist=0 the true optimum sits near 0.024).
struct CurveParams {
  Real a = 0;
  Real b = 0;
  Real rmse = 0;
};

CurveParams fit_curve(Real min_dist, Real spread);

/// SGD layout of the fuzzy graph into n_components dimensions, initialized
/// from the leading principal components of `points` rescaled to max extent
/// 10. Each edge attracts at a rate proportional to its weight, with 5
/// uniform negative samples per positive move and gradients clipped to +-4;
/// the learning rate decays linearly to zero. Deterministic for a fixed seed
/// when parallel is false; the parallel path updates the layout lock-free
/// and may differ run to run.
Matrix reduce(const FuzzyGraph& graph, const Matrix& points, int n_components,
              int epochs, std::uint64_t seed, Real a, Real b, bool parallel = false);

enum class Selection { eom, leaf };

/// Labels in {-1, 0, 1, ...} with -1 for outliers, plus a membership
/// strength in [0, 1] per point (0 for outliers).
struct ClusterLabels {
  std::vector<int> labels;
  std::vector<Real> strengths;
  int n_clusters = 0;

  int n() const { return static_cast<int>(labels.size()); }
};

struct MstEdge {
  int u = 0;
  int v = 0;
  Real w = 0;
};

/// Distance to the min_samples-th nearest other point, for every row of x.
Vector core_distances(const Matrix& x, int min_samples);

/// Exact minimum spanning tree (Prim) of the complete mutual-reachability
/// graph d_mr(i,j) = max(core_i, core_j, d(i,j)). Edges in discovery order.
std::vector<MstEdge> mutual_reachability_mst(const Matrix& x, int min_samples);

/// Hierarchical density clustering: single linkage over mutual reachability,
/// condensed tree at min_cluster_size, stability-based cluster selection.
/// min_samples = 0 stands for "unset" and defaults to min_cluster_size.
/// Fewer than min_cluster_size points is a valid all-outlier result.
ClusterLabels hdbscan(const Matrix& x, int min_cluster_size, int min_samples = 0,
                      Selection selection = Selection::eom);

/// uid,label,strength rows, one per document.
void save_labels_csv(const std::string& path, const std::vector<std::string>& uids,
                     const ClusterLabels& labels);

}  // namespace chronotopic
