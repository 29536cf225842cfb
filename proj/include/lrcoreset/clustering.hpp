#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "lrcoreset/common.hpp"
#include "lrcoreset/data.hpp"

namespace lrcoreset {

/// A k-clustering of the Z rows together with the per-cluster statistics the
/// sensitivity bounds need. Clusters are nonempty; k may be smaller than
/// requested when seeding produced duplicate or emptied centers.
struct Clustering {
  RowMatrix centers;              // k x D
  std::vector<Index> assignment;  // one entry per data row
  std::vector<Index> counts;      // rows per cluster
  Vector weights;                 // summed point weights per cluster
  RowMatrix sums;                 // weighted sum of Z rows per cluster
  double score = 0.0;             // weighted mean squared distance to assigned center
  std::vector<double> lloyd_trace;

  Index k() const noexcept { return centers.rows(); }
  Index dim() const noexcept { return centers.cols(); }
};

struct ClusterOptions {
  Index k = 4;
  Index lloyd_iters = 10;
  // Seeding subsample size; 0 selects min(1000k, ceil(0.025N)) (at least k).
  Index subsample = 0;
  unsigned workers = 1;
  // Independent seeding + Lloyd runs on the subsample; the centers with the
  // lowest subsample objective are kept.
  Index restarts = 10;
};

/// Row indices chosen by k-means++ (D^2 weighting, optionally times point
/// weights). Indices are distinct; once every remaining row coincides with a
/// chosen center the rest are drawn uniformly.
std::vector<Index> kmeanspp_seed(const RowMatrix& rows, Index k, Rng& rng, std::span<const double> weights = {});

/// Seeding subsample size used by cluster().
Index seeding_subsample_size(Index n, Index k);

Clustering cluster(const WeightedDataset& ds, const ClusterOptions& opts, Rng& rng);

/// Nearest-center assignment (ties to the lowest index) of every row plus
/// statistics; centers that attract no rows are dropped.
Clustering clustering_from_centers(const WeightedDataset& ds, const RowMatrix& centers, unsigned workers = 1);

/// Clustering for a given partition (e.g. the mixture component of each
/// row). Centers are the weighted cluster means; empty labels are dropped.
Clustering clustering_from_assignment(const WeightedDataset& ds, std::span<const Index> assignment);

/// Radius heuristic R = a / sqrt(I).
double choose_radius(double score, double a = 3.0);

nlohmann::json to_json(const Clustering& cl);
/// Reads centers back; statistics must be recomputed with clustering_from_centers.
RowMatrix centers_from_json(const nlohmann::json& j);

}  // namespace lrcoreset
