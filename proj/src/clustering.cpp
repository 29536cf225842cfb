#include "lrcoreset/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lrcoreset/parallel.hpp"

namespace lrcoreset {

namespace {

struct Nearest {
  Index index;
  double dist2;
};

Nearest nearest_center(const RowMatrix& centers, const auto& row) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (Index i = 0; i < centers.rows(); ++i) {
    const double d2 = (centers.row(i) - row).squaredNorm();
    if (d2 < best.dist2) best = {i, d2};  // strict: ties keep the lowest index
  }
  return best;
}

std::vector<Index> sample_without_replacement(Index n, Index m, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Accumulates statistics for a fixed assignment and compacts away empty clusters.
Clustering finalize(const WeightedDataset& ds, RowMatrix centers, std::vector<Index> assignment,
                    const std::vector<double>& dist2) {
  const Index k = centers.rows();
  const Index dim = ds.dim();
  std::vector<Index> counts(static_cast<std::size_t>(k), 0);
  Vector weights = Vector::Zero(k);
  RowMatrix sums = RowMatrix::Zero(k, dim);
  double score = 0.0;
  const auto& z = ds.z();
  const auto& w = ds.weights();
  for (Index n = 0; n < ds.size(); ++n) {
    const Index c = assignment[static_cast<std::size_t>(n)];
    ++counts[static_cast<std::size_t>(c)];
    weights[c] += w[n];
    sums.row(c) += w[n] * z.row(n);
    score += w[n] * dist2[static_cast<std::size_t>(n)];
  }

  std::vector<Index> remap(static_cast<std::size_t>(k), -1);
  Index kept = 0;
  for (Index i = 0; i < k; ++i)
    if (counts[static_cast<std::size_t>(i)] > 0) remap[static_cast<std::size_t>(i)] = kept++;

  Clustering cl;
  cl.centers.resize(kept, dim);
  cl.sums.resize(kept, dim);
  cl.weights.resize(kept);
  cl.counts.resize(static_cast<std::size_t>(kept));
  for (Index i = 0; i < k; ++i) {
    const Index j = remap[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    cl.centers.row(j) = centers.row(i);
    cl.sums.row(j) = sums.row(i);
    cl.weights[j] = weights[i];
    cl.counts[static_cast<std::size_t>(j)] = counts[static_cast<std::size_t>(i)];
  }
  for (auto& a : assignment) a = remap[static_cast<std::size_t>(a)];
  cl.assignment = std::move(assignment);
  cl.score = score / ds.total_weight();
  return cl;
}

}  // namespace

std::vector<Index> kmeanspp_seed(const RowMatrix& rows, Index k, Rng& rng, std::span<const double> weights) {
  const Index n = rows.rows();
  if (k < 1) throw std::invalid_argument("kmeanspp_seed: k must be >= 1");
  if (k > n) throw std::invalid_argument("kmeanspp_seed: k = " + std::to_string(k) + " exceeds " + std::to_string(n) + " rows");
  if (!weights.empty() && static_cast<Index>(weights.size()) != n)
    throw std::invalid_argument("kmeanspp_seed: weight count does not match rows");
  auto weight = [&](Index i) { return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)]; };

  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());

  auto take = [&](Index c) {
    chosen.push_back(c);
    taken[static_cast<std::size_t>(c)] = 1;
    for (Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (rows.row(i) - rows.row(c)).squaredNorm());
  };
  auto uniform_untaken = [&]() {
    std::uniform_int_distribution<Index> pick(0, n - 1 - static_cast<Index>(chosen.size()));
    Index r = pick(rng);
    for (Index i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (r-- == 0) return i;
    }
    return n - 1;
  };

  take(uniform_untaken());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (static_cast<Index>(chosen.size()) < k) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += weight(i) * d2[static_cast<std::size_t>(i)];
    if (!(total > 0.0)) {
      take(uniform_untaken());
      continue;
    }
    double u = unif(rng) * total;
    Index pick = -1;
    for (Index i = 0; i < n; ++i) {
      const double mass = weight(i) * d2[static_cast<std::size_t>(i)];
      if (mass <= 0.0) continue;
      pick = i;
      if (u < mass) break;
      u -= mass;
    }
    take(pick);
  }
  return chosen;
}

Index seeding_subsample_size(Index n, Index k) {
  const auto frac = static_cast<Index>(std::ceil(0.025 * static_cast<double>(n)));
  return std::min(n, std::max(k, std::min(1000 * k, frac)));
}

Clustering cluster(const WeightedDataset& ds, const ClusterOptions& opts, Rng& rng) {
  const Index n = ds.size();
  if (opts.k < 1) throw std::invalid_argument("cluster: k must be >= 1");
  if (opts.k > n) throw std::invalid_argument("cluster: k = " + std::to_string(opts.k) + " exceeds N = " + std::to_string(n));
  const Index l = opts.subsample > 0 ? std::min(n, std::max(opts.k, opts.subsample)) : seeding_subsample_size(n, opts.k);

  std::vector<Index> sub;
  if (l >= n) {
    sub.resize(static_cast<std::size_t>(n));
    std::iota(sub.begin(), sub.end(), Index{0});
  } else {
    sub = sample_without_replacement(n, l, rng);
  }
  RowMatrix zs(static_cast<Index>(sub.size()), ds.dim());
  std::vector<double> ws(sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    zs.row(static_cast<Index>(i)) = ds.z().row(sub[i]);
    ws[i] = ds.weights()[sub[i]];
  }

  if (opts.restarts < 1) throw std::invalid_argument("cluster: restarts must be >= 1");
  RowMatrix best;
  std::vector<double> best_trace;
  double best_obj = std::numeric_limits<double>::infinity();
  for (Index restart = 0; restart < opts.restarts; ++restart) {
    const auto seeds = kmeanspp_seed(zs, opts.k, rng, ws);
    RowMatrix centers(static_cast<Index>(seeds.size()), ds.dim());
    for (std::size_t i = 0; i < seeds.size(); ++i) centers.row(static_cast<Index>(i)) = zs.row(seeds[i]);

    // Lloyd refinement on the subsample. The trace holds the weighted mean
    // squared distance after each assignment step.
    std::vector<double> trace;
    std::vector<Index> prev;
    for (Index it = 0; it < opts.lloyd_iters; ++it) {
      const Index k = centers.rows();
      std::vector<Index> assign(sub.size());
      RowMatrix sums = RowMatrix::Zero(k, ds.dim());
      Vector wsum = Vector::Zero(k);
      double obj = 0.0;
      double wtot = 0.0;
      for (std::size_t i = 0; i < sub.size(); ++i) {
        const auto nn = nearest_center(centers, zs.row(static_cast<Index>(i)));
        assign[i] = nn.index;
        sums.row(nn.index) += ws[i] * zs.row(static_cast<Index>(i));
        wsum[nn.index] += ws[i];
        obj += ws[i] * nn.dist2;
        wtot += ws[i];
      }
      trace.push_back(obj / wtot);
      if (assign == prev) break;
      prev = std::move(assign);
      Index kept = 0;
      for (Index i = 0; i < k; ++i) {
        if (!(wsum[i] > 0.0)) continue;  // empty clusters are dropped, not reseeded
        centers.row(kept++) = sums.row(i) / wsum[i];
      }
      if (kept < k) {
        centers.conservativeResize(kept, Eigen::NoChange);
        prev.clear();
      }
    }

    double obj = 0.0;
    for (std::size_t i = 0; i < sub.size(); ++i) obj += ws[i] * nearest_center(centers, zs.row(static_cast<Index>(i))).dist2;
    if (obj < best_obj) {
      best_obj = obj;
      best = std::move(centers);
      best_trace = std::move(trace);
    }
  }

  Clustering cl = clustering_from_centers(ds, best, opts.workers);
  cl.lloyd_trace = std::move(best_trace);
  return cl;
}

Clustering clustering_from_centers(const WeightedDataset& ds, const RowMatrix& centers, unsigned workers) {
  if (centers.rows() < 1 || centers.cols() != ds.dim())
    throw std::invalid_argument("clustering_from_centers: centers must be k x D with k >= 1");
  const auto n = static_cast<std::size_t>(ds.size());
  std::vector<Index> assignment(n);
  std::vector<double> dist2(n);
  parallel_chunks(n, workers, [&](std::size_t lo, std::size_t hi, unsigned) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto nn = nearest_center(centers, ds.z().row(static_cast<Index>(i)));
      assignment[i] = nn.index;
      dist2[i] = nn.dist2;
    }
  });
  // Statistics are reduced sequentially in row order, so results do not
  // depend on the worker count.
  return finalize(ds, centers, std::move(assignment), dist2);
}

Clustering clustering_from_assignment(const WeightedDataset& ds, std::span<const Index> assignment) {
  if (static_cast<Index>(assignment.size()) != ds.size())
    throw std::invalid_argument("clustering_from_assignment: one label per row required");
  Index k = 0;
  for (const Index a : assignment) {
    if (a < 0) throw std::invalid_argument("clustering_from_assignment: negative cluster label");
    k = std::max(k, a + 1);
  }
  RowMatrix means = RowMatrix::Zero(k, ds.dim());
  Vector wsum = Vector::Zero(k);
  for (Index n = 0; n < ds.size(); ++n) {
    const Index a = assignment[static_cast<std::size_t>(n)];
    means.row(a) += ds.weights()[n] * ds.z().row(n);
    wsum[a] += ds.weights()[n];
  }
  for (Index i = 0; i < k; ++i)
    if (wsum[i] > 0.0) means.row(i) /= wsum[i];
  std::vector<double> dist2(assignment.size());
  for (Index n = 0; n < ds.size(); ++n)
    dist2[static_cast<std::size_t>(n)] = (ds.z().row(n) - means.row(assignment[static_cast<std::size_t>(n)])).squaredNorm();
  return finalize(ds, std::move(means), std::vector<Index>(assignment.begin(), assignment.end()), dist2);
}

double choose_radius(double score, double a) {
  if (!(a > 0.0)) throw std::invalid_argument("choose_radius: a must be positive");
  if (!(score > 0.0))
    throw std::invalid_argument("choose_radius: clustering score is 0 (degenerate clustering); pass an explicit radius");
  return a / std::sqrt(score);
}

nlohmann::json to_json(const Clustering& cl) {
  nlohmann::json centers = nlohmann::json::array();
  for (Index i = 0; i < cl.k(); ++i) {
    std::vector<double> row(cl.centers.row(i).begin(), cl.centers.row(i).end());
    centers.push_back(row);
  }
  return {{"k", cl.k()},
          {"dim", cl.dim()},
          {"centers", centers},
          {"counts", cl.counts},
          {"weights", std::vector<double>(cl.weights.begin(), cl.weights.end())},
          {"score", cl.score},
          {"lloyd_trace", cl.lloyd_trace}};
}

RowMatrix centers_from_json(const nlohmann::json& j) {
  const auto& rows = j.at("centers");
  if (!rows.is_array() || rows.empty()) throw Error("clustering json: 'centers' must be a nonempty array");
  const auto dim = static_cast<Index>(rows.at(0).size());
  RowMatrix centers(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = rows[i].get<std::vector<double>>();
    if (static_cast<Index>(row.size()) != dim) throw Error("clustering json: ragged centers");
    for (Index d = 0; d < dim; ++d) centers(static_cast<Index>(i), d) = row[static_cast<std::size_t>(d)];
  }
  return centers;
}

}  // namespace lrcoreset
