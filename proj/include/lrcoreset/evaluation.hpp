#pragma once

#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "lrcoreset/common.hpp"
#include "lrcoreset/coreset.hpp"
#include "lrcoreset/data.hpp"

namespace lrcoreset {

/// MMD with kernel (1 + x.y)^degree, biased V-statistic clipped at 0, as a
/// square root. Picks the cheaper of the two routes below.
double polynomial_mmd(const RowMatrix& a, const RowMatrix& b, int degree = 3, unsigned workers = 1);

/// Pairwise kernel-matrix route, O(S^2 D).
double polynomial_mmd_pairwise(const RowMatrix& a, const RowMatrix& b, int degree = 3, unsigned workers = 1);

/// Moment route: (1 + x.y)^d = sum_j C(d, j) (x.y)^j, and the mean of
/// (x.y)^j over pairs is the inner product of mean j-th tensor powers, so
/// MMD^2 = sum_j C(d, j) |T_j(A) - T_j(B)|^2. O(S D^d).
double polynomial_mmd_moments(const RowMatrix& a, const RowMatrix& b, int degree = 3);

/// Keeps `count` evenly spaced rows (all rows when count >= rows).
RowMatrix thin_to(const RowMatrix& samples, Index count);

/// Both sample sets thinned to the smaller count, then polynomial_mmd.
double chain_mmd(const RowMatrix& reference, const RowMatrix& approx, int degree = 3, unsigned workers = 1);

/// -mean_t ln( mean_s logistic(Z_t . theta_s) ), computed as a log-mean-exp
/// of -phi values.
double neg_test_log_likelihood(const RowMatrix& samples, const Dataset& test, unsigned workers = 1);

struct GridCheck {
  double max_rel_err = 0.0;
  Vector worst_theta;
  Index points = 0;
};

/// max |L - L~| / |L| over the origin, the 2D points +-R e_d and grid_size
/// points drawn uniformly from B_R.
GridCheck verify_epsilon_coreset(const WeightedDataset& full, const WeightedDataset& approx, double radius,
                                 Index grid_size, Rng& rng);
GridCheck verify_epsilon_coreset(const Dataset& full, const Coreset& cs, double radius, Index grid_size, Rng& rng);

/// M rows uniformly without replacement (kept in row order), gamma = N / M.
Coreset uniform_baseline(const Dataset& ds, Index m, Rng& rng);

using LogLikelihoodFn = std::function<double(const Vector&)>;

struct QuadratureResult {
  double ln_e = 0.0;
  double ln_e_tilde = 0.0;
  bool pass = false;
  Index nodes_per_axis = 0;
};

/// ln of E = int exp(L(theta)) N(theta; 0, sigma0^2 I) dtheta for L and L~ by
/// trapezoid rules on [-10 sigma0, 10 sigma0]^D, halving the spacing until
/// successive values agree to `rel_tol`. Requires D in {1, 2}, L, L~ <= 0 and
/// |L - L~| <= eps |L| at every node. pass iff
/// |ln E - ln E~| <= eps |ln E| + 1e-6.
QuadratureResult quadrature_marginal_check(Index dim, double sigma0, const LogLikelihoodFn& l,
                                           const LogLikelihoodFn& l_tilde, double eps, double rel_tol = 1e-8);

/// Fields left empty were not computed (no reference chain or no test set).
struct MetricReport {
  std::optional<double> mmd;
  std::optional<double> neg_test_ll;
  std::optional<double> grid_rel_err_max;
  Index m = 0;
  std::string method;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

}  // namespace lrcoreset
