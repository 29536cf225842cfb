#pragma once

#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "lrcoreset/clustering.hpp"
#include "lrcoreset/common.hpp"
#include "lrcoreset/data.hpp"

namespace lrcoreset {

/// Logistic loss ln(1 + e^{-s}), stable for any finite s.
double phi(double s) noexcept;
/// 1 / (1 + e^{-s}).
double logistic(double s) noexcept;
/// ln(1 + e^{-s}) derivative: -logistic(-s).
double phi_derivative(double s) noexcept;

enum class CenterMode {
  exact,    // leave-one-out cluster means
  centers,  // cluster centers Q_i in place of the leave-one-out means
};

const char* to_string(CenterMode mode) noexcept;
CenterMode center_mode_from_string(const std::string& s);

struct SensitivityOptions {
  double radius = 1.0;
  std::optional<Vector> theta_star;  // shifts the parameter ball to theta* + B_R
  CenterMode mode = CenterMode::exact;
  unsigned workers = 1;
};

struct SensitivityProfile {
  Vector bounds;         // m_n
  double mean = 0.0;     // mean of m_n
  double total = 0.0;    // sum of m_n
  Vector probabilities;  // p_n = m_n / sum m
  double radius = 0.0;
  std::optional<Vector> theta_star;
  CenterMode mode = CenterMode::exact;
  Index k = 0;
};

/// Clustering-based upper bounds on the sensitivities over theta* + B_R.
///
/// For point n with weight w_n the bound is
///
///   m_n = W w_n / (w_n + sum_i W_i^{(-n)} exp(-R |c_i - Z_n| - |(c_i - Z_n) . theta*|))
///
/// where W is the total weight, W_i^{(-n)} the weight of cluster i without n
/// and c_i the weighted mean of cluster i without n (or Q_i in centers mode).
/// With unit weights this is the usual N / (1 + sum_i |G_i^{(-n)}| e^{...}).
/// The weighted form follows from the same Jensen argument applied to the
/// weight-normalized empirical distribution of each cluster; it bounds the
/// sensitivity of w_n phi(Z_n . theta) within the weighted sum.
SensitivityProfile sensitivity_bounds(const WeightedDataset& ds, const Clustering& cl, const SensitivityOptions& opts);

nlohmann::json summary_json(const SensitivityProfile& profile);

/// Certified lower estimate of sup_{|theta| <= R} N phi(Z_n.theta) / sum_l phi(Z_l.theta):
/// uniform samples in the ball, the two boundary points along Z_n, any extra
/// starting points, then projected gradient ascent on the log ratio from the
/// best few candidates. Every value returned is attained at a point of B_R.
double brute_force_sensitivity(const Dataset& ds, Index n, double radius, Index budget, Rng& rng,
                               std::span<const Vector> extra_starts = {});

/// The ratio itself at a given theta (no feasibility check).
double sensitivity_ratio(const Dataset& ds, Index n, const Vector& theta);

/// Unit vectors that are nearly parallel yet each individually separable,
/// with the separating parameters as witnesses.
struct AdversarialDataset {
  RowMatrix z;                   // K x D unit rows
  std::vector<Vector> witnesses; // theta_k: theta_k . Z_k = -alpha eps delta^2 / 2
  double separation = 0.0;       // eps = 1 - max_{k != k'} V_k . V_k'
  double delta = 0.0;            // sqrt(eps_prime / 2)
  double alpha = 0.0;

  Dataset as_dataset() const;  // X = Z, Y = +1
};

/// V_k equally spaced on the unit circle of the first two of D-1 coordinates,
/// Z_k = (delta V_k, sqrt(1 - delta^2)).
AdversarialDataset adversarial_dataset(Index count, Index dim, double eps_prime, double alpha);

/// K / (1 + (K - 1) exp(-R eps sqrt(eps') / 4)).
double lower_bound_value(Index count, double eps, double eps_prime, double radius);
/// K / (1 + (K - 1) exp(-R sqrt(2 eps'))), the matching upper value for the
/// adversarial data clustered one point per cluster.
double matching_upper_value(Index count, double eps_prime, double radius);

struct MixtureComponent {
  double weight = 1.0;     // pi_i
  Vector mean;             // mu_i
  Eigen::MatrixXd cov;     // Sigma_i
  double label_mean = 0.0; // E[Y | component i]
};

struct MixtureBoundSpec {
  std::vector<MixtureComponent> components;
  double radius = 1.0;
  double r = 0.25;  // concentration exponent in (0, 1/2)
};

struct MixtureBound {
  double finite = 0.0;  // bound on E[mean m] at the given N
  double limit = 0.0;   // N -> infinity value 1 / sum_i pi_i exp(-R sqrt(B_i))
  Vector a;
  Vector b;
};

/// Expected mean-sensitivity bound for Gaussian-mixture covariates clustered
/// by their generating component.
MixtureBound mixture_expected_bound(const MixtureBoundSpec& spec, Index n);

}  // namespace lrcoreset
