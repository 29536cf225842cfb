#include "lrcoreset/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lrcoreset/parallel.hpp"

namespace lrcoreset {

double phi(double s) noexcept {
  const double v = s >= 0.0 ? std::log1p(std::exp(-s)) : -s + std::log1p(std::exp(s));
  // e^{-s} underflows past s ~ 745; clamp so phi stays strictly positive.
  return std::max(v, std::numeric_limits<double>::denorm_min());
}

double logistic(double s) noexcept {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double phi_derivative(double s) noexcept { return -logistic(-s); }

namespace {

// ln phi(s), accurate where phi(s) underflows.
double log_phi(double s) noexcept {
  if (s > 30.0) return -s + std::log1p(-0.5 * std::exp(-s));
  return std::log(phi(s));
}

// phi'(s) / phi(s), in (-1, 0).
double phi_log_slope(double s) noexcept {
  if (s > 30.0) return -std::exp(-phi(-s) - log_phi(s));
  return phi_derivative(s) / phi(s);
}

}  // namespace

const char* to_string(CenterMode mode) noexcept { return mode == CenterMode::exact ? "exact" : "centers"; }

CenterMode center_mode_from_string(const std::string& s) {
  if (s == "exact") return CenterMode::exact;
  if (s == "centers") return CenterMode::centers;
  throw std::invalid_argument("unknown sensitivity mode '" + s + "' (exact | centers)");
}

SensitivityProfile sensitivity_bounds(const WeightedDataset& ds, const Clustering& cl, const SensitivityOptions& opts) {
  if (!(opts.radius > 0.0) || !std::isfinite(opts.radius))
    throw std::invalid_argument("sensitivity_bounds: radius must be positive and finite");
  if (static_cast<Index>(cl.assignment.size()) != ds.size() || cl.dim() != ds.dim())
    throw std::invalid_argument("sensitivity_bounds: clustering does not belong to this dataset");
  if (opts.theta_star && opts.theta_star->size() != ds.dim())
    throw std::invalid_argument("sensitivity_bounds: theta_star must have length D");

  const Index k = cl.k();
  const double radius = opts.radius;
  const double total_weight = ds.total_weight();
  const bool shifted = opts.theta_star.has_value();
  const bool exact = opts.mode == CenterMode::exact;

  RowMatrix means(k, ds.dim());
  for (Index i = 0; i < k; ++i) means.row(i) = cl.sums.row(i) / cl.weights[i];

  SensitivityProfile prof;
  prof.bounds.resize(ds.size());
  parallel_chunks(static_cast<std::size_t>(ds.size()), opts.workers, [&](std::size_t lo, std::size_t hi, unsigned) {
    Eigen::RowVectorXd diff(ds.dim());
    for (auto un = lo; un < hi; ++un) {
      const auto n = static_cast<Index>(un);
      const auto zn = ds.z().row(n);
      const double wn = ds.weights()[n];
      const Index own = cl.assignment[un];
      double denom = wn;
      for (Index i = 0; i < k; ++i) {
        double wi = cl.weights[i];
        if (i == own) {
          if (cl.counts[static_cast<std::size_t>(i)] <= 1) continue;  // nothing left after removing n
          wi -= wn;
          if (exact)
            diff.noalias() = (cl.sums.row(i) - wn * zn) / wi - zn;
          else
            diff.noalias() = cl.centers.row(i) - zn;
        } else if (exact) {
          diff.noalias() = means.row(i) - zn;
        } else {
          diff.noalias() = cl.centers.row(i) - zn;
        }
        double expo = -radius * diff.norm();
        if (shifted) expo -= std::abs(diff.dot(opts.theta_star->transpose()));
        denom += wi * std::exp(expo);
      }
      prof.bounds[n] = total_weight * wn / denom;
    }
  });

  prof.total = prof.bounds.sum();
  prof.mean = prof.total / static_cast<double>(ds.size());
  prof.probabilities = prof.bounds / prof.total;
  prof.radius = radius;
  prof.theta_star = opts.theta_star;
  prof.mode = opts.mode;
  prof.k = k;
  return prof;
}

nlohmann::json summary_json(const SensitivityProfile& profile) {
  nlohmann::json j{{"mean_sensitivity", profile.mean},
                   {"total_sensitivity", profile.total},
                   {"max_sensitivity", profile.bounds.maxCoeff()},
                   {"radius", profile.radius},
                   {"k", profile.k},
                   {"mode", to_string(profile.mode)},
                   {"n", profile.bounds.size()}};
  if (profile.theta_star)
    j["theta_star"] = std::vector<double>(profile.theta_star->begin(), profile.theta_star->end());
  return j;
}

// --- brute-force oracle -----------------------------------------------------

namespace {

class RatioObjective {
 public:
  RatioObjective(const Dataset& ds, Index n) : z_(ds.z()), n_(n), log_n_(std::log(static_cast<double>(ds.size()))) {}

  double log_value(const Vector& theta) const {
    const Vector s = z_ * theta;
    return log_n_ + log_phi(s[n_]) - log_sum_phi(s);
  }

  double log_value_and_grad(const Vector& theta, Vector& grad) const {
    const Vector s = z_ * theta;
    Vector lp(s.size());
    for (Index l = 0; l < s.size(); ++l) lp[l] = log_phi(s[l]);
    const double mx = lp.maxCoeff();
    const Vector soft = (lp.array() - mx).exp();
    const double norm = soft.sum();
    Vector coef(s.size());
    for (Index l = 0; l < s.size(); ++l) coef[l] = -soft[l] / norm * phi_log_slope(s[l]);
    coef[n_] += phi_log_slope(s[n_]);
    grad = z_.transpose() * coef;
    return log_n_ + lp[n_] - (mx + std::log(norm));
  }

 private:
  static double log_sum_phi(const Vector& s) {
    Vector lp(s.size());
    for (Index l = 0; l < s.size(); ++l) lp[l] = log_phi(s[l]);
    const double mx = lp.maxCoeff();
    return mx + std::log((lp.array() - mx).exp().sum());
  }

  const RowMatrix& z_;
  Index n_;
  double log_n_;
};

void project_to_ball(Vector& theta, double radius) {
  const double norm = theta.norm();
  if (norm > radius) theta *= radius / norm;
}

}  // namespace

double sensitivity_ratio(const Dataset& ds, Index n, const Vector& theta) {
  return std::exp(RatioObjective(ds, n).log_value(theta));
}

double brute_force_sensitivity(const Dataset& ds, Index n, double radius, Index budget, Rng& rng,
                               std::span<const Vector> extra_starts) {
  if (n < 0 || n >= ds.size()) throw std::invalid_argument("brute_force_sensitivity: index out of range");
  if (!(radius > 0.0)) throw std::invalid_argument("brute_force_sensitivity: radius must be positive");
  if (budget < 0) throw std::invalid_argument("brute_force_sensitivity: budget must be >= 0");
  const Index dim = ds.dim();
  const RatioObjective obj(ds, n);

  struct Candidate {
    double value;
    Vector theta;
  };
  std::vector<Candidate> cands;
  auto consider = [&](Vector theta) {
    project_to_ball(theta, radius);
    cands.push_back({obj.log_value(theta), std::move(theta)});
  };

  consider(Vector::Zero(dim));
  const double zn_norm = ds.z().row(n).norm();
  if (zn_norm > 0.0) {
    const Vector dir = ds.z().row(n).transpose() / zn_norm;
    consider(radius * dir);
    consider(-radius * dir);
  }
  for (const auto& s : extra_starts) {
    if (s.size() != dim) throw std::invalid_argument("brute_force_sensitivity: start point has wrong length");
    consider(s);
  }
  const std::size_t fixed = cands.size();
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index b = 0; b < budget; ++b) {
    Vector dir(dim);
    for (Index d = 0; d < dim; ++d) dir[d] = gauss(rng);
    const double norm = dir.norm();
    if (!(norm > 0.0)) continue;
    consider(dir * (radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim)) / norm));
  }

  // Ascend from every fixed start and the best few random samples.
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < fixed; ++i) starts.push_back(i);
  std::vector<std::size_t> order(cands.size() - fixed);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = fixed + i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cands[a].value > cands[b].value; });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) starts.push_back(order[i]);

  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best = std::max(best, c.value);

  for (const std::size_t s : starts) {
    Vector theta = cands[s].theta;
    Vector grad;
    double value = obj.log_value_and_grad(theta, grad);
    double step = 0.25 * radius / std::max(grad.norm(), 1e-12);
    for (int it = 0; it < 200 && step * grad.norm() > 1e-12 * radius; ++it) {
      Vector trial = theta + step * grad;
      project_to_ball(trial, radius);
      Vector trial_grad;
      const double trial_value = obj.log_value_and_grad(trial, trial_grad);
      if (trial_value > value) {
        theta = std::move(trial);
        grad = std::move(trial_grad);
        value = trial_value;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    best = std::max(best, value);
  }
  return std::exp(best);
}

// --- lower-bound constructions ----------------------------------------------

Dataset AdversarialDataset::as_dataset() const { return Dataset(z, Vector::Ones(z.rows())); }

AdversarialDataset adversarial_dataset(Index count, Index dim, double eps_prime, double alpha) {
  if (dim < 3) throw std::invalid_argument("adversarial_dataset: D must be >= 3");
  if (count < 1) throw std::invalid_argument("adversarial_dataset: K must be >= 1");
  if (!(eps_prime > 0.0 && eps_prime < 1.0)) throw std::invalid_argument("adversarial_dataset: eps_prime must lie in (0, 1)");
  if (!(alpha > 0.0)) throw std::invalid_argument("adversarial_dataset: alpha must be positive");

  RowMatrix v = RowMatrix::Zero(count, dim - 1);
  for (Index k = 0; k < count; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    v(k, 0) = std::cos(angle);
    v(k, 1) = std::sin(angle);
  }
  double max_dot = -1.0;
  for (Index a = 0; a < count; ++a)
    for (Index b = a + 1; b < count; ++b) max_dot = std::max(max_dot, v.row(a).dot(v.row(b)));

  AdversarialDataset out;
  out.separation = 1.0 - max_dot;
  out.delta = std::sqrt(eps_prime / 2.0);
  out.alpha = alpha;
  const double delta = out.delta;
  const double lift = std::sqrt(1.0 - delta * delta);
  out.z.resize(count, dim);
  for (Index k = 0; k < count; ++k) {
    out.z.row(k).head(dim - 1) = delta * v.row(k);
    out.z(k, dim - 1) = lift;
    Vector theta(dim);
    theta.head(dim - 1) = -alpha * delta * v.row(k).transpose();
    theta[dim - 1] = alpha * delta * delta * (1.0 - out.separation / 2.0) / lift;
    out.witnesses.push_back(std::move(theta));
  }
  return out;
}

double lower_bound_value(Index count, double eps, double eps_prime, double radius) {
  const double k = static_cast<double>(count);
  return k / (1.0 + (k - 1.0) * std::exp(-radius * eps * std::sqrt(eps_prime) / 4.0));
}

double matching_upper_value(Index count, double eps_prime, double radius) {
  const double k = static_cast<double>(count);
  return k / (1.0 + (k - 1.0) * std::exp(-radius * std::sqrt(2.0 * eps_prime)));
}

// --- expected bound under mixtures ------------------------------------------

MixtureBound mixture_expected_bound(const MixtureBoundSpec& spec, Index n) {
  const auto& comps = spec.components;
  if (comps.empty()) throw std::invalid_argument("mixture_expected_bound: no components");
  if (!(spec.r > 0.0 && spec.r < 0.5)) throw std::invalid_argument("mixture_expected_bound: r must lie in (0, 1/2)");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("mixture_expected_bound: radius must be positive");
  if (n < 1) throw std::invalid_argument("mixture_expected_bound: N must be >= 1");
  const Index dim = comps.front().mean.size();
  double pi_total = 0.0;
  for (const auto& c : comps) {
    if (c.mean.size() != dim || c.cov.rows() != dim || c.cov.cols() != dim)
      throw std::invalid_argument("mixture_expected_bound: inconsistent component dimensions");
    if (!(c.weight >= 0.0)) throw std::invalid_argument("mixture_expected_bound: negative mixture weight");
    if (!(std::abs(c.label_mean) <= 1.0)) throw std::invalid_argument("mixture_expected_bound: label mean outside [-1, 1]");
    const double scale = std::max(1.0, c.cov.cwiseAbs().maxCoeff());
    if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("mixture_expected_bound: covariance is not symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.cov, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
      throw std::invalid_argument("mixture_expected_bound: covariance is not positive semidefinite");
    pi_total += c.weight;
  }
  if (std::abs(pi_total - 1.0) > 1e-9) throw std::invalid_argument("mixture_expected_bound: weights must sum to 1");

  const auto m = static_cast<Index>(comps.size());
  MixtureBound out;
  out.a.resize(m);
  out.b.resize(m);
  for (Index i = 0; i < m; ++i) {
    const auto& ci = comps[static_cast<std::size_t>(i)];
    const double ii = ci.mean.squaredNorm();
    out.a[i] = ci.cov.trace() + (1.0 - ci.label_mean * ci.label_mean) * ii;
    double b = 0.0;
    for (const auto& cj : comps) {
      b += cj.weight * (cj.cov.trace() + ci.label_mean * ci.label_mean * ii -
                        2.0 * ci.label_mean * cj.label_mean * ci.mean.dot(cj.mean) + cj.mean.squaredNorm());
    }
    out.b[i] = b;
  }

  const double nn = static_cast<double>(n);
  const double slack = std::pow(nn, -spec.r);
  double inv = 1.0 / nn;
  double tail = 0.0;
  double limit_inv = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double pi = comps[static_cast<std::size_t>(i)].weight;
    limit_inv += pi * std::exp(-spec.radius * std::sqrt(out.b[i]));
    const double eta = std::max(pi - slack, 0.0);
    if (eta > 0.0) {
      inv += eta * std::exp(-spec.radius * std::sqrt(out.a[i] / (nn * eta) + out.b[i]));
      tail += nn * std::exp(-2.0 * std::pow(nn, 1.0 - 2.0 * spec.r));
    }
  }
  out.finite = 1.0 / inv + tail;
  out.limit = 1.0 / limit_inv;
  return out;
}

}  // namespace lrcoreset
