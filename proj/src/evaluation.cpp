#include "lrcoreset/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include "lrcoreset/inference.hpp"
#include "lrcoreset/parallel.hpp"
#include "lrcoreset/sensitivity.hpp"

namespace lrcoreset {

namespace {

void check_mmd_inputs(const RowMatrix& a, const RowMatrix& b, int degree) {
  if (a.rows() < 1 || b.rows() < 1) throw std::invalid_argument("polynomial_mmd: empty sample set");
  if (a.cols() != b.cols()) throw std::invalid_argument("polynomial_mmd: dimension mismatch");
  if (degree < 1) throw std::invalid_argument("polynomial_mmd: degree must be >= 1");
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// Sum over all pairs of (1 + x.y)^degree, row blocks reduced in block order.
double kernel_sum(const RowMatrix& a, const RowMatrix& b, int degree, unsigned workers) {
  constexpr Index block = 256;
  const Index blocks = (a.rows() + block - 1) / block;
  std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
  parallel_tasks(partial.size(), workers, [&](std::size_t i) {
    const Index lo = static_cast<Index>(i) * block;
    const Index rows = std::min(block, a.rows() - lo);
    const Eigen::MatrixXd g = a.middleRows(lo, rows) * b.transpose();
    double s = 0.0;
    for (Index c = 0; c < g.cols(); ++c)
      for (Index r = 0; r < g.rows(); ++r) s += std::pow(1.0 + g(r, c), degree);
    partial[i] = s;
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace

double polynomial_mmd_pairwise(const RowMatrix& a, const RowMatrix& b, int degree, unsigned workers) {
  check_mmd_inputs(a, b, degree);
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  const double mmd2 = kernel_sum(a, a, degree, workers) / (na * na) + kernel_sum(b, b, degree, workers) / (nb * nb) -
                      2.0 * kernel_sum(a, b, degree, workers) / (na * nb);
  return std::sqrt(std::max(mmd2, 0.0));
}

double polynomial_mmd_moments(const RowMatrix& a, const RowMatrix& b, int degree) {
  check_mmd_inputs(a, b, degree);
  const Index dim = a.cols();
  // Mean tensor powers of one sample set, flattened: T_j has dim^j entries.
  auto moments = [&](const RowMatrix& s) {
    std::vector<Vector> t(static_cast<std::size_t>(degree) + 1);
    Index len = 1;
    for (int j = 1; j <= degree; ++j) {
      len *= dim;
      t[static_cast<std::size_t>(j)] = Vector::Zero(len);
    }
    Vector power, next;
    for (Index r = 0; r < s.rows(); ++r) {
      power = s.row(r).transpose();
      t[1] += power;
      for (int j = 2; j <= degree; ++j) {
        next.resize(power.size() * dim);
        for (Index p = 0; p < power.size(); ++p) next.segment(p * dim, dim) = power[p] * s.row(r).transpose();
        power.swap(next);
        t[static_cast<std::size_t>(j)] += power;
      }
    }
    for (int j = 1; j <= degree; ++j) t[static_cast<std::size_t>(j)] /= static_cast<double>(s.rows());
    return t;
  };
  const auto ta = moments(a);
  const auto tb = moments(b);
  double mmd2 = 0.0;
  for (int j = 1; j <= degree; ++j)
    mmd2 += binomial(degree, j) * (ta[static_cast<std::size_t>(j)] - tb[static_cast<std::size_t>(j)]).squaredNorm();
  return std::sqrt(std::max(mmd2, 0.0));
}

double polynomial_mmd(const RowMatrix& a, const RowMatrix& b, int degree, unsigned workers) {
  check_mmd_inputs(a, b, degree);
  const double dim = static_cast<double>(a.cols());
  double tensor = 0.0;
  for (int j = 1; j <= degree; ++j) tensor += std::pow(dim, j);
  const double sa = static_cast<double>(a.rows());
  const double sb = static_cast<double>(b.rows());
  const double moment_cost = (sa + sb) * tensor;
  const double pair_cost = (sa * sa + sb * sb + sa * sb) * dim;
  if (tensor <= 1e7 && moment_cost <= pair_cost) return polynomial_mmd_moments(a, b, degree);
  return polynomial_mmd_pairwise(a, b, degree, workers);
}

RowMatrix thin_to(const RowMatrix& samples, Index count) {
  if (count < 1) throw std::invalid_argument("thin_to: count must be >= 1");
  const Index n = samples.rows();
  if (count >= n) return samples;
  RowMatrix out(count, samples.cols());
  for (Index i = 0; i < count; ++i) out.row(i) = samples.row(i * n / count);
  return out;
}

double chain_mmd(const RowMatrix& reference, const RowMatrix& approx, int degree, unsigned workers) {
  const Index s = std::min(reference.rows(), approx.rows());
  return polynomial_mmd(thin_to(reference, s), thin_to(approx, s), degree, workers);
}

double neg_test_log_likelihood(const RowMatrix& samples, const Dataset& test, unsigned workers) {
  if (samples.rows() < 1) throw std::invalid_argument("neg_test_log_likelihood: empty chain");
  if (samples.cols() != test.dim()) throw std::invalid_argument("neg_test_log_likelihood: dimension mismatch");
  const Index n = test.size();
  const double log_s = std::log(static_cast<double>(samples.rows()));
  std::vector<double> log_pred(static_cast<std::size_t>(n));
  parallel_chunks(static_cast<std::size_t>(n), workers, [&](std::size_t lo, std::size_t hi, unsigned) {
    Vector margins;
    Vector v(samples.rows());
    for (std::size_t t = lo; t < hi; ++t) {
      margins.noalias() = samples * test.z().row(static_cast<Index>(t)).transpose();
      double top = -std::numeric_limits<double>::infinity();
      for (Index s = 0; s < margins.size(); ++s) {
        v[s] = -phi(margins[s]);
        top = std::max(top, v[s]);
      }
      double acc = 0.0;
      for (Index s = 0; s < v.size(); ++s) acc += std::exp(v[s] - top);
      log_pred[t] = top + std::log(acc) - log_s;
    }
  });
  double total = 0.0;
  for (double lp : log_pred) total += lp;
  return -total / static_cast<double>(n);
}

GridCheck verify_epsilon_coreset(const WeightedDataset& full, const WeightedDataset& approx, double radius,
                                 Index grid_size, Rng& rng) {
  if (grid_size < 1) throw std::invalid_argument("verify_epsilon_coreset: grid_size must be >= 1");
  if (full.dim() != approx.dim()) throw std::invalid_argument("verify_epsilon_coreset: dimension mismatch");
  if (!(radius > 0.0)) throw std::invalid_argument("verify_epsilon_coreset: radius must be positive");
  const Index dim = full.dim();
  GridCheck out;
  auto probe = [&](const Vector& theta) {
    const double l = log_likelihood(full, theta);
    const double lt = log_likelihood(approx, theta);
    const double err = std::abs(l - lt) / std::abs(l);
    if (out.points == 0 || err > out.max_rel_err) {
      out.max_rel_err = err;
      out.worst_theta = theta;
    }
    ++out.points;
  };
  probe(Vector::Zero(dim));
  for (Index d = 0; d < dim; ++d) {
    Vector e = Vector::Zero(dim);
    e[d] = radius;
    probe(e);
    probe(-e);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector theta(dim);
  for (Index g = 0; g < grid_size; ++g) {
    for (Index d = 0; d < dim; ++d) theta[d] = gauss(rng);
    const double norm = theta.norm();
    const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(dim));
    if (norm > 0.0) theta *= r / norm;
    probe(theta);
  }
  return out;
}

GridCheck verify_epsilon_coreset(const Dataset& full, const Coreset& cs, double radius, Index grid_size, Rng& rng) {
  return verify_epsilon_coreset(WeightedDataset(full), cs.as_weighted(), radius, grid_size, rng);
}

Coreset uniform_baseline(const Dataset& ds, Index m, Rng& rng) {
  const Index n = ds.size();
  if (m < 1) throw std::invalid_argument("uniform_baseline: M must be >= 1");
  if (m > n) throw std::invalid_argument("uniform_baseline: M exceeds the dataset size");
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  RowMatrix x(m, ds.dim());
  Vector y(m);
  for (Index i = 0; i < m; ++i) {
    x.row(i) = ds.x().row(idx[static_cast<std::size_t>(i)]);
    y[i] = ds.y()[idx[static_cast<std::size_t>(i)]];
  }
  CoresetMeta meta;
  meta.method = "uniform";
  meta.target_size = m;
  meta.source_size = n;
  meta.source_weight = static_cast<double>(n);
  return Coreset(std::move(x), std::move(y), Vector::Constant(m, static_cast<double>(n) / static_cast<double>(m)),
                 std::move(idx), meta);
}

// --- quadrature ------------------------------------------------------------

namespace {

// Running log-sum-exp.
struct LogSum {
  double top = -std::numeric_limits<double>::infinity();
  double acc = 0.0;

  void add(double v) {
    if (v <= top) {
      acc += std::exp(v - top);
    } else {
      acc = acc * std::exp(top - v) + 1.0;
      top = v;
    }
  }
  double value() const { return top + std::log(acc); }
};

struct TrapezoidPair {
  double ln_e;
  double ln_e_tilde;
};

TrapezoidPair trapezoid(Index dim, double sigma0, Index intervals, const LogLikelihoodFn& l,
                        const LogLikelihoodFn& l_tilde, double eps) {
  const double bound = 10.0 * sigma0;
  const double h = 2.0 * bound / static_cast<double>(intervals);
  const double log_norm = -0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * sigma0 * sigma0);
  const double log_h = std::log(h);
  const double log_half = std::log(0.5);
  LogSum e, et;
  Vector theta(dim);
  auto node = [&](double log_w) {
    const double a = l(theta);
    const double b = l_tilde(theta);
    if (!std::isfinite(a) || !std::isfinite(b) || a > 0.0 || b > 0.0)
      throw std::invalid_argument("quadrature_marginal_check: log-likelihoods must be finite and non-positive");
    if (std::abs(a - b) > eps * std::abs(a) * (1.0 + 1e-12) + 1e-300)
      throw std::invalid_argument("quadrature_marginal_check: |L - L~| <= eps |L| violated on the grid");
    const double base = log_w + log_norm - 0.5 * theta.squaredNorm() / (sigma0 * sigma0);
    e.add(base + a);
    et.add(base + b);
  };
  for (Index i = 0; i <= intervals; ++i) {
    theta[0] = -bound + static_cast<double>(i) * h;
    const double wi = log_h + ((i == 0 || i == intervals) ? log_half : 0.0);
    if (dim == 1) {
      node(wi);
      continue;
    }
    for (Index j = 0; j <= intervals; ++j) {
      theta[1] = -bound + static_cast<double>(j) * h;
      node(wi + log_h + ((j == 0 || j == intervals) ? log_half : 0.0));
    }
  }
  return {e.value(), et.value()};
}

}  // namespace

QuadratureResult quadrature_marginal_check(Index dim, double sigma0, const LogLikelihoodFn& l,
                                           const LogLikelihoodFn& l_tilde, double eps, double rel_tol) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("quadrature_marginal_check: dimension must be 1 or 2");
  if (!(sigma0 > 0.0)) throw std::invalid_argument("quadrature_marginal_check: prior scale must be positive");
  if (!(eps >= 0.0)) throw std::invalid_argument("quadrature_marginal_check: eps must be non-negative");
  const Index max_intervals = dim == 1 ? (Index{1} << 20) : (Index{1} << 11);
  Index n = 32;
  TrapezoidPair prev = trapezoid(dim, sigma0, n, l, l_tilde, eps);
  while (n < max_intervals) {
    n *= 2;
    const TrapezoidPair cur = trapezoid(dim, sigma0, n, l, l_tilde, eps);
    // Relative tolerance, floored at absolute rel_tol when ln E is near 0.
    const bool done = std::abs(cur.ln_e - prev.ln_e) <= rel_tol * std::max(1.0, std::abs(cur.ln_e)) &&
                      std::abs(cur.ln_e_tilde - prev.ln_e_tilde) <= rel_tol * std::max(1.0, std::abs(cur.ln_e_tilde));
    prev = cur;
    if (done) {
      QuadratureResult out;
      out.ln_e = cur.ln_e;
      out.ln_e_tilde = cur.ln_e_tilde;
      out.nodes_per_axis = n + 1;
      out.pass = std::abs(cur.ln_e - cur.ln_e_tilde) <= eps * std::abs(cur.ln_e) + 1e-6;
      return out;
    }
  }
  throw Error("quadrature_marginal_check: trapezoid rule did not converge");
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"M", m}, {"method", method}, {"seed", seed}};
  if (mmd) j["mmd"] = *mmd;
  if (neg_test_ll) j["neg_test_ll"] = *neg_test_ll;
  if (grid_rel_err_max) j["grid_rel_err_max"] = *grid_rel_err_max;
  return j;
}

}  // namespace lrcoreset
