#include "lrcoreset/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrcoreset/parallel.hpp"
#include "lrcoreset/sensitivity.hpp"

namespace lrcoreset {

LogPosterior::LogPosterior(Index dim, double prior_scale) : dim_(dim), prior_scale_(prior_scale), z_(0, dim), w_(0) {
  if (dim < 1) throw std::invalid_argument("log posterior: dimension must be >= 1");
  if (!(prior_scale > 0.0)) throw std::invalid_argument("log posterior: prior scale must be positive");
}

LogPosterior::LogPosterior(const WeightedDataset& data, double prior_scale) : LogPosterior(data.dim(), prior_scale) {
  z_ = data.z();
  w_ = data.weights();
}

LogPosterior LogPosterior::prior_only(Index dim, double prior_scale) { return LogPosterior(dim, prior_scale); }

double LogPosterior::log_likelihood(const Vector& theta) const {
  const Vector s = z_ * theta;
  double total = 0.0;
  for (Index n = 0; n < s.size(); ++n) total -= w_[n] * phi(s[n]);
  return total;
}

double LogPosterior::log_prior(const Vector& theta) const {
  if (std::isinf(prior_scale_)) return 0.0;
  return -0.5 * theta.squaredNorm() / (prior_scale_ * prior_scale_);
}

Vector LogPosterior::gradient(const Vector& theta) const {
  Vector g;
  value_and_gradient(theta, g);
  return g;
}

double LogPosterior::value_and_gradient(const Vector& theta, Vector& grad) const {
  if (theta.size() != dim_) throw std::invalid_argument("log posterior: theta has wrong length");
  const Vector s = z_ * theta;
  Vector coef(s.size());
  double total = 0.0;
  for (Index n = 0; n < s.size(); ++n) {
    total -= w_[n] * phi(s[n]);
    coef[n] = w_[n] * logistic(-s[n]);
  }
  grad.noalias() = z_.transpose() * coef;
  if (!std::isinf(prior_scale_)) grad -= theta / (prior_scale_ * prior_scale_);
  return total + log_prior(theta);
}

double log_likelihood(const WeightedDataset& ds, const Vector& theta) {
  if (theta.size() != ds.dim()) throw std::invalid_argument("log_likelihood: theta has wrong length");
  const Vector s = ds.z() * theta;
  double total = 0.0;
  for (Index n = 0; n < s.size(); ++n) total -= ds.weights()[n] * phi(s[n]);
  return total;
}

// --- MALA -------------------------------------------------------------------

namespace {

std::string describe(const Vector& theta) {
  std::ostringstream os;
  os << '(';
  for (Index d = 0; d < theta.size(); ++d) os << (d ? ", " : "") << theta[d];
  os << ')';
  return os.str();
}

}  // namespace

nlohmann::json PosteriorChain::diagnostics() const {
  return {{"iterations", total_iterations},
          {"samples", samples.rows()},
          {"acceptance_rate", acceptance_rate},
          {"final_quarter_acceptance", final_quarter_acceptance},
          {"frozen_step", frozen_step},
          {"out_of_ball_fraction", out_of_ball_fraction},
          {"seed", seed}};
}

PosteriorChain mala_sample(const LogPosterior& lp, const MalaOptions& opts, Rng& rng) {
  const Index t_total = opts.iterations;
  if (t_total < 2 || t_total % 2 != 0) throw std::invalid_argument("mala_sample: iterations must be even and >= 2");
  const Index dim = lp.dim();
  if (opts.theta0 && opts.theta0->size() != dim) throw std::invalid_argument("mala_sample: theta0 has wrong length");
  double h = opts.step0 ? *opts.step0 : 0.1 / std::sqrt(static_cast<double>(dim));
  if (!(h > 0.0)) throw std::invalid_argument("mala_sample: initial step must be positive");

  Vector theta = opts.theta0 ? *opts.theta0 : Vector::Zero(dim);
  Vector grad;
  double value = lp.value_and_gradient(theta, grad);
  if (!std::isfinite(value) || !grad.allFinite())
    throw Error("mala_sample: non-finite log posterior or gradient at theta = " + describe(theta));

  const Index half = t_total / 2;
  PosteriorChain chain;
  chain.total_iterations = t_total;
  chain.samples.resize(t_total - half, dim);
  chain.accept_prob.reserve(static_cast<std::size_t>(t_total));
  chain.step_size.reserve(static_cast<std::size_t>(t_total));
  chain.accepted.reserve(static_cast<std::size_t>(t_total));

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector noise(dim);
  Vector prop_grad;
  double log_h = std::log(h);
  for (Index t = 1; t <= t_total; ++t) {
    for (Index d = 0; d < dim; ++d) noise[d] = gauss(rng);
    const double h2 = h * h;
    const Vector prop = theta + 0.5 * h2 * grad + h * noise;
    const double prop_value = lp.value_and_gradient(prop, prop_grad);
    if (!std::isfinite(prop_value) || !prop_grad.allFinite())
      throw Error("mala_sample: non-finite log posterior or gradient at theta = " + describe(prop));

    const double log_fwd = -0.5 * noise.squaredNorm();
    const double log_bwd = -(theta - prop - 0.5 * h2 * prop_grad).squaredNorm() / (2.0 * h2);
    const double log_alpha = prop_value - value + log_bwd - log_fwd;
    const double alpha = log_alpha >= 0.0 ? 1.0 : std::exp(log_alpha);
    const bool accept = unif(rng) < alpha;
    chain.accept_prob.push_back(alpha);
    chain.step_size.push_back(h);
    chain.accepted.push_back(accept ? 1 : 0);
    if (accept) {
      theta = prop;
      grad = prop_grad;
      value = prop_value;
    }
    if (t <= half) {
      if (opts.adapt) {
        log_h += std::pow(static_cast<double>(t), -opts.adapt_exponent) * (alpha - opts.target_accept);
        h = std::exp(log_h);
      }
    } else {
      chain.samples.row(t - half - 1) = theta.transpose();
    }
  }

  chain.frozen_step = h;
  double acc = 0.0, quarter = 0.0;
  const Index q_start = t_total - t_total / 4;
  for (Index t = half; t < t_total; ++t) {
    acc += chain.accepted[static_cast<std::size_t>(t)];
    if (t >= q_start) quarter += chain.accepted[static_cast<std::size_t>(t)];
  }
  chain.acceptance_rate = acc / static_cast<double>(t_total - half);
  chain.final_quarter_acceptance = quarter / static_cast<double>(t_total - q_start);
  if (opts.ball_radius) {
    const auto outside = (chain.samples.rowwise().norm().array() > *opts.ball_radius).count();
    chain.out_of_ball_fraction = static_cast<double>(outside) / static_cast<double>(chain.samples.rows());
  }
  return chain;
}

std::vector<PosteriorChain> mala_chains(const LogPosterior& lp, const MalaOptions& opts, std::uint64_t root_seed,
                                        Index chains, unsigned workers) {
  if (chains < 1) throw std::invalid_argument("mala_chains: need at least one chain");
  std::vector<PosteriorChain> out(static_cast<std::size_t>(chains));
  parallel_tasks(out.size(), workers, [&](std::size_t i) {
    const auto seed = derive_seed(root_seed, static_cast<std::uint64_t>(i));
    Rng rng(seed);
    out[i] = mala_sample(lp, opts, rng);
    out[i].seed = seed;
  });
  return out;
}

double check_gradient(const LogPosterior& lp, const Vector& theta, double h_fd) {
  if (!(h_fd > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");
  const Vector g = lp.gradient(theta);
  double worst = 0.0;
  Vector probe = theta;
  for (Index d = 0; d < theta.size(); ++d) {
    probe[d] = theta[d] + h_fd;
    const double up = lp.value(probe);
    probe[d] = theta[d] - h_fd;
    const double down = lp.value(probe);
    probe[d] = theta[d];
    const double fd = (up - down) / (2.0 * h_fd);
    worst = std::max(worst, std::abs(fd - g[d]) / std::max(1.0, std::abs(g[d])));
  }
  return worst;
}

// --- chain io ---------------------------------------------------------------

void write_chain_csv(std::ostream& out, const RowMatrix& samples) {
  for (Index d = 0; d < samples.cols(); ++d) out << (d ? "," : "") << "theta" << d;
  out << '\n';
  char buf[40];
  for (Index s = 0; s < samples.rows(); ++s) {
    for (Index d = 0; d < samples.cols(); ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", samples(s, d));
      out << (d ? "," : "") << buf;
    }
    out << '\n';
  }
}

void write_chain(const std::filesystem::path& path, const RowMatrix& samples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_chain_csv(out, samples);
}

RowMatrix read_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("theta0", 0) != 0) throw ParseError(path.string(), 1, "expected header theta0,...");
  const auto dim = static_cast<Index>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> values;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Index fields = 0;
    std::size_t start = 0;
    while (start <= line.size()) {
      auto end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      double v = 0.0;
      const auto [p, ec] = std::from_chars(line.data() + start, line.data() + end, v);
      if (ec != std::errc{} || p != line.data() + end) throw ParseError(path.string(), lineno, "bad number");
      values.push_back(v);
      ++fields;
      start = end + 1;
    }
    if (fields != dim) throw ParseError(path.string(), lineno, "wrong field count");
  }
  const auto rows = static_cast<Index>(values.size()) / dim;
  if (rows == 0) throw Error(path.string() + ": empty chain");
  return Eigen::Map<RowMatrix>(values.data(), rows, dim);
}

}  // namespace lrcoreset
