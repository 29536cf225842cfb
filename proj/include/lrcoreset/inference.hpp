#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lrcoreset/common.hpp"
#include "lrcoreset/data.hpp"

namespace lrcoreset {

/// Weighted logistic log-likelihood plus an isotropic Gaussian prior
/// N(0, prior_scale^2 I). An infinite prior scale means a flat prior; an
/// empty data set leaves only the prior.
class LogPosterior {
 public:
  LogPosterior(const WeightedDataset& data, double prior_scale);
  static LogPosterior prior_only(Index dim, double prior_scale);

  Index dim() const noexcept { return dim_; }
  Index size() const noexcept { return z_.rows(); }
  double prior_scale() const noexcept { return prior_scale_; }
  const RowMatrix& z() const noexcept { return z_; }
  const Vector& weights() const noexcept { return w_; }

  /// -sum_n w_n phi(Z_n . theta)
  double log_likelihood(const Vector& theta) const;
  /// Log prior density up to its normalizing constant.
  double log_prior(const Vector& theta) const;
  double value(const Vector& theta) const { return log_likelihood(theta) + log_prior(theta); }
  Vector gradient(const Vector& theta) const;
  /// Value and gradient of the log posterior in one pass over the data.
  double value_and_gradient(const Vector& theta, Vector& grad) const;

 private:
  LogPosterior(Index dim, double prior_scale);

  Index dim_;
  double prior_scale_;
  RowMatrix z_;
  Vector w_;
};

/// Log-likelihood of a weighted dataset at theta.
double log_likelihood(const WeightedDataset& ds, const Vector& theta);

struct MalaOptions {
  Index iterations = 10000;                    // T, even
  std::optional<Vector> theta0;                // defaults to 0
  std::optional<double> step0;                 // defaults to 0.1 / sqrt(D)
  double target_accept = 0.574;
  double adapt_exponent = 0.6;                 // log h += t^{-exponent} (alpha_t - target)
  bool adapt = true;                           // false keeps h = step0 throughout
  std::optional<double> ball_radius;           // for the out-of-ball diagnostic
};

struct PosteriorChain {
  RowMatrix samples;               // post-burn-in states, S = T - T/2 rows
  std::vector<double> accept_prob; // alpha_t for every iteration
  std::vector<double> step_size;   // h used at every iteration
  std::vector<char> accepted;
  double frozen_step = 0.0;
  double acceptance_rate = 0.0;    // over the sampling half
  double final_quarter_acceptance = 0.0;
  double out_of_ball_fraction = 0.0;
  std::uint64_t seed = 0;
  Index total_iterations = 0;

  Index dim() const noexcept { return samples.cols(); }
  nlohmann::json diagnostics() const;
};

/// Adaptive Metropolis-adjusted Langevin sampler. Proposal
/// theta' = theta + (h^2 / 2) grad log pi(theta) + h xi with a
/// Metropolis-Hastings correction for the asymmetric Gaussian proposal.
/// During the first T/2 iterations log h moves toward the target acceptance
/// with a Robbins-Monro step t^{-0.6}; h is frozen afterwards and the second
/// half is returned as samples.
PosteriorChain mala_sample(const LogPosterior& lp, const MalaOptions& opts, Rng& rng);

/// Independent chains with seeds derived from root_seed, run concurrently.
std::vector<PosteriorChain> mala_chains(const LogPosterior& lp, const MalaOptions& opts, std::uint64_t root_seed,
                                        Index chains, unsigned workers = 1);

/// Largest per-coordinate |fd - g| / max(1, |g|) between central finite
/// differences of the log posterior and its analytic gradient.
double check_gradient(const LogPosterior& lp, const Vector& theta, double h_fd = 1e-5);

/// One row per sample, header theta0,...,theta{D-1}.
void write_chain_csv(std::ostream& out, const RowMatrix& samples);
void write_chain(const std::filesystem::path& path, const RowMatrix& samples);
RowMatrix read_chain(const std::filesystem::path& path);

}  // namespace lrcoreset
