#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "lrcoreset/coreset.hpp"
#include "lrcoreset/inference.hpp"

using namespace lrcoreset;

namespace {

constexpr double kFlat = std::numeric_limits<double>::infinity();

WeightedDataset random_fixture(Index n, Index dim, std::uint64_t seed, bool weighted) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  RowMatrix x(n, dim);
  Vector y(n), w(n);
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) x(i, d) = g(rng);
    y[i] = g(rng) > 0 ? 1.0 : -1.0;
    w[i] = weighted ? u(rng) : 1.0;
  }
  return WeightedDataset(Dataset(x, y), w);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Two-sided Kolmogorov statistic of a sample against the standard normal.
double ks_statistic(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST_CASE("log-likelihood and gradient closed forms") {
  SUBCASE("theta = 0") {
    const WeightedDataset ds = random_fixture(30, 3, 1, true);
    const LogPosterior lp(ds, kFlat);
    const Vector zero = Vector::Zero(3);
    CHECK(lp.log_likelihood(zero) == doctest::Approx(-ds.total_weight() * std::log(2.0)).epsilon(1e-14));
    const Vector expect = 0.5 * (ds.z().transpose() * ds.weights());
    CHECK((lp.gradient(zero) - expect).norm() <= 1e-13 * expect.norm());
  }
  SUBCASE("single point") {
    RowMatrix x(1, 2);
    x << 1, 0;
    const LogPosterior lp(WeightedDataset(Dataset(x, Vector::Ones(1))), kFlat);
    Vector theta(2);
    theta << 1, 0;
    CHECK(lp.value(theta) == doctest::Approx(-std::log1p(std::exp(-1.0))).epsilon(1e-15));
    CHECK(lp.value(theta) == doctest::Approx(-0.313262).epsilon(1e-6));
    const Vector g = lp.gradient(theta);
    CHECK(g[0] == doctest::Approx(1.0 - 1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
    CHECK(g[0] == doctest::Approx(0.268941).epsilon(1e-6));
    CHECK(g[1] == 0.0);
  }
  SUBCASE("weight 2 equals two copies") {
    RowMatrix x(2, 3), x2(3, 3);
    x << 0.5, -1, 2, 1, 1, 0.3;
    x2 << x, x.row(1);
    Vector y(2), y2(3);
    y << 1, -1;
    y2 << 1, -1, -1;
    Vector w(2);
    w << 1, 2;
    const LogPosterior a(WeightedDataset(Dataset(x, y), w), 4.0);
    const LogPosterior b(WeightedDataset(Dataset(x2, y2)), 4.0);
    Rng rng(2);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
      const Vector theta = Vector::NullaryExpr(3, [&](Index) { return g(rng); });
      CHECK(a.value(theta) == doctest::Approx(b.value(theta)).epsilon(1e-12));
      CHECK((a.gradient(theta) - b.gradient(theta)).norm() <= 1e-12 * std::max(1.0, b.gradient(theta).norm()));
    }
  }
  SUBCASE("value_and_gradient agrees with the separate calls") {
    const LogPosterior lp(random_fixture(40, 4, 3, true), 2.0);
    Vector theta(4);
    theta << 0.3, -0.7, 1.1, 0.0;
    Vector grad;
    const double v = lp.value_and_gradient(theta, grad);
    CHECK(v == doctest::Approx(lp.value(theta)).epsilon(1e-14));
    CHECK((grad - lp.gradient(theta)).norm() <= 1e-12 * grad.norm());
  }
  SUBCASE("larger margins never lower the log-likelihood") {
    const WeightedDataset ds = random_fixture(25, 2, 4, false);
    const LogPosterior lp(ds, kFlat);
    Vector theta(2);
    theta << 0.4, 0.9;
    // Scaling theta up raises every positive margin; restrict to rows with one.
    double prev = -kFlat;
    for (double s : {0.5, 1.0, 2.0, 4.0}) {
      double ll = 0.0;
      for (Index n = 0; n < ds.size(); ++n) {
        const double margin = ds.z().row(n).dot(theta);
        if (margin > 0) ll -= phi(s * margin);
      }
      CHECK(ll >= prev);
      prev = ll;
    }
  }
}

TEST_CASE("gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const LogPosterior lp(random_fixture(50, 5, seed, seed % 2 == 1), seed % 3 == 0 ? kFlat : 4.0);
    Rng rng(seed + 100);
    std::normal_distribution<double> g(0.0, 1.0);
    const Vector theta = Vector::NullaryExpr(5, [&](Index) { return g(rng); });
    CHECK(check_gradient(lp, theta, 1e-5) < 1e-6);
  }
  SUBCASE("symmetric data at theta = 0") {
    // Dyadic entries keep every partial sum exact.
    const WeightedDataset half = random_fixture(20, 3, 8, false);
    const RowMatrix dyadic = (half.data().x() * 8.0).array().round() / 8.0;
    RowMatrix x(40, 3);
    x << dyadic, -dyadic;
    Vector y(40);
    y << half.data().y(), half.data().y();
    const LogPosterior lp(WeightedDataset(Dataset(x, y)), kFlat);
    const Vector grad = lp.gradient(Vector::Zero(3));
    CHECK(grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(check_gradient(lp, Vector::Zero(3)) < 1e-6);
  }
  SUBCASE("prior only") {
    const LogPosterior lp = LogPosterior::prior_only(3, 2.0);
    Vector theta(3);
    theta << 1.0, -3.0, 0.5;
    CHECK(lp.gradient(theta) == -theta / 4.0);
    CHECK(check_gradient(lp, theta) < 1e-6);
  }
  CHECK_THROWS_AS(LogPosterior::prior_only(2, 0.0), std::invalid_argument);
}

TEST_CASE("MALA on a standard Gaussian") {
  const LogPosterior lp = LogPosterior::prior_only(2, 1.0);
  MalaOptions opts;
  opts.iterations = 20000;
  Rng rng(42);
  const PosteriorChain chain = mala_sample(lp, opts, rng);
  REQUIRE(chain.samples.rows() == 10000);
  CHECK(chain.accept_prob.size() == 20000);
  CHECK(chain.step_size.size() == 20000);
  for (Index d = 0; d < 2; ++d) {
    const double mean = chain.samples.col(d).mean();
    const double var = (chain.samples.col(d).array() - mean).square().mean();
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.1);
  }
  CHECK(std::abs(chain.final_quarter_acceptance - 0.574) <= 0.06);
  CHECK(chain.acceptance_rate >= 0.0);
  CHECK(chain.acceptance_rate <= 1.0);
  for (std::size_t t = 10000; t < 20000; ++t) CHECK(chain.step_size[t] == chain.frozen_step);

  SUBCASE("a 100x initial step adapts to a comparable step") {
    MalaOptions wide = opts;
    wide.step0 = 100.0 * 0.1 / std::sqrt(2.0);
    Rng rng2(42);
    const PosteriorChain other = mala_sample(lp, wide, rng2);
    const double ratio = other.frozen_step / chain.frozen_step;
    CHECK(ratio < 2.0);
    CHECK(ratio > 0.5);
  }
}

TEST_CASE("frozen-step MALA passes a KS test on a 1-D Gaussian") {
  const LogPosterior lp = LogPosterior::prior_only(1, 1.0);
  MalaOptions opts;
  opts.iterations = 1000000;
  opts.adapt = false;
  opts.step0 = 1.2;
  Rng rng(7);
  const PosteriorChain chain = mala_sample(lp, opts, rng);
  // Thin so the retained draws are close to independent.
  std::vector<double> xs;
  for (Index i = 0; i < chain.samples.rows(); i += 100) xs.push_back(chain.samples(i, 0));
  const double n = static_cast<double>(xs.size());
  // Asymptotic critical value at alpha = 0.001: sqrt(-ln(alpha / 2) / 2).
  const double critical = std::sqrt(-std::log(0.0005) / 2.0) / std::sqrt(n);
  CHECK(ks_statistic(xs) < critical);
}

TEST_CASE("full data and its trivial coreset give the same chain") {
  const WeightedDataset ds = random_fixture(200, 3, 5, false);
  const Dataset& data = ds.data();
  std::vector<Index> src(200);
  for (Index i = 0; i < 200; ++i) src[static_cast<std::size_t>(i)] = i;
  const Coreset trivial(data.x(), data.y(), Vector::Ones(200), src, CoresetMeta{});
  MalaOptions opts;
  opts.iterations = 200;
  opts.adapt = false;
  opts.step0 = 0.05;
  Rng r1(3), r2(3);
  const PosteriorChain a = mala_sample(LogPosterior(ds, 4.0), opts, r1);
  const PosteriorChain b = mala_sample(LogPosterior(trivial.as_weighted(), 4.0), opts, r2);
  CHECK((a.samples - b.samples).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("sampler errors, chains and chain files") {
  const LogPosterior lp = LogPosterior::prior_only(2, 1.0);
  Rng rng(1);
  MalaOptions odd;
  odd.iterations = 7;
  CHECK_THROWS_AS(mala_sample(lp, odd, rng), std::invalid_argument);
  odd.iterations = 0;
  CHECK_THROWS_AS(mala_sample(lp, odd, rng), std::invalid_argument);

  MalaOptions bad;
  bad.iterations = 10;
  bad.theta0 = Vector::Constant(2, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_WITH_AS(mala_sample(lp, bad, rng), doctest::Contains("theta"), Error);

  MalaOptions opts;
  opts.iterations = 400;
  const auto one = mala_chains(lp, opts, 11, 3, 1);
  const auto many = mala_chains(lp, opts, 11, 3, 3);
  REQUIRE(one.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(one[i].samples == many[i].samples);
  CHECK(one[0].samples != one[1].samples);
  CHECK(one[1].seed == derive_seed(11, std::uint64_t{1}));

  opts.ball_radius = 0.5;
  Rng r(4);
  const PosteriorChain c = mala_sample(lp, opts, r);
  Index outside = 0;
  for (Index i = 0; i < c.samples.rows(); ++i) outside += c.samples.row(i).norm() > 0.5;
  CHECK(c.out_of_ball_fraction == doctest::Approx(static_cast<double>(outside) / c.samples.rows()));

  const auto path = std::filesystem::temp_directory_path() / "lrcoreset_test_chain.csv";
  write_chain(path, c.samples);
  CHECK(read_chain(path) == c.samples);
  std::filesystem::remove(path);
}
