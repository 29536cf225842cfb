#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "lrcoreset/coreset.hpp"
#include "lrcoreset/evaluation.hpp"
#include "lrcoreset/inference.hpp"

using namespace lrcoreset;

namespace {

RowMatrix normal_rows(Index s, Index dim, Rng& rng, double shift = 0.0) {
  std::normal_distribution<double> g(shift, 1.0);
  RowMatrix a(s, dim);
  for (Index i = 0; i < s; ++i)
    for (Index d = 0; d < dim; ++d) a(i, d) = g(rng);
  return a;
}

Dataset labelled_rows(Index n, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  RowMatrix x = normal_rows(n, dim, rng);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = x(i, 0) + 0.5 * g(rng) > 0 ? 1.0 : -1.0;
  return Dataset(x, y);
}

// Composite Simpson rule for ln of int exp(f(t)) N(t; 0, s^2) dt on [-10s, 10s].
double simpson_log_evidence(const std::function<double(double)>& f, double s, int intervals) {
  const double a = -10 * s, h = 20 * s / intervals;
  std::vector<double> logs(static_cast<std::size_t>(intervals) + 1);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= intervals; ++i) {
    const double t = a + i * h;
    const double coef = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    logs[static_cast<std::size_t>(i)] =
        std::log(coef) + f(t) - 0.5 * t * t / (s * s) - std::log(s * std::sqrt(2 * std::numbers::pi));
    top = std::max(top, logs[static_cast<std::size_t>(i)]);
  }
  double acc = 0.0;
  for (double v : logs) acc += std::exp(v - top);
  return top + std::log(acc * h / 3.0);
}

}  // namespace

TEST_CASE("polynomial MMD") {
  SUBCASE("hand values") {
    // k(0,0) = 1, k(1,1) = 8, k(0,1) = 1.
    RowMatrix a(1, 1), b(1, 1);
    a << 0.0;
    b << 1.0;
    CHECK(polynomial_mmd(a, b) == doctest::Approx(std::sqrt(7.0)).epsilon(1e-14));
    CHECK(polynomial_mmd_pairwise(a, b) == doctest::Approx(std::sqrt(7.0)).epsilon(1e-14));
    CHECK(polynomial_mmd_moments(a, b) == doctest::Approx(std::sqrt(7.0)).epsilon(1e-14));
    CHECK(polynomial_mmd(a, a) == 0.0);
  }
  SUBCASE("symmetry, identity and agreement of the two routes") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      const RowMatrix a = normal_rows(150 + trial, 4, rng);
      const RowMatrix b = normal_rows(90, 4, rng, 0.3);
      const double ab = polynomial_mmd(a, b), ba = polynomial_mmd(b, a);
      CHECK(std::abs(ab - ba) <= 1e-12 * std::max(1.0, ab));
      CHECK(polynomial_mmd(a, a) <= 1e-6);
      CHECK(ab >= polynomial_mmd(a, a));
      const double pw = polynomial_mmd_pairwise(a, b, 3, 2);
      CHECK(polynomial_mmd_moments(a, b) == doctest::Approx(pw).epsilon(1e-9));
      CHECK(polynomial_mmd_moments(a, b, 2) == doctest::Approx(polynomial_mmd_pairwise(a, b, 2)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(polynomial_mmd(normal_rows(3, 2, rng), normal_rows(3, 3, rng)), std::invalid_argument);
  }
  SUBCASE("worker count does not change the pairwise route") {
    Rng rng(8);
    const RowMatrix a = normal_rows(700, 3, rng), b = normal_rows(500, 3, rng, 0.1);
    CHECK(polynomial_mmd_pairwise(a, b, 3, 1) == polynomial_mmd_pairwise(a, b, 3, 4));
  }
  SUBCASE("same-distribution MMD^2 has mean 144 / S for a 2-D standard normal") {
    // E k(x, x) = E (1 + Q)^3 with Q ~ chi2(2): 1 + 3*2 + 3*8 + 48 = 79.
    // E k(x, x') = 1 + 3 E (x.x')^2 = 7. Biased MMD^2 has mean 2 (79 - 7) / S.
    Rng rng(5);
    for (auto [s, reps] : {std::pair<Index, int>{100, 400}, {10000, 40}}) {
      double sum = 0.0, sumsq = 0.0;
      for (int r = 0; r < reps; ++r) {
        const double v = std::pow(polynomial_mmd(normal_rows(s, 2, rng), normal_rows(s, 2, rng)), 2) * s;
        sum += v;
        sumsq += v * v;
      }
      const double mean = sum / reps;
      const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
      CHECK(std::abs(mean - 144.0) <= 4 * se);
    }
  }
  SUBCASE("thinning") {
    RowMatrix a(10, 1);
    for (Index i = 0; i < 10; ++i) a(i, 0) = static_cast<double>(i);
    const RowMatrix t = thin_to(a, 4);
    REQUIRE(t.rows() == 4);
    CHECK(t(0, 0) == 0.0);
    CHECK(t(1, 0) == 2.0);
    CHECK(t(2, 0) == 5.0);
    CHECK(t(3, 0) == 7.0);
    CHECK(thin_to(a, 20).rows() == 10);
    CHECK(chain_mmd(a, thin_to(a, 4)) == polynomial_mmd(thin_to(a, 4), thin_to(a, 4)));
  }
}

TEST_CASE("negative test log-likelihood") {
  const Dataset test = labelled_rows(50, 3, 2);
  SUBCASE("chain at the origin") {
    const RowMatrix chain = RowMatrix::Zero(20, 3);
    CHECK(neg_test_log_likelihood(chain, test) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("separable test set with large margins") {
    RowMatrix x(4, 1);
    x << 1, 2, -1, -3;
    Vector y(4);
    y << 1, 1, -1, -1;
    RowMatrix chain(3, 1);
    chain << 60, 55, 70;
    const double v = neg_test_log_likelihood(chain, Dataset(x, y));
    CHECK(v >= 0.0);
    CHECK(v <= 1e-20);
  }
  SUBCASE("single sample reduces to the mean of phi") {
    RowMatrix chain(1, 3);
    chain << 0.4, -1.0, 2.0;
    double expect = 0.0;
    for (Index t = 0; t < test.size(); ++t) expect += phi(test.z().row(t).dot(chain.row(0)));
    expect /= static_cast<double>(test.size());
    CHECK(neg_test_log_likelihood(chain, test) == doctest::Approx(expect).epsilon(1e-13));
  }
  SUBCASE("log of the mean predictive") {
    Rng rng(4);
    const RowMatrix chain = normal_rows(30, 3, rng);
    double expect = 0.0;
    for (Index t = 0; t < test.size(); ++t) {
      double p = 0.0;
      for (Index s = 0; s < chain.rows(); ++s) p += logistic(test.z().row(t).dot(chain.row(s)));
      expect -= std::log(p / static_cast<double>(chain.rows()));
    }
    expect /= static_cast<double>(test.size());
    CHECK(neg_test_log_likelihood(chain, test) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(neg_test_log_likelihood(chain, test, 3) == neg_test_log_likelihood(chain, test, 1));
  }
}

TEST_CASE("grid verification") {
  const Dataset full = labelled_rows(400, 3, 6);
  SUBCASE("the full data with unit weights") {
    Rng rng(1);
    const GridCheck g = verify_epsilon_coreset(WeightedDataset(full), WeightedDataset(full), 3.0, 100, rng);
    CHECK(g.max_rel_err == 0.0);
    CHECK(g.points == 100 + 1 + 6);
  }
  SUBCASE("duplicated data against its first half with weight 2") {
    RowMatrix x(400, 3);
    x << full.x().topRows(200), full.x().topRows(200);
    Vector y(400);
    y << full.y().head(200), full.y().head(200);
    const Dataset dup(x, y);
    std::vector<Index> src(200);
    std::iota(src.begin(), src.end(), Index{0});
    const Coreset half(full.x().topRows(200), full.y().head(200), Vector::Constant(200, 2.0), src, CoresetMeta{});
    Rng rng(2);
    CHECK(verify_epsilon_coreset(dup, half, 3.0, 100, rng).max_rel_err <= 1e-14);
  }
  SUBCASE("merging with an exact remainder never increases the error") {
    const Dataset first(full.x().topRows(200), full.y().head(200));
    const Dataset rest(full.x().bottomRows(200), full.y().tail(200));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const Coreset c = uniform_baseline(first, 40, rng);
      std::vector<Index> src(200);
      std::iota(src.begin(), src.end(), Index{200});
      const Coreset exact(rest.x(), rest.y(), Vector::Ones(200), src, CoresetMeta{});
      Rng g1(seed + 50), g2(seed + 50);
      const double alone = verify_epsilon_coreset(first, c, 3.0, 100, g1).max_rel_err;
      const double merged = verify_epsilon_coreset(full, merge(c, exact), 3.0, 100, g2).max_rel_err;
      CHECK(merged <= alone);
      CHECK(alone > 0.0);
    }
  }
}

TEST_CASE("uniform baseline") {
  const Dataset ds = labelled_rows(100, 2, 9);
  Rng rng(3);
  const Coreset all = uniform_baseline(ds, 100, rng);
  CHECK(all.x() == ds.x());
  CHECK(all.gamma() == Vector::Ones(100));
  CHECK(all.meta().method == "uniform");
  const Coreset one = uniform_baseline(ds, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one.gamma()[0] == 100.0);
  CHECK_THROWS_AS(uniform_baseline(ds, 101, rng), std::invalid_argument);
  CHECK_THROWS_AS(uniform_baseline(ds, 0, rng), std::invalid_argument);

  Vector theta(2);
  theta << 1.5, -0.5;
  const double full = log_likelihood(WeightedDataset(ds), theta);
  const int draws = 10000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double v = log_likelihood(uniform_baseline(ds, 10, rng), theta);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / draws;
  const double se = std::sqrt((sumsq / draws - mean * mean) / draws);
  CHECK(std::abs(mean - full) <= 4 * se);
}

TEST_CASE("quadrature marginal check") {
  const double sigma0 = 4.0;
  const LogLikelihoodFn one_point = [](const Vector& t) { return -phi(t[0]); };
  SUBCASE("agrees with an independent Simpson rule") {
    const QuadratureResult q = quadrature_marginal_check(1, sigma0, one_point, one_point, 0.1);
    const double oracle = simpson_log_evidence([](double t) { return -phi(t); }, sigma0, 400000);
    CHECK(q.ln_e == doctest::Approx(oracle).epsilon(1e-8));
    CHECK(q.ln_e == q.ln_e_tilde);
    CHECK(q.pass);
  }
  SUBCASE("separable 2-D likelihood doubles the 1-D value") {
    const LogLikelihoodFn two = [](const Vector& t) { return -phi(t[0]) - phi(t[1]); };
    const QuadratureResult q2 = quadrature_marginal_check(2, sigma0, two, two, 0.1);
    const QuadratureResult q1 = quadrature_marginal_check(1, sigma0, one_point, one_point, 0.1);
    CHECK(q2.ln_e == doctest::Approx(2 * q1.ln_e).epsilon(1e-7));
  }
  SUBCASE("(1 + eps) L and (1 - eps) L") {
    const double eps = 0.1;
    const LogLikelihoodFn up = [&](const Vector& t) { return (1 + eps) * -phi(t[0]); };
    const LogLikelihoodFn down = [&](const Vector& t) { return (1 - eps) * -phi(t[0]); };
    const QuadratureResult qu = quadrature_marginal_check(1, sigma0, one_point, up, eps);
    CHECK(qu.pass);
    CHECK(qu.ln_e_tilde >= (1 + eps) * qu.ln_e);
    CHECK(qu.ln_e_tilde <= qu.ln_e);
    const QuadratureResult qd = quadrature_marginal_check(1, sigma0, one_point, down, eps);
    CHECK(qd.pass);
    CHECK(qd.ln_e_tilde >= qd.ln_e);
  }
  SUBCASE("hypothesis violations") {
    const LogLikelihoodFn far = [](const Vector& t) { return -2.0 * phi(t[0]); };
    CHECK_THROWS_AS(quadrature_marginal_check(1, sigma0, one_point, far, 0.1), std::invalid_argument);
    const LogLikelihoodFn positive = [](const Vector&) { return 0.5; };
    CHECK_THROWS_AS(quadrature_marginal_check(1, sigma0, positive, positive, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(quadrature_marginal_check(3, sigma0, one_point, one_point, 0.1), std::invalid_argument);
  }
}

TEST_CASE("metric report JSON") {
  MetricReport r;
  r.m = 500;
  r.method = "coreset";
  r.seed = 7;
  r.mmd = 0.25;
  const auto j = r.to_json();
  CHECK(j.at("mmd").get<double>() == 0.25);
  CHECK_FALSE(j.contains("neg_test_ll"));
  CHECK(j.at("M").get<Index>() == 500);
}
