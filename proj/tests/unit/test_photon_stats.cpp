#include <doctest.h>

#include <stdexcept>

#include <numeric>
#include <random>

#include <gsl/gsl_randist.h>

#include "photodyn/errors.hpp"
#include "photodyn/photon_stats.hpp"

using namespace photodyn;

namespace {

Histogram sample(const MixtureParams& p, std::size_t n_bins, std::uint64_t seed) {
  const int n_max = static_cast<int>(std::ceil(p.lambda_max + 10.0 * std::sqrt(p.lambda_max) + 10.0));
  const auto pmf = mixture_pmf(p, n_max);
  std::mt19937_64 rng(seed);
  std::discrete_distribution<int> d(pmf.begin(), pmf.end());
  BinnedTrace t{1e-3, {}};
  for (std::size_t i = 0; i < n_bins; ++i) t.counts.push_back(d(rng));
  return count_histogram(t);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("mixture without emitter is the background Poissonian") {
  MixtureParams p;
  p.p_e = 0.0;
  p.lambda_b = 1.7;
  const auto pmf = mixture_pmf(p, 40);
  for (int n = 0; n < 40; ++n) CHECK(pmf[static_cast<std::size_t>(n)] == doctest::Approx(gsl_ran_poisson_pdf(n, 1.7)));
}

TEST_CASE("two-cell uniform mixture matches the hand calculation") {
  MixtureParams p;
  p.p_e = 0.4;
  p.lambda_b = 1.0;
  p.gamma = 0.0;
  p.lambda_max = 2.0;
  p.J = 2;
  const auto pmf = mixture_pmf(p, 30);
  // Cells on (0, 2] have midpoints 0.5 and 1.5, equal weights.
  for (int n = 0; n < 10; ++n) {
    const double e = 0.6 * gsl_ran_poisson_pdf(n, 1.0) +
                     0.4 * 0.5 * (gsl_ran_poisson_pdf(n, 0.5) + gsl_ran_poisson_pdf(n, 1.5));
    CHECK(pmf[static_cast<std::size_t>(n)] == doctest::Approx(e).epsilon(1e-12));
  }
}

TEST_CASE("mixture pmf is normalized for random parameters") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    MixtureParams p;
    p.p_e = u(rng);
    p.lambda_b = 0.01 + 5.0 * u(rng);
    p.gamma = 2.0 * u(rng);
    p.lambda_max = 0.5 + 60.0 * u(rng);
    p.J = 4 + static_cast<int>(100 * u(rng));
    p.weight_mode = u(rng) < 0.5 ? WeightMode::uniform : WeightMode::lorentzian_pushforward;
    const int n_max = static_cast<int>(std::ceil(p.lambda_max + 6.0 * std::sqrt(p.lambda_max))) + 5;
    CHECK(std::abs(sum(mixture_pmf(p, n_max)) - 1.0) <= 1e-9);
  }
}

TEST_CASE("fit recovers generating parameters") {
  MixtureParams truth;
  truth.p_e = 0.2;
  truth.lambda_b = 1.0;
  truth.gamma = 0.5;
  truth.lambda_max = 20.0;
  const auto h = sample(truth, 100000, 1);
  const auto fit = fit_mixture(h, 20.0, WeightMode::uniform);
  CHECK(std::abs(fit.fit.value("p_e") - 0.2) < 3.0 * fit.fit.error("p_e"));
  CHECK(std::abs(fit.fit.value("lambda_b") - 1.0) < 3.0 * fit.fit.error("lambda_b"));
  CHECK(std::abs(fit.fit.value("gamma") - 0.5) < 3.0 * fit.fit.error("gamma"));
  // Likelihood at the truth is within fluctuation of the optimum.
  const auto pmf = mixture_pmf(truth, static_cast<int>(h.size()) + 40);
  double ll_true = 0.0;
  for (std::size_t n = 0; n < h.size(); ++n)
    if (h.counts[n] > 0) ll_true += static_cast<double>(h.counts[n]) * std::log(pmf[n]);
  CHECK(fit.log_likelihood >= ll_true - 5.0);
  CHECK(fit.log_likelihood >= ll_true - 1e-6 * std::abs(ll_true));
}

TEST_CASE("pure Poisson data gives a vanishing emitter fraction") {
  MixtureParams bg;
  bg.p_e = 0.0;
  bg.lambda_b = 2.0;
  const auto h = sample(bg, 50000, 2);
  const auto fit = fit_mixture(h, 10.0, WeightMode::uniform);
  CHECK(fit.fit.value("p_e") < 0.02);
  CHECK(on_fraction(fit).value < 0.02);
}

TEST_CASE("BIC selects the generating lambda_max") {
  MixtureParams truth;
  truth.p_e = 0.2;
  truth.lambda_b = 1.0;
  truth.gamma = 0.05;
  truth.lambda_max = 20.0;
  const auto h = sample(truth, 100000, 3);
  const std::vector<double> grid{10, 15, 20, 25, 30};
  const auto sel = select_lambda_max(h, grid, WeightMode::uniform);
  CHECK(sel.best.params.lambda_max == 20.0);
  CHECK(sel.curve.size() == 5);
  const auto cmp = compare_pmf(h, sel.best.params);
  CHECK(cmp.p_value > 0.01);
  CHECK(sum(cmp.model) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("degenerate inputs") {
  BinnedTrace flat{1e-3, std::vector<std::int64_t>(5000, 0)};
  CHECK_THROWS_AS(fit_mixture(count_histogram(flat), 5.0, WeightMode::uniform), FitFailed);
  const std::vector<double> one{10.0};
  MixtureParams p;
  p.p_e = 0.1;
  p.lambda_max = 10.0;
  CHECK_THROWS_AS(select_lambda_max(sample(p, 2000, 4), one, WeightMode::uniform), std::invalid_argument);
}
