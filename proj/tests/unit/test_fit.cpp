#include <doctest.h>

#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <random>

#include "photodyn/errors.hpp"
#include "photodyn/fit.hpp"

using namespace photodyn;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * i / (n - 1));
  return v;
}

double gauss(double x, double amp, double c, double s) { return amp * std::exp(-0.5 * (x - c) * (x - c) / (s * s)); }

}  // namespace

TEST_CASE("noiseless data is recovered exactly") {
  const auto spec = model_spec(ModelId::exp_decay);
  const std::vector<double> truth{3.0, 2.5, 0.4};
  const auto x = linspace(0.0, 15.0, 60);
  std::vector<double> y;
  for (double xi : x) y.push_back(spec.f(xi, truth));
  const std::vector<double> start{1.0, 1.0, 0.0};
  const auto f = nlls_fit(spec, x, y, std::nullopt, start);
  CHECK(f.converged);
  CHECK(f.value("amp") == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(f.value("tau") == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("too few points") {
  const auto spec = model_spec(ModelId::saturation);
  const std::vector<double> x{1.0, 2.0}, y{1.0, 1.5}, start{1.0, 1.0};
  CHECK_THROWS_AS(nlls_fit(spec, x, y, std::nullopt, start), std::invalid_argument);
}

TEST_CASE("saturation fit") {
  const auto p = linspace(0.5, 80.0, 20);
  std::vector<double> clean, noisy;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double pi : p) {
    const double v = 12.5 * pi / (pi + 7.6);
    clean.push_back(v);
    noisy.push_back(v * (1.0 + 0.03 * n(rng)));
  }
  const auto f = fit_saturation(p, clean);
  CHECK(f.value("I_inf") == doctest::Approx(12.5).epsilon(1e-6));
  CHECK(f.value("P_sat") == doctest::Approx(7.6).epsilon(1e-6));
  CHECK(f.value("half_point_ratio") == doctest::Approx(0.5).epsilon(1e-12));
  const auto g = fit_saturation(p, noisy);
  CHECK(g.value("I_inf") == doctest::Approx(12.5).epsilon(0.05));
  CHECK(g.value("P_sat") == doctest::Approx(7.6).epsilon(0.1));
}

TEST_CASE("two-line spectrum areas, sideband gap and Debye-Waller factor") {
  // Lines at 585.00 and 585.12 nm with 3:1 areas, sideband 2 THz red.
  const double l1 = 585.0, l2 = 585.12;
  const double c = 299792.458;  // nm THz
  const double psb = c / (c / l1 - 2.0);
  std::vector<double> wl, y;
  for (double w = 570.0; w <= 640.0; w += 0.01) {
    wl.push_back(w);
    const double zpl = gauss(w, 3.0, l1, 0.02) + gauss(w, 1.0, l2, 0.02);
    y.push_back(zpl + gauss(w, 0.4, psb, 0.6) + 0.01);
  }
  SpectrumOptions o;
  o.double_zpl = true;
  const auto a = analyze_spectrum(Spectrum(wl, y), o);
  REQUIRE(a.zpl_area_ratio.has_value());
  CHECK(*a.zpl_area_ratio == doctest::Approx(3.0).epsilon(0.05));
  REQUIRE(a.gap_thz.has_value());
  CHECK(*a.gap_thz == doctest::Approx(2.0).epsilon(0.05));

  std::vector<double> only;
  for (double w : wl) only.push_back(gauss(w, 1.0, l1, 0.1));
  CHECK(analyze_spectrum(Spectrum(wl, only)).dw_factor == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("two-line areas of complementary frames anticorrelate") {
  std::vector<Spectrum> frames;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int k = 0; k < 40; ++k) {
    const double a = u(rng);
    std::vector<double> wl, y;
    for (double w = 584.0; w <= 586.0; w += 0.005) {
      wl.push_back(w);
      y.push_back(gauss(w, a, 585.0, 0.02) + gauss(w, 1.0 - a, 585.12, 0.02) + 0.001);
    }
    frames.emplace_back(wl, y);
  }
  SpectrumOptions o;
  o.double_zpl = true;
  const auto r = two_line_anticorrelation(frames, o);
  CHECK(r.pearson_r < -0.99);
  CHECK(r.total_intensity_cv < 0.01);
}

TEST_CASE("sinusoid extrema and invariance") {
  const auto th = linspace(0.0, 180.0, 19);
  std::vector<double> v, shifted, flat(th.size(), 5.0);
  for (double t : th) {
    const double y = 10.0 + 4.0 * std::cos(2.0 * (t - 32.0) * M_PI / 180.0);
    v.push_back(y);
    shifted.push_back(y + 100.0);
  }
  const auto f = fit_sinusoid_180(th, v);
  CHECK(std::abs(f.value("theta_max") - 32.0) < 1.0);
  CHECK(std::abs(f.value("theta_min") - 122.0) < 1.0);
  CHECK(fit_sinusoid_180(th, shifted).value("theta_min") == doctest::Approx(f.value("theta_min")).epsilon(1e-6));
  CHECK(fit_sinusoid_180(th, flat).has_flag("extrema_unidentifiable"));

  // Permuting the points changes nothing.
  std::vector<std::size_t> idx(th.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), std::mt19937_64(5));
  std::vector<double> th2, v2;
  for (auto i : idx) th2.push_back(th[i]), v2.push_back(v[i]);
  CHECK(fit_sinusoid_180(th2, v2).value("theta_min") == doctest::Approx(f.value("theta_min")).epsilon(1e-6));
}

TEST_CASE("quantum efficiency bound") {
  const auto q = qe_lower_bound(12.5, 0.10, 1.26);
  CHECK(q.value == doctest::Approx(0.315).epsilon(1e-9));
  CHECK_FALSE(q.out_of_model);
  CHECK(qe_lower_bound(25.0, 0.10, 1.26).value == doctest::Approx(2.0 * q.value));
  CHECK(qe_lower_bound(50.0, 0.10, 1.26).out_of_model);
  CHECK_THROWS_AS(qe_lower_bound(0.0, 0.1, 1.26), std::invalid_argument);
}

TEST_CASE("gaussian histogram width") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 44.0 / 2.355);
  std::vector<double> v;
  for (int i = 0; i < 20000; ++i) v.push_back(g(rng));
  const auto h = make_histogram(v, linear_edges(-80.0, 80.0, 64));
  const auto f = fit_gaussian_histogram(h);
  CHECK(f.value("fwhm") == doctest::Approx(44.0).epsilon(3.0 / 44.0));

  std::normal_distribution<double> narrow(0.0, 0.19);
  std::vector<double> w;
  for (int i = 0; i < 20000; ++i) w.push_back(narrow(rng));
  CHECK(fit_gaussian_histogram(make_histogram(w, linear_edges(-1.0, 1.0, 40))).value("two_sigma") ==
        doctest::Approx(0.38).epsilon(0.04 / 0.38));

  Histogram spike;
  spike.edges = linear_edges(-2.5, 2.5, 5);
  spike.counts = {1, 3, 10000, 3, 1};
  spike.total = 10008;
  CHECK(fit_gaussian_histogram(spike).has_flag("delta_like"));
}

TEST_CASE("analytic Jacobians match finite differences") {
  for (auto id : {ModelId::saturation, ModelId::gaussian, ModelId::lorentzian_dip, ModelId::exp_recovery,
                  ModelId::sinusoid_180, ModelId::exp_decay, ModelId::g2_antibunching, ModelId::g2_bunching}) {
    const auto spec = model_spec(id);
    std::vector<double> p(spec.n_params(), 1.3);
    std::vector<double> grad(p.size());
    for (double x : {0.3, 0.9, 1.7}) {
      spec.grad(x, p, grad);
      const auto num = numeric_gradient(spec, x, p);
      for (std::size_t k = 0; k < p.size(); ++k) CHECK(grad[k] == doctest::Approx(num[k]).epsilon(1e-5));
    }
  }
}
