#include "photodyn/fit.hpp"

#include <Eigen/Dense>
#include <gsl/gsl_deriv.h>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "photodyn/errors.hpp"

namespace photodyn {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt2Pi = 2.5066282746310002;
constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kSpeedOfLightNmThz = 299792.458;

double sqr(double v) { return v * v; }

double gauss(double x, double c, double s) { return std::exp(-0.5 * sqr((x - c) / s)); }

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

double trapz(std::span<const double> x, std::span<const double> y, double lo, double hi) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    const double a = std::max(x[i], lo);
    const double b = std::min(x[i + 1], hi);
    if (b <= a) continue;
    const double slope = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
    const double ya = y[i] + slope * (a - x[i]);
    const double yb = y[i] + slope * (b - x[i]);
    area += 0.5 * (ya + yb) * (b - a);
  }
  return area;
}

}  // namespace

std::string_view to_string(ModelId id) {
  switch (id) {
    case ModelId::saturation: return "saturation";
    case ModelId::gaussian: return "gaussian";
    case ModelId::lorentzian_dip: return "lorentzian_dip";
    case ModelId::exp_recovery: return "exp_recovery";
    case ModelId::sinusoid_180: return "sinusoid_180";
    case ModelId::double_gaussian: return "double_gaussian";
    case ModelId::exp_decay: return "exp_decay";
    case ModelId::g2_antibunching: return "g2_antibunching";
    case ModelId::g2_bunching: return "g2_bunching";
  }
  return "unknown";
}

ModelSpec model_spec(ModelId id) {
  ModelSpec s;
  s.id = id;
  switch (id) {
    case ModelId::saturation:
      s.names = {"I_inf", "P_sat"};
      s.lower = {0.0, 0.0};
      s.upper = {kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return p[0] * x / (x + p[1]); };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double d = x + p[1];
        g[0] = x / d;
        g[1] = -p[0] * x / (d * d);
      };
      break;
    case ModelId::gaussian:
      s.names = {"amp", "center", "sigma", "offset"};
      s.lower = {-kInf, -kInf, 0.0, -kInf};
      s.upper = {kInf, kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return p[0] * gauss(x, p[1], p[2]) + p[3]; };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double e = gauss(x, p[1], p[2]);
        const double u = (x - p[1]) / p[2];
        g[0] = e;
        g[1] = p[0] * e * u / p[2];
        g[2] = p[0] * e * u * u / p[2];
        g[3] = 1.0;
      };
      break;
    case ModelId::lorentzian_dip:
      s.names = {"baseline", "contrast", "f0", "fwhm"};
      s.lower = {-kInf, -kInf, -kInf, 0.0};
      s.upper = {kInf, kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) {
        const double h2 = sqr(0.5 * p[3]);
        return p[0] * (1.0 - p[1] * h2 / (h2 + sqr(x - p[2])));
      };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double h = 0.5 * p[3];
        const double h2 = h * h;
        const double dx = x - p[2];
        const double den = h2 + dx * dx;
        const double l = h2 / den;
        g[0] = 1.0 - p[1] * l;
        g[1] = -p[0] * l;
        g[2] = -p[0] * p[1] * h2 * 2.0 * dx / (den * den);
        // dl/dh = 2 h dx^2 / den^2 and dh/dfwhm = 1/2
        g[3] = -p[0] * p[1] * (h * dx * dx) / (den * den);
      };
      break;
    case ModelId::exp_recovery:
      s.names = {"amp", "T1"};
      s.lower = {-kInf, 0.0};
      s.upper = {kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return p[0] * (1.0 - std::exp(-x / p[1])); };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double e = std::exp(-x / p[1]);
        g[0] = 1.0 - e;
        g[1] = -p[0] * e * x / (p[1] * p[1]);
      };
      break;
    case ModelId::sinusoid_180:
      s.names = {"mean", "amplitude", "theta0"};
      s.units = {"", "", "deg"};
      s.lower = {-kInf, -kInf, -kInf};
      s.upper = {kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return p[0] + p[1] * std::cos(2.0 * (x - p[2]) * kDegToRad); };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double arg = 2.0 * (x - p[2]) * kDegToRad;
        g[0] = 1.0;
        g[1] = std::cos(arg);
        g[2] = p[1] * std::sin(arg) * 2.0 * kDegToRad;
      };
      break;
    case ModelId::double_gaussian:
      s.names = {"amp1", "center1", "sigma1", "amp2", "center2", "sigma2", "offset"};
      s.lower = {-kInf, -kInf, 0.0, -kInf, -kInf, 0.0, -kInf};
      s.upper = {kInf, kInf, kInf, kInf, kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) {
        return p[0] * gauss(x, p[1], p[2]) + p[3] * gauss(x, p[4], p[5]) + p[6];
      };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        for (int k = 0; k < 2; ++k) {
          const double a = p[3 * k], c = p[3 * k + 1], sg = p[3 * k + 2];
          const double e = gauss(x, c, sg);
          const double u = (x - c) / sg;
          g[3 * k] = e;
          g[3 * k + 1] = a * e * u / sg;
          g[3 * k + 2] = a * e * u * u / sg;
        }
        g[6] = 1.0;
      };
      break;
    case ModelId::exp_decay:
      s.names = {"amp", "tau", "offset"};
      s.lower = {-kInf, 0.0, -kInf};
      s.upper = {kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return p[0] * std::exp(-x / p[1]) + p[2]; };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double e = std::exp(-x / p[1]);
        g[0] = e;
        g[1] = p[0] * e * x / (p[1] * p[1]);
        g[2] = 1.0;
      };
      break;
    case ModelId::g2_antibunching:
      s.names = {"g0", "tau_a"};
      s.units = {"", "ns"};
      s.lower = {-kInf, 0.0};
      s.upper = {kInf, kInf};
      s.f = [](double x, std::span<const double> p) { return 1.0 - (1.0 - p[0]) * std::exp(-std::abs(x) / p[1]); };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double ax = std::abs(x);
        const double e = std::exp(-ax / p[1]);
        g[0] = e;
        g[1] = -(1.0 - p[0]) * e * ax / (p[1] * p[1]);
      };
      break;
    case ModelId::g2_bunching:
      s.names = {"g0", "tau_a", "amp_b", "tau_b"};
      s.units = {"", "ns", "", "ns"};
      s.lower = {-kInf, 0.0, -kInf, 0.0};
      s.upper = {kInf, kInf, kInf, kInf};
      s.f = [](double x, std::span<const double> p) {
        const double ax = std::abs(x);
        return 1.0 - (1.0 - p[0]) * std::exp(-ax / p[1]) + p[2] * std::exp(-ax / p[3]);
      };
      s.grad = [](double x, std::span<const double> p, std::span<double> g) {
        const double ax = std::abs(x);
        const double ea = std::exp(-ax / p[1]);
        const double eb = std::exp(-ax / p[3]);
        g[0] = ea;
        g[1] = -(1.0 - p[0]) * ea * ax / (p[1] * p[1]);
        g[2] = eb;
        g[3] = p[2] * eb * ax / (p[3] * p[3]);
      };
      break;
  }
  if (s.units.empty()) s.units.assign(s.names.size(), "");
  return s;
}

std::vector<double> numeric_gradient(const ModelSpec& spec, double x, std::span<const double> p) {
  std::vector<double> q(p.begin(), p.end());
  std::vector<double> g(p.size());
  struct Ctx {
    const ModelSpec* spec;
    double x;
    std::vector<double>* q;
    std::size_t k;
  };
  for (std::size_t k = 0; k < p.size(); ++k) {
    Ctx ctx{&spec, x, &q, k};
    gsl_function fn;
    fn.function = [](double v, void* data) {
      auto* c = static_cast<Ctx*>(data);
      const double keep = (*c->q)[c->k];
      (*c->q)[c->k] = v;
      const double out = c->spec->f(c->x, *c->q);
      (*c->q)[c->k] = keep;
      return out;
    };
    fn.params = &ctx;
    double err = 0.0;
    gsl_deriv_central(&fn, p[k], 1e-4 * std::max(1e-3, std::abs(p[k])), &g[k], &err);
  }
  return g;
}

FitResult nlls_fit(const ModelSpec& spec, std::span<const double> x, std::span<const double> y,
                   std::optional<std::span<const double>> y_err, std::span<const double> start,
                   const NllsOptions& options) {
  const std::size_t np = spec.n_params();
  if (x.size() != y.size()) throw std::invalid_argument("nlls_fit: x and y differ in length");
  if (start.size() != np) throw std::invalid_argument("nlls_fit: start has the wrong number of parameters");
  if (y_err && y_err->size() != y.size()) throw std::invalid_argument("nlls_fit: y_err differs in length");

  std::vector<std::size_t> free;
  for (std::size_t k = 0; k < np; ++k)
    if (options.fixed.empty() || !options.fixed[k]) free.push_back(k);
  const std::size_t nf = free.size();
  const std::size_t n = x.size();
  if (n < np + 1) throw std::invalid_argument("nlls_fit: need at least n_params + 1 points");

  std::vector<double> w(n, 1.0);
  if (y_err) {
    for (std::size_t i = 0; i < n; ++i) {
      const double e = (*y_err)[i];
      if (!(e > 0.0)) throw std::invalid_argument("nlls_fit: y_err must be positive");
      w[i] = 1.0 / e;
    }
  }

  auto project = [&](std::vector<double>& p) {
    for (std::size_t k = 0; k < np; ++k) p[k] = std::clamp(p[k], spec.lower[k], spec.upper[k]);
  };
  auto chi2_of = [&](const std::vector<double>& p) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += sqr((y[i] - spec.f(x[i], p)) * w[i]);
    return c;
  };
  std::vector<double> g(np);
  auto linearize = [&](const std::vector<double>& p, Eigen::MatrixXd& jac, Eigen::VectorXd& r) {
    jac.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nf));
    r.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      spec.grad(x[i], p, g);
      for (std::size_t j = 0; j < nf; ++j) jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[free[j]] * w[i];
      r(static_cast<Eigen::Index>(i)) = (y[i] - spec.f(x[i], p)) * w[i];
    }
  };

  std::vector<double> p(start.begin(), start.end());
  project(p);
  double chi2 = chi2_of(p);
  if (!std::isfinite(chi2)) throw FitFailed("nlls_fit: model is not finite at the start point");

  Eigen::MatrixXd jac;
  Eigen::VectorXd r;
  double lambda = 1e-3;
  bool converged = false;
  int iter = 0;
  for (; iter < options.max_iterations && !converged; ++iter) {
    linearize(p, jac, r);
    const Eigen::MatrixXd a = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    const double diag_floor = 1e-12 * std::max(1e-300, a.diagonal().maxCoeff());
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd m = a;
      for (Eigen::Index k = 0; k < m.rows(); ++k) m(k, k) += lambda * std::max(a(k, k), diag_floor);
      const Eigen::VectorXd step = m.ldlt().solve(grad);
      std::vector<double> trial = p;
      for (std::size_t j = 0; j < nf; ++j) trial[free[j]] += step(static_cast<Eigen::Index>(j));
      project(trial);
      const double c = chi2_of(trial);
      if (std::isfinite(c) && c <= chi2) {
        bool small = true;
        for (std::size_t j = 0; j < nf; ++j) {
          const std::size_t k = free[j];
          if (std::abs(trial[k] - p[k]) > options.xtol * (std::abs(p[k]) + options.xtol)) small = false;
        }
        p = std::move(trial);
        const bool stalled = chi2 - c <= 1e-15 * chi2;
        chi2 = c;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (small || chi2 == 0.0 || (stalled && small)) converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill step exists at machine precision: a minimum.
          converged = true;
          break;
        }
      }
    }
  }

  linearize(p, jac, r);
  const Eigen::MatrixXd a = jac.transpose() * jac;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
  const double max_ev = eig.eigenvalues().maxCoeff();
  const double min_ev = eig.eigenvalues().minCoeff();
  if (!(max_ev > 0.0) || min_ev <= 1e-14 * max_ev) {
    std::ostringstream msg;
    msg << "nlls_fit(" << to_string(spec.id) << "): singular Jacobian at the optimum (chi2 = " << chi2 << ")";
    throw FitFailed(msg.str());
  }
  const Eigen::MatrixXd cov_raw = a.inverse();
  const double dof = static_cast<double>(n - nf);
  const double scale = y_err ? 1.0 : (dof > 0 ? chi2 / dof : 0.0);

  FitResult out;
  out.goodness = chi2;
  out.goodness_kind = GoodnessKind::residual_sum_of_squares;
  out.converged = converged;
  out.n_points = static_cast<int>(n);
  for (std::size_t k = 0; k < np; ++k) {
    double err = 0.0;
    const auto it = std::find(free.begin(), free.end(), k);
    if (it != free.end()) {
      const auto j = static_cast<Eigen::Index>(it - free.begin());
      err = std::sqrt(std::max(0.0, cov_raw(j, j) * scale));
    }
    out.set(spec.names[k], p[k], err, spec.units[k]);
  }
  if (!converged) out.flags.emplace_back("max_iterations");
  return out;
}

double evaluate(const ModelSpec& spec, const FitResult& fit, double x) {
  std::vector<double> p(spec.n_params());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = fit.value(spec.names[k]);
  return spec.f(x, p);
}

FitResult fit_saturation(std::span<const double> powers, std::span<const double> rates,
                         std::optional<std::span<const double>> rate_err) {
  if (powers.size() != rates.size()) throw std::invalid_argument("fit_saturation: length mismatch");
  if (powers.empty()) throw std::invalid_argument("fit_saturation: no data");
  const double ymax = *std::max_element(rates.begin(), rates.end());
  if (!(ymax > 0.0)) throw std::invalid_argument("fit_saturation: rates must include a positive value");
  const double p_start = median(to_vec(powers));
  const std::vector<double> start{ymax * 1.3, std::max(p_start, 1e-12)};
  const auto spec = model_spec(ModelId::saturation);
  auto fit = nlls_fit(spec, powers, rates, rate_err, start);
  const double i_inf = fit.value("I_inf");
  const double p_sat = fit.value("P_sat");
  fit.set("half_point_ratio", spec.f(p_sat, std::vector<double>{i_inf, p_sat}) / i_inf);
  return fit;
}

FitResult fit_gaussian_histogram(const Histogram& hist) {
  std::vector<double> x, y, e;
  double sw = 0.0, s1 = 0.0, s2 = 0.0, ymax = 0.0;
  int occupied = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double c = static_cast<double>(hist.counts[i]);
    x.push_back(hist.center(i));
    y.push_back(c);
    e.push_back(std::sqrt(std::max(c, 1.0)));
    if (c > 0) ++occupied;
    sw += c;
    s1 += c * hist.center(i);
    ymax = std::max(ymax, c);
  }
  if (occupied < 5) throw InsufficientData("fit_gaussian_histogram: fewer than 5 occupied bins");
  const double mean = s1 / sw;
  for (std::size_t i = 0; i < x.size(); ++i) s2 += y[i] * sqr(x[i] - mean);
  const double sd = std::sqrt(s2 / sw);
  const double min_width = [&] {
    double w = kInf;
    for (std::size_t i = 0; i < hist.size(); ++i) w = std::min(w, hist.width(i));
    return w;
  }();

  const auto spec = model_spec(ModelId::gaussian);
  NllsOptions opt;
  opt.fixed = {false, false, false, true};
  const std::vector<double> start{ymax, mean, std::max(sd, 0.25 * min_width), 0.0};
  FitResult fit;
  try {
    fit = nlls_fit(spec, x, y, e, start, opt);
    // Errors from observed counts pull the curve toward empty tails; refit
    // with errors from the model expectation (iterated Pearson weights).
    for (int pass = 0; pass < 3; ++pass) {
      std::vector<double> p{fit.value("amp"), fit.value("center"), fit.value("sigma"), 0.0};
      for (std::size_t i = 0; i < x.size(); ++i) e[i] = std::sqrt(std::max(spec.f(x[i], p), 0.5));
      fit = nlls_fit(spec, x, y, e, p, opt);
    }
  } catch (const FitFailed&) {
    fit = FitResult{};
    fit.set("amp", ymax);
    fit.set("center", mean);
    fit.set("sigma", sd);
    fit.set("offset", 0.0);
    fit.flags.emplace_back("moment_estimate");
  }
  const double sigma = std::abs(fit.value("sigma"));
  const double sigma_err = fit.error("sigma");
  fit.set("sigma", sigma, sigma_err);
  fit.set("fwhm", kFwhmPerSigma * sigma, kFwhmPerSigma * sigma_err);
  fit.set("two_sigma", 2.0 * sigma, 2.0 * sigma_err);
  if (sigma < 0.5 * min_width) fit.flags.emplace_back("delta_like");
  return fit;
}

namespace {

// Half width at half maximum walking outwards from the peak, in x units.
double half_width_guess(std::span<const double> x, std::span<const double> y, std::size_t peak, double floor) {
  const double half = floor + 0.5 * (y[peak] - floor);
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && y[lo] > half) --lo;
  while (hi + 1 < y.size() && y[hi] > half) ++hi;
  const double w = std::min(x[peak] - x[lo], x[hi] - x[peak]);
  return std::max(w, x.size() > 1 ? (x[1] - x[0]) : 1.0);
}

struct Window {
  std::vector<double> x, y;
};

Window window(const Spectrum& s, double lo, double hi) {
  Window w;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.wavelengths[i] >= lo && s.wavelengths[i] <= hi) {
      w.x.push_back(s.wavelengths[i]);
      w.y.push_back(s.counts[i]);
    }
  }
  return w;
}

double robust_noise(std::vector<double> v) {
  if (v.size() < 2) return 0.0;
  const double m = median(v);
  for (auto& e : v) e = std::abs(e - m);
  return 1.4826 * median(v);
}

// Starting values for a double-Gaussian ZPL fit around the dominant peak.
std::vector<double> double_zpl_start(const Window& w, const SpectrumOptions& opt) {
  const auto peak = static_cast<std::size_t>(std::max_element(w.y.begin(), w.y.end()) - w.y.begin());
  const double floor = *std::min_element(w.y.begin(), w.y.end());
  const double hw = half_width_guess(w.x, w.y, peak, floor);
  const double sigma = hw / 1.1774;
  const double c1 = w.x[peak];
  double c2 = c1 + opt.zpl_pair_guess_nm;
  // The dominant line may be the red one.
  auto value_at = [&](double c) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < w.x.size(); ++i)
      if (std::abs(w.x[i] - c) < std::abs(w.x[best] - c)) best = i;
    return w.y[best] - floor;
  };
  double a2 = value_at(c2) - (w.y[peak] - floor) * gauss(c2, c1, sigma);
  const double blue = c1 - opt.zpl_pair_guess_nm;
  const double a2_blue = value_at(blue) - (w.y[peak] - floor) * gauss(blue, c1, sigma);
  if (a2_blue > a2) {
    a2 = a2_blue;
    c2 = blue;
  }
  return {w.y[peak] - floor, c1, sigma, std::max(a2, 0.05 * (w.y[peak] - floor)), c2, sigma, floor};
}

}  // namespace

SpectrumAnalysis analyze_spectrum(const Spectrum& spectrum, const SpectrumOptions& opt) {
  if (spectrum.size() < 8) throw std::invalid_argument("analyze_spectrum: spectrum too short");
  SpectrumAnalysis out;
  const auto search = window(spectrum, opt.zpl_search_lo_nm, opt.zpl_search_hi_nm);
  if (search.x.empty()) throw AnalysisFailed("analyze_spectrum: no data in the ZPL search range");
  const auto peak_it = std::max_element(search.y.begin(), search.y.end());
  const double peak_x = search.x[static_cast<std::size_t>(peak_it - search.y.begin())];
  const double noise = robust_noise(search.y);
  const double level = median(search.y);
  if (!(*peak_it > level + 5.0 * noise) || !(*peak_it > 0.0)) throw AnalysisFailed("analyze_spectrum: ZPL not found above the noise floor");

  const auto zw = window(spectrum, peak_x - opt.zpl_fit_half_window_nm, peak_x + opt.zpl_fit_half_window_nm);
  std::vector<double> zpl_params;
  ModelSpec zpl_spec;
  try {
    if (opt.double_zpl) {
      zpl_spec = model_spec(ModelId::double_gaussian);
      auto fit = nlls_fit(zpl_spec, zw.x, zw.y, std::nullopt, double_zpl_start(zw, opt));
      zpl_params = {fit.value("amp1"), fit.value("center1"), std::abs(fit.value("sigma1")),
                    fit.value("amp2"), fit.value("center2"), std::abs(fit.value("sigma2")), fit.value("offset")};
      if (zpl_params[4] < zpl_params[1]) {
        std::swap_ranges(zpl_params.begin(), zpl_params.begin() + 3, zpl_params.begin() + 3);
      }
      const double a1 = zpl_params[0] * zpl_params[2];
      const double a2 = zpl_params[3] * zpl_params[5];
      out.zpl_center_nm = zpl_params[1];
      out.zpl2_center_nm = zpl_params[4];
      if (a2 != 0.0) out.zpl_area_ratio = a1 / a2;
    } else {
      zpl_spec = model_spec(ModelId::gaussian);
      const auto peak = static_cast<std::size_t>(std::max_element(zw.y.begin(), zw.y.end()) - zw.y.begin());
      const double floor = *std::min_element(zw.y.begin(), zw.y.end());
      const double sigma = half_width_guess(zw.x, zw.y, peak, floor) / 1.1774;
      auto fit = nlls_fit(zpl_spec, zw.x, zw.y, std::nullopt,
                          std::vector<double>{zw.y[peak] - floor, zw.x[peak], sigma, floor});
      zpl_params = {fit.value("amp"), fit.value("center"), std::abs(fit.value("sigma")), fit.value("offset")};
      out.zpl_center_nm = zpl_params[1];
    }
  } catch (const FitFailed& e) {
    throw AnalysisFailed(std::string("analyze_spectrum: ZPL fit failed: ") + e.what());
  }

  const double zpl_lo = out.zpl_center_nm - opt.dw_zpl_half_band_nm;
  const double zpl_hi = std::max(out.zpl_center_nm, out.zpl2_center_nm.value_or(out.zpl_center_nm)) + opt.dw_zpl_half_band_nm;
  const double total = trapz(spectrum.wavelengths, spectrum.counts, opt.dw_total_lo_nm, opt.dw_total_hi_nm);
  if (total > 0.0) out.dw_factor = trapz(spectrum.wavelengths, spectrum.counts, zpl_lo, zpl_hi) / total;
  else out.flags.emplace_back("dw_undefined");

  // First sideband: strongest residual red of the ZPL.
  const double red_edge = out.zpl2_center_nm.value_or(out.zpl_center_nm);
  std::vector<double> rx, ry;
  std::vector<double> zp_offsetless = zpl_params;
  zp_offsetless.back() = 0.0;
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double wl = spectrum.wavelengths[i];
    if (wl < red_edge + opt.psb_search_lo_nm || wl > red_edge + opt.psb_search_hi_nm) continue;
    rx.push_back(wl);
    ry.push_back(spectrum.counts[i] - zpl_spec.f(wl, zp_offsetless));
  }
  if (rx.size() < 5) {
    out.flags.emplace_back("psb_not_covered");
    return out;
  }
  const double r_level = median(ry);
  const double r_noise = std::max(robust_noise(ry), 1e-12 * std::abs(*peak_it));
  const auto rp = static_cast<std::size_t>(std::max_element(ry.begin(), ry.end()) - ry.begin());
  if (!(ry[rp] > r_level + 5.0 * r_noise)) {
    out.flags.emplace_back("psb_not_found");
    return out;
  }
  Window pw;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    if (std::abs(rx[i] - rx[rp]) <= opt.psb_fit_half_window_nm) {
      pw.x.push_back(rx[i]);
      pw.y.push_back(ry[i]);
    }
  }
  try {
    const auto pk = static_cast<std::size_t>(std::max_element(pw.y.begin(), pw.y.end()) - pw.y.begin());
    const double floor = *std::min_element(pw.y.begin(), pw.y.end());
    const double sigma = half_width_guess(pw.x, pw.y, pk, floor) / 1.1774;
    auto fit = nlls_fit(model_spec(ModelId::gaussian), pw.x, pw.y, std::nullopt,
                        std::vector<double>{pw.y[pk] - floor, pw.x[pk], sigma, floor});
    out.psb_center_nm = fit.value("center");
    out.gap_thz = kSpeedOfLightNmThz / out.zpl_center_nm - kSpeedOfLightNmThz / *out.psb_center_nm;
  } catch (const FitFailed&) {
    out.flags.emplace_back("psb_fit_failed");
  }
  return out;
}

AnticorrelationResult two_line_anticorrelation(const std::vector<Spectrum>& frames, const SpectrumOptions& opt) {
  if (frames.size() < 20) throw std::invalid_argument("two_line_anticorrelation: need at least 20 frames");
  const auto& grid = frames.front().wavelengths;
  std::vector<double> sum(grid.size(), 0.0);
  for (const auto& f : frames) {
    if (f.wavelengths != grid) throw std::invalid_argument("two_line_anticorrelation: frames must share one grid");
    for (std::size_t i = 0; i < grid.size(); ++i) sum[i] += f.counts[i];
  }
  const Spectrum summed(grid, sum);
  const auto search = window(summed, opt.zpl_search_lo_nm, opt.zpl_search_hi_nm);
  if (search.x.empty()) throw AnalysisFailed("two_line_anticorrelation: no data in the ZPL search range");
  const double peak_x = search.x[static_cast<std::size_t>(std::max_element(search.y.begin(), search.y.end()) - search.y.begin())];
  const double lo = peak_x - opt.zpl_fit_half_window_nm - opt.zpl_pair_guess_nm;
  const double hi = peak_x + opt.zpl_fit_half_window_nm + opt.zpl_pair_guess_nm;

  const auto spec = model_spec(ModelId::double_gaussian);
  const auto sw = window(summed, lo, hi);
  std::vector<double> shape;
  try {
    const auto fit = nlls_fit(spec, sw.x, sw.y, std::nullopt, double_zpl_start(sw, opt));
    for (const auto& name : spec.names) shape.push_back(fit.value(name));
  } catch (const FitFailed& e) {
    throw AnalysisFailed(std::string("two_line_anticorrelation: fit to the summed frames failed: ") + e.what());
  }
  const double scale = 1.0 / static_cast<double>(frames.size());
  for (int k : {0, 3, 6}) shape[static_cast<std::size_t>(k)] *= scale;
  if (shape[4] < shape[1]) std::swap_ranges(shape.begin(), shape.begin() + 3, shape.begin() + 3);

  AnticorrelationResult out;
  NllsOptions shape_fixed;
  shape_fixed.fixed = {false, true, true, false, true, true, false};
  for (const auto& f : frames) {
    const auto w = window(f, lo, hi);
    std::vector<double> p;
    try {
      const auto fit = nlls_fit(spec, w.x, w.y, std::nullopt, shape);
      if (!fit.converged) throw FitFailed("not converged");
      for (const auto& name : spec.names) p.push_back(fit.value(name));
    } catch (const FitFailed&) {
      try {
        const auto fit = nlls_fit(spec, w.x, w.y, std::nullopt, shape, shape_fixed);
        for (const auto& name : spec.names) p.push_back(fit.value(name));
      } catch (const FitFailed&) {
        ++out.failed_frames;
        continue;
      }
    }
    // Keep line identity by centre.
    if (p[4] < p[1]) std::swap_ranges(p.begin(), p.begin() + 3, p.begin() + 3);
    out.area1.push_back(p[0] * std::abs(p[2]) * kSqrt2Pi);
    out.area2.push_back(p[3] * std::abs(p[5]) * kSqrt2Pi);
  }
  if (static_cast<double>(out.failed_frames) > 0.2 * static_cast<double>(frames.size()))
    throw AnalysisFailed("two_line_anticorrelation: double-Gaussian fit failed in more than 20% of frames");

  const std::size_t n = out.area1.size();
  const double m1 = std::accumulate(out.area1.begin(), out.area1.end(), 0.0) / static_cast<double>(n);
  const double m2 = std::accumulate(out.area2.begin(), out.area2.end(), 0.0) / static_cast<double>(n);
  double c11 = 0, c22 = 0, c12 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d1 = out.area1[i] - m1, d2 = out.area2[i] - m2;
    c11 += d1 * d1;
    c22 += d2 * d2;
    c12 += d1 * d2;
  }
  out.pearson_r = c12 / std::sqrt(c11 * c22);
  const double mt = m1 + m2;
  const double var_t = (c11 + c22 + 2.0 * c12) / static_cast<double>(n - 1);
  out.total_intensity_cv = std::sqrt(std::max(0.0, var_t)) / mt;
  return out;
}

PumpProbeFit fit_pump_probe(const std::vector<Transient>& transients) {
  if (transients.size() < 5) throw std::invalid_argument("fit_pump_probe: need at least 5 delays");
  std::vector<Transient> ts = transients;
  std::sort(ts.begin(), ts.end(), [](const Transient& a, const Transient& b) { return a.delay_s < b.delay_s; });
  if (!(ts.front().delay_s > 0.0) || ts.back().delay_s / ts.front().delay_s < 1e3)
    throw std::invalid_argument("fit_pump_probe: delays must be positive and span at least 3 decades");
  for (const auto& t : ts)
    if (t.counts.size() < 5 || !(t.bin_width_s > 0.0))
      throw std::invalid_argument("fit_pump_probe: each transient needs >= 5 bins and a positive bin width");

  PumpProbeFit out;
  auto times = [](const Transient& t) {
    std::vector<double> x(t.counts.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (static_cast<double>(i) + 0.5) * t.bin_width_s;
    return x;
  };

  // Starting refill time from the most recovered transient.
  const auto& last = ts.back();
  const auto xl = times(last);
  const auto& yl = last.counts;
  const double tail = median(std::vector<double>(yl.end() - static_cast<std::ptrdiff_t>(yl.size() / 5), yl.end()));
  const std::vector<double> start{yl.front() - tail, xl.back() / 5.0, tail};
  try {
    const auto f = nlls_fit(model_spec(ModelId::exp_decay), xl, yl, std::nullopt, start);
    out.readout_tau_s = f.value("tau");
  } catch (const FitFailed&) {
    // The joint search below still covers a factor of 4 around this guess.
    out.readout_tau_s = start[1];
    out.flags.emplace_back("readout_start_guess");
  }

  // Joint model over all transients: counts = steady + amp_i exp(-t / tau_r),
  // linear in (steady, amp_i) for fixed tau_r; tau_r minimizes the total RSS.
  struct Joint {
    double rss = kInf;
    Eigen::VectorXd coef;
    Eigen::MatrixXd inv;
  };
  const std::size_t nt = ts.size();
  std::size_t n_rows = 0;
  for (const auto& t : ts) n_rows += t.counts.size();
  auto joint = [&](double tau) {
    Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nt + 1), static_cast<Eigen::Index>(nt + 1));
    Eigen::VectorXd aty = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nt + 1));
    double yy = 0.0;
    for (std::size_t k = 0; k < nt; ++k) {
      const auto x = times(ts[k]);
      const auto c = static_cast<Eigen::Index>(k + 1);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = std::exp(-x[i] / tau);
        const double y = ts[k].counts[i];
        ata(0, 0) += 1.0;
        ata(0, c) += e;
        ata(c, c) += e * e;
        aty(0) += y;
        aty(c) += e * y;
        yy += y * y;
      }
      ata(c, 0) = ata(0, c);
    }
    Joint j;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ata);
    if (ldlt.info() != Eigen::Success) return j;
    j.coef = ldlt.solve(aty);
    j.rss = std::max(yy - j.coef.dot(aty), 0.0);
    j.inv = ldlt.solve(Eigen::MatrixXd::Identity(ata.rows(), ata.cols()));
    return j;
  };
  const double tau0 = out.readout_tau_s;
  const double lo = std::log(tau0 / 4.0), hi = std::log(tau0 * 4.0);
  constexpr int kGrid = 41;
  int best = 0;
  double best_rss = kInf;
  for (int g = 0; g < kGrid; ++g) {
    const double r = joint(std::exp(lo + (hi - lo) * g / (kGrid - 1))).rss;
    if (r < best_rss) {
      best_rss = r;
      best = g;
    }
  }
  double a = lo + (hi - lo) * std::max(best - 1, 0) / (kGrid - 1);
  double b = lo + (hi - lo) * std::min(best + 1, kGrid - 1) / (kGrid - 1);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (joint(std::exp(c)).rss < joint(std::exp(d)).rss)
      b = d;
    else
      a = c;
  }
  out.readout_tau_s = std::exp(0.5 * (a + b));
  if (best == 0 || best == kGrid - 1) out.flags.emplace_back("readout_tau_at_search_edge");
  const auto j = joint(out.readout_tau_s);
  if (!std::isfinite(j.rss)) throw FitFailed("fit_pump_probe: degenerate readout transients");
  const double dof = static_cast<double>(n_rows) - static_cast<double>(nt) - 1.0;
  const double var = dof > 0 ? j.rss / dof : 0.0;
  const double steady = j.coef(0);
  for (std::size_t k = 0; k < nt; ++k) {
    const auto c = static_cast<Eigen::Index>(k + 1);
    const double amp = j.coef(c);
    out.delays_s.push_back(ts[k].delay_s);
    out.amplitudes.push_back(amp);
    out.amplitude_errs.push_back(std::sqrt(std::max(var * j.inv(c, c), 0.0)));
    out.contrasts.push_back(amp / (steady + amp));
  }
  out.contrast = out.contrasts.back();

  for (std::size_t i = 1; i < out.amplitudes.size(); ++i) {
    const double tol = 3.0 * std::hypot(out.amplitude_errs[i], out.amplitude_errs[i - 1]);
    if (out.amplitudes[i] < out.amplitudes[i - 1] - tol) {
      out.flags.emplace_back("non_monotone");
      break;
    }
  }

  const double a_max = *std::max_element(out.amplitudes.begin(), out.amplitudes.end());
  double t_half = out.delays_s[out.delays_s.size() / 2];
  for (std::size_t i = 0; i < out.amplitudes.size(); ++i) {
    if (out.amplitudes[i] >= 0.5 * a_max) {
      t_half = out.delays_s[i];
      break;
    }
  }
  std::vector<double> err = out.amplitude_errs;
  const double err_floor = 1e-6 * std::max(std::abs(a_max), 1e-300);
  for (auto& e : err) e = std::max(e, err_floor);
  out.recovery = nlls_fit(model_spec(ModelId::exp_recovery), out.delays_s, out.amplitudes, err,
                          std::vector<double>{a_max, t_half / std::numbers::ln2});
  out.t1_s = out.recovery.value("T1");
  out.t1_err_s = out.recovery.error("T1");
  return out;
}

FitResult fit_odmr(std::span<const double> freqs, std::span<const double> signal) {
  if (freqs.size() != signal.size()) throw std::invalid_argument("fit_odmr: length mismatch");
  if (freqs.size() < 8) throw std::invalid_argument("fit_odmr: need at least 8 points");
  const double base = median(to_vec(signal));
  const auto mi = static_cast<std::size_t>(std::min_element(signal.begin(), signal.end()) - signal.begin());
  const double depth = base - signal[mi];
  double lo = freqs[mi], hi = freqs[mi];
  for (std::size_t i = mi; i-- > 0;) {
    if (signal[i] > base - 0.5 * depth) break;
    lo = freqs[i];
  }
  for (std::size_t i = mi + 1; i < freqs.size(); ++i) {
    if (signal[i] > base - 0.5 * depth) break;
    hi = freqs[i];
  }
  const double step = std::abs(freqs[1] - freqs[0]);
  const double fwhm = std::max(hi - lo + step, 2.0 * step);
  const std::vector<double> start{base, base != 0.0 ? depth / base : 0.0, freqs[mi], fwhm};
  auto fit = nlls_fit(model_spec(ModelId::lorentzian_dip), freqs, signal, std::nullopt, start);
  const double span = std::abs(freqs.back() - freqs.front());
  if (fit.value("fwhm") * 3.0 > span) fit.flags.emplace_back("span_below_3_fwhm");
  return fit;
}

FitResult fit_sinusoid_180(std::span<const double> angles, std::span<const double> values) {
  if (angles.size() != values.size()) throw std::invalid_argument("fit_sinusoid_180: length mismatch");
  if (angles.size() < 4) throw std::invalid_argument("fit_sinusoid_180: need at least 4 points");
  const auto [amin, amax] = std::minmax_element(angles.begin(), angles.end());
  if (*amax - *amin < 180.0 - 1e-9) throw std::invalid_argument("fit_sinusoid_180: angles must span >= 180 degrees");

  // Linear solve of m + c cos 2t + s sin 2t gives an exact start.
  const auto n = static_cast<Eigen::Index>(angles.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = 2.0 * angles[static_cast<std::size_t>(i)] * kDegToRad;
    a(i, 0) = 1.0;
    a(i, 1) = std::cos(t);
    a(i, 2) = std::sin(t);
    b(i) = values[static_cast<std::size_t>(i)];
  }
  const Eigen::Vector3d lin = a.colPivHouseholderQr().solve(b);
  const double amp0 = std::hypot(lin(1), lin(2));
  const double theta0 = 0.5 * std::atan2(lin(2), lin(1)) / kDegToRad;

  FitResult fit;
  bool identifiable = amp0 > 1e-12 * std::max(1.0, std::abs(lin(0)));
  if (identifiable) {
    try {
      fit = nlls_fit(model_spec(ModelId::sinusoid_180), angles, values, std::nullopt,
                     std::vector<double>{lin(0), amp0, theta0});
    } catch (const FitFailed&) {
      identifiable = false;
    }
  }
  if (!identifiable) {
    fit = FitResult{};
    fit.converged = true;
    fit.n_points = static_cast<int>(n);
    fit.set("mean", lin(0));
    fit.set("amplitude", amp0);
    fit.set("theta0", theta0, 0.0, "deg");
  }
  double amp = fit.value("amplitude");
  double th = fit.value("theta0");
  if (amp < 0.0) {
    amp = -amp;
    th += 90.0;
  }
  auto wrap = [](double d) {
    d = std::fmod(d, 180.0);
    return d < 0.0 ? d + 180.0 : d;
  };
  fit.set("amplitude", amp, fit.error("amplitude"));
  fit.set("theta0", wrap(th), fit.error("theta0"), "deg");
  fit.set("theta_max", wrap(th), fit.error("theta0"), "deg");
  fit.set("theta_min", wrap(th + 90.0), fit.error("theta0"), "deg");
  if (!identifiable || amp < 3.0 * fit.error("amplitude")) fit.flags.emplace_back("extrema_unidentifiable");
  return fit;
}

QeBound qe_lower_bound(double i_inf_mcps, double eta, double tau_ns) {
  if (!(i_inf_mcps > 0.0) || !(eta > 0.0) || !(tau_ns > 0.0))
    throw std::invalid_argument("qe_lower_bound: inputs must be positive");
  QeBound out;
  out.value = 2.0 * (i_inf_mcps * 1e6) * (tau_ns * 1e-9) / eta;
  out.out_of_model = out.value > 1.0;
  out.assumption = "QE >= I_inf / (eta * Gamma_max / 2) with Gamma_max = 1 / tau (saturated two-level ceiling)";
  return out;
}

}  // namespace photodyn
