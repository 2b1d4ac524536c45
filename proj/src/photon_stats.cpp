#include "photodyn/photon_stats.hpp"

#include <gsl/gsl_cdf.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "photodyn/errors.hpp"
#include "photodyn/parallel.hpp"

namespace photodyn {
namespace {

double log_poisson(int n, double lambda) {
  if (lambda <= 0.0) return n == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return n * std::log(lambda) - lambda - std::lgamma(n + 1.0);
}

int required_n_max(double lambda_max) {
  return static_cast<int>(std::ceil(lambda_max + 6.0 * std::sqrt(lambda_max)));
}

// Observed counts indexed by photon number.
std::vector<double> photon_counts(const Histogram& hist) {
  std::vector<double> c;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double centre = hist.center(i);
    const double n = std::round(centre);
    if (n < 0 || std::abs(centre - n) > 1e-9 || std::abs(hist.width(i) - 1.0) > 1e-9)
      throw std::invalid_argument("mixture fit: histogram must use unit bins centred on photon numbers");
    const auto k = static_cast<std::size_t>(n);
    if (c.size() <= k) c.resize(k + 1, 0.0);
    c[k] += static_cast<double>(hist.counts[i]);
  }
  return c;
}

struct Problem {
  std::vector<double> counts;     // by photon number
  std::vector<double> bg_lgamma;  // lgamma(n + 1)
  std::vector<double> lambdas;
  std::vector<double> base_weights;         // p(lambda_j), unnormalized
  std::vector<std::vector<double>> po;      // po[j][n] = Po(n; lambda_j)
  MixtureParams shape;

  double log_likelihood(double p_e, double lambda_b, double gamma) const {
    const std::size_t J = lambdas.size();
    std::vector<double> w(J);
    double norm = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      w[j] = base_weights[j] * std::exp(-gamma * lambdas[j]);
      norm += w[j];
    }
    if (!(norm > 0.0)) return -std::numeric_limits<double>::infinity();
    const double log_lb = std::log(lambda_b);
    double ll = 0.0;
    for (std::size_t n = 0; n < counts.size(); ++n) {
      if (counts[n] == 0.0) continue;
      double em = 0.0;
      for (std::size_t j = 0; j < J; ++j) em += w[j] * po[j][n];
      const double bg = std::exp(static_cast<double>(n) * log_lb - lambda_b - bg_lgamma[n]);
      const double p = (1.0 - p_e) * bg + p_e * em / norm;
      if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
      ll += counts[n] * std::log(p);
    }
    return ll;
  }
};

// Unconstrained coordinates: logit(p_e), log(lambda_b), log(gamma * lambda_max + 1e-8).
struct Natural {
  double p_e, lambda_b, gamma;
};

Natural to_natural(const double* u, double lambda_max) {
  return {1.0 / (1.0 + std::exp(-u[0])), std::exp(u[1]), std::max(0.0, std::exp(u[2]) - 1e-8) / lambda_max};
}

std::array<double, 3> to_unconstrained(const Natural& v, double lambda_max) {
  const double p = std::clamp(v.p_e, 1e-9, 1.0 - 1e-9);
  return {std::log(p / (1.0 - p)), std::log(v.lambda_b), std::log(v.gamma * lambda_max + 1e-8)};
}

struct GslContext {
  const Problem* problem;
  double lambda_max;
};

double gsl_objective(const gsl_vector* x, void* data) {
  const auto* ctx = static_cast<const GslContext*>(data);
  const double u[3] = {gsl_vector_get(x, 0), gsl_vector_get(x, 1), gsl_vector_get(x, 2)};
  const auto v = to_natural(u, ctx->lambda_max);
  const double ll = ctx->problem->log_likelihood(v.p_e, v.lambda_b, v.gamma);
  return std::isfinite(ll) ? -ll : 1e300;
}

struct StartResult {
  std::array<double, 3> u{};
  double nll = std::numeric_limits<double>::infinity();
  bool converged = false;
};

StartResult run_simplex(const Problem& problem, double lambda_max, const std::array<double, 3>& start, int max_evals) {
  GslContext ctx{&problem, lambda_max};
  gsl_multimin_function fn{&gsl_objective, 3, &ctx};
  gsl_vector* x = gsl_vector_alloc(3);
  gsl_vector* step = gsl_vector_alloc(3);
  for (std::size_t k = 0; k < 3; ++k) {
    gsl_vector_set(x, k, start[k]);
    gsl_vector_set(step, k, 0.7);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 3);
  gsl_multimin_fminimizer_set(s, &fn, x, step);
  StartResult out;
  int status = GSL_CONTINUE;
  for (int it = 0; it < max_evals && status == GSL_CONTINUE; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-7);
  }
  out.converged = status == GSL_SUCCESS;
  for (std::size_t k = 0; k < 3; ++k) out.u[k] = gsl_vector_get(s->x, k);
  out.nll = s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return out;
}

Problem make_problem(const Histogram& hist, double lambda_max, WeightMode mode, const MixtureOptions& opt) {
  Problem pr;
  pr.counts = photon_counts(hist);
  pr.shape.lambda_max = lambda_max;
  pr.shape.J = opt.J;
  pr.shape.weight_mode = mode;
  pr.shape.pushforward_width = opt.pushforward_width;
  pr.shape.validate();
  pr.lambdas = mixture_grid(pr.shape);
  MixtureParams flat = pr.shape;
  flat.gamma = 0.0;
  pr.base_weights = mixture_weights(flat);
  pr.bg_lgamma.resize(pr.counts.size());
  for (std::size_t n = 0; n < pr.counts.size(); ++n) pr.bg_lgamma[n] = std::lgamma(static_cast<double>(n) + 1.0);
  pr.po.assign(pr.lambdas.size(), std::vector<double>(pr.counts.size()));
  for (std::size_t j = 0; j < pr.lambdas.size(); ++j)
    for (std::size_t n = 0; n < pr.counts.size(); ++n) pr.po[j][n] = std::exp(log_poisson(static_cast<int>(n), pr.lambdas[j]));
  return pr;
}

}  // namespace

std::string_view to_string(WeightMode m) {
  return m == WeightMode::uniform ? "uniform" : "lorentzian_pushforward";
}

WeightMode weight_mode_from_string(std::string_view s) {
  if (s == "uniform") return WeightMode::uniform;
  if (s == "lorentzian_pushforward") return WeightMode::lorentzian_pushforward;
  throw std::invalid_argument("unknown weight mode '" + std::string(s) + "'");
}

void MixtureParams::validate() const {
  if (!(p_e >= 0.0 && p_e <= 1.0)) throw std::invalid_argument("mixture: p_e must lie in [0,1]");
  if (!(lambda_b > 0.0)) throw std::invalid_argument("mixture: lambda_b must be positive");
  if (!(gamma >= 0.0)) throw std::invalid_argument("mixture: gamma must be >= 0");
  if (!(lambda_max > 0.0)) throw std::invalid_argument("mixture: lambda_max must be positive");
  if (J < 2) throw std::invalid_argument("mixture: J must be >= 2");
  if (weight_mode == WeightMode::lorentzian_pushforward && !(pushforward_width > 0.0))
    throw std::invalid_argument("mixture: pushforward_width must be positive");
}

std::vector<double> mixture_grid(const MixtureParams& p) {
  std::vector<double> l(static_cast<std::size_t>(p.J));
  const double h = p.lambda_max / p.J;
  for (int j = 0; j < p.J; ++j) l[static_cast<std::size_t>(j)] = (j + 0.5) * h;
  return l;
}

std::vector<double> mixture_weights(const MixtureParams& p) {
  const auto l = mixture_grid(p);
  std::vector<double> w(l.size());
  double norm = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) {
    double base = 1.0;
    if (p.weight_mode == WeightMode::lorentzian_pushforward) {
      // lambda = lambda_max / (1 + z^2), z = detuning / HWHM ~ Normal(0, width).
      const double z = std::sqrt(p.lambda_max / l[j] - 1.0);
      const double s = p.pushforward_width;
      const double phi = std::exp(-0.5 * z * z / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi));
      base = phi * p.lambda_max / (l[j] * l[j] * z);
    }
    w[j] = base * std::exp(-p.gamma * l[j]);
    norm += w[j];
  }
  for (auto& v : w) v /= norm;
  return w;
}

std::vector<double> mixture_pmf(const MixtureParams& p, int n_max) {
  p.validate();
  if (n_max < required_n_max(p.lambda_max))
    throw std::invalid_argument("mixture_pmf: n_max must be >= ceil(lambda_max + 6 sqrt(lambda_max)) = " +
                                std::to_string(required_n_max(p.lambda_max)));
  const auto l = mixture_grid(p);
  const auto w = mixture_weights(p);
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    double em = 0.0;
    for (std::size_t j = 0; j < l.size(); ++j) em += w[j] * std::exp(log_poisson(n, l[j]));
    out[static_cast<std::size_t>(n)] = (1.0 - p.p_e) * std::exp(log_poisson(n, p.lambda_b)) + p.p_e * em;
  }
  // The last entry collects the upper tail, P(N >= n_max).
  double em_tail = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) em_tail += w[j] * gsl_cdf_poisson_Q(static_cast<unsigned>(n_max - 1), l[j]);
  out.back() = (1.0 - p.p_e) * gsl_cdf_poisson_Q(static_cast<unsigned>(n_max - 1), p.lambda_b) + p.p_e * em_tail;
  return out;
}

Histogram count_histogram(const BinnedTrace& trace) {
  std::int64_t n_max = 0;
  for (auto c : trace.counts) n_max = std::max(n_max, c);
  Histogram h;
  h.edges = integer_edges(n_max);
  h.counts.assign(static_cast<std::size_t>(n_max) + 1, 0);
  for (auto c : trace.counts) ++h.counts[static_cast<std::size_t>(c)];
  h.total = static_cast<std::int64_t>(trace.counts.size());
  return h;
}

MixtureFit fit_mixture(const Histogram& hist, double lambda_max, WeightMode mode, const MixtureOptions& opt) {
  if (hist.total < 1000) throw std::invalid_argument("fit_mixture: histogram must hold >= 1000 bins");
  const Problem pr = make_problem(hist, lambda_max, mode, opt);
  int occupied = 0;
  double n_total = 0.0, n_zero = 0.0;
  for (std::size_t n = 0; n < pr.counts.size(); ++n) {
    if (pr.counts[n] > 0) ++occupied;
    n_total += pr.counts[n];
  }
  if (!pr.counts.empty()) n_zero = pr.counts[0];
  if (occupied < 2) throw FitFailed("fit_mixture: histogram has a single occupied photon number; nothing to fit");

  const double lb0 = std::max(0.02, -std::log(std::max(n_zero, 1.0) / n_total));
  const std::array<Natural, 6> starts{{
      {0.05, lb0, 0.1 / lambda_max},
      {0.2, lb0, 1.0 / lambda_max},
      {0.5, 0.5 * lb0, 3.0 / lambda_max},
      {0.1, 2.0 * lb0, 6.0 / lambda_max},
      {0.3, lb0, 0.01 / lambda_max},
      {0.02, 0.8 * lb0, 2.0 / lambda_max},
  }};
  StartResult best;
  int converged_starts = 0;
  for (const auto& s : starts) {
    const auto r = run_simplex(pr, lambda_max, to_unconstrained(s, lambda_max), opt.max_evaluations);
    if (r.converged) ++converged_starts;
    if (std::isfinite(r.nll) && r.nll < best.nll) best = r;
  }
  if (converged_starts == 0 || !std::isfinite(best.nll) || best.nll >= 1e300)
    throw FitFailed("fit_mixture: no Nelder-Mead start converged (lambda_max = " + std::to_string(lambda_max) +
                    ", occupied photon numbers = " + std::to_string(occupied) + ")");
  // Restart from the best point to shake off a collapsed simplex.
  const auto polished = run_simplex(pr, lambda_max, best.u, opt.max_evaluations);
  if (polished.nll <= best.nll) best = polished;

  const auto v = to_natural(best.u.data(), lambda_max);
  MixtureFit out;
  out.params = pr.shape;
  out.params.p_e = v.p_e;
  out.params.lambda_b = v.lambda_b;
  out.params.gamma = v.gamma;
  out.log_likelihood = -best.nll;
  out.n_bins = hist.total;

  // Standard errors from the observed information in natural coordinates,
  // with steps kept inside the domain.
  const std::array<double, 3> x0{v.p_e, v.lambda_b, v.gamma};
  std::array<double, 3> h{};
  h[0] = 1e-4 * std::max(v.p_e, 1e-3);
  h[1] = 1e-4 * v.lambda_b;
  h[2] = 1e-4 * std::max(v.gamma, 0.1 / lambda_max);
  std::array<double, 3> centre = x0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double lo = k == 0 ? 0.0 : (k == 1 ? 1e-300 : 0.0);
    if (centre[k] - 2.0 * h[k] < lo) centre[k] = lo + 2.0 * h[k];
    if (k == 0 && centre[k] + 2.0 * h[k] > 1.0) centre[k] = 1.0 - 2.0 * h[k];
  }
  auto nll = [&](std::array<double, 3> x) { return -pr.log_likelihood(x[0], x[1], x[2]); };
  Eigen::Matrix3d hess;
  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      auto x = centre;
      double val;
      if (a == b) {
        const double f0 = nll(x);
        x[a] += h[a];
        const double fp = nll(x);
        x[a] -= 2 * h[a];
        const double fm = nll(x);
        val = (fp - 2 * f0 + fm) / (h[a] * h[a]);
      } else {
        auto xpp = x, xpm = x, xmp = x, xmm = x;
        xpp[a] += h[a]; xpp[b] += h[b];
        xpm[a] += h[a]; xpm[b] -= h[b];
        xmp[a] -= h[a]; xmp[b] += h[b];
        xmm[a] -= h[a]; xmm[b] -= h[b];
        val = (nll(xpp) - nll(xpm) - nll(xmp) + nll(xmm)) / (4 * h[a] * h[b]);
      }
      hess(a, b) = hess(b, a) = val;
    }
  }
  std::array<double, 3> err{};
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(hess);
  if (eig.eigenvalues().minCoeff() > 0.0) {
    const Eigen::Matrix3d cov = hess.inverse();
    for (int k = 0; k < 3; ++k) err[static_cast<std::size_t>(k)] = std::sqrt(cov(k, k));
  } else {
    // Boundary optimum or flat direction: fall back to marginal curvature.
    for (int k = 0; k < 3; ++k) err[static_cast<std::size_t>(k)] = hess(k, k) > 0 ? 1.0 / std::sqrt(hess(k, k)) : INFINITY;
    out.fit.flags.emplace_back("information_not_positive_definite");
  }

  out.fit.set("p_e", v.p_e, err[0]);
  out.fit.set("lambda_b", v.lambda_b, err[1], "counts/bin");
  out.fit.set("gamma", v.gamma, err[2], "1/count");
  out.fit.set("lambda_max", lambda_max, 0.0, "counts/bin");
  out.fit.goodness = out.log_likelihood;
  out.fit.goodness_kind = GoodnessKind::log_likelihood;
  out.fit.converged = true;
  out.fit.n_points = static_cast<int>(hist.total);
  if (converged_starts < static_cast<int>(starts.size())) out.fit.flags.emplace_back("some_starts_unconverged");
  return out;
}

LambdaSelection select_lambda_max(const Histogram& hist, std::span<const double> grid, WeightMode mode,
                                  const MixtureOptions& opt) {
  if (grid.size() < 3) throw std::invalid_argument("select_lambda_max: grid needs at least 3 points");
  std::vector<std::optional<MixtureFit>> fits(grid.size());
  std::vector<std::string> errors(grid.size());
  parallel_for(grid.size(), [&](std::size_t i) {
    try {
      fits[i] = fit_mixture(hist, grid[i], mode, opt);
    } catch (const FitFailed& e) {
      errors[i] = e.what();
    }
  });
  LambdaSelection out;
  const double ln_n = std::log(static_cast<double>(hist.total));
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    BicPoint pt;
    pt.lambda_max = grid[i];
    if (fits[i]) {
      pt.ok = true;
      pt.log_likelihood = fits[i]->log_likelihood;
      pt.bic = 4.0 * ln_n - 2.0 * pt.log_likelihood;
      pt.p_e = fits[i]->params.p_e;
      if (!best || pt.bic < out.curve[*best].bic) best = i;
    } else {
      pt.bic = std::numeric_limits<double>::quiet_NaN();
    }
    out.curve.push_back(pt);
  }
  if (!best) throw FitFailed("select_lambda_max: every grid fit failed; first error: " + errors.front());
  out.best = *fits[*best];
  return out;
}

ParamEstimate on_fraction(const MixtureFit& fit) {
  return {fit.params.p_e, fit.fit.error("p_e"), ""};
}

PmfComparison compare_pmf(const Histogram& hist, const MixtureParams& params) {
  const auto counts = photon_counts(hist);
  const int n_max = std::max(static_cast<int>(counts.size()) - 1, required_n_max(params.lambda_max));
  const auto pmf = mixture_pmf(params, n_max);
  double total = 0.0;
  for (double c : counts) total += c;
  PmfComparison out;
  out.empirical.assign(static_cast<std::size_t>(n_max) + 1, 0.0);
  out.model = pmf;
  for (std::size_t n = 0; n < counts.size(); ++n) out.empirical[n] = counts[n] / total;

  // Merge cells left to right until each expects >= 5; a short remainder
  // joins the last cell.
  std::vector<std::pair<double, double>> cells;  // observed, expected
  double o = 0.0, e = 0.0;
  for (std::size_t n = 0; n < pmf.size(); ++n) {
    o += n < counts.size() ? counts[n] : 0.0;
    e += pmf[n] * total;
    if (e >= 5.0) {
      cells.emplace_back(o, e);
      o = e = 0.0;
    }
  }
  if (!cells.empty()) {
    cells.back().first += o;
    cells.back().second += e;
  } else {
    cells.emplace_back(o, e);
  }
  for (const auto& [obs, exp] : cells) out.chi2 += (obs - exp) * (obs - exp) / exp;
  out.dof = static_cast<int>(cells.size()) - 1 - 4;
  out.p_value = out.dof > 0 ? gsl_cdf_chisq_Q(out.chi2, out.dof) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace photodyn
