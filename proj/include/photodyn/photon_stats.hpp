#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "photodyn/core.hpp"

namespace photodyn {

enum class WeightMode { uniform, lorentzian_pushforward };

std::string_view to_string(WeightMode m);
WeightMode weight_mode_from_string(std::string_view s);

/// Background Poissonian plus a weighted continuum of emitter Poissonians,
///   P(n) = (1 - p_e) Po(n; lambda_b) + p_e sum_j w_j Po(n; lambda_j),
/// lambda_j the midpoints of J equal cells on (0, lambda_max] and
/// w_j proportional to p(lambda_j) exp(-gamma lambda_j).
struct MixtureParams {
  double p_e = 0.0;
  double lambda_b = 1.0;
  double gamma = 0.0;
  double lambda_max = 10.0;
  int J = 64;
  WeightMode weight_mode = WeightMode::uniform;
  // lorentzian_pushforward only: detuning spread over the Lorentzian HWHM.
  double pushforward_width = 2.0;

  void validate() const;
};

std::vector<double> mixture_grid(const MixtureParams& params);
std::vector<double> mixture_weights(const MixtureParams& params);

/// Probabilities for n = 0..n_max, the last entry holding P(N >= n_max) so the
/// vector sums to one. Requires n_max >= ceil(lambda_max + 6 sqrt(lambda_max)).
std::vector<double> mixture_pmf(const MixtureParams& params, int n_max);

/// Photon-number histogram of a trace: unit bins centred on 0..max count.
Histogram count_histogram(const BinnedTrace& trace);

struct MixtureOptions {
  int J = 64;
  double pushforward_width = 2.0;
  int max_evaluations = 4000;
};

struct MixtureFit {
  MixtureParams params;
  FitResult fit;  // p_e, lambda_b, gamma with standard errors; goodness = logL
  double log_likelihood = 0.0;
  std::int64_t n_bins = 0;
};

/// Multinomial maximum likelihood at fixed lambda_max, best of >= 5
/// Nelder-Mead starts. Needs a histogram over >= 1000 trace bins; throws
/// FitFailed when no start converges or the data carry no information.
MixtureFit fit_mixture(const Histogram& hist, double lambda_max, WeightMode mode, const MixtureOptions& options = {});

struct BicPoint {
  double lambda_max = 0.0;
  double bic = 0.0;
  double log_likelihood = 0.0;
  double p_e = 0.0;
  bool ok = false;
};

struct LambdaSelection {
  MixtureFit best;
  std::vector<BicPoint> curve;
};

/// BIC = 4 ln(n) - 2 logL over the grid; returns the argmin fit and the
/// whole curve. Grid points are fit in parallel.
LambdaSelection select_lambda_max(const Histogram& hist, std::span<const double> lambda_max_grid, WeightMode mode,
                                  const MixtureOptions& options = {});

/// p_e with its standard error.
ParamEstimate on_fraction(const MixtureFit& fit);

struct PmfComparison {
  std::vector<double> empirical;  // normalized
  std::vector<double> model;
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 0.0;
};

/// Pearson chi^2 of the histogram against the fitted pmf, merging sparse
/// cells (expected < 5); dof subtracts the four fitted parameters.
PmfComparison compare_pmf(const Histogram& hist, const MixtureParams& params);

}  // namespace photodyn
