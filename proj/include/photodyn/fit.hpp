#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photodyn/core.hpp"

namespace photodyn {

enum class ModelId {
  saturation,       // I_inf * P / (P + P_sat)
  gaussian,         // amp * exp(-(x - center)^2 / (2 sigma^2)) + offset
  lorentzian_dip,   // baseline * (1 - contrast * h^2 / (h^2 + (x - f0)^2)), h = fwhm / 2
  exp_recovery,     // amp * (1 - exp(-x / T1))
  sinusoid_180,     // mean + amplitude * cos(2 (x - theta0) pi / 180)
  double_gaussian,  // two gaussians sharing one offset
  exp_decay,        // amp * exp(-x / tau) + offset
  g2_antibunching,  // 1 - (1 - g0) exp(-|x| / tau_a)
  g2_bunching,      // 1 - (1 - g0) exp(-|x| / tau_a) + amp_b exp(-|x| / tau_b)
};

std::string_view to_string(ModelId id);

struct ModelSpec {
  ModelId id;
  std::vector<std::string> names;
  std::vector<std::string> units;
  std::vector<double> lower;  // -inf / +inf for open bounds
  std::vector<double> upper;
  bool analytic_jacobian = true;

  std::function<double(double, std::span<const double>)> f;
  // Writes d f / d p_k into grad (size = names.size()).
  std::function<void(double, std::span<const double>, std::span<double>)> grad;

  [[nodiscard]] std::size_t n_params() const { return names.size(); }
};

ModelSpec model_spec(ModelId id);

/// Finite-difference gradient (central differences), used to check the
/// analytic Jacobians.
std::vector<double> numeric_gradient(const ModelSpec& spec, double x, std::span<const double> p);

struct NllsOptions {
  int max_iterations = 200;
  double xtol = 1e-8;  // relative parameter change
  std::vector<bool> fixed;  // optional, per parameter
};

/// Weighted Levenberg-Marquardt. Parameters are projected back into the
/// model bounds after each step. Uncertainties come from the inverse normal
/// matrix, scaled by the reduced chi^2 when y_err is absent.
/// Throws std::invalid_argument on too few points and FitFailed on a
/// singular Jacobian; hitting max_iterations returns converged = false.
FitResult nlls_fit(const ModelSpec& spec, std::span<const double> x, std::span<const double> y,
                   std::optional<std::span<const double>> y_err, std::span<const double> start,
                   const NllsOptions& options = {});

/// Evaluates the model at x for the parameter values stored in a FitResult.
double evaluate(const ModelSpec& spec, const FitResult& fit, double x);

// ---- named fits -----------------------------------------------------------

/// I(P) = I_inf P / (P + P_sat). Also reports `half_point_ratio`, the model
/// value at P_sat divided by I_inf.
FitResult fit_saturation(std::span<const double> powers, std::span<const double> rates,
                         std::optional<std::span<const double>> rate_err = std::nullopt);

/// Gaussian fit to a histogram: center, sigma, fwhm = 2.355 sigma, two_sigma.
/// Flags `delta_like` when sigma is below half a bin width.
FitResult fit_gaussian_histogram(const Histogram& hist);

struct SpectrumOptions {
  double zpl_search_lo_nm = 560.0;
  double zpl_search_hi_nm = 700.0;
  double zpl_fit_half_window_nm = 0.6;
  bool double_zpl = false;
  double zpl_pair_guess_nm = 0.12;  // guess for the second line, red of the first
  double psb_search_lo_nm = 1.0;     // first sideband search window, red of the ZPL
  double psb_search_hi_nm = 12.0;
  double psb_fit_half_window_nm = 1.5;
  double dw_zpl_half_band_nm = 2.0;
  double dw_total_lo_nm = 560.0;
  double dw_total_hi_nm = 700.0;
};

struct SpectrumAnalysis {
  double zpl_center_nm = 0.0;
  std::optional<double> zpl2_center_nm;
  std::optional<double> zpl_area_ratio;  // first / second line when double_zpl
  double dw_factor = 0.0;
  std::optional<double> psb_center_nm;
  std::optional<double> gap_thz;
  std::vector<std::string> flags;
};

SpectrumAnalysis analyze_spectrum(const Spectrum& spectrum, const SpectrumOptions& options = {});

struct AnticorrelationResult {
  double pearson_r = 0.0;
  double total_intensity_cv = 0.0;
  std::vector<double> area1;
  std::vector<double> area2;
  int failed_frames = 0;
};

/// Double-Gaussian areas per frame, their Pearson correlation and the
/// coefficient of variation of the summed area. Needs >= 20 frames.
AnticorrelationResult two_line_anticorrelation(const std::vector<Spectrum>& frames,
                                               const SpectrumOptions& options = {});

struct Transient {
  double delay_s = 0.0;
  double bin_width_s = 0.0;
  std::vector<double> counts;  // mean counts per bin after the readout starts
};

struct PumpProbeFit {
  FitResult recovery;  // amp, T1
  double t1_s = 0.0;
  double t1_err_s = 0.0;
  double contrast = 0.0;  // (early - steady) / early of the longest delay
  double readout_tau_s = 0.0;
  std::vector<double> delays_s;
  std::vector<double> amplitudes;
  std::vector<double> amplitude_errs;
  std::vector<double> contrasts;
  std::vector<std::string> flags;
};

/// Readout transients share one refill time and one steady level; each
/// transient adds its own amplitude. The refill time minimizes the joint
/// residual, the rest follows by linear least squares. Amplitude versus delay
/// is fit to A (1 - exp(-delay / T1)).
PumpProbeFit fit_pump_probe(const std::vector<Transient>& transients);

/// Lorentzian dip with flat baseline on normalized PL (MW on / MW off).
/// Reports f0, contrast (fractional dip depth) and fwhm.
FitResult fit_odmr(std::span<const double> freqs_ghz, std::span<const double> signal);

/// v = mean + amplitude cos(2 (theta - theta0)); reports theta_max and
/// theta_min in [0, 180). Flags `extrema_unidentifiable` for a flat curve.
FitResult fit_sinusoid_180(std::span<const double> angles_deg, std::span<const double> values);

struct QeBound {
  double value = 0.0;
  bool out_of_model = false;
  std::string assumption;
};

/// QE >= 2 I_inf tau / eta: the detected saturation rate against the
/// two-level ceiling Gamma/2 scaled by eta.
QeBound qe_lower_bound(double i_inf_mcps, double eta, double tau_ns);

}  // namespace photodyn
