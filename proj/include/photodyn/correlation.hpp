#pragma once

#include <optional>
#include <vector>

#include "photodyn/core.hpp"

namespace photodyn {

struct G2Curve {
  std::vector<double> lags_ns;  // bin centres, symmetric about 0
  std::vector<double> values;
  std::vector<std::int64_t> raw;
  double normalization = 0.0;  // expected accidental coincidences per bin, r^2 T dtau
  double bin_width_ns = 0.0;

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] std::size_t zero_index() const { return values.size() / 2; }
  /// Poisson error of each value.
  [[nodiscard]] std::vector<double> errors() const;
};

/// Autocorrelation of a single stream. Bin k collects ordered pairs with
/// round(dt / bin_width) = k, so the zero bin holds |dt| < bin_width / 2.
/// Pairs are found with a sliding window: O(n k) for k tags per window.
/// The stream is cut into chunks processed in parallel; a pair belongs to
/// the chunk holding its earlier tag. Throws InsufficientData for fewer
/// than two tags.
G2Curve g2_histogram(const TimeTagStream& stream, double max_lag_ns, double bin_width_ns);

/// Merges `factor` adjacent bins on each side of zero (zero bin kept at
/// the centre); used for long-lag views.
G2Curve rebin_g2(const G2Curve& curve, int factor);

struct G2Fit {
  FitResult antibunching;               // g0, tau_a
  std::optional<FitResult> bunching;    // g0, tau_a, amp_b, tau_b
  double rss_antibunching = 0.0;
  std::optional<double> rss_bunching;
  std::vector<std::string> flags;
};

struct G2FitOptions {
  bool fit_bunching = true;
  double tau_guess_ns = 1.26;
  double tau_b_guess_ns = 0.0;  // 0 picks a tenth of the lag range
};

/// Fits 1 - (1 - g0) exp(-|t|/tau_a), and optionally the bunching extension
/// + A_b exp(-|t|/tau_b). Requires lags out to 5 tau_guess. A dip too
/// shallow to define tau_a is flagged `tau_unidentifiable`.
G2Fit fit_g2(const G2Curve& curve, const G2FitOptions& options = {});

}  // namespace photodyn
