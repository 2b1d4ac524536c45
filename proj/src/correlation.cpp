#include "photodyn/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "photodyn/errors.hpp"
#include "photodyn/fit.hpp"
#include "photodyn/parallel.hpp"

namespace photodyn {

std::vector<double> G2Curve::errors() const {
  std::vector<double> e(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i)
    e[i] = std::sqrt(static_cast<double>(std::max<std::int64_t>(raw[i], 1))) / normalization;
  return e;
}

G2Curve g2_histogram(const TimeTagStream& stream, double max_lag_ns, double bin_width_ns) {
  if (!(bin_width_ns > 0.0)) throw std::invalid_argument("g2_histogram: bin_width must be positive");
  if (!(max_lag_ns >= 10.0 * bin_width_ns)) throw std::invalid_argument("g2_histogram: max_lag must be >= 10 bin widths");
  if (stream.size() < 2) throw InsufficientData("g2_histogram: need at least two tags");

  const auto k_max = static_cast<std::int64_t>(std::floor(max_lag_ns / bin_width_ns));
  const double bw_ticks = bin_width_ns * kTicksPerNs;
  // Largest separation still landing in bin k_max.
  const auto reach = static_cast<std::int64_t>(std::ceil((static_cast<double>(k_max) + 0.5) * bw_ticks));
  const auto tags = stream.timestamps();
  const std::size_t n = tags.size();
  const std::size_t n_bins = static_cast<std::size_t>(2 * k_max + 1);

  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(worker_count() * 4, n / 4096 + 1));
  std::vector<std::vector<std::int64_t>> partial(chunks, std::vector<std::int64_t>(n_bins, 0));
  parallel_for(chunks, [&](std::size_t c) {
    auto& h = partial[c];
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::int64_t dt = tags[j] - tags[i];
        if (dt > reach) break;
        const auto k = static_cast<std::int64_t>(std::floor(static_cast<double>(dt) / bw_ticks + 0.5));
        if (k > k_max) continue;
        ++h[static_cast<std::size_t>(k_max + k)];
        ++h[static_cast<std::size_t>(k_max - k)];
      }
    }
  });

  G2Curve out;
  out.bin_width_ns = bin_width_ns;
  out.raw.assign(n_bins, 0);
  for (const auto& h : partial)
    for (std::size_t b = 0; b < n_bins; ++b) out.raw[b] += h[b];
  const double t_s = stream.duration_s();
  const double rate = static_cast<double>(n) / t_s;
  out.normalization = rate * rate * t_s * bin_width_ns * 1e-9;
  out.lags_ns.resize(n_bins);
  out.values.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.lags_ns[b] = static_cast<double>(static_cast<std::int64_t>(b) - k_max) * bin_width_ns;
    out.values[b] = static_cast<double>(out.raw[b]) / out.normalization;
  }
  return out;
}

G2Curve rebin_g2(const G2Curve& curve, int factor) {
  if (factor < 1 || factor % 2 == 0) throw std::invalid_argument("rebin_g2: factor must be odd and >= 1");
  const auto k_max = static_cast<std::int64_t>(curve.size() / 2);
  const std::int64_t half = factor / 2;
  const std::int64_t k_new = (k_max - half) / factor;
  G2Curve out;
  out.bin_width_ns = curve.bin_width_ns * factor;
  out.normalization = curve.normalization * factor;
  for (std::int64_t k = -k_new; k <= k_new; ++k) {
    std::int64_t raw = 0;
    for (std::int64_t d = -half; d <= half; ++d) raw += curve.raw[static_cast<std::size_t>(k_max + k * factor + d)];
    out.raw.push_back(raw);
    out.lags_ns.push_back(static_cast<double>(k) * out.bin_width_ns);
    out.values.push_back(static_cast<double>(raw) / out.normalization);
  }
  return out;
}

G2Fit fit_g2(const G2Curve& curve, const G2FitOptions& opt) {
  if (curve.size() < 5) throw std::invalid_argument("fit_g2: curve too short");
  const double max_lag = curve.lags_ns.back();
  if (max_lag < 5.0 * opt.tau_guess_ns) throw std::invalid_argument("fit_g2: lags must reach 5 expected tau_a");
  const auto err = curve.errors();
  const double g0_guess = std::clamp(curve.values[curve.zero_index()], 0.0, 1.0);

  G2Fit out;
  try {
    out.antibunching = nlls_fit(model_spec(ModelId::g2_antibunching), curve.lags_ns, curve.values, err,
                                std::vector<double>{g0_guess, opt.tau_guess_ns});
    out.rss_antibunching = out.antibunching.goodness;
  } catch (const FitFailed& e) {
    out.flags.emplace_back("tau_unidentifiable");
    out.antibunching = FitResult{};
    out.antibunching.set("g0", g0_guess);
    out.antibunching.set("tau_a", std::nan(""), 0.0, "ns");
    out.antibunching.flags.emplace_back(e.what());
  }
  const double g0 = out.antibunching.value("g0");
  const double g0_err = out.antibunching.error("g0");
  if (!out.flags.empty() || 1.0 - g0 < std::max(0.05, 3.0 * g0_err)) {
    if (out.flags.empty()) out.flags.emplace_back("tau_unidentifiable");
  }

  if (opt.fit_bunching && out.flags.empty()) {
    const double tau_b = opt.tau_b_guess_ns > 0.0 ? opt.tau_b_guess_ns : 0.1 * max_lag;
    try {
      out.bunching = nlls_fit(model_spec(ModelId::g2_bunching), curve.lags_ns, curve.values, err,
                              std::vector<double>{g0, out.antibunching.value("tau_a"), 0.01, tau_b});
      out.rss_bunching = out.bunching->goodness;
    } catch (const FitFailed&) {
      out.flags.emplace_back("bunching_unidentifiable");
    }
  }
  return out;
}

}  // namespace photodyn
