#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/parallel.hpp"

namespace heatlab {

struct MomentEstimate {
  double p = 2.0;
  double value = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n_reps = 0;
};

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double r2 = 0.0;
  std::size_t n_scales = 0;
};

struct Interval95 {
  double lo = 0.0;
  double hi = 0.0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

// Unbiased index in [0, n) from 64 random bits (multiply-shift).
inline std::size_t bounded_index(std::uint64_t bits, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(bits) * n) >> 64);
}

namespace detail {

inline double power_mean(std::span<const double> sorted_pow, const std::vector<std::size_t>* idx) {
  double s = 0.0;
  if (idx) {
    for (std::size_t i : *idx) s += sorted_pow[i];
    return s / static_cast<double>(idx->size());
  }
  for (double x : sorted_pow) s += x;
  return s / static_cast<double>(sorted_pow.size());
}

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, v.size() - 1);
  const double f = pos - static_cast<double>(i);
  return v[i] + f * (v[j] - v[i]);
}

}  // namespace detail

// Plug-in estimate of (E|X|^p)^(1/p) with a bootstrap percentile 95% interval.
// Samples are sorted first, so the estimate does not depend on the order in
// which replications arrived.
inline MomentEstimate estimate_moment(std::span<const double> samples, double p, std::size_t bootstrap,
                                      std::uint64_t seed = 0) {
  if (!(p >= 1.0)) throw DomainError("estimate_moment: p must be >= 1");
  if (samples.size() < 2) throw DomainError("estimate_moment: need at least 2 replications");
  std::vector<double> pw(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) throw DomainError("estimate_moment: non-finite sample");
    pw[i] = std::pow(std::fabs(samples[i]), p);
  }
  std::sort(pw.begin(), pw.end());
  MomentEstimate est;
  est.p = p;
  est.n_reps = samples.size();
  est.value = std::pow(detail::power_mean(pw, nullptr), 1.0 / p);
  est.ci_lo = est.ci_hi = est.value;
  if (bootstrap > 0) {
    std::mt19937_64 rng(seed);
    std::vector<double> stats(bootstrap);
    std::vector<std::size_t> idx(pw.size());
    for (std::size_t b = 0; b < bootstrap; ++b) {
      for (auto& i : idx) i = bounded_index(rng(), pw.size());
      stats[b] = std::pow(detail::power_mean(pw, &idx), 1.0 / p);
    }
    std::sort(stats.begin(), stats.end());
    est.ci_lo = std::min(est.value, detail::quantile_sorted(stats, 0.025));
    est.ci_hi = std::max(est.value, detail::quantile_sorted(stats, 0.975));
  }
  return est;
}

// Runs `sampler(rep)` for every replication index and estimates its moment.
inline MomentEstimate estimate_moment(const std::function<double(std::size_t)>& sampler, double p,
                                      std::size_t n_reps, std::size_t bootstrap, std::uint64_t seed = 0,
                                      unsigned threads = 1) {
  const auto xs = replicate<double>(n_reps, threads, sampler);
  return estimate_moment(xs, p, bootstrap, seed);
}

// Ordinary least squares of log(value) on log(size); the slope is the
// scaling exponent.
inline FitResult fit_exponent(std::span<const std::pair<double, double>> scales) {
  if (scales.size() < 3) throw DomainError("fit_exponent: need at least 3 scales");
  std::vector<double> lx, ly;
  for (const auto& [size, value] : scales) {
    if (!(size > 0.0) || !(value > 0.0) || !std::isfinite(size) || !std::isfinite(value)) {
      throw DomainError("fit_exponent: sizes and values must be positive and finite");
    }
    lx.push_back(std::log(size));
    ly.push_back(std::log(value));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_exponent: sizes must not all be equal");
  FitResult fit;
  fit.n_scales = lx.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (fit.intercept + fit.slope * lx[i]);
    sse += e * e;
  }
  fit.r2 = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
  fit.stderr_slope = std::sqrt(sse / static_cast<double>(lx.size() - 2) / sxx);
  return fit;
}

// Wilson score interval at 95%.
inline Interval95 wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double ph = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (ph + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(ph * (1.0 - ph) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, std::min(ph, centre - half)), std::min(1.0, std::max(ph, centre + half))};
}

}  // namespace heatlab
