#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "heatlab/coupling.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/hitting.hpp"
#include "heatlab/matrix.hpp"
#include "heatlab/nested.hpp"
#include "heatlab/parallel.hpp"
#include "heatlab/stats.hpp"

namespace heatlab {

// F = (F1, F2) = (u(t0,x0), max over the rectangle of v - v(t0,x0)).
struct FSample {
  double f1 = 0.0;
  double f2 = 0.0;
};

// zeta = eta^2 with eta = max(zeta1^(1/4), zeta2^(1/2)).
inline double density_zeta(const Rectangle& rect) { return rect.eta() * rect.eta(); }

// Replications [first, first + n_reps). u is read at the anchor on the
// coarsest level that holds it; v is resolved on the rectangle.
inline std::vector<FSample> sample_F(const SimulationContext& ctx, const Rectangle& rect, std::size_t n_reps,
                                     std::size_t first = 0) {
  if (ctx.intervals_per_side < 8) throw ConfigError("rectangles must be resolved by at least 8 intervals per side");
  const bool degenerate = rect.zeta1 == 0.0 && rect.zeta2 == 0.0;
  const double max_dx = degenerate ? ctx.base.dx : std::min(ctx.base.dx, detail::resolving_dx(rect, ctx.intervals_per_side));
  const RefinementTarget target{rect.t0, rect.t1(), rect.x0, rect.x1(), max_dx};
  NestedOptions opt = ctx.nested;
  if (opt.u_max_level < 0) opt.u_max_level = 0;
  std::vector<FSample> out(n_reps);
  parallel_for(n_reps, ctx.threads, [&](std::size_t i) {
    const auto seed = derive_seed(ctx.master, 0, static_cast<std::int64_t>(first + i));
    const auto sol = solve_nested(ctx.base, target, seed, Fields::both, &ctx.sigma, opt);
    const auto& u = sol.u(0);
    const int k = sol.level_for(max_dx);
    const auto& v = sol.v(k);
    if (!degenerate) require_resolved(rect, v.grid, ctx.intervals_per_side);
    const auto r = rectangle_nodes(rect, v.grid);
    if (!v.holds(r.n0, r.j0) || !v.holds(r.n1, r.j1)) throw RangeError("sample_F: rectangle outside the stored field");
    const double anchor = v.at(r.n0, r.j0);
    double f2 = 0.0;
    for (std::int64_t n = r.n0; n <= r.n1; ++n) {
      for (std::int64_t j = r.j0; j <= r.j1; ++j) f2 = std::max(f2, v.at(n, j) - anchor);
    }
    out[i] = {field_value(u, rect.t0, rect.x0), f2};
  });
  return out;
}

struct DensityGrid {
  std::vector<double> z1_axis;
  std::vector<double> z2_axis;
  Matrix p_hat;     // (z1 index, z2 index)
  Matrix std_err;   // plug-in standard error of each p_hat entry
  double h1 = 0.0;
  double h2 = 0.0;
  std::size_t n_samples = 0;
  double zeta = 0.0;
  bool degenerate = false;

  double integral() const {
    if (z1_axis.size() < 2 || z2_axis.size() < 2) return 0.0;
    const double a1 = z1_axis[1] - z1_axis[0], a2 = z2_axis[1] - z2_axis[0];
    double s = 0.0;
    for (std::size_t i = 0; i < p_hat.rows(); ++i) {
      for (std::size_t j = 0; j < p_hat.cols(); ++j) s += p_hat(i, j);
    }
    return s * a1 * a2;
  }
};

inline constexpr std::size_t kMinKdeSamples = 1000;

namespace detail {

inline double sample_sd(std::span<const double> x) { return std::sqrt(sample_variance(x)); }

// Normal-reference bandwidth for a two-dimensional product kernel, applied per
// axis: h = sd * n^(-1/6).
inline double silverman_2d(double sd, std::size_t n) { return sd * std::pow(static_cast<double>(n), -1.0 / 6.0); }

}  // namespace detail

// Product-Gaussian kernel density estimate on a points1 x points2 grid that
// spans the sample range plus one bandwidth. Each entry also carries the
// standard error sqrt((mean(K^2) - p_hat^2) / n) of a sample mean of kernels,
// i.e. the ideal bootstrap standard error.
inline DensityGrid kde2(std::span<const FSample> samples, std::optional<std::pair<double, double>> bandwidths = {},
                        std::size_t points1 = 64, std::size_t points2 = 64, unsigned threads = 1) {
  if (samples.size() < kMinKdeSamples) throw DomainError("kde2: need at least 1000 samples");
  if (points1 < 2 || points2 < 2) throw DomainError("kde2: grid needs at least 2 points per axis");
  const std::size_t n = samples.size();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = samples[i].f1;
    b[i] = samples[i].f2;
  }
  DensityGrid g;
  g.n_samples = n;
  const double sd1 = detail::sample_sd(a), sd2 = detail::sample_sd(b);
  if (bandwidths) {
    if (!(bandwidths->first > 0.0 && bandwidths->second > 0.0)) throw DomainError("kde2: bandwidths must be > 0");
    g.h1 = bandwidths->first;
    g.h2 = bandwidths->second;
  } else {
    g.h1 = detail::silverman_2d(sd1, n);
    g.h2 = detail::silverman_2d(sd2, n);
  }
  g.degenerate = !(sd1 > 0.0 && sd2 > 0.0 && g.h1 > 0.0 && g.h2 > 0.0);
  const auto [lo1, hi1] = std::minmax_element(a.begin(), a.end());
  const auto [lo2, hi2] = std::minmax_element(b.begin(), b.end());
  auto axis = [](double lo, double hi, double h, std::size_t m) {
    std::vector<double> ax(m);
    for (std::size_t i = 0; i < m; ++i) ax[i] = (lo - h) + (hi - lo + 2.0 * h) * static_cast<double>(i) / static_cast<double>(m - 1);
    return ax;
  };
  g.z1_axis = axis(*lo1, *hi1, g.h1, points1);
  g.z2_axis = axis(*lo2, *hi2, g.h2, points2);
  g.p_hat = Matrix(points1, points2);
  g.std_err = Matrix(points1, points2);
  if (g.degenerate) return g;
  // per-axis kernel values, then a reduction over samples for each z1 row
  const double c1 = 1.0 / (g.h1 * std::sqrt(2.0 * std::numbers::pi));
  const double c2 = 1.0 / (g.h2 * std::sqrt(2.0 * std::numbers::pi));
  Matrix k2(points2, n);
  for (std::size_t j = 0; j < points2; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = (g.z2_axis[j] - b[i]) / g.h2;
      k2(j, i) = c2 * std::exp(-0.5 * s * s);
    }
  }
  parallel_for(points1, threads, [&](std::size_t r) {
    std::vector<double> k1(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = (g.z1_axis[r] - a[i]) / g.h1;
      k1[i] = c1 * std::exp(-0.5 * s * s);
    }
    for (std::size_t j = 0; j < points2; ++j) {
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double k = k1[i] * k2(j, i);
        s1 += k;
        s2 += k * k;
      }
      const double m1 = s1 / static_cast<double>(n), m2 = s2 / static_cast<double>(n);
      g.p_hat(r, j) = m1;
      g.std_err(r, j) = std::sqrt(std::max(0.0, m2 - m1 * m1) / static_cast<double>(n));
    }
  });
  return g;
}

// (c / sqrt(zeta)) exp(-(z1^2 + z2^2 / zeta) / c)
inline double gaussian_bound(double z1, double z2, double zeta, double c) {
  return c / std::sqrt(zeta) * std::exp(-(z1 * z1 + z2 * z2 / zeta) / c);
}

struct BoundReport {
  double c = 0.0;
  double max_ratio = 0.0;   // max of (p_hat - se)+ / bound over z2 >= sqrt(zeta)
  double c_min = 0.0;       // smallest c with every ratio <= 1
  std::size_t n_points = 0; // grid points in the restricted domain
  double worst_z1 = 0.0;
  double worst_z2 = 0.0;
};

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> bound_domain(const DensityGrid& g) {
  if (!(g.zeta > 0.0)) throw DomainError("density grid has no zeta");
  const double floor2 = std::sqrt(g.zeta);
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (std::size_t i = 0; i < g.z1_axis.size(); ++i) {
    for (std::size_t j = 0; j < g.z2_axis.size(); ++j) {
      if (g.z2_axis[j] >= floor2) idx.emplace_back(i, j);
    }
  }
  if (idx.empty()) throw DomainError("no grid points with z2 >= sqrt(zeta)");
  return idx;
}

inline double lowered(const DensityGrid& g, std::size_t i, std::size_t j, bool subtract_se) {
  return std::max(0.0, g.p_hat(i, j) - (subtract_se ? g.std_err(i, j) : 0.0));
}

}  // namespace detail

// The bound increases with c at every point, so the smallest admissible c is
// found by bisection on log c.
inline BoundReport check_gaussian_bound(const DensityGrid& g, double c, bool subtract_se = true) {
  if (!(c > 0.0)) throw DomainError("check_gaussian_bound: c must be > 0");
  const auto idx = detail::bound_domain(g);
  BoundReport rep;
  rep.c = c;
  rep.n_points = idx.size();
  auto max_ratio = [&](double cc, double* wz1, double* wz2) {
    double worst = 0.0;
    for (const auto& [i, j] : idx) {
      const double p = detail::lowered(g, i, j, subtract_se);
      if (p == 0.0) continue;
      const double r = p / gaussian_bound(g.z1_axis[i], g.z2_axis[j], g.zeta, cc);
      if (r > worst) {
        worst = r;
        if (wz1) *wz1 = g.z1_axis[i];
        if (wz2) *wz2 = g.z2_axis[j];
      }
    }
    return worst;
  };
  rep.max_ratio = max_ratio(c, &rep.worst_z1, &rep.worst_z2);
  if (max_ratio(1e300, nullptr, nullptr) == 0.0 && rep.max_ratio == 0.0) {
    rep.c_min = 0.0;
    return rep;
  }
  double lo = 1e-6, hi = 1.0;
  while (max_ratio(hi, nullptr, nullptr) > 1.0) {
    hi *= 2.0;
    if (hi > 1e12) throw DomainError("check_gaussian_bound: no admissible constant");
  }
  while (lo < hi && max_ratio(lo, nullptr, nullptr) <= 1.0) lo *= 0.5;
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-12; ++it) {
    const double mid = std::sqrt(lo * hi);
    (max_ratio(mid, nullptr, nullptr) <= 1.0 ? hi : lo) = mid;
  }
  rep.c_min = hi;
  return rep;
}

struct TailPoint {
  double z2 = 0.0;
  double exceedance = 0.0;  // empirical P[F2 > z2]
  double bound = 1.0;       // 2 exp(-(z2 - mean)^2 / (2 sigma2)), valid for z2 >= mean
  bool valid = false;
};

struct TailFit {
  double mean_f2 = 0.0;
  double sigma2_sup = 0.0;
  double zeta = 0.0;
  double c_fit = 0.0;  // sigma2_sup / zeta
  std::vector<TailPoint> points;
};

inline constexpr std::size_t kMinTailSamples = 10000;

// sigma2_sup is the plug-in max over rectangle nodes of Var[v - v(anchor)].
inline TailFit borell_tail_check(std::span<const double> f2, double zeta, double sigma2_sup,
                                 std::span<const double> levels = {}) {
  if (f2.size() < kMinTailSamples) throw DomainError("borell_tail_check: need at least 10^4 samples");
  if (!(zeta > 0.0)) throw DomainError("borell_tail_check: zeta must be > 0");
  if (!(sigma2_sup >= 0.0)) throw DomainError("borell_tail_check: sigma2 must be >= 0");
  TailFit fit;
  fit.zeta = zeta;
  fit.mean_f2 = mean(f2);
  fit.sigma2_sup = sigma2_sup;
  fit.c_fit = sigma2_sup / zeta;
  const double s = std::sqrt(zeta);
  std::vector<double> zs(levels.begin(), levels.end());
  if (zs.empty()) zs = {s, 2.0 * s, 3.0 * s};
  std::sort(zs.begin(), zs.end());
  for (double z : zs) {
    TailPoint tp;
    tp.z2 = z;
    std::size_t above = 0;
    for (double x : f2) above += x > z;
    tp.exceedance = static_cast<double>(above) / static_cast<double>(f2.size());
    tp.valid = z >= fit.mean_f2;
    if (tp.valid && sigma2_sup > 0.0) {
      const double e = z - fit.mean_f2;
      tp.bound = std::min(1.0, 2.0 * std::exp(-e * e / (2.0 * sigma2_sup)));
    } else if (tp.valid) {
      tp.bound = z > fit.mean_f2 ? 0.0 : 1.0;
    }
    fit.points.push_back(tp);
  }
  return fit;
}

// Max over rectangle nodes of the sample variance of v - v(anchor), from
// n_reps replications on the same lattice as sample_F.
inline double sup_increment_variance(const SimulationContext& ctx, const Rectangle& rect, std::size_t n_reps,
                                     std::size_t first = 0) {
  if (n_reps < 2) throw DomainError("sup_increment_variance: need at least 2 replications");
  const double max_dx = std::min(ctx.base.dx, detail::resolving_dx(rect, ctx.intervals_per_side));
  const RefinementTarget target{rect.t0, rect.t1(), rect.x0, rect.x1(), max_dx};
  NestedOptions opt = ctx.nested;
  opt.u_max_level = -1;
  std::vector<std::vector<double>> incs(n_reps);
  parallel_for(n_reps, ctx.threads, [&](std::size_t i) {
    const auto seed = derive_seed(ctx.master, 0, static_cast<std::int64_t>(first + i));
    const auto sol = solve_nested(ctx.base, target, seed, Fields::linear, nullptr, opt);
    const auto& v = sol.v(sol.level_for(max_dx));
    const auto r = rectangle_nodes(rect, v.grid);
    const double anchor = v.at(r.n0, r.j0);
    for (std::int64_t n = r.n0; n <= r.n1; ++n) {
      for (std::int64_t j = r.j0; j <= r.j1; ++j) incs[i].push_back(v.at(n, j) - anchor);
    }
  });
  double best = 0.0;
  std::vector<double> col(n_reps);
  for (std::size_t k = 0; k < incs.front().size(); ++k) {
    for (std::size_t i = 0; i < n_reps; ++i) col[i] = incs[i][k];
    best = std::max(best, sample_variance(col));
  }
  return best;
}

}  // namespace heatlab
