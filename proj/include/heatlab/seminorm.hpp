#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/solver.hpp"

namespace heatlab {

// Parameter pack of the GRR functionals. theta1 and theta2 are derived.
struct SeminormParams {
  int p0 = 16;
  double gamma0 = 5.0;
  double theta = 0.25;
  double gamma1 = 0.04;
  double gamma2 = 0.045;

  double theta1() const { return 0.5 - theta; }
  double theta2() const { return 2.0 * theta; }

  // Predicted moment slopes at p = 1.
  double y1_slope() const { return 2.0 + (p0 - gamma0) / 2.0; }
  double y2_slope() const { return 4.0 + p0 - gamma0; }
  double y3_slope_r() const { return 1.0 + p0 * (theta1() - 2.0 * gamma1); }
  double y3_slope_z() const { return 1.0 + p0 * (theta2() - 2.0 * gamma2); }

  friend bool operator==(const SeminormParams&, const SeminormParams&) = default;
};

inline void validate(const SeminormParams& s) {
  if (s.p0 <= 0 || s.p0 % 2 != 0) throw ConfigError("seminorm: p0 must be a positive even integer");
  if (!(s.p0 > s.gamma0 && s.gamma0 > 4.0)) throw ConfigError("seminorm: need p0 > gamma0 > 4");
  if (!(s.theta > 0.0 && s.theta < 0.5)) throw ConfigError("seminorm: theta must lie in (0, 1/2)");
  const double lo = 1.0 / (2.0 * s.p0);
  if (!(s.gamma1 > lo && s.gamma1 < s.theta1() / 2.0 - lo)) {
    throw ConfigError("seminorm: gamma1 outside (1/(2p0), theta1/2 - 1/(2p0))");
  }
  if (!(s.gamma2 > lo && s.gamma2 < s.theta2() / 2.0 - lo)) {
    throw ConfigError("seminorm: gamma2 outside (1/(2p0), theta2/2 - 1/(2p0))");
  }
  const double target = (s.gamma0 - 1.0) / (2.0 * s.p0);
  if (std::fabs(2.0 * s.gamma1 + s.gamma2 - target) > 1e-12) {
    throw ConfigError("seminorm: need 2*gamma1 + gamma2 = (gamma0 - 1)/(2p0)");
  }
}

inline SeminormParams make_seminorm_params(int p0, double gamma0, double theta, double gamma1, double gamma2) {
  SeminormParams s{p0, gamma0, theta, gamma1, gamma2};
  validate(s);
  return s;
}

struct GrrState {
  double y1 = 0.0;
  double y2 = 0.0;
  double y3 = 0.0;
  double z = 0.0;
  double a = 0.0;
  double r_threshold = 0.0;
  double c_cal = 0.0;
};

namespace detail {

inline double ipow(double x, int p) {
  double r = 1.0;
  while (p > 0) {
    if (p & 1) r *= x;
    x *= x;
    p >>= 1;
  }
  return r;
}

// Trapezoid weights of nodes 0..m on a uniform lattice of step h.
inline std::vector<double> trapezoid(std::size_t m, double h) {
  std::vector<double> w(m + 1, h);
  w.front() = w.back() = 0.5 * h;
  return w;
}

struct Window {
  std::int64_t n0, n1, j0, j1;
};

inline Window grr_window(const FieldSolution& v, std::pair<double, double> anchor, double r, double z,
                         bool need_t, bool need_x) {
  const auto [t0, x0] = anchor;
  if ((need_t && !(r > t0)) || (need_x && !(z > x0))) throw DomainError("GRR window is degenerate");
  Window w{require_index(t0, v.grid.dt, "anchor time"), require_index(r, v.grid.dt, "window time"),
           require_index(x0, v.grid.dx, "anchor space"), require_index(z, v.grid.dx, "window space")};
  if ((need_t && w.n1 - w.n0 < 8) || (need_x && w.j1 - w.j0 < 8)) {
    throw DomainError("GRR window must span at least 8 lattice intervals per side");
  }
  if (!v.holds(w.n0, w.j0) || !v.holds(w.n1, w.j1)) throw RangeError("GRR window outside the stored field");
  return w;
}

// Sum over unordered node pairs a < b of w_a w_b f(values) / lag^kappa, doubled
// (the integrand is symmetric). Pairs at lag 0 form the excluded diagonal.
template <class Diff>
double symmetric_pair_sum(std::size_t m, double h, double kappa, int power, Diff&& diff) {
  const auto w = trapezoid(m, h);
  std::vector<double> kern(m + 1, 0.0);
  for (std::size_t k = 1; k <= m; ++k) kern[k] = std::pow(static_cast<double>(k) * h, -kappa);
  double s = 0.0;
  for (std::size_t a = 0; a <= m; ++a) {
    for (std::size_t b = a + 1; b <= m; ++b) s += w[a] * w[b] * kern[b - a] * ipow(diff(a, b), power);
  }
  return 2.0 * s;
}

}  // namespace detail

// Y1(r) = int_{[t0,r]^2} (v(t,x0) - v(s,x0))^{2p0} / |t-s|^{gamma0/2} ds dt
inline double grr_y1(const FieldSolution& v, const SeminormParams& prm, std::pair<double, double> anchor, double r) {
  validate(prm);
  const auto w = detail::grr_window(v, anchor, r, anchor.second, true, false);
  const auto m = static_cast<std::size_t>(w.n1 - w.n0);
  return detail::symmetric_pair_sum(m, v.grid.dt, prm.gamma0 / 2.0, 2 * prm.p0, [&](std::size_t a, std::size_t b) {
    return v.at(w.n0 + static_cast<std::int64_t>(b), w.j0) - v.at(w.n0 + static_cast<std::int64_t>(a), w.j0);
  });
}

// Y2(z) = int_{[x0,z]^2} (v(t0,x) - v(t0,y))^{2p0} / |x-y|^{gamma0-2} dx dy
inline double grr_y2(const FieldSolution& v, const SeminormParams& prm, std::pair<double, double> anchor, double z) {
  validate(prm);
  const auto w = detail::grr_window(v, anchor, anchor.first, z, false, true);
  const auto m = static_cast<std::size_t>(w.j1 - w.j0);
  return detail::symmetric_pair_sum(m, v.grid.dx, prm.gamma0 - 2.0, 2 * prm.p0, [&](std::size_t a, std::size_t b) {
    return v.at(w.n0, w.j0 + static_cast<std::int64_t>(b)) - v.at(w.n0, w.j0 + static_cast<std::int64_t>(a));
  });
}

// Y3(r,z) = int int (v(t,x) + v(s,y) - v(t,y) - v(s,x))^{2p0}
//           / (|t-s|^{1+2p0 gamma1} |x-y|^{1+2p0 gamma2})
inline double grr_y3(const FieldSolution& v, const SeminormParams& prm, std::pair<double, double> anchor, double r,
                     double z) {
  validate(prm);
  const auto w = detail::grr_window(v, anchor, r, z, true, true);
  const auto mt = static_cast<std::size_t>(w.n1 - w.n0);
  const auto mx = static_cast<std::size_t>(w.j1 - w.j0);
  const auto wt = detail::trapezoid(mt, v.grid.dt);
  const double kt = 1.0 + 2.0 * prm.p0 * prm.gamma1;
  const double kx = 1.0 + 2.0 * prm.p0 * prm.gamma2;
  std::vector<double> d(mx + 1);
  double s = 0.0;
  for (std::size_t a = 0; a <= mt; ++a) {
    const auto ra = static_cast<std::int64_t>(a) + w.n0;
    for (std::size_t b = a + 1; b <= mt; ++b) {
      const auto rb = static_cast<std::int64_t>(b) + w.n0;
      for (std::size_t c = 0; c <= mx; ++c) {
        const auto j = w.j0 + static_cast<std::int64_t>(c);
        d[c] = v.at(rb, j) - v.at(ra, j);
      }
      const double inner = detail::symmetric_pair_sum(mx, v.grid.dx, kx, 2 * prm.p0,
                                                      [&](std::size_t x, std::size_t y) { return d[y] - d[x]; });
      s += wt[a] * wt[b] * std::pow(static_cast<double>(b - a) * v.grid.dt, -kt) * inner;
    }
  }
  return 2.0 * s;
}

enum class GrrTerm { y1, y2, y3 };

inline const char* to_string(GrrTerm t) { return t == GrrTerm::y1 ? "Y1" : t == GrrTerm::y2 ? "Y2" : "Y3"; }

// Estimates E[Y] for one functional from replicated linear paths. v is
// Gaussian, so every increment D in the integrand satisfies
//   E[D^{2p0}] = (2p0 - 1)!! Var(D)^{p0}
// and E[Y] is the same quadrature with D^{2p0} replaced by that moment. The
// per-pair variances are Monte Carlo estimates (mean of D^2, the increments
// have mean zero). The raw sample mean of Y is dominated by rare paths at
// high p0 and is kept alongside for comparison.
class GrrMeanEstimator {
 public:
  GrrMeanEstimator(GrrTerm term, const SeminormParams& prm) : term_(term), prm_(prm) { validate(prm); }

  void add(const FieldSolution& v, std::pair<double, double> anchor, double r, double z) {
    const bool need_t = term_ != GrrTerm::y2;
    const bool need_x = term_ != GrrTerm::y1;
    const auto w = detail::grr_window(v, anchor, need_t ? r : anchor.first, need_x ? z : anchor.second, need_t,
                                      need_x);
    const auto mt = static_cast<std::size_t>(w.n1 - w.n0);
    const auto mx = static_cast<std::size_t>(w.j1 - w.j0);
    if (count_ == 0) {
      mt_ = mt;
      mx_ = mx;
      dt_ = v.grid.dt;
      dx_ = v.grid.dx;
      sum_sq_.assign(pair_count(), 0.0);
    } else if (mt != mt_ || mx != mx_ || dt_ != v.grid.dt || dx_ != v.grid.dx) {
      throw UsageError("GrrMeanEstimator: all paths must share one window and lattice");
    }
    std::size_t i = 0;
    auto at = [&](std::size_t a, std::size_t c) {
      return v.at(w.n0 + static_cast<std::int64_t>(a), w.j0 + static_cast<std::int64_t>(c));
    };
    switch (term_) {
      case GrrTerm::y1:
        for (std::size_t a = 0; a <= mt; ++a)
          for (std::size_t b = a + 1; b <= mt; ++b) accumulate(i++, at(b, 0) - at(a, 0));
        break;
      case GrrTerm::y2:
        for (std::size_t a = 0; a <= mx; ++a)
          for (std::size_t b = a + 1; b <= mx; ++b) accumulate(i++, at(0, b) - at(0, a));
        break;
      case GrrTerm::y3:
        for (std::size_t a = 0; a <= mt; ++a)
          for (std::size_t b = a + 1; b <= mt; ++b)
            for (std::size_t x = 0; x <= mx; ++x)
              for (std::size_t y = x + 1; y <= mx; ++y)
                accumulate(i++, (at(b, y) - at(a, y)) - (at(b, x) - at(a, x)));
        break;
    }
    ++count_;
  }

  std::size_t count() const { return count_; }

  double estimate() const {
    if (count_ < 2) throw DomainError("GrrMeanEstimator: need at least 2 paths");
    double dfact = 1.0;
    for (int k = 2 * prm_.p0 - 1; k > 1; k -= 2) dfact *= k;
    const double n = static_cast<double>(count_);
    auto moment = [&](std::size_t i) { return dfact * detail::ipow(sum_sq_[i] / n, prm_.p0); };
    std::size_t i = 0;
    double s = 0.0;
    if (term_ == GrrTerm::y1 || term_ == GrrTerm::y2) {
      const bool time = term_ == GrrTerm::y1;
      const std::size_t m = time ? mt_ : mx_;
      const double h = time ? dt_ : dx_;
      const double kappa = time ? prm_.gamma0 / 2.0 : prm_.gamma0 - 2.0;
      const auto w = detail::trapezoid(m, h);
      for (std::size_t a = 0; a <= m; ++a)
        for (std::size_t b = a + 1; b <= m; ++b)
          s += w[a] * w[b] * std::pow(static_cast<double>(b - a) * h, -kappa) * moment(i++);
      return 2.0 * s;
    }
    const auto wt = detail::trapezoid(mt_, dt_);
    const auto wx = detail::trapezoid(mx_, dx_);
    const double kt = 1.0 + 2.0 * prm_.p0 * prm_.gamma1;
    const double kx = 1.0 + 2.0 * prm_.p0 * prm_.gamma2;
    for (std::size_t a = 0; a <= mt_; ++a)
      for (std::size_t b = a + 1; b <= mt_; ++b)
        for (std::size_t x = 0; x <= mx_; ++x)
          for (std::size_t y = x + 1; y <= mx_; ++y)
            s += wt[a] * wt[b] * wx[x] * wx[y] * std::pow(static_cast<double>(b - a) * dt_, -kt) *
                 std::pow(static_cast<double>(y - x) * dx_, -kx) * moment(i++);
    return 4.0 * s;
  }

 private:
  std::size_t pair_count() const {
    const std::size_t pt = mt_ * (mt_ + 1) / 2;
    const std::size_t px = mx_ * (mx_ + 1) / 2;
    return term_ == GrrTerm::y1 ? pt : term_ == GrrTerm::y2 ? px : pt * px;
  }
  void accumulate(std::size_t i, double d) { sum_sq_[i] += d * d; }

  GrrTerm term_;
  SeminormParams prm_;
  std::size_t count_ = 0;
  std::size_t mt_ = 0, mx_ = 0;
  double dt_ = 0.0, dx_ = 0.0;
  std::vector<double> sum_sq_;
};

// Y1, Y2, Y3 and Z on [t0, r] x [x0, z].
inline GrrState grr_functionals(const FieldSolution& v, const SeminormParams& prm, std::pair<double, double> anchor,
                                double r, double z) {
  GrrState st;
  st.y1 = grr_y1(v, prm, anchor, r);
  st.y2 = grr_y2(v, prm, anchor, z);
  st.y3 = grr_y3(v, prm, anchor, r, z);
  st.z = st.y1 + st.y2 + st.y3;
  return st;
}

// R = c a^{2p0} zeta^{4-gamma0}
inline double grr_threshold(double a, double zeta, const SeminormParams& prm, double c_cal) {
  if (!(a > 0.0)) throw DomainError("grr_threshold: a must be > 0");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw DomainError("grr_threshold: zeta must lie in (0, 1]");
  if (!(c_cal > 0.0)) throw DomainError("grr_threshold: c must be > 0");
  return c_cal * std::pow(a, 2.0 * prm.p0) * std::pow(zeta, 4.0 - prm.gamma0);
}

// sup over the lattice nodes of [t0, r] x [x0, z] of |v - v(t0, x0)|.
inline double increment_sup(const FieldSolution& v, std::pair<double, double> anchor, double r, double z) {
  const std::int64_t n0 = require_index(anchor.first, v.grid.dt, "anchor time");
  const std::int64_t j0 = require_index(anchor.second, v.grid.dx, "anchor space");
  const std::int64_t n1 = require_index(r, v.grid.dt, "window time");
  const std::int64_t j1 = require_index(z, v.grid.dx, "window space");
  if (n1 < n0 || j1 < j0) throw DomainError("increment window is empty");
  if (!v.holds(n0, j0) || !v.holds(n1, j1)) throw RangeError("increment window outside the stored field");
  const double base = v.at(n0, j0);
  double sup = 0.0;
  for (std::int64_t n = n0; n <= n1; ++n) {
    for (std::int64_t j = j0; j <= j1; ++j) sup = std::max(sup, std::fabs(v.at(n, j) - base));
  }
  return sup;
}

// The implication Z <= R => sup <= a on one path.
inline bool check_grr_implication(const GrrState& state, double sup) {
  return state.z > state.r_threshold || sup <= state.a;
}

inline bool check_grr_implication(const GrrState& state, const FieldSolution& v, std::pair<double, double> anchor,
                                  double r, double z) {
  return check_grr_implication(state, increment_sup(v, anchor, r, z));
}

// One training observation: Z and the increment sup on the full window.
struct GrrSample {
  double z = 0.0;
  double sup = 0.0;
};

struct GrrCalibration {
  double c_cal = 0.0;
  double c_critical = 0.0;     // largest c compatible with every training path
  bool bound_by_data = false;  // false: every training path was constant
  std::size_t n_paths = 0;
  std::size_t n_exceed = 0;    // training paths with sup > a
};

inline constexpr double kGrrSafety = 0.5;
inline constexpr double kGrrFallbackConstant = 1.0;

// The constant in R = c a^{2p0} zeta^{4-gamma0} does not depend on a, so it is
// calibrated for all levels at once. On a path with sup > 0 the implication
// holds for every a > 0 exactly when c <= Z zeta^{gamma0-4} / sup^{2p0}; c* is
// the minimum of that ratio over the training paths and c_cal = 0.5 c*.
// Constant paths satisfy the implication for any c; if every path is
// constant, c* falls back to kGrrFallbackConstant.
inline GrrCalibration calibrate_grr_constant(std::span<const GrrSample> training, const SeminormParams& prm,
                                             double a, double zeta) {
  validate(prm);
  if (training.empty()) throw DomainError("calibrate_grr_constant: empty training set");
  if (!(a > 0.0)) throw DomainError("calibrate_grr_constant: a must be > 0");
  if (!(zeta > 0.0 && zeta <= 1.0)) throw DomainError("calibrate_grr_constant: zeta must lie in (0, 1]");
  GrrCalibration cal;
  cal.n_paths = training.size();
  double c_star = std::numeric_limits<double>::infinity();
  for (const auto& s : training) {
    if (s.sup > a) ++cal.n_exceed;
    if (!(s.sup > 0.0)) continue;
    const double log_ratio = std::log(s.z) + (prm.gamma0 - 4.0) * std::log(zeta) - 2.0 * prm.p0 * std::log(s.sup);
    c_star = std::min(c_star, std::exp(log_ratio));
  }
  cal.bound_by_data = std::isfinite(c_star);
  if (!cal.bound_by_data) c_star = kGrrFallbackConstant;
  if (!(c_star > 0.0)) throw DomainError("calibrate_grr_constant: a non-constant training path has Z = 0");
  cal.c_critical = c_star;
  cal.c_cal = kGrrSafety * c_star;
  return cal;
}

}  // namespace heatlab
