#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/hitting.hpp"
#include "heatlab/matrix.hpp"
#include "heatlab/target.hpp"

namespace heatlab {

inline double parabolic_metric(std::pair<double, double> p1, std::pair<double, double> p2) {
  return std::max(std::pow(std::fabs(p1.first - p2.first), 0.25), std::sqrt(std::fabs(p1.second - p2.second)));
}

struct DiscreteMeasure {
  std::vector<Point> support;
  std::vector<double> weights;
};

inline void validate(const DiscreteMeasure& mu) {
  if (mu.support.empty() || mu.support.size() != mu.weights.size()) {
    throw DomainError("discrete measure: support and weights must be nonempty and of equal size");
  }
  double s = 0.0;
  for (double w : mu.weights) {
    if (!(w >= 0.0)) throw DomainError("discrete measure: weights must be nonnegative");
    s += w;
  }
  if (std::fabs(s - 1.0) > 1e-9) throw DomainError("discrete measure: weights must sum to 1");
}

enum class GaugeMethod { closed_form, covering, energy_minimization };

inline std::string to_string(GaugeMethod m) {
  switch (m) {
    case GaugeMethod::closed_form: return "closed-form";
    case GaugeMethod::covering: return "covering";
    case GaugeMethod::energy_minimization: return "energy-minimization";
  }
  return "unknown";
}

struct GaugeResult {
  double beta = 0.0;
  double value = 0.0;
  GaugeMethod method = GaugeMethod::closed_form;
  double gap = 0.0;
  double r_min = 0.0;  // kernel smoothing radius (energy minimization only)
  std::size_t iterations = 0;
  bool converged = true;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Hausdorff measure with the diameter gauge: H_beta(A) = lim inf sum (2 r_i)^beta
// over covers by balls of radius r_i -> 0. With this gauge a segment gets its
// length at beta = 1 and a d-ball of radius r gets (2r)^d at beta = d.
// Negative indices are never needed by the hitting bound and are rejected.
inline GaugeResult hausdorff_measure(const TargetSet& A, double beta, double epsilon = 1e-3) {
  if (!(beta >= 0.0)) throw CapabilityError("hausdorff_measure: beta must be >= 0 (got " + std::to_string(beta) + ")");
  GaugeResult g;
  g.beta = beta;
  g.method = GaugeMethod::closed_form;
  auto dimension_rule = [&](double dim, double at_dim) {
    if (beta < dim) return kInf;
    if (beta > dim) return 0.0;
    return at_dim;
  };
  switch (A.kind) {
    case TargetSet::Kind::singleton:
    case TargetSet::Kind::points: {
      std::set<Point> distinct(A.points.begin(), A.points.end());
      g.value = dimension_rule(0.0, static_cast<double>(distinct.size()));
      return g;
    }
    case TargetSet::Kind::segment: {
      const double len = A.length();
      g.value = len > 0.0 ? dimension_rule(1.0, len) : dimension_rule(0.0, 1.0);
      return g;
    }
    case TargetSet::Kind::ball:
      g.value = dimension_rule(static_cast<double>(A.d), std::pow(2.0 * A.radius, A.d));
      return g;
    case TargetSet::Kind::cantor_dust: {
      const double dim = A.d * std::log(2.0) / std::log(3.0);
      if (beta != dim) {
        g.value = dimension_rule(dim, 0.0);
        return g;
      }
      // at the critical index only a covering estimate is available
      const auto balls = cover_set(A, epsilon);
      g.method = GaugeMethod::covering;
      g.value = cover_sum(balls, beta);
      return g;
    }
  }
  throw CapabilityError("hausdorff_measure: unsupported set kind");
}

// Bessel-Riesz kernel: r^-beta for beta > 0, log+(e/r) for beta = 0, 1 for
// beta < 0, evaluated at max(r, r_min).
inline double riesz_kernel(double r, double beta, double r_min = 0.0) {
  if (beta < 0.0) return 1.0;
  const double s = std::max(r, r_min);
  if (s <= 0.0) return kInf;
  if (beta == 0.0) return std::max(0.0, std::log(std::numbers::e / s));
  return std::pow(s, -beta);
}

// sum_ij w_i w_j K_beta(|x_i - x_j|), diagonal included: atoms carry infinite
// self-energy for beta >= 0 unless the kernel is smoothed.
inline double riesz_energy(const DiscreteMeasure& mu, double beta, double r_min = 0.0) {
  validate(mu);
  if (beta < 0.0) return 1.0;
  double e = 0.0;
  for (std::size_t i = 0; i < mu.support.size(); ++i) {
    if (mu.weights[i] == 0.0) continue;
    for (std::size_t j = 0; j < mu.support.size(); ++j) {
      if (mu.weights[j] == 0.0) continue;
      const double k = riesz_kernel(distance(mu.support[i], mu.support[j]), beta, r_min);
      if (std::isinf(k)) return kInf;
      e += mu.weights[i] * mu.weights[j] * k;
    }
  }
  return e;
}

struct EnergySolution {
  std::vector<double> weights;
  double energy = 0.0;
  double gap = kInf;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;  // energy after each iteration
};

// min w'Kw over the probability simplex by Frank-Wolfe with away steps and
// exact line search. Stops when the Frank-Wolfe duality gap drops below tol.
inline EnergySolution minimize_energy_frank_wolfe(const Matrix& K, std::size_t max_iters, double tol = 1e-6,
                                                  bool keep_trace = false) {
  const std::size_t n = K.rows();
  if (n == 0 || K.cols() != n) throw DomainError("energy matrix must be square and nonempty");
  EnergySolution sol;
  std::vector<double> w(n, 1.0 / static_cast<double>(n)), Kw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += K(i, j) * w[j];
    Kw[i] = s;
  }
  auto energy = [&] {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e += w[i] * Kw[i];
    return e;
  };
  double f = energy();
  for (std::size_t it = 0; it < max_iters; ++it) {
    // gradient is 2 Kw; work with Kw throughout
    std::size_t s = 0, v = n;
    for (std::size_t i = 1; i < n; ++i) {
      if (Kw[i] < Kw[s]) s = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (w[i] > 0.0 && (v == n || Kw[i] > Kw[v])) v = i;
    }
    const double gap_fw = 2.0 * (f - Kw[s]);
    const double gap_away = 2.0 * (Kw[v] - f);
    sol.gap = gap_fw;
    if (gap_fw < tol) {
      sol.converged = true;
      break;
    }
    const bool fw = gap_fw >= gap_away;
    double slope, curv, gmax;
    if (fw) {
      slope = -gap_fw;  // grad . (e_s - w)
      curv = K(s, s) - 2.0 * Kw[s] + f;
      gmax = 1.0;
    } else {
      slope = -gap_away;  // grad . (w - e_v)
      curv = f - 2.0 * Kw[v] + K(v, v);
      gmax = w[v] < 1.0 ? w[v] / (1.0 - w[v]) : kInf;
    }
    double gamma = curv > 0.0 ? -slope / (2.0 * curv) : gmax;
    gamma = std::clamp(gamma, 0.0, gmax);
    if (fw) {
      for (std::size_t i = 0; i < n; ++i) {
        w[i] *= 1.0 - gamma;
        Kw[i] = (1.0 - gamma) * Kw[i] + gamma * K(i, s);
      }
      w[s] += gamma;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        w[i] *= 1.0 + gamma;
        Kw[i] = (1.0 + gamma) * Kw[i] - gamma * K(i, v);
      }
      w[v] -= gamma;
      if (gamma == gmax || w[v] < 1e-300) w[v] = 0.0;
    }
    const double f_new = energy();
    f = f_new;
    sol.iterations = it + 1;
    if (keep_trace) sol.trace.push_back(f);
  }
  if (!sol.converged) {
    std::size_t s = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (Kw[i] < Kw[s]) s = i;
    }
    sol.gap = 2.0 * (f - Kw[s]);
    sol.converged = sol.gap < tol;
  }
  sol.weights = std::move(w);
  sol.energy = f;
  return sol;
}

// Dense reference: projected gradient on the simplex with step 1/L.
inline std::vector<double> project_to_simplex(std::vector<double> y) {
  std::vector<double> u = y;
  std::sort(u.begin(), u.end(), std::greater<>());
  double css = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    css += u[i];
    const double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  for (auto& v : y) v = std::max(0.0, v - theta);
  return y;
}

inline EnergySolution minimize_energy_projected_gradient(const Matrix& K, std::size_t iters) {
  const std::size_t n = K.rows();
  double L = 0.0;  // Gershgorin bound on the largest eigenvalue of 2K
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::fabs(K(i, j));
    L = std::max(L, 2.0 * s);
  }
  std::vector<double> w(n, 1.0 / static_cast<double>(n)), Kw(n);
  auto mult = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += K(i, j) * w[j];
      Kw[i] = s;
    }
  };
  // accelerated (FISTA) iterations
  std::vector<double> y = w, prev = w;
  double tk = 1.0;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> Ky(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += K(i, j) * y[j];
      Ky[i] = s;
    }
    std::vector<double> step(n);
    for (std::size_t i = 0; i < n; ++i) step[i] = y[i] - 2.0 * Ky[i] / L;
    w = project_to_simplex(step);
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    for (std::size_t i = 0; i < n; ++i) y[i] = w[i] + ((tk - 1.0) / tn) * (w[i] - prev[i]);
    prev = w;
    tk = tn;
  }
  mult();
  EnergySolution sol;
  sol.energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) sol.energy += w[i] * Kw[i];
  std::size_t s = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (Kw[i] < Kw[s]) s = i;
  }
  sol.gap = 2.0 * (sol.energy - Kw[s]);
  sol.iterations = iters;
  sol.converged = true;
  sol.weights = std::move(w);
  return sol;
}

// Sample of A used for capacity estimates and its smoothing radius.
struct CapacitySample {
  std::vector<Point> points;
  double r_min = 0.0;
};

inline CapacitySample capacity_sample(const TargetSet& A, std::size_t n_points, std::uint64_t seed = 1) {
  CapacitySample cs;
  cs.points = A.sample(n_points, seed);
  // half the mean nearest-neighbour spacing
  const std::size_t n = cs.points.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = kInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) best = std::min(best, distance(cs.points[i], cs.points[j]));
    }
    total += best;
  }
  cs.r_min = n > 1 ? 0.5 * total / static_cast<double>(n) : 0.0;
  return cs;
}

inline Matrix energy_matrix(const std::vector<Point>& pts, double beta, double r_min) {
  Matrix K(pts.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) K(i, j) = riesz_kernel(distance(pts[i], pts[j]), beta, r_min);
  }
  return K;
}

// Cap_beta(A) = 1 / inf over probability measures of the beta-energy. For
// beta < 0 the kernel is 1 and Cap = 1; finite sets carry only atomic measures
// and have Cap = 0 for beta >= 0. Continua are sampled with n_points and the
// kernel is smoothed at half the sample spacing.
inline GaugeResult capacity(const TargetSet& A, double beta, std::size_t n_points, std::size_t max_iters,
                            double tol = 1e-6) {
  if (n_points < 2) throw DomainError("capacity: need at least 2 sample points");
  GaugeResult g;
  g.beta = beta;
  if (beta < 0.0) {
    g.value = 1.0;
    return g;
  }
  if (A.kind == TargetSet::Kind::singleton || A.kind == TargetSet::Kind::points ||
      (A.kind == TargetSet::Kind::segment && A.length() == 0.0)) {
    g.value = 0.0;
    return g;
  }
  const auto cs = capacity_sample(A, n_points);
  const Matrix K = energy_matrix(cs.points, beta, cs.r_min);
  const auto sol = minimize_energy_frank_wolfe(K, max_iters, tol);
  g.method = GaugeMethod::energy_minimization;
  g.value = 1.0 / sol.energy;
  g.gap = std::max(0.0, sol.gap);
  g.r_min = cs.r_min;
  g.iterations = sol.iterations;
  g.converged = sol.converged;
  return g;
}

}  // namespace heatlab
