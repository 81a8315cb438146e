#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "heatlab/errors.hpp"
#include "heatlab/sigma.hpp"
#include "heatlab/solver.hpp"

namespace heatlab {

// Anisotropic window [t0, t0+zeta1] x [x0, x0+zeta2]. A zero side is allowed
// and degenerates the window to a segment or to the anchor itself.
struct Rectangle {
  double t0 = 0.0;
  double x0 = 0.0;
  double zeta1 = 0.0;
  double zeta2 = 0.0;

  double eta() const { return std::max(std::pow(zeta1, 0.25), std::sqrt(zeta2)); }
  double t1() const { return t0 + zeta1; }
  double x1() const { return x0 + zeta2; }
};

inline Rectangle make_rectangle(double t0, double x0, double zeta1, double zeta2) {
  if (!(zeta1 >= 0.0 && zeta1 <= 1.0) || !(zeta2 >= 0.0 && zeta2 <= 1.0)) {
    throw DomainError("rectangle: zeta1 and zeta2 must lie in [0, 1]");
  }
  if (t0 < 0.0) throw DomainError("rectangle: t0 must be >= 0");
  return Rectangle{t0, x0, zeta1, zeta2};
}

struct NodeRange {
  std::int64_t n0 = 0, n1 = 0;  // inclusive
  std::int64_t j0 = 0, j1 = 0;  // inclusive
};

// Lattice nodes covered by the rectangle; every corner must sit on a node.
inline NodeRange rectangle_nodes(const Rectangle& rect, const GridSpec& grid) {
  return NodeRange{require_index(rect.t0, grid.dt, "rectangle time"),
                   require_index(rect.t1(), grid.dt, "rectangle time"),
                   require_index(rect.x0, grid.dx, "rectangle space"),
                   require_index(rect.x1(), grid.dx, "rectangle space")};
}

// Sup estimates need at least `min_intervals` lattice intervals along every
// non-degenerate side.
inline void require_resolved(const Rectangle& rect, const GridSpec& grid, int min_intervals = 8) {
  const auto r = rectangle_nodes(rect, grid);
  if ((rect.zeta1 > 0.0 && r.n1 - r.n0 < min_intervals) || (rect.zeta2 > 0.0 && r.j1 - r.j0 < min_intervals)) {
    throw ConfigError("rectangle is not resolved by the grid (needs >= " + std::to_string(min_intervals) +
                      " intervals per side)");
  }
}

namespace detail {

inline void require_coupled(const FieldSolution& u, const FieldSolution& v) {
  if (!(u.seed == v.seed)) throw CouplingError("u and v were driven by different noise realizations");
  if (u.grid.dt != v.grid.dt || u.grid.dx != v.grid.dx || u.level != v.level) {
    throw CouplingError("u and v live on different lattices");
  }
}

inline void require_held(const FieldSolution& f, const NodeRange& r) {
  if (!f.holds(r.n0, r.j0) || !f.holds(r.n1, r.j1)) throw RangeError("rectangle outside the stored field");
}

}  // namespace detail

// Coupling residual at one node relative to an anchor:
//   L = u(t,x) - u(anchor) - sigma(u(anchor)) * (v(t,x) - v(anchor))
inline double coupling_residual(double u, double u_anchor, double v, double v_anchor, double sigma_anchor) {
  return (u - u_anchor) - sigma_anchor * (v - v_anchor);
}

// max over lattice nodes of the rectangle of |L(t,x)|.
inline double coupling_residual_sup(const FieldSolution& u, const FieldSolution& v, const SigmaSpec& sigma,
                                    const Rectangle& rect) {
  detail::require_coupled(u, v);
  const auto r = rectangle_nodes(rect, u.grid);
  detail::require_held(u, r);
  detail::require_held(v, r);
  const double ua = u.at(r.n0, r.j0);
  const double va = v.at(r.n0, r.j0);
  const double sa = sigma(ua);
  double sup = 0.0;
  for (std::int64_t n = r.n0; n <= r.n1; ++n) {
    for (std::int64_t j = r.j0; j <= r.j1; ++j) {
      sup = std::max(sup, std::fabs(coupling_residual(u.at(n, j), ua, v.at(n, j), va, sa)));
    }
  }
  return sup;
}

enum class Direction { temporal, spatial };

inline double directional_residual(const FieldSolution& u, const FieldSolution& v, const SigmaSpec& sigma,
                                   std::pair<double, double> anchor, std::pair<double, double> target,
                                   Direction direction) {
  detail::require_coupled(u, v);
  const auto [t0, x0] = anchor;
  const auto [t, x] = target;
  const std::int64_t n0 = require_index(t0, u.grid.dt, "anchor time");
  const std::int64_t j0 = require_index(x0, u.grid.dx, "anchor space");
  const std::int64_t n = require_index(t, u.grid.dt, "target time");
  const std::int64_t j = require_index(x, u.grid.dx, "target space");
  if (direction == Direction::temporal && (j != j0 || n < n0)) {
    throw UsageError("temporal residual needs x = x0 and t >= t0");
  }
  if (direction == Direction::spatial && n != n0) throw UsageError("spatial residual needs t = t0");
  if (!u.holds(n0, j0) || !u.holds(n, j) || !v.holds(n0, j0) || !v.holds(n, j)) {
    throw RangeError("directional residual outside the stored field");
  }
  const double ua = u.at(n0, j0);
  return std::fabs(coupling_residual(u.at(n, j), ua, v.at(n, j), v.at(n0, j0), sigma(ua)));
}

}  // namespace heatlab
