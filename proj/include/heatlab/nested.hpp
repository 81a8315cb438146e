#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/matrix.hpp"
#include "heatlab/noise.hpp"
#include "heatlab/sigma.hpp"
#include "heatlab/solver.hpp"

// Nested-window refinement.
//
// Fine-scale questions (sups over rectangles of side 2^-10, increments at lag
// 2^-20, ...) only need a fine lattice near the query window, yet the field
// there depends on the whole past. The nested solve runs the base lattice over
// the full domain and then a stack of levels, each with dx halved and dt
// quartered, on shrinking space-time windows around the queries:
//
//   level k starts at  s_k = t_query - relax * dx_{k-1}^2   (snapped to level k-1)
//   and spans          x_query +/- window_sigmas * sqrt(t_end - s_k)
//
// Level k takes its initial row and its Dirichlet data from level k-1 (linear
// interpolation in space at s_k, in time along the two boundary nodes). Its
// noise is the conditional refinement of level k-1's noise, so every level
// sees the same white-noise realization; within relax * dx_{k-1}^2 the fine
// modes the coarse level cannot resolve are regenerated by the fine scheme.

namespace heatlab {

struct RefinementTarget {
  double t_begin = 0.0;
  double t_end = 0.0;
  double x_begin = 0.0;
  double x_end = 0.0;
  double max_dx = 0.0;  // finest spacing the query needs
};

struct NestedOptions {
  double relax = 16.0;
  double window_sigmas = 6.0;
  int u_max_level = -1;  // u is solved on levels 0..u_max_level only; -1 = all
};

enum class Fields { linear, nonlinear, both };

struct NestedLevel {
  GridSpec grid;  // x_lo/x_hi = level window, horizon = last step
  std::int64_t n_begin = 0;
  std::optional<FieldSolution> u;
  std::optional<FieldSolution> v;
};

struct NestedSolution {
  std::vector<NestedLevel> levels;

  // Coarsest level whose spacing is <= max_dx.
  int level_for(double max_dx) const {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      if (levels[k].grid.dx <= max_dx * (1.0 + 1e-12)) return static_cast<int>(k);
    }
    throw RangeError("nested solution has no level fine enough");
  }
  const FieldSolution& u(int level) const {
    const auto& f = levels.at(static_cast<std::size_t>(level)).u;
    if (!f) throw UsageError("nested solution holds no nonlinear field");
    return *f;
  }
  const FieldSolution& v(int level) const {
    const auto& f = levels.at(static_cast<std::size_t>(level)).v;
    if (!f) throw UsageError("nested solution holds no linear field");
    return *f;
  }
  const FieldSolution& u_at(double max_dx) const { return u(level_for(max_dx)); }
  const FieldSolution& v_at(double max_dx) const { return v(level_for(max_dx)); }
};

namespace detail {

// Noise of a parent level kept for its child: rows are parent steps
// n0 .., columns parent cells jc0 ..
struct NoiseBlock {
  std::int64_t n0 = 0;
  std::int64_t jc0 = 0;
  Matrix xi;
};

struct LevelPlan {
  GridSpec grid;
  std::int64_t n_begin = 0;
  std::int64_t n_end = 0;  // last step (inclusive)
};

inline std::vector<LevelPlan> plan_levels(const GridSpec& base, std::span<const RefinementTarget> targets,
                                          const NestedOptions& opt) {
  if (targets.empty()) throw UsageError("nested solve needs at least one target");
  std::vector<int> level_of;
  int depth = 0;
  for (const auto& t : targets) {
    if (!(t.t_end >= t.t_begin) || !(t.x_end >= t.x_begin) || !(t.max_dx > 0.0)) {
      throw DomainError("refinement target is empty or has no resolution");
    }
    if (t.t_begin < 0.0 || t.t_end > base.horizon + 1e-12 || t.x_begin <= base.x_lo || t.x_end >= base.x_hi) {
      throw RangeError("refinement target outside the base grid");
    }
    int k = 0;
    double dx = base.dx;
    while (dx > t.max_dx * (1.0 + 1e-12)) {
      dx *= 0.5;
      ++k;
      if (k >= kMaxLevels) throw ResourceError("refinement depth exceeds the level limit");
    }
    level_of.push_back(k);
    depth = std::max(depth, k);
  }
  std::vector<LevelPlan> plans;
  for (int k = 0; k <= depth; ++k) {
    double ta = 1e300, te = -1e300, xa = 1e300, xb = -1e300;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (level_of[i] < k) continue;
      ta = std::min(ta, targets[i].t_begin);
      te = std::max(te, targets[i].t_end);
      xa = std::min(xa, targets[i].x_begin);
      xb = std::max(xb, targets[i].x_end);
    }
    LevelPlan p;
    if (k == 0) {
      p.grid = base;
      const auto n_end = static_cast<std::int64_t>(std::ceil(te / base.dt - 1e-9));
      p.grid.horizon = static_cast<double>(n_end) * base.dt;
      p.n_begin = 0;
      p.n_end = n_end;
    } else {
      const LevelPlan& parent = plans.back();
      const double dtc = parent.grid.dt;
      const double dxc = parent.grid.dx;
      GridSpec g = parent.grid;
      g.dx = dxc * 0.5;
      g.dt = dtc * 0.25;
      std::int64_t nc_begin = static_cast<std::int64_t>(std::floor((ta - opt.relax * dxc * dxc) / dtc + 1e-9));
      nc_begin = std::max(nc_begin, parent.n_begin);
      std::int64_t nc_end = static_cast<std::int64_t>(std::ceil(te / dtc - 1e-9));
      nc_end = std::min(nc_end, parent.n_end);
      if (nc_end <= nc_begin) nc_end = nc_begin + 1;
      if (nc_end > parent.n_end) throw RangeError("refinement window leaves the parent level");
      const double width = opt.window_sigmas * std::sqrt(static_cast<double>(nc_end - nc_begin) * dtc);
      std::int64_t jc_lo = static_cast<std::int64_t>(std::floor((xa - width) / dxc - 1e-9));
      std::int64_t jc_hi = static_cast<std::int64_t>(std::ceil((xb + width) / dxc + 1e-9));
      jc_lo = std::max(jc_lo, parent.grid.node_lo());
      jc_hi = std::min(jc_hi, parent.grid.node_hi());
      if (jc_hi - jc_lo < 2) throw RangeError("refinement window too narrow");
      g.x_lo = static_cast<double>(jc_lo) * dxc;
      g.x_hi = static_cast<double>(jc_hi) * dxc;
      g.horizon = static_cast<double>(nc_end) * dtc;
      p.grid = g;
      p.n_begin = 4 * nc_begin;
      p.n_end = 4 * nc_end;
    }
    plans.push_back(p);
  }
  return plans;
}

inline double lerp_exact(double a, double b, double w) { return (1.0 - w) * a + w * b; }

}  // namespace detail

inline NestedSolution solve_nested(const GridSpec& base, std::span<const RefinementTarget> targets, const Seed& seed,
                                   Fields fields, const SigmaSpec* sigma = nullptr, const NestedOptions& opt = {}) {
  validate(base);
  const bool want_u = fields != Fields::linear;
  const bool want_v = fields != Fields::nonlinear;
  if (want_u && sigma == nullptr) throw UsageError("nested solve of u needs a sigma");
  const auto plans = detail::plan_levels(base, targets, opt);

  NestedSolution out;
  detail::NoiseBlock parent_noise;
  for (std::size_t k = 0; k < plans.size(); ++k) {
    const auto& p = plans[k];
    const GridSpec& g = p.grid;
    const std::int64_t j0 = g.node_lo();
    const auto m = static_cast<std::size_t>(g.nodes());
    const auto rows = static_cast<std::size_t>(p.n_end - p.n_begin + 1);
    const double r = detail::diffusion_number(g);
    const double s = detail::noise_scale(g);

    NestedLevel level;
    level.grid = g;
    level.n_begin = p.n_begin;
    auto make = [&](FieldKind kind) {
      FieldSolution f;
      f.values = Matrix(rows, m);
      f.grid = g;
      f.kind = kind;
      if (kind == FieldKind::nonlinear) f.sigma = *sigma;
      f.seed = seed;
      f.level = static_cast<int>(k);
      f.n_begin = p.n_begin;
      f.j_begin = j0;
      return f;
    };
    if (want_u && (opt.u_max_level < 0 || static_cast<int>(k) <= opt.u_max_level)) {
      level.u = make(FieldKind::nonlinear);
    }
    if (want_v) level.v = make(FieldKind::linear);

    // child noise region (cells of this level the next level refines)
    detail::NoiseBlock child;
    const bool has_child = k + 1 < plans.size();
    std::int64_t child_n0 = 0, child_n1 = 0, child_j0 = 0, child_j1 = 0;
    if (has_child) {
      const auto& cp = plans[k + 1];
      child_n0 = cp.n_begin / 4;
      child_n1 = cp.n_end / 4;  // exclusive
      child_j0 = std::llround(cp.grid.x_lo / g.dx);
      child_j1 = std::llround(cp.grid.x_hi / g.dx);
      child.n0 = child_n0;
      child.jc0 = child_j0;
      child.xi = Matrix(static_cast<std::size_t>(child_n1 - child_n0), static_cast<std::size_t>(child_j1 - child_j0 + 1));
    }
    auto keep_child = [&](std::int64_t n, std::span<const double> xi_row) {
      if (!has_child || n < child_n0 || n >= child_n1) return;
      auto dst = child.xi.row(static_cast<std::size_t>(n - child_n0));
      const auto off = static_cast<std::size_t>(child_j0 - j0);
      std::copy_n(xi_row.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    };

    std::vector<double> u_prev(m, 0.0), u_next(m, 0.0), v_prev(m, 0.0), v_next(m, 0.0), xi(m, 0.0);
    auto record = [&](std::int64_t n) {
      const auto row = static_cast<std::size_t>(n - p.n_begin);
      if (level.u) std::copy(u_prev.begin(), u_prev.end(), level.u->values.row(row).begin());
      if (level.v) std::copy(v_prev.begin(), v_prev.end(), level.v->values.row(row).begin());
    };
    auto advance = [&](std::span<const double> xi_row) {
      if (level.u) {
        detail::step_nonlinear(u_prev, u_next, xi_row, r, s, *sigma);
        std::swap(u_prev, u_next);
      }
      if (level.v) {
        detail::step_linear(v_prev, v_next, xi_row, r, s);
        std::swap(v_prev, v_next);
      }
    };

    if (k == 0) {
      record(0);
      for (std::int64_t n = 0; n < p.n_end; ++n) {
        fill_normal_row(seed, 0, n, j0, xi);
        keep_child(n, xi);
        advance(xi);
        record(n + 1);
      }
    } else {
      const NestedLevel& parent = out.levels.back();
      const std::int64_t jc_lo = std::llround(g.x_lo / parent.grid.dx);
      const std::int64_t jc_hi = std::llround(g.x_hi / parent.grid.dx);
      const std::int64_t nc0 = p.n_begin / 4;
      // initial row from the parent at s_k
      auto init = [&](const FieldSolution& coarse, std::vector<double>& dst) {
        for (std::size_t c = 0; c < m; ++c) {
          const std::int64_t j = j0 + static_cast<std::int64_t>(c);
          if ((j & 1) == 0) {
            dst[c] = coarse.at(nc0, j >> 1);
          } else {
            dst[c] = 0.5 * (coarse.at(nc0, j >> 1) + coarse.at(nc0, (j >> 1) + 1));
          }
        }
      };
      if (level.u) init(*parent.u, u_prev);
      if (level.v) init(*parent.v, v_prev);
      u_next = u_prev;
      v_next = v_prev;
      record(p.n_begin);
      Matrix fine;
      std::vector<double> coarse_row(static_cast<std::size_t>(jc_hi - jc_lo + 1));
      for (std::int64_t nc = nc0; nc < p.n_end / 4; ++nc) {
        const auto src = parent_noise.xi.row(static_cast<std::size_t>(nc - parent_noise.n0));
        const auto off = static_cast<std::size_t>(jc_lo - parent_noise.jc0);
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(off), coarse_row.size(), coarse_row.begin());
        refine_noise_row(seed, static_cast<int>(k), nc, jc_lo, coarse_row, fine);
        for (std::int64_t a = 0; a < 4; ++a) {
          const std::int64_t n = 4 * nc + a;
          const auto frow = fine.row(static_cast<std::size_t>(a));
          std::copy_n(frow.begin(), m, xi.begin());
          keep_child(n, xi);
          advance(xi);
          const double w = 0.25 * static_cast<double>(a + 1);
          if (level.u) {
            u_prev.front() = detail::lerp_exact(parent.u->at(nc, jc_lo), parent.u->at(nc + 1, jc_lo), w);
            u_prev.back() = detail::lerp_exact(parent.u->at(nc, jc_hi), parent.u->at(nc + 1, jc_hi), w);
          }
          if (level.v) {
            v_prev.front() = detail::lerp_exact(parent.v->at(nc, jc_lo), parent.v->at(nc + 1, jc_lo), w);
            v_prev.back() = detail::lerp_exact(parent.v->at(nc, jc_hi), parent.v->at(nc + 1, jc_hi), w);
          }
          record(n + 1);
        }
      }
    }
    out.levels.push_back(std::move(level));
    parent_noise = std::move(child);
  }
  return out;
}

inline NestedSolution solve_nested(const GridSpec& base, const RefinementTarget& target, const Seed& seed,
                                   Fields fields, const SigmaSpec* sigma = nullptr, const NestedOptions& opt = {}) {
  return solve_nested(base, std::span<const RefinementTarget>(&target, 1), seed, fields, sigma, opt);
}

}  // namespace heatlab
