#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "heatlab/coupling.hpp"
#include "heatlab/errors.hpp"
#include "heatlab/nested.hpp"
#include "heatlab/noise.hpp"
#include "heatlab/parallel.hpp"
#include "heatlab/sigma.hpp"
#include "heatlab/solver.hpp"
#include "heatlab/stats.hpp"
#include "heatlab/target.hpp"

namespace heatlab {

// Everything a Monte Carlo estimator needs to produce component paths.
struct SimulationContext {
  GridSpec base;
  SigmaSpec sigma;
  std::uint64_t master = 0;
  unsigned threads = 1;
  int intervals_per_side = 8;
  NestedOptions nested;
  double work_budget = 1e13;  // lattice cells over all replications and components
};

// R^n_{m,l}: extents 2^{-4n} x 2^{-2n}, i.e. 2^{-n/H1} x 2^{-n/H2}.
struct DyadicCell {
  static constexpr double h1 = 0.25;
  static constexpr double h2 = 0.5;
  int n = 0;
  std::int64_t m = 0;
  std::int64_t l = 0;

  double duration() const { return std::ldexp(1.0, -4 * n); }
  double width() const { return std::ldexp(1.0, -2 * n); }
  friend bool operator==(const DyadicCell&, const DyadicCell&) = default;
};

inline Rectangle dyadic_cell(int n, std::int64_t m, std::int64_t l, std::pair<double, double> origin) {
  if (n < 0) throw DomainError("dyadic_cell: level must be >= 0");
  const DyadicCell c{n, m, l};
  return Rectangle{origin.first + static_cast<double>(m) * c.duration(),
                   origin.second + static_cast<double>(l) * c.width(), c.duration(), c.width()};
}

namespace detail {

inline bool overlaps(double a0, double a1, const Interval& w) { return std::min(a1, w.hi) > std::max(a0, w.lo); }

}  // namespace detail

// As above, but the cell must meet I x J in a set of positive area.
inline Rectangle dyadic_cell(int n, std::int64_t m, std::int64_t l, std::pair<double, double> origin,
                             const Interval& I, const Interval& J) {
  const Rectangle r = dyadic_cell(n, m, l, origin);
  if (!detail::overlaps(r.t0, r.t1(), I) || !detail::overlaps(r.x0, r.x1(), J)) {
    throw RangeError("dyadic cell does not meet I x J");
  }
  return r;
}

// All level-n cells meeting I x J in positive area.
inline std::vector<DyadicCell> dyadic_cells(int n, std::pair<double, double> origin, const Interval& I,
                                            const Interval& J) {
  if (n < 0) throw DomainError("dyadic_cells: level must be >= 0");
  const DyadicCell unit{n, 0, 0};
  const auto m0 = static_cast<std::int64_t>(std::floor((I.lo - origin.first) / unit.duration()));
  const auto m1 = static_cast<std::int64_t>(std::ceil((I.hi - origin.first) / unit.duration()));
  const auto l0 = static_cast<std::int64_t>(std::floor((J.lo - origin.second) / unit.width()));
  const auto l1 = static_cast<std::int64_t>(std::ceil((J.hi - origin.second) / unit.width()));
  std::vector<DyadicCell> out;
  for (std::int64_t m = m0; m < m1; ++m) {
    for (std::int64_t l = l0; l < l1; ++l) {
      const Rectangle r = dyadic_cell(n, m, l, origin);
      if (detail::overlaps(r.t0, r.t1(), I) && detail::overlaps(r.x0, r.x1(), J)) out.push_back({n, m, l});
    }
  }
  return out;
}

struct HittingEstimate {
  double p_hat = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 1.0;
  std::size_t n_reps = 0;
  std::size_t successes = 0;
  std::optional<int> n;
  double tol = 0.0;
};

inline HittingEstimate make_estimate(std::size_t successes, std::size_t n_reps, std::optional<int> n = std::nullopt,
                                     double tol = 0.0) {
  HittingEstimate e;
  e.n_reps = n_reps;
  e.successes = successes;
  e.p_hat = n_reps ? static_cast<double>(successes) / static_cast<double>(n_reps) : 0.0;
  const auto ci = wilson_interval(successes, n_reps);
  e.ci_lo = ci.lo;
  e.ci_hi = ci.hi;
  e.n = n;
  e.tol = tol;
  return e;
}

// Distance helpers over the lattice nodes of a rectangle; `comps` holds one
// field per coordinate of U, all on the same lattice.
namespace detail {

struct RectDistance {
  double euclid = std::numeric_limits<double>::infinity();
  double max_norm = std::numeric_limits<double>::infinity();
  // max over coordinates of each coordinate's own closest approach
  double componentwise = 0.0;
};

inline RectDistance rect_distance(std::span<const FieldSolution* const> comps, const Rectangle& rect,
                                  const Point& z0) {
  const auto r = rectangle_nodes(rect, comps.front()->grid);
  for (const auto* f : comps) {
    if (!f->holds(r.n0, r.j0) || !f->holds(r.n1, r.j1)) throw RangeError("cell outside the stored field");
  }
  RectDistance out;
  std::vector<double> closest(comps.size(), std::numeric_limits<double>::infinity());
  for (std::int64_t n = r.n0; n <= r.n1; ++n) {
    for (std::int64_t j = r.j0; j <= r.j1; ++j) {
      double q = 0.0, mx = 0.0;
      for (std::size_t c = 0; c < comps.size(); ++c) {
        const double e = comps[c]->at(n, j) - z0[c];
        q += e * e;
        mx = std::max(mx, std::fabs(e));
        closest[c] = std::min(closest[c], std::fabs(e));
      }
      out.euclid = std::min(out.euclid, q);
      out.max_norm = std::min(out.max_norm, mx);
    }
  }
  out.euclid = std::sqrt(out.euclid);
  for (double v : closest) out.componentwise = std::max(out.componentwise, v);
  return out;
}

inline double resolving_dx(const Rectangle& rect, int per_side) {
  double dx = std::numeric_limits<double>::infinity();
  if (rect.zeta2 > 0.0) dx = rect.zeta2 / per_side;
  if (rect.zeta1 > 0.0) dx = std::min(dx, std::sqrt(2.0 * rect.zeta1 / per_side));
  if (!std::isfinite(dx)) throw DomainError("cell has no extent");
  return std::ldexp(1.0, static_cast<int>(std::floor(std::log2(dx) + 1e-12)));
}

}  // namespace detail

struct SmallBallQuery {
  Rectangle cell;
  double threshold = 0.0;
  std::optional<int> n;
};

struct SmallBallResult {
  HittingEstimate euclid;
  HittingEstimate max_norm;       // common node, per-coordinate threshold
  HittingEstimate per_component;  // every coordinate within the threshold, each at its own node
};

// Common-random-number batch: every replication solves the d components once
// and evaluates every query on the same paths. Entry [k][i] is query i for the
// leading k+1 coordinates of U and z0, so all dimensions up to d share paths.
inline std::vector<std::vector<SmallBallResult>> small_ball_prefix_batch(const SimulationContext& ctx, const Point& z0,
                                                                         std::span<const SmallBallQuery> queries,
                                                                         std::size_t n_reps) {
  if (queries.empty()) return {};
  if (z0.empty() || z0.size() > 8) throw DomainError("small-ball estimates support 1 <= d <= 8");
  if (ctx.intervals_per_side < 8) throw ConfigError("cells must be resolved by at least 8 intervals per side");
  const std::size_t d = z0.size();
  const std::size_t nq = queries.size();
  std::vector<RefinementTarget> targets;
  for (const auto& q : queries) {
    if (!(q.threshold >= 0.0)) throw DomainError("small-ball threshold must be >= 0");
    targets.push_back({q.cell.t0, q.cell.t1(), q.cell.x0, q.cell.x1(),
                       detail::resolving_dx(q.cell, ctx.intervals_per_side)});
  }
  auto slot = [&](std::size_t rep, std::size_t k, std::size_t i) { return ((rep * d + k) * nq + i) * 3; };
  std::vector<std::uint8_t> hit(n_reps * d * nq * 3, 0);
  parallel_for(n_reps, ctx.threads, [&](std::size_t rep) {
    std::vector<NestedSolution> sols;
    for (std::size_t c = 0; c < d; ++c) {
      sols.push_back(solve_nested(ctx.base, targets, derive_seed(ctx.master, static_cast<std::int64_t>(c),
                                                                static_cast<std::int64_t>(rep)),
                                  Fields::nonlinear, &ctx.sigma, ctx.nested));
    }
    std::vector<const FieldSolution*> comps(d);
    for (std::size_t i = 0; i < nq; ++i) {
      const int lvl = sols.front().level_for(targets[i].max_dx);
      for (std::size_t c = 0; c < d; ++c) comps[c] = &sols[c].u(lvl);
      require_resolved(queries[i].cell, comps.front()->grid, ctx.intervals_per_side);
      for (std::size_t k = 0; k < d; ++k) {
        const Point zk(z0.begin(), z0.begin() + static_cast<std::ptrdiff_t>(k + 1));
        const auto dist = detail::rect_distance(std::span<const FieldSolution* const>(comps.data(), k + 1),
                                                queries[i].cell, zk);
        hit[slot(rep, k, i)] = dist.euclid <= queries[i].threshold;
        hit[slot(rep, k, i) + 1] = dist.max_norm <= queries[i].threshold;
        hit[slot(rep, k, i) + 2] = dist.componentwise <= queries[i].threshold;
      }
    }
  });
  std::vector<std::vector<SmallBallResult>> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < nq; ++i) {
      std::size_t e = 0, m = 0, pc = 0;
      for (std::size_t rep = 0; rep < n_reps; ++rep) {
        e += hit[slot(rep, k, i)];
        m += hit[slot(rep, k, i) + 1];
        pc += hit[slot(rep, k, i) + 2];
      }
      out[k].push_back({make_estimate(e, n_reps, queries[i].n), make_estimate(m, n_reps, queries[i].n),
                        make_estimate(pc, n_reps, queries[i].n)});
    }
  }
  return out;
}

inline std::vector<SmallBallResult> small_ball_batch(const SimulationContext& ctx, const Point& z0,
                                                     std::span<const SmallBallQuery> queries, std::size_t n_reps) {
  if (queries.empty()) return {};
  return small_ball_prefix_batch(ctx, z0, queries, n_reps).back();
}

// P{ min over cell nodes |U - z0| <= 2^-n } (threshold overridable).
inline SmallBallResult vector_small_ball_prob(const SimulationContext& ctx, const Point& z0, const Rectangle& cell,
                                              int n, std::size_t n_reps,
                                              std::optional<double> threshold = std::nullopt) {
  const SmallBallQuery q{cell, threshold.value_or(std::ldexp(1.0, -n)), n};
  return small_ball_batch(ctx, z0, std::span<const SmallBallQuery>(&q, 1), n_reps).front();
}

inline HittingEstimate small_ball_prob(const SimulationContext& ctx, double z, const Rectangle& cell, int n,
                                       std::size_t n_reps, std::optional<double> threshold = std::nullopt) {
  return vector_small_ball_prob(ctx, Point{z}, cell, n, n_reps, threshold).euclid;
}

inline constexpr std::size_t kMaxCoverBalls = std::size_t{1} << 22;

// Finite cover of A by balls of radius < epsilon.
inline std::vector<Ball> cover_set(const TargetSet& A, double epsilon) {
  if (!(epsilon > 0.0)) throw DomainError("cover_set: epsilon must be > 0");
  std::vector<Ball> out;
  const auto d = static_cast<std::size_t>(A.d);
  switch (A.kind) {
    case TargetSet::Kind::singleton:
    case TargetSet::Kind::points:
      for (const auto& p : A.points) out.push_back({p, epsilon / 2.0});
      return out;
    case TargetSet::Kind::segment: {
      // k equal pieces of length <= epsilon, each inside the ball on its midpoint
      const double len = A.length();
      const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / epsilon - 1e-12)));
      if (k > kMaxCoverBalls) throw ResourceError("cover_set: too many balls");
      for (std::size_t i = 0; i < k; ++i) {
        const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
        Point c(d);
        for (std::size_t j = 0; j < d; ++j) c[j] = A.points[0][j] + s * (A.points[1][j] - A.points[0][j]);
        out.push_back({std::move(c), std::max(len / (2.0 * static_cast<double>(k)), epsilon * 1e-9)});
      }
      return out;
    }
    case TargetSet::Kind::ball: {
      // cubes of side s with half-diagonal s*sqrt(d)/2 = epsilon/2
      const double s = epsilon / std::sqrt(static_cast<double>(d));
      const auto per_axis = static_cast<std::size_t>(std::ceil(2.0 * A.radius / s));
      const double total = std::pow(static_cast<double>(per_axis), static_cast<double>(d));
      if (total > static_cast<double>(kMaxCoverBalls)) throw ResourceError("cover_set: too many balls");
      std::vector<std::size_t> idx(d, 0);
      for (;;) {
        Point lo(d), c(d);
        for (std::size_t j = 0; j < d; ++j) {
          lo[j] = A.points[0][j] - A.radius + static_cast<double>(idx[j]) * s;
          c[j] = lo[j] + s / 2.0;
        }
        // keep cubes that meet the ball
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double e = std::clamp(A.points[0][j], lo[j], lo[j] + s) - A.points[0][j];
          q += e * e;
        }
        if (q <= A.radius * A.radius) out.push_back({c, epsilon / 2.0});
        std::size_t j = 0;
        while (j < d && ++idx[j] == per_axis) idx[j++] = 0;
        if (j == d) break;
      }
      return out;
    }
    case TargetSet::Kind::cantor_dust: {
      // construction cubes at the first level whose half-diagonal is < epsilon
      int level = 0;
      double side = A.side;
      while (side * std::sqrt(static_cast<double>(d)) / 2.0 >= epsilon) {
        if (level == A.depth) throw CapabilityError("cover_set: epsilon is finer than the resolved dust depth");
        side /= 3.0;
        ++level;
      }
      const double radius = side * std::sqrt(static_cast<double>(d)) / 2.0;
      const double total = std::pow(2.0, static_cast<double>(level) * static_cast<double>(d));
      if (total > static_cast<double>(kMaxCoverBalls)) throw ResourceError("cover_set: too many balls");
      std::vector<double> offsets{0.0};
      double w = A.side;
      for (int lvl = 0; lvl < level; ++lvl) {
        w /= 3.0;
        std::vector<double> next;
        for (double o : offsets) {
          next.push_back(o);
          next.push_back(o + 2.0 * w);
        }
        offsets = std::move(next);
      }
      std::vector<std::size_t> idx(d, 0);
      for (;;) {
        Point c(d);
        for (std::size_t j = 0; j < d; ++j) c[j] = A.points[0][j] + offsets[idx[j]] + side / 2.0;
        out.push_back({std::move(c), radius});
        std::size_t j = 0;
        while (j < d && ++idx[j] == offsets.size()) idx[j++] = 0;
        if (j == d) break;
      }
      return out;
    }
  }
  throw CapabilityError("cover_set: unsupported set kind");
}

// Sum of (2 r_i)^beta over a cover.
inline double cover_sum(std::span<const Ball> balls, double beta) {
  double s = 0.0;
  for (const auto& b : balls) s += std::pow(2.0 * b.radius, beta);
  return s;
}

struct HittingSetResult {
  HittingEstimate direct;
  double cover_bound = 0.0;       // sum over balls and cells of per-cell hit frequencies
  std::size_t cover_balls = 0;
  std::size_t cover_cells = 0;
};

struct HittingOptions {
  std::optional<double> tol;      // default 2 sqrt(dx) of the lattice on I x J
  std::optional<double> fine_dx;  // finer spacing on I x J through a nested solve
  int cover_level = 2;            // cells R^n and balls of radius < 2^-n
};

// Spacing of the lattice hitting_batch reads I x J from.
inline double hitting_dx(const GridSpec& base, const HittingOptions& opt) {
  double dx = base.dx;
  if (opt.fine_dx) {
    while (dx > *opt.fine_dx * (1.0 + 1e-12)) dx /= 2.0;
  }
  return dx;
}

// P{ U(I x J) meets A } on the lattice of ctx.base (or of a nested level at
// opt.fine_dx over I x J): a replication hits A when
// some node of I x J is within tol of A. Every set is evaluated on the same
// paths. The covering bound replaces A by a cover with balls B_i and counts,
// for each ball and each level-n cell, the paths on which some node of the
// cell comes within r_i + tol of the centre; that count dominates the direct
// one path by path.
inline std::vector<HittingSetResult> hitting_batch(const SimulationContext& ctx, std::span<const TargetSet> sets,
                                                   const Interval& I, const Interval& J, std::size_t n_reps,
                                                   const HittingOptions& opt = {}) {
  if (sets.empty()) return {};
  const int d = sets.front().d;
  for (const auto& s : sets) {
    if (s.d != d) throw UsageError("hitting_batch: sets of mixed dimension");
  }
  const GridSpec& g = ctx.base;
  validate(g, J);
  if (!(I.lo > 0.0) || !(I.hi > I.lo) || I.hi > g.horizon + 1e-12) throw ConfigError("hitting: I must lie in (0, T]");
  const StoreRegion region{require_index(I.lo, g.dt, "I start"), require_index(I.hi, g.dt, "I end"),
                           require_index(J.lo, g.dx, "J start"), require_index(J.hi, g.dx, "J end")};
  const std::int64_t n1 = *region.n_to;
  const double fdx = hitting_dx(g, opt);
  const bool nested = fdx < g.dx;
  const double fine_cells = nested ? (I.length() / (g.stability_ratio * fdx * fdx)) * (J.length() / fdx) : 0.0;
  const double work = static_cast<double>(n_reps) * d * (static_cast<double>(n1) * static_cast<double>(g.nodes()) + fine_cells);
  if (work > ctx.work_budget) throw ResourceError("hitting: replications x components x lattice exceed the budget");
  const double tol = opt.tol.value_or(2.0 * std::sqrt(fdx));
  GridSpec run = g;
  run.horizon = static_cast<double>(n1) * g.dt;
  const Rectangle window{I.lo, J.lo, I.length(), J.length()};
  const RefinementTarget target{I.lo, I.hi, J.lo, J.hi, fdx};

  const auto cells = dyadic_cells(opt.cover_level, {I.lo, J.lo}, I, J);
  std::vector<std::vector<Ball>> covers;
  for (const auto& s : sets) covers.push_back(cover_set(s, std::ldexp(1.0, -opt.cover_level)));
  std::vector<Rectangle> rects;
  for (const auto& c : cells) {
    Rectangle r = dyadic_cell(c.n, c.m, c.l, {I.lo, J.lo});
    // clip to I x J; all ends stay on the lattice
    const double t0 = std::max(r.t0, I.lo), t1 = std::min(r.t1(), I.hi);
    const double x0 = std::max(r.x0, J.lo), x1 = std::min(r.x1(), J.hi);
    rects.push_back(Rectangle{t0, x0, t1 - t0, x1 - x0});
  }

  const std::size_t ns = sets.size();
  std::vector<std::uint8_t> direct(n_reps * ns, 0);
  std::vector<std::uint32_t> cover_hits(n_reps * ns, 0);
  parallel_for(n_reps, ctx.threads, [&](std::size_t rep) {
    std::vector<FieldSolution> flat;
    std::vector<NestedSolution> sols;
    std::vector<const FieldSolution*> ptrs;
    for (int c = 0; c < d; ++c) {
      const auto seed = derive_seed(ctx.master, c, static_cast<std::int64_t>(rep));
      if (nested) {
        sols.push_back(solve_nested(run, target, seed, Fields::nonlinear, &ctx.sigma, ctx.nested));
      } else {
        flat.push_back(solve_nonlinear(run, seed, ctx.sigma, region));
      }
    }
    if (nested) {
      for (const auto& s : sols) ptrs.push_back(&s.u(s.level_for(fdx)));
    } else {
      for (const auto& f : flat) ptrs.push_back(&f);
    }
    const auto nodes = rectangle_nodes(window, ptrs.front()->grid);
    const std::int64_t n0 = nodes.n0, nlast = nodes.n1, j0 = nodes.j0, j1 = nodes.j1;
    Point z(static_cast<std::size_t>(d));
    for (std::size_t s = 0; s < ns; ++s) {
      bool any = false;
      for (std::int64_t n = n0; n <= nlast && !any; ++n) {
        for (std::int64_t j = j0; j <= j1; ++j) {
          for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(c)] = ptrs[static_cast<std::size_t>(c)]->at(n, j);
          if (sets[s].distance(z) <= tol) {
            any = true;
            break;
          }
        }
      }
      direct[rep * ns + s] = any;
      std::uint32_t count = 0;
      for (const auto& ball : covers[s]) {
        for (const auto& rect : rects) {
          if (detail::rect_distance(ptrs, rect, ball.center).euclid <= ball.radius + tol) ++count;
        }
      }
      cover_hits[rep * ns + s] = count;
    }
  });
  std::vector<HittingSetResult> out;
  for (std::size_t s = 0; s < ns; ++s) {
    std::size_t hits = 0;
    double cover = 0.0;
    for (std::size_t rep = 0; rep < n_reps; ++rep) {
      hits += direct[rep * ns + s];
      cover += cover_hits[rep * ns + s];
    }
    HittingSetResult r;
    r.direct = make_estimate(hits, n_reps, std::nullopt, tol);
    r.cover_bound = n_reps ? cover / static_cast<double>(n_reps) : 0.0;
    r.cover_balls = covers[s].size();
    r.cover_cells = rects.size();
    out.push_back(r);
  }
  return out;
}

inline HittingEstimate hitting_prob_estimate(const SimulationContext& ctx, const TargetSet& A, const Interval& I,
                                             const Interval& J, std::size_t n_reps, const HittingOptions& opt = {}) {
  return hitting_batch(ctx, std::span<const TargetSet>(&A, 1), I, J, n_reps, opt).front().direct;
}

}  // namespace heatlab
