#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "heatlab/errors.hpp"
#include "heatlab/matrix.hpp"
#include "heatlab/noise.hpp"
#include "heatlab/sigma.hpp"

namespace heatlab {

inline double heat_kernel(double t, double x) {
  if (!(t > 0.0)) throw DomainError("heat_kernel: t must be > 0");
  return std::exp(-x * x / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

enum class FieldKind { linear, nonlinear };

inline std::string to_string(FieldKind k) { return k == FieldKind::linear ? "linear" : "nonlinear"; }

// One realized path of u (nonlinear) or v (linear). `values` may hold only a
// sub-block of the lattice: row r is step n_begin + r, column c is node
// j_begin + c. Nested solves also record their refinement level.
struct FieldSolution {
  Matrix values;
  GridSpec grid;
  FieldKind kind = FieldKind::linear;
  std::optional<SigmaSpec> sigma;
  Seed seed;
  int level = 0;
  std::int64_t n_begin = 0;
  std::int64_t j_begin = 0;

  std::int64_t n_end() const { return n_begin + static_cast<std::int64_t>(values.rows()); }
  std::int64_t j_end() const { return j_begin + static_cast<std::int64_t>(values.cols()); }
  bool holds(std::int64_t n, std::int64_t j) const { return n >= n_begin && n < n_end() && j >= j_begin && j < j_end(); }
  double at(std::int64_t n, std::int64_t j) const {
    return values(static_cast<std::size_t>(n - n_begin), static_cast<std::size_t>(j - j_begin));
  }
};

// Index of a lattice coordinate, or nullopt when v is not within a relative
// 1e-7 of a node.
inline std::optional<std::int64_t> lattice_index(double v, double h) {
  const double k = v / h;
  const double r = std::round(k);
  if (std::fabs(k - r) > 1e-7 * std::max(1.0, std::fabs(r))) return std::nullopt;
  return static_cast<std::int64_t>(r);
}

inline std::int64_t require_index(double v, double h, const char* what) {
  const auto i = lattice_index(v, h);
  if (!i) throw PrecisionError(std::string("off-grid ") + what + " query");
  return *i;
}

inline double field_value(const FieldSolution& sol, double t, double x) {
  const std::int64_t n = require_index(t, sol.grid.dt, "time");
  const std::int64_t j = require_index(x, sol.grid.dx, "space");
  if (!sol.holds(n, j)) throw RangeError("field_value: node outside the stored block");
  return sol.at(n, j);
}

// Which part of the lattice a solve keeps. Defaults keep everything.
struct StoreRegion {
  std::optional<std::int64_t> n_from, n_to;  // inclusive step range
  std::optional<std::int64_t> j_from, j_to;  // inclusive node range
};

namespace detail {

// One explicit Euler step of dv = (1/2) v_xx dt + g(v) dW on interior nodes;
// the caller sets next.front() and next.back() (Dirichlet data).
//   next[j] = prev[j] + r*(prev[j-1] - 2 prev[j] + prev[j+1]) + g(prev[j]) * (s*xi[j])
// The linear step is the same expression without the g factor so that g == 1
// reproduces it bit for bit.
inline void step_linear(std::span<const double> prev, std::span<double> next, std::span<const double> xi,
                        double r, double s) {
  const std::size_t m = prev.size();
  for (std::size_t j = 1; j + 1 < m; ++j) {
    const double lap = (prev[j - 1] - 2.0 * prev[j]) + prev[j + 1];
    next[j] = (prev[j] + r * lap) + (s * xi[j]);
  }
}

inline void step_nonlinear(std::span<const double> prev, std::span<double> next, std::span<const double> xi,
                           double r, double s, const SigmaSpec& sigma) {
  const std::size_t m = prev.size();
  if (sigma.is_constant()) {
    const double g = sigma.a;
    for (std::size_t j = 1; j + 1 < m; ++j) {
      const double lap = (prev[j - 1] - 2.0 * prev[j]) + prev[j + 1];
      next[j] = (prev[j] + r * lap) + g * (s * xi[j]);
    }
    return;
  }
  for (std::size_t j = 1; j + 1 < m; ++j) {
    const double lap = (prev[j - 1] - 2.0 * prev[j]) + prev[j + 1];
    next[j] = (prev[j] + r * lap) + sigma(prev[j]) * (s * xi[j]);
  }
}

inline double diffusion_number(const GridSpec& g) { return g.dt / (2.0 * g.dx * g.dx); }
inline double noise_scale(const GridSpec& g) { return std::sqrt(g.dt / g.dx); }

struct Storage {
  std::int64_t n_from, n_to, j_from, j_to;

  static Storage resolve(const GridSpec& g, const StoreRegion& region) {
    Storage s{region.n_from.value_or(0), region.n_to.value_or(g.steps()), region.j_from.value_or(g.node_lo()),
              region.j_to.value_or(g.node_hi())};
    s.n_from = std::max<std::int64_t>(s.n_from, 0);
    s.n_to = std::min(s.n_to, g.steps());
    s.j_from = std::max(s.j_from, g.node_lo());
    s.j_to = std::min(s.j_to, g.node_hi());
    if (s.n_from > s.n_to || s.j_from > s.j_to) throw RangeError("store region does not meet the grid");
    return s;
  }

  FieldSolution make(const GridSpec& g, FieldKind kind, const SigmaSpec* sigma, const Seed& seed) const {
    FieldSolution f;
    f.values = Matrix(static_cast<std::size_t>(n_to - n_from + 1), static_cast<std::size_t>(j_to - j_from + 1));
    f.grid = g;
    f.kind = kind;
    if (sigma) f.sigma = *sigma;
    f.seed = seed;
    f.n_begin = n_from;
    f.j_begin = j_from;
    return f;
  }

  void record(FieldSolution& f, std::int64_t n, std::span<const double> row, std::int64_t row_j0) const {
    if (n < n_from || n > n_to) return;
    auto dst = f.values.row(static_cast<std::size_t>(n - n_from));
    const auto off = static_cast<std::size_t>(j_from - row_j0);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = row[off + c];
  }
};

// Evolves v (if want_linear) and u (if sigma != nullptr) on a shared noise
// source. noise_row(n, span) fills the standardized noise of step n.
template <class NoiseRow>
std::pair<std::optional<FieldSolution>, std::optional<FieldSolution>> evolve(const GridSpec& grid,
                                                                             NoiseRow&& noise_row,
                                                                             const SigmaSpec* sigma,
                                                                             bool want_linear,
                                                                             const Seed& seed,
                                                                             const StoreRegion& region) {
  validate(grid);
  const Storage st = Storage::resolve(grid, region);
  const auto m = static_cast<std::size_t>(grid.nodes());
  const double r = diffusion_number(grid);
  const double s = noise_scale(grid);
  std::optional<FieldSolution> u, v;
  std::vector<double> u_prev(m, 0.0), u_next(m, 0.0), v_prev(m, 0.0), v_next(m, 0.0), xi(m, 0.0);
  if (sigma) u = st.make(grid, FieldKind::nonlinear, sigma, seed);
  if (want_linear) v = st.make(grid, FieldKind::linear, nullptr, seed);
  const std::int64_t j0 = grid.node_lo();
  if (u) st.record(*u, 0, u_prev, j0);
  if (v) st.record(*v, 0, v_prev, j0);
  for (std::int64_t n = 0; n < std::min(grid.steps(), st.n_to); ++n) {
    noise_row(n, std::span<double>(xi));
    if (u) {
      step_nonlinear(u_prev, u_next, xi, r, s, *sigma);
      std::swap(u_prev, u_next);
      st.record(*u, n + 1, u_prev, j0);
    }
    if (v) {
      step_linear(v_prev, v_next, xi, r, s);
      std::swap(v_prev, v_next);
      st.record(*v, n + 1, v_prev, j0);
    }
  }
  return {std::move(u), std::move(v)};
}

inline void require_same_grid(const GridSpec& grid, const NoiseField& noise) {
  if (!(noise.grid == grid)) throw ConfigError("solver: noise field was sampled on a different grid");
}

}  // namespace detail

inline FieldSolution solve_linear(const GridSpec& grid, const NoiseField& noise, const StoreRegion& region = {}) {
  detail::require_same_grid(grid, noise);
  auto rows = [&](std::int64_t n, std::span<double> out) {
    const auto src = noise.xi.row(static_cast<std::size_t>(n));
    std::copy(src.begin(), src.end(), out.begin());
  };
  return *detail::evolve(grid, rows, nullptr, true, noise.seed, region).second;
}

inline FieldSolution solve_nonlinear(const GridSpec& grid, const NoiseField& noise, const SigmaSpec& sigma,
                                     const StoreRegion& region = {}) {
  detail::require_same_grid(grid, noise);
  auto rows = [&](std::int64_t n, std::span<double> out) {
    const auto src = noise.xi.row(static_cast<std::size_t>(n));
    std::copy(src.begin(), src.end(), out.begin());
  };
  return *detail::evolve(grid, rows, &sigma, false, noise.seed, region).first;
}

// Seed-driven variants regenerate each noise row from its counters instead of
// holding the whole field; results are bitwise equal to the NoiseField path.
inline FieldSolution solve_linear(const GridSpec& grid, const Seed& seed, const StoreRegion& region = {}) {
  auto rows = [&](std::int64_t n, std::span<double> out) { fill_normal_row(seed, 0, n, grid.node_lo(), out); };
  return *detail::evolve(grid, rows, nullptr, true, seed, region).second;
}

inline FieldSolution solve_nonlinear(const GridSpec& grid, const Seed& seed, const SigmaSpec& sigma,
                                     const StoreRegion& region = {}) {
  auto rows = [&](std::int64_t n, std::span<double> out) { fill_normal_row(seed, 0, n, grid.node_lo(), out); };
  return *detail::evolve(grid, rows, &sigma, false, seed, region).first;
}

struct CoupledSolution {
  FieldSolution u;
  FieldSolution v;
};

// u and v driven by one noise realization, generated once.
inline CoupledSolution solve_coupled(const GridSpec& grid, const Seed& seed, const SigmaSpec& sigma,
                                     const StoreRegion& region = {}) {
  auto rows = [&](std::int64_t n, std::span<double> out) { fill_normal_row(seed, 0, n, grid.node_lo(), out); };
  auto [u, v] = detail::evolve(grid, rows, &sigma, true, seed, region);
  return {std::move(*u), std::move(*v)};
}

// Debug dump: raw little-endian doubles (rows x cols) plus a JSON sidecar.
inline void dump_solution(const FieldSolution& sol, const std::string& path_stem) {
  std::ofstream bin(path_stem + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("dump_solution: cannot open " + path_stem + ".bin");
  const auto data = sol.values.data();
  bin.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  nlohmann::ordered_json meta;
  meta["kind"] = to_string(sol.kind);
  meta["rows"] = sol.values.rows();
  meta["cols"] = sol.values.cols();
  meta["n_begin"] = sol.n_begin;
  meta["j_begin"] = sol.j_begin;
  meta["level"] = sol.level;
  meta["grid"] = {{"horizon", sol.grid.horizon}, {"dt", sol.grid.dt}, {"dx", sol.grid.dx},
                  {"x_lo", sol.grid.x_lo},       {"x_hi", sol.grid.x_hi}, {"pad", sol.grid.pad}};
  meta["seed"] = {{"master", sol.seed.master}, {"component", sol.seed.component},
                  {"replication", sol.seed.replication}};
  if (sol.sigma) meta["sigma"] = to_string(sol.sigma->kind);
  std::ofstream js(path_stem + ".json");
  js << meta.dump(2) << '\n';
}

}  // namespace heatlab
