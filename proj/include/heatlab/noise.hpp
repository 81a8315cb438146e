#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heatlab/errors.hpp"
#include "heatlab/matrix.hpp"
#include "heatlab/random.hpp"

namespace heatlab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Space-time lattice for the explicit scheme. Node j sits at x = j*dx and
// step n at t = n*dt, so x_lo and x_hi are whole multiples of dx; with dx a
// power of two every lattice coordinate is exact in binary floating point.
struct GridSpec {
  double horizon = 0.0;
  double dt = 0.0;
  double dx = 0.0;
  double x_lo = 0.0;
  double x_hi = 0.0;
  double pad = 6.0;
  double stability_ratio = 0.5;

  std::int64_t steps() const { return std::llround(horizon / dt); }
  std::int64_t node_lo() const { return std::llround(x_lo / dx); }
  std::int64_t node_hi() const { return std::llround(x_hi / dx); }
  std::int64_t nodes() const { return node_hi() - node_lo() + 1; }
  double time(std::int64_t n) const { return static_cast<double>(n) * dt; }
  double position(std::int64_t j) const { return static_cast<double>(j) * dx; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline constexpr std::int64_t kDefaultCellBudget = std::int64_t{1} << 34;

// Builds the lattice covering [window.lo - pad*sqrt(T), window.hi + pad*sqrt(T)]
// (strictly) up to the first step at or after the horizon.
inline GridSpec make_grid(double horizon, double dx, Interval window, double pad = 6.0,
                          double stability_ratio = 0.5) {
  if (!(horizon > 0.0) || !(dx > 0.0) || !(stability_ratio > 0.0)) {
    throw ConfigError("grid: horizon, dx and stability ratio must be positive");
  }
  if (!(window.hi > window.lo)) throw ConfigError("grid: observation window must have positive length");
  if (stability_ratio > 1.0) throw ConfigError("grid: stability violated, need dt <= dx^2");
  GridSpec g;
  g.dx = dx;
  g.stability_ratio = stability_ratio;
  g.dt = stability_ratio * dx * dx;
  g.pad = pad;
  const auto steps = static_cast<std::int64_t>(std::ceil(horizon / g.dt - 1e-9));
  g.horizon = static_cast<double>(steps) * g.dt;
  const double margin = pad * std::sqrt(g.horizon);
  g.x_lo = std::floor((window.lo - margin) / dx - 1e-9) * dx;
  g.x_hi = std::ceil((window.hi + margin) / dx + 1e-9) * dx;
  if (g.x_lo >= window.lo - margin) g.x_lo -= dx;
  if (g.x_hi <= window.hi + margin) g.x_hi += dx;
  return g;
}

inline void validate(const GridSpec& g, std::optional<Interval> window = std::nullopt,
                     std::int64_t cell_budget = kDefaultCellBudget) {
  if (!(g.dx > 0.0) || !(g.dt > 0.0) || !(g.horizon > 0.0)) {
    throw ConfigError("grid: dt, dx and horizon must be positive");
  }
  if (g.dt > g.dx * g.dx * (1.0 + 1e-12)) {
    throw ConfigError("grid: stability violated, need dt <= dx^2");
  }
  if (std::fabs(g.dt / (g.dx * g.dx) - g.stability_ratio) > 1e-9) {
    throw ConfigError("grid: stability_ratio does not match dt/dx^2");
  }
  if (!(g.x_hi > g.x_lo)) throw ConfigError("grid: empty spatial extent");
  if (std::fabs(g.x_lo / g.dx - std::round(g.x_lo / g.dx)) > 1e-9 ||
      std::fabs(g.x_hi / g.dx - std::round(g.x_hi / g.dx)) > 1e-9) {
    throw ConfigError("grid: extent must be whole multiples of dx");
  }
  if (std::fabs(g.horizon / g.dt - std::round(g.horizon / g.dt)) > 1e-9) {
    throw ConfigError("grid: horizon must be a whole number of steps");
  }
  if (window) {
    const double margin = g.pad * std::sqrt(g.horizon);
    if (!(g.x_lo < window->lo - margin) || !(g.x_hi > window->hi + margin)) {
      throw ConfigError("grid: extent does not cover the window plus pad*sqrt(T)");
    }
  }
  if ((g.steps() + 1) > cell_budget / std::max<std::int64_t>(g.nodes(), 1)) {
    throw ResourceError("grid: steps x nodes exceeds the memory budget");
  }
}

// Identifies one noise stream. Components index the independent coordinates
// of a vector field; replications index Monte Carlo repeats.
struct Seed {
  std::uint64_t master = 0;
  std::uint32_t component = 0;
  std::uint32_t replication = 0;

  friend bool operator==(const Seed&, const Seed&) = default;
};

inline constexpr std::uint32_t kMaxComponents = 1u << 16;
inline constexpr int kMaxLevels = 256;

inline Seed derive_seed(std::uint64_t master, std::int64_t component, std::int64_t replication) {
  if (component < 0 || replication < 0) throw DomainError("derive_seed: indices must be nonnegative");
  if (component >= kMaxComponents) throw DomainError("derive_seed: component index exceeds 2^16");
  if (replication > std::numeric_limits<std::uint32_t>::max()) {
    throw DomainError("derive_seed: replication index exceeds 2^32");
  }
  return Seed{master, static_cast<std::uint32_t>(component), static_cast<std::uint32_t>(replication)};
}

// The Philox state of a stream with the lattice coordinates zeroed. The map
// (master, component, replication) -> state is injective: master fills the
// key, replication and component occupy their own counter words.
struct StreamState {
  Philox4x32::Key key{};
  std::uint32_t replication_word = 0;
  std::uint32_t component_word = 0;
  friend bool operator==(const StreamState&, const StreamState&) = default;
};

inline StreamState stream_state(const Seed& seed, int level = 0) {
  return StreamState{{static_cast<std::uint32_t>(seed.master), static_cast<std::uint32_t>(seed.master >> 32)},
                     seed.replication,
                     seed.component | (static_cast<std::uint32_t>(level) << 16)};
}

// Fills out[i] with the standard normal draw of cell (n, j_begin + i) at the
// given refinement level. Counter = (j >> 1, n, replication, component|level);
// the two 64-bit halves of one Philox block become the uniforms of nodes 2k
// and 2k+1, which AS 241 maps to normals. The passes are split so the block
// generation and the central rational branch vectorize.
inline void fill_normal_row(const Seed& seed, int level, std::int64_t n, std::int64_t j_begin,
                            std::span<double> out) {
  const std::size_t len = out.size();
  if (len == 0) return;
  const StreamState st = stream_state(seed, level);
  const std::int64_t k0 = j_begin >> 1;
  const std::int64_t k1 = (j_begin + static_cast<std::int64_t>(len) - 1) >> 1;
  thread_local std::vector<double> uniforms;
  uniforms.resize(static_cast<std::size_t>(2 * (k1 - k0 + 1)));
  const auto nword = static_cast<std::uint32_t>(n);
  for (std::int64_t k = k0; k <= k1; ++k) {
    const auto o = Philox4x32::generate(
        {static_cast<std::uint32_t>(k), nword, st.replication_word, st.component_word}, st.key);
    const auto i = static_cast<std::size_t>(2 * (k - k0));
    uniforms[i] = bits_to_open_unit((std::uint64_t{o[0]} << 32) | o[1]);
    uniforms[i + 1] = bits_to_open_unit((std::uint64_t{o[2]} << 32) | o[3]);
  }
  const auto shift = static_cast<std::size_t>(j_begin - 2 * k0);
  for (std::size_t i = 0; i < len; ++i) out[i] = detail::inverse_normal_central(uniforms[i + shift] - 0.5);
  for (std::size_t i = 0; i < len; ++i) {
    const double p = uniforms[i + shift];
    if (std::fabs(p - 0.5) > 0.425) out[i] = detail::inverse_normal_tail(p);
  }
}

// Discretized space-time white noise: xi(n, j) is the standardized integral
// of W over [t_n, t_n+1] x [x_j, x_j+1], so W(cell) = xi * sqrt(dt*dx).
struct NoiseField {
  Matrix xi;
  GridSpec grid;
  Seed seed;

  double cell_integral(std::size_t n, std::size_t col) const {
    return xi(n, col) * std::sqrt(grid.dt * grid.dx);
  }
};

inline NoiseField sample_noise(const GridSpec& grid, const Seed& seed) {
  validate(grid);
  NoiseField field{Matrix(static_cast<std::size_t>(grid.steps()), static_cast<std::size_t>(grid.nodes())), grid,
                   seed};
  for (std::int64_t n = 0; n < grid.steps(); ++n) {
    fill_normal_row(seed, 0, n, grid.node_lo(), field.xi.row(static_cast<std::size_t>(n)));
  }
  return field;
}

// Conditional refinement of one coarse noise row into the four fine rows of
// the next level (dx/2, dt/4). Every coarse cell splits into 4 x 2 fine cells
// whose standardized values sum to sqrt(8) times the coarse value, so the
// refined field is the same white-noise realization seen at a finer scale.
//   coarse: values for coarse cells jc0 .. jc0 + coarse.size() - 1 at step nc
//   fine:   4 rows of width 2*coarse.size(), fine cells 2*jc0 ..
inline void refine_noise_row(const Seed& seed, int fine_level, std::int64_t nc, std::int64_t jc0,
                             std::span<const double> coarse, Matrix& fine) {
  const std::size_t width = 2 * coarse.size();
  if (fine.rows() != 4 || fine.cols() != width) fine = Matrix(4, width);
  for (std::size_t a = 0; a < 4; ++a) {
    fill_normal_row(seed, fine_level, 4 * nc + static_cast<std::int64_t>(a), 2 * jc0, fine.row(a));
  }
  const double share = std::sqrt(0.125);
  for (std::size_t c = 0; c < coarse.size(); ++c) {
    double mean = 0.0;
    for (std::size_t a = 0; a < 4; ++a) mean += fine(a, 2 * c) + fine(a, 2 * c + 1);
    mean *= 0.125;
    const double base = coarse[c] * share;
    for (std::size_t a = 0; a < 4; ++a) {
      fine(a, 2 * c) = base + (fine(a, 2 * c) - mean);
      fine(a, 2 * c + 1) = base + (fine(a, 2 * c + 1) - mean);
    }
  }
}

}  // namespace heatlab
