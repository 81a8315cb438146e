#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "heatlab/coupling.hpp"
#include "heatlab/nested.hpp"
#include "heatlab/stats.hpp"

using namespace heatlab;

namespace {

struct Pair {
  FieldSolution u, v;
};

Pair coupled(std::uint64_t master, const SigmaSpec& sigma, double dx = 1.0 / 64.0) {
  const auto g = make_grid(0.5, dx, {0.25, 0.75});
  auto s = solve_coupled(g, derive_seed(master, 0, 0), sigma);
  return {std::move(s.u), std::move(s.v)};
}

}  // namespace

TEST(Coupling, UnitSigmaResidualVanishes) {
  const auto p = coupled(1, SigmaSpec::constant(1.0));
  const auto rect = make_rectangle(0.25, 0.5, 0.0625, 0.25);
  EXPECT_EQ(coupling_residual_sup(p.u, p.v, SigmaSpec::constant(1.0), rect), 0.0);
}

TEST(Coupling, ConstantSigmaResidualVanishes) {
  const auto sigma = SigmaSpec::constant(2.0);
  const auto p = coupled(2, sigma);
  const auto rect = make_rectangle(0.25, 0.5, 0.0625, 0.25);
  EXPECT_EQ(coupling_residual_sup(p.u, p.v, sigma, rect), 0.0);
}

TEST(Coupling, DegenerateRectangleGivesZero) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto p = coupled(3, sigma);
  EXPECT_EQ(coupling_residual_sup(p.u, p.v, sigma, make_rectangle(0.25, 0.5, 0.0, 0.0)), 0.0);
}

TEST(Coupling, SupGrowsWithTheRectangle) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto p = coupled(4, sigma);
  const double small = coupling_residual_sup(p.u, p.v, sigma, make_rectangle(0.25, 0.5, 1.0 / 256.0, 0.125));
  const double large = coupling_residual_sup(p.u, p.v, sigma, make_rectangle(0.25, 0.5, 1.0 / 16.0, 0.25));
  EXPECT_GT(small, 0.0);
  EXPECT_GE(large, small);
}

TEST(Coupling, UnresolvedRectangleIsRejected) {
  const auto g = make_grid(0.5, 1.0 / 16.0, {0.25, 0.75});
  EXPECT_THROW(require_resolved(make_rectangle(0.25, 0.5, 1.0 / 256.0, 1.0 / 16.0), g), ConfigError);
}

TEST(Coupling, DifferentNoiseIsRejected) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto a = coupled(5, sigma);
  const auto b = coupled(6, sigma);
  EXPECT_THROW(coupling_residual_sup(a.u, b.v, sigma, make_rectangle(0.25, 0.5, 0.0625, 0.25)), CouplingError);
}

TEST(Coupling, DirectionalResidual) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto one = coupled(7, SigmaSpec::constant(1.0));
  EXPECT_EQ(directional_residual(one.u, one.v, SigmaSpec::constant(1.0), {0.25, 0.5}, {0.25, 0.625},
                                 Direction::spatial),
            0.0);
  const auto p = coupled(7, sigma);
  EXPECT_GT(directional_residual(p.u, p.v, sigma, {0.25, 0.5}, {0.3125, 0.5}, Direction::temporal), 0.0);
  EXPECT_THROW(directional_residual(p.u, p.v, sigma, {0.25, 0.5}, {0.3125, 0.625}, Direction::temporal), UsageError);
  EXPECT_THROW(directional_residual(p.u, p.v, sigma, {0.25, 0.5}, {0.3125, 0.625}, Direction::spatial), UsageError);
}

TEST(Coupling, AnchorResidualIsZero) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto p = coupled(8, sigma);
  EXPECT_EQ(directional_residual(p.u, p.v, sigma, {0.25, 0.5}, {0.25, 0.5}, Direction::spatial), 0.0);
}

TEST(Coupling, NestedLevelsShareTheNoise) {
  const auto sigma = SigmaSpec::sine(1.0, 0.4);
  const auto g = make_grid(0.5, 1.0 / 32.0, {0.5, 0.75});
  const auto rect = make_rectangle(0.25, 0.5, 1.0 / 65536.0, 1.0 / 256.0);
  const RefinementTarget t{0.25, rect.t1(), 0.5, rect.x1(), 1.0 / 2048.0};
  const auto sol = solve_nested(g, t, derive_seed(9, 0, 0), Fields::both, &sigma);
  const int k = sol.level_for(t.max_dx);
  require_resolved(rect, sol.v(k).grid);
  EXPECT_GT(coupling_residual_sup(sol.u(k), sol.v(k), sigma, rect), 0.0);
}

TEST(Stats, ConstantSampler) {
  const std::vector<double> xs(100, 3.0);
  const auto m = estimate_moment(xs, 2.0, 200, 1);
  EXPECT_DOUBLE_EQ(m.value, 3.0);
  EXPECT_DOUBLE_EQ(m.ci_lo, 3.0);
  EXPECT_DOUBLE_EQ(m.ci_hi, 3.0);
}

TEST(Stats, NormalSecondMoment) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::vector<double> xs(10000);
  for (auto& x : xs) x = z(rng);
  const auto m = estimate_moment(xs, 2.0, 500, 2);
  EXPECT_NEAR(m.value, 1.0, 0.03);
  EXPECT_LE(m.ci_lo, m.value);
  EXPECT_GE(m.ci_hi, m.value);
}

TEST(Stats, ExponentialMean) {
  std::mt19937_64 rng(2);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = e(rng);
  EXPECT_NEAR(estimate_moment(xs, 1.0, 500, 3).value, 1.0, 0.03);
}

TEST(Stats, MomentIsInvariantUnderReordering) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<double> xs(500);
  for (auto& x : xs) x = z(rng);
  auto ys = xs;
  std::shuffle(ys.begin(), ys.end(), rng);
  const auto a = estimate_moment(xs, 2.0, 300, 4);
  const auto b = estimate_moment(ys, 2.0, 300, 4);
  EXPECT_DOUBLE_EQ(a.value, b.value);
  EXPECT_DOUBLE_EQ(a.ci_lo, b.ci_lo);
  EXPECT_DOUBLE_EQ(a.ci_hi, b.ci_hi);
}

TEST(Stats, FitExactPowerLaw) {
  std::vector<std::pair<double, double>> s;
  for (int k = 1; k <= 6; ++k) {
    const double h = std::ldexp(1.0, -k);
    s.emplace_back(h, std::pow(h, 1.5));
  }
  const auto f = fit_exponent(s);
  EXPECT_NEAR(f.slope, 1.5, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(Stats, FitConstantHasZeroSlope) {
  const std::vector<std::pair<double, double>> s{{0.5, 2.0}, {0.25, 2.0}, {0.125, 2.0}};
  EXPECT_NEAR(fit_exponent(s).slope, 0.0, 1e-12);
}

TEST(Stats, FitNoisyPowerLaw) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  std::vector<std::pair<double, double>> s;
  for (int k = 1; k <= 8; ++k) {
    const double h = std::ldexp(1.0, -k);
    s.emplace_back(h, std::pow(h, 0.4) * (1.0 + 0.01 * z(rng)));
  }
  EXPECT_NEAR(fit_exponent(s).slope, 0.4, 0.02);
}

TEST(Stats, FitRejectsBadInput) {
  const std::vector<std::pair<double, double>> bad{{0.5, 1.0}, {0.25, -1.0}, {0.125, 1.0}};
  EXPECT_THROW(fit_exponent(bad), DomainError);
  const std::vector<std::pair<double, double>> few{{0.5, 1.0}, {0.25, 1.0}};
  EXPECT_THROW(fit_exponent(few), DomainError);
}

TEST(Stats, WilsonInterval) {
  const auto w = wilson_interval(0, 100);
  EXPECT_EQ(w.lo, 0.0);
  EXPECT_GT(w.hi, 0.0);
  const auto h = wilson_interval(50, 100);
  EXPECT_LT(h.lo, 0.5);
  EXPECT_GT(h.hi, 0.5);
  EXPECT_NEAR(h.lo + h.hi, 1.0, 1e-12);
}
