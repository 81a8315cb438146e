#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "heatlab/density.hpp"

using namespace heatlab;

namespace {

std::vector<FSample> normal_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<FSample> s(n);
  for (auto& x : s) x = {z(rng), z(rng)};
  return s;
}

double sup_error(const DensityGrid& g) {
  double e = 0.0;
  for (std::size_t i = 0; i < g.z1_axis.size(); ++i) {
    for (std::size_t j = 0; j < g.z2_axis.size(); ++j) {
      const double a = g.z1_axis[i], b = g.z2_axis[j];
      const double truth = std::exp(-(a * a + b * b) / 2.0) / (2.0 * std::numbers::pi);
      e = std::max(e, std::fabs(g.p_hat(i, j) - truth));
    }
  }
  return e;
}

SimulationContext context(const Rectangle& r) {
  SimulationContext ctx;
  ctx.base = make_grid(r.t1(), 1.0 / 32.0, {r.x0, std::max(r.x1(), r.x0 + 1.0 / 32.0)});
  ctx.sigma = SigmaSpec::sine(1.0, 0.4);
  ctx.master = 5;
  return ctx;
}

}  // namespace

TEST(Kde, RecoversStandardNormal) {
  const auto g = kde2(normal_samples(100000, 1));
  EXPECT_LE(sup_error(g), 0.02);
  EXPECT_NEAR(g.integral(), 1.0, 0.02);
  EXPECT_FALSE(g.degenerate);
  for (double x : g.p_hat.data()) EXPECT_GE(x, 0.0);
}

TEST(Kde, HalvingTheBandwidthIsStable) {
  const auto s = normal_samples(100000, 2);
  const auto g = kde2(s);
  const auto h = kde2(s, std::pair{g.h1 / 2.0, g.h2 / 2.0});
  const double a = sup_error(g), b = sup_error(h);
  EXPECT_LT(std::max(a, b) / std::min(a, b), 2.0);
}

TEST(Kde, PointMassIsFlagged) {
  std::vector<FSample> s(2000, FSample{0.3, 0.0});
  EXPECT_TRUE(kde2(s).degenerate);
}

TEST(Kde, TooFewSamplesAreRejected) { EXPECT_THROW(kde2(normal_samples(100, 3)), DomainError); }

TEST(GaussianBound, ZeroGridHasZeroRatio) {
  auto g = kde2(normal_samples(2000, 4));
  g.zeta = 0.25;
  for (auto& x : g.p_hat.data()) x = 0.0;
  for (auto& x : g.std_err.data()) x = 0.0;
  EXPECT_EQ(check_gaussian_bound(g, 1.0).max_ratio, 0.0);
}

TEST(GaussianBound, OnlyTheTheoremDomainIsChecked) {
  auto g = kde2(normal_samples(20000, 5));
  g.zeta = 0.25;
  const auto rep = check_gaussian_bound(g, 2.0);
  EXPECT_GE(rep.worst_z2, std::sqrt(g.zeta));
  std::size_t eligible = 0;
  for (double z2 : g.z2_axis) eligible += z2 >= std::sqrt(g.zeta) ? g.z1_axis.size() : 0;
  EXPECT_EQ(rep.n_points, eligible);
  g.zeta = 100.0;
  EXPECT_THROW(check_gaussian_bound(g, 2.0), DomainError);
}

TEST(GaussianBound, FittedConstantSatisfiesTheBound) {
  auto g = kde2(normal_samples(20000, 6));
  g.zeta = 0.25;
  const auto rep = check_gaussian_bound(g, 1.0);
  EXPECT_LE(check_gaussian_bound(g, rep.c_min).max_ratio, 1.0 + 1e-9);
  EXPECT_GT(check_gaussian_bound(g, 0.9 * rep.c_min).max_ratio, 1.0);
}

TEST(GaussianBound, RatioShrinksInTheTail) {
  auto g = kde2(normal_samples(20000, 7));
  g.zeta = 0.25;
  for (double c : {1.0, 2.0}) {
    for (std::size_t i = 0; i < g.z1_axis.size(); ++i) {
      for (std::size_t j = 0; j < g.z2_axis.size(); ++j) {
        const double z1 = g.z1_axis[i], z2 = g.z2_axis[j];
        if (z2 < std::sqrt(g.zeta) || z1 * z1 + z2 * z2 / g.zeta < 4.0 * c * c) continue;
        EXPECT_GE(gaussian_bound(z1, z2, g.zeta, 2.0 * c), gaussian_bound(z1, z2, g.zeta, c));
      }
    }
  }
}

TEST(Borell, TailIsMonotoneAndRestricted) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z;
  std::vector<double> f2(10000);
  for (auto& x : f2) x = std::fabs(0.3 + 0.2 * z(rng));
  const std::vector<double> levels{-1.0, 0.5, 1.0, 1.5};
  const auto t = borell_tail_check(f2, 0.25, 0.04, levels);
  EXPECT_EQ(t.points[0].exceedance, 1.0);
  EXPECT_FALSE(t.points[0].valid);
  for (std::size_t i = 1; i < t.points.size(); ++i) EXPECT_LE(t.points[i].exceedance, t.points[i - 1].exceedance);
  for (const auto& p : t.points) {
    if (p.valid) EXPECT_LE(p.exceedance, p.bound);
  }
  EXPECT_THROW(borell_tail_check(std::vector<double>(100, 0.1), 0.25, 0.04), DomainError);
}

TEST(SampleF, DegenerateRectangleGivesZeroSup) {
  const auto r = make_rectangle(0.25, 0.5, 0.0, 0.0);
  for (const auto& s : sample_F(context(r), r, 20)) EXPECT_EQ(s.f2, 0.0);
}

TEST(SampleF, SupIsNonNegativeAndGrows) {
  // both rectangles are read on the base lattice, so enlargement is pathwise
  const auto small = make_rectangle(0.25, 0.5, 1.0 / 256.0, 1.0 / 16.0);
  const auto large = make_rectangle(0.25, 0.5, 1.0 / 16.0, 0.25);
  SimulationContext ctx;
  ctx.base = make_grid(large.t1(), 1.0 / 128.0, {0.5, 0.75}, 2.0);
  ctx.sigma = SigmaSpec::sine(1.0, 0.4);
  ctx.master = 6;
  const auto a = sample_F(ctx, small, 20);
  const auto b = sample_F(ctx, large, 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_GE(a[i].f2, 0.0);
    EXPECT_GE(b[i].f2, a[i].f2);
    EXPECT_EQ(a[i].f1, b[i].f1);
  }
}

TEST(SampleF, IncrementVarianceScalesWithZeta) {
  const auto r = make_rectangle(0.25, 0.5, 1.0 / 16.0, 0.25);
  auto ctx = context(r);
  const double s2 = sup_increment_variance(ctx, r, 400);
  EXPECT_NEAR(s2 / density_zeta(r), 1.05, 0.3);
}
