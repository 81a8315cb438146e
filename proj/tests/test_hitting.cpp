#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "heatlab/hitting.hpp"
#include "heatlab/stats.hpp"

using namespace heatlab;

namespace {

SimulationContext context(double horizon, Interval window, double dx = 1.0 / 32.0, std::uint64_t master = 1) {
  SimulationContext ctx;
  ctx.base = make_grid(horizon, dx, window);
  ctx.sigma = SigmaSpec::sine(1.0, 0.4);
  ctx.master = master;
  return ctx;
}

}  // namespace

TEST(DyadicCell, DirectFormula) {
  const auto a = dyadic_cell(1, 0, 0, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(a.t0, 0.0);
  EXPECT_DOUBLE_EQ(a.t1(), 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(a.x0, 0.0);
  EXPECT_DOUBLE_EQ(a.x1(), 0.25);
  const auto b = dyadic_cell(2, 3, 1, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(b.t0, 3.0 / 256.0);
  EXPECT_DOUBLE_EQ(b.t1(), 4.0 / 256.0);
  EXPECT_DOUBLE_EQ(b.x0, 1.0 / 16.0);
  EXPECT_DOUBLE_EQ(b.x1(), 2.0 / 16.0);
}

TEST(DyadicCell, DisjointCellIsRejected) {
  EXPECT_THROW(dyadic_cell(1, 100, 0, {0.0, 0.0}, {0.25, 0.5}, {0.25, 0.75}), RangeError);
}

TEST(DyadicCell, CountGrowsLikeTwoToSixN) {
  const Interval I{0.25, 0.5}, J{0.25, 0.75};
  for (int n = 1; n <= 3; ++n) {
    const auto cells = dyadic_cells(n, {0.0, 0.0}, I, J);
    const double bound = I.length() * J.length() * std::ldexp(1.0, 6 * n);
    EXPECT_LE(static_cast<double>(cells.size()), 4.0 * bound + 8.0 * std::ldexp(1.0, 4 * n));
    EXPECT_GE(static_cast<double>(cells.size()), bound);
  }
}

TEST(SmallBall, InfiniteThresholdIsCertain) {
  const auto ctx = context(0.5, {0.5, 0.75});
  const auto cell = dyadic_cell(2, 0, 0, {0.25, 0.5});
  const auto e = small_ball_prob(ctx, 0.0, cell, 2, 50, std::numeric_limits<double>::infinity());
  EXPECT_EQ(e.p_hat, 1.0);
  EXPECT_EQ(e.successes, 50u);
}

TEST(SmallBall, EventsAreNestedOnCommonPaths) {
  const auto ctx = context(0.5, {0.5, 0.75});
  std::vector<SmallBallQuery> q;
  for (int n = 2; n <= 4; ++n) q.push_back({dyadic_cell(2, 0, 0, {0.25, 0.5}), std::ldexp(1.0, -n), n});
  const auto r = small_ball_batch(ctx, Point{0.0}, q, 300);
  EXPECT_GE(r[0].euclid.successes, r[1].euclid.successes);
  EXPECT_GE(r[1].euclid.successes, r[2].euclid.successes);
  for (const auto& x : r) {
    EXPECT_LE(x.euclid.ci_lo, x.euclid.p_hat);
    EXPECT_GE(x.euclid.ci_hi, x.euclid.p_hat);
  }
}

TEST(SmallBall, OneComponentVectorMatchesScalar) {
  const auto ctx = context(0.5, {0.5, 0.75});
  const auto cell = dyadic_cell(2, 0, 0, {0.25, 0.5});
  const auto s = small_ball_prob(ctx, 0.1, cell, 2, 200);
  const auto v = vector_small_ball_prob(ctx, Point{0.1}, cell, 2, 200);
  EXPECT_EQ(s.successes, v.euclid.successes);
  EXPECT_EQ(v.euclid.successes, v.max_norm.successes);
}

TEST(SmallBall, PrefixDimensionsShareComponents) {
  const auto ctx = context(0.5, {0.5, 0.75});
  const std::vector<SmallBallQuery> q{{dyadic_cell(2, 0, 0, {0.25, 0.5}), 0.25, 2}};
  const auto r = small_ball_prefix_batch(ctx, Point(3, 0.0), q, 400);
  ASSERT_EQ(r.size(), 3u);
  // adding a coordinate only removes paths from the max-norm event
  EXPECT_GE(r[0][0].max_norm.successes, r[1][0].max_norm.successes);
  EXPECT_GE(r[1][0].max_norm.successes, r[2][0].max_norm.successes);
  // the euclidean event is contained in the max-norm event
  for (const auto& k : r) EXPECT_LE(k[0].euclid.successes, k[0].max_norm.successes);
  // a common node is stricter than one node per coordinate
  for (const auto& k : r) EXPECT_LE(k[0].max_norm.successes, k[0].per_component.successes);
}

TEST(SmallBall, PerComponentEventIsAProduct) {
  const auto ctx = context(0.5, {0.5, 0.75});
  const std::vector<SmallBallQuery> q{{dyadic_cell(2, 0, 0, {0.25, 0.5}), 0.25, 2}};
  const std::size_t N = 2000;
  const auto r = small_ball_prefix_batch(ctx, Point(2, 0.0), q, N);
  const auto c1 = wilson_interval(r[0][0].per_component.successes, N, 2.24);
  const auto c2 = wilson_interval(r[1][0].per_component.successes, N, 2.24);
  EXPECT_LE(c2.lo, c1.hi * c1.hi);
  EXPECT_GE(c2.hi, c1.lo * c1.lo);
}

TEST(SmallBall, TwoComponentsFollowTheProduct) {
  // on a cell much smaller than the threshold the common-node event is close
  // to the product of the marginal events of independent components
  const auto ctx = context(0.5, {0.5, 0.5 + 1.0 / 256.0});
  const std::vector<SmallBallQuery> q{{make_rectangle(0.25, 0.5, 1.0 / 65536.0, 1.0 / 256.0), 0.25, 2}};
  const std::size_t N = 2000;
  const auto r = small_ball_prefix_batch(ctx, Point(2, 0.0), q, N);
  const auto p1 = r[0][0].max_norm, p2 = r[1][0].max_norm;
  const auto c1 = wilson_interval(p1.successes, N, 2.24), c2 = wilson_interval(p2.successes, N, 2.24);
  EXPECT_LE(c2.lo, c1.hi * c1.hi);
  EXPECT_GE(c2.hi, c1.lo * c1.lo);
}

TEST(SmallBall, CommonNodeEventIsBelowTheProduct) {
  const auto ctx = context(0.5, {0.5, 0.75});
  const std::vector<SmallBallQuery> q{{dyadic_cell(2, 0, 0, {0.25, 0.5}), 0.25, 2}};
  const std::size_t N = 1000;
  const auto r = small_ball_prefix_batch(ctx, Point(2, 0.0), q, N);
  const auto c1 = wilson_interval(r[0][0].max_norm.successes, N);
  EXPECT_LE(r[1][0].max_norm.p_hat, c1.hi * c1.hi);
}

TEST(SmallBall, UnresolvedCellIsRejected) {
  auto ctx = context(0.5, {0.5, 0.75});
  ctx.intervals_per_side = 4;
  EXPECT_THROW(small_ball_prob(ctx, 0.0, dyadic_cell(2, 0, 0, {0.25, 0.5}), 2, 10), ConfigError);
}

TEST(Cover, SingletonIsOneBall) {
  const auto b = cover_set(TargetSet::singleton({0.2, 0.3}, 1.0), 0.1);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_DOUBLE_EQ(b[0].radius, 0.05);
}

TEST(Cover, UnitSegment) {
  const auto A = TargetSet::segment({0.0}, {1.0}, 1.0);
  const auto b = cover_set(A, 0.125);
  EXPECT_LE(b.size(), 9u);
  for (const auto& x : b) EXPECT_LT(x.radius, 0.125);
  EXPECT_NEAR(cover_sum(b, 1.0), 1.0, 2.0 * 0.125 * static_cast<double>(b.size()));
}

TEST(Cover, EveryPointIsCovered) {
  const std::vector<TargetSet> sets{TargetSet::segment({-0.3, 0.1}, {0.5, 0.4}, 1.0),
                                    TargetSet::ball({0.0, 0.0}, 0.5, 1.0),
                                    TargetSet::cantor_dust({0.0, 0.0}, 1.0, 6, 1.0),
                                    TargetSet::finite({{0.1}, {0.4}, {-0.2}}, 1.0)};
  for (const auto& A : sets) {
    const auto balls = cover_set(A, 0.05);
    for (const auto& p : A.sample(500, 3)) {
      bool inside = false;
      for (const auto& b : balls) inside = inside || distance(p, b.center) <= b.radius + 1e-12;
      EXPECT_TRUE(inside);
    }
  }
}

TEST(Cover, SegmentSumConvergesToLength) {
  const auto A = TargetSet::segment({0.0}, {0.4}, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.01, 0.001}) {
    const double s = cover_sum(cover_set(A, eps), 1.0);
    EXPECT_LE(std::fabs(s - 0.4), std::fabs(prev - 0.4) + 1e-12);
    prev = s;
  }
  EXPECT_NEAR(prev, 0.4, 0.002);
}

TEST(Cover, BadEpsilonIsRejected) {
  EXPECT_THROW(cover_set(TargetSet::singleton({0.0}, 1.0), 0.0), DomainError);
  EXPECT_THROW(cover_set(TargetSet::cantor_dust({0.0}, 1.0, 2, 1.0), 1e-4), CapabilityError);
}

TEST(Hitting, EnclosingSetIsCertain) {
  const auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0);
  const auto A = TargetSet::ball({0.0, 0.0}, 5.0, 5.0);
  const auto e = hitting_prob_estimate(ctx, A, {0.25, 0.5}, {0.25, 0.75}, 20);
  EXPECT_EQ(e.p_hat, 1.0);
}

TEST(Hitting, FarSetIsMissed) {
  const auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0);
  const auto A = TargetSet::singleton({10.0, 10.0}, 10.0);
  EXPECT_EQ(hitting_prob_estimate(ctx, A, {0.25, 0.5}, {0.25, 0.75}, 20).p_hat, 0.0);
}

TEST(Hitting, CoverBoundDominatesDirectEstimate) {
  const auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0);
  const std::vector<TargetSet> sets{TargetSet::segment({-0.2, 0.0}, {0.2, 0.0}, 1.0),
                                    TargetSet::singleton({0.0, 0.0}, 1.0)};
  const auto r = hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, 40);
  for (const auto& x : r) {
    EXPECT_GE(x.cover_bound, x.direct.p_hat);
    EXPECT_DOUBLE_EQ(x.direct.tol, 2.0 * std::sqrt(ctx.base.dx));
  }
  EXPECT_GE(r[0].direct.successes, r[1].direct.successes);
}

TEST(Hitting, FineWindowUsesItsOwnSpacing) {
  const auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0);
  const std::vector<TargetSet> sets{TargetSet::segment({-0.2, 0.0}, {0.2, 0.0}, 1.0)};
  HittingOptions opt;
  opt.fine_dx = 1.0 / 64.0;
  EXPECT_DOUBLE_EQ(hitting_dx(ctx.base, opt), 1.0 / 64.0);
  const auto r = hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, 20, opt);
  EXPECT_DOUBLE_EQ(r[0].direct.tol, 0.25);
  EXPECT_GE(r[0].cover_bound, r[0].direct.p_hat);
  // a spacing no finer than the base leaves the flat solve in place
  opt.fine_dx = 1.0 / 8.0;
  const auto flat = hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, 20);
  const auto same = hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, 20, opt);
  EXPECT_EQ(flat[0].direct.successes, same[0].direct.successes);
  EXPECT_EQ(flat[0].cover_bound, same[0].cover_bound);
}

TEST(Hitting, FineWindowAgreesWithAFlatSolve) {
  const std::vector<TargetSet> sets{TargetSet::singleton({0.0, 0.0}, 1.0)};
  const std::size_t N = 300;
  HittingOptions opt;
  opt.tol = 0.1;
  const auto flat = hitting_batch(context(0.5, {0.25, 0.75}, 1.0 / 64.0), sets, {0.25, 0.5}, {0.25, 0.75}, N, opt);
  opt.fine_dx = 1.0 / 64.0;
  auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0, 2);
  ctx.nested.window_sigmas = 1.0;
  const auto fine = hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, N, opt);
  const double p = 0.5 * (flat[0].direct.p_hat + fine[0].direct.p_hat);
  EXPECT_GT(p, 0.05);
  EXPECT_NEAR(flat[0].direct.p_hat, fine[0].direct.p_hat, 3.0 * std::sqrt(2.0 * p * (1.0 - p) / N));
}

TEST(Hitting, MixedDimensionsAreRejected) {
  const auto ctx = context(0.5, {0.25, 0.75}, 1.0 / 16.0);
  const std::vector<TargetSet> sets{TargetSet::singleton({0.0}, 1.0), TargetSet::singleton({0.0, 0.0}, 1.0)};
  EXPECT_THROW(hitting_batch(ctx, sets, {0.25, 0.5}, {0.25, 0.75}, 4), UsageError);
}

TEST(TargetSet, MustFitTheBox) {
  EXPECT_THROW(TargetSet::singleton({2.0}, 1.0), DomainError);
}
