#include <gtest/gtest.h>

#include <cmath>

#include "heatlab/geometry.hpp"

using namespace heatlab;

namespace {

std::vector<TargetSet> every_kind() {
  return {TargetSet::singleton({0.0}, 1.0), TargetSet::finite({{-0.5}, {0.0}, {0.5}}, 1.0),
          TargetSet::segment({0.0}, {1.0}, 1.0), TargetSet::ball({0.0, 0.0}, 0.5, 1.0),
          TargetSet::cantor_dust({0.0, 0.0}, 1.0, 8, 1.0)};
}

}  // namespace

TEST(ParabolicMetric, Examples) {
  EXPECT_EQ(parabolic_metric({0.3, 0.2}, {0.3, 0.2}), 0.0);
  EXPECT_DOUBLE_EQ(parabolic_metric({0.0, 0.0}, {1.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(parabolic_metric({0.0, 0.0}, {0.0, 0.25}), 0.5);
  EXPECT_DOUBLE_EQ(parabolic_metric({0.0, 0.0}, {1.0 / 16.0, 1.0 / 64.0}), 0.5);
}

TEST(Hausdorff, ClosedForms) {
  EXPECT_EQ(hausdorff_measure(TargetSet::singleton({0.3}, 1.0), 0.0).value, 1.0);
  EXPECT_DOUBLE_EQ(hausdorff_measure(TargetSet::segment({0.0}, {0.4}, 1.0), 1.0).value, 0.4);
  EXPECT_EQ(hausdorff_measure(TargetSet::finite({{0.1}, {0.2}}, 1.0), 1.0).value, 0.0);
  EXPECT_EQ(hausdorff_measure(TargetSet::finite({{0.1}, {0.2}, {0.1}}, 1.0), 0.0).value, 2.0);
  EXPECT_DOUBLE_EQ(hausdorff_measure(TargetSet::ball({0.0, 0.0}, 0.5, 1.0), 2.0).value, 1.0);
  EXPECT_EQ(hausdorff_measure(TargetSet::segment({0.0}, {0.4}, 1.0), 0.5).value, kInf);
  EXPECT_EQ(hausdorff_measure(TargetSet::segment({0.0}, {0.4}, 1.0), 1.0).method, GaugeMethod::closed_form);
}

TEST(Hausdorff, CantorDustAtItsDimensionUsesACover) {
  const auto A = TargetSet::cantor_dust({0.0, 0.0}, 1.0, 8, 1.0);
  const double dim = 2.0 * std::log(2.0) / std::log(3.0);
  const auto h = hausdorff_measure(A, dim, 0.01);
  EXPECT_EQ(h.method, GaugeMethod::covering);
  EXPECT_GT(h.value, 0.0);
  EXPECT_TRUE(std::isfinite(h.value));
  EXPECT_EQ(hausdorff_measure(A, 1.5).value, 0.0);
}

TEST(Hausdorff, NegativeIndexIsUnsupported) {
  EXPECT_THROW(hausdorff_measure(TargetSet::singleton({0.0}, 1.0), -0.5), CapabilityError);
}

TEST(Energy, NegativeIndexGivesOne) {
  const DiscreteMeasure mu{{{0.0}, {1.0}}, {0.5, 0.5}};
  EXPECT_EQ(riesz_energy(mu, -0.5), 1.0);
  const DiscreteMeasure nu{{{0.0}, {0.3}, {0.9}}, {0.2, 0.3, 0.5}};
  EXPECT_EQ(riesz_energy(nu, -2.0), 1.0);
}

TEST(Energy, AtomHasInfiniteSelfEnergy) {
  const DiscreteMeasure mu{{{0.0}}, {1.0}};
  EXPECT_EQ(riesz_energy(mu, 0.5), kInf);
  EXPECT_EQ(riesz_energy(mu, 0.0), kInf);
}

TEST(Energy, SmoothedTwoAtoms) {
  const DiscreteMeasure mu{{{0.0}, {1.0}}, {0.5, 0.5}};
  // two self terms at r_min and two cross terms at 1
  EXPECT_DOUBLE_EQ(riesz_energy(mu, 0.5, 0.25), 0.5 * 2.0 + 0.5 * 1.0);
  EXPECT_DOUBLE_EQ(riesz_kernel(3.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(riesz_kernel(2.0, 0.0), 1.0 - std::log(2.0));
  EXPECT_DOUBLE_EQ(riesz_kernel(1.0, 0.0), 1.0);
}

TEST(Energy, InvalidMeasureIsRejected) {
  EXPECT_THROW(riesz_energy(DiscreteMeasure{{{0.0}}, {0.5}}, 1.0), DomainError);
  EXPECT_THROW(riesz_energy(DiscreteMeasure{{{0.0}, {1.0}}, {1.5, -0.5}}, 1.0), DomainError);
}

TEST(Energy, ConvexAlongSegments) {
  const auto cs = capacity_sample(TargetSet::segment({0.0}, {1.0}, 1.0), 16);
  const Matrix K = energy_matrix(cs.points, 0.5, cs.r_min);
  std::vector<double> a(16, 0.0), b(16, 0.0);
  a[0] = 0.5;
  a[1] = 0.5;
  b[15] = 1.0;
  auto f = [&](const std::vector<double>& w) {
    double e = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t j = 0; j < w.size(); ++j) e += w[i] * w[j] * K(i, j);
    return e;
  };
  for (double s : {0.25, 0.5, 0.75}) {
    std::vector<double> m(16);
    for (std::size_t i = 0; i < 16; ++i) m[i] = (1 - s) * a[i] + s * b[i];
    EXPECT_LE(f(m), (1 - s) * f(a) + s * f(b) + 1e-12);
  }
}

TEST(FrankWolfe, EnergyIsMonotone) {
  const auto cs = capacity_sample(TargetSet::segment({0.0}, {1.0}, 1.0), 64);
  const auto sol = minimize_energy_frank_wolfe(energy_matrix(cs.points, 0.5, cs.r_min), 5000, 1e-6, true);
  ASSERT_FALSE(sol.trace.empty());
  for (std::size_t i = 1; i < sol.trace.size(); ++i) EXPECT_LE(sol.trace[i], sol.trace[i - 1] + 1e-15);
  EXPECT_TRUE(sol.converged);
  EXPECT_LT(sol.gap, 1e-6);
}

TEST(Capacity, NegativeIndexIsExactlyOne) {
  for (const auto& A : every_kind()) {
    for (double beta : {-0.5, -2.0}) EXPECT_EQ(capacity(A, beta, 64, 1000).value, 1.0);
  }
}

TEST(Capacity, FiniteSetsHaveZeroCapacity) {
  EXPECT_EQ(capacity(TargetSet::finite({{0.0}, {0.5}}, 1.0), 0.5, 64, 1000).value, 0.0);
  EXPECT_EQ(capacity(TargetSet::singleton({0.0}, 1.0), 0.0, 64, 1000).value, 0.0);
}

TEST(Capacity, SegmentAgreesWithDenseOracle) {
  const auto A = TargetSet::segment({0.0}, {1.0}, 1.0);
  for (std::size_t n : {64, 128}) {
    const auto fw = capacity(A, 0.5, n, 200000);
    EXPECT_TRUE(fw.converged);
    EXPECT_LT(fw.gap, 1e-6);
    const auto cs = capacity_sample(A, n);
    const auto ref = minimize_energy_projected_gradient(energy_matrix(cs.points, 0.5, cs.r_min), 20000);
    EXPECT_NEAR(fw.value * ref.energy, 1.0, 0.05);
    EXPECT_DOUBLE_EQ(fw.r_min, cs.r_min);
  }
}

TEST(Capacity, NestedSegmentsAreMonotone) {
  const double a = capacity(TargetSet::segment({0.0}, {0.5}, 1.0), 0.5, 64, 100000).value;
  const double b = capacity(TargetSet::segment({0.0}, {1.0}, 1.0), 0.5, 64, 100000).value;
  EXPECT_LE(a, b * 1.02);
}

TEST(Capacity, DecreasesInPositiveIndex) {
  // the logarithmic kernel at beta = 0 is not comparable with small powers
  const auto A = TargetSet::ball({0.0, 0.0}, 0.5, 1.0);
  double prev = kInf;
  for (double beta : {0.25, 0.5, 1.0, 1.5}) {
    const double c = capacity(A, beta, 64, 100000).value;
    EXPECT_LE(c, prev * 1.001);
    prev = c;
  }
}

TEST(Simplex, ProjectionLandsOnTheSimplex) {
  const auto w = project_to_simplex({0.3, -1.0, 2.0, 0.1});
  double s = 0.0;
  for (double x : w) {
    EXPECT_GE(x, 0.0);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
}
