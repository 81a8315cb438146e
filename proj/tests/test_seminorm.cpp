#include <gtest/gtest.h>

#include <cmath>

#include "heatlab/nested.hpp"
#include "heatlab/seminorm.hpp"

using namespace heatlab;

namespace {

FieldSolution constant_field(double c) {
  FieldSolution f;
  f.grid = make_grid(0.5, 1.0 / 64.0, {0.25, 0.75});
  f.values = Matrix(static_cast<std::size_t>(f.grid.steps() + 1), static_cast<std::size_t>(f.grid.nodes()));
  for (auto& x : f.values.data()) x = c;
  f.j_begin = f.grid.node_lo();
  return f;
}

FieldSolution linear_path(std::uint64_t master, std::int64_t rep = 0) {
  return solve_linear(make_grid(0.5, 1.0 / 64.0, {0.25, 0.75}), derive_seed(master, 0, rep));
}

}  // namespace

TEST(Seminorm, DefaultPackIsValid) {
  const SeminormParams p;
  EXPECT_NO_THROW(validate(p));
  EXPECT_DOUBLE_EQ(2.0 * p.gamma1 + p.gamma2, (p.gamma0 - 1.0) / (2.0 * p.p0));
  EXPECT_DOUBLE_EQ(p.y1_slope(), 7.5);
  EXPECT_DOUBLE_EQ(p.y2_slope(), 15.0);
  EXPECT_DOUBLE_EQ(p.theta1(), 0.25);
  EXPECT_DOUBLE_EQ(p.theta2(), 0.5);
}

TEST(Seminorm, InvalidPacksAreRejected) {
  EXPECT_THROW(make_seminorm_params(15, 5.0, 0.25, 0.04, 0.045), ConfigError);   // odd p0
  EXPECT_THROW(make_seminorm_params(16, 3.0, 0.25, 0.04, 0.045), ConfigError);   // gamma0 <= 4
  EXPECT_THROW(make_seminorm_params(16, 5.0, 0.25, 0.05, 0.045), ConfigError);   // constraint sum
  EXPECT_THROW(make_seminorm_params(16, 5.0, 0.25, 0.001, 0.123), ConfigError);  // gamma1 too small
}

TEST(Seminorm, ConstantFieldHasZeroFunctionals) {
  const auto v = constant_field(0.7);
  const auto st = grr_functionals(v, SeminormParams{}, {0.25, 0.5}, 0.25 + 1.0 / 64.0, 0.625);
  EXPECT_EQ(st.y1, 0.0);
  EXPECT_EQ(st.y2, 0.0);
  EXPECT_EQ(st.y3, 0.0);
  EXPECT_EQ(st.z, 0.0);
}

TEST(Seminorm, FunctionalsAddUpAndGrow) {
  const auto v = linear_path(1);
  const SeminormParams prm;
  const double dt = v.grid.dt;
  const auto a = grr_functionals(v, prm, {0.25, 0.5}, 0.25 + 16 * dt, 0.625);
  const auto b = grr_functionals(v, prm, {0.25, 0.5}, 0.25 + 32 * dt, 0.75);
  EXPECT_EQ(a.z, a.y1 + a.y2 + a.y3);
  EXPECT_GT(a.z, 0.0);
  EXPECT_GE(b.y1, a.y1);
  EXPECT_GE(b.y2, a.y2);
  EXPECT_GE(b.y3, a.y3);
}

TEST(Seminorm, DegenerateWindowIsRejected) {
  const auto v = linear_path(2);
  EXPECT_THROW(grr_functionals(v, SeminormParams{}, {0.25, 0.5}, 0.25 + 2 * v.grid.dt, 0.5 + 2 * v.grid.dx),
               DomainError);
}

TEST(Seminorm, ThresholdMonomial) {
  const SeminormParams prm;
  EXPECT_DOUBLE_EQ(grr_threshold(1.0, 1.0, prm, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(grr_threshold(2.0, 0.5, prm, 1.0) / grr_threshold(1.0, 0.5, prm, 1.0), std::ldexp(1.0, 32));
  EXPECT_DOUBLE_EQ(grr_threshold(0.5, 0.25, prm, 1.0) / grr_threshold(0.5, 0.5, prm, 1.0), 2.0);
}

TEST(Seminorm, ImplicationCases) {
  GrrState st;
  st.a = 0.1;
  st.r_threshold = 1.0;
  st.z = 0.0;
  EXPECT_TRUE(check_grr_implication(st, 0.0));  // constant path
  st.z = 2.0;
  EXPECT_TRUE(check_grr_implication(st, 5.0));  // antecedent false
  st.z = 0.5;
  EXPECT_FALSE(check_grr_implication(st, 5.0));
}

TEST(Seminorm, CalibrationOnConstantPathsUsesTheFloor) {
  std::vector<GrrSample> paths(100, GrrSample{0.0, 0.0});
  const auto cal = calibrate_grr_constant(paths, SeminormParams{}, 0.25, 1.0 / 64.0);
  EXPECT_FALSE(cal.bound_by_data);
  EXPECT_DOUBLE_EQ(cal.c_cal, kGrrSafety * kGrrFallbackConstant);
  EXPECT_THROW(calibrate_grr_constant({}, SeminormParams{}, 0.25, 1.0 / 64.0), DomainError);
}

TEST(Seminorm, CalibrationShrinksAsTrainingGrows) {
  const SeminormParams prm;
  const double zeta = 1.0 / 64.0, a = 2.0 * std::sqrt(zeta);
  std::vector<GrrSample> samples;
  for (std::int64_t rep = 0; rep < 200; ++rep) {
    const auto g = make_grid(0.25 + zeta * zeta, 1.0 / 32.0, {0.5, 0.5 + zeta});
    const RefinementTarget t{0.25, 0.25 + zeta * zeta, 0.5, 0.5 + zeta, 1.0 / 512.0};
    const auto sol = solve_nested(g, t, derive_seed(3, 0, rep), Fields::linear);
    const auto& v = sol.v_at(t.max_dx);
    samples.push_back({grr_functionals(v, prm, {0.25, 0.5}, t.t_end, t.x_end).z,
                       increment_sup(v, {0.25, 0.5}, t.t_end, t.x_end)});
  }
  double last = std::numeric_limits<double>::infinity();
  for (std::size_t n : {100, 150, 200}) {
    const auto cal = calibrate_grr_constant(std::span<const GrrSample>(samples.data(), n), prm, a, zeta);
    EXPECT_LE(cal.c_cal, last);
    last = cal.c_cal;
  }
  // the calibrated implication holds on the training set
  const auto cal = calibrate_grr_constant(samples, prm, a, zeta);
  GrrState st;
  st.a = a;
  st.r_threshold = grr_threshold(a, zeta, prm, cal.c_cal);
  for (const auto& s : samples) {
    st.z = s.z;
    EXPECT_TRUE(check_grr_implication(st, s.sup));
  }
}

TEST(Seminorm, MeanEstimatorIsTheGaussianMoment) {
  // a path repeated k times has increment variance d^2, so each pair carries
  // (2 p0 - 1)!! d^(2 p0) and the estimate is that factor times the plain value
  const SeminormParams prm;
  const auto v = linear_path(4);
  const double z = 0.5 + 16.0 / 64.0;
  GrrMeanEstimator est(GrrTerm::y2, prm);
  for (int k = 0; k < 3; ++k) est.add(v, {0.25, 0.5}, 0.25, z);
  double dfact = 1.0;
  for (int k = 2 * prm.p0 - 1; k > 1; k -= 2) dfact *= k;
  EXPECT_NEAR(est.estimate() / (dfact * grr_y2(v, prm, {0.25, 0.5}, z)), 1.0, 1e-12);
  EXPECT_THROW(est.add(v, {0.25, 0.5}, 0.25, z + 1.0 / 64.0), UsageError);
}

TEST(Seminorm, MeanEstimatorNeedsTwoPaths) {
  GrrMeanEstimator est(GrrTerm::y1, SeminormParams{});
  const auto v = linear_path(5);
  est.add(v, {0.25, 0.5}, 0.25 + 16 * v.grid.dt, 0.5);
  EXPECT_THROW(est.estimate(), DomainError);
}
