#include <gtest/gtest.h>

#include <cmath>

#include "heatlab/noise.hpp"
#include "heatlab/stats.hpp"

using namespace heatlab;

namespace {

GridSpec small_grid() { return make_grid(0.25, 1.0 / 32.0, {0.25, 0.75}); }

}  // namespace

TEST(Noise, SameSeedGivesIdenticalField) {
  const auto g = small_grid();
  const auto a = sample_noise(g, derive_seed(7, 0, 3));
  const auto b = sample_noise(g, derive_seed(7, 0, 3));
  EXPECT_TRUE(a.xi == b.xi);
}

TEST(Noise, EntriesHaveUnitVariance) {
  // about 2^20 entries
  const auto g = make_grid(1.0, 1.0 / 64.0, {0.0, 1.0}, 2.0);
  const auto f = sample_noise(g, derive_seed(1, 0, 0));
  const auto xs = f.xi.data();
  ASSERT_GE(xs.size(), std::size_t{1} << 20);
  EXPECT_NEAR(mean(xs), 0.0, 4.0 / std::sqrt(static_cast<double>(xs.size())));
  const double v = sample_variance(xs);
  EXPECT_GE(v, 0.99);
  EXPECT_LE(v, 1.01);
}

TEST(Noise, ReplicationsAreUncorrelated) {
  const auto g = make_grid(1.0, 1.0 / 32.0, {0.0, 1.0});
  const auto fa = sample_noise(g, derive_seed(1, 0, 0));
  const auto fb = sample_noise(g, derive_seed(1, 0, 1));
  const auto fc = sample_noise(g, derive_seed(1, 1, 0));
  const auto a = fa.xi.data(), b = fb.xi.data(), c = fc.xi.data();
  const double n = static_cast<double>(a.size());
  double ab = 0.0, ac = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    ac += a[i] * c[i];
  }
  EXPECT_LE(std::fabs(ab / n), 4.0 / std::sqrt(n));
  EXPECT_LE(std::fabs(ac / n), 4.0 / std::sqrt(n));
}

TEST(Noise, CellIntegralHasCellAreaVariance) {
  const auto g = small_grid();
  const auto f = sample_noise(g, derive_seed(3, 0, 0));
  std::vector<double> cells;
  for (std::size_t n = 0; n < f.xi.rows(); ++n) {
    for (std::size_t j = 0; j < f.xi.cols(); ++j) cells.push_back(f.cell_integral(n, j));
  }
  const double v = sample_variance(cells);
  const double area = g.dt * g.dx;
  EXPECT_NEAR(v / area, 1.0, 5.0 * std::sqrt(2.0 / static_cast<double>(cells.size())));
}

TEST(Noise, BlockSumsScaleWithArea) {
  // k x m blocks divided by sqrt(k m) keep unit variance
  const auto g = make_grid(1.0, 1.0 / 32.0, {0.0, 1.0});
  const int k = 4, m = 3;
  std::vector<double> blocks;
  for (std::int64_t rep = 0; rep < 40; ++rep) {
    const auto f = sample_noise(g, derive_seed(11, 0, rep));
    for (std::size_t n = 0; n + k <= f.xi.rows(); n += k) {
      for (std::size_t j = 0; j + m <= f.xi.cols(); j += m) {
        double s = 0.0;
        for (int a = 0; a < k; ++a) {
          for (int b = 0; b < m; ++b) s += f.xi(n + a, j + b);
        }
        blocks.push_back(s / std::sqrt(static_cast<double>(k * m)));
      }
    }
  }
  EXPECT_NEAR(sample_variance(blocks), 1.0, 0.05);
}

TEST(Noise, DeriveSeedIsInjectiveAndDeterministic) {
  EXPECT_FALSE(stream_state(derive_seed(7, 0, 0)) == stream_state(derive_seed(7, 0, 1)));
  EXPECT_TRUE(stream_state(derive_seed(7, 0, 0)) == stream_state(derive_seed(7, 0, 0)));
  EXPECT_FALSE(stream_state(derive_seed(7, 1, 0)) == stream_state(derive_seed(8, 1, 0)));
  EXPECT_FALSE(stream_state(derive_seed(7, 1, 0)) == stream_state(derive_seed(7, 0, 1)));
  EXPECT_THROW(derive_seed(7, -1, 0), DomainError);
}

TEST(Noise, SubRectangleRegeneratesBitwise) {
  const auto g = small_grid();
  const auto seed = derive_seed(5, 2, 9);
  const auto f = sample_noise(g, seed);
  std::vector<double> row(7);
  fill_normal_row(seed, 0, 13, g.node_lo() + 5, row);
  for (std::size_t i = 0; i < row.size(); ++i) EXPECT_EQ(row[i], f.xi(13, 5 + i));
}

TEST(Noise, InvalidGridIsRejected) {
  EXPECT_THROW(make_grid(0.5, 1.0 / 32.0, {0.25, 0.75}, 6.0, 2.0), ConfigError);
  EXPECT_THROW(make_grid(0.5, 1.0 / 32.0, {0.75, 0.25}), ConfigError);
}
