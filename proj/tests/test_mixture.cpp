#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "psfunmix/errors.hpp"
#include "psfunmix/mixture.hpp"

using namespace psfunmix;

TEST(Grid, EndpointsAndSpacing) {
  const auto g = make_grid(0.05, 5001);
  EXPECT_EQ(g.u.size(), 5001);
  EXPECT_EQ(g.u[0], -0.025);
  EXPECT_EQ(g.u[5000], 0.025);
  EXPECT_NEAR(g.spacing(), 1e-5, 1e-18);
  EXPECT_THROW(make_grid(0.0, 10), InputError);
  EXPECT_THROW(make_grid(1.0, 1), InputError);
}

TEST(Support, InterleavedHasExactSeparation) {
  const auto s = interleaved_support({10, 5}, 1e-3);
  EXPECT_EQ(s.modalities(), 2);
  EXPECT_EQ(s.total_spikes(), 15);
  EXPECT_EQ(s.offset(1), 10);
  EXPECT_EQ(s.modality_of_column(12), 1);
  EXPECT_NEAR(min_separation(s).delta, 1e-3, 1e-15);
  EXPECT_TRUE(min_separation(SupportSpec(std::vector<std::vector<double>>{{0.5}})).undefined);
}

TEST(Support, SeparationIsBruteForceMinimum) {
  auto r = fixture::rng(3);
  for (int k = 0; k < 50; ++k) {
    std::vector<std::vector<double>> loc(3);
    std::vector<double> all;
    for (auto& m : loc) {
      const int n = 1 + static_cast<int>(r() % 4);
      for (int l = 0; l < n; ++l) {
        m.push_back(fixture::uniform(r, -1.0, 1.0));
        all.push_back(m.back());
      }
    }
    double brute = INFINITY;
    for (std::size_t a = 0; a < all.size(); ++a) {
      for (std::size_t b = a + 1; b < all.size(); ++b) brute = std::min(brute, std::abs(all[a] - all[b]));
    }
    EXPECT_EQ(min_separation(SupportSpec(loc)).delta, brute);
  }
}

TEST(Dictionary, ReferenceConfigShapeAndColumns) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(0.05, 5001);
  const auto support = interleaved_support({10, 5}, 1e-3);
  Vector theta(2);
  theta << 2e-5, 1e-3;
  const auto dict = build_dictionary(fam, grid, support, theta);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(dict.G[a].rows(), 5001);
    EXPECT_EQ(dict.G[a].cols(), 15);
  }
  // column (2, 3) is modality 1, spike 2
  const double t = support.location(1, 2);
  for (int s : {0, 1234, 2500, 5000}) {
    for (int a : {0, 2}) {
      const double direct = fam.raw(a, 1e-3, grid.u[s] - t);
      EXPECT_NEAR(dict.G[a](s, 12), direct, 1e-13 * std::abs(direct));
    }
  }
  EXPECT_EQ(dict.view(1, 1).cols(), 5);
}

TEST(Dictionary, SynthesisMatchesDirectDoubleSum) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(0.05, 5001);
  const auto support = interleaved_support({10, 5}, 1e-3);
  Vector theta(2);
  theta << 2e-5, 1e-3;
  const Vector eta = uniform_amplitudes(support);
  EXPECT_EQ(eta[0], 0.1);
  EXPECT_EQ(eta[14], 0.2);
  const Vector x = synthesize(build_dictionary(fam, grid, support, theta, 0), eta);
  for (int s = 0; s < grid.N; s += 97) {
    double direct = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int l = 0; l < support.spikes(i); ++l) {
        direct += eta[support.offset(i) + l] *
                  theta[i] / (M_PI * (theta[i] * theta[i] + std::pow(grid.u[s] - support.location(i, l), 2)));
      }
    }
    EXPECT_NEAR(x[s], direct, 1e-12 * std::abs(direct));
  }
}

TEST(Dictionary, RejectsBadShapes) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(1.0, 11);
  const auto support = interleaved_support({1, 1}, 0.1);
  EXPECT_THROW(build_dictionary(fam, grid, support, Vector::Constant(3, 0.1)), InputError);
  EXPECT_THROW(build_dictionary(fam, grid, support, Vector::Constant(2, 20.0)), DomainError);
  const auto dict = build_dictionary(fam, grid, support, Vector::Constant(2, 0.1));
  EXPECT_THROW(synthesize(dict, Vector::Ones(3)), InputError);
}
