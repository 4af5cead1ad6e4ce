#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "psfunmix/errors.hpp"
#include "psfunmix/hessian.hpp"

using namespace psfunmix;

namespace {

/// Small two-modality Lorentz problem with a non-zero residual at `params`.
struct Instance {
  LossProblem problem;
  MixtureParams params;
};

Instance lorentz_instance(std::uint64_t seed, bool row_scale) {
  const auto fam = lorentz_family();
  const auto grid = make_grid(2.0, 401);
  const auto support = interleaved_support({3, 2}, 0.1);
  Vector theta(2);
  theta << 0.03, 0.08;
  const Vector eta = uniform_amplitudes(support);
  const Vector x = synthesize(build_dictionary(fam, grid, support, theta, 0), eta);
  Vector w;
  if (row_scale) w = Vector::LinSpaced(grid.N, 0.8, 1.2);
  LossProblem problem(fam, grid, support, row_scale ? Vector(w.cwiseProduct(x)) : x, w);
  auto r = fixture::rng(seed);
  MixtureParams p{theta, eta};
  for (int i = 0; i < 2; ++i) p.theta[i] *= fixture::uniform(r, 0.8, 1.2);
  for (Eigen::Index k = 0; k < p.eta.size(); ++k) p.eta[k] += fixture::uniform(r, -0.1, 0.1);
  return {problem, p};
}

Vector fd_gradient(const LossProblem& prob, const Vector& x) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = 1e-6 * std::max(std::abs(x[k]), 1e-2);
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (prob.loss(prob.unpack(xp)) - prob.loss(prob.unpack(xm))) / (2.0 * h);
  }
  return g;
}

Matrix fd_hessian(const LossProblem& prob, const Vector& x) {
  const auto n = x.size();
  Matrix H(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double h = 1e-6 * std::max(std::abs(x[k]), 1e-2);
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    H.col(k) = (prob.gradient(prob.unpack(xp)) - prob.gradient(prob.unpack(xm))) / (2.0 * h);
  }
  return H;
}

}  // namespace

TEST(Hessian, GradientMatchesFiniteDifferences) {
  for (bool scaled : {false, true}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto inst = lorentz_instance(seed, scaled);
      const Vector x = inst.problem.pack(inst.params);
      const Vector g = inst.problem.gradient(inst.params);
      const Vector fd = fd_gradient(inst.problem, x);
      EXPECT_LE((g - fd).norm(), 1e-6 * g.norm()) << "seed " << seed << " scaled " << scaled;
    }
  }
}

TEST(Hessian, MatchesFiniteDifferencesOfGradient) {
  for (bool scaled : {false, true}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto inst = lorentz_instance(seed, scaled);
      const auto blocks = hessian(inst.problem, inst.params);
      const Matrix fd = fd_hessian(inst.problem, inst.problem.pack(inst.params));
      const double scale = blocks.H.cwiseAbs().maxCoeff();
      for (Eigen::Index i = 0; i < fd.rows(); ++i) {
        for (Eigen::Index j = 0; j < fd.cols(); ++j) {
          EXPECT_NEAR(blocks.H(i, j), fd(i, j), 1e-5 * std::abs(fd(i, j)) + 1e-8 * scale)
              << i << "," << j << " seed " << seed;
        }
      }
    }
  }
}

TEST(Hessian, BlockStructure) {
  const auto inst = lorentz_instance(3, false);
  const auto b = hessian(inst.problem, inst.params);
  EXPECT_LE((b.E - b.J.transpose() * b.J).norm(), 1e-12 * b.E.norm());
  EXPECT_LE((b.H - b.E - b.R).norm(), 1e-12 * b.H.norm());
  EXPECT_LE((b.H - b.H.transpose()).norm(), 1e-12 * b.H.norm());
  EXPECT_EQ(b.D, b.E.diagonal());
  EXPECT_LE((b.residual - inst.problem.residual(inst.params)).norm(), 1e-14 * b.residual.norm());
  // the eta-eta block of R vanishes: the loss is quadratic in eta
  const int p = inst.problem.modalities();
  EXPECT_EQ(b.R.bottomRightCorner(b.R.rows() - p, b.R.cols() - p).norm(), 0.0);
}

TEST(Hessian, ResidualBlockVanishesAtTruth) {
  const auto s = fixture::feasible_setup();
  const auto b = hessian(s.problem(), s.truth);
  EXPECT_LE(b.R.norm(), 1e-12 * b.E.norm());
  EXPECT_GT(extreme_eigenvalues(b.H).lambda_min, 0.0);
}

TEST(Hessian, WeylBoundsBracketSpectrum) {
  auto r = fixture::rng(21);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + static_cast<int>(r() % 10);
    Matrix A = Matrix::Random(n, n);
    Matrix H = A + A.transpose();
    H.diagonal().array() += fixture::uniform(r, 0.0, 10.0);
    const auto e = extreme_eigenvalues(H);
    const auto w = weyl_bounds(H, H.diagonal());
    EXPECT_LE(w.lower, e.lambda_min + 1e-12);
    EXPECT_GE(w.upper, e.lambda_max - 1e-12);
  }
}

TEST(Hessian, ExtremeEigenvaluesOfKnownMatrix) {
  Matrix H(3, 3);
  H << 2, 1, 0, 1, 2, 0, 0, 0, 5;
  const auto e = extreme_eigenvalues(H);
  EXPECT_NEAR(e.lambda_min, 1.0, 1e-14);
  EXPECT_NEAR(e.lambda_max, 5.0, 1e-14);
}

TEST(Hessian, PackRoundTripAndChecks) {
  const auto inst = lorentz_instance(1, false);
  const Vector x = inst.problem.pack(inst.params);
  EXPECT_EQ(x.size(), inst.problem.dimension());
  const auto back = inst.problem.unpack(x);
  EXPECT_EQ(back.theta, inst.params.theta);
  EXPECT_EQ(back.eta, inst.params.eta);
  MixtureParams bad = inst.params;
  bad.eta.resize(2);
  EXPECT_THROW(inst.problem.loss(bad), InputError);
  bad = inst.params;
  bad.theta[0] = -1.0;
  EXPECT_THROW(inst.problem.loss(bad), DomainError);
  EXPECT_THROW(LossProblem(lorentz_family(), make_grid(1.0, 11), interleaved_support({1}, 0.1),
                           Vector::Zero(5)),
               InputError);
}
