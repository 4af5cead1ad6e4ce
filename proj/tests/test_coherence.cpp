#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "psfunmix/coherence.hpp"
#include "psfunmix/errors.hpp"

using namespace psfunmix;

namespace {

constexpr double kPi = std::numbers::pi;

/// sum_{m >= 1} theta / (pi (theta^2 + m^2 Delta^2)), closed form via
/// sum 1 / (m^2 + a^2) = (pi a coth(pi a) - 1) / (2 a^2).
double lorentz_lattice_sum(double theta, double Delta) {
  const double a = theta / Delta;
  return theta / (kPi * Delta * Delta) * (kPi * a / std::tanh(kPi * a) - 1.0) / (2.0 * a * a);
}

/// Raw dot product of sampled kernels at one shift.
double dot_at(const KernelFamily& f, const SamplingGrid& g, int a, double ti, int b, double tj,
              double d) {
  double s = 0.0;
  for (int k = 0; k < g.N; ++k) s += f.raw(a, ti, g.u[k]) * f.raw(b, tj, g.u[k] - d);
  return s;
}

/// sup_{|d| >= D} of the brute-force correlation on a dense shift lattice.
double brute_sup(const KernelFamily& f, const SamplingGrid& g, int a, double ti, int b, double tj,
                 double D, double span, int points) {
  double best = 0.0;
  for (int k = 0; k <= points; ++k) {
    const double d = D + span * k / points;
    best = std::max(best, std::abs(dot_at(f, g, a, ti, b, tj, d)));
  }
  return best;
}

}  // namespace

TEST(Coherence, LorentzAutocorrelationIdentity) {
  // continuum: integral g(t1, t) g(t2, t - d) dt = g(t1 + t2, d)
  const auto f = lorentz_family();
  for (double t1 : {0.1, 0.2}) {
    for (double t2 : {0.1, 0.2}) {
      const auto grid = make_grid(100.0 * (t1 + t2), 20001);
      for (double d : {0.0, 0.1, 0.2}) {
        const double mu = continuum_normalized(coherence_mu(f, grid, 0, 0, t1, t2, d), grid);
        const double exact = f.raw(0, t1 + t2, d);
        EXPECT_NEAR(mu, exact, 1e-3 * exact) << t1 << " " << t2 << " " << d;
      }
    }
  }
}

TEST(Coherence, MuMatchesBruteForceSup) {
  const auto f = lorentz_family();
  const auto grid = make_grid(4.0, 201);
  for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}) {
    for (double D : {0.0, 0.05, 0.3}) {
      const double mu = coherence_mu(f, grid, a, b, 0.07, 0.12, D);
      const double brute = brute_sup(f, grid, a, 0.07, b, 0.12, D, 4.0, 8000);
      EXPECT_GE(mu, brute * (1.0 - 1e-12)) << a << b << " D=" << D;
      EXPECT_NEAR(mu, brute, 1e-5 * brute) << a << b << " D=" << D;
    }
  }
}

TEST(Coherence, SeriesMatchesClosedFormLatticeSum) {
  // Lorentz correlation is decreasing in the shift, so C_00 for one modality
  // is 2 sum_{m>=1} g(2 theta, m Delta) in the continuum limit. The finite
  // window lowers shifts comparable to T, a relative bias of roughly
  // (2 theta / (pi Delta T)) log(T / Delta).
  const auto f = lorentz_family();
  const auto grid = make_grid(400.0, 40001);
  for (double Delta : {0.3, 1.0}) {
    const auto c = coherence_function(f, grid, 0, 0, 0.15, 0.15, Delta, true);
    const double value = continuum_normalized(c.value, grid);
    const double exact = 2.0 * lorentz_lattice_sum(0.3, Delta);
    const double bias = 0.6 / (kPi * Delta * 400.0) * std::log(400.0 / Delta);
    EXPECT_NEAR(value, exact, (bias + 1e-4) * exact) << Delta;
    EXPECT_LE(value, exact);
    EXPECT_GT(c.terms, 0);
  }
}

TEST(Coherence, SeriesMatchesBruteLatticeSum) {
  const auto f = lorentz_family();
  const auto grid = make_grid(40.0, 4001);
  const double Delta = 1.0;
  // direct dot products out to 50 T; the windowed correlation is monotone
  // here, so each envelope term is the value at m Delta
  const int M = 2000;
  double brute = 0.0;
  double last = 0.0;
  for (int m = 1; m <= M; ++m) {
    last = dot_at(f, grid, 0, 0.15, 0, 0.15, m * Delta);
    brute += last;
  }
  brute += last * M;  // 1/m^2 tail
  brute *= 2.0;
  const auto c = coherence_function(f, grid, 0, 0, 0.15, 0.15, Delta, true);
  EXPECT_NEAR(c.value, brute, 1e-5 * brute);
}

TEST(Coherence, InterferenceClosedForm) {
  const auto f = lorentz_family();
  for (double theta : {0.1, 0.2, 2e-5}) {
    for (double Delta : {theta / 3.0, theta, 10.0 * theta}) {
      const auto I = interference(f, 0, theta, Delta);
      const double exact = 1.0 / (kPi * theta) + 2.0 * lorentz_lattice_sum(theta, Delta);
      EXPECT_NEAR(I.value, exact, 1e-8 * exact) << theta << " " << Delta;
      EXPECT_LE(I.residual, 1e-6 * I.value);
    }
  }
}

TEST(Coherence, InterferenceFirstOrderMatchesBruteEnvelope) {
  // |d/dtheta g| vanishes at |t| = theta, so the sup envelope is not the
  // pointwise value; compare against a brute lattice evaluation.
  const auto f = lorentz_family();
  const double theta = 0.2;
  const double Delta = 0.05;
  double brute = std::abs(f.raw(1, theta, 0.0));
  for (int m = 1; m < 200000; ++m) {
    double sup = 0.0;
    const double d0 = m * Delta;
    for (int k = 0; k <= 400; ++k) sup = std::max(sup, std::abs(f.raw(1, theta, d0 + k * 1e-3)));
    sup = std::max(sup, std::abs(f.raw(1, theta, d0 + 0.4)));
    brute += 2.0 * sup;
  }
  // analytic tail beyond the brute window: 2 sum (1/(pi t^2)) ~ 2/(pi Delta^2 M)
  brute += 2.0 / (kPi * Delta * Delta * 200000.0);
  const auto I = interference(f, 1, theta, Delta);
  EXPECT_NEAR(I.value, brute, 1e-4 * brute);
}

TEST(Coherence, SymmetricForWideWindows) {
  const auto f = lorentz_family();
  const auto grid = make_grid(200.0, 40001);
  auto r = fixture::rng(5);
  for (int k = 0; k < 10; ++k) {
    const double ti = fixture::uniform(r, 0.05, 0.3);
    const double tj = fixture::uniform(r, 0.05, 0.3);
    const double D = fixture::uniform(r, 0.0, 0.5);
    for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 1}, {1, 1}, {0, 0}}) {
      const double x = coherence_mu(f, grid, a, b, ti, tj, D);
      const double y = coherence_mu(f, grid, b, a, tj, ti, D);
      EXPECT_NEAR(x, y, 1e-3 * std::max(std::abs(x), std::abs(y)));
    }
  }
}

TEST(Coherence, CoherenceFunctionDecreasesWithSeparation) {
  const auto f = lorentz_family();
  const auto grid = make_grid(20.0, 4001);
  auto r = fixture::rng(7);
  for (int k = 0; k < 8; ++k) {
    const double D1 = fixture::uniform(r, 0.05, 1.0);
    const double D2 = D1 * fixture::uniform(r, 1.05, 3.0);
    for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {1, 0}}) {
      const double c1 = coherence_function(f, grid, a, b, 0.2, 0.1, D1, false).value;
      const double c2 = coherence_function(f, grid, a, b, 0.2, 0.1, D2, false).value;
      EXPECT_LE(c2, c1 * (1.0 + 1e-12)) << a << b << " " << D1 << " " << D2;
    }
  }
}

TEST(Coherence, SeriesTruncationResidualWithinTolerance) {
  const auto f = lorentz_family();
  const auto grid = make_grid(0.05, 5001);
  MetricOptions o;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {0, 1}}) {
    const auto c = coherence_function(f, grid, a, b, 1e-3, 1e-3, 1e-3, a == b, o);
    EXPECT_LE(c.residual, o.residual_tolerance * c.value);
  }
}

namespace {

class SlowDecay final : public ShiftProfile {
 public:
  double operator()(double d) const override { return 1.0 / (1.0 + d); }
};

}  // namespace

TEST(Coherence, DivergentSeriesIsReported) {
  SlowDecay f;
  MetricOptions o;
  o.max_terms = 5000;
  try {
    envelope_series(f, 1.0, 1, 0.1, 10.0, o);
    FAIL() << "expected NonConvergentSeries";
  } catch (const NonConvergentSeries& e) {
    EXPECT_GT(e.partial_sum(), 1.0);
  }
}

namespace {

/// Decays like 1/d^2 with a sign change at d = 5.
class SignChange final : public ShiftProfile {
 public:
  double operator()(double d) const override { return (d - 5.0) / (1.0 + d * d * d); }
};

}  // namespace

TEST(Coherence, FarFieldSignChangeIsSummed) {
  // the explicit terms stop just past the zero at d = 5, where |f| still rises
  SignChange f;
  MetricOptions o;
  o.explicit_far_terms = 2;
  o.residual_tolerance = 1e-4;
  const auto s = envelope_series(f, 1.0, 1, 0.01, 2.0, o);
  // brute: term m is sup_{d >= m} |f| on a 0.01 lattice, plus the 1/d^2 tail
  // beyond M; the series samples the far field at integers only
  const long M = 20000;
  double run = 0.0;
  double brute = 1.0 / M;
  for (long k = 100 * M; k >= 100; --k) {
    run = std::max(run, std::abs(f(k / 100.0)));
    if (k % 100 == 0) brute += run;
  }
  EXPECT_NEAR(s.value, brute, 1e-3 * brute);
}

TEST(Coherence, CrossCorrelationFarFieldMatchesDirect) {
  const auto f = lorentz_family();
  const auto grid = make_grid(0.05, 5001);
  const CrossCorrelation c(f, grid, 1, 2e-5, 0, 1e-3);
  auto r = fixture::rng(9);
  for (int k = 0; k < 50; ++k) {
    const double d = fixture::uniform(r, 0.0, 0.2);
    const double direct = c.direct(d);
    EXPECT_NEAR(c(d), direct, 1e-10 * std::abs(c.direct(0.0)) + 1e-12 * std::abs(direct));
  }
  const auto scan = c.scan(0.001, 0.003, 1e-5);
  for (std::size_t k = 0; k < scan.size(); k += 17) {
    EXPECT_NEAR(scan[k].second, c.direct(scan[k].first), 1e-12 * std::abs(c.direct(0.0)));
  }
}

TEST(Coherence, TableLookupAndCsv) {
  const auto f = lorentz_family();
  const auto grid = make_grid(2.0, 401);
  Vector theta(2);
  theta << 0.1, 0.2;
  const auto t1 = build_coherence_table(f, grid, theta, {0.3}, {}, 1);
  const auto t2 = build_coherence_table(f, grid, theta, {0.3}, {}, 3);
  EXPECT_EQ(t1.coherence_csv(), t2.coherence_csv());
  EXPECT_EQ(t1.interference_csv(), t2.interference_csv());
  EXPECT_EQ(t1.coherence_csv().substr(0, t1.coherence_csv().find('\n')), "a,b,i,j,Delta,mu,C");
  EXPECT_EQ(t1.interference_csv().substr(0, t1.interference_csv().find('\n')), "a,i,Delta,I");
  EXPECT_NO_THROW(t1.C(1, 0, 0, 1, 0.3 * (1.0 + 1e-12)));
  EXPECT_THROW(t1.C(1, 0, 0, 1, 0.5), DependencyError);
  EXPECT_THROW(t1.I(0, 2, 0.3), DependencyError);
  EXPECT_THROW(t1.C(0, 0, 0, 0, 0.0), DependencyError);
  EXPECT_EQ(t1.mu(0, 0, 1, 1, 0.0), coherence_mu(f, grid, 0, 0, 0.2, 0.2, 0.0));
}

TEST(Coherence, InfNormMatchesRowSums) {
  auto r = fixture::rng(4);
  for (int k = 0; k < 20; ++k) {
    Matrix M = Matrix::Random(1 + r() % 7, 1 + r() % 7);
    double brute = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < M.cols(); ++j) s += std::abs(M(i, j));
      brute = std::max(brute, s);
    }
    EXPECT_DOUBLE_EQ(inf_norm(M), brute);
  }
}

TEST(Coherence, LipschitzEstimatesAreScaledSlopes) {
  const auto s = fixture::feasible_setup();
  const auto box = default_theta_box(s, 0.1);
  LipschitzOptions lip;
  lip.samples = 5;
  lip.partner_samples = 2;
  const auto est = estimate_lipschitz(s.family, s.grid, s.support, s.Delta(), box, lip,
                                      fixture::banded_metrics(), 1);
  EXPECT_DOUBLE_EQ(est.C_Delta, 1.25 * est.C_Delta_raw);
  EXPECT_DOUBLE_EQ(est.K, 1.25 * est.K_raw);
  // G is affine in theta with slope G_1, so the steepest direction is a sign
  // diagonal and K_raw = ||G_1||_inf
  const auto dict = build_dictionary(s.family, s.grid, s.support, s.truth.theta, 1);
  const double slope = inf_norm(dict.G[1]);
  EXPECT_NEAR(est.K_raw, slope, 1e-6 * slope);
  EXPECT_THROW(estimate_lipschitz(s.family, s.grid, s.support, s.Delta(), {box[0]}, lip), InputError);
}
