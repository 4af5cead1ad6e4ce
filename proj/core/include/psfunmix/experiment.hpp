#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "psfunmix/certificate.hpp"
#include "psfunmix/coherence.hpp"
#include "psfunmix/hessian.hpp"
#include "psfunmix/solver.hpp"

namespace psfunmix {

/// Ground-truth instance: the observation is x* = G(theta*) eta*.
struct ExperimentSetup {
  KernelFamily family;
  SamplingGrid grid;
  SupportSpec support;
  MixtureParams truth;

  LossProblem problem() const;
  double Delta() const { return min_separation(support).delta; }
};

/// Same support shape with every location scaled so the minimal separation
/// becomes `Delta`.
SupportSpec rescale_support(const SupportSpec& support, double Delta);
ExperimentSetup with_separation(const ExperimentSetup& setup, double Delta);

struct CertifyOptions {
  MetricOptions metrics;
  LipschitzOptions lipschitz;
  CertificateOptions certificate;
  /// Box for the Lipschitz estimates; empty means theta* (1 +/- box_fraction),
  /// clipped to the family's domain.
  std::vector<Interval> theta_box;
  double box_fraction = 0.25;
  int threads = 0;
};

struct CertificationResult {
  CoherenceTable table;
  LipschitzEstimates lipschitz;
  BasinCertificate certificate;
};

/// Coherence table at the setup's separation, Lipschitz estimates and the
/// certificate, in that order.
CertificationResult certify(const ExperimentSetup& setup, const CertifyOptions& opts = {});

std::vector<Interval> default_theta_box(const ExperimentSetup& setup, double fraction);

struct LandscapeOptions {
  /// Points per axis; odd counts put theta* on the grid.
  int resolution = 41;
  bool log_scale = true;
  /// Half-width of each axis: decades (log) or relative span (linear).
  double half_width = 1.0;
  int threads = 0;
};

struct Landscape {
  std::vector<double> theta1;
  std::vector<double> theta2;
  /// loss(k1, k2) = L((theta1[k1], theta2[k2]), eta*).
  Matrix loss;
  double Delta = 0.0;
  std::optional<double> epsilon_0;

  /// theta1,theta2,loss
  std::string csv() const;
};

/// Loss over a 2-D theta grid centred on theta* with eta fixed at eta*.
/// Throws InputError unless the setup has exactly two modalities.
Landscape landscape(const ExperimentSetup& setup, const LandscapeOptions& opts = {},
                    const BasinCertificate* cert = nullptr);

/// 1-D slice along modality `axis` (any p), other shapes at theta*.
std::vector<std::pair<double, double>> landscape_slice(const ExperimentSetup& setup, int axis,
                                                       const LandscapeOptions& opts = {});

struct MonteCarloOptions {
  int trials = 50;
  int bins = 12;
  double d_min = 1e-7;
  double d_max = 2e-2;
  /// Overrides the log-spaced bins when non-empty.
  std::vector<double> distances;
  std::uint64_t seed = 1;
  /// Also perturb eta on the same infinity-sphere.
  bool joint_eta = false;
  /// Success: ||theta - theta*||_inf <= success_tol ||theta*||_inf.
  double success_tol = 1e-3;
  SolveConfig solver;
  int threads = 0;
};

struct SuccessBin {
  double distance = 0.0;
  int trials = 0;
  int successes = 0;
  double rate = 0.0;
};

struct SuccessCurve {
  std::vector<SuccessBin> bins;
  double Delta = 0.0;
  /// Absent when the certificate is infeasible or missing.
  std::optional<double> epsilon_0;

  /// distance,trials,successes,rate,epsilon0 (empty epsilon0 when absent)
  std::string csv() const;
};

/// Initial theta on the infinity-sphere of radius d around theta* (clamped to
/// the solver bounds), eta0 = eta* unless joint_eta. Trial (bin, k) draws from
/// its own generator seeded by (seed, bin, k); results are reduced in
/// (bin, trial) order, so the curve does not depend on the thread count.
SuccessCurve monte_carlo(const ExperimentSetup& setup, const MonteCarloOptions& opts = {},
                         const BasinCertificate* cert = nullptr);

/// Point on the infinity-sphere of radius d around `center`.
Vector sample_inf_sphere(const Vector& center, double d, std::uint64_t seed, std::uint64_t bin,
                         std::uint64_t trial);

std::vector<double> log_spaced(double lo, double hi, int n);

/// Weighted least-squares nonincreasing fit (pool adjacent violators).
std::vector<double> isotonic_nonincreasing(const std::vector<double>& values,
                                           const std::vector<double>& weights = {});

/// Axis names and scales for the exported tables, one "key = value" per line.
std::string plot_spec(const std::string& figure);

}  // namespace psfunmix
