#pragma once

#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "psfunmix/kernels.hpp"
#include "psfunmix/mixture.hpp"

namespace psfunmix {

/// Numerical policy for the sup-over-shifts and the Delta-spaced series.
struct MetricOptions {
  /// Scan step is min(Delta, theta_i, theta_j) / scan_density.
  int scan_density = 50;
  /// Scanned shifts cover [D, D + scan_span * max(theta_i, theta_j, Delta)];
  /// beyond that window |profile| is treated as monotonically decaying.
  double scan_span = 10.0;
  /// Explicit summation stops at the first term below term_tolerance * (sum + 1e-300).
  double term_tolerance = 1e-12;
  long max_terms = 1'000'000;
  /// Explicit terms past the scan window before the remaining tail is
  /// integrated (Euler-Maclaurin with adaptive Gauss-Legendre panels).
  long explicit_far_terms = 2000;
  /// Largest accepted residual / value ratio; beyond it NonConvergentSeries.
  double residual_tolerance = 1e-6;
  int chebyshev_nodes = 64;
};

/// A truncated series value with its recorded truncation residual.
struct SeriesValue {
  double value = 0.0;
  /// Estimated absolute error of the truncated (integrated) tail.
  double residual = 0.0;
  /// Number of explicitly evaluated terms.
  long terms = 0;
};

/// A real function of a non-negative shift, with an optional bulk scan.
class ShiftProfile {
 public:
  virtual ~ShiftProfile() = default;
  virtual double operator()(double delta) const = 0;
  /// Samples on [d0, d1] with spacing at most `step`, both endpoints included,
  /// sorted by shift.
  virtual std::vector<std::pair<double, double>> scan(double d0, double d1, double step) const;
};

/// c(delta) = d_a g(theta_i, 0)^T d_b g(theta_j, delta) with the vectors sampled
/// on the grid (raw, unweighted dot product). Grids are symmetric and kernels
/// even, so c(-delta) = c(delta) and only delta >= 0 is needed.
class CrossCorrelation final : public ShiftProfile {
 public:
  CrossCorrelation(const KernelFamily& family, const SamplingGrid& grid, int a, double theta_i,
                   int b, double theta_j, int chebyshev_nodes = 64);

  double operator()(double delta) const override;
  std::vector<std::pair<double, double>> scan(double d0, double d1, double step) const override;

  /// Exact O(N) evaluation, bypassing the far-field compression.
  double direct(double delta) const;
  bool far_field_compressed() const noexcept { return use_far_; }
  double far_field_start() const noexcept { return far_start_; }

 private:
  KernelFamily family_;
  SamplingGrid grid_;
  int b_;
  double theta_j_;
  Vector v_;
  double far_start_ = 0.0;
  bool use_far_ = false;
  std::vector<double> far_nodes_;
  std::vector<double> far_weights_;
};

/// f(delta) = d_a g(theta, delta), the pointwise kernel (no sampling grid).
class KernelProfile final : public ShiftProfile {
 public:
  KernelProfile(const KernelFamily& family, int a, double theta);
  double operator()(double delta) const override;

 private:
  KernelFamily family_;
  int a_;
  double theta_;
};

/// sup_{delta >= D} |f(delta)|: dense scan, golden-section refinement of local
/// maxima, monotone tail past the window.
double envelope_sup(const ShiftProfile& f, double D, double step, double span);

/// sum_{m >= m0} sup_{delta >= m Delta} |f(delta)|.
SeriesValue envelope_series(const ShiftProfile& f, double Delta, int m0, double step,
                            double span, const MetricOptions& opts = {});

/// Coherence mu_{a,b}(theta_i, theta_j, Delta), raw inner products.
/// Throws InputError for Delta < 0 or orders outside {0,1}.
double coherence_mu(const KernelFamily& family, const SamplingGrid& grid, int a, int b,
                    double theta_i, double theta_j, double Delta, const MetricOptions& opts = {});

/// Coherence function C_{a,b}: 2 sum_{m>=1} mu(m Delta) when the pair is the
/// same modality and order, else 2 sum_{m>=0} mu(m Delta).
SeriesValue coherence_function(const KernelFamily& family, const SamplingGrid& grid, int a, int b,
                               double theta_i, double theta_j, double Delta,
                               bool same_modality_same_order, const MetricOptions& opts = {});

/// Interference I_a(theta, Delta) = |d_a g(theta, 0)| + 2 sum_{m>=1} sup_{|d|>=m Delta} |d_a g(theta, d)|.
/// Pointwise in the kernel, so no grid is involved.
SeriesValue interference(const KernelFamily& family, int a, double theta, double Delta,
                         const MetricOptions& opts = {});

/// Raw dot products times the grid spacing approximate continuum integrals.
inline double continuum_normalized(double raw, const SamplingGrid& grid) {
  return raw * grid.spacing();
}

struct CoherenceEntry {
  double mu = 0.0;
  /// Absent for Delta = 0 (the series needs a positive spacing).
  std::optional<double> C;
  double C_residual = 0.0;
};

struct InterferenceEntry {
  double I = 0.0;
  double residual = 0.0;
};

/// mu, C and I values keyed by (a, b, i, j, Delta) and (a, i, Delta), where
/// i, j index modalities evaluated at the table's shape vector.
class CoherenceTable {
 public:
  using Key = std::tuple<int, int, int, int, double>;
  using IKey = std::tuple<int, int, double>;

  Vector theta;
  MetricOptions options;

  void put(int a, int b, int i, int j, double Delta, CoherenceEntry e);
  void put_interference(int a, int i, double Delta, InterferenceEntry e);

  /// Throw DependencyError naming the missing entry.
  const CoherenceEntry& at(int a, int b, int i, int j, double Delta) const;
  const InterferenceEntry& interference_at(int a, int i, double Delta) const;
  double mu(int a, int b, int i, int j, double Delta) const { return at(a, b, i, j, Delta).mu; }
  double C(int a, int b, int i, int j, double Delta) const;
  double I(int a, int i, double Delta) const { return interference_at(a, i, Delta).I; }

  const std::map<Key, CoherenceEntry>& entries() const noexcept { return entries_; }
  const std::map<IKey, InterferenceEntry>& interference_entries() const noexcept {
    return interference_;
  }

  /// CSV with header a,b,i,j,Delta,mu,C (empty C at Delta = 0).
  std::string coherence_csv() const;
  /// CSV with header a,i,Delta,I.
  std::string interference_csv() const;

 private:
  std::map<Key, CoherenceEntry> entries_;
  std::map<IKey, InterferenceEntry> interference_;
};

/// Fills every (a, b) in {0,1}^2, (i, j) pair at each Delta in `deltas`, the
/// Delta = 0 coherences, and I_a for a in {0,1,2}. Work is spread over
/// `threads` workers (0 = hardware concurrency).
CoherenceTable build_coherence_table(const KernelFamily& family, const SamplingGrid& grid,
                                     const Vector& theta, const std::vector<double>& deltas,
                                     const MetricOptions& opts = {}, int threads = 0);

struct LipschitzOptions {
  int samples = 21;
  /// Samples of the partner argument theta' per modality (cross-modality pairs).
  int partner_samples = 3;
  double safety_factor = 1.25;
};

/// Sampled Lipschitz constants assumed by the basin certificate. These are
/// estimates (finite-difference slopes), not proven bounds.
struct LipschitzEstimates {
  double C_Delta = 0.0;
  double K = 0.0;
  double C_Delta_raw = 0.0;
  double K_raw = 0.0;
  double safety_factor = 1.25;
  int samples = 0;
  int partner_samples = 0;
  double Delta = 0.0;
};

/// C_Delta from slopes of C_{a,b}(., theta', Delta) and I_a(., Delta) on a theta
/// grid per modality; K from slopes of theta -> G(theta) in the induced inf-norm
/// along each axis of the box's tensor grid. Both scaled by the safety factor.
LipschitzEstimates estimate_lipschitz(const KernelFamily& family, const SamplingGrid& grid,
                                      const SupportSpec& support, double Delta,
                                      const std::vector<Interval>& theta_box,
                                      const LipschitzOptions& lip = {},
                                      const MetricOptions& opts = {}, int threads = 0);

/// Induced infinity norm (max absolute row sum).
double inf_norm(const Matrix& M);

}  // namespace psfunmix
