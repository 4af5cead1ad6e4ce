#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "psfunmix/certificate.hpp"
#include "psfunmix/coherence.hpp"
#include "psfunmix/mixture.hpp"

namespace psfunmix {

/// L(theta, eta) = 1/2 || W (G(theta) eta) - x ||^2 with an optional diagonal
/// row scale W (empty = identity). Parameters are packed as
/// [theta_1..theta_p, eta_(1,1)..eta_(p,L_p)].
class LossProblem {
 public:
  LossProblem(KernelFamily family, SamplingGrid grid, SupportSpec support, Vector target,
              Vector row_scale = {});

  const KernelFamily& family() const noexcept { return family_; }
  const SamplingGrid& grid() const noexcept { return grid_; }
  const SupportSpec& support() const noexcept { return support_; }
  const Vector& target() const noexcept { return target_; }
  const Vector& row_scale() const noexcept { return row_scale_; }
  int modalities() const noexcept { return support_.modalities(); }
  int dimension() const noexcept { return support_.modalities() + support_.total_spikes(); }

  /// Row-scaled G_0..G_max_order at theta.
  DictionaryStack dictionary(const Vector& theta, int max_order = 2) const;

  Vector residual(const MixtureParams& params) const;
  double loss(const MixtureParams& params) const;
  Vector gradient(const MixtureParams& params) const;

  Vector pack(const MixtureParams& params) const;
  MixtureParams unpack(const Vector& x) const;
  void check(const MixtureParams& params) const;

 private:
  KernelFamily family_;
  SamplingGrid grid_;
  SupportSpec support_;
  Vector target_;
  Vector row_scale_;
};

/// H = E + R with E the residual-free (Gauss-Newton) part, R the
/// residual-coupled part, D the diagonal of E.
struct HessianBlocks {
  Matrix H;
  Matrix E;
  Matrix R;
  Vector D;
  Vector residual;
  /// J = [G_1^1 eta_1, ..., G_1^p eta_p, G_0], so that E = J^T J.
  Matrix J;
};

HessianBlocks hessian(const LossProblem& problem, const MixtureParams& params);

struct EigenExtremes {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

/// Dense symmetric eigensolver on the (symmetrised) matrix.
EigenExtremes extreme_eigenvalues(const Matrix& symmetric);

struct WeylBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// lambda_min(D) - ||H - D||_inf and lambda_max(D) + ||H - D||_inf.
WeylBounds weyl_bounds(const HessianBlocks& blocks);
WeylBounds weyl_bounds(const Matrix& H, const Vector& D);

struct AuditRow {
  std::string id;
  double lhs = 0.0;
  double rhs = 0.0;
  /// rhs - lhs; the inequality reads lhs <= rhs.
  double slack = 0.0;
  bool pass = false;
};

struct AuditReport {
  double epsilon = 0.0;
  std::vector<AuditRow> rows;

  bool all_pass() const;
  /// Rows whose id starts with `prefix`.
  std::vector<AuditRow> group(const std::string& prefix) const;
  nlohmann::json to_json() const;
};

/// Evaluates, at `params`, the bound chain behind the certificate:
///   bound_D_lower          c-                     <= lambda_min(D)
///   bound_D_upper          lambda_max(D)          <= c+
///   bound_G_interference   ||G_a^i||_inf          <= I_a(theta*_i, Delta) + C_Delta eps,  a = 0,1,2
///   bound_G_coherence      ||G_a^i^T G_b^j||_inf  <= C_ab(theta*_i, theta*_j, Delta) + 2 C_Delta eps
///   bound_offdiag          ||H - D||_inf          <= r* + q* eps
/// For i = j and a = b the coherence row uses the off-diagonal part of the
/// Gram block, since its diagonal holds the column energies that the series
/// (which starts at m = 1) excludes. `epsilon` is the declared radius of the
/// ball around (theta*, eta*) that contains `params`. Failures are reported,
/// never thrown.
AuditReport audit_lemmas(const LossProblem& problem, const MixtureParams& params,
                         const CoherenceTable& table, const LipschitzEstimates& lip,
                         const BasinCertificate& cert, double epsilon);

}  // namespace psfunmix
