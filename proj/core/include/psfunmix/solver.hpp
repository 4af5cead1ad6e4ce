#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psfunmix/certificate.hpp"
#include "psfunmix/hessian.hpp"

namespace psfunmix {

enum class SolveMethod { GradientDescent, LevenbergMarquardt };

/// How the LM damping enters the normal equations.
enum class DampingScaling {
  /// (E + lambda diag(E)) dx = -g. Dimensionless lambda; handles parameters
  /// whose scales differ by many orders of magnitude.
  Marquardt,
  /// (E + lambda I) dx = -g with lambda in the units of E.
  Identity,
};

struct SolveConfig {
  SolveMethod method = SolveMethod::LevenbergMarquardt;
  /// Gradient-descent step. Unset: 1/gamma from a supplied certificate, else
  /// 1/lambda_max of the Hessian at the initialization.
  std::optional<double> step;
  int max_iters = 500;
  /// Converged when ||grad||_inf < grad_tol.
  double grad_tol = 1e-10;
  /// Stop when an accepted step changes every coordinate by less than
  /// step_tol relative to its magnitude (LM) or the loss stalls (GD).
  double step_tol = 1e-15;
  /// Unset: 1e-3 (Marquardt) or 1e-3 trace(E) / (p + L) (Identity).
  std::optional<double> lm_damping_init;
  DampingScaling lm_scaling = DampingScaling::Marquardt;
  /// Per-modality bounds; empty means the family's domain.
  std::vector<Interval> theta_bounds;
  /// Loss growth factor over the initial loss treated as divergence.
  double divergence_factor = 1e12;
  /// Keep per-iteration parameters for trace export.
  bool record_params = true;
};

struct SolveReport {
  MixtureParams params;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loss_trace;
  std::vector<double> grad_trace;
  std::vector<Vector> param_trace;
  double grad_norm = 0.0;
  std::optional<double> theta_error;
  std::optional<double> eta_error;
  std::string stop_reason;

  /// iter,loss,grad_norm,theta_1..theta_p,eta_1..eta_L
  std::string trace_csv(int modalities) const;
  nlohmann::json to_json() const;
};

/// Minimises the loss from `init`. Theta is clamped to the bounds after every
/// update. `truth` only feeds the reported distances (and, with a
/// certificate, the default GD step via gamma at the initial distance).
///
/// Throws InputError for a non-finite initial loss or an init outside the
/// bounds, DivergenceError (with the trace) when the loss exceeds
/// divergence_factor times its initial value.
SolveReport solve(const LossProblem& problem, const MixtureParams& init, const SolveConfig& config,
                  const BasinCertificate* cert = nullptr, const MixtureParams* truth = nullptr);

/// argmin_eta 1/2 ||G eta - x||^2 by column-pivoted QR. Throws
/// ConditioningError (naming the two columns that are most nearly dependent)
/// when the condition number exceeds `max_condition`.
Vector solve_eta_linear(const Matrix& G, const Vector& x, double max_condition = 1e12);

/// Same on G_0 of a dictionary; the error carries the modality indices of the
/// offending column pair.
Vector solve_eta_linear(const DictionaryStack& dict, const SupportSpec& support, const Vector& x,
                        double max_condition = 1e12);

/// Relative theta recovery test ||theta - theta*||_inf <= rel_tol ||theta*||_inf.
bool theta_recovered(const Vector& theta, const Vector& theta_star, double rel_tol = 1e-3);

}  // namespace psfunmix
