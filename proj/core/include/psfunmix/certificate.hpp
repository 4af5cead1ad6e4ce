#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "psfunmix/coherence.hpp"
#include "psfunmix/mixture.hpp"

namespace psfunmix {

struct CertificateOptions {
  /// Sensitivity switch for the j-sum of r*. Off: both branches sum their full
  /// bracket over j. On: only the eta-weighted coherence is summed and the
  /// unweighted coherence is taken at j = i.
  bool alternative_grouping = false;
};

/// Constants of the strong-basin certificate around (theta*, eta*).
struct BasinCertificate {
  double c_minus = 0.0;
  double c_plus = 0.0;
  double r_star = 0.0;
  double q_star = 0.0;
  /// r_star < c_minus.
  bool feasible = false;
  /// (c_minus - r_star) / q_star when feasible, else 0.
  double epsilon_0 = 0.0;
  double Delta = 0.0;
  std::vector<double> eta_mins;
  std::vector<double> eta_maxs;
  bool alternative_grouping = false;
  LipschitzEstimates lipschitz;
  std::string table_hash;
  std::string lipschitz_hash;

  nlohmann::json to_json() const;
};

/// Builds the certificate from a coherence table holding, for every (a, b)
/// in {0,1}^2 and every modality pair, mu at Delta = 0 and C at the support's
/// minimal separation, plus I_1 and I_2 per modality at that separation.
/// Missing entries raise DependencyError naming the gap.
BasinCertificate compute_constants(const CoherenceTable& table, const LipschitzEstimates& lip,
                                   const SupportSpec& support, const Vector& theta_star,
                                   const Vector& eta_star, const CertificateOptions& opts = {});

/// (c- - r*) / q* when r* < c-, else 0.
double admissible_radius(double c_minus, double r_star, double q_star);

struct ConvexityPair {
  double xi = 0.0;
  double gamma = 0.0;
};

/// xi = c- - r* - q* eps, gamma = c+ + r* + q* eps. Throws FeasibilityError for
/// an infeasible certificate, OutOfBasinError when eps >= epsilon_0 and
/// InputError for negative eps.
ConvexityPair convexity_pair(const BasinCertificate& cert, double epsilon);

/// Hash of the Lipschitz estimates as recorded in certificates.
std::string lipschitz_hash(const LipschitzEstimates& lip);
nlohmann::json to_json(const LipschitzEstimates& lip);

}  // namespace psfunmix
