#include "psfunmix/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"

namespace psfunmix {

nlohmann::json to_json(const LipschitzEstimates& lip) {
  return {{"C_Delta", lip.C_Delta},
          {"K", lip.K},
          {"C_Delta_raw", lip.C_Delta_raw},
          {"K_raw", lip.K_raw},
          {"safety_factor", lip.safety_factor},
          {"samples", lip.samples},
          {"partner_samples", lip.partner_samples},
          {"Delta", lip.Delta},
          {"kind", "sampled finite-difference estimate"}};
}

std::string lipschitz_hash(const LipschitzEstimates& lip) {
  return hex64(fnv1a64(to_json(lip).dump()));
}

nlohmann::json BasinCertificate::to_json() const {
  return {{"c_minus", c_minus},
          {"c_plus", c_plus},
          {"r_star", r_star},
          {"q_star", q_star},
          {"feasible", feasible},
          {"epsilon_0", epsilon_0},
          {"Delta", Delta},
          {"eta_mins", eta_mins},
          {"eta_maxs", eta_maxs},
          {"provenance",
           {{"r_star_grouping", alternative_grouping ? "alternative: unweighted term at j = i"
                                                     : "full bracket summed over j"},
            {"coherence_table_fnv1a", table_hash},
            {"lipschitz_fnv1a", lipschitz_hash},
            {"lipschitz", psfunmix::to_json(lipschitz)}}}};
}

double admissible_radius(double c_minus, double r_star, double q_star) {
  if (!(r_star < c_minus)) return 0.0;
  return q_star > 0.0 ? (c_minus - r_star) / q_star : std::numeric_limits<double>::infinity();
}

BasinCertificate compute_constants(const CoherenceTable& table, const LipschitzEstimates& lip,
                                   const SupportSpec& support, const Vector& theta_star,
                                   const Vector& eta_star, const CertificateOptions& opts) {
  const int p = support.modalities();
  if (theta_star.size() != p) throw InputError("theta* length must equal the number of modalities");
  if (eta_star.size() != support.total_spikes()) {
    throw InputError("eta* length must equal the total number of spikes");
  }
  const Separation sep = min_separation(support);
  if (sep.undefined) {
    throw InputError("certificate needs at least two spikes to define a separation");
  }
  const double D = sep.delta;

  BasinCertificate cert;
  cert.Delta = D;
  cert.alternative_grouping = opts.alternative_grouping;
  cert.lipschitz = lip;
  cert.table_hash = hex64(fnv1a64(table.coherence_csv() + table.interference_csv()));
  cert.lipschitz_hash = lipschitz_hash(lip);

  for (int i = 0; i < p; ++i) {
    const auto e = eta_star.segment(support.offset(i), support.spikes(i)).cwiseAbs();
    cert.eta_mins.push_back(e.minCoeff());
    cert.eta_maxs.push_back(e.maxCoeff());
  }

  cert.c_minus = std::numeric_limits<double>::infinity();
  cert.c_plus = 0.0;
  for (int i = 0; i < p; ++i) {
    const double mu11 = table.mu(1, 1, i, i, 0.0);
    const double mu00 = table.mu(0, 0, i, i, 0.0);
    const double lo = cert.eta_mins[i] * cert.eta_mins[i] * mu11;
    const double hi = cert.eta_maxs[i] * cert.eta_maxs[i] * mu11;
    cert.c_minus = std::min(cert.c_minus, 0.5 * std::min(lo, mu00));
    cert.c_plus = std::max(cert.c_plus, 1.5 * std::max(hi, mu00));
  }

  cert.r_star = 0.0;
  for (int i = 0; i < p; ++i) {
    double first = 0.0;
    double second = 0.0;
    if (!opts.alternative_grouping) {
      for (int j = 0; j < p; ++j) {
        first += cert.eta_maxs[j] * table.C(0, 1, i, j, D) + table.C(0, 0, i, j, D);
        second += cert.eta_maxs[j] * table.C(1, 1, i, j, D) + table.C(1, 0, i, j, D);
      }
      second *= cert.eta_maxs[i];
    } else {
      for (int j = 0; j < p; ++j) {
        first += cert.eta_maxs[j] * table.C(0, 1, i, j, D);
        second += cert.eta_maxs[j] * table.C(1, 1, i, j, D);
      }
      first += table.C(0, 0, i, i, D);
      second = cert.eta_maxs[i] * second + table.C(1, 0, i, i, D);
    }
    cert.r_star = std::max({cert.r_star, first, second});
  }

  const double eta_inf = eta_star.cwiseAbs().maxCoeff();
  double q_local = 0.0;
  for (int i = 0; i < p; ++i) {
    const double l1 = eta_star.segment(support.offset(i), support.spikes(i)).cwiseAbs().sum();
    q_local = std::max(q_local, l1 * table.I(2, i, D) + support.spikes(i) * table.I(1, i, D));
  }
  cert.q_star =
      q_local + lip.K * eta_inf + 4.0 * p * lip.C_Delta * std::max(1.0, eta_inf * eta_inf);

  cert.feasible = cert.r_star < cert.c_minus;
  cert.epsilon_0 = admissible_radius(cert.c_minus, cert.r_star, cert.q_star);
  return cert;
}

ConvexityPair convexity_pair(const BasinCertificate& cert, double epsilon) {
  if (!cert.feasible) {
    throw FeasibilityError("certificate is infeasible (r* >= c-); no admissible radius");
  }
  if (!(epsilon >= 0.0)) throw InputError("epsilon must be non-negative");
  if (epsilon >= cert.epsilon_0) {
    throw OutOfBasinError("epsilon " + format_double(epsilon) + " is not below epsilon_0 " +
                          format_double(cert.epsilon_0));
  }
  return {cert.c_minus - cert.r_star - cert.q_star * epsilon,
          cert.c_plus + cert.r_star + cert.q_star * epsilon};
}

}  // namespace psfunmix
