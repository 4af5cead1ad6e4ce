#include "psfunmix/hessian.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "psfunmix/errors.hpp"

namespace psfunmix {

LossProblem::LossProblem(KernelFamily family, SamplingGrid grid, SupportSpec support,
                         Vector target, Vector row_scale)
    : family_(std::move(family)),
      grid_(std::move(grid)),
      support_(std::move(support)),
      target_(std::move(target)),
      row_scale_(std::move(row_scale)) {
  if (target_.size() != grid_.N) throw InputError("target length must equal grid size N");
  if (row_scale_.size() != 0 && row_scale_.size() != grid_.N) {
    throw InputError("row scale length must equal grid size N");
  }
  if (!target_.allFinite()) throw InputError("target contains non-finite values");
}

DictionaryStack LossProblem::dictionary(const Vector& theta, int max_order) const {
  DictionaryStack dict = build_dictionary(family_, grid_, support_, theta, max_order);
  if (row_scale_.size() != 0) {
    for (int a = 0; a <= max_order; ++a) dict.G[a] = row_scale_.asDiagonal() * dict.G[a];
  }
  return dict;
}

void LossProblem::check(const MixtureParams& params) const {
  if (params.theta.size() != support_.modalities()) {
    throw InputError("theta length must equal the number of modalities");
  }
  if (params.eta.size() != support_.total_spikes()) {
    throw InputError("eta length must equal the total number of spikes");
  }
}

Vector LossProblem::residual(const MixtureParams& params) const {
  check(params);
  const DictionaryStack dict = dictionary(params.theta, 0);
  return dict.G[0] * params.eta - target_;
}

double LossProblem::loss(const MixtureParams& params) const {
  return 0.5 * residual(params).squaredNorm();
}

Vector LossProblem::gradient(const MixtureParams& params) const {
  check(params);
  const DictionaryStack dict = dictionary(params.theta, 1);
  const Vector r = dict.G[0] * params.eta - target_;
  const int p = support_.modalities();
  Vector g(dimension());
  for (int i = 0; i < p; ++i) {
    g[i] = r.dot(dict.view(1, i) * params.eta_of(support_, i));
  }
  g.tail(support_.total_spikes()) = dict.G[0].transpose() * r;
  return g;
}

Vector LossProblem::pack(const MixtureParams& params) const {
  check(params);
  Vector x(dimension());
  x << params.theta, params.eta;
  return x;
}

MixtureParams LossProblem::unpack(const Vector& x) const {
  if (x.size() != dimension()) throw InputError("packed parameter length mismatch");
  const int p = support_.modalities();
  return {x.head(p), x.tail(support_.total_spikes())};
}

HessianBlocks hessian(const LossProblem& problem, const MixtureParams& params) {
  problem.check(params);
  const SupportSpec& support = problem.support();
  const int p = support.modalities();
  const int L = support.total_spikes();
  const int n = p + L;
  const DictionaryStack dict = problem.dictionary(params.theta, 2);

  HessianBlocks out;
  out.residual = dict.G[0] * params.eta - problem.target();
  const Vector& r = out.residual;

  out.J.resize(dict.rows(), n);
  for (int i = 0; i < p; ++i) out.J.col(i) = dict.view(1, i) * params.eta_of(support, i);
  out.J.rightCols(L) = dict.G[0];
  out.E = out.J.transpose() * out.J;

  out.R = Matrix::Zero(n, n);
  for (int i = 0; i < p; ++i) {
    out.R(i, i) = r.dot(dict.view(2, i) * params.eta_of(support, i));
    for (int k = 0; k < support.spikes(i); ++k) {
      const int col = p + support.offset(i) + k;
      const double v = r.dot(dict.G[1].col(support.offset(i) + k));
      out.R(i, col) = v;
      out.R(col, i) = v;
    }
  }
  out.H = out.E + out.R;
  out.D = out.E.diagonal();
  return out;
}

EigenExtremes extreme_eigenvalues(const Matrix& symmetric) {
  if (symmetric.rows() != symmetric.cols() || symmetric.rows() == 0) {
    throw InputError("eigenvalues need a non-empty square matrix");
  }
  const Matrix S = 0.5 * (symmetric + symmetric.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ValidationError("symmetric eigensolver failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

WeylBounds weyl_bounds(const Matrix& H, const Vector& D) {
  if (H.rows() != D.size() || H.cols() != D.size()) {
    throw InputError("diagonal length must match the Hessian");
  }
  const double off = inf_norm(H - Matrix(D.asDiagonal()));
  return {D.minCoeff() - off, D.maxCoeff() + off};
}

WeylBounds weyl_bounds(const HessianBlocks& blocks) { return weyl_bounds(blocks.H, blocks.D); }

bool AuditReport::all_pass() const {
  for (const auto& row : rows) {
    if (!row.pass) return false;
  }
  return true;
}

std::vector<AuditRow> AuditReport::group(const std::string& prefix) const {
  std::vector<AuditRow> out;
  for (const auto& row : rows) {
    if (row.id.rfind(prefix, 0) == 0) out.push_back(row);
  }
  return out;
}

nlohmann::json AuditReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    arr.push_back({{"inequality", row.id},
                   {"lhs", row.lhs},
                   {"rhs", row.rhs},
                   {"slack", row.slack},
                   {"pass", row.pass}});
  }
  return {{"epsilon", epsilon}, {"all_pass", all_pass()}, {"rows", arr}};
}

AuditReport audit_lemmas(const LossProblem& problem, const MixtureParams& params,
                         const CoherenceTable& table, const LipschitzEstimates& lip,
                         const BasinCertificate& cert, double epsilon) {
  const SupportSpec& support = problem.support();
  const int p = support.modalities();
  const double D = cert.Delta;
  AuditReport rep;
  rep.epsilon = epsilon;
  auto add = [&rep](std::string id, double lhs, double rhs) {
    rep.rows.push_back({std::move(id), lhs, rhs, rhs - lhs, lhs <= rhs});
  };

  const HessianBlocks blocks = hessian(problem, params);
  add("bound_D_lower", cert.c_minus, blocks.D.minCoeff());
  add("bound_D_upper", blocks.D.maxCoeff(), cert.c_plus);

  const DictionaryStack dict = problem.dictionary(params.theta, 2);
  for (int a = 0; a <= 2; ++a) {
    for (int i = 0; i < p; ++i) {
      std::ostringstream id;
      id << "bound_G_interference(a=" << a << ",i=" << i << ")";
      add(id.str(), inf_norm(dict.view(a, i)), table.I(a, i, D) + lip.C_Delta * epsilon);
    }
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
          Matrix gram = dict.view(a, i).transpose() * dict.view(b, j);
          if (i == j && a == b) gram.diagonal().setZero();
          std::ostringstream id;
          id << "bound_G_coherence(a=" << a << ",b=" << b << ",i=" << i << ",j=" << j << ")";
          add(id.str(), inf_norm(gram), table.C(a, b, i, j, D) + 2.0 * lip.C_Delta * epsilon);
        }
      }
    }
  }
  add("bound_offdiag", inf_norm(blocks.H - Matrix(blocks.D.asDiagonal())),
      cert.r_star + cert.q_star * epsilon);
  return rep;
}

}  // namespace psfunmix
