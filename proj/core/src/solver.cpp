#include "psfunmix/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"

namespace psfunmix {

namespace {

std::vector<Interval> resolve_bounds(const LossProblem& problem, const SolveConfig& config) {
  const int p = problem.modalities();
  if (config.theta_bounds.empty()) {
    return std::vector<Interval>(p, problem.family().theta_domain());
  }
  if (static_cast<int>(config.theta_bounds.size()) != p) {
    throw InputError("theta_bounds needs one interval per modality");
  }
  const Interval& dom = problem.family().theta_domain();
  for (const auto& b : config.theta_bounds) {
    if (!(b.lo <= b.hi) || b.lo < dom.lo || b.hi > dom.hi) {
      throw InputError("theta_bounds must lie inside the family domain");
    }
  }
  return config.theta_bounds;
}

void clamp_theta(Vector& x, const std::vector<Interval>& bounds) {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = bounds[i].clamp(x[static_cast<Eigen::Index>(i)]);
  }
}

struct Evaluation {
  double loss = 0.0;
  Vector grad;
  Matrix E;
};

Evaluation evaluate_gn(const LossProblem& problem, const Vector& x) {
  const MixtureParams params = problem.unpack(x);
  const SupportSpec& support = problem.support();
  const int p = support.modalities();
  const int L = support.total_spikes();
  const DictionaryStack dict = problem.dictionary(params.theta, 1);
  const Vector r = dict.G[0] * params.eta - problem.target();
  Matrix J(dict.rows(), p + L);
  for (int i = 0; i < p; ++i) J.col(i) = dict.view(1, i) * params.eta_of(support, i);
  J.rightCols(L) = dict.G[0];
  Evaluation ev;
  ev.loss = 0.5 * r.squaredNorm();
  ev.grad = J.transpose() * r;
  ev.E = J.transpose() * J;
  return ev;
}

}  // namespace

std::string SolveReport::trace_csv(int modalities) const {
  std::vector<std::string> header{"iter", "loss", "grad_norm"};
  const int dim = param_trace.empty() ? 0 : static_cast<int>(param_trace.front().size());
  for (int i = 0; i < modalities; ++i) header.push_back("theta_" + std::to_string(i + 1));
  for (int k = 0; k < dim - modalities; ++k) header.push_back("eta_" + std::to_string(k + 1));
  CsvBuilder csv(header);
  for (std::size_t it = 0; it < loss_trace.size(); ++it) {
    std::vector<std::string> cells{std::to_string(it), format_double(loss_trace[it]),
                                   format_double(grad_trace[it])};
    for (int k = 0; k < dim; ++k) {
      cells.push_back(it < param_trace.size() ? format_double(param_trace[it][k]) : "");
    }
    csv.row(cells);
  }
  return csv.str();
}

nlohmann::json SolveReport::to_json() const {
  nlohmann::json j{{"converged", converged},
                   {"iterations", iterations},
                   {"final_loss", loss_trace.empty() ? 0.0 : loss_trace.back()},
                   {"grad_norm", grad_norm},
                   {"stop_reason", stop_reason},
                   {"theta", std::vector<double>(params.theta.begin(), params.theta.end())},
                   {"eta", std::vector<double>(params.eta.begin(), params.eta.end())}};
  if (theta_error) j["theta_error_inf"] = *theta_error;
  if (eta_error) j["eta_error_inf"] = *eta_error;
  return j;
}

bool theta_recovered(const Vector& theta, const Vector& theta_star, double rel_tol) {
  if (theta.size() != theta_star.size()) throw InputError("theta length mismatch");
  return (theta - theta_star).cwiseAbs().maxCoeff() <= rel_tol * theta_star.cwiseAbs().maxCoeff();
}

SolveReport solve(const LossProblem& problem, const MixtureParams& init, const SolveConfig& config,
                  const BasinCertificate* cert, const MixtureParams* truth) {
  problem.check(init);
  if (config.max_iters < 0) throw InputError("max_iters must be non-negative");
  if (!(config.grad_tol > 0.0)) throw InputError("grad_tol must be positive");
  const auto bounds = resolve_bounds(problem, config);
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (!bounds[i].contains(init.theta[static_cast<Eigen::Index>(i)])) {
      throw InputError("initial theta lies outside the bounds");
    }
  }
  const int n = problem.dimension();

  Vector x = problem.pack(init);
  Evaluation ev = evaluate_gn(problem, x);
  if (!std::isfinite(ev.loss)) throw InputError("loss is not finite at the initialization");
  const double initial_loss = ev.loss;

  SolveReport rep;
  auto record = [&](const Evaluation& e, const Vector& at) {
    rep.loss_trace.push_back(e.loss);
    rep.grad_trace.push_back(e.grad.cwiseAbs().maxCoeff());
    if (config.record_params) rep.param_trace.push_back(at);
  };
  record(ev, x);

  auto finish = [&](bool converged, std::string reason) {
    rep.params = problem.unpack(x);
    rep.converged = converged;
    rep.grad_norm = ev.grad.cwiseAbs().maxCoeff();
    rep.stop_reason = std::move(reason);
    if (truth) {
      rep.theta_error = (rep.params.theta - truth->theta).cwiseAbs().maxCoeff();
      rep.eta_error = (rep.params.eta - truth->eta).cwiseAbs().maxCoeff();
    }
    return rep;
  };
  auto diverged = [&](double loss) {
    return !std::isfinite(loss) ||
           (initial_loss > 0.0 && loss > config.divergence_factor * initial_loss);
  };

  if (rep.grad_trace.back() < config.grad_tol || ev.loss == 0.0) {
    return finish(rep.grad_trace.back() < config.grad_tol, "initial point stationary");
  }

  if (config.method == SolveMethod::GradientDescent) {
    double step = 0.0;
    if (config.step) {
      step = *config.step;
    } else if (cert) {
      double eps = 0.0;
      if (truth) {
        eps = std::max((init.theta - truth->theta).cwiseAbs().maxCoeff(),
                       (init.eta - truth->eta).cwiseAbs().maxCoeff());
      }
      step = 1.0 / convexity_pair(*cert, eps).gamma;
    } else {
      step = 1.0 / extreme_eigenvalues(hessian(problem, init).H).lambda_max;
    }
    if (!(step > 0.0) || !std::isfinite(step)) throw InputError("gradient step must be positive");
    for (int it = 1; it <= config.max_iters; ++it) {
      Vector next = x - step * ev.grad;
      clamp_theta(next, bounds);
      Evaluation ne = evaluate_gn(problem, next);
      const double prev_loss = ev.loss;
      x = next;
      ev = std::move(ne);
      record(ev, x);
      rep.iterations = it;
      if (diverged(ev.loss)) throw DivergenceError("gradient descent diverged", rep.loss_trace);
      if (rep.grad_trace.back() < config.grad_tol) return finish(true, "gradient tolerance");
      if (std::abs(prev_loss - ev.loss) <= config.step_tol * std::max(prev_loss, 1e-300)) {
        return finish(false, "loss stalled");
      }
    }
    return finish(false, "iteration limit");
  }

  double lambda = 0.0;
  if (config.lm_damping_init) {
    lambda = *config.lm_damping_init;
  } else if (config.lm_scaling == DampingScaling::Marquardt) {
    lambda = 1e-3;
  } else {
    lambda = 1e-3 * ev.E.trace() / n;
  }
  if (!(lambda >= 0.0)) throw InputError("LM damping must be non-negative");

  for (int it = 1; it <= config.max_iters; ++it) {
    bool accepted = false;
    for (int attempt = 0; attempt < 60 && !accepted; ++attempt) {
      Matrix A = ev.E;
      if (config.lm_scaling == DampingScaling::Marquardt) {
        A.diagonal() += lambda * ev.E.diagonal().cwiseMax(1e-300);
      } else {
        A.diagonal().array() += lambda;
      }
      // Jacobi-equilibrated solve: the theta and eta columns differ by many
      // orders of magnitude.
      const Vector s = A.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
      const Matrix As = s.asDiagonal() * A * s.asDiagonal();
      Eigen::LDLT<Matrix> ldlt(As);
      Vector dx;
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        dx = -(s.asDiagonal() * ldlt.solve(s.asDiagonal() * ev.grad)).eval();
      } else {
        dx = -(s.asDiagonal() *
               As.completeOrthogonalDecomposition().solve(s.asDiagonal() * ev.grad))
                  .eval();
      }
      Vector next = x + dx;
      clamp_theta(next, bounds);
      if (!next.allFinite()) {
        lambda = lambda == 0.0 ? 1e-3 : lambda * 3.0;
        continue;
      }
      Evaluation ne = evaluate_gn(problem, next);
      if (std::isfinite(ne.loss) && ne.loss <= ev.loss) {
        const double change =
            ((next - x).cwiseAbs().array() / (x.cwiseAbs().array() + 1e-300)).maxCoeff();
        x = next;
        ev = std::move(ne);
        lambda /= 2.0;
        accepted = true;
        record(ev, x);
        rep.iterations = it;
        if (rep.grad_trace.back() < config.grad_tol) return finish(true, "gradient tolerance");
        if (ev.loss == 0.0) return finish(rep.grad_trace.back() < config.grad_tol, "zero loss");
        if (change <= config.step_tol) {
          return finish(rep.grad_trace.back() < config.grad_tol, "step tolerance");
        }
      } else {
        if (diverged(ne.loss)) {
          auto trace = rep.loss_trace;
          trace.push_back(ne.loss);
          throw DivergenceError("Levenberg-Marquardt diverged", trace);
        }
        lambda = lambda == 0.0 ? 1e-3 : lambda * 3.0;
      }
    }
    if (!accepted) return finish(rep.grad_trace.back() < config.grad_tol, "damping exhausted");
  }
  return finish(rep.grad_trace.back() < config.grad_tol, "iteration limit");
}

Vector solve_eta_linear(const Matrix& G, const Vector& x, double max_condition) {
  if (G.rows() != x.size()) throw InputError("dictionary rows must match the signal length");
  if (G.cols() == 0) return Vector();
  if (G.rows() < G.cols()) {
    throw ConditioningError("underdetermined system: more columns than rows", 0, 1);
  }
  // Column scaling keeps the conditioning test about geometry, not units.
  const Vector norms = G.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < norms.size(); ++k) {
    if (!(norms[k] > 0.0)) {
      throw ConditioningError("dictionary column " + std::to_string(k) + " is zero",
                              static_cast<int>(k), static_cast<int>(k));
    }
  }
  const Matrix Gs = G * norms.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Matrix> qr(Gs);
  const auto Rdiag = qr.matrixQR().diagonal().cwiseAbs();
  const double cond_est = Rdiag.maxCoeff() / std::max(Rdiag.minCoeff(), 1e-300);
  if (cond_est > max_condition) {
    // identify the most nearly dependent pair via the Gram matrix
    const Matrix gram = Gs.transpose() * Gs;
    int bi = 0;
    int bj = 1;
    double best = -1.0;
    for (Eigen::Index i = 0; i < gram.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < gram.cols(); ++j) {
        if (std::abs(gram(i, j)) > best) {
          best = std::abs(gram(i, j));
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    throw ConditioningError("dictionary is numerically rank deficient (condition estimate " +
                                format_double(cond_est) + ")",
                            bi, bj);
  }
  const Vector y = qr.solve(x);
  return norms.cwiseInverse().asDiagonal() * y;
}

Vector solve_eta_linear(const DictionaryStack& dict, const SupportSpec& support, const Vector& x,
                        double max_condition) {
  try {
    return solve_eta_linear(dict.G[0], x, max_condition);
  } catch (const ConditioningError& e) {
    throw ConditioningError(std::string(e.what()) + " between modalities " +
                                std::to_string(support.modality_of_column(e.first())) + " and " +
                                std::to_string(support.modality_of_column(e.second())),
                            support.modality_of_column(e.first()),
                            support.modality_of_column(e.second()));
  }
}

}  // namespace psfunmix
