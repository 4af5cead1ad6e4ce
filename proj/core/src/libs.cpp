#include "psfunmix/libs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>

#include <Eigen/QR>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"
#include "psfunmix/experiment.hpp"

namespace psfunmix {

LineDatabase::LineDatabase(std::vector<LineModality> modalities)
    : modalities_(std::move(modalities)) {
  if (modalities_.empty()) throw ValidationError("line database has no lines");
  std::set<std::tuple<std::string, std::string, double>> seen;
  for (auto& mod : modalities_) {
    if (mod.lines.empty()) throw ValidationError("modality " + mod.label() + " has no lines");
    std::sort(mod.lines.begin(), mod.lines.end(),
              [](const LineRecord& a, const LineRecord& b) { return a.wavelength_nm < b.wavelength_nm; });
    double total = 0.0;
    for (const auto& rec : mod.lines) {
      if (!seen.insert({rec.species, rec.ion, rec.wavelength_nm}).second) {
        throw ValidationError("duplicate line " + rec.species + " " + rec.ion + " " +
                              format_double(rec.wavelength_nm) + " nm (line " +
                              std::to_string(rec.source_line) + ")");
      }
      total += rec.coeff ? std::abs(*rec.coeff) : rec.strength;
    }
    if (!(total > 0.0)) {
      throw ValidationError("modality " + mod.label() + " is empty: all line strengths are zero");
    }
    if (std::find(species_.begin(), species_.end(), mod.species) == species_.end()) {
      species_.push_back(mod.species);
    }
  }
}

int LineDatabase::total_lines() const {
  int n = 0;
  for (const auto& mod : modalities_) n += static_cast<int>(mod.lines.size());
  return n;
}

SupportSpec LineDatabase::support(double center) const {
  std::vector<std::vector<double>> loc;
  for (const auto& mod : modalities_) {
    std::vector<double> m;
    for (const auto& rec : mod.lines) m.push_back(rec.wavelength_nm - center);
    loc.push_back(std::move(m));
  }
  return SupportSpec(std::move(loc));
}

Matrix LineDatabase::concentration_matrix() const {
  const int q = static_cast<int>(species_.size());
  Matrix A = Matrix::Zero(total_lines(), q);
  std::map<std::string, double> species_total;
  for (const auto& mod : modalities_) {
    for (const auto& rec : mod.lines) species_total[mod.species] += rec.strength;
  }
  int row = 0;
  for (const auto& mod : modalities_) {
    const int col = static_cast<int>(
        std::find(species_.begin(), species_.end(), mod.species) - species_.begin());
    for (const auto& rec : mod.lines) {
      if (rec.coeff) {
        A(row, col) = *rec.coeff;
      } else {
        const double tot = species_total[mod.species];
        A(row, col) = tot > 0.0 ? rec.strength / tot : 0.0;
      }
      ++row;
    }
  }
  return A;
}

LineDatabase parse_lines(std::string_view csv_text) {
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) throw ValidationError("line database has no lines");
  const auto& head = rows.front().cells;
  const std::vector<std::string> base{"species", "ion", "wavelength_nm", "strength"};
  const bool has_coeff = head.size() == 5 && head[4] == "coeff";
  if (head.size() < 4 || !std::equal(base.begin(), base.end(), head.begin()) ||
      (head.size() == 5 && !has_coeff) || head.size() > 5) {
    throw ParseError("expected header species,ion,wavelength_nm,strength[,coeff]",
                     rows.front().line);
  }
  std::vector<LineModality> mods;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (row.cells.size() != head.size()) {
      throw ParseError("expected " + std::to_string(head.size()) + " fields, got " +
                           std::to_string(row.cells.size()),
                       row.line);
    }
    LineRecord rec;
    rec.species = row.cells[0];
    rec.ion = row.cells[1];
    rec.source_line = row.line;
    if (rec.species.empty() || rec.ion.empty()) throw ParseError("empty species or ion", row.line);
    rec.wavelength_nm = parse_double(row.cells[2], row.line);
    rec.strength = parse_double(row.cells[3], row.line);
    if (!(rec.wavelength_nm > 0.0) || !std::isfinite(rec.wavelength_nm)) {
      throw ParseError("wavelength must be positive", row.line);
    }
    if (!(rec.strength >= 0.0) || !std::isfinite(rec.strength)) {
      throw ParseError("strength must be non-negative", row.line);
    }
    if (has_coeff && !row.cells[4].empty()) {
      rec.coeff = parse_double(row.cells[4], row.line);
      if (!(*rec.coeff >= 0.0)) throw ParseError("coeff must be non-negative", row.line);
    }
    auto it = std::find_if(mods.begin(), mods.end(), [&](const LineModality& m) {
      return m.species == rec.species && m.ion == rec.ion;
    });
    if (it == mods.end()) {
      mods.push_back({rec.species, rec.ion, {}});
      it = std::prev(mods.end());
    }
    it->lines.push_back(std::move(rec));
  }
  return LineDatabase(std::move(mods));
}

LineDatabase ingest_lines(const std::filesystem::path& path) { return parse_lines(read_file(path)); }

Vector SpectrumObservation::wavelengths() const {
  return grid.u.array() + center;
}

SpectrumObservation make_observation(const std::vector<double>& wavelengths,
                                     const Vector& intensities, Vector transfer) {
  const auto n = wavelengths.size();
  if (n < 2) throw InputError("spectrum needs at least two samples");
  if (static_cast<std::size_t>(intensities.size()) != n) {
    throw InputError("intensity and wavelength lengths differ");
  }
  const double lo = wavelengths.front();
  const double hi = wavelengths.back();
  if (!(hi > lo)) throw InputError("wavelengths must be increasing");
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t s = 0; s < n; ++s) {
    if (std::abs(wavelengths[s] - (lo + h * static_cast<double>(s))) > 1e-6 * h) {
      throw InputError("wavelength axis must be uniform");
    }
  }
  if (!intensities.allFinite()) throw InputError("intensities must be finite");
  SpectrumObservation obs;
  obs.grid = make_grid(hi - lo, static_cast<int>(n));
  obs.center = 0.5 * (lo + hi);
  obs.x_obs = intensities;
  if (transfer.size() == 0) transfer = Vector::Ones(static_cast<Eigen::Index>(n));
  if (static_cast<std::size_t>(transfer.size()) != n) throw InputError("transfer length mismatch");
  if (!(transfer.minCoeff() > 0.0)) throw InputError("transfer function must be strictly positive");
  obs.transfer = std::move(transfer);
  return obs;
}

SpectrumObservation parse_spectrum(std::string_view csv_text) {
  const auto rows = parse_csv(csv_text);
  if (rows.empty()) throw ParseError("empty spectrum file", 1);
  const auto& head = rows.front().cells;
  const bool with_transfer = head.size() == 3 && head[2] == "transfer";
  if (head.size() < 2 || head[0] != "wavelength_nm" || head[1] != "intensity" ||
      (head.size() == 3 && !with_transfer) || head.size() > 3) {
    throw ParseError("expected header wavelength_nm,intensity[,transfer]", rows.front().line);
  }
  std::vector<double> wl;
  std::vector<double> x;
  std::vector<double> xi;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (row.cells.size() != head.size()) throw ParseError("wrong number of fields", row.line);
    wl.push_back(parse_double(row.cells[0], row.line));
    x.push_back(parse_double(row.cells[1], row.line));
    if (with_transfer) xi.push_back(parse_double(row.cells[2], row.line));
  }
  Vector xv = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
  Vector tv;
  if (with_transfer) tv = Eigen::Map<const Vector>(xi.data(), static_cast<Eigen::Index>(xi.size()));
  return make_observation(wl, xv, tv);
}

SpectrumObservation read_spectrum(const std::filesystem::path& path) {
  return parse_spectrum(read_file(path));
}

std::string spectrum_csv(const SpectrumObservation& obs) {
  CsvBuilder csv({"wavelength_nm", "intensity", "transfer"});
  const Vector wl = obs.wavelengths();
  for (Eigen::Index s = 0; s < wl.size(); ++s) {
    csv.row(std::vector<double>{wl[s], obs.x_obs[s], obs.transfer[s]});
  }
  return csv.str();
}

Vector estimate_baseline(const Vector& x_obs, const Vector& transfer, const BaselineOptions& opts) {
  const Eigen::Index n = x_obs.size();
  if (transfer.size() != n) throw InputError("transfer length must match the spectrum");
  if (n > 0 && !(transfer.minCoeff() > 0.0)) {
    throw InputError("transfer function must be strictly positive");
  }
  if (!(opts.asymmetry > 0.0 && opts.asymmetry < 1.0) || !(opts.smoothness > 0.0) ||
      opts.iterations < 1) {
    throw InputError("invalid baseline options");
  }
  const Vector y = x_obs.cwiseQuotient(transfer);
  if (n < 3) return y;

  using Sparse = Eigen::SparseMatrix<double>;
  // lambda * D^T D for the second-difference operator D ((n-2) x n)
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 5);
  for (Eigen::Index k = 0; k + 2 < n; ++k) {
    const Eigen::Index idx[3] = {k, k + 1, k + 2};
    const double c[3] = {1.0, -2.0, 1.0};
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) trip.emplace_back(idx[a], idx[b], opts.smoothness * c[a] * c[b]);
    }
  }
  Sparse P(n, n);
  P.setFromTriplets(trip.begin(), trip.end());

  Vector w = Vector::Ones(n);
  Vector z = y;
  Eigen::SimplicialLDLT<Sparse> solver;
  for (int it = 0; it < opts.iterations; ++it) {
    Sparse A = P;
    for (Eigen::Index k = 0; k < n; ++k) A.coeffRef(k, k) += w[k];
    if (it == 0) solver.analyzePattern(A);
    solver.factorize(A);
    if (solver.info() != Eigen::Success) throw ValidationError("baseline system factorisation failed");
    z = solver.solve(w.cwiseProduct(y));
    for (Eigen::Index k = 0; k < n; ++k) {
      w[k] = y[k] > z[k] ? opts.asymmetry : 1.0 - opts.asymmetry;
    }
  }
  return z;
}

void preprocess(SpectrumObservation& obs, const BaselineOptions& opts) {
  obs.baseline = estimate_baseline(obs.x_obs, obs.transfer, opts);
  obs.x_tilde = obs.x_obs - obs.transfer.cwiseProduct(obs.baseline);
}

nlohmann::json LibsFit::to_json() const {
  nlohmann::json j = report.to_json();
  j["negative_eta"] = negative_eta;
  j["residual_norm"] = residual_norm;
  j["relative_fit_error"] = relative_fit_error;
  j["init_theta"] = std::vector<double>(init.theta.begin(), init.theta.end());
  return j;
}

MixtureParams initialize_by_scan(const LossProblem& problem, const FitOptions& opts) {
  const double h = problem.grid().spacing();
  const Interval& dom = problem.family().theta_domain();
  const double lo = dom.clamp(opts.scan_lo > 0.0 ? opts.scan_lo : h);
  const double hi = dom.clamp(opts.scan_hi > 0.0 ? opts.scan_hi : 100.0 * h);
  const auto candidates = log_spaced(lo, hi, std::max(2, opts.scan_points));
  const int p = problem.modalities();

  MixtureParams params;
  params.theta = Vector::Constant(p, std::sqrt(lo * hi));
  auto fit_eta = [&](const Vector& theta, double& res) {
    const DictionaryStack dict = problem.dictionary(theta, 0);
    Vector eta;
    try {
      eta = solve_eta_linear(dict.G[0], problem.target());
    } catch (const ConditioningError&) {
      res = std::numeric_limits<double>::infinity();
      return Vector(Vector::Zero(dict.cols()));
    }
    res = (dict.G[0] * eta - problem.target()).squaredNorm();
    return eta;
  };
  for (int sweep = 0; sweep < std::max(1, opts.scan_sweeps); ++sweep) {
    for (int i = 0; i < p; ++i) {
      double best = std::numeric_limits<double>::infinity();
      double best_theta = params.theta[i];
      for (double c : candidates) {
        Vector th = params.theta;
        th[i] = c;
        double res = 0.0;
        fit_eta(th, res);
        if (res < best) {
          best = res;
          best_theta = c;
        }
      }
      params.theta[i] = best_theta;
    }
  }
  double res = 0.0;
  params.eta = fit_eta(params.theta, res);
  return params;
}

LibsFit fit_spectrum(const LineDatabase& db, const SpectrumObservation& obs,
                     const KernelFamily& family, const std::optional<MixtureParams>& init,
                     const FitOptions& opts) {
  if (obs.x_tilde.size() != obs.grid.N) {
    throw DependencyError("spectrum must be preprocessed (baseline removed) before fitting");
  }
  LibsFit fit;
  fit.support = db.support(obs.center);
  const LossProblem problem(family, obs.grid, fit.support, obs.x_tilde, obs.transfer);
  fit.init = init ? *init : initialize_by_scan(problem, opts);
  fit.report = solve(problem, fit.init, opts.solver);
  for (Eigen::Index k = 0; k < fit.report.params.eta.size(); ++k) {
    if (fit.report.params.eta[k] < 0.0) fit.negative_eta.push_back(static_cast<int>(k));
  }
  const DictionaryStack dict = problem.dictionary(fit.report.params.theta, 0);
  fit.fitted = dict.G[0] * fit.report.params.eta;
  fit.residual_norm = (fit.fitted - obs.x_tilde).norm();
  const double ref = obs.x_tilde.norm();
  fit.relative_fit_error = ref > 0.0 ? fit.residual_norm / ref : 0.0;
  return fit;
}

Vector estimate_concentrations(const Matrix& A, const Vector& eta_hat) {
  if (A.rows() != eta_hat.size()) throw InputError("A rows must match the amplitude count");
  Vector nu = solve_eta_linear(A, eta_hat);
  return nu.cwiseMax(0.0);
}

SyntheticSpectrum synthesize_spectrum(const LineDatabase& db, const KernelFamily& family,
                                      const SyntheticSpectrumOptions& opts) {
  if (!(opts.wavelength_hi > opts.wavelength_lo) || opts.N < 2) {
    throw InputError("invalid synthetic wavelength window");
  }
  const int p = static_cast<int>(db.modalities().size());
  if (opts.theta.size() != p) throw InputError("theta needs one entry per (species, ion) pair");
  const Matrix A = db.concentration_matrix();
  if (opts.nu.size() != A.cols()) throw InputError("nu needs one entry per species");

  SyntheticSpectrum out;
  SpectrumObservation& obs = out.obs;
  obs.grid = make_grid(opts.wavelength_hi - opts.wavelength_lo, opts.N);
  obs.center = 0.5 * (opts.wavelength_lo + opts.wavelength_hi);
  const Vector u = obs.grid.u;
  const double T = obs.grid.T;
  obs.transfer = (opts.transfer_lo + (opts.transfer_hi - opts.transfer_lo) *
                                         ((u.array() + 0.5 * T) / T)).matrix();
  if (!(obs.transfer.minCoeff() > 0.0)) throw InputError("transfer function must be positive");

  const SupportSpec support = db.support(obs.center);
  out.truth.theta = opts.theta;
  out.truth.eta = A * opts.nu;
  const DictionaryStack dict = build_dictionary(family, obs.grid, support, opts.theta, 0);
  out.clean = synthesize(dict, out.truth.eta);
  out.baseline = (opts.baseline_intercept + opts.baseline_slope * u.array()).matrix();
  const Vector peaks = obs.transfer.cwiseProduct(out.clean);
  obs.x_obs = obs.transfer.cwiseProduct(out.clean + out.baseline);

  if (std::isfinite(opts.snr_db)) {
    const double rms = std::sqrt(peaks.squaredNorm() / static_cast<double>(peaks.size()));
    out.noise_sigma = rms / std::pow(10.0, opts.snr_db / 20.0);
    std::seed_seq seq{static_cast<std::uint32_t>(opts.seed),
                      static_cast<std::uint32_t>(opts.seed >> 32), 0x11b5u};
    std::mt19937_64 rng(seq);
    for (Eigen::Index s = 0; s < obs.x_obs.size(); ++s) {
      // chi-square with 2 degrees of freedom is exponential with mean 2
      const double u01 = std::generate_canonical<double, 53>(rng);
      const double chi2 = -2.0 * std::log1p(-u01);
      obs.x_obs[s] += out.noise_sigma * (chi2 - 2.0) / 2.0;
    }
  }
  return out;
}

}  // namespace psfunmix
