#include "run.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "psfunmix/config.hpp"
#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"

#ifndef PSFUNMIX_VERSION
#define PSFUNMIX_VERSION "unknown"
#endif

namespace psfunmix::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::string out_dir = ".";
  bool require_feasible = false;
};

/// Collects outputs and writes them with the manifest at the end of a run.
class Outputs {
 public:
  Outputs(fs::path dir, std::ostream& log) : dir_(std::move(dir)), log_(log) {}

  void write(const std::string& name, const std::string& content) {
    write_atomic(dir_ / name, content);
    files_[name] = hex64(fnv1a64(content));
    log_ << "wrote " << (dir_ / name).string() << "\n";
  }

  void manifest(const std::string& command, const std::vector<std::string>& args,
                const RunConfig* cfg, std::uint64_t seed, int threads) {
    json m;
    m["command"] = command;
    m["argv"] = args;
    m["version"] = PSFUNMIX_VERSION;
#if defined(__clang__)
    m["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    m["compiler"] = std::string("gcc ") + __VERSION__;
#endif
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
    m["seed"] = seed;
    m["threads"] = threads;
    if (cfg) {
      m["config_hash"] = hex64(cfg->hash());
      m["config"] = cfg->source;
    }
    m["outputs"] = files_;
    write_atomic(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  fs::path dir_;
  std::ostream& log_;
  std::map<std::string, std::string> files_;
};

std::string delta_tag(double Delta) { return format_double(Delta); }

fs::path resolve(const std::string& path, const std::string& config_path) {
  const fs::path p(path);
  if (p.is_absolute() || config_path.empty()) return p;
  return fs::path(config_path).parent_path() / p;
}

json vec(const Vector& v) { return std::vector<double>(v.begin(), v.end()); }

std::string metrics_wide_csv(const CoherenceTable& table, const std::vector<double>& deltas,
                             int p) {
  std::vector<std::string> header{"Delta"};
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
          header.push_back("C" + std::to_string(a) + std::to_string(b) + "_" +
                           std::to_string(i + 1) + std::to_string(j + 1));
        }
      }
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int i = 0; i < p; ++i) header.push_back("I" + std::to_string(a) + "_" + std::to_string(i + 1));
  }
  CsvBuilder csv(header);
  for (double D : deltas) {
    std::vector<double> row{D};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        for (int i = 0; i < p; ++i) {
          for (int j = 0; j < p; ++j) row.push_back(table.C(a, b, i, j, D));
        }
      }
    }
    for (int a = 0; a < 3; ++a) {
      for (int i = 0; i < p; ++i) row.push_back(table.I(a, i, D));
    }
    csv.row(row);
  }
  return csv.str();
}

CertifyOptions certify_options(const RunConfig& cfg, int threads) {
  CertifyOptions o = cfg.certify;
  o.threads = threads;
  return o;
}

int cmd_certify(const RunConfig& cfg, const Globals& g, int threads, Outputs& out,
                std::ostream& log) {
  bool all_feasible = true;
  for (double D : cfg.delta_list()) {
    const ExperimentSetup setup = cfg.setup_at(D);
    const CertificationResult res = certify(setup, certify_options(cfg, threads));
    const auto& cert = res.certificate;
    const AuditReport audit =
        audit_lemmas(setup.problem(), setup.truth, res.table, res.lipschitz, cert, 0.0);
    json report = cert.to_json();
    report["audit_at_truth"] = audit.to_json();
    out.write("certificate_" + delta_tag(D) + ".json", report.dump(2) + "\n");
    out.write("coherence_" + delta_tag(D) + ".csv", res.table.coherence_csv());
    log << "Delta=" << delta_tag(D) << " feasible=" << (cert.feasible ? "yes" : "no")
        << " c-=" << format_double(cert.c_minus) << " r*=" << format_double(cert.r_star)
        << " epsilon0=" << format_double(cert.epsilon_0) << "\n";
    all_feasible = all_feasible && cert.feasible;
  }
  if (g.require_feasible && !all_feasible) {
    throw FeasibilityError("certificate infeasible (r* >= c-) and --require-feasible is set");
  }
  return kExitOk;
}

int cmd_metrics(const RunConfig& cfg, int threads, Outputs& out) {
  const ExperimentSetup setup = cfg.setup();
  std::vector<double> deltas = cfg.delta_list();
  std::sort(deltas.begin(), deltas.end());
  const CoherenceTable table = build_coherence_table(setup.family, setup.grid, setup.truth.theta,
                                                     deltas, cfg.certify.metrics, threads);
  out.write("metrics.csv", metrics_wide_csv(table, deltas, setup.support.modalities()));
  out.write("coherence.csv", table.coherence_csv());
  out.write("interference.csv", table.interference_csv());
  out.write("metrics.plot", plot_spec("metrics"));
  return kExitOk;
}

int cmd_solve(const RunConfig& cfg, const std::vector<double>& init_theta, Outputs& out,
              std::ostream& log) {
  const ExperimentSetup setup = cfg.setup();
  MixtureParams init = setup.truth;
  if (!init_theta.empty()) {
    if (static_cast<Eigen::Index>(init_theta.size()) != init.theta.size()) {
      throw ValidationError("--init needs one value per modality");
    }
    for (std::size_t i = 0; i < init_theta.size(); ++i) init.theta[i] = init_theta[i];
  } else {
    init.theta *= 1.05;
  }
  SolveReport rep;
  try {
    rep = solve(setup.problem(), init, cfg.solver, nullptr, &setup.truth);
  } catch (const DivergenceError& e) {
    CsvBuilder csv({"iter", "loss"});
    for (std::size_t k = 0; k < e.trace().size(); ++k) {
      csv.row(std::vector<double>{static_cast<double>(k), e.trace()[k]});
    }
    out.write("trace.csv", csv.str());
    throw;
  }
  json j = rep.to_json();
  j["init_theta"] = vec(init.theta);
  out.write("solve_report.json", j.dump(2) + "\n");
  out.write("trace.csv", rep.trace_csv(setup.support.modalities()));
  log << "converged=" << (rep.converged ? "yes" : "no") << " iterations=" << rep.iterations
      << " stop=" << rep.stop_reason << "\n";
  return kExitOk;
}

int cmd_landscape(const RunConfig& cfg, bool with_certificate, int threads, Outputs& out) {
  LandscapeOptions lo = cfg.landscape;
  lo.threads = threads;
  for (double D : cfg.delta_list()) {
    const ExperimentSetup setup = cfg.setup_at(D);
    std::optional<BasinCertificate> cert;
    if (with_certificate) {
      cert = certify(setup, certify_options(cfg, threads)).certificate;
      out.write("certificate_" + delta_tag(D) + ".json", cert->to_json().dump(2) + "\n");
    }
    const Landscape land = landscape(setup, lo, cert ? &*cert : nullptr);
    out.write("landscape_" + delta_tag(D) + ".csv", land.csv());
  }
  out.write("landscape.plot", plot_spec("landscape"));
  return kExitOk;
}

int cmd_montecarlo(const RunConfig& cfg, const Globals& g, bool with_certificate,
                   std::uint64_t seed, int threads, Outputs& out, std::ostream& log) {
  const ExperimentSetup setup = cfg.setup();
  std::optional<BasinCertificate> cert;
  if (with_certificate) {
    cert = certify(setup, certify_options(cfg, threads)).certificate;
    out.write("certificate.json", cert->to_json().dump(2) + "\n");
    if (g.require_feasible && !cert->feasible) {
      throw FeasibilityError("certificate infeasible (r* >= c-) and --require-feasible is set");
    }
  }
  MonteCarloOptions mo = cfg.montecarlo;
  mo.seed = seed;
  mo.threads = threads;
  const SuccessCurve curve = monte_carlo(setup, mo, cert ? &*cert : nullptr);
  out.write("success_curve.csv", curve.csv());
  out.write("montecarlo.plot", plot_spec("montecarlo"));
  for (const auto& b : curve.bins) {
    log << "d=" << format_double(b.distance) << " rate=" << format_double(b.rate) << "\n";
  }
  return kExitOk;
}

json concentrations_json(const LineDatabase& db, const Vector& nu) {
  json j = json::object();
  for (std::size_t s = 0; s < db.species().size(); ++s) j[db.species()[s]] = nu[static_cast<Eigen::Index>(s)];
  return j;
}

std::string fitted_csv(const SpectrumObservation& obs, const LibsFit& fit) {
  CsvBuilder csv({"wavelength_nm", "intensity", "transfer", "baseline", "preprocessed", "fitted"});
  const Vector wl = obs.wavelengths();
  for (Eigen::Index s = 0; s < wl.size(); ++s) {
    csv.row(std::vector<double>{wl[s], obs.x_obs[s], obs.transfer[s], obs.baseline[s],
                                obs.x_tilde[s], fit.fitted[s]});
  }
  return csv.str();
}

int cmd_libs_fit(const RunConfig& cfg, const Globals& g, std::string spectrum, std::string lines,
                 Outputs& out, std::ostream& log) {
  if (spectrum.empty() && !cfg.libs.spectrum.empty()) {
    spectrum = resolve(cfg.libs.spectrum, g.config).string();
  }
  if (lines.empty() && !cfg.libs.lines.empty()) lines = resolve(cfg.libs.lines, g.config).string();
  if (spectrum.empty() || lines.empty()) {
    throw ValidationError("libs-fit needs --spectrum and --lines (or libs.spectrum, libs.lines)");
  }
  const LineDatabase db = ingest_lines(lines);
  SpectrumObservation obs = read_spectrum(spectrum);
  preprocess(obs, cfg.libs.baseline);
  FitOptions fo = cfg.libs.fit;
  fo.solver = cfg.solver;
  const LibsFit fit = fit_spectrum(db, obs, cfg.kernel(), std::nullopt, fo);
  const Vector nu = estimate_concentrations(db.concentration_matrix(), fit.report.params.eta);

  json j = fit.to_json();
  j["spectrum"] = spectrum;
  j["lines"] = lines;
  j["modalities"] = json::array();
  for (const auto& m : db.modalities()) j["modalities"].push_back(m.label());
  j["theta_nm"] = vec(fit.report.params.theta);
  j["concentrations"] = concentrations_json(db, nu);
  j["nu"] = vec(nu);
  out.write("libs_fit.json", j.dump(2) + "\n");
  out.write("libs_fitted.csv", fitted_csv(obs, fit));
  for (std::size_t s = 0; s < db.species().size(); ++s) {
    log << db.species()[s] << " " << format_double(nu[static_cast<Eigen::Index>(s)]) << "\n";
  }
  log << "relative fit error " << format_double(fit.relative_fit_error) << "\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, const Globals& g, std::string lines, std::uint64_t seed,
              Outputs& out) {
  if (lines.empty() && !cfg.libs.lines.empty()) lines = resolve(cfg.libs.lines, g.config).string();
  if (lines.empty()) throw ValidationError("synth needs --lines (or libs.lines)");
  const LineDatabase db = ingest_lines(lines);
  SyntheticSpectrumOptions so = cfg.libs.synthetic;
  so.seed = seed;
  if (so.theta.size() == 0) throw ValidationError("synth needs libs.synthetic.theta");
  if (so.nu.size() == 0) throw ValidationError("synth needs libs.synthetic.nu");
  const SyntheticSpectrum syn = synthesize_spectrum(db, cfg.kernel(), so);
  out.write("spectrum.csv", spectrum_csv(syn.obs));
  json truth;
  truth["theta_nm"] = vec(syn.truth.theta);
  truth["eta"] = vec(syn.truth.eta);
  truth["nu"] = vec(so.nu);
  truth["concentrations"] = concentrations_json(db, so.nu);
  truth["noise_sigma"] = syn.noise_sigma;
  truth["seed"] = seed;
  out.write("truth.json", truth.dump(2) + "\n");
  return kExitOk;
}

RunConfig load_or_default(const Globals& g, bool required) {
  if (g.config.empty()) {
    if (required) throw ValidationError("this command needs --config");
    return parse_config("{}");
  }
  return load_config(g.config);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parametric PSF unmixing: coherence metrics, basin certificates, solvers and "
               "LIBS spectrum fitting",
               "psfunmix"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  int threads_value = 0;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g.out_dir, "output directory (created if missing)");
  auto* seed_opt = app.add_option("--seed", seed_value, "random seed (overrides the config)");
  auto* threads_opt =
      app.add_option("--threads", threads_value, "worker threads, 0 = all cores")->check(
          CLI::NonNegativeNumber);
  app.add_flag("--require-feasible", g.require_feasible,
               "exit 2 when a basin certificate is infeasible");

  auto* certify_cmd = app.add_subcommand("certify", "basin certificate at each configured Delta");
  auto* solve_cmd = app.add_subcommand("solve", "run the solver from one initialization");
  std::vector<double> init_theta;
  solve_cmd->add_option("--init", init_theta, "initial theta, one value per modality")
      ->delimiter(',');
  auto* landscape_cmd = app.add_subcommand("landscape", "loss over a 2-D theta grid");
  bool no_certificate = false;
  landscape_cmd->add_flag("--no-certificate", no_certificate, "skip the epsilon0 overlay");
  auto* mc_cmd = app.add_subcommand("montecarlo", "success rate versus initialization distance");
  mc_cmd->add_flag("--no-certificate", no_certificate, "skip the epsilon0 annotation");
  auto* metrics_cmd = app.add_subcommand("metrics", "coherence and interference tables");
  auto* libs_cmd = app.add_subcommand("libs-fit", "fit a LIBS spectrum and estimate concentrations");
  std::string spectrum;
  std::string lines;
  libs_cmd->add_option("--spectrum", spectrum, "spectrum CSV")->check(CLI::ExistingFile);
  libs_cmd->add_option("--lines", lines, "line database CSV")->check(CLI::ExistingFile);
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic LIBS spectrum");
  synth_cmd->add_option("--lines", lines, "line database CSV")->check(CLI::ExistingFile);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "psfunmix: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    const bool needs_config = name != "libs-fit" && name != "synth";
    const RunConfig cfg = load_or_default(g, needs_config);
    const std::uint64_t seed = seed_opt->count() ? seed_value : cfg.seed;
    const int threads = threads_opt->count() ? threads_value : cfg.threads;

    Outputs outputs(g.out_dir, out);
    int code = kExitOk;
    try {
      if (sub == certify_cmd) {
        code = cmd_certify(cfg, g, threads, outputs, out);
      } else if (sub == solve_cmd) {
        code = cmd_solve(cfg, init_theta, outputs, out);
      } else if (sub == landscape_cmd) {
        code = cmd_landscape(cfg, !no_certificate, threads, outputs);
      } else if (sub == mc_cmd) {
        code = cmd_montecarlo(cfg, g, !no_certificate, seed, threads, outputs, out);
      } else if (sub == metrics_cmd) {
        code = cmd_metrics(cfg, threads, outputs);
      } else if (sub == libs_cmd) {
        code = cmd_libs_fit(cfg, g, spectrum, lines, outputs, out);
      } else if (sub == synth_cmd) {
        code = cmd_synth(cfg, g, lines, seed, outputs);
      }
    } catch (...) {
      outputs.manifest(name, args, g.config.empty() ? nullptr : &cfg, seed, threads);
      throw;
    }
    outputs.manifest(name, args, g.config.empty() ? nullptr : &cfg, seed, threads);
    return code;
  } catch (const DivergenceError& e) {
    err << "psfunmix: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NonConvergentSeries& e) {
    err << "psfunmix: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConditioningError& e) {
    err << "psfunmix: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const FeasibilityError& e) {
    err << "psfunmix: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const OutOfBasinError& e) {
    err << "psfunmix: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    err << "psfunmix: " << e.what() << "\n";
    return kExitValidation;
  } catch (const fs::filesystem_error& e) {
    err << "psfunmix: " << e.what() << "\n";
    return kExitValidation;
  }
}

}  // namespace psfunmix::cli
