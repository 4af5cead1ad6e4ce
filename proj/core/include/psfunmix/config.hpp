#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "psfunmix/certificate.hpp"
#include "psfunmix/experiment.hpp"
#include "psfunmix/libs.hpp"
#include "psfunmix/solver.hpp"

namespace psfunmix {

struct LibsConfig {
  std::string lines;
  std::string spectrum;
  SyntheticSpectrumOptions synthetic;
  BaselineOptions baseline;
  FitOptions fit;
  /// Seeds averaged by the synthetic round-trip.
  int seeds = 20;
};

/// Everything one run needs. Sections: kernel, grid, support, params, metrics,
/// lipschitz, certificate, solver, experiment, libs. Every section is optional
/// except where a subcommand needs it.
struct RunConfig {
  std::string family = "lorentz";
  Interval theta_domain = kLorentzDefaultDomain;

  std::optional<SamplingGrid> grid;
  std::optional<SupportSpec> support;
  /// Interleaved recipe (support.Delta, support.spikes), kept so Delta sweeps
  /// can rebuild the support.
  std::vector<int> spikes;
  /// Declared separation of the recipe; absent for explicit locations.
  std::optional<double> Delta;
  std::optional<MixtureParams> params;

  CertifyOptions certify;
  SolveConfig solver;
  std::vector<double> deltas;
  MonteCarloOptions montecarlo;
  LandscapeOptions landscape;
  LibsConfig libs;

  std::uint64_t seed = 1;
  int threads = 0;

  /// The parsed document, canonicalised (sorted keys, shortest round-trip numbers).
  nlohmann::json source;

  KernelFamily kernel() const;
  /// Throws ValidationError when grid, support or params are missing.
  ExperimentSetup setup() const;
  /// Deltas to sweep: experiment.deltas, else the declared or measured
  /// separation of the support.
  std::vector<double> delta_list() const;
  /// Setup with the support rescaled (or rebuilt from the recipe) to Delta.
  ExperimentSetup setup_at(double Delta) const;
  std::uint64_t hash() const;
};

/// Throws ParseError for malformed JSON and ValidationError for wrong types,
/// unknown enum values, inconsistent sizes or out-of-range numbers.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace psfunmix
