#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "psfunmix/hessian.hpp"
#include "psfunmix/solver.hpp"

namespace psfunmix {

struct LineRecord {
  std::string species;
  std::string ion;
  double wavelength_nm = 0.0;
  double strength = 0.0;
  std::optional<double> coeff;
  std::size_t source_line = 0;
};

/// Lines of one (species, ion) pair, sorted by wavelength.
struct LineModality {
  std::string species;
  std::string ion;
  std::vector<LineRecord> lines;

  std::string label() const { return species + " " + ion; }
};

class LineDatabase {
 public:
  LineDatabase() = default;
  explicit LineDatabase(std::vector<LineModality> modalities);

  const std::vector<LineModality>& modalities() const noexcept { return modalities_; }
  int total_lines() const;
  /// Distinct species in order of first appearance; columns of the
  /// concentration matrix.
  const std::vector<std::string>& species() const noexcept { return species_; }

  /// Spike locations relative to `center` (grid coordinates).
  SupportSpec support(double center) const;

  /// A (lines x species): the coeff column when present, otherwise the line
  /// strength normalised over all lines of the same species.
  Matrix concentration_matrix() const;

 private:
  std::vector<LineModality> modalities_;
  std::vector<std::string> species_;
};

/// CSV with header species,ion,wavelength_nm,strength[,coeff]. Throws
/// ParseError (with the line number) for malformed rows and ValidationError
/// for duplicates, an empty database or a modality whose strengths are all 0.
LineDatabase parse_lines(std::string_view csv_text);
LineDatabase ingest_lines(const std::filesystem::path& path);

struct SpectrumObservation {
  /// Uniform grid in wavelength offsets: lambda_s = center + u_s.
  SamplingGrid grid;
  double center = 0.0;
  Vector x_obs;
  /// Diagonal transfer function, strictly positive.
  Vector transfer;
  /// Empty until preprocessing.
  Vector baseline;
  Vector x_tilde;

  Vector wavelengths() const;
};

/// Builds an observation from a uniform wavelength axis. Throws InputError
/// for non-uniform or unsorted wavelengths and non-positive transfer values.
SpectrumObservation make_observation(const std::vector<double>& wavelengths,
                                     const Vector& intensities, Vector transfer = {});

/// CSV wavelength_nm,intensity[,transfer].
SpectrumObservation parse_spectrum(std::string_view csv_text);
SpectrumObservation read_spectrum(const std::filesystem::path& path);
std::string spectrum_csv(const SpectrumObservation& obs);

struct BaselineOptions {
  double asymmetry = 0.01;
  double smoothness = 1e5;
  int iterations = 10;
};

/// Asymmetric least-squares baseline of transfer^-1 x_obs (second-difference
/// penalty, iteratively reweighted). Throws InputError for length mismatch or
/// non-positive transfer entries.
Vector estimate_baseline(const Vector& x_obs, const Vector& transfer,
                         const BaselineOptions& opts = {});

/// Fills baseline and x_tilde = x_obs - transfer * baseline.
void preprocess(SpectrumObservation& obs, const BaselineOptions& opts = {});

struct FitOptions {
  /// Coarse per-modality log grid for the initial shapes; 0 picks
  /// [grid spacing, 100 grid spacings].
  double scan_lo = 0.0;
  double scan_hi = 0.0;
  int scan_points = 25;
  int scan_sweeps = 2;
  SolveConfig solver;
};

struct LibsFit {
  SolveReport report;
  MixtureParams init;
  SupportSpec support;
  /// Column indices with eta < 0.
  std::vector<int> negative_eta;
  double residual_norm = 0.0;
  /// ||transfer G eta - x_tilde|| / ||x_tilde||.
  double relative_fit_error = 0.0;
  Vector fitted;

  nlohmann::json to_json() const;
};

/// Theta from a coordinate-wise scan over log-spaced candidates with the
/// amplitudes solved linearly at each candidate.
MixtureParams initialize_by_scan(const LossProblem& problem, const FitOptions& opts = {});

/// Transfer-weighted fit of x_tilde (absorbs the transfer function into the
/// dictionary rows). Requires a preprocessed observation.
LibsFit fit_spectrum(const LineDatabase& db, const SpectrumObservation& obs,
                     const KernelFamily& family, const std::optional<MixtureParams>& init = {},
                     const FitOptions& opts = {});

/// Least-squares nu with A nu ~ eta_hat, negatives projected to 0. Throws
/// ConditioningError when A is numerically rank deficient.
Vector estimate_concentrations(const Matrix& A, const Vector& eta_hat);

struct SyntheticSpectrumOptions {
  double wavelength_lo = 236.0;
  double wavelength_hi = 310.0;
  int N = 7401;
  Vector theta;
  Vector nu;
  double baseline_intercept = 0.2;
  /// Per nm, relative to the window centre.
  double baseline_slope = 0.002;
  /// Transfer function linear from transfer_lo to transfer_hi across the window.
  double transfer_lo = 0.8;
  double transfer_hi = 1.2;
  /// Signal-to-noise ratio in dB of the transferred peaks; infinite disables noise.
  double snr_db = 40.0;
  std::uint64_t seed = 1;
};

struct SyntheticSpectrum {
  SpectrumObservation obs;
  MixtureParams truth;
  Vector clean;
  Vector baseline;
  double noise_sigma = 0.0;
};

/// x_obs = transfer * (G(theta) A nu + b) + noise, where the noise is a
/// zero-mean, unit-variance chi-square(2) variate scaled to the requested SNR.
SyntheticSpectrum synthesize_spectrum(const LineDatabase& db, const KernelFamily& family,
                                      const SyntheticSpectrumOptions& opts);

}  // namespace psfunmix
