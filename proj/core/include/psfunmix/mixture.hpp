#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "psfunmix/kernels.hpp"

namespace psfunmix {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// N uniform timestamps covering [-T/2, T/2], endpoints included exactly.
struct SamplingGrid {
  double T = 0.0;
  int N = 0;
  Vector u;

  double spacing() const noexcept { return T / static_cast<double>(N - 1); }
  std::span<const double> samples() const noexcept {
    return {u.data(), static_cast<std::size_t>(u.size())};
  }
};

SamplingGrid make_grid(double T, int N);

/// Spike locations grouped by modality. Columns of every dictionary follow the
/// order (1,1),...,(1,L_1),...,(p,1),...,(p,L_p).
class SupportSpec {
 public:
  SupportSpec() = default;
  explicit SupportSpec(std::vector<std::vector<double>> locations);

  int modalities() const noexcept { return static_cast<int>(locations_.size()); }
  int spikes(int i) const { return static_cast<int>(locations_.at(i).size()); }
  int total_spikes() const noexcept { return total_; }
  /// First column of modality i.
  int offset(int i) const { return offsets_.at(i); }
  int modality_of_column(int col) const;
  double location(int i, int l) const { return locations_.at(i).at(l); }
  const std::vector<double>& locations(int i) const { return locations_.at(i); }
  const std::vector<std::vector<double>>& all_locations() const noexcept { return locations_; }
  std::vector<int> spike_counts() const;

 private:
  std::vector<std::vector<double>> locations_;
  std::vector<int> offsets_;
  int total_ = 0;
};

/// Shape parameters (one per modality) and amplitudes in column order.
struct MixtureParams {
  Vector theta;
  Vector eta;

  /// Amplitudes of modality i.
  auto eta_of(const SupportSpec& support, int i) const {
    return eta.segment(support.offset(i), support.spikes(i));
  }
};

struct Separation {
  double delta = 0.0;
  /// Set when fewer than two spikes exist and delta is +inf.
  bool undefined = false;
};

/// Minimum distance over all distinct spike pairs, within and across modalities.
Separation min_separation(const SupportSpec& support);

/// Sampled kernel derivatives G_a, a = 0, 1, 2. Column (i,l) of G_a is
/// [d^a g(theta_i, u_s - t_{i,l})]_s.
struct DictionaryStack {
  std::array<Matrix, 3> G;
  Vector theta;
  std::vector<int> offsets;
  std::vector<int> widths;
  int max_order = 2;

  int rows() const noexcept { return static_cast<int>(G[0].rows()); }
  int cols() const noexcept { return static_cast<int>(G[0].cols()); }

  /// Per-modality view G_a^i (N x L_i).
  auto view(int a, int i) const { return G[a].middleCols(offsets[i], widths[i]); }
};

/// Assembles G_0..G_{max_order} at theta. Throws DomainError for theta outside
/// the family's domain and InputError on size mismatches.
DictionaryStack build_dictionary(const KernelFamily& family, const SamplingGrid& grid,
                                 const SupportSpec& support, const Vector& theta,
                                 int max_order = 2);

/// x = G_0 eta.
Vector synthesize(const DictionaryStack& dict, const Vector& eta);

/// Support used by the synthetic experiments: modality 0 at 0, 2D, 4D, ...;
/// modality 1 at D, 3D, ...; further modalities continue the interleaving
/// with stride p*D. Minimal separation is exactly D.
SupportSpec interleaved_support(const std::vector<int>& spikes_per_modality, double delta);

/// eta_{i,l} = 1 / L_i, as in the two-modality validation experiment.
Vector uniform_amplitudes(const SupportSpec& support);

}  // namespace psfunmix
