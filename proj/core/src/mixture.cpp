#include "psfunmix/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psfunmix/errors.hpp"

namespace psfunmix {

SamplingGrid make_grid(double T, int N) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("grid width T must be positive and finite");
  if (N < 2) throw InputError("grid needs at least N = 2 samples");
  SamplingGrid grid{T, N, Vector(N)};
  const double step = T / static_cast<double>(N - 1);
  for (int s = 0; s < N; ++s) grid.u[s] = -0.5 * T + step * static_cast<double>(s);
  // exact endpoints regardless of rounding in the product above
  grid.u[0] = -0.5 * T;
  grid.u[N - 1] = 0.5 * T;
  return grid;
}

SupportSpec::SupportSpec(std::vector<std::vector<double>> locations)
    : locations_(std::move(locations)) {
  if (locations_.empty()) throw InputError("support needs at least one modality");
  offsets_.reserve(locations_.size());
  for (const auto& mod : locations_) {
    if (mod.empty()) throw InputError("every modality needs at least one spike");
    for (double t : mod) {
      if (!std::isfinite(t)) throw InputError("spike locations must be finite");
    }
    offsets_.push_back(total_);
    total_ += static_cast<int>(mod.size());
  }
  const Separation sep = min_separation(*this);
  if (!sep.undefined && !(sep.delta > 0.0)) {
    throw InputError("spike locations must be pairwise distinct");
  }
}

int SupportSpec::modality_of_column(int col) const {
  if (col < 0 || col >= total_) throw InputError("column index out of range");
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), col);
  return static_cast<int>(it - offsets_.begin()) - 1;
}

std::vector<int> SupportSpec::spike_counts() const {
  std::vector<int> out;
  out.reserve(locations_.size());
  for (const auto& mod : locations_) out.push_back(static_cast<int>(mod.size()));
  return out;
}

Separation min_separation(const SupportSpec& support) {
  std::vector<double> all;
  all.reserve(support.total_spikes());
  for (const auto& mod : support.all_locations()) all.insert(all.end(), mod.begin(), mod.end());
  if (all.size() < 2) return {std::numeric_limits<double>::infinity(), true};
  std::sort(all.begin(), all.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < all.size(); ++k) best = std::min(best, all[k] - all[k - 1]);
  return {best, false};
}

DictionaryStack build_dictionary(const KernelFamily& family, const SamplingGrid& grid,
                                 const SupportSpec& support, const Vector& theta,
                                 int max_order) {
  if (max_order < 0 || max_order > 2) throw InputError("max_order must be 0, 1 or 2");
  if (theta.size() != support.modalities()) {
    throw InputError("theta length must equal the number of modalities");
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) family.check_theta(theta[i]);

  DictionaryStack dict;
  dict.theta = theta;
  dict.max_order = max_order;
  const int p = support.modalities();
  for (int i = 0; i < p; ++i) {
    dict.offsets.push_back(support.offset(i));
    dict.widths.push_back(support.spikes(i));
  }
  const auto u = grid.samples();
  for (int a = 0; a <= max_order; ++a) {
    Matrix& G = dict.G[a];
    G.resize(grid.N, support.total_spikes());
    for (int i = 0; i < p; ++i) {
      for (int l = 0; l < support.spikes(i); ++l) {
        const int col = support.offset(i) + l;
        family.fill(a, theta[i], support.location(i, l), u,
                    std::span<double>(G.col(col).data(), static_cast<std::size_t>(grid.N)));
      }
    }
  }
  return dict;
}

Vector synthesize(const DictionaryStack& dict, const Vector& eta) {
  if (eta.size() != dict.cols()) throw InputError("eta length must equal dictionary width");
  return dict.G[0] * eta;
}

SupportSpec interleaved_support(const std::vector<int>& spikes_per_modality, double delta) {
  if (!(delta > 0.0)) throw InputError("separation must be positive");
  const int p = static_cast<int>(spikes_per_modality.size());
  std::vector<std::vector<double>> loc(p);
  for (int i = 0; i < p; ++i) {
    if (spikes_per_modality[i] < 1) throw InputError("every modality needs at least one spike");
    for (int l = 0; l < spikes_per_modality[i]; ++l) {
      loc[i].push_back(delta * static_cast<double>(i + l * p));
    }
  }
  return SupportSpec(std::move(loc));
}

Vector uniform_amplitudes(const SupportSpec& support) {
  Vector eta(support.total_spikes());
  for (int i = 0; i < support.modalities(); ++i) {
    eta.segment(support.offset(i), support.spikes(i))
        .setConstant(1.0 / static_cast<double>(support.spikes(i)));
  }
  return eta;
}

}  // namespace psfunmix
