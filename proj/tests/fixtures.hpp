#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "psfunmix/experiment.hpp"

namespace psfunmix::fixture {

/// Gaussian bump b(t) = exp(-t^2 / (2 w^2)) modulated into four frequency
/// bands (radians per unit-spaced sample). Shapes near 1 use bands
/// (0, 0.9), shapes near 3 use bands (1.8, 2.6):
///   g(theta, t) = b(t) cos(v t) + (theta - c) b(t) cos(d t),  c = 1 or 3.
/// No sum or difference of two bands aliases near zero on a unit grid.
/// Values and theta-derivatives of both modalities occupy disjoint bands, so
/// every cross-correlation is tiny at every shift. The basin certificate is
/// feasible for this family, which it never is for the Lorentz family.
inline KernelFamily banded_family(double width = 8.0) {
  struct Bands {
    double c, v, d;
  };
  auto bands = [](double theta) { return theta < 2.0 ? Bands{1.0, 0.0, 0.9} : Bands{3.0, 1.8, 2.6}; };
  auto bump = [width](double t) { return std::exp(-t * t / (2.0 * width * width)); };
  auto g = [=](double theta, double t) {
    const Bands k = bands(theta);
    return bump(t) * (std::cos(k.v * t) + (theta - k.c) * std::cos(k.d * t));
  };
  auto d1 = [=](double theta, double t) { return bump(t) * std::cos(bands(theta).d * t); };
  auto d2 = [](double, double) { return 0.0; };
  return custom_family("banded", {0.5, 3.5}, g, d1, d2);
}

/// Two modalities, two spikes each, unit grid spacing.
inline ExperimentSetup feasible_setup(double Delta = 40.0) {
  ExperimentSetup s{banded_family(), make_grid(400.0, 401), {}, {}};
  s.support = interleaved_support({2, 2}, Delta);
  s.truth.theta = Vector(2);
  s.truth.theta << 1.0, 3.0;
  s.truth.eta = Vector::Ones(4);
  return s;
}

/// Scan options for banded_family: theta is not a width there, so the default
/// step min(Delta, theta) / 50 would be needlessly fine.
inline MetricOptions banded_metrics() {
  MetricOptions m;
  m.scan_density = 10;
  m.scan_span = 2.0;
  return m;
}

/// Certification options for feasible_setup (the family is piecewise in
/// theta, so the Lipschitz box stays inside each piece).
inline CertifyOptions feasible_certify_options() {
  CertifyOptions o;
  o.metrics = banded_metrics();
  o.box_fraction = 0.1;
  o.lipschitz.samples = 7;
  o.threads = 1;
  return o;
}

/// Deterministic generator for property tests.
inline std::mt19937_64 rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

inline double uniform(std::mt19937_64& r, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(r);
}

}  // namespace psfunmix::fixture
