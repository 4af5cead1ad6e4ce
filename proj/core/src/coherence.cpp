#include "psfunmix/coherence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"
#include "psfunmix/parallel.hpp"

namespace psfunmix {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGolden = 0.6180339887498949;

struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

GaussRule make_gauss_legendre(int n) {
  GaussRule rule{std::vector<double>(n), std::vector<double>(n)};
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      dp = n * (z * p1 - p2) / (z * z - 1.0);
      const double z_old = z;
      z = z_old - p1 / dp;
      if (std::abs(z - z_old) < 1e-15) break;
    }
    rule.x[i] = z;
    rule.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return rule;
}

const GaussRule& gauss_rule(int n) {
  static const GaussRule r12 = make_gauss_legendre(12);
  static const GaussRule r24 = make_gauss_legendre(24);
  return n == 12 ? r12 : r24;
}

template <class F>
double gauss_panel(const F& f, double a, double b, int n) {
  const GaussRule& r = gauss_rule(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  double acc = 0.0;
  for (int k = 0; k < n; ++k) acc += r.w[k] * f(mid + half * r.x[k]);
  return acc * half;
}

struct TailEstimate {
  double value = 0.0;
  double error = 0.0;
};

/// sum_{m >= m_first} F(m Delta) for a smooth, monotonically decaying F, by
/// Euler-Maclaurin: integral/Delta + F(X)/2 - Delta F'(X)/12, X = m_first Delta.
/// The integral over [X, inf) uses x = X / s and geometric Gauss panels in s.
template <class F>
TailEstimate euler_maclaurin_tail(const F& absf, double Delta, double m_first, double partial) {
  const double X = m_first * Delta;
  const double fx = absf(X);
  if (fx == 0.0) return {};
  const double f2x = absf(2.0 * X);
  if (f2x > 0.45 * fx) {
    std::ostringstream os;
    os << "series tail decays too slowly to be summable (F(2X)/F(X) = " << f2x / fx
       << " at X = " << X << ")";
    throw NonConvergentSeries(os.str(), partial);
  }
  auto integrand = [&](double s) { return absf(X / s) * X / (s * s); };
  double integral = 0.0;
  double quad_err = 0.0;
  double s_hi = 1.0;
  double last = 0.0;
  for (int panel = 0; panel < 200; ++panel) {
    const double s_lo = 0.5 * s_hi;
    const double fine = gauss_panel(integrand, s_lo, s_hi, 24);
    const double coarse = gauss_panel(integrand, s_lo, s_hi, 12);
    integral += fine;
    quad_err += std::abs(fine - coarse);
    last = std::abs(fine);
    s_hi = s_lo;
    if (panel >= 3 && last <= 1e-17 * std::abs(integral)) break;
  }
  // the dropped [0, s_hi] piece is at most about one more panel
  quad_err += last;
  const double step = 0.01 * X;
  const double dfx = (absf(X + step) - absf(X - step)) / (2.0 * step);
  TailEstimate t;
  t.value = integral / Delta + 0.5 * fx - Delta * dfx / 12.0;
  t.error = std::abs(Delta * dfx / 12.0) + quad_err / Delta;
  return t;
}

struct Candidate {
  double delta;
  double abs_value;
};

/// Golden-section search for a local maximum of |f| inside [lo, hi].
Candidate refine_peak(const ShiftProfile& f, double lo, double hi, double tol) {
  double x1 = hi - kGolden * (hi - lo);
  double x2 = lo + kGolden * (hi - lo);
  double f1 = std::abs(f(x1));
  double f2 = std::abs(f(x2));
  for (int it = 0; it < 200 && (hi - lo) > tol; ++it) {
    if (f1 >= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - kGolden * (hi - lo);
      f1 = std::abs(f(x1));
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + kGolden * (hi - lo);
      f2 = std::abs(f(x2));
    }
  }
  return f1 >= f2 ? Candidate{x1, f1} : Candidate{x2, f2};
}

/// Scan samples plus refined local maxima, sorted by shift.
std::vector<Candidate> scan_candidates(const ShiftProfile& f, double d0, double d1, double step) {
  const auto samples = f.scan(d0, d1, step);
  std::vector<Candidate> out;
  out.reserve(samples.size() + 8);
  for (const auto& [d, v] : samples) out.push_back({d, std::abs(v)});
  const std::size_t n = samples.size();
  if (n >= 2) {
    // Only peaks that dominate everything to their right can change a
    // sup over [delta, inf); the 5% margin covers the gain from refining.
    std::vector<double> right_max(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;) {
      right_max[k] = std::max(right_max[k + 1], std::abs(samples[k].second));
    }
    const double tol = 1e-4 * step;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const double here = std::abs(samples[k].second);
      const double right = std::abs(samples[k + 1].second);
      const double left = k > 0 ? std::abs(samples[k - 1].second) : -1.0;
      if (here >= right && here >= left && here > 0.0 && here >= 0.95 * right_max[k + 1]) {
        const double lo = k > 0 ? samples[k - 1].first : samples[k].first;
        const double hi = samples[k + 1].first;
        out.push_back(refine_peak(f, lo, hi, tol));
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Candidate& x, const Candidate& y) { return x.delta < y.delta; });
  return out;
}

void check_order(int a, int max_order) {
  if (a < 0 || a > max_order) {
    throw InputError("derivative order must be in 0.." + std::to_string(max_order));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<std::pair<double, double>> ShiftProfile::scan(double d0, double d1,
                                                          double step) const {
  std::vector<std::pair<double, double>> out;
  if (!(d1 > d0)) {
    out.emplace_back(d0, (*this)(d0));
    return out;
  }
  const long n = std::max(1L, static_cast<long>(std::ceil((d1 - d0) / step)));
  out.reserve(n + 1);
  for (long k = 0; k <= n; ++k) {
    const double d = k == n ? d1 : d0 + (d1 - d0) * static_cast<double>(k) / n;
    out.emplace_back(d, (*this)(d));
  }
  return out;
}

CrossCorrelation::CrossCorrelation(const KernelFamily& family, const SamplingGrid& grid, int a,
                                   double theta_i, int b, double theta_j, int chebyshev_nodes)
    : family_(family), grid_(grid), b_(b), theta_j_(theta_j), v_(grid.N) {
  check_order(a, 2);
  check_order(b, 2);
  family.check_theta(theta_i);
  family.check_theta(theta_j);
  family.fill(a, theta_i, 0.0, grid.samples(),
              std::span<double>(v_.data(), static_cast<std::size_t>(grid.N)));

  // Far field: for shifts >= T the shifted kernel sits at least T/2 outside
  // the window and is analytic across it, so a Chebyshev interpolant in u
  // collapses the N-term sum to n weighted kernel evaluations.
  const int n = chebyshev_nodes;
  if (n < 8) return;
  far_start_ = grid.T;
  const double half = 0.5 * grid.T;
  far_nodes_.resize(n);
  std::vector<double> lambda(n);
  for (int j = 0; j < n; ++j) {
    const double ang = kPi * (j + 0.5) / n;
    far_nodes_[j] = half * std::cos(ang);
    lambda[j] = ((j % 2 == 0) ? 1.0 : -1.0) * std::sin(ang);
  }
  far_weights_.assign(n, 0.0);
  std::vector<double> tmp(n);
  for (int s = 0; s < grid.N; ++s) {
    const double u = grid.u[s];
    int hit = -1;
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      const double diff = u - far_nodes_[j];
      if (diff == 0.0) {
        hit = j;
        break;
      }
      tmp[j] = lambda[j] / diff;
      denom += tmp[j];
    }
    if (hit >= 0) {
      far_weights_[hit] += v_[s];
      continue;
    }
    const double scale = v_[s] / denom;
    for (int j = 0; j < n; ++j) far_weights_[j] += tmp[j] * scale;
  }
  use_far_ = true;
  // Accept the compression only if it reproduces the direct sum.
  for (double probe : {1.0, 1.7, 4.0}) {
    const double d = probe * far_start_;
    const double exact = direct(d);
    const double approx = (*this)(d);
    std::vector<double> w(grid.N);
    family_.fill(b_, theta_j_, d, grid.samples(), w);
    double scale = 0.0;
    for (int s = 0; s < grid.N; ++s) scale += std::abs(v_[s] * w[s]);
    if (std::abs(exact - approx) > 1e-12 * scale + 1e-300) {
      use_far_ = false;
      break;
    }
  }
}

double CrossCorrelation::direct(double delta) const {
  thread_local std::vector<double> w;
  w.resize(grid_.N);
  family_.fill(b_, theta_j_, delta, grid_.samples(), w);
  return v_.dot(Eigen::Map<const Vector>(w.data(), grid_.N));
}

double CrossCorrelation::operator()(double delta) const {
  const double d = std::abs(delta);
  if (!use_far_ || d < far_start_) return direct(d);
  const auto& rules = family_.rules();
  double acc = 0.0;
  for (std::size_t j = 0; j < far_nodes_.size(); ++j) {
    acc += far_weights_[j] * rules.value(b_, theta_j_, far_nodes_[j] - d);
  }
  return acc;
}

std::vector<std::pair<double, double>> CrossCorrelation::scan(double d0, double d1,
                                                              double step) const {
  std::vector<std::pair<double, double>> out;
  if (!(d1 > d0)) {
    out.emplace_back(d0, (*this)(d0));
    return out;
  }
  const double h = grid_.spacing();
  const int N = grid_.N;
  long stride = 1;
  int R = 1;
  if (step >= h) {
    stride = std::max(1L, static_cast<long>(std::floor(step / h)));
  } else {
    R = static_cast<int>(std::ceil(h / step));
  }
  const long kmin = static_cast<long>(std::floor(d0 / h)) - 1;
  const long kmax = static_cast<long>(std::ceil(d1 / h)) + 1;
  const long ext = kmax - kmin + N;
  std::vector<double> u_ext(ext);
  // extended lattice index e <-> m = e - kmax, point -T/2 + m h
  for (long e = 0; e < ext; ++e) u_ext[e] = -0.5 * grid_.T + static_cast<double>(e - kmax) * h;
  std::vector<double> E(ext);

  out.emplace_back(d0, direct(d0));
  for (int r = 0; r < R; ++r) {
    const double frac = static_cast<double>(r) * h / R;
    bool filled = false;
    for (long k = kmin; k <= kmax; ++k) {
      if (k % stride != 0) continue;
      const double d = static_cast<double>(k) * h + frac;
      if (d <= d0 || d >= d1) continue;
      if (!filled) {
        family_.fill(b_, theta_j_, frac, u_ext, E);
        filled = true;
      }
      // u_s - d = u_{s-k} - frac, i.e. extended index s - k + kmax
      const double c = v_.dot(Eigen::Map<const Vector>(E.data() + (kmax - k), N));
      out.emplace_back(d, c);
    }
  }
  out.emplace_back(d1, (*this)(d1));
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

KernelProfile::KernelProfile(const KernelFamily& family, int a, double theta)
    : family_(family), a_(a), theta_(theta) {
  check_order(a, 2);
  family.check_theta(theta);
}

double KernelProfile::operator()(double delta) const { return family_.raw(a_, theta_, delta); }

// ---------------------------------------------------------------------------

double envelope_sup(const ShiftProfile& f, double D, double step, double span) {
  if (!(D >= 0.0)) throw InputError("separation must be non-negative");
  if (!(step > 0.0) || !(span >= 0.0)) throw InputError("scan step must be positive");
  const auto cands = scan_candidates(f, D, D + span, step);
  double best = 0.0;
  for (const auto& c : cands) best = std::max(best, c.abs_value);
  return best;
}

SeriesValue envelope_series(const ShiftProfile& f, double Delta, int m0, double step,
                            double span, const MetricOptions& opts) {
  if (!(Delta > 0.0) || !std::isfinite(Delta)) {
    throw InputError("series spacing Delta must be positive");
  }
  const double d0 = m0 * Delta;
  const double d1 = d0 + span;
  const auto cands = scan_candidates(f, d0, d1, step);
  std::vector<double> suffix(cands.size());
  double run = 0.0;
  for (std::size_t k = cands.size(); k-- > 0;) {
    run = std::max(run, cands[k].abs_value);
    suffix[k] = run;
  }

  std::vector<double> terms;
  double sum = 0.0;
  long m = m0;
  std::size_t cursor = 0;
  for (; m * Delta <= d1; ++m) {
    const double D = m * Delta;
    while (cursor < cands.size() && cands[cursor].delta < D) ++cursor;
    double term = std::abs(f(D));
    if (cursor < cands.size()) term = std::max(term, suffix[cursor]);
    terms.push_back(term);
    sum += term;
    if (static_cast<long>(terms.size()) >= opts.max_terms) break;
  }

  bool converged = false;
  long far_count = 0;
  while (static_cast<long>(terms.size()) < opts.max_terms) {
    const double term = std::abs(f(m * Delta));
    terms.push_back(term);
    sum += term;
    ++m;
    ++far_count;
    if (term < opts.term_tolerance * (sum + 1e-300)) {
      converged = true;
      break;
    }
    if (far_count >= opts.explicit_far_terms) break;
  }
  if (!converged && static_cast<long>(terms.size()) >= opts.max_terms) {
    const double last = terms.empty() ? 0.0 : terms.back();
    if (last >= opts.term_tolerance * (sum + 1e-300)) {
      throw NonConvergentSeries("series hit the truncation cap with a significant last term",
                                sum);
    }
  }

  // a sign change of the far-field correlation leaves |f| small where the
  // explicit terms stop; extend them until the decay is geometric again
  for (int ext = 0; ext < 8; ++ext) {
    const double X = static_cast<double>(m) * Delta;
    const double fx = std::abs(f(X));
    if (fx == 0.0 || std::abs(f(2.0 * X)) <= 0.45 * fx) break;
    if (static_cast<long>(terms.size()) + m > opts.max_terms) break;
    for (const long m_end = 2 * m; m < m_end; ++m) terms.push_back(std::abs(f(m * Delta)));
  }

  // sup over |delta| >= m Delta is nonincreasing in m; enforce it on the
  // sampled terms in case the far-field decay was not monotone
  double env = 0.0;
  for (std::size_t k = terms.size(); k-- > 0;) {
    env = std::max(env, terms[k]);
    terms[k] = env;
  }
  double explicit_sum = 0.0;
  for (double t : terms) explicit_sum += t;

  SeriesValue out;
  out.terms = static_cast<long>(terms.size());
  auto absf = [&f](double x) { return std::abs(f(x)); };
  const TailEstimate tail =
      euler_maclaurin_tail(absf, Delta, static_cast<double>(m), explicit_sum);
  out.value = explicit_sum + tail.value;
  out.residual = tail.error;
  if (out.residual > opts.residual_tolerance * (out.value + 1e-300)) {
    std::ostringstream os;
    os << "series truncation residual " << out.residual << " exceeds tolerance for value "
       << out.value;
    throw NonConvergentSeries(os.str(), out.value);
  }
  return out;
}

double coherence_mu(const KernelFamily& family, const SamplingGrid& grid, int a, int b,
                    double theta_i, double theta_j, double Delta, const MetricOptions& opts) {
  check_order(a, 1);
  check_order(b, 1);
  if (!(Delta >= 0.0) || !std::isfinite(Delta)) throw InputError("Delta must be >= 0");
  const CrossCorrelation c(family, grid, a, theta_i, b, theta_j, opts.chebyshev_nodes);
  const double small = Delta > 0.0 ? std::min({Delta, theta_i, theta_j}) : std::min(theta_i, theta_j);
  const double step = small / opts.scan_density;
  const double span = opts.scan_span * std::max({theta_i, theta_j, Delta});
  return envelope_sup(c, Delta, step, span);
}

SeriesValue coherence_function(const KernelFamily& family, const SamplingGrid& grid, int a, int b,
                               double theta_i, double theta_j, double Delta,
                               bool same_modality_same_order, const MetricOptions& opts) {
  check_order(a, 1);
  check_order(b, 1);
  if (!(Delta > 0.0) || !std::isfinite(Delta)) throw InputError("Delta must be > 0");
  const CrossCorrelation c(family, grid, a, theta_i, b, theta_j, opts.chebyshev_nodes);
  const double step = std::min({Delta, theta_i, theta_j}) / opts.scan_density;
  const double span = opts.scan_span * std::max({theta_i, theta_j, Delta});
  SeriesValue s = envelope_series(c, Delta, same_modality_same_order ? 1 : 0, step, span, opts);
  s.value *= 2.0;
  s.residual *= 2.0;
  return s;
}

SeriesValue interference(const KernelFamily& family, int a, double theta, double Delta,
                         const MetricOptions& opts) {
  check_order(a, 2);
  if (!(Delta > 0.0) || !std::isfinite(Delta)) throw InputError("Delta must be > 0");
  const KernelProfile f(family, a, theta);
  const double step = std::min(Delta, theta) / opts.scan_density;
  const double span = opts.scan_span * std::max(theta, Delta);
  SeriesValue s = envelope_series(f, Delta, 1, step, span, opts);
  s.value = std::abs(f(0.0)) + 2.0 * s.value;
  s.residual *= 2.0;
  return s;
}

// ---------------------------------------------------------------------------

void CoherenceTable::put(int a, int b, int i, int j, double Delta, CoherenceEntry e) {
  entries_[{a, b, i, j, Delta}] = e;
}

void CoherenceTable::put_interference(int a, int i, double Delta, InterferenceEntry e) {
  interference_[{a, i, Delta}] = e;
}

namespace {

bool same_delta(double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y)); }

// Separations derived from spike locations carry rounding noise, so a miss
// on the exact key falls back to a relative 1e-9 match.
template <class Map, class Key, class Match>
auto find_entry(const Map& m, const Key& key, Match match) {
  auto it = m.find(key);
  if (it != m.end()) return it;
  for (it = m.begin(); it != m.end(); ++it) {
    if (match(it->first)) return it;
  }
  return m.end();
}

}  // namespace

const CoherenceEntry& CoherenceTable::at(int a, int b, int i, int j, double Delta) const {
  const auto it = find_entry(entries_, Key{a, b, i, j, Delta}, [&](const Key& k) {
    return std::get<0>(k) == a && std::get<1>(k) == b && std::get<2>(k) == i &&
           std::get<3>(k) == j && same_delta(std::get<4>(k), Delta);
  });
  if (it == entries_.end()) {
    std::ostringstream os;
    os << "coherence table has no entry (a=" << a << ", b=" << b << ", i=" << i << ", j=" << j
       << ", Delta=" << Delta << ")";
    throw DependencyError(os.str());
  }
  return it->second;
}

double CoherenceTable::C(int a, int b, int i, int j, double Delta) const {
  const auto& e = at(a, b, i, j, Delta);
  if (!e.C) {
    std::ostringstream os;
    os << "coherence table entry (a=" << a << ", b=" << b << ", i=" << i << ", j=" << j
       << ", Delta=" << Delta << ") has no coherence-function value";
    throw DependencyError(os.str());
  }
  return *e.C;
}

const InterferenceEntry& CoherenceTable::interference_at(int a, int i, double Delta) const {
  const auto it = find_entry(interference_, IKey{a, i, Delta}, [&](const IKey& k) {
    return std::get<0>(k) == a && std::get<1>(k) == i && same_delta(std::get<2>(k), Delta);
  });
  if (it == interference_.end()) {
    std::ostringstream os;
    os << "coherence table has no interference entry (a=" << a << ", i=" << i
       << ", Delta=" << Delta << ")";
    throw DependencyError(os.str());
  }
  return it->second;
}

std::string CoherenceTable::coherence_csv() const {
  std::ostringstream os;
  os << "a,b,i,j,Delta,mu,C\n";
  for (const auto& [key, e] : entries_) {
    const auto& [a, b, i, j, D] = key;
    os << a << ',' << b << ',' << i << ',' << j << ',' << format_double(D) << ','
       << format_double(e.mu) << ',' << (e.C ? format_double(*e.C) : std::string()) << '\n';
  }
  return os.str();
}

std::string CoherenceTable::interference_csv() const {
  std::ostringstream os;
  os << "a,i,Delta,I\n";
  for (const auto& [key, e] : interference_) {
    const auto& [a, i, D] = key;
    os << a << ',' << i << ',' << format_double(D) << ',' << format_double(e.I) << '\n';
  }
  return os.str();
}

CoherenceTable build_coherence_table(const KernelFamily& family, const SamplingGrid& grid,
                                     const Vector& theta, const std::vector<double>& deltas,
                                     const MetricOptions& opts, int threads) {
  CoherenceTable table;
  table.theta = theta;
  table.options = opts;
  const int p = static_cast<int>(theta.size());
  for (double D : deltas) {
    if (!(D > 0.0)) throw InputError("table separations must be positive");
  }

  struct Job {
    int a, b, i, j;
    double Delta;  // 0 means the unshifted coherence only
  };
  std::vector<Job> jobs;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) {
          jobs.push_back({a, b, i, j, 0.0});
          for (double D : deltas) jobs.push_back({a, b, i, j, D});
        }
  std::vector<CoherenceEntry> results(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t k) {
    const Job& jb = jobs[k];
    CoherenceEntry e;
    e.mu = coherence_mu(family, grid, jb.a, jb.b, theta[jb.i], theta[jb.j], jb.Delta, opts);
    if (jb.Delta > 0.0) {
      const SeriesValue s = coherence_function(family, grid, jb.a, jb.b, theta[jb.i],
                                               theta[jb.j], jb.Delta,
                                               jb.i == jb.j && jb.a == jb.b, opts);
      e.C = s.value;
      e.C_residual = s.residual;
    }
    results[k] = e;
  });
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    table.put(jobs[k].a, jobs[k].b, jobs[k].i, jobs[k].j, jobs[k].Delta, results[k]);
  }

  struct IJob {
    int a, i;
    double Delta;
  };
  std::vector<IJob> ijobs;
  for (int a = 0; a <= 2; ++a)
    for (int i = 0; i < p; ++i)
      for (double D : deltas) ijobs.push_back({a, i, D});
  std::vector<InterferenceEntry> ires(ijobs.size());
  parallel_for(ijobs.size(), threads, [&](std::size_t k) {
    const SeriesValue s = interference(family, ijobs[k].a, theta[ijobs[k].i], ijobs[k].Delta, opts);
    ires[k] = {s.value, s.residual};
  });
  for (std::size_t k = 0; k < ijobs.size(); ++k) {
    table.put_interference(ijobs[k].a, ijobs[k].i, ijobs[k].Delta, ires[k]);
  }
  return table;
}

double inf_norm(const Matrix& M) {
  if (M.size() == 0) return 0.0;
  return M.cwiseAbs().rowwise().sum().maxCoeff();
}

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    out[k] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / (n - 1);
  }
  return out;
}

double max_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double best = 0.0;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    best = std::max(best, std::abs(y[k + 1] - y[k]) / (x[k + 1] - x[k]));
  }
  return best;
}

}  // namespace

LipschitzEstimates estimate_lipschitz(const KernelFamily& family, const SamplingGrid& grid,
                                      const SupportSpec& support, double Delta,
                                      const std::vector<Interval>& theta_box,
                                      const LipschitzOptions& lip, const MetricOptions& opts,
                                      int threads) {
  const int p = support.modalities();
  if (static_cast<int>(theta_box.size()) != p) {
    throw InputError("theta box needs one interval per modality");
  }
  for (const auto& iv : theta_box) {
    if (!(iv.hi > iv.lo)) throw InputError("theta box must have positive width on every axis");
    family.check_theta(iv.lo);
    family.check_theta(iv.hi);
  }
  if (lip.samples < 2) throw InputError("Lipschitz estimation needs at least 2 samples per axis");
  if (!(Delta > 0.0)) throw InputError("Delta must be > 0");

  LipschitzEstimates out;
  out.safety_factor = lip.safety_factor;
  out.samples = lip.samples;
  out.partner_samples = lip.partner_samples;
  out.Delta = Delta;

  // C_Delta: one job per sampled curve theta -> C_{a,b}(theta, theta', Delta) or I_a(theta, Delta)
  struct Curve {
    int kind;  // 0 = coherence, 1 = interference
    int a, b, i, j;
    double partner;  // NaN: partner equals theta (same modality)
  };
  std::vector<Curve> curves;
  for (int i = 0; i < p; ++i) {
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b)
        for (int j = 0; j < p; ++j) {
          if (i == j) {
            curves.push_back({0, a, b, i, j, std::numeric_limits<double>::quiet_NaN()});
          } else {
            for (double tp : linspace(theta_box[j].lo, theta_box[j].hi,
                                      std::max(1, lip.partner_samples))) {
              if (lip.partner_samples == 1) tp = 0.5 * (theta_box[j].lo + theta_box[j].hi);
              curves.push_back({0, a, b, i, j, tp});
            }
          }
        }
    for (int a = 0; a <= 2; ++a) curves.push_back({1, a, 0, i, i, 0.0});
  }

  std::vector<std::vector<double>> xs(p);
  for (int i = 0; i < p; ++i) xs[i] = linspace(theta_box[i].lo, theta_box[i].hi, lip.samples);

  const std::size_t per_curve = static_cast<std::size_t>(lip.samples);
  std::vector<double> values(curves.size() * per_curve);
  parallel_for(values.size(), threads, [&](std::size_t k) {
    const Curve& cv = curves[k / per_curve];
    const double th = xs[cv.i][k % per_curve];
    if (cv.kind == 1) {
      values[k] = interference(family, cv.a, th, Delta, opts).value;
    } else {
      const double partner = std::isnan(cv.partner) ? th : cv.partner;
      values[k] = coherence_function(family, grid, cv.a, cv.b, th, partner, Delta,
                                     cv.i == cv.j && cv.a == cv.b, opts)
                      .value;
    }
  });
  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::vector<double> y(values.begin() + c * per_curve, values.begin() + (c + 1) * per_curve);
    out.C_Delta_raw = std::max(out.C_Delta_raw, max_slope(xs[curves[c].i], y));
  }

  // K: slopes of theta -> G(theta) along the box axes and its sign diagonals.
  std::vector<std::vector<int>> directions;
  for (int i = 0; i < p; ++i) {
    std::vector<int> d(p, 0);
    d[i] = 1;
    directions.push_back(d);
  }
  if (p >= 2 && p <= 6) {
    for (int mask = 0; mask < (1 << (p - 1)); ++mask) {
      std::vector<int> d(p, 1);
      for (int i = 1; i < p; ++i) d[i] = (mask >> (i - 1)) & 1 ? -1 : 1;
      directions.push_back(d);
    }
  }
  std::vector<double> kslopes(directions.size(), 0.0);
  parallel_for(directions.size(), threads, [&](std::size_t di) {
    const auto& dir = directions[di];
    // equal absolute steps on every moving axis, so the infinity-norm of the
    // step is attained by all of them
    double half = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i)
      if (dir[i] != 0) half = std::min(half, 0.5 * (theta_box[i].hi - theta_box[i].lo));
    auto point = [&](int k) {
      Vector th(p);
      const double s = -half + 2.0 * half * k / (lip.samples - 1);
      for (int i = 0; i < p; ++i) th[i] = 0.5 * (theta_box[i].lo + theta_box[i].hi) + dir[i] * s;
      return th;
    };
    Vector prev_theta = point(0);
    Matrix prev = build_dictionary(family, grid, support, prev_theta, 0).G[0];
    double best = 0.0;
    for (int k = 1; k < lip.samples; ++k) {
      Vector th = point(k);
      Matrix G = build_dictionary(family, grid, support, th, 0).G[0];
      const double dth = (th - prev_theta).cwiseAbs().maxCoeff();
      if (dth > 0.0) best = std::max(best, inf_norm(G - prev) / dth);
      prev = std::move(G);
      prev_theta = th;
    }
    kslopes[di] = best;
  });
  for (double s : kslopes) out.K_raw = std::max(out.K_raw, s);

  out.C_Delta = lip.safety_factor * out.C_Delta_raw;
  out.K = lip.safety_factor * out.K_raw;
  return out;
}

}  // namespace psfunmix
