#include "psfunmix/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"
#include "psfunmix/parallel.hpp"

namespace psfunmix {

LossProblem ExperimentSetup::problem() const {
  const DictionaryStack dict = build_dictionary(family, grid, support, truth.theta, 0);
  return LossProblem(family, grid, support, synthesize(dict, truth.eta));
}

SupportSpec rescale_support(const SupportSpec& support, double Delta) {
  const Separation sep = min_separation(support);
  if (sep.undefined) throw InputError("cannot rescale a support with a single spike");
  if (!(Delta > 0.0)) throw InputError("separation must be positive");
  const double factor = Delta / sep.delta;
  auto loc = support.all_locations();
  for (auto& mod : loc) {
    for (double& t : mod) t *= factor;
  }
  return SupportSpec(std::move(loc));
}

ExperimentSetup with_separation(const ExperimentSetup& setup, double Delta) {
  ExperimentSetup out = setup;
  out.support = rescale_support(setup.support, Delta);
  return out;
}

std::vector<Interval> default_theta_box(const ExperimentSetup& setup, double fraction) {
  if (!(fraction > 0.0)) throw InputError("box fraction must be positive");
  const Interval& dom = setup.family.theta_domain();
  std::vector<Interval> box;
  for (Eigen::Index i = 0; i < setup.truth.theta.size(); ++i) {
    const double t = setup.truth.theta[i];
    box.push_back({dom.clamp(t * (1.0 - fraction)), dom.clamp(t * (1.0 + fraction))});
  }
  return box;
}

CertificationResult certify(const ExperimentSetup& setup, const CertifyOptions& opts) {
  const double D = setup.Delta();
  CertificationResult out;
  out.table =
      build_coherence_table(setup.family, setup.grid, setup.truth.theta, {D}, opts.metrics,
                            opts.threads);
  const auto box =
      opts.theta_box.empty() ? default_theta_box(setup, opts.box_fraction) : opts.theta_box;
  out.lipschitz = estimate_lipschitz(setup.family, setup.grid, setup.support, D, box,
                                     opts.lipschitz, opts.metrics, opts.threads);
  out.certificate = compute_constants(out.table, out.lipschitz, setup.support, setup.truth.theta,
                                      setup.truth.eta, opts.certificate);
  return out;
}

namespace {

std::vector<double> axis_values(double center, const Interval& dom, const LandscapeOptions& o) {
  if (o.resolution < 1) throw InputError("landscape resolution must be positive");
  std::vector<double> out(o.resolution);
  const int mid = (o.resolution - 1) / 2;
  for (int k = 0; k < o.resolution; ++k) {
    const double s = o.resolution == 1 ? 0.0 : -1.0 + 2.0 * k / (o.resolution - 1.0);
    double v = center;
    if (!(o.resolution % 2 == 1 && k == mid)) {
      v = o.log_scale ? center * std::pow(10.0, o.half_width * s)
                      : center * (1.0 + o.half_width * s);
    }
    out[k] = dom.clamp(v);
  }
  return out;
}

}  // namespace

std::string Landscape::csv() const {
  CsvBuilder csv({"theta1", "theta2", "loss"});
  for (std::size_t a = 0; a < theta1.size(); ++a) {
    for (std::size_t b = 0; b < theta2.size(); ++b) {
      csv.row(std::vector<double>{theta1[a], theta2[b],
                                  loss(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))});
    }
  }
  return csv.str();
}

Landscape landscape(const ExperimentSetup& setup, const LandscapeOptions& opts,
                    const BasinCertificate* cert) {
  if (setup.support.modalities() != 2) {
    throw InputError("2-D landscapes need exactly two modalities; use landscape_slice");
  }
  const Interval& dom = setup.family.theta_domain();
  Landscape out;
  out.Delta = setup.Delta();
  out.theta1 = axis_values(setup.truth.theta[0], dom, opts);
  out.theta2 = axis_values(setup.truth.theta[1], dom, opts);
  if (cert && cert->feasible) out.epsilon_0 = cert->epsilon_0;
  const LossProblem problem = setup.problem();
  const std::size_t n1 = out.theta1.size();
  const std::size_t n2 = out.theta2.size();
  std::vector<double> values(n1 * n2);
  parallel_for(values.size(), opts.threads, [&](std::size_t k) {
    MixtureParams params{Vector(2), setup.truth.eta};
    params.theta << out.theta1[k / n2], out.theta2[k % n2];
    values[k] = problem.loss(params);
  });
  out.loss.resize(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n2));
  for (std::size_t k = 0; k < values.size(); ++k) {
    out.loss(static_cast<Eigen::Index>(k / n2), static_cast<Eigen::Index>(k % n2)) = values[k];
  }
  return out;
}

std::vector<std::pair<double, double>> landscape_slice(const ExperimentSetup& setup, int axis,
                                                       const LandscapeOptions& opts) {
  const int p = setup.support.modalities();
  if (axis < 0 || axis >= p) throw InputError("slice axis out of range");
  const auto xs = axis_values(setup.truth.theta[axis], setup.family.theta_domain(), opts);
  const LossProblem problem = setup.problem();
  std::vector<std::pair<double, double>> out(xs.size());
  parallel_for(xs.size(), opts.threads, [&](std::size_t k) {
    MixtureParams params = setup.truth;
    params.theta[axis] = xs[k];
    out[k] = {xs[k], problem.loss(params)};
  });
  return out;
}

std::vector<double> log_spaced(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi >= lo) || n < 1) throw InputError("log_spaced needs 0 < lo <= hi, n >= 1");
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) {
    out[k] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1));
  }
  out.back() = hi;
  return out;
}

Vector sample_inf_sphere(const Vector& center, double d, std::uint64_t seed, std::uint64_t bin,
                         std::uint64_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(bin), static_cast<std::uint32_t>(trial)};
  std::mt19937_64 rng(seq);
  const auto n = center.size();
  Vector out(n);
  // uniform on the sphere: pick the face (coordinate and sign), then uniform
  // on that face
  const auto face = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(2 * n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const double u = std::generate_canonical<double, 53>(rng);
    out[k] = center[k] + d * (2.0 * u - 1.0);
  }
  out[face / 2] = center[face / 2] + (face % 2 == 0 ? d : -d);
  return out;
}

std::string SuccessCurve::csv() const {
  CsvBuilder csv({"distance", "trials", "successes", "rate", "epsilon0"});
  for (const auto& b : bins) {
    csv.row(std::vector<std::string>{format_double(b.distance), std::to_string(b.trials),
                                     std::to_string(b.successes), format_double(b.rate),
                                     epsilon_0 ? format_double(*epsilon_0) : std::string()});
  }
  return csv.str();
}

SuccessCurve monte_carlo(const ExperimentSetup& setup, const MonteCarloOptions& opts,
                         const BasinCertificate* cert) {
  if (opts.trials < 1) throw InputError("Monte Carlo needs at least one trial per bin");
  std::vector<double> distances = opts.distances;
  if (distances.empty()) distances = log_spaced(opts.d_min, opts.d_max, opts.bins);
  for (double d : distances) {
    if (!(d >= 0.0)) throw InputError("distances must be non-negative");
  }
  std::sort(distances.begin(), distances.end());

  const LossProblem problem = setup.problem();
  const int p = setup.support.modalities();
  std::vector<Interval> bounds = opts.solver.theta_bounds;
  if (bounds.empty()) bounds.assign(p, setup.family.theta_domain());

  SolveConfig solver = opts.solver;
  solver.record_params = false;

  const std::size_t trials = static_cast<std::size_t>(opts.trials);
  std::vector<char> success(distances.size() * trials, 0);
  parallel_for(success.size(), opts.threads, [&](std::size_t k) {
    const std::size_t bin = k / trials;
    const std::size_t trial = k % trials;
    MixtureParams init = setup.truth;
    if (opts.joint_eta) {
      Vector center(p + init.eta.size());
      center << setup.truth.theta, setup.truth.eta;
      const Vector x = sample_inf_sphere(center, distances[bin], opts.seed, bin, trial);
      init.theta = x.head(p);
      init.eta = x.tail(init.eta.size());
    } else {
      init.theta = sample_inf_sphere(setup.truth.theta, distances[bin], opts.seed, bin, trial);
    }
    for (int i = 0; i < p; ++i) init.theta[i] = bounds[i].clamp(init.theta[i]);
    try {
      const SolveReport rep = solve(problem, init, solver);
      success[k] = theta_recovered(rep.params.theta, setup.truth.theta, opts.success_tol) ? 1 : 0;
    } catch (const Error&) {
      success[k] = 0;
    }
  });

  SuccessCurve curve;
  curve.Delta = setup.Delta();
  if (cert && cert->feasible) curve.epsilon_0 = cert->epsilon_0;
  for (std::size_t b = 0; b < distances.size(); ++b) {
    SuccessBin bin;
    bin.distance = distances[b];
    bin.trials = opts.trials;
    for (std::size_t t = 0; t < trials; ++t) bin.successes += success[b * trials + t];
    bin.rate = static_cast<double>(bin.successes) / bin.trials;
    curve.bins.push_back(bin);
  }
  return curve;
}

std::vector<double> isotonic_nonincreasing(const std::vector<double>& values,
                                           const std::vector<double>& weights) {
  const std::size_t n = values.size();
  if (!weights.empty() && weights.size() != n) throw InputError("weights length mismatch");
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> stack;
  for (std::size_t k = 0; k < n; ++k) {
    Block b{values[k], weights.empty() ? 1.0 : weights[k], 1};
    stack.push_back(b);
    while (stack.size() >= 2 && stack[stack.size() - 2].mean < stack.back().mean) {
      const Block top = stack.back();
      stack.pop_back();
      Block& prev = stack.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (const auto& b : stack) out.insert(out.end(), b.count, b.mean);
  return out;
}

std::string plot_spec(const std::string& figure) {
  if (figure == "metrics") {
    return "table = metrics.csv\n"
           "x = Delta\nx_scale = log\n"
           "y = C00_11,C11_11,C10_12,I0_1\ny_scale = log\n"
           "title = coherence and interference functions versus separation\n";
  }
  if (figure == "landscape") {
    return "table = landscape_<Delta>.csv\n"
           "x = theta1\nx_scale = log\ny = theta2\ny_scale = log\n"
           "z = loss\nz_scale = log\nkind = contour\n"
           "overlay = certificate_<Delta>.json:epsilon_0 as infinity-ball around theta*\n";
  }
  if (figure == "montecarlo") {
    return "table = success_curve.csv\n"
           "x = distance\nx_scale = log\ny = rate\ny_scale = linear\ny_range = 0,1\n"
           "vline = epsilon0\n";
  }
  throw InputError("unknown figure '" + figure + "'");
}

}  // namespace psfunmix
