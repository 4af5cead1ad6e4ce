#include "psfunmix/config.hpp"

#include <cmath>

#include "psfunmix/csv.hpp"
#include "psfunmix/errors.hpp"

namespace psfunmix {

using nlohmann::json;

namespace {

const json* section(const json& doc, const char* key) {
  if (!doc.contains(key)) return nullptr;
  const json& s = doc.at(key);
  if (!s.is_object()) throw ValidationError(std::string("'") + key + "' must be a table");
  return &s;
}

double number(const json& s, const std::string& path, const char* key, double fallback) {
  if (!s.contains(key)) return fallback;
  const json& v = s.at(key);
  if (!v.is_number()) throw ValidationError("'" + path + "." + key + "' must be a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError("'" + path + "." + key + "' must be finite");
  return x;
}

double positive(const json& s, const std::string& path, const char* key, double fallback) {
  const double x = number(s, path, key, fallback);
  if (!(x > 0.0)) throw ValidationError("'" + path + "." + key + "' must be positive");
  return x;
}

long integer(const json& s, const std::string& path, const char* key, long fallback,
             long min = 0) {
  if (!s.contains(key)) return fallback;
  const json& v = s.at(key);
  if (!v.is_number_integer()) throw ValidationError("'" + path + "." + key + "' must be an integer");
  const long x = v.get<long>();
  if (x < min) {
    throw ValidationError("'" + path + "." + key + "' must be at least " + std::to_string(min));
  }
  return x;
}

bool boolean(const json& s, const std::string& path, const char* key, bool fallback) {
  if (!s.contains(key)) return fallback;
  const json& v = s.at(key);
  if (!v.is_boolean()) throw ValidationError("'" + path + "." + key + "' must be true or false");
  return v.get<bool>();
}

std::string text(const json& s, const std::string& path, const char* key, std::string fallback) {
  if (!s.contains(key)) return fallback;
  const json& v = s.at(key);
  if (!v.is_string()) throw ValidationError("'" + path + "." + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError("'" + path + "' must be a list of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw ValidationError("'" + path + "' must be a list of numbers");
    out.push_back(e.get<double>());
    if (!std::isfinite(out.back())) throw ValidationError("'" + path + "' has a non-finite entry");
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<Interval> intervals(const json& v, const std::string& path) {
  if (!v.is_array()) throw ValidationError("'" + path + "' must be a list of [lo, hi] pairs");
  std::vector<Interval> out;
  for (const auto& e : v) {
    const auto pair = numbers(e, path);
    if (pair.size() != 2 || !(pair[0] > 0.0) || !(pair[1] >= pair[0])) {
      throw ValidationError("'" + path + "' entries must be [lo, hi] with 0 < lo <= hi");
    }
    out.push_back({pair[0], pair[1]});
  }
  return out;
}

void read_metrics(const json& s, MetricOptions& m) {
  m.scan_density = static_cast<int>(integer(s, "metrics", "scan_density", m.scan_density, 1));
  m.scan_span = positive(s, "metrics", "scan_span", m.scan_span);
  m.term_tolerance = positive(s, "metrics", "term_tolerance", m.term_tolerance);
  m.max_terms = integer(s, "metrics", "max_terms", m.max_terms, 1);
  m.explicit_far_terms = integer(s, "metrics", "explicit_far_terms", m.explicit_far_terms, 0);
  m.residual_tolerance = positive(s, "metrics", "residual_tolerance", m.residual_tolerance);
  m.chebyshev_nodes = static_cast<int>(integer(s, "metrics", "chebyshev_nodes", m.chebyshev_nodes, 4));
}

void read_solver(const json& s, SolveConfig& c) {
  const std::string method = text(s, "solver", "method", "lm");
  if (method == "lm") {
    c.method = SolveMethod::LevenbergMarquardt;
  } else if (method == "gd") {
    c.method = SolveMethod::GradientDescent;
  } else {
    throw ValidationError("'solver.method' must be \"lm\" or \"gd\"");
  }
  if (s.contains("step")) c.step = positive(s, "solver", "step", 1.0);
  c.max_iters = static_cast<int>(integer(s, "solver", "max_iters", c.max_iters, 1));
  c.grad_tol = number(s, "solver", "grad_tol", c.grad_tol);
  c.step_tol = number(s, "solver", "step_tol", c.step_tol);
  if (s.contains("lm_damping_init")) {
    c.lm_damping_init = positive(s, "solver", "lm_damping_init", 1.0);
  }
  const std::string scaling = text(s, "solver", "lm_scaling", "marquardt");
  if (scaling == "marquardt") {
    c.lm_scaling = DampingScaling::Marquardt;
  } else if (scaling == "identity") {
    c.lm_scaling = DampingScaling::Identity;
  } else {
    throw ValidationError("'solver.lm_scaling' must be \"marquardt\" or \"identity\"");
  }
  if (s.contains("theta_bounds")) c.theta_bounds = intervals(s.at("theta_bounds"), "solver.theta_bounds");
  c.divergence_factor = positive(s, "solver", "divergence_factor", c.divergence_factor);
  c.record_params = boolean(s, "solver", "record_params", c.record_params);
}

void read_libs(const json& s, LibsConfig& l) {
  l.lines = text(s, "libs", "lines", l.lines);
  l.spectrum = text(s, "libs", "spectrum", l.spectrum);
  l.seeds = static_cast<int>(integer(s, "libs", "seeds", l.seeds, 1));
  if (const json* syn = section(s, "synthetic")) {
    auto& o = l.synthetic;
    const std::string p = "libs.synthetic";
    o.wavelength_lo = number(*syn, p, "wavelength_lo", o.wavelength_lo);
    o.wavelength_hi = number(*syn, p, "wavelength_hi", o.wavelength_hi);
    if (!(o.wavelength_hi > o.wavelength_lo)) {
      throw ValidationError("'libs.synthetic' needs wavelength_lo < wavelength_hi");
    }
    o.N = static_cast<int>(integer(*syn, p, "N", o.N, 2));
    if (syn->contains("theta")) o.theta = to_vector(numbers(syn->at("theta"), p + ".theta"));
    if (syn->contains("nu")) o.nu = to_vector(numbers(syn->at("nu"), p + ".nu"));
    o.baseline_intercept = number(*syn, p, "baseline_intercept", o.baseline_intercept);
    o.baseline_slope = number(*syn, p, "baseline_slope", o.baseline_slope);
    o.transfer_lo = positive(*syn, p, "transfer_lo", o.transfer_lo);
    o.transfer_hi = positive(*syn, p, "transfer_hi", o.transfer_hi);
    if (syn->contains("snr_db")) {
      const json& v = syn->at("snr_db");
      if (v.is_string() && v.get<std::string>() == "inf") {
        o.snr_db = INFINITY;
      } else {
        o.snr_db = number(*syn, p, "snr_db", o.snr_db);
      }
    }
  }
  if (const json* b = section(s, "baseline")) {
    l.baseline.asymmetry = positive(*b, "libs.baseline", "asymmetry", l.baseline.asymmetry);
    if (!(l.baseline.asymmetry < 1.0)) throw ValidationError("'libs.baseline.asymmetry' must be < 1");
    l.baseline.smoothness = positive(*b, "libs.baseline", "smoothness", l.baseline.smoothness);
    l.baseline.iterations =
        static_cast<int>(integer(*b, "libs.baseline", "iterations", l.baseline.iterations, 1));
  }
  if (const json* f = section(s, "fit")) {
    l.fit.scan_lo = number(*f, "libs.fit", "scan_lo", l.fit.scan_lo);
    l.fit.scan_hi = number(*f, "libs.fit", "scan_hi", l.fit.scan_hi);
    l.fit.scan_points = static_cast<int>(integer(*f, "libs.fit", "scan_points", l.fit.scan_points, 2));
    l.fit.scan_sweeps = static_cast<int>(integer(*f, "libs.fit", "scan_sweeps", l.fit.scan_sweeps, 1));
  }
}

}  // namespace

KernelFamily RunConfig::kernel() const {
  if (family == "lorentz") return lorentz_family(theta_domain);
  if (family == "gaussian") return gaussian_family(theta_domain);
  throw ValidationError("unknown kernel family '" + family + "'");
}

ExperimentSetup RunConfig::setup() const {
  if (!grid) throw ValidationError("config has no [grid] section");
  if (!support) throw ValidationError("config has no [support] section");
  if (!params) throw ValidationError("config has no params.theta");
  return ExperimentSetup{kernel(), *grid, *support, *params};
}

ExperimentSetup RunConfig::setup_at(double Delta) const {
  ExperimentSetup s = setup();
  if (!spikes.empty()) {
    s.support = interleaved_support(spikes, Delta);
  } else {
    s.support = rescale_support(s.support, Delta);
  }
  return s;
}

std::vector<double> RunConfig::delta_list() const {
  if (!deltas.empty()) return deltas;
  if (Delta) return {*Delta};
  return {setup().Delta()};
}

std::uint64_t RunConfig::hash() const { return fnv1a64(source.dump()); }

RunConfig parse_config(const std::string& text_in) {
  json doc;
  try {
    doc = json::parse(text_in);
  } catch (const json::parse_error& e) {
    // byte offset to line number
    std::size_t line = 1;
    for (std::size_t k = 0; k < e.byte && k < text_in.size(); ++k) {
      if (text_in[k] == '\n') ++line;
    }
    throw ParseError(std::string("malformed config: ") + e.what(), line);
  }
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");

  RunConfig c;
  c.source = doc;
  c.seed = static_cast<std::uint64_t>(integer(doc, "", "seed", 1, 0));
  c.threads = static_cast<int>(integer(doc, "", "threads", 0, 0));

  if (const json* k = section(doc, "kernel")) {
    c.family = text(*k, "kernel", "family", c.family);
    c.theta_domain.lo = positive(*k, "kernel", "theta_min", c.theta_domain.lo);
    c.theta_domain.hi = positive(*k, "kernel", "theta_max", c.theta_domain.hi);
    if (!(c.theta_domain.hi > c.theta_domain.lo)) {
      throw ValidationError("'kernel' needs theta_min < theta_max");
    }
    (void)c.kernel();
  }

  if (const json* g = section(doc, "grid")) {
    if (!g->contains("T") || !g->contains("N")) throw ValidationError("'grid' needs T and N");
    const double T = positive(*g, "grid", "T", 0.0);
    const long N = integer(*g, "grid", "N", 0, 2);
    c.grid = make_grid(T, static_cast<int>(N));
  }

  if (const json* s = section(doc, "support")) {
    if (s->contains("locations")) {
      const json& loc = s->at("locations");
      if (!loc.is_array() || loc.empty()) {
        throw ValidationError("'support.locations' must be a non-empty list of lists");
      }
      std::vector<std::vector<double>> all;
      for (std::size_t i = 0; i < loc.size(); ++i) {
        all.push_back(numbers(loc[i], "support.locations[" + std::to_string(i) + "]"));
        if (all.back().empty()) throw ValidationError("every modality needs at least one spike");
      }
      c.support = SupportSpec(std::move(all));
    } else if (s->contains("spikes")) {
      for (double v : numbers(s->at("spikes"), "support.spikes")) {
        if (v < 1.0 || v != std::floor(v)) {
          throw ValidationError("'support.spikes' entries must be positive integers");
        }
        c.spikes.push_back(static_cast<int>(v));
      }
      if (!s->contains("Delta")) throw ValidationError("'support' needs Delta with spikes");
      const double Delta = positive(*s, "support", "Delta", 0.0);
      c.support = interleaved_support(c.spikes, Delta);
      c.Delta = Delta;
    } else {
      throw ValidationError("'support' needs locations or (Delta, spikes)");
    }
  }

  if (const json* p = section(doc, "params")) {
    if (!p->contains("theta")) throw ValidationError("'params' needs theta");
    MixtureParams params;
    params.theta = to_vector(numbers(p->at("theta"), "params.theta"));
    if (!c.support) throw ValidationError("'params' needs a [support] section");
    if (params.theta.size() != c.support->modalities()) {
      throw ValidationError("'params.theta' needs one entry per modality");
    }
    const KernelFamily fam = c.kernel();
    for (double t : params.theta) {
      if (!fam.theta_domain().contains(t)) {
        throw ValidationError("'params.theta' entry " + format_double(t) +
                              " is outside the kernel domain");
      }
    }
    if (p->contains("eta")) {
      params.eta = to_vector(numbers(p->at("eta"), "params.eta"));
      if (params.eta.size() != c.support->total_spikes()) {
        throw ValidationError("'params.eta' needs one entry per spike");
      }
    } else {
      params.eta = uniform_amplitudes(*c.support);
    }
    c.params = params;
  }

  if (const json* m = section(doc, "metrics")) read_metrics(*m, c.certify.metrics);
  if (const json* l = section(doc, "lipschitz")) {
    auto& lip = c.certify.lipschitz;
    lip.samples = static_cast<int>(integer(*l, "lipschitz", "samples", lip.samples, 2));
    lip.partner_samples =
        static_cast<int>(integer(*l, "lipschitz", "partner_samples", lip.partner_samples, 1));
    lip.safety_factor = positive(*l, "lipschitz", "safety_factor", lip.safety_factor);
  }
  if (const json* s = section(doc, "certificate")) {
    c.certify.certificate.alternative_grouping =
        boolean(*s, "certificate", "alternative_grouping", false);
    c.certify.box_fraction = positive(*s, "certificate", "box_fraction", c.certify.box_fraction);
    if (s->contains("theta_box")) {
      c.certify.theta_box = intervals(s->at("theta_box"), "certificate.theta_box");
    }
  }
  if (const json* s = section(doc, "solver")) read_solver(*s, c.solver);

  if (const json* e = section(doc, "experiment")) {
    if (e->contains("deltas")) {
      c.deltas = numbers(e->at("deltas"), "experiment.deltas");
      for (double d : c.deltas) {
        if (!(d > 0.0)) throw ValidationError("'experiment.deltas' must be positive");
      }
    }
    if (const json* m = section(*e, "montecarlo")) {
      auto& o = c.montecarlo;
      const std::string p = "experiment.montecarlo";
      o.trials = static_cast<int>(integer(*m, p, "trials", o.trials, 1));
      o.bins = static_cast<int>(integer(*m, p, "bins", o.bins, 1));
      o.d_min = positive(*m, p, "d_min", o.d_min);
      o.d_max = positive(*m, p, "d_max", o.d_max);
      if (m->contains("distances")) o.distances = numbers(m->at("distances"), p + ".distances");
      o.joint_eta = boolean(*m, p, "joint_eta", o.joint_eta);
      o.success_tol = positive(*m, p, "success_tol", o.success_tol);
    }
    if (const json* l = section(*e, "landscape")) {
      auto& o = c.landscape;
      o.resolution = static_cast<int>(integer(*l, "experiment.landscape", "resolution", o.resolution, 1));
      o.log_scale = boolean(*l, "experiment.landscape", "log_scale", o.log_scale);
      o.half_width = positive(*l, "experiment.landscape", "half_width", o.half_width);
    }
  }
  if (const json* l = section(doc, "libs")) read_libs(*l, c.libs);

  c.montecarlo.solver = c.solver;
  c.libs.fit.solver = c.solver;
  c.montecarlo.seed = c.seed;
  c.libs.synthetic.seed = c.seed;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return parse_config(read_file(path)); }

}  // namespace psfunmix
