#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>

namespace psfunmix {

/// Closed interval of admissible shape parameters.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  double width() const noexcept { return hi - lo; }
  double clamp(double x) const noexcept { return x < lo ? lo : (x > hi ? hi : x); }
};

/// Evaluation rules of a parametric PSF family g(theta, t) and its first two
/// theta-derivatives. Implementations must be even in t and thread-safe.
class KernelRules {
 public:
  virtual ~KernelRules() = default;

  /// d^order/dtheta^order g(theta, t), no domain checks.
  virtual double value(int order, double theta, double t) const = 0;

  /// out[s] = d^order g(theta, u[s] - shift). Override for vectorised kernels.
  virtual void fill(int order, double theta, double shift, std::span<const double> u,
                    std::span<double> out) const;

  virtual std::string name() const = 0;
};

/// A kernel family: evaluation rules plus the shape domain Theta.
///
/// Cheap to copy; the rules are shared and immutable.
class KernelFamily {
 public:
  KernelFamily(std::shared_ptr<const KernelRules> rules, Interval theta_domain);

  const Interval& theta_domain() const noexcept { return domain_; }
  std::string name() const { return rules_->name(); }
  const KernelRules& rules() const noexcept { return *rules_; }

  /// Unchecked evaluation for inner loops.
  double raw(int order, double theta, double t) const { return rules_->value(order, theta, t); }

  void fill(int order, double theta, double shift, std::span<const double> u,
            std::span<double> out) const {
    rules_->fill(order, theta, shift, u, out);
  }

  /// Throws DomainError when theta is not in the domain.
  void check_theta(double theta) const;

 private:
  std::shared_ptr<const KernelRules> rules_;
  Interval domain_;
};

inline constexpr Interval kLorentzDefaultDomain{1e-6, 10.0};

/// Lorentz family g(theta, t) = theta / (pi (theta^2 + t^2)) with analytic
/// theta-derivatives.
KernelFamily lorentz_family(Interval theta_domain = kLorentzDefaultDomain);

/// Gaussian family g(theta, t) = exp(-t^2 / (2 theta^2)) / (sqrt(2 pi) theta).
/// Not used by the experiments; provided as a faster-decaying alternative.
KernelFamily gaussian_family(Interval theta_domain = {1e-6, 10.0});

using KernelFn = std::function<double(double theta, double t)>;

/// User family from three rules (value, first and second theta-derivative).
KernelFamily custom_family(std::string name, Interval theta_domain, KernelFn g, KernelFn d1g,
                           KernelFn d2g);

/// User family from the value rule only. Derivatives come from central finite
/// differences in theta (step 1e-4 * max(|theta|, 1) for both orders), so they
/// carry roughly 1e-8 (first) and 1e-6 (second) relative error.
KernelFamily finite_difference_family(std::string name, Interval theta_domain, KernelFn g);

/// Checked evaluation of d^order g(theta, t).
///
/// Throws InputError for order outside {0,1,2} or non-finite t, DomainError
/// when theta is outside the family's domain.
double eval_kernel(const KernelFamily& family, int order, double theta, double t);

}  // namespace psfunmix
