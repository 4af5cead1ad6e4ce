#include "psfunmix/kernels.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "psfunmix/errors.hpp"

namespace psfunmix {

void KernelRules::fill(int order, double theta, double shift, std::span<const double> u,
                       std::span<double> out) const {
  for (std::size_t s = 0; s < u.size(); ++s) out[s] = value(order, theta, u[s] - shift);
}

KernelFamily::KernelFamily(std::shared_ptr<const KernelRules> rules, Interval theta_domain)
    : rules_(std::move(rules)), domain_(theta_domain) {
  if (!rules_) throw InputError("kernel family needs evaluation rules");
  if (!(domain_.lo < domain_.hi) || !std::isfinite(domain_.lo) || !std::isfinite(domain_.hi)) {
    throw InputError("kernel family domain must be a finite interval with lo < hi");
  }
}

void KernelFamily::check_theta(double theta) const {
  if (!std::isfinite(theta) || !domain_.contains(theta)) {
    std::ostringstream os;
    os << name() << ": theta=" << theta << " outside [" << domain_.lo << ", " << domain_.hi
       << "]";
    throw DomainError(os.str());
  }
}

namespace {

constexpr double kPi = std::numbers::pi;

class LorentzRules final : public KernelRules {
 public:
  double value(int order, double theta, double t) const override {
    const double th2 = theta * theta;
    const double t2 = t * t;
    const double q = th2 + t2;
    switch (order) {
      case 0:
        return theta / (kPi * q);
      case 1:
        return (t2 - th2) / (kPi * q * q);
      default:
        return 2.0 * theta * (th2 - 3.0 * t2) / (kPi * q * q * q);
    }
  }

  void fill(int order, double theta, double shift, std::span<const double> u,
            std::span<double> out) const override {
    const double th2 = theta * theta;
    const std::size_t n = u.size();
    if (order == 0) {
      const double c = theta / kPi;
      for (std::size_t s = 0; s < n; ++s) {
        const double t = u[s] - shift;
        out[s] = c / (th2 + t * t);
      }
    } else if (order == 1) {
      for (std::size_t s = 0; s < n; ++s) {
        const double t = u[s] - shift;
        const double t2 = t * t;
        const double q = th2 + t2;
        out[s] = (t2 - th2) / (kPi * q * q);
      }
    } else {
      const double c = 2.0 * theta / kPi;
      for (std::size_t s = 0; s < n; ++s) {
        const double t = u[s] - shift;
        const double t2 = t * t;
        const double q = th2 + t2;
        out[s] = c * (th2 - 3.0 * t2) / (q * q * q);
      }
    }
  }

  std::string name() const override { return "lorentz"; }
};

class GaussianRules final : public KernelRules {
 public:
  double value(int order, double theta, double t) const override {
    // g = exp(-t^2/(2 th^2)) / (sqrt(2 pi) th); with z = t^2/th^2:
    // dg/dth = g (z - 1)/th, d2g/dth2 = g (z^2 - 5 z + 2)/th^2
    const double z = (t * t) / (theta * theta);
    const double g = std::exp(-0.5 * z) / (std::sqrt(2.0 * kPi) * theta);
    switch (order) {
      case 0:
        return g;
      case 1:
        return g * (z - 1.0) / theta;
      default:
        return g * (z * z - 5.0 * z + 2.0) / (theta * theta);
    }
  }
  std::string name() const override { return "gaussian"; }
};

class CustomRules final : public KernelRules {
 public:
  CustomRules(std::string name, KernelFn g, KernelFn d1, KernelFn d2)
      : name_(std::move(name)), fn_{std::move(g), std::move(d1), std::move(d2)} {}

  double value(int order, double theta, double t) const override { return fn_[order](theta, t); }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  KernelFn fn_[3];
};

class FiniteDifferenceRules final : public KernelRules {
 public:
  FiniteDifferenceRules(std::string name, KernelFn g) : name_(std::move(name)), g_(std::move(g)) {}

  double value(int order, double theta, double t) const override {
    if (order == 0) return g_(theta, t);
    const double h = 1e-4 * std::max(std::abs(theta), 1.0);
    if (order == 1) return (g_(theta + h, t) - g_(theta - h, t)) / (2.0 * h);
    return (g_(theta + h, t) - 2.0 * g_(theta, t) + g_(theta - h, t)) / (h * h);
  }
  std::string name() const override { return name_; }

 private:
  std::string name_;
  KernelFn g_;
};

}  // namespace

KernelFamily lorentz_family(Interval theta_domain) {
  if (theta_domain.lo <= 0.0) throw InputError("Lorentz family requires theta_lo > 0");
  return KernelFamily(std::make_shared<LorentzRules>(), theta_domain);
}

KernelFamily gaussian_family(Interval theta_domain) {
  if (theta_domain.lo <= 0.0) throw InputError("Gaussian family requires theta_lo > 0");
  return KernelFamily(std::make_shared<GaussianRules>(), theta_domain);
}

KernelFamily custom_family(std::string name, Interval theta_domain, KernelFn g, KernelFn d1g,
                           KernelFn d2g) {
  if (!g || !d1g || !d2g) throw InputError("custom family needs all three evaluation rules");
  return KernelFamily(
      std::make_shared<CustomRules>(std::move(name), std::move(g), std::move(d1g), std::move(d2g)),
      theta_domain);
}

KernelFamily finite_difference_family(std::string name, Interval theta_domain, KernelFn g) {
  if (!g) throw InputError("finite-difference family needs a value rule");
  return KernelFamily(std::make_shared<FiniteDifferenceRules>(std::move(name), std::move(g)),
                      theta_domain);
}

double eval_kernel(const KernelFamily& family, int order, double theta, double t) {
  if (order < 0 || order > 2) throw InputError("derivative order must be 0, 1 or 2");
  if (!std::isfinite(t)) throw InputError("kernel argument t must be finite");
  family.check_theta(theta);
  return family.raw(order, theta, t);
}

}  // namespace psfunmix
