#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace kinetic {

/// Hard-potential kernel with angular cutoff: B(z, ω) = |z|^κ b(cos θ) with
/// b(c) = b0 |c|. The angular integral of b over S² is 2π b0.
struct KernelSpec {
  double kappa = 1.0;
  double b0 = 1.0;

  std::vector<std::string> violations() const {
    std::vector<std::string> out;
    if (!(kappa >= 0.0 && kappa <= 1.0)) out.push_back("kernel.kappa must lie in [0, 1]");
    if (!(b0 > 0.0)) out.push_back("kernel.b0 must be positive");
    return out;
  }

  double angular_integral() const { return 2.0 * std::numbers::pi * b0; }

  /// |z|^κ with the convention 0^0 = 1.
  double speed_factor(double speed) const {
    if (kappa == 0.0) return 1.0;
    if (kappa == 1.0) return speed;
    return std::pow(speed, kappa);
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

}  // namespace kinetic
