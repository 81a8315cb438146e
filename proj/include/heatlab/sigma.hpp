#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "heatlab/errors.hpp"

namespace heatlab {

// Diffusion coefficient of the nonlinear equation. sigma_min, sigma_max and
// lipschitz are derived from the parameters when the spec is built.
struct SigmaSpec {
  enum class Kind { constant, sine, tabulated };

  Kind kind = Kind::constant;
  // constant: a; sine: a + b*sin(omega*z)
  double a = 1.0;
  double b = 0.0;
  double omega = 1.0;
  // tabulated: values[i] at z = z0 + i*dz, linear in between, clamped outside
  double z0 = 0.0;
  double dz = 1.0;
  std::vector<double> table;

  double sigma_min = 1.0;
  double sigma_max = 1.0;
  double lipschitz = 0.0;

  static SigmaSpec constant(double c0) {
    SigmaSpec s;
    s.kind = Kind::constant;
    s.a = c0;
    s.b = 0.0;
    s.derive();
    return s;
  }

  static SigmaSpec sine(double a, double b, double omega = 1.0) {
    SigmaSpec s;
    s.kind = Kind::sine;
    s.a = a;
    s.b = b;
    s.omega = omega;
    s.derive();
    return s;
  }

  static SigmaSpec tabulated(double z0, double dz, std::vector<double> values) {
    SigmaSpec s;
    s.kind = Kind::tabulated;
    s.z0 = z0;
    s.dz = dz;
    s.table = std::move(values);
    s.derive();
    return s;
  }

  double operator()(double z) const {
    switch (kind) {
      case Kind::constant:
        return a;
      case Kind::sine:
        return a + b * std::sin(omega * z);
      case Kind::tabulated: {
        const double pos = (z - z0) / dz;
        if (pos <= 0.0) return table.front();
        const auto last = static_cast<double>(table.size() - 1);
        if (pos >= last) return table.back();
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - static_cast<double>(i);
        return table[i] + f * (table[i + 1] - table[i]);
      }
    }
    return a;
  }

  bool is_constant() const { return kind == Kind::constant; }

  friend bool operator==(const SigmaSpec&, const SigmaSpec&) = default;

 private:
  void derive() {
    switch (kind) {
      case Kind::constant:
        sigma_min = sigma_max = a;
        lipschitz = 0.0;
        break;
      case Kind::sine: {
        const double amp = std::fabs(b);
        const double w = std::fabs(omega);
        sigma_min = a - amp;
        // bound on |sigma| and on its first three derivatives
        sigma_max = std::max({a + amp, amp * w, amp * w * w, amp * w * w * w});
        lipschitz = amp * w;
        break;
      }
      case Kind::tabulated: {
        if (table.size() < 2 || !(dz > 0.0)) throw ConfigError("sigma: table needs >= 2 values and dz > 0");
        sigma_min = *std::min_element(table.begin(), table.end());
        sigma_max = *std::max_element(table.begin(), table.end());
        lipschitz = 0.0;
        for (std::size_t i = 0; i + 1 < table.size(); ++i) {
          lipschitz = std::max(lipschitz, std::fabs(table[i + 1] - table[i]) / dz);
        }
        break;
      }
    }
    validate();
  }

  void validate() const {
    if (!(sigma_min > 0.0)) throw ConfigError("sigma: sigma_min must be > 0 (ellipticity)");
    if (!std::isfinite(sigma_max) || !std::isfinite(lipschitz)) throw ConfigError("sigma: non-finite bounds");
  }
};

inline std::string to_string(SigmaSpec::Kind k) {
  switch (k) {
    case SigmaSpec::Kind::constant:
      return "constant";
    case SigmaSpec::Kind::sine:
      return "sine";
    case SigmaSpec::Kind::tabulated:
      return "tabulated";
  }
  return "constant";
}

}  // namespace heatlab
