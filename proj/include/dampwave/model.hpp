#pragma once

// Model definition, radial mesh and radial calculus shared by every other
// header of the library.
//
// All fields are radial samples f(r_j), r_j = j*dr, j = 0..nr.  For n = 1 the
// half line carries the even extension of a function on R, so every integral
// picks up the factor 2 (surface "measure" of the 0-sphere).

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dampwave {

/// Raised for invalid user-facing parameters (bad grid, unsupported dimension,
/// data that does not fit in the domain, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical quantity cannot be represented (overflowing
/// weights, non-positive data handed to a log fit, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model

struct ScaleInvariantDamping {
  double mu;
};

struct PowerLawDamping {
  double beta;
};

using Damping = std::variant<ScaleInvariantDamping, PowerLawDamping>;

enum class Nonlinearity { abs_pow, signed_pow, neg_abs_pow, none };

/// Source term s(t, r) used for manufactured-solution runs.
using Forcing = std::function<double(double t, double r)>;

struct ModelSpec {
  int n = 1;
  Damping damping = ScaleInvariantDamping{2.0};
  double p = 2.0;
  Nonlinearity nonlinearity = Nonlinearity::abs_pow;
  Forcing forcing;  // empty = no forcing

  /// b(t) in u_tt - Δu + b(t) u_t = f(u).
  [[nodiscard]] double damping_at(double t) const {
    if (const auto* si = std::get_if<ScaleInvariantDamping>(&damping)) {
      return si->mu / (1.0 + t);
    }
    return std::pow(1.0 + t, -std::get<PowerLawDamping>(damping).beta);
  }

  [[nodiscard]] double nonlinear_term(double u) const {
    switch (nonlinearity) {
      case Nonlinearity::abs_pow:
        return std::pow(std::abs(u), p);
      case Nonlinearity::signed_pow:
        return std::pow(std::abs(u), p - 1.0) * u;
      case Nonlinearity::neg_abs_pow:
        return -std::pow(std::abs(u), p);
      case Nonlinearity::none:
        return 0.0;
    }
    return 0.0;
  }

  [[nodiscard]] bool is_scale_invariant() const {
    return std::holds_alternative<ScaleInvariantDamping>(damping);
  }

  /// μ for scale-invariant damping, nullopt otherwise.
  [[nodiscard]] std::optional<double> mu() const {
    if (const auto* si = std::get_if<ScaleInvariantDamping>(&damping)) {
      return si->mu;
    }
    return std::nullopt;
  }

  void validate() const {
    if (n < 1 || n > 3) {
      throw ConfigError("model: dimension n must be 1, 2 or 3");
    }
    if (const auto* si = std::get_if<ScaleInvariantDamping>(&damping)) {
      // mu = 0 is admitted as the free-wave limit used in conservation checks.
      if (!(si->mu >= 0.0)) throw ConfigError("model: mu must be non-negative");
    } else if (!(std::get<PowerLawDamping>(damping).beta > 1.0)) {
      throw ConfigError("model: power-law damping requires beta > 1");
    }
    if (!(p > 1.0)) throw ConfigError("model: p must exceed 1");
    if (n == 3 && p > 3.0) {
      throw ConfigError("model: n = 3 requires p <= n/(n-2) = 3");
    }
  }
};

inline double fujita_exponent(int n) { return 1.0 + 2.0 / n; }

// ---------------------------------------------------------------------------
// Mesh and fields

struct RadialGrid {
  double r_max = 0.0;
  int nr = 0;
  double dr = 0.0;

  [[nodiscard]] double r(int j) const { return j * dr; }
  [[nodiscard]] std::size_t size() const {
    return static_cast<std::size_t>(nr) + 1;
  }
};

inline RadialGrid make_grid(double r_max, int nr) {
  if (!(r_max > 0.0) || !std::isfinite(r_max)) {
    throw ConfigError("grid: r_max must be positive and finite");
  }
  if (nr < 16) throw ConfigError("grid: nr must be at least 16");
  return RadialGrid{r_max, nr, r_max / nr};
}

using Field = std::vector<double>;

inline Field zero_field(const RadialGrid& grid) {
  return Field(grid.size(), 0.0);
}

inline void check_shape(std::span<const double> f, const RadialGrid& grid) {
  if (f.size() != grid.size()) {
    throw ConfigError("field length " + std::to_string(f.size()) +
                      " does not match grid with " +
                      std::to_string(grid.size()) + " points");
  }
}

inline bool all_finite(std::span<const double> f) {
  return std::all_of(f.begin(), f.end(),
                     [](double v) { return std::isfinite(v); });
}

/// Samples g(r_j) on the grid.
template <class Fn>
Field sample(const RadialGrid& grid, Fn&& g) {
  Field f(grid.size());
  for (int j = 0; j <= grid.nr; ++j) f[j] = g(grid.r(j));
  return f;
}

// ---------------------------------------------------------------------------
// Smooth transitions

/// Quintic smoothstep 6x^5 - 15x^4 + 10x^3 clamped to [0,1]; C^2 at both ends.
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return std::min(1.0, x * x * x * (x * (6.0 * x - 15.0) + 10.0));
}

inline double smoothstep5_d1(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double y = x * (1.0 - x);
  return 30.0 * y * y;
}

inline double smoothstep5_d2(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 60.0 * x * (1.0 - x) * (1.0 - 2.0 * x);
}

/// 1 on [0, c/2], 0 on [c, ∞), quintic in between.
inline double smooth_cutoff(double r, double c) {
  // 1 - S(x) = S(1 - x); avoids cancellation near the outer edge
  return smoothstep5((c - r) / (0.5 * c));
}

// ---------------------------------------------------------------------------
// Initial data

/// A·(1 - (r/r0)^2)_+^k
struct PolynomialBump {
  double amplitude = 1.0;
  double r0 = 1.0;
  int k = 3;
};

/// A·exp(-(r/width)^2)·χ(r) with χ the quintic cutoff vanishing beyond `cutoff`.
struct TruncatedGaussian {
  double amplitude = 1.0;
  double width = 0.5;
  double cutoff = 2.0;
};

using Profile = std::variant<PolynomialBump, TruncatedGaussian>;

/// Profile shape together with the multipliers used for u0 and u1:
/// u0 = u0_coef·profile, u1 = u1_coef·profile.
struct DataSpec {
  Profile profile = PolynomialBump{};
  double u0_coef = 1.0;
  double u1_coef = 0.0;
};

struct InitialData {
  Profile profile;
  Field u0;
  Field u1;
};

inline double support_radius(const Profile& profile) {
  return std::visit(
      [](const auto& pr) -> double {
        using T = std::decay_t<decltype(pr)>;
        if constexpr (std::is_same_v<T, PolynomialBump>) {
          return pr.r0;
        } else {
          return pr.cutoff;
        }
      },
      profile);
}

inline double profile_value(const Profile& profile, double r) {
  return std::visit(
      [r](const auto& pr) -> double {
        using T = std::decay_t<decltype(pr)>;
        if constexpr (std::is_same_v<T, PolynomialBump>) {
          if (r >= pr.r0) return 0.0;
          const double s = 1.0 - (r / pr.r0) * (r / pr.r0);
          return pr.amplitude * std::pow(s, pr.k);
        } else {
          if (r >= pr.cutoff) return 0.0;
          const double x = r / pr.width;
          return pr.amplitude * std::exp(-x * x) * smooth_cutoff(r, pr.cutoff);
        }
      },
      profile);
}

inline void validate_profile(const Profile& profile) {
  std::visit(
      [](const auto& pr) {
        using T = std::decay_t<decltype(pr)>;
        if constexpr (std::is_same_v<T, PolynomialBump>) {
          if (!(pr.r0 > 0.0)) throw ConfigError("bump: r0 must be positive");
          if (pr.k < 2) throw ConfigError("bump: smoothness k must be >= 2");
        } else {
          if (!(pr.width > 0.0) || !(pr.cutoff > 0.0)) {
            throw ConfigError("gaussian: width and cutoff must be positive");
          }
        }
      },
      profile);
}

inline InitialData sample_initial_data(const DataSpec& spec,
                                       const RadialGrid& grid) {
  validate_profile(spec.profile);
  const double support = support_radius(spec.profile);
  if (!(support < grid.r_max)) {
    throw ConfigError("initial data support exceeds the grid radius");
  }
  InitialData data{spec.profile, zero_field(grid), zero_field(grid)};
  for (int j = 0; j <= grid.nr; ++j) {
    const double r = grid.r(j);
    if (r >= support) break;  // exact zeros beyond the support
    const double v = profile_value(spec.profile, r);
    data.u0[j] = spec.u0_coef * v;
    data.u1[j] = spec.u1_coef * v;
  }
  return data;
}

inline InitialData sample_initial_data(const Profile& profile,
                                       const RadialGrid& grid) {
  return sample_initial_data(DataSpec{profile, 1.0, 0.0}, grid);
}

// ---------------------------------------------------------------------------
// Radial calculus

/// Surface measure of the unit (n-1)-sphere; 2 for n = 1 (even extension).
inline double sphere_measure(int n) {
  switch (n) {
    case 1:
      return 2.0;
    case 2:
      return 2.0 * std::numbers::pi;
    case 3:
      return 4.0 * std::numbers::pi;
    default:
      throw ConfigError("dimension must be 1, 2 or 3");
  }
}

/// ∫_{R^n} f dx for radial f, composite trapezoid in r.
inline double radial_integral(std::span<const double> f, const RadialGrid& grid,
                              int n) {
  check_shape(f, grid);
  const double omega = sphere_measure(n);
  double sum = 0.0;
  for (int j = 0; j <= grid.nr; ++j) {
    const double r = grid.r(j);
    const double w = (j == 0 || j == grid.nr) ? 0.5 : 1.0;
    const double jac = n == 1 ? 1.0 : (n == 2 ? r : r * r);
    sum += w * f[j] * jac;
  }
  return omega * sum * grid.dr;
}

/// f_r: central differences inside, second-order one-sided at r_max, and
/// f_r(0) = 0 (even symmetry at the origin).
inline Field radial_derivative(std::span<const double> f,
                               const RadialGrid& grid) {
  check_shape(f, grid);
  const int nr = grid.nr;
  const double inv2h = 1.0 / (2.0 * grid.dr);
  Field d(grid.size());
  d[0] = 0.0;
  for (int j = 1; j < nr; ++j) d[j] = (f[j + 1] - f[j - 1]) * inv2h;
  d[nr] = (3.0 * f[nr] - 4.0 * f[nr - 1] + f[nr - 2]) * inv2h;
  return d;
}

/// ‖f‖_{L²(R^n)}.
inline double l2_norm(std::span<const double> f, const RadialGrid& grid,
                      int n) {
  Field sq(f.size());
  std::transform(f.begin(), f.end(), sq.begin(),
                 [](double v) { return v * v; });
  return std::sqrt(radial_integral(sq, grid, n));
}

inline double sup_norm(std::span<const double> f) {
  double m = 0.0;
  for (double v : f) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace dampwave
