#pragma once

// Constructive choice of the multiplier-method parameters
// (ε, δ, δ₁, δ₂, δ₃, ν, μ) for the small-data global existence estimate,
// fixed in the order p → ε → δ → ν → μ.
//
// Conditions enforced (all strict):
//   ε < 2n(p - p_F)/(p - 1)                              [ε bound]
//   (n+1-2δ₁) - (n+1-ε)(1+2δ₃) > 0                        [δ₃; ε = 3δ₁ nominal]
//   νδ₂ - (n+2-ε)/2 > 0                                   [ν]
//   μ ≥ 2ν/δ₂                                             [μ, first]
//   μ/4 - ν - 1/2 - (n+1-ε)(1/2 + ν/(4δ₃μ)) > 0           [μ, second]
//
// δ₁ comes from Δψ = n/(2+δ)·b/(1+t) = (n/2 - δ₁)·b/(1+t), so
// δ₁ = nδ/(2(2+δ)).
//
// δ₂: completing the square with c = 4 + δ/2,
//   |∇u|² + 4u∇u·∇ψ + (b(-ψ_t) + 2|∇ψ|²)u²
//     = (1 - 4/c)|∇u|² + (δ/2)|∇ψ|²u² + |2∇u/√c + √c u∇ψ|²,
// using b(-ψ_t) = (2+δ)|∇ψ|².  Since 1 - 4/c = δ/(8+δ) and
// (δ/2)|∇ψ|² = δ/(2(2+δ))·b(-ψ_t), the largest admissible constant is
// δ₂ = min(δ/(8+δ), δ/(2(2+δ))); the first branch is active for δ < 4.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dampwave/model.hpp"

namespace dampwave {

inline double eps_upper_bound(int n, double p) {
  if (n < 1) throw ConfigError("feasibility: n must be >= 1");
  if (!(p > fujita_exponent(n))) {
    throw ConfigError("feasibility: p must exceed the Fujita exponent 1+2/n");
  }
  return 2.0 * n * (p - 1.0 - 2.0 / n) / (p - 1.0);
}

struct DeltaPair {
  double delta1;
  double delta2;
};

inline DeltaPair derive_deltas(double delta, int n) {
  if (!(delta > 0.0)) throw ConfigError("feasibility: delta must be positive");
  return DeltaPair{n * delta / (2.0 * (2.0 + delta)),
                   std::min(delta / (8.0 + delta), delta / (2.0 * (2.0 + delta)))};
}

/// δ with nδ/(2(2+δ)) = δ₁; requires δ₁ < n/2.
inline double delta_for_delta1(double delta1, int n) {
  if (!(delta1 > 0.0) || !(delta1 < 0.5 * n)) {
    throw ConfigError("feasibility: delta1 must lie in (0, n/2)");
  }
  return 4.0 * delta1 / (n - 2.0 * delta1);
}

struct FeasibleParams {
  int n = 1;
  double p = 0.0;
  double eps = 0.0;
  double delta = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double nu = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
};

/// Largest μ among the two μ-conditions (before inflation).
inline double minimal_mu(int n, double eps, double delta2, double delta3,
                         double nu) {
  // μ²/4 - Bμ - C > 0 with B = ν + 1/2 + (n+1-ε)/2, C = (n+1-ε)ν/(4δ₃).
  const double k = n + 1.0 - eps;
  const double b = nu + 0.5 + 0.5 * k;
  const double c = k * nu / (4.0 * delta3);
  const double root = 2.0 * (b + std::sqrt(b * b + c));
  return std::max(root, 2.0 * nu / delta2);
}

/// Names of the violated conditions (empty when the tuple is admissible).
inline std::vector<std::string> violations(const FeasibleParams& f) {
  std::vector<std::string> bad;
  const int n = f.n;
  if (!(f.eps > 0.0 && f.eps < eps_upper_bound(n, f.p))) bad.push_back("eps bound");
  const auto d = derive_deltas(f.delta, n);
  if (std::abs(d.delta1 - f.delta1) > 1e-12 || std::abs(d.delta2 - f.delta2) > 1e-12) {
    bad.push_back("delta1/delta2 consistency");
  }
  if (!((n + 1 - 2 * f.delta1) - (n + 1 - f.eps) * (1 + 2 * f.delta3) > 0.0)) {
    bad.push_back("delta3 condition");
  }
  if (!(f.nu * f.delta2 - 0.5 * (n + 2 - f.eps) > 0.0)) bad.push_back("nu condition");
  if (!(f.mu >= 2 * f.nu / f.delta2)) bad.push_back("mu >= 2nu/delta2");
  if (!(f.mu / 4 - f.nu - 0.5 -
            (n + 1 - f.eps) * (0.5 + f.nu / (4 * f.delta3 * f.mu)) > 0.0)) {
    bad.push_back("mu quadratic condition");
  }
  if (!(f.sigma > 0.0 && f.sigma <= 1.0)) bad.push_back("sigma range");
  return bad;
}

namespace detail {

inline void check_eps(int n, double p, double eps) {
  const double bound = eps_upper_bound(n, p);
  if (!(eps > 0.0) || !(eps < bound)) {
    throw ConfigError("feasibility: eps must lie in (0, " +
                      std::to_string(bound) + ")");
  }
  if (!(eps < 1.5 * n)) {
    // ε = 3δ₁ and δ₁ < n/2.
    throw ConfigError("feasibility: eps must be below 3n/2");
  }
}

/// Full construction for a given δ; the δ₃ condition is taken with ε so
/// that off-nominal δ (2δ₁ < ε) can be scanned.
inline std::optional<FeasibleParams> construct(int n, double p, double eps,
                                               double delta) {
  const auto d = derive_deltas(delta, n);
  if (!(2.0 * d.delta1 < eps)) return std::nullopt;
  FeasibleParams f;
  f.n = n;
  f.p = p;
  f.eps = eps;
  f.delta = delta;
  f.delta1 = d.delta1;
  f.delta2 = d.delta2;
  f.delta3 = 0.5 * (eps - 2.0 * d.delta1) / (2.0 * (n + 1.0 - eps));
  f.nu = 1.1 * (n + 2.0 - eps) / (2.0 * d.delta2);
  f.mu = 1.01 * minimal_mu(n, eps, f.delta2, f.delta3, f.nu);
  f.sigma = n * (p - 1.0) / (2.0 * (p + 1.0));
  return f;
}

}  // namespace detail

/// Deterministic admissible tuple; ε defaults to half its upper bound.
inline FeasibleParams solve_feasible(int n, double p,
                                     std::optional<double> eps_target = {}) {
  if (n < 1 || n > 3) throw ConfigError("feasibility: n must be 1, 2 or 3");
  if (n == 3 && p > 3.0) throw ConfigError("feasibility: n = 3 needs p <= 3");
  const double eps = eps_target.value_or(0.5 * eps_upper_bound(n, p));
  detail::check_eps(n, p, eps);
  const double delta = delta_for_delta1(eps / 3.0, n);
  auto f = detail::construct(n, p, eps, delta);
  if (!f) throw std::logic_error("feasibility: nominal delta rejected");
  f->delta1 = eps / 3.0;  // exact ε = 3δ₁
  if (const auto bad = violations(*f); !bad.empty()) {
    throw std::logic_error("feasibility: constructed tuple violates " + bad.front());
  }
  return *f;
}

struct Mu0Point {
  double eps;
  double delta;
  double nu;
  double mu0;
};

/// μ₀(ε): the smallest constructed μ over a δ-grid δ_nom·[0.5, 1.5] (41
/// points) around the nominal δ(ε), keeping only δ with 2δ₁ < ε.
inline std::vector<Mu0Point> mu0_curve(int n, double p,
                                       std::span<const double> eps_list) {
  std::vector<Mu0Point> curve;
  for (double eps : eps_list) {
    detail::check_eps(n, p, eps);
    const FeasibleParams nominal = solve_feasible(n, p, eps);
    Mu0Point best{eps, nominal.delta, nominal.nu, nominal.mu};
    for (int k = 0; k <= 40; ++k) {
      const double delta = nominal.delta * (0.5 + k / 40.0);
      const auto f = detail::construct(n, p, eps, delta);
      if (!f || !violations(*f).empty()) continue;
      if (f->mu < best.mu0) best = Mu0Point{eps, f->delta, f->nu, f->mu};
    }
    curve.push_back(best);
  }
  return curve;
}

/// Least-squares slope of log μ₀ against log ε.
inline double loglog_slope(std::span<const Mu0Point> curve) {
  if (curve.size() < 2) throw ConfigError("slope: need at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& pt : curve) {
    mx += std::log(pt.eps);
    my += std::log(pt.mu0);
  }
  mx /= curve.size();
  my /= curve.size();
  double sxx = 0.0, sxy = 0.0;
  for (const auto& pt : curve) {
    const double x = std::log(pt.eps) - mx;
    sxx += x * x;
    sxy += x * (std::log(pt.mu0) - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("slope: eps values must differ");
  return sxy / sxx;
}

}  // namespace dampwave
