#pragma once

// Test-function machinery for the blow-up side.
//
// Multiplying the equation by g(t) with -g' + g·b = c (c = 1 for μ > 1,
// c = 0 for μ <= 1 and for (1+t)^{-β} damping) gives the divergence form
//   (gu)_tt - Δ(gu) - (g'u)_t + c·u_t = g|u|^p.
// Testing against Ψ = η(t/R)^q φ(|x|/R)^q, q = p/(p-1), and integrating by
// parts yields
//   I_R = B + J1 + J2 + J3,
//   I_R = ∫∫ g|u|^p Ψ,       B  = -∫ (g(0)u1 + c·u0) φ_R^q,
//   J1  = ∫∫ g u ∂_t²Ψ,      J2 = ∫∫ (g' - c) u ∂_tΨ,     J3 = -∫∫ g u ΔΨ.
// For c = 1, g(0) = 1/(μ-1) and B = -g(0)∫((μ-1)u0 + u1)φ_R^q.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "dampwave/model.hpp"
#include "dampwave/solver.hpp"

namespace dampwave {

enum class GRegime { supercritical_mu, subcritical_mu, power_law };

/// Upper end of the blow-up range 1 < p <= p*.
inline double critical_exponent(GRegime regime, int n, double mu_or_beta) {
  if (n < 1) throw ConfigError("critical_exponent: n must be >= 1");
  switch (regime) {
    case GRegime::supercritical_mu:
      if (!(mu_or_beta > 1.0)) throw ConfigError("supercritical regime needs mu > 1");
      return 1.0 + 2.0 / n;
    case GRegime::subcritical_mu:
      if (!(mu_or_beta > 0.0 && mu_or_beta <= 1.0)) {
        throw ConfigError("subcritical regime needs 0 < mu <= 1");
      }
      return 1.0 + 2.0 / (n + mu_or_beta - 1.0);
    case GRegime::power_law:
      if (!(mu_or_beta > 1.0)) throw ConfigError("power-law regime needs beta > 1");
      if (n == 1) throw ConfigError("power-law exponent 1+2/(n-1) is undefined for n = 1");
      return 1.0 + 2.0 / (n - 1.0);
  }
  return 0.0;
}

inline GRegime regime_for(const ModelSpec& model) {
  if (const auto mu = model.mu()) {
    return *mu > 1.0 ? GRegime::supercritical_mu : GRegime::subcritical_mu;
  }
  return GRegime::power_law;
}

struct GTransform {
  GRegime regime;
  double param;  // μ or β
  double g0;

  [[nodiscard]] double damping(double t) const {
    return regime == GRegime::power_law ? std::pow(1.0 + t, -param)
                                        : param / (1.0 + t);
  }

  /// Right-hand side c of -g' + g·b = c.
  [[nodiscard]] double target() const {
    return regime == GRegime::supercritical_mu ? 1.0 : 0.0;
  }

  [[nodiscard]] double g(double t) const {
    switch (regime) {
      case GRegime::supercritical_mu:
        return (1.0 + t) / (param - 1.0);
      case GRegime::subcritical_mu:
        return g0 * std::pow(1.0 + t, param);
      case GRegime::power_law:
        return g0 * std::exp((std::pow(1.0 + t, 1.0 - param) - 1.0) / (1.0 - param));
    }
    return 0.0;
  }

  [[nodiscard]] double dg(double t) const {
    switch (regime) {
      case GRegime::supercritical_mu:
        return 1.0 / (param - 1.0);
      case GRegime::subcritical_mu:
        return g0 * param * std::pow(1.0 + t, param - 1.0);
      case GRegime::power_law:
        return g(t) * std::pow(1.0 + t, -param);
    }
    return 0.0;
  }

  /// |-g' + g·b - c|.
  [[nodiscard]] double residual(double t) const {
    return std::abs(-dg(t) + g(t) * damping(t) - target());
  }
};

inline GTransform g_transform(GRegime regime, double mu_or_beta,
                              std::optional<double> g0 = {}) {
  switch (regime) {
    case GRegime::supercritical_mu:
      if (!(mu_or_beta > 1.0)) {
        throw ConfigError("g_transform: supercritical regime needs mu > 1");
      }
      if (g0 && std::abs(*g0 * (mu_or_beta - 1.0) - 1.0) > 1e-12) {
        throw ConfigError("g_transform: supercritical g(0) is fixed to 1/(mu-1)");
      }
      return GTransform{regime, mu_or_beta, 1.0 / (mu_or_beta - 1.0)};
    case GRegime::subcritical_mu:
      if (!(mu_or_beta > 0.0 && mu_or_beta <= 1.0)) {
        throw ConfigError("g_transform: subcritical regime needs 0 < mu <= 1");
      }
      break;
    case GRegime::power_law:
      if (!(mu_or_beta > 1.0)) throw ConfigError("g_transform: beta must exceed 1");
      break;
  }
  const double start = g0.value_or(1.0);
  if (!(start > 0.0)) throw ConfigError("g_transform: g(0) must be positive");
  return GTransform{regime, mu_or_beta, start};
}

/// ∫((μ-1)u0 + u1) for μ > 1, ∫u1 otherwise.
inline double data_sign_functional(std::span<const double> u0,
                                   std::span<const double> u1,
                                   const RadialGrid& grid, int n,
                                   GRegime regime, double mu) {
  const double m1 = radial_integral(u1, grid, n);
  if (regime != GRegime::supercritical_mu) return m1;
  return (mu - 1.0) * radial_integral(u0, grid, n) + m1;
}

// ---------------------------------------------------------------------------
// Test functions

/// η(t/R)·φ(|x|/R) with η = φ = 1 on [0,1/2], 0 on [1,∞), quintic between.
struct TestFunctionPair {
  double R;
  double p;
  double q;

  // Unscaled profile on [0,∞) and its derivatives.
  static double cut(double x) { return smoothstep5(2.0 - 2.0 * x); }
  static double cut_d1(double x) { return -2.0 * smoothstep5_d1(2.0 * x - 1.0); }
  static double cut_d2(double x) { return -4.0 * smoothstep5_d2(2.0 * x - 1.0); }

  [[nodiscard]] double eta(double t) const { return cut(t / R); }
  [[nodiscard]] double phi(double r) const { return cut(r / R); }

  /// h^q and its first two derivatives given h, h', h'' (chain rule).
  [[nodiscard]] std::array<double, 3> power(double h, double d1, double d2) const {
    if (h <= 0.0) return {0.0, 0.0, 0.0};
    const double hq = std::pow(h, q);
    const double hq1 = hq / h;
    const double hq2 = hq1 / h;
    return {hq, q * hq1 * d1, q * (q - 1.0) * hq2 * d1 * d1 + q * hq1 * d2};
  }

  /// η_R^q, ∂_t η_R^q, ∂_t² η_R^q.
  [[nodiscard]] std::array<double, 3> time_part(double t) const {
    const double x = t / R;
    return power(cut(x), cut_d1(x) / R, cut_d2(x) / (R * R));
  }

  /// φ_R^q and Δ(φ_R^q) in dimension n.
  [[nodiscard]] std::array<double, 2> space_part(double r, int n) const {
    const double x = r / R;
    const auto f = power(cut(x), cut_d1(x) / R, cut_d2(x) / (R * R));
    const double lap = r > 0.0 ? f[2] + (n - 1) / r * f[1] : n * f[2];
    return {f[0], lap};
  }
};

inline TestFunctionPair make_test_functions(double R, double p) {
  if (!(R > 0.0)) throw ConfigError("test functions: R must be positive");
  if (!(p > 1.0)) throw ConfigError("test functions: p must exceed 1");
  return TestFunctionPair{R, p, p / (p - 1.0)};
}

// ---------------------------------------------------------------------------
// Space-time traces

struct SolutionTrace {
  RadialGrid grid;
  int n = 1;
  Field u0;
  Field u1;
  std::vector<double> times;
  std::vector<Field> fields;

  [[nodiscard]] double max_stride() const {
    double s = 0.0;
    for (std::size_t i = 1; i < times.size(); ++i) {
      s = std::max(s, times[i] - times[i - 1]);
    }
    return s;
  }
};

/// Runs the solver to T and keeps snapshots no further apart than
/// `max_stride` (plus t = 0 and the final state).
inline SolutionTrace collect_trace(const ModelSpec& model,
                                   const RadialGrid& grid,
                                   const InitialData& data,
                                   const StepControl& ctrl, double horizon,
                                   double max_stride, RunRecord* record = nullptr) {
  if (!(max_stride > 0.0)) throw ConfigError("trace: stride must be positive");
  SolutionTrace trace{grid, model.n, data.u0, data.u1, {}, {}};
  double last = -1.0;
  RunOptions opts;
  opts.stride = 1 << 30;
  opts.on_step = [&](const SolutionState& s) {
    const double dt = s.dt > 0.0 ? s.dt : ctrl.cfl * grid.dr;
    const bool due = s.k == 0 || s.t - last + dt > max_stride * (1.0 + 1e-12) ||
                     horizon - s.t <= 1e-9 * dt;
    if (!due) return;
    trace.times.push_back(s.t);
    trace.fields.push_back(s.u_curr);
    last = s.t;
  };
  RunRecord rec = run(model, grid, data, ctrl, horizon, opts);
  if (record) *record = std::move(rec);
  return trace;
}

struct TestFunctionalReport {
  double R = 0.0;
  double I_R = 0.0;
  double boundary = 0.0;
  double J1 = 0.0;
  double J2 = 0.0;
  double J3 = 0.0;
  double residual = 0.0;
  double I_tilde = 0.0;  // over [0,R] × (B_R \ B_{R/2})
  double I_hat = 0.0;    // over [R/2,R] × B_R
  /// I_R·R^{-((n+2)/q - 2)}
  double scaled = 0.0;
  /// I_R / ((Ĩ^{1/p} + Î^{1/p})·R^{(n+2)/q-2})
  double bound_ratio = 0.0;
  /// Hölder constants: |J1| <= Î^{1/p}K1, |J2| <= Î^{1/p}K2, |J3| <= Ĩ^{1/p}K3,
  /// with K1 = (∫∫g|∂_t²Ψ|^qΨ^{1-q})^{1/q},
  /// K2 = (∫∫|g'-c|^q g^{1-q}|∂_tΨ|^qΨ^{1-q})^{1/q},
  /// K3 = (∫∫g|ΔΨ|^qΨ^{1-q})^{1/q}.
  double K1 = 0.0;
  double K2 = 0.0;
  double K3 = 0.0;
  /// B + Î^{1/p}(K1 + K2) + Ĩ^{1/p}K3, an upper bound for I_R.
  double holder_rhs = 0.0;
};

inline TestFunctionalReport test_functional(const SolutionTrace& trace,
                                            const TestFunctionPair& pair,
                                            const GTransform& gt) {
  const RadialGrid& grid = trace.grid;
  const int n = trace.n;
  const double R = pair.R;
  if (trace.times.size() < 2 || trace.times.front() != 0.0) {
    throw ConfigError("test_functional: trace must start at t = 0");
  }
  if (trace.times.back() < R * (1.0 - 1e-12)) {
    throw ConfigError("test_functional: trace does not cover [0, R]");
  }
  if (grid.r_max < R) throw ConfigError("test_functional: grid must cover B_R");
  if (trace.max_stride() > R / 32.0) {
    throw ConfigError("test_functional: snapshot stride exceeds R/32");
  }

  const double q = pair.q;
  std::vector<double> phi_q(grid.size()), lap_phi_q(grid.size());
  Field lap_weight(grid.size());
  for (int j = 0; j <= grid.nr; ++j) {
    const auto sp = pair.space_part(grid.r(j), n);
    phi_q[j] = sp[0];
    lap_phi_q[j] = sp[1];
    lap_weight[j] =
        sp[0] > 0.0 ? std::pow(std::abs(sp[1]), q) * std::pow(sp[0], 1.0 - q) : 0.0;
  }
  const double phi_mass = radial_integral(phi_q, grid, n);
  const double lap_mass = radial_integral(lap_weight, grid, n);

  TestFunctionalReport rep;
  rep.R = R;
  const double c = gt.target();
  Field f0(grid.size());
  for (int j = 0; j <= grid.nr; ++j) {
    f0[j] = (gt.g0 * trace.u1[j] + c * trace.u0[j]) * phi_q[j];
  }
  rep.boundary = -radial_integral(f0, grid, n);

  // Spatial integrals at each snapshot, then trapezoid in time.
  struct Slice {
    double I, J1, J2, J3, It, Ih, K1, K2, K3;
  };
  std::vector<double> ts;
  std::vector<Slice> slices;
  Field fI(grid.size()), fJ1(grid.size()), fJ2(grid.size()), fJ3(grid.size()),
      fIt(grid.size());
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    const double t = trace.times[i];
    const Field& u = trace.fields[i];
    check_shape(u, grid);
    const auto tp = pair.time_part(t);
    const double g = gt.g(t), dg = gt.dg(t);
    for (int j = 0; j <= grid.nr; ++j) {
      const double up = std::pow(std::abs(u[j]), pair.p);
      const double psi_q = tp[0] * phi_q[j];
      fI[j] = g * up * psi_q;
      fIt[j] = grid.r(j) >= 0.5 * R ? fI[j] : 0.0;
      fJ1[j] = g * u[j] * tp[2] * phi_q[j];
      fJ2[j] = (dg - c) * u[j] * tp[1] * phi_q[j];
      fJ3[j] = -g * u[j] * tp[0] * lap_phi_q[j];
    }
    const double I = radial_integral(fI, grid, n);
    const double inv = tp[0] > 0.0 ? std::pow(tp[0], 1.0 - q) : 0.0;
    const double k1 = g * std::pow(std::abs(tp[2]), q) * inv * phi_mass;
    const double k2 = std::pow(std::abs(dg - c), q) * std::pow(g, 1.0 - q) *
                      std::pow(std::abs(tp[1]), q) * inv * phi_mass;
    const double k3 = g * tp[0] * lap_mass;
    slices.push_back(Slice{I, radial_integral(fJ1, grid, n),
                           radial_integral(fJ2, grid, n),
                           radial_integral(fJ3, grid, n),
                           radial_integral(fIt, grid, n),
                           t >= 0.5 * R ? I : 0.0, k1, k2, k3});
    ts.push_back(t);
    if (t >= R) break;  // Ψ vanishes from here on
  }
  for (std::size_t i = 1; i < ts.size(); ++i) {
    const double h = 0.5 * (ts[i] - ts[i - 1]);
    const Slice& a = slices[i - 1];
    const Slice& b = slices[i];
    rep.I_R += h * (a.I + b.I);
    rep.J1 += h * (a.J1 + b.J1);
    rep.J2 += h * (a.J2 + b.J2);
    rep.J3 += h * (a.J3 + b.J3);
    rep.I_tilde += h * (a.It + b.It);
    rep.I_hat += h * (a.Ih + b.Ih);
    rep.K1 += h * (a.K1 + b.K1);
    rep.K2 += h * (a.K2 + b.K2);
    rep.K3 += h * (a.K3 + b.K3);
  }
  rep.K1 = std::pow(rep.K1, 1.0 / q);
  rep.K2 = std::pow(rep.K2, 1.0 / q);
  rep.K3 = std::pow(rep.K3, 1.0 / q);
  const double hat_p = std::pow(rep.I_hat, 1.0 / pair.p);
  const double tilde_p = std::pow(rep.I_tilde, 1.0 / pair.p);
  rep.holder_rhs = rep.boundary + hat_p * (rep.K1 + rep.K2) + tilde_p * rep.K3;
  rep.residual = std::abs(rep.I_R - (rep.boundary + rep.J1 + rep.J2 + rep.J3));
  const double e = (n + 2.0) / q - 2.0;
  rep.scaled = rep.I_R * std::pow(R, -e);
  const double bound = (tilde_p + hat_p) * std::pow(R, e);
  rep.bound_ratio = bound > 0.0 ? rep.I_R / bound : 0.0;
  return rep;
}

}  // namespace dampwave
