#pragma once

// Weighted functionals, decay-rate fits and termination classification.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dampwave/model.hpp"
#include "dampwave/state.hpp"

namespace dampwave {

inline double psi(double t, double r, const WeightSpec& w) {
  const double s = 1.0 + t;
  return w.a * r * r / (s * s);
}

namespace detail {

// e^{2ψ(t,r_j)}·g_j integrated; terms with g_j == 0 are skipped so that the
// (possibly huge) weight outside the support never meets a zero.
template <class Integrand>
double weighted_integral(const RadialGrid& grid, int n, double t,
                         const WeightSpec& w, Integrand&& g) {
  Field f(grid.size(), 0.0);
  for (int j = 0; j <= grid.nr; ++j) {
    const double v = g(j);
    if (v == 0.0) continue;
    const double weight = std::exp(2.0 * psi(t, grid.r(j), w));
    if (!std::isfinite(weight)) {
      throw NumericalError("weight e^{2psi} overflows at r = " +
                           std::to_string(grid.r(j)) +
                           " where the field is nonzero");
    }
    f[j] = weight * v;
  }
  return radial_integral(f, grid, n);
}

}  // namespace detail

/// ∫e^{2ψ(t,·)}u² dx.
inline double weighted_l2(std::span<const double> u, double t,
                          const RadialGrid& grid, int n, const WeightSpec& w) {
  check_shape(u, grid);
  return detail::weighted_integral(grid, n, t, w,
                                   [&](int j) { return u[j] * u[j]; });
}

/// ∫e^{2ψ(t,·)}(u_t² + |∇u|²) dx for given u and u_t samples.
inline double weighted_energy(std::span<const double> u,
                              std::span<const double> ut, double t,
                              const RadialGrid& grid, int n,
                              const WeightSpec& w) {
  check_shape(u, grid);
  check_shape(ut, grid);
  const Field ur = radial_derivative(u, grid);
  return detail::weighted_integral(grid, n, t, w, [&](int j) {
    return ut[j] * ut[j] + ur[j] * ur[j];
  });
}

/// Weighted L² of u^k at t_k.
inline double weighted_l2(const SolutionState& s, const RadialGrid& grid, int n,
                          const WeightSpec& w) {
  return weighted_l2(s.u_curr, s.t, grid, n, w);
}

/// Weighted energy at the half level t_{k-1/2}: u_t = (u^k - u^{k-1})/dt and
/// ∇ of the level average (u^k + u^{k-1})/2.
inline double weighted_energy(const SolutionState& s, const RadialGrid& grid,
                              int n, const WeightSpec& w) {
  Field ut(grid.size()), mid(grid.size());
  const double inv_dt = s.dt > 0.0 ? 1.0 / s.dt : 0.0;
  for (std::size_t j = 0; j < ut.size(); ++j) {
    ut[j] = (s.u_curr[j] - s.u_prev[j]) * inv_dt;
    mid[j] = 0.5 * (s.u_curr[j] + s.u_prev[j]);
  }
  return weighted_energy(mid, ut, s.t - 0.5 * s.dt, grid, n, w);
}

/// M(t) = sup_{τ≤t} {(1+τ)^{n+2-ε} E_ψ(τ) + (1+τ)^{n-ε} L_ψ(τ)}.
inline std::vector<double> m_functional(const RunRecord& record, int n,
                                        double eps) {
  std::vector<double> m(record.size());
  double running = 0.0;
  for (std::size_t i = 0; i < record.size(); ++i) {
    const double s = 1.0 + record.times[i];
    const double value = std::pow(s, n + 2 - eps) * record.weighted_energy[i] +
                         std::pow(s, n - eps) * record.weighted_l2[i];
    running = i == 0 ? value : std::max(running, value);
    m[i] = running;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Decay fits

struct FitWindow {
  double lo;
  double hi;
};

struct DecayFit {
  double exponent = 0.0;
  FitWindow window{1.0, 1.0};
  double residual = 0.0;
  int samples = 0;
};

/// Last decade of simulated time, [max(1, T/10), T].
inline FitWindow default_window(double horizon) {
  return FitWindow{std::max(1.0, horizon / 10.0), horizon};
}

/// Least-squares slope of log(series) against log(1+t) over the window.
inline DecayFit fit_decay_rate(std::span<const double> times,
                               std::span<const double> series,
                               FitWindow window) {
  if (times.size() != series.size()) {
    throw ConfigError("fit: times and series differ in length");
  }
  if (!(window.lo >= 1.0) || !(window.hi > window.lo)) {
    throw ConfigError("fit: window must satisfy 1 <= t_lo < t_hi");
  }
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < window.lo || times[i] > window.hi) continue;
    if (!(series[i] > 0.0) || !std::isfinite(series[i])) {
      throw NumericalError("fit: series must be positive and finite on the "
                           "window (t = " + std::to_string(times[i]) + ")");
    }
    xs.push_back(std::log1p(times[i]));
    ys.push_back(std::log(series[i]));
  }
  if (xs.size() < 10) {
    throw ConfigError("fit: window holds fewer than 10 samples");
  }
  const double m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (intercept + slope * xs[i]);
    ss += e * e;
  }
  return DecayFit{slope, window, std::sqrt(ss / m), static_cast<int>(m)};
}

// ---------------------------------------------------------------------------
// Termination

/// True when the last `window` samples grow strictly, keep one sign at the
/// peak, and the last one exceeds `threshold`.  A sign-flipping peak is the
/// signature of a grid-scale instability, not of focusing blow-up.
inline bool blowup_pattern(std::span<const double> supnorm,
                           std::span<const double> peak, double threshold,
                           int window) {
  const auto count = static_cast<std::ptrdiff_t>(supnorm.size());
  if (count < window || !(supnorm.back() > threshold)) return false;
  const bool has_sign = peak.size() == supnorm.size();
  const double sign = has_sign ? std::copysign(1.0, peak.back()) : 1.0;
  for (std::ptrdiff_t i = count - window + 1; i < count; ++i) {
    if (!(supnorm[i] > supnorm[i - 1])) return false;
  }
  if (has_sign) {
    for (std::ptrdiff_t i = count - window; i < count; ++i) {
      if (!(peak[i] * sign > 0.0)) return false;
    }
  }
  return true;
}

inline RunStatus classify_termination(const RunRecord& record,
                                      const StepControl& ctrl) {
  if (record.supnorm.empty()) return RunStatus::completed;
  const auto first_bad =
      std::find_if(record.supnorm.begin(), record.supnorm.end(),
                   [](double v) { return !std::isfinite(v); });
  const auto finite = static_cast<std::size_t>(first_bad - record.supnorm.begin());
  const double threshold = ctrl.threshold_for(record.supnorm.front());
  const std::span<const double> sup(record.supnorm.data(), finite);
  const std::span<const double> peak =
      record.peak.size() == record.supnorm.size()
          ? std::span<const double>(record.peak.data(), finite)
          : std::span<const double>();
  if (finite > 0 &&
      blowup_pattern(sup, peak, threshold, ctrl.monotone_window)) {
    return RunStatus::blowup_detected;
  }
  if (finite < record.supnorm.size()) return RunStatus::unstable;
  return RunStatus::completed;
}

}  // namespace dampwave
