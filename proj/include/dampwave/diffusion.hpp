#pragma once

// Heat-equation reference for large damping: μ/(1+t)·v_t = Δv.
//
// In the heat time s(t) = ((1+t)^2 - 1)/(2μ) this is the standard heat
// equation v_s = Δv, so evolution is convolution with (4πs)^{-n/2}e^{-|x|²/4s}.
// The convolution is evaluated by direct quadrature over the source support;
// no time stepping is involved.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "dampwave/diagnostics.hpp"
#include "dampwave/model.hpp"

namespace dampwave {

struct HeatSpec {
  double mu;
  int n;

  [[nodiscard]] double effective_time(double t) const {
    return ((1.0 + t) * (1.0 + t) - 1.0) / (2.0 * mu);
  }
};

/// G_μ(t,x) = (μ/(2π((1+t)²-1)))^{n/2} exp(-μ|x|²/(2((1+t)²-1))).
inline double gauss_kernel(double t, double r, double mu, int n) {
  if (!(t > 0.0)) throw ConfigError("gauss_kernel: t must be positive");
  if (!(mu > 0.0)) throw ConfigError("gauss_kernel: mu must be positive");
  const double q = (1.0 + t) * (1.0 + t) - 1.0;
  return std::pow(mu / (2.0 * std::numbers::pi * q), 0.5 * n) *
         std::exp(-mu * r * r / (2.0 * q));
}

namespace detail {

/// e^{-x} I_0(x) for x >= 0 without overflow.
inline double scaled_bessel_i0(double x) {
  if (x < 600.0) return std::cyl_bessel_i(0.0, x) * std::exp(-x);
  // Hankel expansion; the terms beyond the fourth are below 1e-16 here.
  const double inv = 1.0 / (8.0 * x);
  const double series =
      1.0 + inv * (1.0 + inv * (9.0 / 2.0 + inv * (225.0 / 6.0)));
  return series / std::sqrt(2.0 * std::numbers::pi * x);
}

/// Contribution of source radius rho to the radial heat solution at r.
inline double radial_heat_kernel(double r, double rho, double s, int n) {
  const double g1 = 1.0 / std::sqrt(4.0 * std::numbers::pi * s);
  const double dm = r - rho;
  const double km = g1 * std::exp(-dm * dm / (4.0 * s));
  switch (n) {
    case 1: {
      const double dp = r + rho;
      return km + g1 * std::exp(-dp * dp / (4.0 * s));
    }
    case 2:
      return rho / (2.0 * s) * std::exp(-dm * dm / (4.0 * s)) *
             scaled_bessel_i0(r * rho / (2.0 * s));
    case 3:
      if (r == 0.0) {
        return rho * rho / s * g1 * std::exp(-rho * rho / (4.0 * s));
      }
      // (ρ/r)(K(r-ρ) - K(r+ρ)) = (ρ/r)K(r-ρ)(1 - e^{-rρ/s})
      return rho / r * km * -std::expm1(-r * rho / s);
    default:
      throw ConfigError("dimension must be 1, 2 or 3");
  }
}

inline double interpolate(std::span<const double> f, const RadialGrid& grid,
                          double r) {
  if (r >= grid.r_max) return r == grid.r_max ? f[grid.nr] : 0.0;
  const double x = r / grid.dr;
  const int j = static_cast<int>(x);
  const double w = x - j;
  return (1.0 - w) * f[j] + w * f[j + 1];
}

}  // namespace detail

/// Heat flow over heat time s, sampled on `dst`.
inline Field heat_flow(std::span<const double> v0, const RadialGrid& src,
                       const RadialGrid& dst, int n, double s) {
  check_shape(v0, src);
  if (!(s >= 0.0)) throw ConfigError("heat_flow: heat time must be >= 0");
  Field out(dst.size(), 0.0);
  if (s == 0.0) {
    for (int i = 0; i <= dst.nr; ++i) {
      out[i] = detail::interpolate(v0, src, dst.r(i));
    }
    return out;
  }
  int last = src.nr;
  while (last >= 0 && v0[last] == 0.0) --last;
  for (int i = 0; i <= dst.nr; ++i) {
    const double r = dst.r(i);
    double sum = 0.0;
    for (int j = 0; j <= last; ++j) {
      if (v0[j] == 0.0) continue;
      const double w = (j == 0 || j == src.nr) ? 0.5 : 1.0;
      sum += w * v0[j] * detail::radial_heat_kernel(r, src.r(j), s, n);
    }
    out[i] = sum * src.dr;
  }
  return out;
}

/// Solution of μ/(1+t)v_t = Δv at wave time t from v(0) = v0, on the same grid.
inline Field heat_evolve(std::span<const double> v0, const RadialGrid& grid,
                         double mu, int n, double t) {
  if (!(t >= 0.0)) throw ConfigError("heat_evolve: t must be >= 0");
  if (!(mu > 0.0)) throw ConfigError("heat_evolve: mu must be positive");
  return heat_flow(v0, grid, grid, n, HeatSpec{mu, n}.effective_time(t));
}

/// Fits the decay exponent of ‖v(t)‖_{L²} over the given times.  Each time is
/// evaluated on its own grid wide enough to hold the spreading Gaussian.
inline DecayFit lp_lq_decay_check(std::span<const double> v0,
                                  const RadialGrid& grid, double mu, int n,
                                  std::span<const double> times) {
  check_shape(v0, grid);
  if (times.empty()) throw ConfigError("lp_lq_decay_check: no times given");
  bool nonzero = false;
  for (double v : v0) {
    if (v < 0.0) throw ConfigError("lp_lq_decay_check: data must be >= 0");
    nonzero = nonzero || v > 0.0;
  }
  if (!nonzero) throw ConfigError("lp_lq_decay_check: data must be nonzero");
  int last = grid.nr;
  while (v0[last] == 0.0) --last;
  const double support = grid.r(last + 1);
  const HeatSpec heat{mu, n};
  std::vector<double> norms;
  for (double t : times) {
    const double s = heat.effective_time(t);
    const double reach = support + 12.0 * std::sqrt(s) + grid.dr;
    const int nr = std::max(grid.nr, 400);
    const RadialGrid dst = make_grid(std::max(reach, grid.r_max), nr);
    norms.push_back(l2_norm(heat_flow(v0, grid, dst, n, s), dst, n));
  }
  return fit_decay_rate(times, norms, FitWindow{times.front(), times.back()});
}

/// ‖u/‖u‖ - v/‖v‖‖_{L²}: compares shapes, ignoring amplitude.
inline double diffusion_gap(std::span<const double> u,
                            std::span<const double> v, const RadialGrid& grid,
                            int n) {
  check_shape(u, grid);
  check_shape(v, grid);
  const double nu = l2_norm(u, grid, n);
  const double nv = l2_norm(v, grid, n);
  if (!(nu > 0.0) || !(nv > 0.0)) {
    throw ConfigError("diffusion_gap: inputs must have nonzero L2 norm");
  }
  Field d(grid.size());
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = u[j] / nu - v[j] / nv;
  return l2_norm(d, grid, n);
}

}  // namespace dampwave
