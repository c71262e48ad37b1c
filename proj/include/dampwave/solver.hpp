#pragma once

// Leapfrog solver for u_tt - Δu + b(t)u_t = f(u) + s(t,r) under radial
// symmetry.  Damping is averaged over levels k±1 (semi-implicit, stable for
// any b·dt), the nonlinearity is explicit at level k, u(r_max) = 0.

#include <cmath>
#include <deque>
#include <functional>
#include <optional>
#include <utility>

#include "dampwave/diagnostics.hpp"
#include "dampwave/model.hpp"
#include "dampwave/state.hpp"

namespace dampwave {

/// Radial Laplacian f'' + (n-1)/r f'; at the origin the symmetric limit
/// n·f''(0) ≈ 2n(f_1 - f_0)/dr².  The boundary node is left at 0.
inline Field laplacian_radial(std::span<const double> f, const RadialGrid& grid,
                              int n) {
  check_shape(f, grid);
  const double h2 = 1.0 / (grid.dr * grid.dr);
  const double h1 = 1.0 / (2.0 * grid.dr);
  Field lap(grid.size(), 0.0);
  lap[0] = 2.0 * n * (f[1] - f[0]) * h2;
  for (int j = 1; j < grid.nr; ++j) {
    lap[j] = (f[j + 1] - 2.0 * f[j] + f[j - 1]) * h2 +
             ((n - 1) / grid.r(j)) * (f[j + 1] - f[j - 1]) * h1;
  }
  return lap;
}

namespace detail {

inline double laplacian_at(const Field& f, const RadialGrid& grid, int n,
                           int j, double h2, double h1) {
  if (j == 0) return 2.0 * n * (f[1] - f[0]) * h2;
  return (f[j + 1] - 2.0 * f[j] + f[j - 1]) * h2 +
         ((n - 1) / grid.r(j)) * (f[j + 1] - f[j - 1]) * h1;
}

/// f(u) with multiplication fast paths for the integer powers used most.
inline double nonlinearity_at(const ModelSpec& model, double u) {
  if (model.nonlinearity == Nonlinearity::none || u == 0.0) return 0.0;
  const double a = std::abs(u);
  double ap;
  if (model.p == 2.0) {
    ap = a * a;
  } else if (model.p == 3.0) {
    ap = a * a * a;
  } else if (model.p == 4.0) {
    const double a2 = a * a;
    ap = a2 * a2;
  } else {
    ap = std::pow(a, model.p);
  }
  switch (model.nonlinearity) {
    case Nonlinearity::abs_pow:
      return ap;
    case Nonlinearity::signed_pow:
      return u > 0.0 ? ap : -ap;
    case Nonlinearity::neg_abs_pow:
      return -ap;
    case Nonlinearity::none:
      break;
  }
  return 0.0;
}

inline double source_at(const ModelSpec& model, double t, double r) {
  return model.forcing ? model.forcing(t, r) : 0.0;
}

}  // namespace detail

/// Taylor start: u¹ = u0 + dt·u1 + dt²/2·(Δ_h u0 - b(0)u1 + f(u0) + s(0,·)).
inline SolutionState first_step(const InitialData& data, const ModelSpec& model,
                                const RadialGrid& grid, double dt) {
  check_shape(data.u0, grid);
  check_shape(data.u1, grid);
  if (!(dt > 0.0)) throw ConfigError("first_step: dt must be positive");
  const Field lap = laplacian_radial(data.u0, grid, model.n);
  const double b0 = model.damping_at(0.0);
  Field u1(grid.size(), 0.0);
  for (int j = 0; j < grid.nr; ++j) {
    const double acc = lap[j] - b0 * data.u1[j] +
                       detail::nonlinearity_at(model, data.u0[j]) +
                       detail::source_at(model, 0.0, grid.r(j));
    u1[j] = data.u0[j] + dt * data.u1[j] + 0.5 * dt * dt * acc;
  }
  u1[grid.nr] = 0.0;
  SolutionState s;
  s.u_prev = data.u0;
  s.u_curr = std::move(u1);
  s.t = dt;
  s.k = 1;
  s.dt = dt;
  s.dt_next = dt;
  return s;
}

/// One leapfrog step of size state.dt_next.  With equal steps h this solves
/// (1 + bh/2)u^{k+1} = 2u^k - (1 - bh/2)u^{k-1} + h²(Δ_h u^k + f(u^k) + s),
/// b = b(t_k); after a step-size change the three-level formula for
/// unequal spacing is used.
inline SolutionState step(SolutionState s, const ModelSpec& model,
                          const RadialGrid& grid) {
  const double h_old = s.dt;
  const double h = s.dt_next;
  if (!(h > 0.0) || !(h_old > 0.0)) {
    throw ConfigError("step: state has no valid step size");
  }
  const double b = model.damping_at(s.t);
  const double inv_dr2 = 1.0 / (grid.dr * grid.dr);
  const double inv_2dr = 1.0 / (2.0 * grid.dr);
  const Field& u = s.u_curr;
  Field& next = s.u_prev;  // overwritten in place: u^{k-1}_j is read once

  if (h == h_old) {
    const double c_next = 1.0 / (1.0 + 0.5 * b * h);
    const double c_prev = 1.0 - 0.5 * b * h;
    const double h2 = h * h;
    for (int j = 0; j < grid.nr; ++j) {
      const double rhs =
          detail::laplacian_at(u, grid, model.n, j, inv_dr2, inv_2dr) +
          detail::nonlinearity_at(model, u[j]) +
          detail::source_at(model, s.t, grid.r(j));
      next[j] = c_next * (2.0 * u[j] - c_prev * next[j] + h2 * rhs);
    }
  } else {
    const double sum = h_old + h;
    const double c_next = 2.0 / (h * sum) + b / sum;
    const double c_curr = 2.0 / (h_old * h);
    const double c_prev = 2.0 / (h_old * sum) - b / sum;
    for (int j = 0; j < grid.nr; ++j) {
      const double rhs =
          detail::laplacian_at(u, grid, model.n, j, inv_dr2, inv_2dr) +
          detail::nonlinearity_at(model, u[j]) +
          detail::source_at(model, s.t, grid.r(j));
      next[j] = (rhs + c_curr * u[j] - c_prev * next[j]) / c_next;
    }
  }
  next[grid.nr] = 0.0;
  std::swap(s.u_prev, s.u_curr);
  s.t += h;
  s.k += 1;
  s.dt = h;
  return s;
}

struct RunOptions {
  /// Record every `stride` steps (the final state is always recorded).
  int stride = 1;
  /// Weight for the ψ-functionals; defaults to δ = 1 for scale-invariant
  /// damping and to ψ ≡ 0 (disabled) for power-law damping.
  std::optional<WeightSpec> weight;
  /// Called with every state, including a synthetic t = 0 state.
  std::function<void(const SolutionState&)> on_step;
  /// Skip the cfl <= 1 check, for deliberately unstable runs.
  bool allow_unstable_cfl = false;
};

namespace detail {

inline std::pair<double, double> sup_and_peak(const Field& u) {
  double sup = 0.0, peak = 0.0;
  for (double v : u) {
    if (!std::isfinite(v)) {
      return {std::numeric_limits<double>::infinity(), v};
    }
    if (std::abs(v) > sup) {
      sup = std::abs(v);
      peak = v;
    }
  }
  return {sup, peak};
}

}  // namespace detail

/// Integrates to t = T (the uniform step is cfl·dr rounded down so that an
/// integer number of steps lands on T), or until blow-up or instability.
inline RunRecord run(const ModelSpec& model, const RadialGrid& grid,
                     const InitialData& data, const StepControl& ctrl,
                     double horizon, const RunOptions& options = {}) {
  model.validate();
  if (options.allow_unstable_cfl) {
    if (!(ctrl.cfl > 0.0)) throw ConfigError("control: cfl must be positive");
  } else {
    ctrl.validate();
  }
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw ConfigError("run: horizon must be finite and non-negative");
  }
  if (options.stride < 1) throw ConfigError("run: stride must be >= 1");
  check_shape(data.u0, grid);
  check_shape(data.u1, grid);
  const double support = support_radius(data.profile);
  if (grid.r_max < support + horizon + 2.0 * grid.dr) {
    throw ConfigError("run: r_max must be at least r0 + T + 2dr so the "
                      "support cone stays inside the domain");
  }

  RunRecord rec;
  if (options.weight) {
    rec.weight = *options.weight;
  } else if (const auto mu = model.mu()) {
    rec.weight = make_weight(*mu, 1.0);
  } else {
    rec.weight = unit_weight();
    rec.weight_enabled = false;
  }
  const int n = model.n;

  auto record = [&](const Field& u, double l2w, double energy, double t) {
    const auto [sup, peak] = detail::sup_and_peak(u);
    rec.times.push_back(t);
    Field sq(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) sq[j] = u[j] * u[j];
    rec.l2.push_back(radial_integral(sq, grid, n));
    rec.weighted_l2.push_back(l2w);
    rec.weighted_energy.push_back(energy);
    rec.supnorm.push_back(sup);
    rec.peak.push_back(peak);
  };
  auto record_state = [&](const SolutionState& s) {
    if (!all_finite(s.u_curr) || !all_finite(s.u_prev)) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      rec.times.push_back(s.t);
      rec.l2.push_back(nan);
      rec.weighted_l2.push_back(nan);
      rec.weighted_energy.push_back(nan);
      rec.supnorm.push_back(std::numeric_limits<double>::infinity());
      rec.peak.push_back(nan);
      return;
    }
    record(s.u_curr, weighted_l2(s, grid, n, rec.weight),
           weighted_energy(s, grid, n, rec.weight), s.t);
  };

  record(data.u0, weighted_l2(data.u0, 0.0, grid, n, rec.weight),
         weighted_energy(data.u0, data.u1, 0.0, grid, n, rec.weight), 0.0);
  if (options.on_step) {
    SolutionState s0{data.u0, data.u0, 0.0, 0, 0.0, 0.0};
    options.on_step(s0);
  }
  if (horizon == 0.0) return rec;

  const double threshold = ctrl.threshold_for(rec.supnorm.front());
  const double dt_cfl = ctrl.cfl * grid.dr;
  const auto nsteps =
      static_cast<long>(std::ceil(horizon / dt_cfl * (1.0 - 1e-12)));
  const double dt = horizon / static_cast<double>(nsteps);

  std::deque<double> sup_hist, peak_hist;
  const auto window = static_cast<std::size_t>(ctrl.monotone_window);
  bool refined = false;

  SolutionState s = first_step(data, model, grid, dt);
  while (true) {
    const auto [sup, peak] = detail::sup_and_peak(s.u_curr);
    if (!std::isfinite(sup)) {
      // Overflow/NaN before the blow-up pattern fired: numerical instability.
      rec.status = RunStatus::unstable;
      record_state(s);
      break;
    }
    sup_hist.push_back(sup);
    peak_hist.push_back(peak);
    if (sup_hist.size() > window) {
      sup_hist.pop_front();
      peak_hist.pop_front();
    }
    const std::vector<double> hs(sup_hist.begin(), sup_hist.end());
    const std::vector<double> hp(peak_hist.begin(), peak_hist.end());
    if (blowup_pattern(hs, hp, threshold, ctrl.monotone_window)) {
      rec.status = RunStatus::blowup_detected;
      rec.t_star = s.t;
      record_state(s);
      break;
    }

    const bool near_blowup = sup > 0.5 * threshold;
    const bool done = horizon - s.t <= 1e-9 * dt;
    if (done || near_blowup || s.k % options.stride == 0) record_state(s);
    if (options.on_step) options.on_step(s);
    if (done) break;

    double h = s.dt;
    if (near_blowup && !refined && ctrl.refine_factor > 1.0) {
      h = std::max(h / ctrl.refine_factor, ctrl.dt_floor);
      refined = true;
    }
    s.dt_next = std::min(h, horizon - s.t);
    s = step(std::move(s), model, grid);
  }
  rec.steps = s.k;
  return rec;
}

}  // namespace dampwave
