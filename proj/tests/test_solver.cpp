#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dampwave/solver.hpp"

using namespace dampwave;

namespace {

ModelSpec linear(int n, double mu) {
  ModelSpec m;
  m.n = n;
  m.damping = ScaleInvariantDamping{mu};
  m.nonlinearity = Nonlinearity::none;
  return m;
}

// (1 - r²/4)³ on r < 2 and its radial Laplacian, written out by hand.
double mms_shape(double r) {
  if (r >= 2.0) return 0.0;
  const double w = 1.0 - r * r / 4.0;
  return w * w * w;
}

double mms_lap(double r, int n) {
  if (r >= 2.0) return 0.0;
  const double w = 1.0 - r * r / 4.0;
  const double d1 = -1.5 * r * w * w;                  // φ'
  const double d2 = -1.5 * w * w + 1.5 * r * r * w;    // φ''
  return r > 0.0 ? d2 + (n - 1) / r * d1 : n * d2;
}

// Final field of a run (captured on the last accepted step).
Field final_field(const ModelSpec& m, const RadialGrid& g, const InitialData& d,
                  double T, RunRecord* rec_out = nullptr, StepControl ctrl = {}) {
  Field u;
  RunOptions o;
  o.on_step = [&](const SolutionState& s) { u = s.u_curr; };
  RunRecord rec = run(m, g, d, ctrl, T, o);
  if (rec_out) *rec_out = rec;
  return u;
}

}  // namespace

TEST(Laplacian, ExactOnQuadratic) {
  const auto g = make_grid(3.0, 60);
  const Field f = sample(g, [](double r) { return r * r; });
  const Field lap = laplacian_radial(f, g, 3);
  for (int j = 0; j < g.nr; ++j) EXPECT_NEAR(lap[j], 6.0, 1e-9);
  const Field c(g.size(), 7.0);
  for (int j = 0; j < g.nr; ++j) EXPECT_EQ(laplacian_radial(c, g, 2)[j], 0.0);
}

TEST(Laplacian, CosineIn2dSecondOrder) {
  auto err = [](int nr) {
    const auto g = make_grid(3.0, nr);
    const Field lap = laplacian_radial(sample(g, [](double r) { return std::cos(r); }), g, 2);
    double e = 0.0;
    for (int j = 1; j < g.nr; ++j) {
      const double r = g.r(j);
      e = std::max(e, std::abs(lap[j] - (-std::cos(r) - std::sin(r) / r)));
    }
    return e;
  };
  EXPECT_LT(err(200), 1e-3);
  EXPECT_NEAR(err(200) / err(400), 4.0, 0.4);
}

TEST(FirstStep, ZeroDataStaysZero) {
  const auto g = make_grid(4.0, 100);
  const auto d = sample_initial_data(PolynomialBump{0.0, 1.0, 3}, g);
  const auto s = first_step(d, ModelSpec{}, g, 0.02);
  for (double v : s.u_curr) EXPECT_EQ(v, 0.0);
  EXPECT_DOUBLE_EQ(s.t, 0.02);
}

TEST(FirstStep, HandExpansionAtCenter) {
  // u0 = 0, u1 = bump: u¹ = dt·u1 + dt²/2·(-μ u1) = dt u1 (1 - μ dt/2)
  const auto g = make_grid(4.0, 400);
  const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 1.0, 3}, 0.0, 1.0}, g);
  ModelSpec m;
  m.damping = ScaleInvariantDamping{2.0};
  const double dt = 0.005;
  const auto s = first_step(d, m, g, dt);
  for (int j : {0, 10, 50}) {
    EXPECT_NEAR(s.u_curr[j], dt * d.u1[j] * (1.0 - 2.0 * dt / 2.0), 1e-16);
  }
}

TEST(FirstStep, ManufacturedThirdOrder) {
  // u = e^{-t} cos r, n = 1, μ = 2, p = 2, with the matching source.
  ModelSpec m;
  m.damping = ScaleInvariantDamping{2.0};
  m.forcing = [](double t, double r) {
    const double u = std::exp(-t) * std::cos(r);
    return u + u - 2.0 / (1.0 + t) * u - u * u;
  };
  auto err = [&](int nr) {
    const auto g = make_grid(2.0, nr);
    InitialData d{PolynomialBump{}, sample(g, [](double r) { return std::cos(r); }),
                  sample(g, [](double r) { return -std::cos(r); })};
    const double dt = 0.5 * g.dr;
    const auto s = first_step(d, m, g, dt);
    double e = 0.0;
    for (int j = 0; j < g.nr; ++j) {
      e = std::max(e, std::abs(s.u_curr[j] - std::exp(-dt) * std::cos(g.r(j))));
    }
    return std::pair{e, dt};
  };
  const auto [e1, dt1] = err(100);
  const auto [e2, dt2] = err(200);
  EXPECT_LT(e1, dt1 * dt1 * dt1);
  EXPECT_GT(e1 / e2, 7.0);
}

TEST(Step, ZeroStateForever) {
  const auto g = make_grid(4.0, 100);
  SolutionState s{zero_field(g), zero_field(g), 0.1, 1, 0.02, 0.02};
  for (int k = 0; k < 50; ++k) s = step(std::move(s), ModelSpec{}, g);
  for (double v : s.u_curr) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.k, 51);
}

TEST(Step, DAlembertFreeWave) {
  auto err = [](int nr) {
    const auto g = make_grid(5.0, nr);
    const PolynomialBump bump{1.0, 1.0, 3};
    const auto d = sample_initial_data(bump, g);
    const double T = 2.0;
    const Field u = final_field(linear(1, 0.0), g, d, T);
    double e = 0.0;
    for (int j = 0; j <= g.nr; ++j) {
      const double r = g.r(j);
      const double exact =
          0.5 * (profile_value(bump, std::abs(r - T)) + profile_value(bump, r + T));
      e = std::max(e, std::abs(u[j] - exact));
    }
    return e;
  };
  const double e1 = err(500), e2 = err(1000);
  EXPECT_LT(e2, 1e-4);
  EXPECT_GT(e1 / e2, 3.5);
}

TEST(Run, HorizonZero) {
  const auto g = make_grid(4.0, 100);
  const auto d = sample_initial_data(PolynomialBump{}, g);
  const auto rec = run(ModelSpec{}, g, d, StepControl{}, 0.0);
  ASSERT_EQ(rec.size(), 1u);
  EXPECT_EQ(rec.times[0], 0.0);
  EXPECT_EQ(rec.status, RunStatus::completed);
  EXPECT_EQ(rec.supnorm[0], 1.0);
}

TEST(Run, DomainTooSmallRejected) {
  const auto g = make_grid(4.0, 100);
  const auto d = sample_initial_data(PolynomialBump{}, g);
  EXPECT_THROW(run(ModelSpec{}, g, d, StepControl{}, 3.0), ConfigError);
  EXPECT_NO_THROW(run(ModelSpec{}, g, d, StepControl{}, 2.9));
}

TEST(Run, EndsExactlyAtHorizon) {
  const auto g = make_grid(6.0, 333);
  const auto d = sample_initial_data(PolynomialBump{}, g);
  RunOptions o;
  o.stride = 7;
  const auto rec = run(linear(2, 3.0), g, d, StepControl{}, 2.7, o);
  EXPECT_NEAR(rec.times.back(), 2.7, 1e-12);
  for (std::size_t i = 1; i < rec.size(); ++i) EXPECT_GT(rec.times[i], rec.times[i - 1]);
}

TEST(Run, FreeWaveEnergyConserved) {
  for (int n = 1; n <= 3; ++n) {
    const auto g = make_grid(8.0, 1600);
    const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 1.0, 3}, 1.0, 0.5}, g);
    const auto rec = run(linear(n, 0.0), g, d, StepControl{}, 5.0);
    double drift = 0.0;
    for (double e : rec.weighted_energy) {
      drift = std::max(drift, std::abs(e / rec.weighted_energy.front() - 1.0));
    }
    EXPECT_LT(drift, 1e-3) << "n=" << n;
  }
}

TEST(Run, ManufacturedSecondOrder2d) {
  ModelSpec m;
  m.n = 2;
  m.damping = ScaleInvariantDamping{2.0};
  m.p = 2.0;
  m.forcing = [](double t, double r) {
    const double e = std::exp(-t);
    const double u = e * mms_shape(r);
    return u - e * mms_lap(r, 2) - 2.0 / (1.0 + t) * u - u * u;
  };
  auto err = [&](int nr) {
    const auto g = make_grid(4.0, nr);
    const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 2.0, 3}, 1.0, -1.0}, g);
    const Field u = final_field(m, g, d, 1.0);
    Field diff(g.size());
    for (int j = 0; j <= g.nr; ++j) diff[j] = u[j] - std::exp(-1.0) * mms_shape(g.r(j));
    return l2_norm(diff, g, 2);
  };
  const double ratio = err(128) / err(256);
  EXPECT_GE(ratio, 3.6);
  EXPECT_LE(ratio, 4.4);
}

TEST(Run, StepSizeChangeKeepsAccuracy) {
  // Manufactured run with the step halved midway through.
  ModelSpec m;
  m.damping = ScaleInvariantDamping{2.0};
  m.forcing = [](double t, double r) {
    const double e = std::exp(-t);
    const double u = e * mms_shape(r);
    return u - e * mms_lap(r, 1) - 2.0 / (1.0 + t) * u - u * u;
  };
  auto err = [&](int nr, bool change) {
    const auto g = make_grid(4.0, nr);
    const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 2.0, 3}, 1.0, -1.0}, g);
    const double h = 0.5 * g.dr;
    auto s = first_step(d, m, g, h);
    while (s.t < 1.0 - 1e-12) {
      if (change && s.t > 0.5) s.dt_next = 0.5 * h;
      s.dt_next = std::min(s.dt_next, 1.0 - s.t);
      s = step(std::move(s), m, g);
    }
    double e = 0.0;
    for (int j = 0; j <= g.nr; ++j) {
      e = std::max(e, std::abs(s.u_curr[j] - std::exp(-s.t) * mms_shape(g.r(j))));
    }
    return e;
  };
  EXPECT_LT(err(200, true), 2.0 * err(200, false) + 1e-12);
  EXPECT_GT(err(200, true) / err(400, true), 3.0);
}

TEST(Run, Linearity) {
  const auto g = make_grid(6.0, 600);
  const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 1.0, 3}, 1.0, 0.3}, g);
  InitialData scaled = d;
  const double alpha = 3.7;
  for (auto& v : scaled.u0) v *= alpha;
  for (auto& v : scaled.u1) v *= alpha;
  const ModelSpec m = linear(3, 5.0);
  RunRecord rec;
  const Field u = final_field(m, g, d, 3.0, &rec);
  const Field ua = final_field(m, g, scaled, 3.0);
  const double tol = 1e-10 * static_cast<double>(rec.steps) * sup_norm(ua);
  for (int j = 0; j <= g.nr; ++j) EXPECT_NEAR(ua[j], alpha * u[j], tol);
}

TEST(Run, FinitePropagation) {
  const auto g = make_grid(10.0, 1000);
  const double r0 = 1.0;
  const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, r0, 3}, 1.0, 1.0}, g);
  ModelSpec m = linear(2, 2.0);
  m.nonlinearity = Nonlinearity::abs_pow;
  const StepControl ctrl;
  RunOptions o;
  double worst_tail = 0.0;
  o.on_step = [&](const SolutionState& s) {
    const double numerical_cone = r0 + s.t / ctrl.cfl + 2.0 * g.dr;
    const double physical_cone = r0 + s.t + 0.5;
    const double sup = sup_norm(s.u_curr);
    for (int j = 0; j <= g.nr; ++j) {
      if (g.r(j) > numerical_cone) {
        ASSERT_EQ(s.u_curr[j], 0.0) << "t=" << s.t;
      }
      if (g.r(j) > physical_cone && sup > 0) {
        worst_tail = std::max(worst_tail, std::abs(s.u_curr[j]) / sup);
      }
    }
  };
  run(m, g, d, ctrl, 8.0, o);
  EXPECT_LT(worst_tail, 1e-3);
}

TEST(Run, DiscreteScaleInvariance) {
  // Levels k-1, k at t = 1 on grid (8, nr) restarted at t̃ = 0 on (4, nr):
  // ũ(t̃, x) = u(2(1+t̃) - 1, 2x) holds node by node.
  const int nr = 800;
  const auto g = make_grid(8.0, nr);
  const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 1.0, 3}, 1.0, 0.5}, g);
  const ModelSpec m = linear(3, 2.0);
  SolutionState at1;
  Field at3;
  RunOptions o;
  o.on_step = [&](const SolutionState& s) {
    if (std::abs(s.t - 1.0) < 1e-9) at1 = s;
    if (std::abs(s.t - 3.0) < 1e-9) at3 = s.u_curr;
  };
  run(m, g, d, StepControl{}, 3.0, o);
  ASSERT_FALSE(at1.u_curr.empty());
  ASSERT_FALSE(at3.empty());

  const auto gs = make_grid(4.0, nr);
  SolutionState s{at1.u_prev, at1.u_curr, 0.0, 0, 0.5 * at1.dt, 0.5 * at1.dt};
  while (s.t < 1.0 - 1e-9) s = step(std::move(s), m, gs);
  EXPECT_NEAR(s.t, 1.0, 1e-9);
  const double scale = sup_norm(at3);
  for (int j = 0; j <= nr; ++j) EXPECT_NEAR(s.u_curr[j], at3[j], 1e-10 * scale);
}

TEST(Run, ScaleInvarianceThroughRestart) {
  // Same relation with a fresh Taylor start from (u, 2u_t)(1, 2x).
  const int nr = 1600;
  const auto g = make_grid(8.0, nr);
  const auto d = sample_initial_data(DataSpec{PolynomialBump{1.0, 1.0, 3}, 1.0, 0.0}, g);
  const ModelSpec m = linear(1, 2.0);
  std::vector<SolutionState> around1;
  Field at3;
  RunOptions o;
  o.on_step = [&](const SolutionState& s) {
    if (std::abs(s.t - 1.0) < 2.5 * s.dt && s.dt > 0) around1.push_back(s);
    if (std::abs(s.t - 3.0) < 1e-9) at3 = s.u_curr;
  };
  run(m, g, d, StepControl{}, 3.0, o);
  const SolutionState* mid = nullptr;
  for (std::size_t i = 1; i + 1 < around1.size(); ++i) {
    if (std::abs(around1[i].t - 1.0) < 1e-9) mid = &around1[i];
  }
  ASSERT_NE(mid, nullptr);
  const SolutionState& next = *(mid + 1);
  const double dt = mid->dt;
  const auto gs = make_grid(4.0, nr);
  InitialData ds{PolynomialBump{1.0, 1.6, 3}, mid->u_curr, Field(gs.size())};
  for (int j = 0; j <= nr; ++j) {
    ds.u1[j] = 2.0 * (next.u_curr[j] - mid->u_prev[j]) / (2.0 * dt);
  }
  const Field us = final_field(m, gs, ds, 1.0);
  Field diff(gs.size());
  for (int j = 0; j <= nr; ++j) diff[j] = us[j] - at3[j];
  EXPECT_LT(sup_norm(diff), 1e-3 * sup_norm(at3));
}

TEST(Run, BlowupTimeStableUnderRefinement) {
  ModelSpec m;
  m.damping = ScaleInvariantDamping{2.0};
  m.p = 2.0;
  auto tstar = [&](int nr) {
    const auto g = make_grid(13.0, nr);
    const auto d = sample_initial_data(PolynomialBump{5.0, 1.0, 3}, g);
    const auto rec = run(m, g, d, StepControl{}, 10.0);
    EXPECT_EQ(rec.status, RunStatus::blowup_detected);
    return rec.t_star.value_or(0.0);
  };
  const double a = tstar(1300), b = tstar(2600);
  EXPECT_GT(a, 0.0);
  EXPECT_LT(std::abs(a - b) / b, 0.05);
}

TEST(Run, CflViolationIsUnstable) {
  const auto g = make_grid(24.0, 1200);
  const auto d = sample_initial_data(PolynomialBump{}, g);
  StepControl ctrl;
  ctrl.cfl = 1.5;
  ctrl.refine_factor = 1.0;
  EXPECT_THROW(run(linear(1, 2.0), g, d, ctrl, 20.0), ConfigError);
  RunOptions o;
  o.allow_unstable_cfl = true;
  const auto rec = run(linear(1, 2.0), g, d, ctrl, 20.0, o);
  EXPECT_EQ(rec.status, RunStatus::unstable);
  EXPECT_FALSE(rec.t_star.has_value());
}
