// Acceptance checks.  `acceptance N` runs criterion N, `acceptance` runs all;
// one [PASS]/[FAIL] line per criterion, exit status 1 if any failed.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dampwave/experiment.hpp"
#include "oracles.hpp"

using namespace dampwave;
using namespace dampwave::lab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

ExperimentConfig config(const std::vector<std::string>& overrides) {
  return load_config({}, overrides);
}

Outcome convergence() {
  Outcome o{true, ""};
  for (int n : {1, 3}) {
    const auto c = config({"model.n=" + std::to_string(n)});
    const auto rows = convergence_study(c.model, c.convergence, c.control, 4);
    o.detail += "n=" + std::to_string(n) + " orders";
    for (const auto& r : rows) {
      if (!r.order) continue;
      o.detail += " " + fmt(*r.order);
      o.pass = o.pass && *r.order >= 1.9 && *r.order <= 2.1;
    }
    o.detail += "; ";
  }
  return o;
}

Outcome free_wave_energy() {
  Outcome o{true, "max relative drift"};
  for (int n = 1; n <= 3; ++n) {
    ModelSpec m;
    m.n = n;
    m.damping = ScaleInvariantDamping{0.0};
    m.nonlinearity = Nonlinearity::none;
    const RadialGrid g = make_grid(1.0 + 10.0 + 2.0, 2000);
    const auto d = sample_initial_data(DataSpec{PolynomialBump{}, 1.0, 0.5}, g);
    const RunRecord rec = run(m, g, d, StepControl{}, 10.0);
    double drift = 0.0;
    for (double e : rec.weighted_energy) {
      drift = std::max(drift, std::abs(e / rec.weighted_energy.front() - 1.0));
    }
    o.pass = o.pass && rec.status == RunStatus::completed && drift < 1e-3;
    o.detail += " n=" + std::to_string(n) + ":" + fmt(drift);
  }
  return o;
}

Outcome weighted_decay() {
  const FeasibleParams f = solve_feasible(1, 4.0);
  const double T = 100.0;
  ModelSpec m;
  m.damping = ScaleInvariantDamping{50.0};
  m.nonlinearity = Nonlinearity::none;
  const RadialGrid g = make_grid(1.0 + T + 2.0, 8000);
  const auto d = sample_initial_data(DataSpec{PolynomialBump{}, 1.0, 0.0}, g);
  RunOptions opts;
  opts.stride = 10;
  opts.weight = make_weight(50.0, f.delta);
  const RunRecord rec = run(m, g, d, StepControl{}, T, opts);
  if (rec.status != RunStatus::completed) return {false, "run did not complete"};
  const FitWindow w{10.0, 100.0};
  const double el2 = fit_decay_rate(rec.times, rec.weighted_l2, w).exponent;
  const double een = fit_decay_rate(rec.times, rec.weighted_energy, w).exponent;
  const double lim_l2 = -(1.0 - f.eps) + 0.3;
  const double lim_en = -(3.0 - f.eps) + 0.5;
  return {el2 <= lim_l2 && een <= lim_en,
          "eps=" + fmt(f.eps) + " delta=" + fmt(f.delta) + " weighted_l2 exponent " +
              fmt(el2) + " (limit " + fmt(lim_l2) + "), weighted energy exponent " +
              fmt(een) + " (limit " + fmt(lim_en) + ")"};
}

Outcome heat_rate() {
  Outcome o{true, "fitted"};
  const RadialGrid g = make_grid(4.0, 400);
  const Field v = sample_initial_data(PolynomialBump{}, g).u0;
  std::vector<double> times;
  for (int i = 0; i < 12; ++i) times.push_back(10.0 * std::pow(100.0, i / 11.0));
  for (int n = 1; n <= 2; ++n) {
    const double e = lp_lq_decay_check(v, g, 2.0, n, times).exponent;
    o.pass = o.pass && std::abs(e + 0.5 * n) <= 0.15;
    o.detail += " n=" + std::to_string(n) + ":" + fmt(e) + " (target " + fmt(-0.5 * n) + ")";
  }
  return o;
}

Outcome diffusion() {
  const auto c = config({"model.mu=50", "model.nonlinearity=\"none\"", "grid.dr=0.01",
                         "diffusion.times=[20,40,80]"});
  const DiffusionResult res = diffusion_study(c, 3);
  if (res.unstable || res.rows.size() != 3) return {false, "runs did not complete"};
  Outcome o{true, "gap"};
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    o.detail += " t=" + fmt(res.rows[i].t) + ":" + std::to_string(res.rows[i].gap);
    if (i > 0) o.pass = o.pass && res.rows[i].gap < res.rows[i - 1].gap;
  }
  return o;
}

Outcome subfujita_blowup() {
  std::vector<double> tstar;
  for (int nr : {2000, 4000}) {
    const auto c = config({"model.mu=2", "model.p=2", "data.amplitude=5", "horizon=10",
                           "grid.r_max=13", "grid.nr=" + std::to_string(nr)});
    const RunOutcome o = simulate(c, c.model, c.data, c.horizon);
    if (o.data_sign <= 0.0) return {false, "data functional not positive"};
    if (o.record.status != RunStatus::blowup_detected || !o.record.t_star) {
      return {false, "nr=" + std::to_string(nr) + " ended " +
                         std::string(to_string(o.record.status))};
    }
    tstar.push_back(*o.record.t_star);
  }
  const double rel = std::abs(tstar[1] - tstar[0]) / tstar[1];

  const auto c = config({"model.mu=2", "model.p=4", "data.amplitude=0.1", "horizon=200"});
  const RunOutcome small = simulate(c, c.model, c.data, c.horizon);
  const Exponents e = fit_exponents(small.record, c.horizon);
  const bool decays = small.record.status == RunStatus::completed && e.weighted_l2 &&
                      e.weighted_energy && *e.weighted_l2 < 0.0 && *e.weighted_energy < 0.0;
  return {rel < 0.05 && decays,
          "p=2 t*=" + fmt(tstar[0]) + "/" + fmt(tstar[1]) + " (rel " + fmt(rel) +
              "); p=4 small data " + std::string(to_string(small.record.status)) +
              " weighted_l2 exponent " + (e.weighted_l2 ? fmt(*e.weighted_l2) : "n/a") +
              " weighted energy exponent " +
              (e.weighted_energy ? fmt(*e.weighted_energy) : "n/a")};
}

std::string ladder_text(const SweepPoint& pt) {
  std::string s;
  for (const auto& st : pt.path) {
    s += " [A=" + fmt(st.amplitude) + " T=" + fmt(st.horizon) + " " + st.status;
    if (st.t_star) s += " t*=" + fmt(*st.t_star);
    if (st.weighted_l2_exponent) s += " exp=" + fmt(*st.weighted_l2_exponent);
    s += "]";
  }
  return s;
}

Outcome escalation() {
  const std::vector<std::string> ladder{
      "model.p=3.5",        "data.amplitude=0.25",       "data.u0_coef=0",
      "data.u1_coef=1",     "horizon=25",                "sweep.escalation_steps=4",
      "sweep.escalation_factor=2"};
  auto with_mu = [&](double mu) {
    auto o = ladder;
    o.push_back("model.mu=" + format_number(mu));
    return config(o);
  };
  const auto weak = with_mu(0.5);
  const auto strong = with_mu(50.0);
  const auto pts = parallel_map(2, 2, [&](std::size_t i) {
    const auto& c = i == 0 ? weak : strong;
    return classify(c, c.model, c.model.mu().value());
  });
  bool strong_global = pts[1].path.size() == 4;
  for (const auto& st : pts[1].path) {
    strong_global = strong_global && st.status == "completed" && st.weighted_l2_exponent &&
                    *st.weighted_l2_exponent < 0.0;
  }
  return {pts[0].verdict == Verdict::blowup && strong_global,
          "mu=0.5:" + ladder_text(pts[0]) + "; mu=50:" + ladder_text(pts[1])};
}

Outcome mu0_slope() {
  std::vector<double> eps;
  for (int i = 0; i < 9; ++i) eps.push_back(0.1 * std::pow(0.01, i / 8.0));
  const double s = loglog_slope(mu0_curve(1, 4.0, eps));
  return {s >= -2.5 && s <= -1.5, "slope " + fmt(s)};
}

Outcome feasibility_soundness() {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> pick_n(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int failures = 0;
  std::string first;
  for (int i = 0; i < 1000; ++i) {
    const int n = pick_n(rng);
    const double pf = 1.0 + 2.0 / n;
    const double p_hi = n == 3 ? 3.0 : pf + 3.0;
    double p = pf;
    while (!(p > pf)) p = pf + unit(rng) * (p_hi - pf);
    const double cap = std::min(eps_upper_bound(n, p), 1.5 * n);
    double eps = 0.0;
    while (!(eps > 0.0 && eps < cap)) eps = unit(rng) * cap;
    try {
      const FeasibleParams f = solve_feasible(n, p, eps);
      const auto bad = oracle::failures(
          {f.n, f.p, f.eps, f.delta, f.delta1, f.delta2, f.delta3, f.nu, f.mu});
      if (!bad.empty()) {
        ++failures;
        if (first.empty()) first = bad.front();
      }
    } catch (const std::exception& e) {
      ++failures;
      if (first.empty()) first = e.what();
    }
  }
  return {failures == 0, std::to_string(failures) + " failures in 1000 inputs" +
                             (first.empty() ? "" : " (first: " + first + ")")};
}

Outcome test_identity() {
  const auto c = config({"model.mu=2", "model.p=2", "data.amplitude=0.1", "data.u1_coef=1",
                         "horizon=32", "grid.r_max=36", "grid.nr=3600", "testfn.R_list=[8,16,32]",
                         "testfn.stride_fraction=256"});
  const TestfnResult res = testfn_study(c);
  Outcome o{res.reports.size() == 3, "relative residual"};
  for (const auto& r : res.reports) {
    const double rel = r.residual / std::abs(r.I_R);
    o.pass = o.pass && rel < 0.05;
    o.detail += " R=" + fmt(r.R) + ":" + fmt(rel);
  }
  double worst = 0.0;
  for (const GTransform& g : {g_transform(GRegime::supercritical_mu, 3.0),
                              g_transform(GRegime::subcritical_mu, 0.5),
                              g_transform(GRegime::power_law, 2.0)}) {
    for (int k = 0; k <= 200; ++k) worst = std::max(worst, g.residual(0.5 * k));
  }
  o.pass = o.pass && worst <= 1e-12;
  o.detail += "; max g residual " + fmt(worst);
  return o;
}

Outcome kernel_mass() {
  const RadialGrid g = make_grid(100.0, 10000);
  const double tol = 10.0 * g.dr * g.dr;
  double worst = 0.0;
  for (int n = 1; n <= 3; ++n) {
    for (double mu : {2.0, 50.0}) {
      for (double t : {0.5, 1.0, 10.0}) {
        const Field k = sample(g, [&](double r) { return gauss_kernel(t, r, mu, n); });
        worst = std::max(worst, std::abs(radial_integral(k, g, n) - 1.0));
      }
    }
  }
  return {worst <= tol, "max |mass - 1| " + fmt(worst) + " (tolerance " + fmt(tol) + ")"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> check;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "manufactured-solution convergence order", convergence},
      {2, "free-wave energy conservation", free_wave_energy},
      {3, "weighted decay for large damping", weighted_decay},
      {4, "heat-side L2 decay rate", heat_rate},
      {5, "diffusion gap decreasing", diffusion},
      {6, "blow-up below the Fujita exponent", subfujita_blowup},
      {7, "escalation ladder for small damping", escalation},
      {8, "mu0(eps) log-log slope", mu0_slope},
      {9, "feasibility soundness", feasibility_soundness},
      {10, "test-function identity", test_identity},
      {11, "Gauss kernel mass", kernel_mass},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);
  if (argc > 2 || only < 0 || only > 11) {
    std::cerr << "usage: acceptance [1-11]\n";
    return 2;
  }
  bool all_pass = true;
  for (const auto& c : criteria()) {
    if (only && c.id != only) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id << " " << c.name
              << ": " << o.detail << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
