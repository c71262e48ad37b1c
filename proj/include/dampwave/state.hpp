#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dampwave/model.hpp"

namespace dampwave {

/// Two consecutive time levels of the leapfrog scheme.
struct SolutionState {
  Field u_prev;  // level k-1
  Field u_curr;  // level k
  double t = 0.0;
  long k = 0;
  double dt = 0.0;       // t_k - t_{k-1}
  double dt_next = 0.0;  // step size the next update will use
};

struct StepControl {
  double cfl = 0.5;
  double dt_floor = 1e-12;
  /// Absolute sup-norm cap; when unset it is blowup_factor × initial sup-norm.
  std::optional<double> blowup_threshold;
  double blowup_factor = 1e6;
  double refine_factor = 2.0;
  /// Number of trailing samples that must grow monotonically for blow-up.
  int monotone_window = 20;

  void validate() const {
    if (!(cfl > 0.0 && cfl <= 1.0)) {
      throw ConfigError("control: cfl must lie in (0, 1]");
    }
    if (!(dt_floor > 0.0)) throw ConfigError("control: dt_floor must be > 0");
    if (!(refine_factor >= 1.0)) {
      throw ConfigError("control: refine_factor must be >= 1");
    }
    if (blowup_threshold && !(*blowup_threshold > 0.0)) {
      throw ConfigError("control: blowup_threshold must be positive");
    }
    if (!(blowup_factor > 1.0)) {
      throw ConfigError("control: blowup_factor must exceed 1");
    }
    if (monotone_window < 2) {
      throw ConfigError("control: monotone_window must be >= 2");
    }
  }

  [[nodiscard]] double threshold_for(double initial_sup) const {
    if (blowup_threshold) return *blowup_threshold;
    return blowup_factor * (initial_sup > 0.0 ? initial_sup : 1.0);
  }
};

/// ψ(t,x) = a|x|²/(1+t)² with a = μ/(2(2+δ)).
struct WeightSpec {
  double delta = 1.0;
  double a = 0.0;
  double mu = 0.0;
};

inline WeightSpec make_weight(double mu, double delta) {
  if (!(delta > 0.0)) throw ConfigError("weight: delta must be positive");
  if (!(mu >= 0.0)) throw ConfigError("weight: mu must be non-negative");
  return WeightSpec{delta, mu / (2.0 * (2.0 + delta)), mu};
}

/// ψ ≡ 0; used where the weight is undefined (power-law damping).
inline WeightSpec unit_weight() { return WeightSpec{1.0, 0.0, 0.0}; }

enum class RunStatus { completed, blowup_detected, unstable };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::completed:
      return "completed";
    case RunStatus::blowup_detected:
      return "blowup_detected";
    case RunStatus::unstable:
      return "unstable";
  }
  return "unknown";
}

/// Sampled diagnostics of one run.  Energies use the half-level velocity
/// (u^k - u^{k-1})/dt and are reported in the row of t_k.
struct RunRecord {
  std::vector<double> times;
  std::vector<double> l2;               // ∫u²
  std::vector<double> weighted_l2;      // ∫e^{2ψ}u²
  std::vector<double> weighted_energy;  // ∫e^{2ψ}(u_t²+|∇u|²)
  std::vector<double> supnorm;
  std::vector<double> peak;  // signed value of u where |u| is largest
  RunStatus status = RunStatus::completed;
  std::optional<double> t_star;
  WeightSpec weight;
  bool weight_enabled = true;
  long steps = 0;

  [[nodiscard]] std::size_t size() const { return times.size(); }
};

}  // namespace dampwave
