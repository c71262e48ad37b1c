#pragma once

// Independent re-evaluation of the global-existence parameter conditions.
// Written from the inequalities themselves; shares no code with
// dampwave/feasibility.hpp.

#include <cmath>
#include <string>
#include <vector>

namespace oracle {

struct Tuple {
  int n;
  double p, eps, delta, delta1, delta2, delta3, nu, mu;
};

inline std::vector<std::string> failures(const Tuple& x) {
  std::vector<std::string> bad;
  const double pf = 1.0 + 2.0 / x.n;
  if (!(x.p > pf)) bad.push_back("p > p_F");
  if (!(x.eps > 0 && x.eps < 2.0 * x.n * (x.p - pf) / (x.p - 1.0))) bad.push_back("eps");
  // δ₁ from n/(2+δ) = n/2 - δ₁
  if (std::abs(x.n / (2.0 + x.delta) - (x.n / 2.0 - x.delta1)) > 1e-12) bad.push_back("delta1");
  if (std::abs(x.eps - 3.0 * x.delta1) > 1e-12) bad.push_back("eps = 3 delta1");
  if (!((x.n + 1 - 2 * x.delta1) - (x.n + 1 - 3 * x.delta1) * (1 + 2 * x.delta3) > 0)) {
    bad.push_back("delta3");
  }
  if (!(x.nu * x.delta2 - (x.n + 2 - x.eps) / 2 > 0)) bad.push_back("nu");
  if (!(x.mu >= 2 * x.nu / x.delta2)) bad.push_back("mu first");
  if (!(x.mu / 4 - x.nu - 0.5 - (x.n + 1 - x.eps) * (0.5 + x.nu / (4 * x.delta3 * x.mu)) > 0)) {
    bad.push_back("mu second");
  }
  return bad;
}

}  // namespace oracle
