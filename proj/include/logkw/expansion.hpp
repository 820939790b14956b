#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "logkw/kw.hpp"

namespace logkw {

/// c[0] + c[1] e + ... + c[4] e^4.
template <class Scalar>
struct Quartic {
  std::array<Scalar, 5> c{};

  Scalar operator()(Scalar eps) const {
    return (((c[4] * eps + c[3]) * eps + c[2]) * eps + c[1]) * eps + c[0];
  }

  template <class Derived>
  auto operator()(const Eigen::ArrayBase<Derived>& eps) const {
    return ((((c[4] * eps + c[3]) * eps + c[2]) * eps + c[1]) * eps + c[0]);
  }
};

/// Coefficients of u_hat(e) = -a1 e - a2/2 e^2 - a3/3 e^3 - (a4/4 + g) e^4.
template <class Scalar>
Quartic<Scalar> value_polynomial(Scalar a1, Scalar a2, Scalar a3, Scalar a4, Scalar g) {
  return {{Scalar(0), -a1, -a2 / Scalar(2), -a3 / Scalar(3), -(a4 / Scalar(4) + g)}};
}

/// Coefficients of the certainty-equivalent quartic.
template <class Scalar>
Quartic<Scalar> ce_polynomial(Scalar a1, Scalar a2, Scalar a3, Scalar a4, Scalar g) {
  const Scalar a1_2 = a1 * a1;
  return {{Scalar(0), -a1, -(a2 - a1_2) / Scalar(2),
           -(a3 / Scalar(3) - a1 * a2 / Scalar(2) + a1_2 * a1 / Scalar(6)),
           -(a4 / Scalar(4) + g - a1 * a3 / Scalar(3) - a2 * a2 / Scalar(8) + a1_2 * a2 / Scalar(4) -
             a1_2 * a1_2 / Scalar(24))}};
}

/// Degree-4 truncation of exp(p(e)) - 1 for p with p(0) = 0, by series composition.
template <class Scalar>
Quartic<Scalar> exp_minus_one_truncated(const Quartic<Scalar>& p) {
  Quartic<Scalar> out;
  Quartic<Scalar> power;  // p^j truncated
  power.c[0] = Scalar(1);
  Scalar factorial = Scalar(1);
  for (int j = 1; j <= 4; ++j) {
    Quartic<Scalar> next;
    for (int a = 0; a <= 4; ++a) {
      for (int b = 0; a + b <= 4; ++b) next.c[a + b] += power.c[a] * p.c[b];
    }
    power = next;
    factorial *= Scalar(j);
    for (int d = 0; d <= 4; ++d) out.c[d] += power.c[d] / factorial;
  }
  return out;
}

Quartic<double> value_polynomial(const Moments& m);
Quartic<double> ce_polynomial(const Moments& m);

/// min(1, 1/(4|A1|), 1/(2 sqrt(P0))).
double eps_threshold(const Moments& m);

/// u_hat on the grid; appends a warning for grid points outside (0, eps_L).
Eigen::ArrayXd value_expansion(const Moments& m, const Eigen::ArrayXd& eps_grid,
                               std::vector<std::string>* warnings = nullptr);

struct WealthApproximation {
  double eps = 0.0;
  Eigen::ArrayXd x_hat;
  /// Fraction of paths with 1 + x_hat - eps F(T) <= 0.
  double violation_frac = 0.0;
};

WealthApproximation wealth_approximation(const TerminalValues& terminal, double eps);
WealthApproximation wealth_approximation(const KWPaths& kw, const PathBundle& bundle, double eps);

struct CertaintyEquivalent {
  Eigen::ArrayXd ce_hat;
  /// e^u - 1 of the supplied u estimates.
  std::optional<Eigen::ArrayXd> ce_exact;
};

CertaintyEquivalent certainty_equivalent(const Moments& m, const Eigen::ArrayXd& eps_grid,
                                         const std::optional<Eigen::ArrayXd>& u_estimates = std::nullopt);

struct ExpansionReport {
  Eigen::ArrayXd eps_grid;
  Eigen::ArrayXd u_hat;
  Eigen::ArrayXd ce_hat;
  Eigen::ArrayXd ce_exact;
  Eigen::ArrayXd violation_frac;
  std::vector<std::string> warnings;
};

/// With u_estimates absent, ce_exact is e^{u_hat} - 1.
ExpansionReport expansion_report(const Moments& m, const TerminalValues& terminal, const Eigen::ArrayXd& eps_grid,
                                 const std::optional<Eigen::ArrayXd>& u_estimates = std::nullopt);

/// Columns eps, u_hat, ce_hat, ce_exact, violation_frac.
void write_expansion_csv(std::ostream& out, const ExpansionReport& report);

}  // namespace logkw
