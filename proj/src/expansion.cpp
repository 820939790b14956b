#include "logkw/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace logkw {

Quartic<double> value_polynomial(const Moments& m) { return value_polynomial(m.a1, m.a2, m.a3, m.a4, m.g); }

Quartic<double> ce_polynomial(const Moments& m) { return ce_polynomial(m.a1, m.a2, m.a3, m.a4, m.g); }

double eps_threshold(const Moments& m) {
  double eps_l = 1.0;
  if (m.a1 != 0.0) eps_l = std::min(eps_l, 1.0 / (4.0 * std::abs(m.a1)));
  if (m.p0 > 0.0) eps_l = std::min(eps_l, 1.0 / (2.0 * std::sqrt(m.p0)));
  return eps_l;
}

Eigen::ArrayXd value_expansion(const Moments& m, const Eigen::ArrayXd& eps_grid, std::vector<std::string>* warnings) {
  if (warnings) {
    const double eps_l = eps_threshold(m);
    for (double e : eps_grid) {
      if (!(e > 0.0 && e < eps_l)) {
        std::ostringstream msg;
        msg << "eps = " << e << " lies outside (0, " << eps_l << ")";
        warnings->push_back(msg.str());
      }
    }
  }
  return value_polynomial(m)(eps_grid);
}

WealthApproximation wealth_approximation(const TerminalValues& tv, double eps) {
  WealthApproximation w;
  w.eps = eps;
  w.x_hat = eps * tv.delta + (eps * eps) * tv.gamma;
  const Index bad = ((1.0 + w.x_hat - eps * tv.f) <= 0.0).count();
  w.violation_frac = tv.f.size() ? static_cast<double>(bad) / static_cast<double>(tv.f.size()) : 0.0;
  return w;
}

WealthApproximation wealth_approximation(const KWPaths& kw, const PathBundle& bundle, double eps) {
  return wealth_approximation(terminal_values(kw, bundle), eps);
}

CertaintyEquivalent certainty_equivalent(const Moments& m, const Eigen::ArrayXd& eps_grid,
                                         const std::optional<Eigen::ArrayXd>& u_estimates) {
  CertaintyEquivalent ce;
  ce.ce_hat = ce_polynomial(m)(eps_grid);
  if (u_estimates) ce.ce_exact = u_estimates->unaryExpr([](double u) { return std::expm1(u); });
  return ce;
}

ExpansionReport expansion_report(const Moments& m, const TerminalValues& terminal, const Eigen::ArrayXd& eps_grid,
                                 const std::optional<Eigen::ArrayXd>& u_estimates) {
  ExpansionReport rep;
  rep.eps_grid = eps_grid;
  rep.u_hat = value_expansion(m, eps_grid, &rep.warnings);
  const CertaintyEquivalent ce = certainty_equivalent(m, eps_grid, u_estimates ? u_estimates : rep.u_hat);
  rep.ce_hat = ce.ce_hat;
  rep.ce_exact = *ce.ce_exact;
  rep.violation_frac.resize(eps_grid.size());
  for (Index i = 0; i < eps_grid.size(); ++i) {
    rep.violation_frac[i] = wealth_approximation(terminal, eps_grid[i]).violation_frac;
  }
  return rep;
}

void write_expansion_csv(std::ostream& out, const ExpansionReport& r) {
  out.precision(17);
  out << "eps,u_hat,ce_hat,ce_exact,violation_frac\n";
  for (Index i = 0; i < r.eps_grid.size(); ++i) {
    out << r.eps_grid[i] << ',' << r.u_hat[i] << ',' << r.ce_hat[i] << ',' << r.ce_exact[i] << ','
        << r.violation_frac[i] << '\n';
  }
}

}  // namespace logkw
