#include "logkw/psi_ode.hpp"

#include <string>

namespace logkw {

PsiSolution solve_psi_ode(const GeneralFactorSpec& g, Index n_grid) {
  if (n_grid < 4) throw Error(Errc::SingularSystem, "psi grid needs at least 4 points");
  if (!(g.z_hi > g.z_lo)) throw Error(Errc::SingularSystem, "psi grid has empty range");
  const double h = (g.z_hi - g.z_lo) / static_cast<double>(n_grid - 1);

  PsiSolution sol;
  sol.z = Eigen::ArrayXd::LinSpaced(n_grid, g.z_lo, g.z_hi);

  // Interior unknowns psi_1 .. psi_{n-2}.
  const Index m = n_grid - 2;
  Eigen::ArrayXd sub(m), diag(m), sup(m), rhs(m);
  for (Index j = 0; j < m; ++j) {
    const double z = sol.z[j + 1];
    const double kap = g.kappa(z);
    if (!(kap > 0.0)) throw Error(Errc::SingularSystem, "kappa must be positive on the grid");
    const double diff = 0.5 * kap * kap / (h * h);
    const double drift = (g.mu(z) - g.drift_shift * kap) / (2.0 * h);
    sub[j] = diff - drift;
    diag[j] = -g.r0(z) - 2.0 * diff;
    sup[j] = diff + drift;
    rhs[j] = -g.lam(z);
  }
  // psi_0 = 2 psi_1 - psi_2 and psi_{n-1} = 2 psi_{n-2} - psi_{n-3}.
  if (m == 2) {
    const double a0 = sub[0], b0 = diag[0], c0 = sup[0];
    const double a1 = sub[1], b1 = diag[1], c1 = sup[1];
    // psi_0 and psi_3 both depend on psi_1, psi_2.
    const double m00 = b0 + 2.0 * a0, m01 = c0 - a0;
    const double m10 = a1 - c1, m11 = b1 + 2.0 * c1;
    const double det = m00 * m11 - m01 * m10;
    const double scale = std::abs(m00 * m11) + std::abs(m01 * m10);
    if (!(std::abs(det) > 1e-13 * scale)) throw Error(Errc::SingularSystem, "psi system is singular");
    const Eigen::ArrayXd inner = (Eigen::ArrayXd(2) << (rhs[0] * m11 - m01 * rhs[1]) / det,
                                  (m00 * rhs[1] - m10 * rhs[0]) / det)
                                     .finished();
    sol.psi.resize(4);
    sol.psi.segment(1, 2) = inner;
  } else {
    // psi_0 = (5 psi_1 - 4 psi_2 + psi_3)/2, second-order psi'' = 0; the psi_3
    // term is eliminated with the next row to keep the system tridiagonal.
    // Mirrored at the right end.
    const double a1 = sub[1], b1 = diag[1], c1 = sup[1], r1 = rhs[1];
    const double am = sub[m - 2], bm = diag[m - 2], cm = sup[m - 2], rm = rhs[m - 2];
    const auto eliminate = [](double extra, double coupling, const char* side) {
      if (extra == 0.0) return 0.0;
      if (!(std::abs(coupling) > 1e-13 * std::abs(extra))) {
        throw Error(Errc::SingularSystem, std::string("psi closure has no coupling at the ") + side + " end");
      }
      return extra / coupling;
    };
    {
      const double lo = sub[0];
      diag[0] += 2.5 * lo;
      sup[0] -= 2.0 * lo;
      const double f = eliminate(0.5 * lo, c1, "left");
      diag[0] -= f * a1;
      sup[0] -= f * b1;
      rhs[0] -= f * r1;
    }
    {
      const double hi = sup[m - 1];
      diag[m - 1] += 2.5 * hi;
      sub[m - 1] -= 2.0 * hi;
      const double f = eliminate(0.5 * hi, am, "right");
      diag[m - 1] -= f * cm;
      sub[m - 1] -= f * bm;
      rhs[m - 1] -= f * rm;
    }
    sol.psi.resize(n_grid);
    sol.psi.segment(1, m) = solve_tridiagonal(sub, diag, sup, rhs);
    sol.psi[0] = 0.5 * (5.0 * sol.psi[1] - 4.0 * sol.psi[2] + sol.psi[3]);
    sol.psi[n_grid - 1] =
        0.5 * (5.0 * sol.psi[n_grid - 2] - 4.0 * sol.psi[n_grid - 3] + sol.psi[n_grid - 4]);
    return sol;
  }
  // On four points a cubic with psi'' = 0 at both ends is linear.
  sol.psi[0] = 2.0 * sol.psi[1] - sol.psi[2];
  sol.psi[n_grid - 1] = 2.0 * sol.psi[n_grid - 2] - sol.psi[n_grid - 3];
  return sol;
}

GeneralFactorSpec ou_factor_spec(const MarketSpec& spec, double z_lo, double z_hi) {
  const NumeraireSpec num = derive_numeraire(spec);
  GeneralFactorSpec g;
  g.mu = [k = spec.k, theta = spec.theta](double z) { return k * (theta - z); };
  g.kappa = [b = spec.b](double) { return b; };
  g.lam = [](double z) { return z; };
  g.r0 = [r = spec.r](double) { return r; };
  g.z_lo = z_lo;
  g.z_hi = z_hi;
  g.drift_shift = num.mpr * spec.rho;
  return g;
}

}  // namespace logkw
