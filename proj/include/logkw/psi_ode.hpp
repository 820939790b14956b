#pragma once

#include <cmath>

#include <Eigen/Core>

#include "logkw/error.hpp"
#include "logkw/model.hpp"

namespace logkw {

/// Thomas algorithm for sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i].
/// sub[0] and sup[n-1] are ignored. Throws SingularSystem on a vanishing pivot.
template <class Sub, class Diag, class Sup, class Rhs>
Eigen::Array<typename Rhs::Scalar, Eigen::Dynamic, 1> solve_tridiagonal(
    const Eigen::ArrayBase<Sub>& sub, const Eigen::ArrayBase<Diag>& diag, const Eigen::ArrayBase<Sup>& sup,
    const Eigen::ArrayBase<Rhs>& rhs) {
  using Scalar = typename Rhs::Scalar;
  using Vec = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Index n = rhs.size();
  Vec c(n), d(n), x(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar lower = i > 0 ? sub[i] : Scalar(0);
    const Scalar upper = i + 1 < n ? sup[i] : Scalar(0);
    const Scalar pivot = diag[i] - (i > 0 ? lower * c[i - 1] : Scalar(0));
    const Scalar scale = std::abs(diag[i]) + std::abs(lower) + std::abs(upper);
    if (!(std::abs(pivot) > Scalar(1e-13) * scale)) {
      throw Error(Errc::SingularSystem, "tridiagonal system is singular");
    }
    c[i] = upper / pivot;
    d[i] = (rhs[i] - (i > 0 ? lower * d[i - 1] : Scalar(0))) / pivot;
  }
  for (Index i = n - 1; i >= 0; --i) x[i] = d[i] - (i + 1 < n ? c[i] * x[i + 1] : Scalar(0));
  return x;
}

struct PsiSolution {
  Eigen::ArrayXd z;
  Eigen::ArrayXd psi;
};

/// Solves lam - r0 psi + (mu - drift_shift kappa) psi' + kappa^2 psi''/2 = 0 on a
/// uniform grid of n_grid points over [z_lo, z_hi] with centered differences
/// and a second-order one-sided psi'' = 0 at both ends. Needs n_grid >= 4.
PsiSolution solve_psi_ode(const GeneralFactorSpec& gspec, Index n_grid);

/// OU data of a market: mu = k(theta - z), kappa = b, lam = z, r0 = r.
GeneralFactorSpec ou_factor_spec(const MarketSpec& spec, double z_lo, double z_hi);

}  // namespace logkw
