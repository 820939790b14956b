#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace logkw {

using Index = Eigen::Index;

/// Parameters of the one-factor market: a risky asset with constant drift
/// and volatility, an Ornstein-Uhlenbeck factor Z correlated with the asset,
/// and an endowment paying e^{-rt} Z(t) per unit time.
struct MarketSpec {
  double r = 1.0;
  double a = 0.1;
  double sigma = 0.2;
  double rho = 0.5;
  double k = 1.0;
  double theta = 0.0;
  double b = 0.3;
  double z0 = 0.2;
  bool complete_market_mode = false;
};

/// Numeraire-portfolio quantities derived from a MarketSpec.
struct NumeraireSpec {
  double pi_star = 0.0;  // a / sigma^2
  double mpr = 0.0;      // pi_star * sigma, volatility of the discount process S0
  double eta = 0.0;      // k theta - b sigma pi_star rho, factor drift level under S0
};

/// Scalar diffusion factor dZ = mu(Z) dt + kappa(Z) dB with local endowment
/// rate lam(Z) and baseline rate r0(Z), restricted to [z_lo, z_hi].
struct GeneralFactorSpec {
  std::function<double(double)> mu;
  std::function<double(double)> kappa;
  std::function<double(double)> lam;
  std::function<double(double)> r0;
  double z_lo = -1.0;
  double z_hi = 1.0;
  /// pi_star * sigma * rho, the drift shift of Z under the numeraire measure.
  double drift_shift = 0.0;
};

struct NumericsConfig {
  double dt = 0.005;
  Index n_paths = 200000;
  std::uint64_t seed = 0;
  double horizon_tol = 1e-4;
  bool parallel = true;
  /// Upper bound on the memory of fully materialized path arrays.
  std::size_t max_bundle_bytes = std::size_t{1} << 30;
};

struct ValidatedSpec {
  MarketSpec spec;
  std::vector<std::string> warnings;
};

/// Throws Error{RhoOutOfRange | NonPositiveParameter | IntegrabilityViolation}.
/// Warns (without failing) when r <= 7 (pi_star sigma)^2 / 2, the sufficient
/// condition for four moments of the terminal endowment.
ValidatedSpec validate_spec(const MarketSpec& spec);

void validate_numerics(const NumericsConfig& cfg);

NumeraireSpec derive_numeraire(const MarketSpec& spec);

struct HorizonTruncation {
  double t_max = 0.0;
  Index n_steps = 0;
  double decay_rate = 0.0;  // nu = r - mpr^2 / 2
  double tail_bound = 0.0;  // C_Z e^{-nu t_max} / nu
};

/// Smallest grid-aligned horizon with C_Z e^{-nu T} / nu <= tol, where
/// C_Z = sqrt(2(theta^2 + b^2/(2k)) + 2(z0 - theta)^2) bounds the L2 norm of Z.
HorizonTruncation horizon_truncation(const MarketSpec& spec, double tol, double dt);

}  // namespace logkw
