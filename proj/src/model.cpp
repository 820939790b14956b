#include "logkw/model.hpp"

#include <cmath>
#include <sstream>

#include "logkw/error.hpp"

namespace logkw {

namespace {

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    std::ostringstream os;
    os << name << " must be positive and finite, got " << value;
    throw Error(Errc::NonPositiveParameter, os.str());
  }
}

}  // namespace

ValidatedSpec validate_spec(const MarketSpec& spec) {
  require_positive(spec.sigma, "sigma");
  require_positive(spec.k, "k");
  require_positive(spec.r, "r");
  if (!(spec.b >= 0.0) || !std::isfinite(spec.b)) {
    throw Error(Errc::NonPositiveParameter, "b must be non-negative");
  }
  for (double v : {spec.a, spec.theta, spec.z0, spec.rho}) {
    if (!std::isfinite(v)) throw Error(Errc::NonPositiveParameter, "non-finite market parameter");
  }

  const bool closed_ok = spec.complete_market_mode && std::abs(spec.rho) <= 1.0;
  if (!(std::abs(spec.rho) < 1.0) && !closed_ok) {
    std::ostringstream os;
    os << "rho = " << spec.rho
       << (spec.complete_market_mode ? " outside [-1, 1]" : " outside (-1, 1)");
    throw Error(Errc::RhoOutOfRange, os.str());
  }

  const NumeraireSpec num = derive_numeraire(spec);
  const double mpr2 = num.mpr * num.mpr;
  if (!(2.0 * spec.r > mpr2)) {
    std::ostringstream os;
    os << "2r = " << 2.0 * spec.r << " <= (pi_star sigma)^2 = " << mpr2;
    throw Error(Errc::IntegrabilityViolation, os.str());
  }

  ValidatedSpec out{spec, {}};
  if (spec.r <= 3.5 * mpr2) {
    std::ostringstream os;
    os << "r = " << spec.r << " <= 7 (pi_star sigma)^2 / 2 = " << 3.5 * mpr2
       << "; fourth moments of the endowment are not guaranteed";
    out.warnings.push_back(os.str());
  }
  return out;
}

void validate_numerics(const NumericsConfig& cfg) {
  require_positive(cfg.dt, "dt");
  require_positive(cfg.horizon_tol, "horizon_tol");
  if (cfg.n_paths < 2) throw Error(Errc::NonPositiveParameter, "n_paths must be >= 2");
}

NumeraireSpec derive_numeraire(const MarketSpec& spec) {
  NumeraireSpec num;
  num.pi_star = spec.a / (spec.sigma * spec.sigma);
  num.mpr = num.pi_star * spec.sigma;
  num.eta = spec.k * spec.theta - spec.b * spec.sigma * num.pi_star * spec.rho;
  return num;
}

HorizonTruncation horizon_truncation(const MarketSpec& spec, double tol, double dt) {
  require_positive(tol, "horizon_tol");
  require_positive(dt, "dt");
  const NumeraireSpec num = derive_numeraire(spec);
  const double nu = spec.r - 0.5 * num.mpr * num.mpr;
  if (!(nu > 0.0)) {
    throw Error(Errc::DecayRateNonPositive, "r - (pi_star sigma)^2 / 2 must be positive");
  }
  const double dz = spec.z0 - spec.theta;
  const double cz = std::sqrt(2.0 * (spec.theta * spec.theta + spec.b * spec.b / (2.0 * spec.k)) +
                              2.0 * dz * dz);
  const auto bound = [&](double t) { return cz * std::exp(-nu * t) / nu; };

  Index n = 1;
  if (cz > 0.0) {
    const double t_star = std::log(cz / (nu * tol)) / nu;
    if (t_star > dt) n = static_cast<Index>(std::ceil(t_star / dt));
    // guard the ceil against rounding on either side
    while (n > 1 && bound(static_cast<double>(n - 1) * dt) <= tol) --n;
    while (bound(static_cast<double>(n) * dt) > tol) ++n;
  }
  HorizonTruncation out;
  out.n_steps = n;
  out.t_max = static_cast<double>(n) * dt;
  out.decay_rate = nu;
  out.tail_bound = bound(out.t_max);
  return out;
}

}  // namespace logkw
