#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "logkw/expansion.hpp"
#include "logkw/kw.hpp"

namespace logkw {

/// Barrier levels of the stopped processes. The barrier on x + M is not used.
struct StoppingConfig {
  double eps = 0.0;
  double delta_barrier = 0.0;  // 1/(6 eps)
  double gamma_barrier = 0.0;  // 1/(6 eps^2)
  double n_barrier = 0.0;      // 1/(4 eps)
  double p_barrier = 0.0;      // 1/(4 eps^2)
  double eps_l = 1.0;

  /// Throws EpsTooLarge unless 0 < eps < eps_l.
  static StoppingConfig make(double eps, double eps_l);
};

/// Values of the stopped processes at T (i.e. at tau if it was hit).
struct StoppedValues {
  StoppingConfig config;
  Eigen::Array<Index, Eigen::Dynamic, 1> tau;  // n_steps when never hit
  Eigen::Array<bool, Eigen::Dynamic, 1> hit;
  Eigen::ArrayXd delta;
  Eigen::ArrayXd gamma;
  Eigen::ArrayXd n_mart;
  Eigen::ArrayXd p_mart;
  /// max over stopped paths of |Delta(tau)| - delta_barrier, and the largest
  /// single-step |dDelta| on the ensemble.
  double delta_overshoot = 0.0;
  double max_delta_step = 0.0;

  double stop_frac() const;
};

/// Tracks first passages for several eps values in one sweep.
class StoppingTracker final : public KWObserver {
 public:
  explicit StoppingTracker(std::vector<StoppingConfig> configs);
  void begin(const KWHeader& header) override;
  void observe(const KWSlice& slice) override;
  const std::vector<StoppedValues>& stopped() const { return stopped_; }

 private:
  std::vector<StoppedValues> stopped_;
  Index last_step_ = 0;
  Eigen::ArrayXd prev_delta_;
};

StoppedValues stopping_times(const KWPaths& kw, const StoppingConfig& config);

struct BoundEstimate {
  double value = 0.0;
  double se = 0.0;
  /// Lower bound: fraction of paths with a non-positive wealth argument.
  double violation_frac = 0.0;
  /// Upper bound: smallest 1 + eps N^tau + eps^2 P^tau.
  double min_density = 1.0;
};

/// MC mean of ln(1 + eps Delta^tau + eps^2 Gamma^tau - eps F(T)) over the
/// admissible paths. The zero-mean martingale terms eps Delta^tau,
/// eps^2 Gamma^tau and eps^3 N(T) Gamma^tau are subtracted path-wise as control
/// variates. Throws TooManyViolations above 1% violating paths.
BoundEstimate primal_lower_bound(const TerminalValues& terminal, const StoppedValues& stopped);

/// The dual expression -eps E[F] - eps^2 E[(N^tau)^2] - eps^3 E[P^tau N^tau]
/// + E[-ln(1+y) + y], y = eps N^tau + eps^2 P^tau, with the zero-mean term
/// eps^4 P^tau Gamma^tau added as a control variate. Throws NonPositiveDensity.
BoundEstimate dual_upper_bound(const TerminalValues& terminal, const StoppedValues& stopped);

BoundEstimate primal_lower_bound(const PathBundle& bundle, const KWPaths& kw, double eps, double eps_l);
BoundEstimate dual_upper_bound(const PathBundle& bundle, const KWPaths& kw, double eps, double eps_l);

struct BoundsRow {
  double eps = 0.0;
  double u_low = 0.0, se_low = 0.0;
  double u_up = 0.0, se_up = 0.0;
  double u_hat = 0.0;
  double ratio_low = 0.0;  // (u_hat - u_low)/eps^4
  double ratio_up = 0.0;   // (u_up - u_hat)/eps^4
  double stop_frac = 0.0;
  double primal_violation_frac = 0.0;
  double min_density = 1.0;

  double gap_ratio() const;
};

struct BoundsReport {
  std::vector<BoundsRow> rows;
};

BoundsReport bounds_report(const Moments& moments, const TerminalValues& terminal,
                           const std::vector<StoppedValues>& stopped);

struct ResidualVerdict {
  bool pass = false;
  bool sandwich = false;
  bool low_decreasing = false;
  bool up_decreasing = false;
  bool gap_decreasing = false;
  std::vector<std::string> notes;
};

/// Checks, along a descending eps grid, that |ratio_low|, |ratio_up| and the
/// gap (u_up - u_low)/eps^4 strictly decrease with the last value at most half
/// of the first, and that u_low <= u_up within 4 joint standard errors.
/// Magnitudes below 1e-13 count as zero. Throws GridTooSmall under 3 rows.
ResidualVerdict residual_analysis(const BoundsReport& report);

/// Columns eps, u_low, se_low, u_up, se_up, u_hat, ratio_low, ratio_up,
/// stop_frac, primal_violation_frac.
void write_bounds_csv(std::ostream& out, const BoundsReport& report);

}  // namespace logkw
