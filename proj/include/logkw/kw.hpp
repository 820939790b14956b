#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "logkw/model.hpp"
#include "logkw/paths.hpp"

namespace logkw {

enum class Backend { closed_form, regression };

std::string_view backend_name(Backend backend) noexcept;

/// Path-wise decompositions E[F(T)|F_t] = Delta + N and E[N(T)^2|F_t] = Gamma + P.
/// Levels are n_paths x (n_steps + 1); integrands are n_paths x n_steps, column i
/// applying on [t_i, t_{i+1}].
struct KWPaths {
  Eigen::MatrixXd delta;
  Eigen::MatrixXd n_mart;
  Eigen::MatrixXd gamma;
  Eigen::MatrixXd p_mart;
  Eigen::MatrixXd theta_delta;
  Eigen::MatrixXd theta_gamma;
  double n0 = 0.0;
  double p0 = 0.0;
  Backend backend = Backend::closed_form;
};

/// Feature column of the cross-section at time t.
using Feature = std::function<Eigen::ArrayXd(double t, const Eigen::ArrayXd& z, const Eigen::ArrayXd& s0)>;

struct RegressionBasis {
  std::vector<Feature> features;
  /// Relative to the mean diagonal of the Gram matrix.
  double ridge = 1e-8;
};

/// {e^{-rt} s0, e^{-rt} s0 z}: spans the conditional tail of F and the
/// hedge integrand in the OU example.
RegressionBasis default_delta_basis(double r);
/// {e^{-2rt} s0^2}: spans the conditional tail of N^2 in the OU example.
RegressionBasis default_gamma_basis(double r);

struct RegressionSetup {
  RegressionBasis delta_basis;
  RegressionBasis gamma_basis;
  bool parallel = true;
  /// F(T) of the same source when already known; saves one pass.
  const Eigen::ArrayXd* terminal_f = nullptr;
};

struct KWHeader {
  TimeGrid grid;
  Index n_paths = 0;
  std::uint64_t seed = 0;
  bool antithetic = false;
  Backend backend = Backend::closed_form;
  double n0 = 0.0;
  double p0 = 0.0;
};

/// Cross-section at grid time t_step.
struct KWSlice {
  Index step = 0;
  double t = 0.0;
  const EnsembleState* state = nullptr;
  /// Increments over [t_{step-1}, t_step]; null at step 0.
  const StepNoise* noise = nullptr;
  const Eigen::ArrayXd* delta = nullptr;
  const Eigen::ArrayXd* n_mart = nullptr;
  const Eigen::ArrayXd* gamma = nullptr;
  const Eigen::ArrayXd* p_mart = nullptr;
  /// Integrands on [t_step, t_{step+1}]; null at the final step.
  const Eigen::ArrayXd* theta_delta = nullptr;
  const Eigen::ArrayXd* theta_gamma = nullptr;
};

class KWObserver {
 public:
  virtual ~KWObserver() = default;
  virtual void begin(const KWHeader&) {}
  virtual void observe(const KWSlice& slice) = 0;
  virtual void end() {}
};

/// Streams the closed-form decomposition of the OU example. The stored
/// integrands are the continuous-time formulas; Delta and Gamma are
/// accumulated with the exact one-step projections of the discretized M and
/// Q on dW1, which keeps discrete N and P orthogonal to W1.
void stream_closed_form(const MarketSpec& spec, const PathSource& source,
                        const std::vector<KWObserver*>& observers, bool parallel = true);

/// Streams the least-squares Monte Carlo decomposition. Makes three passes
/// over the source; observers see only the last one.
void stream_regression(const PathSource& source, const RegressionSetup& setup,
                       const std::vector<KWObserver*>& observers);

KWPaths closed_form_projection(const MarketSpec& spec, const NumeraireSpec& num, const PathBundle& bundle);
KWPaths regression_projection(const PathBundle& bundle, const RegressionBasis& basis);
KWPaths regression_projection(const PathBundle& bundle, const RegressionSetup& setup);

/// Continuous-time integrands of the OU example at (t, z, s0).
struct ClosedFormIntegrands {
  explicit ClosedFormIntegrands(const MarketSpec& spec);

  double theta_delta(double t, double z, double s0) const { return theta_delta_at(std::exp(-spec.r * t), z, s0); }
  double theta_gamma(double t, double s0) const { return theta_gamma_at(std::exp(-2.0 * spec.r * t), s0); }
  /// Same with the discount factor e^{-rt} (resp. e^{-2rt}) supplied.
  double theta_delta_at(double disc, double z, double s0) const;
  double theta_gamma_at(double disc2, double s0) const;
  /// (z + eta/r)/(r + k)
  double psi(double z) const;
  /// E[N(inf)^2 - N(t)^2 | F_t] / s0^2 e^{-2rt}
  double tail_variance() const { return tail_; }
  double n0() const;
  double p0() const;

  MarketSpec spec;
  NumeraireSpec num;

 private:
  double tail_ = 0.0;
  double gamma_scale_ = 0.0;
};

/// Records every slice into a KWPaths; throws AllocationTooLarge past the budget.
class KWRecorder final : public KWObserver {
 public:
  explicit KWRecorder(std::size_t max_bytes) : max_bytes_(max_bytes) {}
  void begin(const KWHeader& header) override;
  void observe(const KWSlice& slice) override;
  KWPaths take() { return std::move(kw_); }

 private:
  std::size_t max_bytes_;
  KWPaths kw_;
};

/// Per-path terminal values.
struct TerminalValues {
  Eigen::ArrayXd f;
  Eigen::ArrayXd delta;
  Eigen::ArrayXd n_mart;
  Eigen::ArrayXd gamma;
  Eigen::ArrayXd p_mart;
  double n0 = 0.0;
  double p0 = 0.0;
  bool antithetic = false;
  std::uint64_t seed = 0;
  Backend backend = Backend::closed_form;
};

class TerminalCollector final : public KWObserver {
 public:
  void begin(const KWHeader& header) override;
  void observe(const KWSlice& slice) override;
  const TerminalValues& values() const { return values_; }

 private:
  Index last_step_ = 0;
  TerminalValues values_;
};

TerminalValues terminal_values(const KWPaths& kw, const PathBundle& bundle);

struct Moments {
  double a1 = 0.0, a2 = 0.0, a3 = 0.0, a4 = 0.0, g = 0.0;
  double n0 = 0.0, p0 = 0.0;
  double se_a1 = 0.0, se_a2 = 0.0, se_a3 = 0.0, se_a4 = 0.0, se_g = 0.0;
  Backend backend = Backend::closed_form;
  std::uint64_t seed = 0;
  Index n_paths = 0;
};

/// Sample means with jackknife standard errors. Antithetic pairs are treated
/// as single observations.
Moments compute_moments(const TerminalValues& terminal);
Moments compute_moments(const KWPaths& kw, const PathBundle& bundle);

/// Mean and standard error of per-path samples; antithetic pairs are averaged first.
struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
};
MeanSE mean_se(const Eigen::ArrayXd& values, bool antithetic);

struct OrthogonalityReport {
  /// Sample mean over paths of sum_i dN_i dW1_i, with standard error.
  MeanSE cov_n;
  MeanSE cov_p;
  /// Largest |mean(dM_i)|/SE over steps, and how many steps exceed 4.
  double martingale_max_z = 0.0;
  Index martingale_exceed = 0;

  double z_n() const { return cov_n.se > 0 ? cov_n.mean / cov_n.se : 0.0; }
  double z_p() const { return cov_p.se > 0 ? cov_p.mean / cov_p.se : 0.0; }
};

class OrthogonalityAccumulator final : public KWObserver {
 public:
  void begin(const KWHeader& header) override;
  void observe(const KWSlice& slice) override;
  OrthogonalityReport report() const;

 private:
  bool antithetic_ = false;
  Eigen::ArrayXd sum_n_, sum_p_, prev_n_, prev_p_, prev_m_;
  double max_z_ = 0.0;
  Index exceed_ = 0;
};

OrthogonalityReport orthogonality_diagnostics(const KWPaths& kw, const PathBundle& bundle);

/// Relative L2 (path x time) distance between an observed theta_delta and the
/// closed-form integrand evaluated on the same states.
class ThetaComparator final : public KWObserver {
 public:
  explicit ThetaComparator(const MarketSpec& spec) : cf_(spec) {}
  void observe(const KWSlice& slice) override;
  double relative_error() const;

 private:
  ClosedFormIntegrands cf_;
  double err2_ = 0.0;
  double ref2_ = 0.0;
};

/// Fans slices out to several observers.
void notify_begin(const std::vector<KWObserver*>& observers, const KWHeader& header);
void notify(const std::vector<KWObserver*>& observers, const KWSlice& slice);
void notify_end(const std::vector<KWObserver*>& observers);

}  // namespace logkw
