#pragma once

#include <optional>
#include <string>
#include <vector>

#include "logkw/bounds.hpp"
#include "logkw/config.hpp"
#include "logkw/expansion.hpp"
#include "logkw/kw.hpp"
#include "logkw/paths.hpp"

namespace logkw {

/// Validated market plus its truncated time grid.
struct Setup {
  ValidatedSpec validated;
  HorizonTruncation horizon;
  TimeGrid grid;
};

Setup prepare(const RunConfig& cfg);

SimulatedSource make_source(const RunConfig& cfg, const Setup& setup, bool antithetic);

struct ProjectionRun {
  Moments moments;
  TerminalValues terminal;
  OrthogonalityReport orthogonality;
  /// Relative L2 distance of theta_delta to the closed form (regression only).
  std::optional<double> theta_error;
};

/// Runs one backend over the source with the extra observers attached.
/// terminal_f, when given, is F(T) of the same source.
ProjectionRun run_projection(const RunConfig& cfg, const MarketSpec& spec, const PathSource& source,
                             Backend backend, const std::vector<KWObserver*>& extra = {},
                             const Eigen::ArrayXd* terminal_f = nullptr);

struct MomentAgreement {
  /// |a - b| / sqrt(se_a^2 + se_b^2) for a1, a2, a3, a4, g.
  std::array<double, 5> z{};
  bool pass = false;
};

MomentAgreement compare_moments(const Moments& a, const Moments& b);

struct VerifyRun {
  Setup setup;
  ProjectionRun closed_form;
  double eps_l = 1.0;
  std::vector<StoppedValues> stopped;
  BoundsReport bounds;
  ResidualVerdict verdict;
  ExpansionReport expansion;
  std::optional<ProjectionRun> regression;
  std::optional<MomentAgreement> agreement;
};

/// Closed-form projection, stopping, bounds and residual analysis on one
/// plain (non-antithetic) ensemble; optionally the regression backend on the
/// same paths.
VerifyRun run_verify(const RunConfig& cfg, bool cross_backend);

}  // namespace logkw
