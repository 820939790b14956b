#include "logkw/pipeline.hpp"

#include <cmath>
#include <limits>

#include "logkw/error.hpp"

namespace logkw {

Setup prepare(const RunConfig& cfg) {
  validate_numerics(cfg.numerics);
  Setup s;
  s.validated = validate_spec(cfg.market);
  s.horizon = horizon_truncation(cfg.market, cfg.numerics.horizon_tol, cfg.numerics.dt);
  s.grid.dt = cfg.numerics.dt;
  s.grid.n_steps = s.horizon.n_steps;
  return s;
}

SimulatedSource make_source(const RunConfig& cfg, const Setup& setup, bool antithetic) {
  SimulationOptions opt;
  opt.antithetic = antithetic;
  opt.parallel = cfg.numerics.parallel;
  return SimulatedSource(setup.validated.spec, setup.grid, cfg.numerics.n_paths, cfg.numerics.seed, opt);
}

ProjectionRun run_projection(const RunConfig& cfg, const MarketSpec& spec, const PathSource& source,
                             Backend backend, const std::vector<KWObserver*>& extra,
                             const Eigen::ArrayXd* terminal_f) {
  TerminalCollector terminal;
  OrthogonalityAccumulator orth;
  std::optional<ThetaComparator> theta;
  std::vector<KWObserver*> observers{&terminal, &orth};
  observers.insert(observers.end(), extra.begin(), extra.end());
  if (backend == Backend::closed_form) {
    stream_closed_form(spec, source, observers, cfg.numerics.parallel);
  } else {
    theta.emplace(spec);
    observers.push_back(&*theta);
    RegressionSetup reg{default_delta_basis(spec.r), default_gamma_basis(spec.r), cfg.numerics.parallel,
                        terminal_f};
    reg.delta_basis.ridge = cfg.ridge;
    reg.gamma_basis.ridge = cfg.ridge;
    stream_regression(source, reg, observers);
  }
  ProjectionRun run;
  run.terminal = terminal.values();
  run.moments = compute_moments(run.terminal);
  run.orthogonality = orth.report();
  if (theta) run.theta_error = theta->relative_error();
  return run;
}

MomentAgreement compare_moments(const Moments& a, const Moments& b) {
  const std::array<std::array<double, 4>, 5> f{{{a.a1, a.se_a1, b.a1, b.se_a1},
                                                {a.a2, a.se_a2, b.a2, b.se_a2},
                                                {a.a3, a.se_a3, b.a3, b.se_a3},
                                                {a.a4, a.se_a4, b.a4, b.se_a4},
                                                {a.g, a.se_g, b.g, b.se_g}}};
  MomentAgreement out;
  out.pass = true;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double diff = std::abs(f[i][0] - f[i][2]);
    const double se = std::hypot(f[i][1], f[i][3]);
    out.z[i] = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    out.pass = out.pass && out.z[i] <= 4.0;
  }
  return out;
}

VerifyRun run_verify(const RunConfig& cfg, bool cross_backend) {
  VerifyRun v;
  v.setup = prepare(cfg);
  const MarketSpec& spec = v.setup.validated.spec;
  const SimulatedSource source = make_source(cfg, v.setup, false);

  // eps_L needs A1 and P0 before the sweep; both are known in closed form.
  const ClosedFormIntegrands cf(spec);
  Moments prior;
  prior.a1 = cf.n0();
  prior.p0 = cf.p0();
  v.eps_l = eps_threshold(prior);
  std::vector<StoppingConfig> configs;
  for (double e : cfg.eps_grid) configs.push_back(StoppingConfig::make(e, v.eps_l));

  StoppingTracker tracker(configs);
  v.closed_form = run_projection(cfg, spec, source, Backend::closed_form, {&tracker});
  v.stopped = tracker.stopped();
  v.bounds = bounds_report(v.closed_form.moments, v.closed_form.terminal, v.stopped);
  v.verdict = residual_analysis(v.bounds);

  Eigen::ArrayXd eps(static_cast<Index>(cfg.eps_grid.size()));
  Eigen::ArrayXd u_mid(eps.size());
  for (Index i = 0; i < eps.size(); ++i) {
    eps[i] = cfg.eps_grid[static_cast<std::size_t>(i)];
    const BoundsRow& r = v.bounds.rows[static_cast<std::size_t>(i)];
    u_mid[i] = 0.5 * (r.u_low + r.u_up);
  }
  v.expansion = expansion_report(v.closed_form.moments, v.closed_form.terminal, eps, u_mid);

  if (cross_backend) {
    v.regression = run_projection(cfg, spec, source, Backend::regression, {}, &v.closed_form.terminal.f);
    v.agreement = compare_moments(v.closed_form.moments, v.regression->moments);
  }
  return v;
}

}  // namespace logkw
