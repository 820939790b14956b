#include "logkw/bounds.hpp"

#include <cmath>
#include <sstream>

#include "logkw/error.hpp"

namespace logkw {

using Eigen::ArrayXd;

StoppingConfig StoppingConfig::make(double eps, double eps_l) {
  if (!(eps > 0.0 && eps < eps_l)) {
    std::ostringstream msg;
    msg << "eps = " << eps << " must lie in (0, " << eps_l << ")";
    throw Error(Errc::EpsTooLarge, msg.str());
  }
  StoppingConfig c;
  c.eps = eps;
  c.eps_l = eps_l;
  c.delta_barrier = 1.0 / (6.0 * eps);
  c.gamma_barrier = 1.0 / (6.0 * eps * eps);
  c.n_barrier = 1.0 / (4.0 * eps);
  c.p_barrier = 1.0 / (4.0 * eps * eps);
  return c;
}

double StoppedValues::stop_frac() const {
  return hit.size() ? static_cast<double>(hit.count()) / static_cast<double>(hit.size()) : 0.0;
}

StoppingTracker::StoppingTracker(std::vector<StoppingConfig> configs) {
  stopped_.resize(configs.size());
  for (std::size_t j = 0; j < configs.size(); ++j) stopped_[j].config = configs[j];
}

void StoppingTracker::begin(const KWHeader& header) {
  const Index n = header.n_paths;
  last_step_ = header.grid.n_steps;
  for (auto& s : stopped_) {
    s.tau.setConstant(n, header.grid.n_steps);
    s.hit.setConstant(n, false);
    s.delta.setZero(n);
    s.gamma.setZero(n);
    s.n_mart.setZero(n);
    s.p_mart.setZero(n);
    s.delta_overshoot = 0.0;
    s.max_delta_step = 0.0;
  }
  prev_delta_.setZero(n);
}

void StoppingTracker::observe(const KWSlice& slice) {
  const ArrayXd& d = *slice.delta;
  const ArrayXd& g = *slice.gamma;
  const ArrayXd& nm = *slice.n_mart;
  const ArrayXd& pm = *slice.p_mart;
  const bool last = slice.step == last_step_;
  const double step_max = (d - prev_delta_).abs().maxCoeff();
  prev_delta_ = d;
  for (auto& s : stopped_) {
    const StoppingConfig& c = s.config;
    s.max_delta_step = std::max(s.max_delta_step, step_max);
    for (Index p = 0; p < d.size(); ++p) {
      if (s.hit[p]) continue;
      const bool cross = std::abs(d[p]) >= c.delta_barrier || std::abs(g[p]) >= c.gamma_barrier ||
                         std::abs(nm[p]) >= c.n_barrier || std::abs(pm[p]) >= c.p_barrier;
      if (cross) {
        s.hit[p] = true;
        s.tau[p] = slice.step;
        s.delta_overshoot = std::max(s.delta_overshoot, std::abs(d[p]) - c.delta_barrier);
      }
      if (cross || last) {
        s.delta[p] = d[p];
        s.gamma[p] = g[p];
        s.n_mart[p] = nm[p];
        s.p_mart[p] = pm[p];
      }
    }
  }
}

StoppedValues stopping_times(const KWPaths& kw, const StoppingConfig& config) {
  StoppingTracker tracker({config});
  KWHeader header;
  header.grid.n_steps = kw.delta.cols() - 1;
  header.n_paths = kw.delta.rows();
  tracker.begin(header);
  ArrayXd d, g, nm, pm;
  for (Index i = 0; i < kw.delta.cols(); ++i) {
    d = kw.delta.col(i).array();
    g = kw.gamma.col(i).array();
    nm = kw.n_mart.col(i).array();
    pm = kw.p_mart.col(i).array();
    KWSlice s;
    s.step = i;
    s.delta = &d;
    s.gamma = &g;
    s.n_mart = &nm;
    s.p_mart = &pm;
    tracker.observe(s);
  }
  return tracker.stopped().front();
}

BoundEstimate primal_lower_bound(const TerminalValues& tv, const StoppedValues& st) {
  const double e = st.config.eps;
  const Index n = tv.f.size();
  ArrayXd vals(n);
  Index kept = 0;
  for (Index p = 0; p < n; ++p) {
    const double dl = st.delta[p];
    const double gm = st.gamma[p];
    const double x = e * dl + e * e * gm - e * tv.f[p];
    if (!(1.0 + x > 0.0)) continue;
    vals[kept++] = std::log1p(x) - e * dl - e * e * gm - e * e * e * tv.n_mart[p] * gm;
  }
  BoundEstimate out;
  out.violation_frac = n ? static_cast<double>(n - kept) / static_cast<double>(n) : 0.0;
  if (out.violation_frac > 0.01) {
    std::ostringstream msg;
    msg << "primal candidate fails on " << out.violation_frac << " of paths at eps = " << e;
    throw Error(Errc::TooManyViolations, msg.str());
  }
  const MeanSE m = mean_se(vals.head(kept), false);
  out.value = m.mean;
  out.se = m.se;
  return out;
}

BoundEstimate dual_upper_bound(const TerminalValues& tv, const StoppedValues& st) {
  const double e = st.config.eps;
  const double e2 = e * e;
  const Index n = tv.f.size();
  ArrayXd vals(n);
  BoundEstimate out;
  for (Index p = 0; p < n; ++p) {
    const double nm = st.n_mart[p];
    const double pm = st.p_mart[p];
    const double y = e * nm + e2 * pm;
    out.min_density = std::min(out.min_density, 1.0 + y);
    if (!(1.0 + y > 0.0)) {
      std::ostringstream msg;
      msg << "dual density 1 + eps N + eps^2 P = " << 1.0 + y << " on path " << p;
      throw Error(Errc::NonPositiveDensity, msg.str());
    }
    vals[p] = -e * tv.f[p] - e2 * nm * nm - e2 * e * pm * nm + (y - std::log1p(y)) + e2 * e2 * pm * st.gamma[p];
  }
  const MeanSE m = mean_se(vals, false);
  out.value = m.mean;
  out.se = m.se;
  return out;
}

BoundEstimate primal_lower_bound(const PathBundle& bundle, const KWPaths& kw, double eps, double eps_l) {
  return primal_lower_bound(terminal_values(kw, bundle), stopping_times(kw, StoppingConfig::make(eps, eps_l)));
}

BoundEstimate dual_upper_bound(const PathBundle& bundle, const KWPaths& kw, double eps, double eps_l) {
  return dual_upper_bound(terminal_values(kw, bundle), stopping_times(kw, StoppingConfig::make(eps, eps_l)));
}

double BoundsRow::gap_ratio() const { return (u_up - u_low) / std::pow(eps, 4); }

BoundsReport bounds_report(const Moments& moments, const TerminalValues& terminal,
                           const std::vector<StoppedValues>& stopped) {
  const Quartic<double> u_hat = value_polynomial(moments);
  BoundsReport report;
  for (const auto& st : stopped) {
    BoundsRow row;
    row.eps = st.config.eps;
    const BoundEstimate lo = primal_lower_bound(terminal, st);
    const BoundEstimate up = dual_upper_bound(terminal, st);
    const double e4 = std::pow(row.eps, 4);
    row.u_low = lo.value;
    row.se_low = lo.se;
    row.u_up = up.value;
    row.se_up = up.se;
    row.u_hat = u_hat(row.eps);
    row.ratio_low = (row.u_hat - row.u_low) / e4;
    row.ratio_up = (row.u_up - row.u_hat) / e4;
    row.stop_frac = st.stop_frac();
    row.primal_violation_frac = lo.violation_frac;
    row.min_density = up.min_density;
    report.rows.push_back(row);
  }
  return report;
}

namespace {

bool decays(std::vector<double> values, const char* name, std::vector<std::string>& notes) {
  for (double& v : values) v = std::abs(v) <= 1e-13 ? 0.0 : std::abs(v);
  bool ok = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const bool both_zero = values[i] == 0.0 && values[i - 1] == 0.0;
    if (!(values[i] < values[i - 1] || both_zero)) {
      ok = false;
      std::ostringstream msg;
      msg << name << " does not decrease between rows " << i - 1 << " and " << i;
      notes.push_back(msg.str());
    }
  }
  if (!(values.back() <= 0.5 * values.front())) {
    ok = false;
    notes.push_back(std::string(name) + " at the smallest eps is above half its largest-eps value");
  }
  return ok;
}

}  // namespace

ResidualVerdict residual_analysis(const BoundsReport& report) {
  const auto& rows = report.rows;
  if (rows.size() < 3) throw Error(Errc::GridTooSmall, "residual analysis needs at least 3 eps values");
  ResidualVerdict v;
  bool descending = true;
  for (std::size_t i = 1; i < rows.size(); ++i) descending = descending && rows[i].eps < rows[i - 1].eps;
  if (!descending) v.notes.push_back("eps grid is not strictly descending");

  v.sandwich = true;
  std::vector<double> low, up, gap;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const BoundsRow& r = rows[i];
    const double joint = std::hypot(r.se_low, r.se_up);
    if (r.u_low - r.u_up > 4.0 * joint) {
      v.sandwich = false;
      std::ostringstream msg;
      msg << "u_low exceeds u_up by more than 4 joint SE at eps = " << r.eps;
      v.notes.push_back(msg.str());
    }
    low.push_back(r.ratio_low);
    up.push_back(r.ratio_up);
    gap.push_back(r.gap_ratio());
  }
  v.low_decreasing = decays(low, "ratio_low", v.notes);
  v.up_decreasing = decays(up, "ratio_up", v.notes);
  v.gap_decreasing = decays(gap, "gap ratio", v.notes);
  v.pass = descending && v.sandwich && v.low_decreasing && v.up_decreasing && v.gap_decreasing;
  return v;
}

void write_bounds_csv(std::ostream& out, const BoundsReport& report) {
  out.precision(17);
  out << "eps,u_low,se_low,u_up,se_up,u_hat,ratio_low,ratio_up,stop_frac,primal_violation_frac\n";
  for (const auto& r : report.rows) {
    out << r.eps << ',' << r.u_low << ',' << r.se_low << ',' << r.u_up << ',' << r.se_up << ',' << r.u_hat << ','
        << r.ratio_low << ',' << r.ratio_up << ',' << r.stop_frac << ',' << r.primal_violation_frac << '\n';
  }
}

}  // namespace logkw
