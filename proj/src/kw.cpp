#include "logkw/kw.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "logkw/error.hpp"
#include "logkw/parallel.hpp"

namespace logkw {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view backend_name(Backend backend) noexcept {
  return backend == Backend::closed_form ? "closed_form" : "regression";
}

RegressionBasis default_delta_basis(double r) {
  RegressionBasis basis;
  basis.features = {
      [r](double t, const ArrayXd&, const ArrayXd& s0) -> ArrayXd { return std::exp(-r * t) * s0; },
      [r](double t, const ArrayXd& z, const ArrayXd& s0) -> ArrayXd { return std::exp(-r * t) * s0 * z; },
  };
  return basis;
}

RegressionBasis default_gamma_basis(double r) {
  RegressionBasis basis;
  basis.features = {
      [r](double t, const ArrayXd&, const ArrayXd& s0) -> ArrayXd { return std::exp(-2.0 * r * t) * s0.square(); },
  };
  return basis;
}

void notify_begin(const std::vector<KWObserver*>& observers, const KWHeader& header) {
  for (auto* o : observers) o->begin(header);
}

void notify(const std::vector<KWObserver*>& observers, const KWSlice& slice) {
  for (auto* o : observers) o->observe(slice);
}

void notify_end(const std::vector<KWObserver*>& observers) {
  for (auto* o : observers) o->end();
}

// ---------------------------------------------------------------------------
// closed form

ClosedFormIntegrands::ClosedFormIntegrands(const MarketSpec& s) : spec(s), num(derive_numeraire(s)) {
  const double nu2 = 2.0 * spec.r - num.mpr * num.mpr;
  if (!(nu2 > 0.0)) {
    throw Error(Errc::IntegrabilityViolation, "closed form needs 2r > (pi_star sigma)^2");
  }
  const double rk = spec.r + spec.k;
  const double base = spec.b * spec.b / (rk * rk * nu2);
  const double one_m_rho2 = 1.0 - spec.rho * spec.rho;
  tail_ = one_m_rho2 * base;
  gamma_scale_ = one_m_rho2 * (-2.0 * num.mpr * base);
}

double ClosedFormIntegrands::psi(double z) const {
  return (z + num.eta / spec.r) / (spec.r + spec.k);
}

double ClosedFormIntegrands::theta_delta_at(double disc, double z, double s0) const {
  const double mpr = num.mpr;
  const double level = spec.b * spec.rho - mpr * num.eta / spec.r;
  return disc * s0 * (level - mpr * z) / (spec.r + spec.k);
}

double ClosedFormIntegrands::theta_gamma_at(double disc2, double s0) const {
  return gamma_scale_ * (disc2 * s0 * s0);
}

double ClosedFormIntegrands::n0() const { return psi(spec.z0); }

double ClosedFormIntegrands::p0() const {
  const double n = n0();
  return n * n + tail_;
}

namespace {

/// E[R^m X], E[R^m X^2], ... for X ~ N(0,1), Y = rho X + sqrt(1-rho^2) X',
/// R = exp(-c X - c^2/2).
struct ShiftMoments {
  double x, xx, xy, xxy, xyy;

  ShiftMoments(int m, double c, double rho) {
    const double s = -m * c;
    const double scale = std::exp(0.5 * m * (m - 1) * c * c);
    x = scale * s;
    xx = scale * (1.0 + s * s);
    xy = scale * rho * (1.0 + s * s);
    xxy = scale * rho * (3.0 * s + s * s * s);
    xyy = scale * (rho * rho * (3.0 * s + s * s * s) + (1.0 - rho * rho) * s);
  }
};

struct Levels {
  ArrayXd delta, n_mart, gamma, p_mart;

  void resize(Index n) {
    delta.resize(n);
    n_mart.resize(n);
    gamma.resize(n);
    p_mart.resize(n);
  }
};

KWSlice make_slice(const EnsembleState& state, const StepNoise* noise, const Levels& lv, const ArrayXd* td,
                   const ArrayXd* tg) {
  KWSlice s;
  s.step = state.step;
  s.t = state.t;
  s.state = &state;
  s.noise = noise;
  s.delta = &lv.delta;
  s.n_mart = &lv.n_mart;
  s.gamma = &lv.gamma;
  s.p_mart = &lv.p_mart;
  s.theta_delta = td;
  s.theta_gamma = tg;
  return s;
}

}  // namespace

void stream_closed_form(const MarketSpec& spec, const PathSource& source,
                        const std::vector<KWObserver*>& observers, bool parallel) {
  const ClosedFormIntegrands cf(spec);
  const NumeraireSpec& num = cf.num;
  const TimeGrid& grid = source.grid();
  const Index n = source.n_paths();
  const double h = grid.dt;
  const double sqrt_h = std::sqrt(h);
  const double rho = spec.rho;
  const bool complete = (1.0 - rho * rho) == 0.0;
  const double rk = spec.r + spec.k;
  const double eta_term = num.eta / spec.r / rk;
  const double decay = std::exp(-spec.k * h);
  const double ou_sd = spec.b * std::sqrt(-std::expm1(-2.0 * spec.k * h) / (2.0 * spec.k));
  const double tail = cf.tail_variance();
  const ShiftMoments m1(1, num.mpr * sqrt_h, rho);
  const ShiftMoments m2(2, num.mpr * sqrt_h, rho);

  KWHeader header{grid, n, source.seed(), source.antithetic(), Backend::closed_form, cf.n0(), cf.p0()};
  notify_begin(observers, header);

  EnsembleState cur, next;
  StepNoise noise_prev, noise_next;
  source.initial(cur);

  Levels lv;
  lv.resize(n);
  lv.delta.setZero();
  lv.gamma.setZero();
  // M(0) = s0 psi(z0) and Q(0) = N(0)^2 + tail s0^2; kept path-wise so that
  // the discrete identities hold exactly.
  lv.n_mart = cur.s0 * (cur.z + num.eta / spec.r) / rk;
  lv.p_mart = lv.n_mart.square() + tail * cur.s0.square();

  ArrayXd td(n), tg(n), td_h(n), tg_h(n);
  for (Index i = 0; i < grid.n_steps; ++i) {
    const double t = cur.t;
    const double t1 = grid.time(i + 1);
    const bool terminal = i + 1 == grid.n_steps;
    const double disc = std::exp(-spec.r * t);
    const double disc2 = std::exp(-2.0 * spec.r * t);
    const double disc1 = std::exp(-spec.r * t1);
    const double w = 0.5 * h + (terminal ? 0.0 : 1.0 / rk);
    const double level_shift = terminal ? 0.0 : eta_term;
    const double tail1 = terminal ? 0.0 : tail * std::exp(-2.0 * spec.r * t1);

    for_each_chunk(n, parallel, [&](Index, Index begin, Index end) {
      for (Index p = begin; p < end; ++p) {
        const double z = cur.z[p];
        const double s0 = cur.s0[p];
        td[p] = cf.theta_delta_at(disc, z, s0);
        tg[p] = cf.theta_gamma_at(disc2, s0);

        // dM = c0 + R (alpha + beta Y) with X = dW1/sqrt(h), R = s0(t+h)/s0(t)
        // and c0 known at t.
        const double dn = disc1 * s0;
        const double mu_z = spec.theta + (z - spec.theta) * decay;
        const double alpha = dn * (w * mu_z + level_shift);
        const double beta = dn * ou_sd * w;
        const double ex = alpha * m1.x + beta * m1.xy;
        td_h[p] = ex / sqrt_h;
        if (complete) {
          tg_h[p] = 0.0;
          continue;
        }
        // E[(dM - ex X)^2 X]; the c0 terms cancel.
        const double en2x = alpha * alpha * m2.x + 2.0 * alpha * beta * m2.xy + beta * beta * m2.xyy -
                            2.0 * ex * (alpha * m1.xx + beta * m1.xxy);
        const double ekx = tail1 * s0 * s0 * m2.x;
        tg_h[p] = (en2x + ekx) / sqrt_h;
      }
    });

    notify(observers, make_slice(cur, i == 0 ? nullptr : &noise_prev, lv, &td, &tg));

    source.advance(cur, noise_next, next);

    for_each_chunk(n, parallel, [&](Index, Index begin, Index end) {
      for (Index p = begin; p < end; ++p) {
        const double dw = noise_next.dw1[p];
        lv.delta[p] += td_h[p] * dw;
        lv.gamma[p] += tg_h[p] * dw;
        const double m = terminal ? next.f[p] : next.f[p] + disc1 * next.s0[p] * cf.psi(next.z[p]);
        const double nm = m - lv.delta[p];
        lv.n_mart[p] = nm;
        lv.p_mart[p] = nm * nm + tail1 * next.s0[p] * next.s0[p] - lv.gamma[p];
      }
    });
    std::swap(cur, next);
    std::swap(noise_prev, noise_next);
  }
  notify(observers, make_slice(cur, grid.n_steps > 0 ? &noise_prev : nullptr, lv, nullptr, nullptr));
  notify_end(observers);
}

// ---------------------------------------------------------------------------
// regression

namespace {

inline int half_of(Index p) { return static_cast<int>((p / 2) % 2); }

struct HalfFit {
  std::array<VectorXd, 2> coef;
};

VectorXd solve_normal(const MatrixXd& gram, const VectorXd& rhs, double ridge) {
  const Index k = gram.rows();
  const double trace = gram.trace();
  if (ridge == 0.0) {
    bool singular = !(trace > 0.0);
    if (!singular) {
      const VectorXd d = gram.diagonal();
      singular = (d.array() <= 0.0).any();
      if (!singular) {
        const VectorXd inv = d.array().rsqrt();
        const MatrixXd normalized = inv.asDiagonal() * gram * inv.asDiagonal();
        Eigen::SelfAdjointEigenSolver<MatrixXd> eig(normalized, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        singular = !(lo > 1e-12 * hi);
      }
    }
    if (singular) throw Error(Errc::SingularDesignMatrix, "regression design is rank deficient");
    return gram.ldlt().solve(rhs);
  }
  if (!(trace > 0.0)) return VectorXd::Zero(k);
  MatrixXd reg = gram;
  reg.diagonal().array() += ridge * trace / static_cast<double>(k);
  return reg.ldlt().solve(rhs);
}

/// Fits y ~ X (each row optionally scaled by `scale`) separately on both halves.
HalfFit fit_by_half(const MatrixXd& x, const ArrayXd* scale, const ArrayXd& y, double ridge, bool parallel) {
  const Index n = x.rows();
  const Index k = x.cols();
  const Index chunks = chunk_count(n);
  // Per chunk and half: lower triangle of X'X followed by X'y.
  const Index width = k * k + k;
  std::vector<double> partial(static_cast<std::size_t>(chunks * 2 * width), 0.0);
  for_each_chunk(n, parallel, [&](Index c, Index begin, Index end) {
    double* acc = partial.data() + c * 2 * width;
    std::vector<double> row(static_cast<std::size_t>(k));
    for (Index p = begin; p < end; ++p) {
      const double sc = scale ? (*scale)[p] : 1.0;
      for (Index j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = x(p, j) * sc;
      double* g = acc + half_of(p) * width;
      double* b = g + k * k;
      const double yp = y[p];
      for (Index a = 0; a < k; ++a) {
        const double ra = row[static_cast<std::size_t>(a)];
        for (Index j = 0; j <= a; ++j) g[a * k + j] += ra * row[static_cast<std::size_t>(j)];
        b[a] += ra * yp;
      }
    }
  });
  HalfFit fit;
  for (int h = 0; h < 2; ++h) {
    MatrixXd gram = MatrixXd::Zero(k, k);
    VectorXd b = VectorXd::Zero(k);
    for (Index c = 0; c < chunks; ++c) {
      const double* g = partial.data() + (c * 2 + h) * width;
      for (Index a = 0; a < k; ++a) {
        for (Index j = 0; j <= a; ++j) gram(a, j) += g[a * k + j];
        b[a] += g[k * k + a];
      }
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    fit.coef[h] = solve_normal(gram, b, ridge);
  }
  return fit;
}

/// Fitted value for path p uses the coefficients from the other half.
void apply_cross(const MatrixXd& x, const HalfFit& fit, ArrayXd& out, bool) {
  const VectorXd from0 = x * fit.coef[0];
  const VectorXd from1 = x * fit.coef[1];
  out.resize(x.rows());
  for (Index p = 0; p < x.rows(); ++p) out[p] = half_of(p) == 0 ? from1[p] : from0[p];
}

double deterministic_mean(const ArrayXd& v, bool parallel) {
  const Index chunks = chunk_count(v.size());
  std::vector<CompensatedSum> parts(chunks);
  for_each_chunk(v.size(), parallel, [&](Index c, Index begin, Index end) {
    for (Index p = begin; p < end; ++p) parts[c].add(v[p]);
  });
  CompensatedSum total;
  for (const auto& s : parts) total.add(s);
  return v.size() ? total.value() / static_cast<double>(v.size()) : 0.0;
}

void eval_features(const RegressionBasis& basis, const EnsembleState& state, MatrixXd& out) {
  const Index n = state.z.size();
  const Index k = static_cast<Index>(basis.features.size());
  out.resize(n, k);
  for (Index j = 0; j < k; ++j) {
    const ArrayXd col = basis.features[static_cast<std::size_t>(j)](state.t, state.z, state.s0);
    if (col.size() != n) throw Error(Errc::ShapeMismatch, "basis feature returned the wrong length");
    if (!col.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite basis feature " << j << " at t = " << state.t;
      throw Error(Errc::BasisRangeOverflow, msg.str());
    }
    out.col(j) = col.matrix();
  }
}

/// One conditional-expectation ladder: level_i = anchor_i + fitted tail,
/// integrand_i from the increment-on-increment regression. Stage-1 and
/// stage-2 coefficients are stored on the first run and replayed afterwards.
class Ladder {
 public:
  Ladder(const RegressionBasis& basis, Index n_steps, bool parallel)
      : basis_(basis), parallel_(parallel), stage1_(static_cast<std::size_t>(n_steps + 1)),
        stage2_(static_cast<std::size_t>(n_steps)) {}

  bool fitted() const { return fitted_; }
  void mark_fitted() { fitted_ = true; }

  /// Level at a grid time. `anchor` is the known part, `target` the terminal
  /// quantity (only read while fitting).
  void level(const EnsembleState& state, const ArrayXd& anchor, const ArrayXd& target, bool terminal,
             ArrayXd& out) {
    const auto i = static_cast<std::size_t>(state.step);
    if (terminal) {
      out = target;
      return;
    }
    if (state.step == 0) {
      if (!fitted_) initial_ = deterministic_mean(target - anchor, parallel_);
      out = anchor + initial_;
      return;
    }
    eval_features(basis_, state, features_);
    features_step_ = state.step;
    if (!fitted_) {
      const ArrayXd y = target - anchor;
      stage1_[i] = fit_by_half(features_, nullptr, y, basis_.ridge, parallel_);
    }
    apply_cross(features_, stage1_[i], out, parallel_);
    out += anchor;
  }

  /// Integrand on [t_i, t_{i+1}] from the levels at both ends.
  void integrand(const EnsembleState& state_i, const MatrixXd& features_i, const ArrayXd& dw1,
                 const ArrayXd& level_i, const ArrayXd& level_next, ArrayXd& out) {
    const auto i = static_cast<std::size_t>(state_i.step);
    if (!fitted_) {
      const ArrayXd dm = level_next - level_i;
      stage2_[i] = fit_by_half(features_i, &dw1, dm, basis_.ridge, parallel_);
    }
    apply_cross(features_i, stage2_[i], out, parallel_);
  }

  /// Features for the stage-2 regression at a grid time; constant states use
  /// a single unit column.
  void stage2_features(const EnsembleState& state, MatrixXd& out) const {
    if (state.step == 0) {
      out = MatrixXd::Ones(state.z.size(), 1);
    } else if (features_step_ == state.step) {
      out = features_;
    } else {
      eval_features(basis_, state, out);
    }
  }

 private:
  const RegressionBasis& basis_;
  bool parallel_;
  bool fitted_ = false;
  double initial_ = 0.0;
  MatrixXd features_;
  Index features_step_ = -1;
  std::vector<HalfFit> stage1_;
  std::vector<HalfFit> stage2_;
};

void check_basis(const RegressionBasis& basis) {
  if (basis.features.empty()) throw Error(Errc::SingularDesignMatrix, "regression basis has no features");
  if (!(basis.ridge >= 0.0)) throw Error(Errc::SingularDesignMatrix, "ridge must be >= 0");
}

}  // namespace

void stream_regression(const PathSource& source, const RegressionSetup& setup,
                       const std::vector<KWObserver*>& observers) {
  check_basis(setup.delta_basis);
  check_basis(setup.gamma_basis);
  const TimeGrid& grid = source.grid();
  const Index n = source.n_paths();
  const Index steps = grid.n_steps;
  const bool parallel = setup.parallel;

  EnsembleState cur, next;
  StepNoise noise_prev, noise_next;

  // Pass A: terminal endowment, unless supplied.
  ArrayXd f_terminal;
  if (setup.terminal_f) {
    if (setup.terminal_f->size() != n) throw Error(Errc::ShapeMismatch, "terminal F has the wrong length");
    f_terminal = *setup.terminal_f;
  } else {
    source.initial(cur);
    for (Index i = 0; i < steps; ++i) {
      source.advance(cur, noise_next, next);
      std::swap(cur, next);
    }
    f_terminal = cur.f;
  }

  Ladder delta_ladder(setup.delta_basis, steps, parallel);
  Ladder gamma_ladder(setup.gamma_basis, steps, parallel);

  ArrayXd n_terminal_sq;
  for (int pass = 0; pass < 2; ++pass) {
    const bool emit = pass == 1;
    source.initial(cur);
    ArrayXd m_cur, m_next, theta_d(n), delta = ArrayXd::Zero(n);
    ArrayXd q_cur, q_next, theta_g(n), gamma = ArrayXd::Zero(n);
    ArrayXd nm_cur, nm_next;
    MatrixXd phi_d, phi_g;
    Levels lv;
    delta_ladder.level(cur, cur.f, f_terminal, steps == 0, m_cur);
    nm_cur = m_cur;
    if (emit) {
      gamma_ladder.level(cur, nm_cur.square(), n_terminal_sq, steps == 0, q_cur);
      lv.resize(n);
      lv.delta = delta;
      lv.gamma = gamma;
      lv.n_mart = nm_cur;
      lv.p_mart = q_cur;
      KWHeader header{grid, n, source.seed(), source.antithetic(), Backend::regression, nm_cur[0], q_cur[0]};
      notify_begin(observers, header);
    }

    for (Index i = 0; i < steps; ++i) {
      const bool terminal = i + 1 == steps;
      delta_ladder.stage2_features(cur, phi_d);
      if (emit) gamma_ladder.stage2_features(cur, phi_g);

      source.advance(cur, noise_next, next);
      delta_ladder.level(next, next.f, f_terminal, terminal, m_next);
      delta_ladder.integrand(cur, phi_d, noise_next.dw1, m_cur, m_next, theta_d);
      nm_next = m_next - (delta + theta_d * noise_next.dw1);

      if (emit) {
        const ArrayXd nsq_next = nm_next.square();
        gamma_ladder.level(next, nsq_next, n_terminal_sq, terminal, q_next);
        gamma_ladder.integrand(cur, phi_g, noise_next.dw1, q_cur, q_next, theta_g);
        notify(observers, make_slice(cur, i == 0 ? nullptr : &noise_prev, lv, &theta_d, &theta_g));
        gamma += theta_g * noise_next.dw1;
        lv.gamma = gamma;
        lv.p_mart = q_next - gamma;
        std::swap(q_cur, q_next);
      }
      delta += theta_d * noise_next.dw1;
      if (emit) {
        lv.delta = delta;
        lv.n_mart = nm_next;
      }
      std::swap(m_cur, m_next);
      std::swap(nm_cur, nm_next);
      std::swap(cur, next);
      std::swap(noise_prev, noise_next);
    }
    if (pass == 0) {
      delta_ladder.mark_fitted();
      n_terminal_sq = nm_cur.square();
    } else {
      gamma_ladder.mark_fitted();
      notify(observers, make_slice(cur, steps > 0 ? &noise_prev : nullptr, lv, nullptr, nullptr));
      notify_end(observers);
    }
  }
}

// ---------------------------------------------------------------------------
// materialized projections

KWPaths closed_form_projection(const MarketSpec& spec, const NumeraireSpec&, const PathBundle& bundle) {
  BundleSource source(bundle);
  KWRecorder recorder(std::numeric_limits<std::size_t>::max());
  stream_closed_form(spec, source, {&recorder});
  return recorder.take();
}

KWPaths regression_projection(const PathBundle& bundle, const RegressionSetup& setup) {
  BundleSource source(bundle);
  KWRecorder recorder(std::numeric_limits<std::size_t>::max());
  stream_regression(source, setup, {&recorder});
  return recorder.take();
}

KWPaths regression_projection(const PathBundle& bundle, const RegressionBasis& basis) {
  RegressionSetup setup{basis, default_gamma_basis(bundle.r), true, nullptr};
  return regression_projection(bundle, setup);
}

void KWRecorder::begin(const KWHeader& header) {
  const auto n = static_cast<std::size_t>(header.n_paths);
  const auto m = static_cast<std::size_t>(header.grid.n_steps);
  const std::size_t bytes = sizeof(double) * n * (4 * (m + 1) + 2 * m);
  if (bytes > max_bytes_) {
    std::ostringstream msg;
    msg << "KW path arrays need " << bytes << " bytes, budget is " << max_bytes_;
    throw Error(Errc::AllocationTooLarge, msg.str());
  }
  const Index cols = header.grid.n_steps + 1;
  kw_.delta.resize(header.n_paths, cols);
  kw_.n_mart.resize(header.n_paths, cols);
  kw_.gamma.resize(header.n_paths, cols);
  kw_.p_mart.resize(header.n_paths, cols);
  kw_.theta_delta.resize(header.n_paths, header.grid.n_steps);
  kw_.theta_gamma.resize(header.n_paths, header.grid.n_steps);
  kw_.n0 = header.n0;
  kw_.p0 = header.p0;
  kw_.backend = header.backend;
}

void KWRecorder::observe(const KWSlice& s) {
  kw_.delta.col(s.step) = s.delta->matrix();
  kw_.n_mart.col(s.step) = s.n_mart->matrix();
  kw_.gamma.col(s.step) = s.gamma->matrix();
  kw_.p_mart.col(s.step) = s.p_mart->matrix();
  if (s.theta_delta) kw_.theta_delta.col(s.step) = s.theta_delta->matrix();
  if (s.theta_gamma) kw_.theta_gamma.col(s.step) = s.theta_gamma->matrix();
}

// ---------------------------------------------------------------------------
// terminal values and moments

void TerminalCollector::begin(const KWHeader& header) {
  last_step_ = header.grid.n_steps;
  values_ = TerminalValues{};
  values_.n0 = header.n0;
  values_.p0 = header.p0;
  values_.antithetic = header.antithetic;
  values_.seed = header.seed;
  values_.backend = header.backend;
}

void TerminalCollector::observe(const KWSlice& s) {
  if (s.step != last_step_) return;
  values_.f = s.state->f;
  values_.delta = *s.delta;
  values_.n_mart = *s.n_mart;
  values_.gamma = *s.gamma;
  values_.p_mart = *s.p_mart;
}

TerminalValues terminal_values(const KWPaths& kw, const PathBundle& bundle) {
  if (kw.delta.rows() != bundle.n_paths() || kw.delta.cols() != bundle.f.cols()) {
    throw Error(Errc::ShapeMismatch, "KW paths and bundle disagree in shape");
  }
  const Index last = kw.delta.cols() - 1;
  TerminalValues v;
  v.f = bundle.f.col(last).array();
  v.delta = kw.delta.col(last).array();
  v.n_mart = kw.n_mart.col(last).array();
  v.gamma = kw.gamma.col(last).array();
  v.p_mart = kw.p_mart.col(last).array();
  v.n0 = kw.n0;
  v.p0 = kw.p0;
  v.antithetic = bundle.antithetic;
  v.seed = bundle.seed;
  v.backend = kw.backend;
  return v;
}

MeanSE mean_se(const ArrayXd& values, bool antithetic) {
  ArrayXd obs;
  if (antithetic && values.size() % 2 == 0) {
    const Index half = values.size() / 2;
    obs.resize(half);
    for (Index j = 0; j < half; ++j) obs[j] = 0.5 * (values[2 * j] + values[2 * j + 1]);
  } else {
    obs = values;
  }
  const Index n = obs.size();
  MeanSE out;
  if (n == 0) return out;
  CompensatedSum sum;
  for (Index j = 0; j < n; ++j) sum.add(obs[j]);
  out.mean = sum.value() / static_cast<double>(n);
  if (n < 2) return out;
  CompensatedSum ss;
  for (Index j = 0; j < n; ++j) {
    const double d = obs[j] - out.mean;
    ss.add(d * d);
  }
  // The delete-one jackknife variance of a sample mean reduces to s^2 / n.
  out.se = std::sqrt(ss.value() / static_cast<double>(n - 1) / static_cast<double>(n));
  return out;
}

Moments compute_moments(const TerminalValues& tv) {
  const bool anti = tv.antithetic;
  const ArrayXd n2 = tv.n_mart.square();
  const MeanSE a1 = mean_se(tv.f, anti);
  const MeanSE a2 = mean_se(n2, anti);
  const MeanSE a3 = mean_se(n2 * tv.n_mart, anti);
  const MeanSE a4 = mean_se(n2.square(), anti);
  const MeanSE g = mean_se(0.5 * tv.gamma.square() - n2 * tv.gamma, anti);
  Moments m;
  m.a1 = a1.mean;
  m.a2 = a2.mean;
  m.a3 = a3.mean;
  m.a4 = a4.mean;
  m.g = g.mean;
  m.se_a1 = a1.se;
  m.se_a2 = a2.se;
  m.se_a3 = a3.se;
  m.se_a4 = a4.se;
  m.se_g = g.se;
  m.n0 = tv.n0;
  m.p0 = tv.p0;
  m.backend = tv.backend;
  m.seed = tv.seed;
  m.n_paths = tv.f.size();
  return m;
}

Moments compute_moments(const KWPaths& kw, const PathBundle& bundle) {
  return compute_moments(terminal_values(kw, bundle));
}

// ---------------------------------------------------------------------------
// diagnostics

void OrthogonalityAccumulator::begin(const KWHeader& header) {
  antithetic_ = header.antithetic;
  sum_n_ = ArrayXd::Zero(header.n_paths);
  sum_p_ = ArrayXd::Zero(header.n_paths);
  max_z_ = 0.0;
  exceed_ = 0;
}

void OrthogonalityAccumulator::observe(const KWSlice& s) {
  const ArrayXd m = *s.n_mart + *s.delta;
  if (s.noise) {
    const ArrayXd& dw = s.noise->dw1;
    sum_n_ += (*s.n_mart - prev_n_) * dw;
    sum_p_ += (*s.p_mart - prev_p_) * dw;
    const MeanSE dm = mean_se(m - prev_m_, antithetic_);
    if (dm.se > 0.0) {
      const double z = std::abs(dm.mean) / dm.se;
      max_z_ = std::max(max_z_, z);
      if (z > 4.0) ++exceed_;
    }
  }
  prev_n_ = *s.n_mart;
  prev_p_ = *s.p_mart;
  prev_m_ = m;
}

OrthogonalityReport OrthogonalityAccumulator::report() const {
  OrthogonalityReport r;
  r.cov_n = mean_se(sum_n_, antithetic_);
  r.cov_p = mean_se(sum_p_, antithetic_);
  r.martingale_max_z = max_z_;
  r.martingale_exceed = exceed_;
  return r;
}

OrthogonalityReport orthogonality_diagnostics(const KWPaths& kw, const PathBundle& bundle) {
  if (kw.delta.rows() != bundle.n_paths() || kw.delta.cols() != bundle.grid.n_steps + 1) {
    throw Error(Errc::ShapeMismatch, "KW paths and bundle disagree in shape");
  }
  OrthogonalityAccumulator acc;
  KWHeader header{bundle.grid, bundle.n_paths(), bundle.seed, bundle.antithetic, kw.backend, kw.n0, kw.p0};
  acc.begin(header);
  EnsembleState state;
  StepNoise noise;
  ArrayXd d, nm, g, pm;
  Levels lv;
  for (Index i = 0; i <= bundle.grid.n_steps; ++i) {
    lv.delta = kw.delta.col(i).array();
    lv.n_mart = kw.n_mart.col(i).array();
    lv.gamma = kw.gamma.col(i).array();
    lv.p_mart = kw.p_mart.col(i).array();
    state.step = i;
    state.t = bundle.grid.time(i);
    if (i > 0) {
      noise.dw1 = bundle.w1.col(i - 1).array();
      noise.dw2 = bundle.w2.col(i - 1).array();
    }
    acc.observe(make_slice(state, i > 0 ? &noise : nullptr, lv, nullptr, nullptr));
  }
  return acc.report();
}

void ThetaComparator::observe(const KWSlice& s) {
  if (!s.theta_delta) return;
  const ArrayXd& th = *s.theta_delta;
  const double disc = std::exp(-cf_.spec.r * s.t);
  for (Index p = 0; p < th.size(); ++p) {
    const double ref = cf_.theta_delta_at(disc, s.state->z[p], s.state->s0[p]);
    const double d = th[p] - ref;
    err2_ += d * d;
    ref2_ += ref * ref;
  }
}

double ThetaComparator::relative_error() const {
  return ref2_ > 0.0 ? std::sqrt(err2_ / ref2_) : std::sqrt(err2_);
}

}  // namespace logkw
