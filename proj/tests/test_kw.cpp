#include <cmath>

#include <gtest/gtest.h>

#include "logkw/error.hpp"
#include "logkw/kw.hpp"
#include "logkw/pipeline.hpp"

using namespace logkw;
using Eigen::ArrayXd;

namespace {

PathBundle bundle_for(const MarketSpec& spec, Index n, double dt, double t_max, bool antithetic = false,
                      std::uint64_t seed = 5) {
  NumericsConfig cfg;
  cfg.n_paths = n;
  cfg.dt = dt;
  cfg.seed = seed;
  SimulationOptions opt;
  opt.antithetic = antithetic;
  return simulate_paths(spec, cfg, t_max, opt);
}

}  // namespace

TEST(ClosedForm, InitialValues) {
  const ClosedFormIntegrands cf{MarketSpec{}};
  EXPECT_NEAR(cf.n0(), 0.0625, 1e-15);
  const double c = 0.09 * 0.75 / 4.0;
  EXPECT_NEAR(cf.p0(), 0.0625 * 0.0625 + c / 1.75, 1e-15);
  EXPECT_NEAR(cf.p0(), 0.0135491, 1e-7);
}

TEST(ClosedForm, GammaIntegrandScalesWithOneMinusRhoSquared) {
  MarketSpec a;
  a.rho = 0.0;
  MarketSpec b;
  b.rho = 0.5;
  const ClosedFormIntegrands ca(a), cb(b);
  for (double t : {0.0, 0.7, 3.0}) {
    for (double s0 : {0.3, 1.0, 2.5}) {
      EXPECT_NEAR(cb.theta_gamma(t, s0) / ca.theta_gamma(t, s0), 0.75, 1e-14);
    }
  }
  const double mpr = 0.5;
  const double c = 0.09 / 4.0;
  EXPECT_NEAR(ca.theta_gamma(0.0, 1.0), -2.0 * mpr * c / 1.75, 1e-15);
}

TEST(ClosedForm, ZeroRiskPremiumIntegrand) {
  MarketSpec s;
  s.a = 0.0;
  const ClosedFormIntegrands cf(s);
  for (double z : {-1.0, 0.0, 0.4}) {
    EXPECT_NEAR(cf.theta_delta(0.5, z, 1.0), std::exp(-0.5) * s.b * s.rho / (s.r + s.k), 1e-15);
  }
  EXPECT_EQ(cf.theta_gamma(0.5, 1.0), 0.0);
}

TEST(ClosedForm, CompleteMarketHasNoGamma) {
  MarketSpec s;
  s.rho = 1.0;
  s.complete_market_mode = true;
  const PathBundle b = bundle_for(s, 200, 0.05, 2.0);
  const KWPaths kw = closed_form_projection(s, derive_numeraire(s), b);
  EXPECT_EQ(kw.theta_gamma.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(kw.gamma.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ClosedForm, TerminalReconstruction) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 500, 0.05, 3.0);
  const KWPaths kw = closed_form_projection(s, derive_numeraire(s), b);
  const Index m = b.grid.n_steps;
  const ArrayXd f = b.f.col(m).array();
  const ArrayXd n = kw.n_mart.col(m).array();
  EXPECT_LT((kw.delta.col(m).array() + n - f).abs().maxCoeff(), 1e-13);
  EXPECT_LT((kw.gamma.col(m).array() + kw.p_mart.col(m).array() - n.square()).abs().maxCoeff(), 1e-13);
  EXPECT_TRUE((kw.delta.col(0).array() == 0.0).all());
  EXPECT_NEAR(kw.n_mart(0, 0), kw.n0, 1e-15);
  EXPECT_NEAR(kw.p_mart(0, 0), kw.p0, 1e-15);
}

TEST(ClosedForm, OneStepProjectionMatchesBruteForce) {
  // From a common state, Delta(h) = theta_h dW1 with theta_h = E[dM dW1] / h.
  const MarketSpec s;
  const Index n = 400000;
  const double h = 0.2;
  const PathBundle b = bundle_for(s, n, h, 1.0, true);
  const KWPaths kw = closed_form_projection(s, derive_numeraire(s), b);
  const double slope = kw.delta(0, 1) / b.w1(0, 0);
  for (Index p = 1; p < 8; ++p) EXPECT_NEAR(kw.delta(p, 1) / b.w1(p, 0), slope, 1e-12);

  const ClosedFormIntegrands cf(s);
  const double disc1 = std::exp(-s.r * h);
  ArrayXd m(n);
  for (Index p = 0; p < n; ++p) m[p] = b.f(p, 1) + disc1 * b.s0(p, 1) * cf.psi(b.z(p, 1));
  const ArrayXd dw = b.w1.col(0).array();
  const ArrayXd prod = m * dw / h;
  const MeanSE est = mean_se(prod, false);
  EXPECT_NEAR(slope, est.mean, 4 * est.se);
  EXPECT_NEAR(slope, cf.theta_delta(0.0, s.z0, 1.0), 0.1 * std::abs(slope));
}

TEST(ClosedForm, OrthogonalityDiagnostics) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 4000, 0.05, 4.0);
  const KWPaths kw = closed_form_projection(s, derive_numeraire(s), b);
  const OrthogonalityReport rep = orthogonality_diagnostics(kw, b);
  EXPECT_LT(std::abs(rep.z_n()), 4.0);
  EXPECT_LT(std::abs(rep.z_p()), 4.0);
}

TEST(Regression, DuplicateFeatureIsSingular) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 400, 0.1, 1.0);
  RegressionBasis basis = default_delta_basis(s.r);
  basis.features.push_back(basis.features.front());
  basis.ridge = 0.0;
  try {
    regression_projection(b, basis);
    FAIL() << "expected SingularDesignMatrix";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularDesignMatrix);
  }
  basis.ridge = 1e-8;
  EXPECT_NO_THROW(regression_projection(b, basis));
}

TEST(Regression, NonFiniteFeatureIsRejected) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 100, 0.1, 1.0);
  RegressionBasis basis;
  basis.features.push_back([](double, const ArrayXd& z, const ArrayXd&) { return (z * 1e300).exp(); });
  try {
    regression_projection(b, basis);
    FAIL() << "expected BasisRangeOverflow";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BasisRangeOverflow);
  }
}

TEST(Regression, ZeroPayoffGivesZeroDecomposition) {
  MarketSpec s;
  s.b = 0.0;
  s.z0 = 0.0;
  s.theta = 0.0;
  const PathBundle b = bundle_for(s, 300, 0.1, 1.0);
  const KWPaths kw = regression_projection(b, default_delta_basis(s.r));
  EXPECT_EQ(kw.delta.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(kw.gamma.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(kw.n0, 0.0);
  EXPECT_EQ(kw.p0, 0.0);
}

TEST(Regression, TerminalReconstructionAndStart) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 2000, 0.1, 3.0, true);
  const KWPaths kw = regression_projection(b, default_delta_basis(s.r));
  const Index m = b.grid.n_steps;
  const ArrayXd n = kw.n_mart.col(m).array();
  EXPECT_LT((kw.delta.col(m).array() + n - b.f.col(m).array()).abs().maxCoeff(), 1e-12);
  EXPECT_LT((kw.gamma.col(m).array() + kw.p_mart.col(m).array() - n.square()).abs().maxCoeff(), 1e-12);
  const Moments mo = compute_moments(kw, b);
  EXPECT_NEAR(mo.a1, kw.n0, 1e-12);
  EXPECT_NEAR(mo.a2, kw.p0, 1e-12);
}

TEST(Regression, AgreesWithClosedFormOnSmallBundle) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 8192, 0.05, 4.0, true);
  const KWPaths cf = closed_form_projection(s, derive_numeraire(s), b);
  const KWPaths rg = regression_projection(b, default_delta_basis(s.r));
  const MomentAgreement agree = compare_moments(compute_moments(cf, b), compute_moments(rg, b));
  for (double z : agree.z) EXPECT_LT(z, 4.0);
  EXPECT_TRUE(agree.pass);
}

TEST(Regression, StreamedMatchesMaterialized) {
  const MarketSpec s;
  const PathBundle b = bundle_for(s, 1000, 0.1, 2.0);
  const KWPaths direct = regression_projection(b, default_delta_basis(s.r));
  BundleSource src(b);
  RegressionSetup setup{default_delta_basis(s.r), default_gamma_basis(s.r), false, nullptr};
  KWRecorder rec(std::size_t{1} << 30);
  stream_regression(src, setup, {&rec});
  const KWPaths streamed = rec.take();
  EXPECT_LT((direct.delta - streamed.delta).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((direct.gamma - streamed.gamma).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Moments, AntitheticPairsCountOnce) {
  ArrayXd v(4);
  v << 1.0, 3.0, 5.0, 7.0;
  const MeanSE plain = mean_se(v, false);
  const MeanSE paired = mean_se(v, true);
  EXPECT_DOUBLE_EQ(plain.mean, 4.0);
  EXPECT_DOUBLE_EQ(paired.mean, 4.0);
  EXPECT_NEAR(paired.se, std::sqrt(8.0 / 1.0 / 2.0), 1e-12);
}
