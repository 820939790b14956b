#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "logkw/error.hpp"
#include "logkw/paths.hpp"
#include "logkw/rng.hpp"

using namespace logkw;
using Eigen::ArrayXd;

namespace {

NumericsConfig small(Index n, double dt = 0.05) {
  NumericsConfig cfg;
  cfg.n_paths = n;
  cfg.dt = dt;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST(Paths, GridCoversHorizon) {
  const TimeGrid g = make_grid(0.05, 1.0);
  EXPECT_EQ(g.n_steps, 20);
  EXPECT_NEAR(g.t_max(), 1.0, 1e-12);
  EXPECT_GE(make_grid(0.3, 1.0).t_max(), 1.0);
}

TEST(Paths, DiscountProcessIdentity) {
  const MarketSpec spec;
  const PathBundle b = simulate_paths(spec, small(64), 1.0);
  const double mpr = derive_numeraire(spec).mpr;
  ArrayXd w1 = ArrayXd::Zero(64);
  EXPECT_TRUE((b.s0.col(0).array() == 1.0).all());
  for (Index i = 0; i < b.grid.n_steps; ++i) {
    w1 += b.w1.col(i).array();
    const double t = b.grid.time(i + 1);
    const ArrayXd expect = (-mpr * w1 - 0.5 * mpr * mpr * t).exp();
    EXPECT_LT((b.s0.col(i + 1).array() - expect).abs().maxCoeff(), 1e-12);
  }
}

TEST(Paths, BundleReplaysSource) {
  const MarketSpec spec;
  const NumericsConfig cfg = small(300);
  const PathBundle b = simulate_paths(spec, cfg, 1.0);
  SimulatedSource sim(spec, b.grid, cfg.n_paths, cfg.seed);
  BundleSource rep(b);
  EnsembleState s1, s2, n1, n2;
  StepNoise e1, e2;
  sim.initial(s1);
  rep.initial(s2);
  for (Index i = 0; i < b.grid.n_steps; ++i) {
    sim.advance(s1, e1, n1);
    rep.advance(s2, e2, n2);
    EXPECT_TRUE((e1.dw1 == e2.dw1).all());
    EXPECT_TRUE((n1.z == n2.z).all());
    EXPECT_TRUE((n1.f == n2.f).all());
    EXPECT_LT((n1.w1 - n2.w1).abs().maxCoeff(), 1e-13);
    std::swap(s1, n1);
    std::swap(s2, n2);
  }
}

TEST(Paths, MatchesScalarReferenceDraws) {
  const MarketSpec spec;
  const PathBundle b = simulate_paths(spec, small(10), 0.2);
  const double sqrt_dt = std::sqrt(0.05);
  for (Index p = 0; p < 10; ++p) {
    for (Index i = 0; i < b.grid.n_steps; ++i) {
      const NormalPair g = normal_pair(11, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(i));
      EXPECT_NEAR(b.w1(p, i), sqrt_dt * g.first, 1e-14);
      EXPECT_NEAR(b.w2(p, i), sqrt_dt * g.second, 1e-14);
    }
  }
}

TEST(Paths, AntitheticPairsNegate) {
  SimulationOptions opt;
  opt.antithetic = true;
  const PathBundle b = simulate_paths(MarketSpec{}, small(9000), 0.5, opt);
  for (Index p = 0; p + 1 < 9000; p += 2) {
    ASSERT_TRUE((b.w1.row(p).array() == -b.w1.row(p + 1).array()).all()) << p;
    ASSERT_TRUE((b.w2.row(p).array() == -b.w2.row(p + 1).array()).all()) << p;
  }
}

TEST(Paths, BudgetIsEnforced) {
  NumericsConfig cfg = small(1000);
  cfg.max_bundle_bytes = bundle_bytes(1000, 20) - 1;
  try {
    simulate_paths(MarketSpec{}, cfg, 1.0);
    FAIL() << "expected AllocationTooLarge";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllocationTooLarge);
  }
  cfg.max_bundle_bytes = bundle_bytes(1000, 20);
  EXPECT_NO_THROW(simulate_paths(MarketSpec{}, cfg, 1.0));
}

TEST(Paths, FactorMomentsExactScheme) {
  MarketSpec spec;
  spec.theta = 0.1;
  const Index n = 40000;
  const PathBundle b = simulate_paths(spec, small(n, 0.25), 2.0);
  const ArrayXd z = b.z.col(b.grid.n_steps).array();
  const double t = b.grid.t_max();
  const double mean = spec.theta + (spec.z0 - spec.theta) * std::exp(-spec.k * t);
  const double var = spec.b * spec.b * (1 - std::exp(-2 * spec.k * t)) / (2 * spec.k);
  const double m = z.mean();
  const double v = (z - m).square().mean();
  EXPECT_NEAR(m, mean, 4 * std::sqrt(var / n));
  EXPECT_NEAR(v, var, 4 * var * std::sqrt(2.0 / n));

  // correlation of the factor innovation with W1
  const ArrayXd dz = b.z.col(1).array() - spec.theta - (spec.z0 - spec.theta) * std::exp(-spec.k * 0.25);
  const ArrayXd dw = b.w1.col(0).array();
  const double corr = (dz * dw).mean() / std::sqrt(dz.square().mean() * dw.square().mean());
  EXPECT_NEAR(corr, spec.rho, 4 * (1 - spec.rho * spec.rho) / std::sqrt(double(n)));
}

TEST(Paths, SerialAndParallelAgree) {
  SimulationOptions serial;
  serial.parallel = false;
  SimulationOptions par;
  par.parallel = true;
  const PathBundle a = simulate_paths(MarketSpec{}, small(10000), 0.5, serial);
  const PathBundle b = simulate_paths(MarketSpec{}, small(10000), 0.5, par);
  EXPECT_TRUE(a.f == b.f);
  EXPECT_TRUE(a.z == b.z);
  EXPECT_TRUE(a.s0 == b.s0);
}

TEST(Paths, EndowmentQuadratureRecomputes) {
  PathBundle b = simulate_paths(MarketSpec{}, small(50), 1.0);
  const Eigen::MatrixXd f = b.f;
  accumulate_endowment(b);
  EXPECT_LT((f - b.f).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Paths, WritesCsvFields) {
  const PathBundle b = simulate_paths(MarketSpec{}, small(4), 0.1);
  const auto dir = std::filesystem::temp_directory_path() / "logkw_paths_test";
  std::filesystem::remove_all(dir);
  write_bundle(b, dir, false, "abc");
  for (const char* name : {"w1", "w2", "z", "s0", "f"}) {
    std::ifstream in(dir / (std::string(name) + ".csv"));
    ASSERT_TRUE(in.good()) << name;
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.rfind("# field=", 0), 0u);
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 4);
  }
  std::filesystem::remove_all(dir);
}
