#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "logkw/model.hpp"

namespace logkw {

struct TimeGrid {
  double dt = 0.0;
  Index n_steps = 0;

  double time(Index i) const noexcept { return static_cast<double>(i) * dt; }
  double t_max() const noexcept { return time(n_steps); }
};

enum class FactorScheme { exact, euler };

struct SimulationOptions {
  /// Paths 2j and 2j+1 share their noise with opposite signs.
  bool antithetic = false;
  FactorScheme scheme = FactorScheme::exact;
  bool parallel = true;
};

/// All paths at one grid time t_i (column i of the corresponding bundle).
struct EnsembleState {
  Index step = 0;
  double t = 0.0;
  Eigen::ArrayXd w1;  // cumulative W1
  Eigen::ArrayXd z;
  Eigen::ArrayXd s0;
  Eigen::ArrayXd f;
};

/// Brownian increments over [t_i, t_{i+1}].
struct StepNoise {
  Eigen::ArrayXd dw1;
  Eigen::ArrayXd dw2;
};

/// Time-major access to an ensemble. Implementations are rewindable: calling
/// initial() again replays the identical paths.
class PathSource {
 public:
  virtual ~PathSource() = default;

  virtual const TimeGrid& grid() const = 0;
  virtual Index n_paths() const = 0;
  virtual std::uint64_t seed() const = 0;
  virtual bool antithetic() const = 0;
  virtual double rho() const = 0;

  virtual void initial(EnsembleState& state) const = 0;
  /// Fills the increments of step `state.step` and writes t_{step+1} into next.
  virtual void advance(const EnsembleState& state, StepNoise& noise, EnsembleState& next) const = 0;
};

/// Materialized ensemble, one row per path. Increments are n_paths x n_steps;
/// levels are n_paths x (n_steps + 1).
struct PathBundle {
  TimeGrid grid;
  std::uint64_t seed = 0;
  bool antithetic = false;
  double r = 0.0;
  double rho = 0.0;
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;
  Eigen::MatrixXd z;
  Eigen::MatrixXd s0;
  Eigen::MatrixXd f;

  Index n_paths() const noexcept { return z.rows(); }
};

/// Generates paths on the fly from counter-based per-path streams.
class SimulatedSource final : public PathSource {
 public:
  SimulatedSource(const MarketSpec& spec, const TimeGrid& grid, Index n_paths, std::uint64_t seed,
                  SimulationOptions options = {});

  const TimeGrid& grid() const override { return grid_; }
  Index n_paths() const override { return n_paths_; }
  std::uint64_t seed() const override { return seed_; }
  bool antithetic() const override { return options_.antithetic; }
  double rho() const override { return spec_.rho; }

  void initial(EnsembleState& state) const override;
  void advance(const EnsembleState& state, StepNoise& noise, EnsembleState& next) const override;

 private:
  MarketSpec spec_;
  NumeraireSpec num_;
  TimeGrid grid_;
  Index n_paths_;
  std::uint64_t seed_;
  SimulationOptions options_;
};

/// Replays a stored PathBundle.
class BundleSource final : public PathSource {
 public:
  explicit BundleSource(const PathBundle& bundle) : bundle_(bundle) {}

  const TimeGrid& grid() const override { return bundle_.grid; }
  Index n_paths() const override { return bundle_.n_paths(); }
  std::uint64_t seed() const override { return bundle_.seed; }
  bool antithetic() const override { return bundle_.antithetic; }
  double rho() const override { return bundle_.rho; }

  void initial(EnsembleState& state) const override;
  void advance(const EnsembleState& state, StepNoise& noise, EnsembleState& next) const override;

 private:
  const PathBundle& bundle_;
};

TimeGrid make_grid(double dt, double t_max);

/// Bytes needed to hold a bundle of the given size.
std::size_t bundle_bytes(Index n_paths, Index n_steps);

/// Simulates and stores the ensemble; throws AllocationTooLarge past
/// cfg.max_bundle_bytes.
PathBundle simulate_paths(const MarketSpec& spec, const NumericsConfig& cfg, double t_max,
                          SimulationOptions options = {});

/// Trapezoid quadrature of e^{-rt} s0(t) z(t) into bundle.f.
void accumulate_endowment(PathBundle& bundle);

/// Writes one file per field (w1, w2, z, s0, f): a header line naming the grid
/// and seed, then one row per path. Binary files hold the same header line
/// followed by little-endian row-major doubles.
void write_bundle(const PathBundle& bundle, const std::filesystem::path& dir, bool binary,
                  const std::string& config_hash);

}  // namespace logkw
