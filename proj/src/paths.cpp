#include "logkw/paths.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "logkw/error.hpp"
#include "logkw/parallel.hpp"
#include "logkw/rng.hpp"

namespace logkw {

namespace {

void resize_state(EnsembleState& s, Index n) {
  s.w1.resize(n);
  s.z.resize(n);
  s.s0.resize(n);
  s.f.resize(n);
}

void resize_noise(StepNoise& noise, Index n) {
  noise.dw1.resize(n);
  noise.dw2.resize(n);
}

}  // namespace

TimeGrid make_grid(double dt, double t_max) {
  TimeGrid grid;
  grid.dt = dt;
  grid.n_steps = std::max<Index>(1, static_cast<Index>(std::ceil(t_max / dt - 1e-9)));
  return grid;
}

std::size_t bundle_bytes(Index n_paths, Index n_steps) {
  const auto n = static_cast<std::size_t>(n_paths);
  const auto m = static_cast<std::size_t>(n_steps);
  return sizeof(double) * n * (2 * m + 3 * (m + 1));
}

SimulatedSource::SimulatedSource(const MarketSpec& spec, const TimeGrid& grid, Index n_paths,
                                 std::uint64_t seed, SimulationOptions options)
    : spec_(spec), num_(derive_numeraire(spec)), grid_(grid), n_paths_(n_paths), seed_(seed),
      options_(options) {}

void SimulatedSource::initial(EnsembleState& state) const {
  resize_state(state, n_paths_);
  state.step = 0;
  state.t = 0.0;
  state.w1.setZero();
  state.z.setConstant(spec_.z0);
  state.s0.setOnes();
  state.f.setZero();
}

void SimulatedSource::advance(const EnsembleState& state, StepNoise& noise, EnsembleState& next) const {
  const Index n = n_paths_;
  resize_noise(noise, n);
  resize_state(next, n);
  next.step = state.step + 1;
  next.t = grid_.time(next.step);

  const double dt = grid_.dt;
  const double sqrt_dt = std::sqrt(dt);
  const double rho = spec_.rho;
  const double rho_bar = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double mpr = num_.mpr;
  const double decay = std::exp(-spec_.k * dt);
  const double ou_sd = spec_.b * std::sqrt(-std::expm1(-2.0 * spec_.k * dt) / (2.0 * spec_.k));
  const double disc_now = std::exp(-spec_.r * state.t);
  const double disc_next = std::exp(-spec_.r * next.t);
  const double drift_s0 = -0.5 * mpr * mpr * next.t;
  const auto step = static_cast<std::uint64_t>(state.step);
  const bool anti = options_.antithetic;
  const bool exact = options_.scheme == FactorScheme::exact;

  for_each_chunk(n, options_.parallel, [&](Index, Index begin, Index end) {
    const Index len = end - begin;
    Eigen::ArrayXd u0(len), u1(len);
    for (Index j = 0; j < len; ++j) {
      const Index p = begin + j;
      if (anti && (p & 1) && j > 0) {
        u0[j] = u0[j - 1];
        u1[j] = u1[j - 1];
        continue;
      }
      const UniformPair u = uniform_pair(seed_, static_cast<std::uint64_t>(anti ? p / 2 : p), step);
      u0[j] = u.u0;
      u1[j] = u.u1;
    }
    const Eigen::ArrayXd radius = (-2.0 * u0.log()).sqrt();
    auto dw1 = noise.dw1.segment(begin, len);
    auto dw2 = noise.dw2.segment(begin, len);
    for (Index j = 0; j < len; ++j) {
      const double sign = (anti && ((begin + j) & 1)) ? -sqrt_dt : sqrt_dt;
      const double angle = box_muller_angle(u1[j]);
      dw1[j] = sign * radius[j] * std::cos(angle);
      dw2[j] = sign * radius[j] * std::sin(angle);
    }

    auto w1 = next.w1.segment(begin, len);
    auto s0 = next.s0.segment(begin, len);
    auto z = next.z.segment(begin, len);
    const auto z_prev = state.z.segment(begin, len);
    w1 = state.w1.segment(begin, len) + dw1;
    s0 = (-mpr * w1 + drift_s0).exp();
    // Factor innovation rho dW1 + sqrt(1 - rho^2) dW2, in units of sqrt(dt).
    const Eigen::ArrayXd xb = (rho * dw1 + rho_bar * dw2) / sqrt_dt;
    if (exact) {
      z = spec_.theta + (z_prev - spec_.theta) * decay + ou_sd * xb;
    } else {
      z = z_prev + spec_.k * (spec_.theta - z_prev) * dt + spec_.b * sqrt_dt * xb;
    }
    next.f.segment(begin, len) =
        state.f.segment(begin, len) +
        0.5 * dt * (disc_now * state.s0.segment(begin, len) * z_prev + disc_next * s0 * z);
  });
}

void BundleSource::initial(EnsembleState& state) const {
  const Index n = bundle_.n_paths();
  resize_state(state, n);
  state.step = 0;
  state.t = 0.0;
  state.w1.setZero();
  state.z = bundle_.z.col(0).array();
  state.s0 = bundle_.s0.col(0).array();
  state.f = bundle_.f.col(0).array();
}

void BundleSource::advance(const EnsembleState& state, StepNoise& noise, EnsembleState& next) const {
  const Index i = state.step;
  resize_noise(noise, bundle_.n_paths());
  noise.dw1 = bundle_.w1.col(i).array();
  noise.dw2 = bundle_.w2.col(i).array();
  next.step = i + 1;
  next.t = bundle_.grid.time(i + 1);
  next.w1 = state.w1 + noise.dw1;
  next.z = bundle_.z.col(i + 1).array();
  next.s0 = bundle_.s0.col(i + 1).array();
  next.f = bundle_.f.col(i + 1).array();
}

PathBundle simulate_paths(const MarketSpec& spec, const NumericsConfig& cfg, double t_max,
                          SimulationOptions options) {
  const TimeGrid grid = make_grid(cfg.dt, t_max);
  const std::size_t bytes = bundle_bytes(cfg.n_paths, grid.n_steps);
  if (bytes > cfg.max_bundle_bytes) {
    std::ostringstream msg;
    msg << "path bundle needs " << bytes << " bytes, budget is " << cfg.max_bundle_bytes;
    throw Error(Errc::AllocationTooLarge, msg.str());
  }

  PathBundle bundle;
  bundle.grid = grid;
  bundle.seed = cfg.seed;
  bundle.antithetic = options.antithetic;
  bundle.r = spec.r;
  bundle.rho = spec.rho;
  const Index n = cfg.n_paths;
  const Index m = grid.n_steps;
  bundle.w1.resize(n, m);
  bundle.w2.resize(n, m);
  bundle.z.resize(n, m + 1);
  bundle.s0.resize(n, m + 1);
  bundle.f.resize(n, m + 1);

  SimulatedSource source(spec, grid, n, cfg.seed, options);
  EnsembleState state, next;
  StepNoise noise;
  source.initial(state);
  bundle.z.col(0) = state.z.matrix();
  bundle.s0.col(0) = state.s0.matrix();
  bundle.f.col(0) = state.f.matrix();
  for (Index i = 0; i < m; ++i) {
    source.advance(state, noise, next);
    bundle.w1.col(i) = noise.dw1.matrix();
    bundle.w2.col(i) = noise.dw2.matrix();
    bundle.z.col(i + 1) = next.z.matrix();
    bundle.s0.col(i + 1) = next.s0.matrix();
    bundle.f.col(i + 1) = next.f.matrix();
    std::swap(state, next);
  }
  return bundle;
}

void accumulate_endowment(PathBundle& bundle) {
  const Index m = bundle.grid.n_steps;
  const double dt = bundle.grid.dt;
  bundle.f.resize(bundle.n_paths(), m + 1);
  bundle.f.col(0).setZero();
  for (Index i = 0; i < m; ++i) {
    const double d0 = std::exp(-bundle.r * bundle.grid.time(i));
    const double d1 = std::exp(-bundle.r * bundle.grid.time(i + 1));
    bundle.f.col(i + 1).array() =
        bundle.f.col(i).array() + 0.5 * dt *
                                      (d0 * bundle.s0.col(i).array() * bundle.z.col(i).array() +
                                       d1 * bundle.s0.col(i + 1).array() * bundle.z.col(i + 1).array());
  }
}

void write_bundle(const PathBundle& bundle, const std::filesystem::path& dir, bool binary,
                  const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());

  const std::pair<const char*, const Eigen::MatrixXd*> fields[] = {
      {"w1", &bundle.w1}, {"w2", &bundle.w2}, {"z", &bundle.z}, {"s0", &bundle.s0}, {"f", &bundle.f}};
  for (const auto& [name, mat] : fields) {
    const auto file = dir / (std::string(name) + (binary ? ".bin" : ".csv"));
    std::ofstream out(file, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error(Errc::IoError, "cannot open " + file.string());
    out << "# field=" << name << " dt=" << bundle.grid.dt << " n_steps=" << bundle.grid.n_steps
        << " n_paths=" << mat->rows() << " cols=" << mat->cols() << " seed=" << bundle.seed
        << " antithetic=" << bundle.antithetic << " config=" << config_hash << '\n';
    if (binary) {
      static_assert(std::endian::native == std::endian::little, "binary dump assumes little-endian");
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = *mat;
      out.write(reinterpret_cast<const char*>(rows.data()),
                static_cast<std::streamsize>(rows.size() * sizeof(double)));
    } else {
      out.precision(17);
      for (Index p = 0; p < mat->rows(); ++p) {
        for (Index j = 0; j < mat->cols(); ++j) {
          if (j) out << ',';
          out << (*mat)(p, j);
        }
        out << '\n';
      }
    }
    if (!out) throw Error(Errc::IoError, "write failed for " + file.string());
  }
}

}  // namespace logkw
