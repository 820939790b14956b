#include "logkw/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "logkw/error.hpp"
#include "logkw/pipeline.hpp"

namespace logkw {

namespace {

using nlohmann::ordered_json;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<Index> paths;
  std::optional<double> dt;
  std::optional<double> horizon_tol;
  std::optional<std::string> eps_grid;
  std::optional<std::string> backend;
  std::optional<std::string> out;
  std::optional<std::string> format;
  bool complete_market = false;
  bool single_thread = false;
  bool cross_backend = false;
};

RunConfig effective_config(const Flags& f) {
  RunConfig cfg = load_config(f.config);
  if (const char* env = std::getenv(kOutDirEnv); env && *env) cfg.out_dir = env;
  if (f.seed) cfg.numerics.seed = *f.seed;
  if (f.paths) cfg.numerics.n_paths = *f.paths;
  if (f.dt) cfg.numerics.dt = *f.dt;
  if (f.horizon_tol) cfg.numerics.horizon_tol = *f.horizon_tol;
  if (f.eps_grid) cfg.eps_grid = parse_eps_grid(*f.eps_grid);
  if (f.backend) cfg.backend = parse_backend(*f.backend);
  if (f.out) cfg.out_dir = *f.out;
  if (f.format) cfg.format = *f.format;
  if (f.complete_market) cfg.market.complete_market_mode = true;
  if (f.single_thread) cfg.numerics.parallel = false;
  if (cfg.format != "csv" && cfg.format != "json" && cfg.format != "bin") {
    throw Error(Errc::ConfigParseError, "format must be csv, json or bin");
  }
  return cfg;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string());
  return out;
}

void write_json(const std::filesystem::path& path, const ordered_json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

ordered_json stamp(const RunConfig& cfg) {
  return {{"config_hash", config_hash(cfg)}, {"seed", cfg.numerics.seed}};
}

ordered_json moments_json(const Moments& m, const RunConfig& cfg) {
  ordered_json j{{"a1", m.a1},       {"a2", m.a2},       {"a3", m.a3},       {"a4", m.a4},
                 {"g", m.g},         {"n0", m.n0},       {"p0", m.p0},       {"se_a1", m.se_a1},
                 {"se_a2", m.se_a2}, {"se_a3", m.se_a3}, {"se_a4", m.se_a4}, {"se_g", m.se_g},
                 {"backend", std::string(backend_name(m.backend))},
                 {"n_paths", m.n_paths}};
  j.update(stamp(cfg));
  return j;
}

ordered_json orthogonality_json(const OrthogonalityReport& r) {
  return {{"cov_n", r.cov_n.mean},
          {"se_cov_n", r.cov_n.se},
          {"cov_p", r.cov_p.mean},
          {"se_cov_p", r.cov_p.se},
          {"martingale_max_z", r.martingale_max_z},
          {"martingale_steps_above_4se", r.martingale_exceed}};
}

ordered_json projection_json(const ProjectionRun& run, const RunConfig& cfg) {
  ordered_json j = moments_json(run.moments, cfg);
  j["orthogonality"] = orthogonality_json(run.orthogonality);
  if (run.theta_error) j["theta_delta_rel_l2_vs_closed_form"] = *run.theta_error;
  return j;
}

/// A small numeric table written as CSV (with a stamp comment) or JSON rows.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void write(const std::filesystem::path& base, const RunConfig& cfg) const {
    if (cfg.format == "json") {
      ordered_json j = stamp(cfg);
      ordered_json arr = ordered_json::array();
      for (const auto& row : rows) {
        ordered_json r;
        for (std::size_t c = 0; c < columns.size(); ++c) r[columns[c]] = row[c];
        arr.push_back(r);
      }
      j["rows"] = arr;
      write_json(base.string() + ".json", j);
      return;
    }
    auto out = open_output(base.string() + ".csv");
    out << std::setprecision(17);
    out << "# config_hash=" << config_hash(cfg) << " seed=" << cfg.numerics.seed << '\n';
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
      out << '\n';
    }
    if (!out) throw Error(Errc::IoError, "write failed for " + base.string());
  }
};

Table bounds_table(const BoundsReport& rep) {
  Table t{{"eps", "u_low", "se_low", "u_up", "se_up", "u_hat", "ratio_low", "ratio_up", "stop_frac",
           "primal_violation_frac"},
          {}};
  for (const auto& r : rep.rows) {
    t.rows.push_back({r.eps, r.u_low, r.se_low, r.u_up, r.se_up, r.u_hat, r.ratio_low, r.ratio_up, r.stop_frac,
                      r.primal_violation_frac});
  }
  return t;
}

Table expansion_table(const ExpansionReport& rep) {
  Table t{{"eps", "u_hat", "ce_hat", "ce_exact", "violation_frac"}, {}};
  for (Index i = 0; i < rep.eps_grid.size(); ++i) {
    t.rows.push_back({rep.eps_grid[i], rep.u_hat[i], rep.ce_hat[i], rep.ce_exact[i], rep.violation_frac[i]});
  }
  return t;
}

/// Per-step cross-sectional means and standard deviations.
class SummaryObserver final : public KWObserver {
 public:
  void observe(const KWSlice& s) override {
    std::vector<double> row{static_cast<double>(s.step), s.t};
    for (const Eigen::ArrayXd* a : {s.delta, s.n_mart, s.gamma, s.p_mart}) {
      const double mean = a->mean();
      row.push_back(mean);
      row.push_back(a->size() > 1 ? std::sqrt((*a - mean).square().sum() / static_cast<double>(a->size() - 1))
                                  : 0.0);
    }
    row.push_back(s.theta_delta ? s.theta_delta->mean() : 0.0);
    row.push_back(s.theta_gamma ? s.theta_gamma->mean() : 0.0);
    table.rows.push_back(std::move(row));
  }

  Table table{{"step", "t", "mean_delta", "sd_delta", "mean_n", "sd_n", "mean_gamma", "sd_gamma", "mean_p", "sd_p",
               "mean_theta_delta", "mean_theta_gamma"},
              {}};
};

void print_warnings(const Setup& setup, std::ostream& err) {
  for (const auto& w : setup.validated.warnings) err << "warning: " << w << '\n';
}

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Setup s = prepare(cfg);
  print_warnings(s, err);
  const NumeraireSpec num = derive_numeraire(s.validated.spec);
  ordered_json j{{"valid", true},
                 {"warnings", s.validated.warnings},
                 {"pi_star", num.pi_star},
                 {"mpr", num.mpr},
                 {"eta", num.eta},
                 {"t_max", s.horizon.t_max},
                 {"n_steps", s.horizon.n_steps},
                 {"decay_rate", s.horizon.decay_rate},
                 {"tail_bound", s.horizon.tail_bound}};
  j.update(stamp(cfg));
  write_json(cfg.out_dir / "validate.json", j);
  out << "valid: T_max = " << s.horizon.t_max << " (" << s.horizon.n_steps << " steps)\n";
  return 0;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Setup s = prepare(cfg);
  print_warnings(s, err);
  SimulationOptions opt;
  opt.parallel = cfg.numerics.parallel;
  const PathBundle bundle = simulate_paths(s.validated.spec, cfg.numerics, s.grid.t_max(), opt);
  write_bundle(bundle, cfg.out_dir / "paths", cfg.format == "bin", config_hash(cfg));
  out << "wrote " << bundle.n_paths() << " paths x " << bundle.grid.n_steps << " steps to "
      << (cfg.out_dir / "paths").string() << '\n';
  return 0;
}

int cmd_project(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Setup s = prepare(cfg);
  print_warnings(s, err);
  const SimulatedSource source = make_source(cfg, s, true);
  SummaryObserver summary;
  std::vector<KWObserver*> extra{&summary};
  const auto n = static_cast<std::size_t>(cfg.numerics.n_paths);
  const auto m = static_cast<std::size_t>(s.grid.n_steps);
  std::optional<KWRecorder> recorder;
  if (sizeof(double) * n * (6 * m + 4) <= cfg.numerics.max_bundle_bytes) {
    recorder.emplace(cfg.numerics.max_bundle_bytes);
    extra.push_back(&*recorder);
  } else {
    err << "note: path-wise KW arrays exceed max_bundle_bytes; writing the per-step summary only\n";
  }
  const ProjectionRun run = run_projection(cfg, s.validated.spec, source, cfg.backend, extra);
  const std::string tag(backend_name(cfg.backend));
  summary.table.write(cfg.out_dir / ("kw_summary_" + tag), cfg);
  write_json(cfg.out_dir / ("moments_" + tag + ".json"), projection_json(run, cfg));
  if (recorder) {
    const KWPaths kw = recorder->take();
    const std::pair<const char*, const Eigen::MatrixXd*> fields[] = {
        {"delta", &kw.delta},         {"n_mart", &kw.n_mart},          {"gamma", &kw.gamma},
        {"p_mart", &kw.p_mart},       {"theta_delta", &kw.theta_delta}, {"theta_gamma", &kw.theta_gamma}};
    for (const auto& [name, mat] : fields) {
      Table t;
      for (Index j = 0; j < mat->cols(); ++j) t.columns.push_back("t" + std::to_string(j));
      for (Index p = 0; p < mat->rows(); ++p) {
        std::vector<double> row(static_cast<std::size_t>(mat->cols()));
        for (Index j = 0; j < mat->cols(); ++j) row[static_cast<std::size_t>(j)] = (*mat)(p, j);
        t.rows.push_back(std::move(row));
      }
      t.write(cfg.out_dir / ("kw_" + tag) / name, cfg);
    }
  }
  out << "backend " << tag << ": n0 = " << run.moments.n0 << ", p0 = " << run.moments.p0 << ", a1 = " << run.moments.a1
      << ", a2 = " << run.moments.a2 << '\n';
  return 0;
}

int cmd_moments(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Setup s = prepare(cfg);
  print_warnings(s, err);
  const SimulatedSource source = make_source(cfg, s, true);
  const ProjectionRun run = run_projection(cfg, s.validated.spec, source, cfg.backend);
  write_json(cfg.out_dir / "moments.json", projection_json(run, cfg));
  const Moments& m = run.moments;
  out << std::setprecision(10) << "a1 = " << m.a1 << " (" << m.se_a1 << ")  a2 = " << m.a2 << " (" << m.se_a2
      << ")  a3 = " << m.a3 << "  a4 = " << m.a4 << "  g = " << m.g << '\n';
  return 0;
}

Eigen::ArrayXd eps_array(const RunConfig& cfg) {
  return Eigen::Map<const Eigen::ArrayXd>(cfg.eps_grid.data(), static_cast<Index>(cfg.eps_grid.size()));
}

int cmd_expand(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Setup s = prepare(cfg);
  print_warnings(s, err);
  const SimulatedSource source = make_source(cfg, s, true);
  const ProjectionRun run = run_projection(cfg, s.validated.spec, source, cfg.backend);
  const ExpansionReport rep = expansion_report(run.moments, run.terminal, eps_array(cfg));
  for (const auto& w : rep.warnings) err << "warning: " << w << '\n';
  expansion_table(rep).write(cfg.out_dir / "expansion", cfg);
  write_json(cfg.out_dir / "moments.json", projection_json(run, cfg));
  out << "wrote " << rep.eps_grid.size() << " expansion rows\n";
  return 0;
}

int cmd_price(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const VerifyRun v = run_verify(cfg, false);
  print_warnings(v.setup, err);
  Table t{{"eps", "ce_hat", "ce_exact", "ce_low", "ce_up"}, {}};
  for (std::size_t i = 0; i < v.bounds.rows.size(); ++i) {
    const BoundsRow& r = v.bounds.rows[i];
    t.rows.push_back({r.eps, v.expansion.ce_hat[static_cast<Index>(i)], v.expansion.ce_exact[static_cast<Index>(i)],
                      std::expm1(r.u_low), std::expm1(r.u_up)});
  }
  t.write(cfg.out_dir / "price", cfg);
  out << "wrote " << t.rows.size() << " certainty-equivalent rows\n";
  return 0;
}

int cmd_verify(const RunConfig& cfg, bool cross, std::ostream& out, std::ostream& err) {
  const VerifyRun v = run_verify(cfg, cross);
  print_warnings(v.setup, err);
  write_json(cfg.out_dir / "moments.json", projection_json(v.closed_form, cfg));
  bounds_table(v.bounds).write(cfg.out_dir / "bounds", cfg);
  expansion_table(v.expansion).write(cfg.out_dir / "expansion", cfg);

  const ResidualVerdict& r = v.verdict;
  bool pass = r.pass;
  ordered_json j{{"pass", r.pass},
                 {"sandwich", r.sandwich},
                 {"ratio_low_decreasing", r.low_decreasing},
                 {"ratio_up_decreasing", r.up_decreasing},
                 {"gap_decreasing", r.gap_decreasing},
                 {"notes", r.notes},
                 {"eps_l", v.eps_l},
                 {"orthogonality", orthogonality_json(v.closed_form.orthogonality)}};
  ordered_json stops = ordered_json::array();
  for (const auto& st : v.stopped) {
    stops.push_back({{"eps", st.config.eps},
                     {"stop_frac", st.stop_frac()},
                     {"stop_frac_over_eps4", st.stop_frac() / std::pow(st.config.eps, 4)},
                     {"delta_overshoot", st.delta_overshoot},
                     {"max_delta_step", st.max_delta_step}});
  }
  j["stopping"] = stops;
  if (v.regression) {
    write_json(cfg.out_dir / "moments_regression.json", projection_json(*v.regression, cfg));
    j["cross_backend"] = {{"pass", v.agreement->pass},
                          {"z", v.agreement->z},
                          {"theta_delta_rel_l2", v.regression->theta_error.value_or(0.0)}};
    pass = pass && v.agreement->pass;
  }
  j["pass"] = pass;
  j.update(stamp(cfg));
  write_json(cfg.out_dir / "verify.json", j);
  out << (pass ? "PASS" : "FAIL") << ": residual analysis over " << v.bounds.rows.size() << " eps values\n";
  for (const auto& note : r.notes) out << "  " << note << '\n';
  return pass ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fourth-order log-utility expansions with a small endowment stream"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "INI config file")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", f.seed, "RNG seed");
  app.add_option("--paths", f.paths, "number of paths");
  app.add_option("--dt", f.dt, "time step");
  app.add_option("--horizon-tol", f.horizon_tol, "horizon truncation tolerance");
  app.add_option("--eps-grid", f.eps_grid, "descending comma-separated eps values");
  app.add_option("--backend", f.backend, "closed-form or regression");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--format", f.format, "csv, json (tables) or bin (simulate)");
  app.add_flag("--complete-market-mode", f.complete_market, "allow |rho| = 1");
  app.add_flag("--single-thread", f.single_thread, "disable threading");
  app.fallthrough();

  auto* validate = app.add_subcommand("validate", "check the market specification");
  auto* simulate = app.add_subcommand("simulate", "dump simulated paths");
  auto* project = app.add_subcommand("project", "run a KW projection backend");
  auto* moments = app.add_subcommand("moments", "estimate the expansion moments");
  auto* expand = app.add_subcommand("expand", "evaluate the value and CE expansions");
  auto* price = app.add_subcommand("price", "certainty equivalents with bound-based estimates");
  auto* verify = app.add_subcommand("verify", "bounds and residual analysis");
  verify->add_flag("--cross-backend", f.cross_backend, "also compare regression moments");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    const RunConfig cfg = effective_config(f);
    if (*validate) return cmd_validate(cfg, out, err);
    if (*simulate) return cmd_simulate(cfg, out, err);
    if (*project) return cmd_project(cfg, out, err);
    if (*moments) return cmd_moments(cfg, out, err);
    if (*expand) return cmd_expand(cfg, out, err);
    if (*price) return cmd_price(cfg, out, err);
    if (*verify) return cmd_verify(cfg, f.cross_backend, out, err);
  } catch (const Error& e) {
    err << "error " << e.qualified_code() << ": " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace logkw
