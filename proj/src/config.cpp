#include "logkw/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "logkw/error.hpp"

namespace logkw {

namespace pt = boost::property_tree;

namespace {

template <class T>
T read_value(const pt::ptree& node, const std::string& section, const std::string& key) {
  const std::string raw = node.get_value<std::string>();
  std::istringstream in(raw);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw Error(Errc::ConfigParseError, "bad value '" + raw + "' for " + section + "." + key);
  }
  return value;
}

bool read_bool(const pt::ptree& node, const std::string& section, const std::string& key) {
  const std::string raw = node.get_value<std::string>();
  if (raw == "true" || raw == "1" || raw == "yes") return true;
  if (raw == "false" || raw == "0" || raw == "no") return false;
  throw Error(Errc::ConfigParseError, "bad boolean '" + raw + "' for " + section + "." + key);
}

void parse_market(const pt::ptree& sec, MarketSpec& m) {
  for (const auto& [key, node] : sec) {
    if (key == "r") m.r = read_value<double>(node, "market", key);
    else if (key == "a") m.a = read_value<double>(node, "market", key);
    else if (key == "sigma") m.sigma = read_value<double>(node, "market", key);
    else if (key == "rho") m.rho = read_value<double>(node, "market", key);
    else if (key == "k") m.k = read_value<double>(node, "market", key);
    else if (key == "theta") m.theta = read_value<double>(node, "market", key);
    else if (key == "b") m.b = read_value<double>(node, "market", key);
    else if (key == "z0") m.z0 = read_value<double>(node, "market", key);
    else if (key == "complete_market_mode") m.complete_market_mode = read_bool(node, "market", key);
    else throw Error(Errc::ConfigParseError, "unknown key market." + key);
  }
}

void parse_numerics(const pt::ptree& sec, RunConfig& cfg) {
  NumericsConfig& n = cfg.numerics;
  for (const auto& [key, node] : sec) {
    if (key == "dt") n.dt = read_value<double>(node, "numerics", key);
    else if (key == "n_paths") n.n_paths = read_value<Index>(node, "numerics", key);
    else if (key == "seed") n.seed = read_value<std::uint64_t>(node, "numerics", key);
    else if (key == "horizon_tol") n.horizon_tol = read_value<double>(node, "numerics", key);
    else if (key == "max_bundle_bytes") n.max_bundle_bytes = read_value<std::size_t>(node, "numerics", key);
    else if (key == "ridge") cfg.ridge = read_value<double>(node, "numerics", key);
    else throw Error(Errc::ConfigParseError, "unknown key numerics." + key);
  }
}

void parse_run(const pt::ptree& sec, RunConfig& cfg) {
  for (const auto& [key, node] : sec) {
    const std::string raw = node.get_value<std::string>();
    if (key == "eps_grid") cfg.eps_grid = parse_eps_grid(raw);
    else if (key == "backend") cfg.backend = parse_backend(raw);
    else if (key == "out") cfg.out_dir = raw;
    else if (key == "format") cfg.format = raw;
    else throw Error(Errc::ConfigParseError, "unknown key run." + key);
  }
}

}  // namespace

std::vector<double> parse_eps_grid(const std::string& text) {
  std::vector<double> grid;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::istringstream one(item);
    double v = 0.0;
    one >> v;
    if (!one || !(one >> std::ws).eof()) throw Error(Errc::ConfigParseError, "bad eps grid entry '" + item + "'");
    grid.push_back(v);
  }
  if (grid.empty()) throw Error(Errc::ConfigParseError, "empty eps grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0)) throw Error(Errc::ConfigParseError, "eps grid must be positive");
    if (i > 0 && !(grid[i] < grid[i - 1])) throw Error(Errc::ConfigParseError, "eps grid must be descending");
  }
  return grid;
}

Backend parse_backend(const std::string& name) {
  if (name == "closed-form" || name == "closed_form") return Backend::closed_form;
  if (name == "regression") return Backend::regression;
  throw Error(Errc::ConfigParseError, "unknown backend '" + name + "'");
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::ConfigParseError, e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg;
  bool has_market = false;
  for (const auto& [name, sec] : tree) {
    if (sec.empty() && !sec.data().empty()) {
      throw Error(Errc::ConfigParseError, "key '" + name + "' outside a section");
    }
    if (name == "market") {
      has_market = true;
      parse_market(sec, cfg.market);
    } else if (name == "numerics") {
      parse_numerics(sec, cfg);
    } else if (name == "run") {
      parse_run(sec, cfg);
    } else {
      throw Error(Errc::ConfigParseError, "unknown section [" + name + "]");
    }
  }
  if (!has_market) throw Error(Errc::ConfigParseError, "missing [market] section");
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string canonical_config(const RunConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  const MarketSpec& m = c.market;
  const NumericsConfig& n = c.numerics;
  out << "market.r=" << m.r << "\nmarket.a=" << m.a << "\nmarket.sigma=" << m.sigma << "\nmarket.rho=" << m.rho
      << "\nmarket.k=" << m.k << "\nmarket.theta=" << m.theta << "\nmarket.b=" << m.b << "\nmarket.z0=" << m.z0
      << "\nmarket.complete_market_mode=" << m.complete_market_mode << "\nnumerics.dt=" << n.dt
      << "\nnumerics.n_paths=" << n.n_paths << "\nnumerics.seed=" << n.seed
      << "\nnumerics.horizon_tol=" << n.horizon_tol << "\nnumerics.ridge=" << c.ridge << "\nrun.eps_grid=";
  for (std::size_t i = 0; i < c.eps_grid.size(); ++i) out << (i ? "," : "") << c.eps_grid[i];
  out << "\nrun.backend=" << backend_name(c.backend) << '\n';
  return out.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace logkw
