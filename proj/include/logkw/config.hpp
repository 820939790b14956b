#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "logkw/kw.hpp"
#include "logkw/model.hpp"

namespace logkw {

/// Parsed run configuration. The INI file has a required [market] section,
/// an optional [numerics] section and an optional [run] section.
struct RunConfig {
  MarketSpec market;
  NumericsConfig numerics;
  std::vector<double> eps_grid{0.2, 0.1, 0.05, 0.025};
  Backend backend = Backend::closed_form;
  double ridge = 1e-8;
  std::filesystem::path out_dir = "out";
  std::string format = "csv";
};

/// Throws ConfigParseError on malformed input, unknown keys or a missing
/// [market] section.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

std::vector<double> parse_eps_grid(const std::string& text);
Backend parse_backend(const std::string& name);

/// Canonical key=value listing of every effective setting that affects results.
std::string canonical_config(const RunConfig& cfg);

/// 16 hex digits of FNV-1a 64 over canonical_config().
std::string config_hash(const RunConfig& cfg);

}  // namespace logkw
