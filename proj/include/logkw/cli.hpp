#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace logkw {

inline constexpr const char* kOutDirEnv = "LOGKW_OUT_DIR";

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on validation, configuration or IO errors, 2 when verification fails.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace logkw
