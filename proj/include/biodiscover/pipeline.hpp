#pragma once

#include <string>
#include <vector>

#include "biodiscover/config.hpp"

namespace biodiscover::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitInternalError = 4;

struct RunResult {
  int exit_code = kExitOk;
  std::string report_json;  // machine-readable summary or error report
};

struct RunFlags {
  bool dry_run = false;
};

const std::vector<std::string>& subcommands();

// Dispatches one subcommand; writes that module's artifacts under
// cfg.output_dir and never throws (errors land in the report + exit code).
RunResult run_subcommand(const std::string& name, const config::RunConfig& cfg,
                         const RunFlags& flags = {});

}  // namespace biodiscover::pipeline
