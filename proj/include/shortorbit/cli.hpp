#pragma once

#include "shortorbit/io.hpp"

namespace shortorbit::cli {

/// Process exit codes.
enum Exit : int {
  Ok = 0,
  CheckFailed = 1,
  EmptyInteriorExit = 2,
  ContinuationFailed = 3,
  TangentialIncidenceExit = 4,
  SchemaErrorExit = 5,
};

int exit_code(ErrorCode code);

// Each command writes its JSON into cfg.output_dir, human text to `log`, and returns the
// exit code. Errors are caught and mapped through exit_code.

/// inradius.json
int cmd_inradius(const io::RunConfig &cfg, std::ostream &log);
/// report.json, trace.csv, trajectory.json and (n = 2) trajectory.svg
int cmd_find(const io::RunConfig &cfg, std::ostream &log);
/// shot.json and (n = 2) shot.svg
int cmd_shoot(const io::RunConfig &cfg, std::ostream &log);
/// verdict.json
int cmd_verify(const io::RunConfig &cfg, std::ostream &log);

} // namespace shortorbit::cli
