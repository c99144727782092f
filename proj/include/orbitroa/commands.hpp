#pragma once

// File-based pipeline commands behind the C API. Each command reads its
// inputs from the paths in RunConfig, writes JSON/CSV into `out` and returns
// a human-readable summary.

#include <cstdint>
#include <string>
#include <vector>

namespace orbitroa {

struct RunConfig {
  std::string model;
  std::string orbit;   // orbit.json; empty means shoot from `guess`
  std::string guess;   // {"x0": [...], "period": T} file or "x1,...,xn,T"
  std::string z = "orthogonal";  // orthogonal | file | optimize
  std::string z_file;
  std::string weights;  // {"Q", "Qi", "R"} file
  std::string gain;     // gain.json: closed loop u = u* - K x_perp
  std::string cert;     // certificate.json for validate
  std::string out = ".";
  int taus = 64;
  int max_taus = 256;
  bool refine_taus = true;
  int vdeg = 2;
  double deltas[3] = {-1.0, -1.0, -1.0};
  int taylor_degree = 5;
  int max_iterations = 10;
  std::uint64_t seed = 1;
  int samples = 500;
  double periods = 10.0;
  int p = 50;
  std::vector<double> x0;  // simulate
  double duration = 0.0;   // simulate; 0 means 10 periods
  double sample_dt = 0.01;
};

struct CommandResult {
  std::string summary;
  bool positive = true;  // false: the report was written but the answer is "no"
};

/// Sets one option from its CLI spelling ("taus", "vdeg", "deltas", ...).
void set_option(RunConfig& cfg, const std::string& key, const std::string& value);

CommandResult cmd_orbit(const RunConfig& cfg);
CommandResult cmd_translin(const RunConfig& cfg);
CommandResult cmd_seed(const RunConfig& cfg);
CommandResult cmd_verify(const RunConfig& cfg);
CommandResult cmd_stabilize(const RunConfig& cfg);
CommandResult cmd_optimize_z(const RunConfig& cfg);
CommandResult cmd_simulate(const RunConfig& cfg);
CommandResult cmd_validate(const RunConfig& cfg);
/// orbit -> translin -> (stabilize when actuated and unstable) -> verify -> validate.
CommandResult cmd_pipeline(const RunConfig& cfg);

}  // namespace orbitroa
