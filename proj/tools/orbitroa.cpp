// Command-line front end. Talks to the library only through orbitroa.h.

#include <CLI11.hpp>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "orbitroa/orbitroa.h"

namespace {

struct Flag {
  const char* name;
  const char* help;
};

const Flag kFlags[] = {
    {"model", "hybrid model JSON"},
    {"orbit", "orbit JSON from a previous run (default: shoot from --guess)"},
    {"guess", "orbit guess: JSON {x0, period} or x1,...,xn,T"},
    {"z", "surface normals: orthogonal | file | optimize"},
    {"z-file", "z(tau) JSON for --z file"},
    {"taus", "tau samples per orbit segment"},
    {"max-taus", "upper bound for automatic tau refinement"},
    {"refine-taus", "double the tau grid until r settles (true/false)"},
    {"vdeg", "Lyapunov function degree (2 or 4)"},
    {"deltas", "margins for positivity, decrease, well-posedness: a,b,c"},
    {"taylor-degree", "Taylor degree for non-polynomial fields"},
    {"iterations", "maximum alternation steps"},
    {"seed", "random seed"},
    {"out", "output directory"},
    {"weights", "Q, Qi, R JSON for the Lyapunov/Riccati equations"},
    {"gain", "gain JSON: close the loop with u = u* - K x_perp"},
    {"cert", "certificate JSON (validate)"},
    {"samples", "Monte-Carlo samples (validate)"},
    {"periods", "simulated orbit periods or impact cycles (validate)"},
    {"p", "p-norm exponent for --z optimize / optimize_z"},
    {"x0", "initial state x1,...,xn (simulate)"},
    {"duration", "simulated time (simulate; default 10 periods)"},
    {"dt", "trajectory sample spacing (simulate)"},
};

struct Command {
  const char* name;
  const char* help;
};

const Command kCommands[] = {
    {"orbit", "find the periodic orbit by shooting"},
    {"translin", "transverse linearization and its multipliers"},
    {"seed", "quadratic seed from the periodic Lyapunov equation"},
    {"verify", "SoS certificate of an inner region-of-attraction estimate"},
    {"stabilize", "transverse LQR gain from the jump Riccati equation"},
    {"optimize_z", "optimize the surface normals z(tau)"},
    {"simulate", "simulate one trajectory"},
    {"validate", "Monte-Carlo check of a certificate"},
    {"pipeline", "orbit, translin, stabilize if needed, verify, validate"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orbitroa: orbital stability regions of hybrid limit cycles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", orbitroa_version());

  std::map<std::string, std::string> values;
  std::string chosen;
  for (const auto& c : kCommands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    for (const auto& f : kFlags) sub->add_option(std::string("--") + f.name, values[f.name], f.help);
    sub->callback([&chosen, name = c.name] { chosen = name; });
  }
  CLI11_PARSE(app, argc, argv);

  orbitroa_config* cfg = orbitroa_config_new();
  if (!cfg) {
    std::fprintf(stderr, "error: out of memory\n");
    return 1;
  }
  for (const auto& c : kCommands) {
    if (chosen != c.name) continue;
    CLI::App* sub = app.get_subcommand(c.name);
    for (const auto& f : kFlags) {
      if (sub->count(std::string("--") + f.name) == 0) continue;
      if (orbitroa_config_set(cfg, f.name, values[f.name].c_str()) != ORBITROA_OK) {
        std::fprintf(stderr, "error: %s\n", orbitroa_last_error());
        orbitroa_config_free(cfg);
        return 1;
      }
    }
  }

  char* summary = nullptr;
  orbitroa_status st = orbitroa_run(chosen.c_str(), cfg, &summary);
  orbitroa_config_free(cfg);
  const bool reported = summary != nullptr;
  if (reported) {
    std::printf("%s\n", summary);
    orbitroa_string_free(summary);
  }
  if (st == ORBITROA_OK) return 0;
  if (st == ORBITROA_INFEASIBLE) {
    // A "no" from the command itself was already printed as its report.
    if (!reported) std::fprintf(stderr, "%s\n", orbitroa_last_error());
    return 2;
  }
  std::fprintf(stderr, "error: %s\n", orbitroa_last_error());
  return 1;
}
