#include "orbitroa/orbitroa.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <map>
#include <new>
#include <optional>
#include <string>

#include "orbitroa/commands.hpp"
#include "orbitroa/error.hpp"
#include "orbitroa/hybridmodel.hpp"
#include "orbitroa/json_util.hpp"
#include "orbitroa/sosprog.hpp"

struct orbitroa_config {
  orbitroa::RunConfig cfg;
};
struct orbitroa_model {
  orbitroa::HybridModel model;
};
struct orbitroa_certificate {
  orbitroa::Certificate cert;
};

namespace {

thread_local std::string g_last_error;

orbitroa_status status_of(orbitroa::ErrorKind k) {
  using orbitroa::ErrorKind;
  switch (k) {
    case ErrorKind::kInvalidArgument: return ORBITROA_ERR_INVALID;
    case ErrorKind::kParse: return ORBITROA_ERR_PARSE;
    case ErrorKind::kIo: return ORBITROA_ERR_IO;
    case ErrorKind::kNumerical: return ORBITROA_ERR_NUMERICAL;
    case ErrorKind::kInfeasible: return ORBITROA_INFEASIBLE;
  }
  return ORBITROA_ERR_NUMERICAL;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

// Runs fn, translating exceptions into status codes and the thread-local message.
template <class F>
orbitroa_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const orbitroa::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ORBITROA_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ORBITROA_ERR_NUMERICAL;
  }
}

using CommandFn = orbitroa::CommandResult (*)(const orbitroa::RunConfig&);

const std::map<std::string, CommandFn>& commands() {
  static const std::map<std::string, CommandFn> table = {
      {"orbit", orbitroa::cmd_orbit},         {"translin", orbitroa::cmd_translin},
      {"seed", orbitroa::cmd_seed},           {"verify", orbitroa::cmd_verify},
      {"stabilize", orbitroa::cmd_stabilize}, {"optimize_z", orbitroa::cmd_optimize_z},
      {"simulate", orbitroa::cmd_simulate},   {"validate", orbitroa::cmd_validate},
      {"pipeline", orbitroa::cmd_pipeline},
  };
  return table;
}

}  // namespace

extern "C" {

const char* orbitroa_version(void) { return "0.1.0"; }

const char* orbitroa_last_error(void) { return g_last_error.c_str(); }

void orbitroa_string_free(char* s) { std::free(s); }

orbitroa_config* orbitroa_config_new(void) { return new (std::nothrow) orbitroa_config(); }

void orbitroa_config_free(orbitroa_config* cfg) { delete cfg; }

orbitroa_status orbitroa_config_set(orbitroa_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    orbitroa::require(cfg && key && value, "null argument");
    orbitroa::set_option(cfg->cfg, key, value);
    return ORBITROA_OK;
  });
}

orbitroa_status orbitroa_run(const char* command, const orbitroa_config* cfg, char** summary) {
  if (summary) *summary = nullptr;
  return guarded([&] {
    orbitroa::require(command && cfg, "null argument");
    auto it = commands().find(command);
    orbitroa::require(it != commands().end(), std::string("unknown command '") + command + "'");
    orbitroa::CommandResult r = it->second(cfg->cfg);
    if (summary) *summary = dup(r.summary);
    if (!r.positive) {
      g_last_error = r.summary;
      return ORBITROA_INFEASIBLE;
    }
    return ORBITROA_OK;
  });
}

orbitroa_status orbitroa_model_load(const char* path, orbitroa_model** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    orbitroa::require(path && out, "null argument");
    *out = new orbitroa_model{orbitroa::load_model_file(path)};
    return ORBITROA_OK;
  });
}

void orbitroa_model_free(orbitroa_model* model) { delete model; }
int orbitroa_model_states(const orbitroa_model* model) { return model ? model->model.n() : -1; }
int orbitroa_model_inputs(const orbitroa_model* model) { return model ? model->model.m() : -1; }
int orbitroa_model_phases(const orbitroa_model* model) {
  return model ? model->model.num_phases() : -1;
}

orbitroa_status orbitroa_certificate_load(const char* path, orbitroa_certificate** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    orbitroa::require(path && out, "null argument");
    *out = new orbitroa_certificate{orbitroa::certificate_from_json(orbitroa::read_json_file(path))};
    return ORBITROA_OK;
  });
}

void orbitroa_certificate_free(orbitroa_certificate* cert) { delete cert; }
double orbitroa_certificate_radius(const orbitroa_certificate* cert) {
  return cert ? cert->cert.r : -1.0;
}
int orbitroa_certificate_taus(const orbitroa_certificate* cert) {
  return cert ? cert->cert.taus : -1;
}
int orbitroa_certificate_valid(const orbitroa_certificate* cert) {
  return cert && cert->cert.valid() ? 1 : 0;
}

orbitroa_status orbitroa_certificate_summary(const orbitroa_certificate* cert, char** summary) {
  if (summary) *summary = nullptr;
  return guarded([&] {
    orbitroa::require(cert && summary, "null argument");
    *summary = dup(orbitroa::summary_line(cert->cert));
    return ORBITROA_OK;
  });
}

}  // extern "C"
