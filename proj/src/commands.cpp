#include "orbitroa/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/json_util.hpp"
#include "orbitroa/periodic_lyap.hpp"
#include "orbitroa/pipeline.hpp"
#include "orbitroa/sosprog.hpp"
#include "orbitroa/surfopt.hpp"

namespace orbitroa {

namespace fs = std::filesystem;
using Eigen::VectorXd;

// ---------------------------------------------------------------- options

namespace {

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidArgument, "--" + key + ": expected a number, got '" + v + "'");
  }
}

long parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorKind::kInvalidArgument, "--" + key + ": expected an integer, got '" + v + "'");
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(ErrorKind::kInvalidArgument, "--" + key + ": expected true/false, got '" + v + "'");
}

}  // namespace

void set_option(RunConfig& c, const std::string& key, const std::string& v) {
  if (key == "model") c.model = v;
  else if (key == "orbit") c.orbit = v;
  else if (key == "guess") c.guess = v;
  else if (key == "z") {
    require(v == "orthogonal" || v == "file" || v == "optimize",
            "--z: expected orthogonal, file or optimize, got '" + v + "'");
    c.z = v;
  } else if (key == "z-file" || key == "z_file") c.z_file = v;
  else if (key == "weights") c.weights = v;
  else if (key == "gain") c.gain = v;
  else if (key == "cert" || key == "certificate") c.cert = v;
  else if (key == "out") c.out = v;
  else if (key == "taus") {
    long n = parse_int(key, v);
    require(n >= 4, "--taus: need at least 4 samples per segment");
    c.taus = static_cast<int>(n);
  } else if (key == "max-taus" || key == "max_taus") c.max_taus = static_cast<int>(parse_int(key, v));
  else if (key == "refine-taus" || key == "refine_taus") c.refine_taus = parse_bool(key, v);
  else if (key == "vdeg") {
    long d = parse_int(key, v);
    require(d == 2 || d == 4, "--vdeg: V degree must be 2 or 4");
    c.vdeg = static_cast<int>(d);
  } else if (key == "deltas") {
    auto d = parse_list(key, v);
    require(d.size() == 3, "--deltas: expected three comma-separated values");
    for (int i = 0; i < 3; ++i) {
      require(d[i] > 0, "--deltas: margins must be positive");
      c.deltas[i] = d[i];
    }
  } else if (key == "taylor-degree" || key == "taylor_degree") c.taylor_degree = static_cast<int>(parse_int(key, v));
  else if (key == "iterations") c.max_iterations = static_cast<int>(parse_int(key, v));
  else if (key == "seed") {
    long s = parse_int(key, v);
    require(s >= 0, "--seed: must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  } else if (key == "samples") c.samples = static_cast<int>(parse_int(key, v));
  else if (key == "periods") c.periods = parse_double(key, v);
  else if (key == "p") c.p = static_cast<int>(parse_int(key, v));
  else if (key == "x0") c.x0 = parse_list(key, v);
  else if (key == "duration") c.duration = parse_double(key, v);
  else if (key == "dt" || key == "sample_dt") c.sample_dt = parse_double(key, v);
  else fail(ErrorKind::kInvalidArgument, "unknown option '" + key + "'");
}

// ---------------------------------------------------------------- context

namespace {

struct Context {
  std::optional<HybridModel> model;
  PeriodicOrbit orbit;
  std::unique_ptr<SurfaceFamily> family;
  FeedbackGain gain;
  std::optional<SurfaceOptResult> zopt;
};

fs::path out_dir(const RunConfig& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory '" + c.out + "': " + ec.message());
  return p;
}

std::string out_file(const RunConfig& c, const std::string& name) {
  return (out_dir(c) / name).string();
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

void load_model(const RunConfig& c, Context& ctx) {
  require(!c.model.empty(), "--model is required");
  ctx.model.emplace(load_model_file(c.model));
}

PeriodicOrbit shoot(const RunConfig& c, const HybridModel& m) {
  require(!c.guess.empty(), "an orbit needs --orbit FILE or --guess (file or x1,...,xn,T)");
  VectorXd x0;
  double T = 0.0;
  if (fs::exists(c.guess)) {
    nlohmann::json j = read_json_file(c.guess);
    require(j.contains("x0") && j.contains("period"), "guess file: expected 'x0' and 'period'");
    x0 = json_to_vector(j.at("x0"), "guess.x0");
    T = j.at("period").get<double>();
  } else {
    auto v = parse_list("guess", c.guess);
    require(static_cast<int>(v.size()) == m.n() + 1,
            "--guess: expected " + std::to_string(m.n()) + " coordinates and a period");
    x0 = Eigen::Map<VectorXd>(v.data(), m.n());
    T = v.back();
  }
  require(x0.size() == m.n(), "guess: state dimension differs from the model");
  require(T > 0, "guess: period must be positive");
  return find_orbit(m, x0, T);
}

void load_orbit(const RunConfig& c, Context& ctx) {
  if (!c.orbit.empty()) {
    ctx.orbit = orbit_from_json(read_json_file(c.orbit));
    require(ctx.orbit.n() == ctx.model->n(), "orbit file: dimension differs from the model");
  } else {
    ctx.orbit = shoot(c, *ctx.model);
  }
}

void load_family(const RunConfig& c, Context& ctx) {
  ZSpec spec = ZSpec::orthogonal();
  if (c.z == "file") {
    require(!c.z_file.empty(), "--z file needs --z-file PATH");
    spec = ZSpec::from_json(read_json_file(c.z_file));
  } else if (c.z == "optimize") {
    SurfaceOptProblem pb = make_surface_problem(ctx.orbit, *ctx.model);
    SurfaceOptOptions opt;
    opt.p = c.p;
    ctx.zopt = optimize_z(pb, opt);
    spec = zgrid_spec(ctx.zopt->z);
  }
  ctx.family = std::make_unique<SurfaceFamily>(make_surfaces(ctx.orbit, *ctx.model, spec, c.seed));
}

void load_gain(const RunConfig& c, Context& ctx) {
  if (c.gain.empty()) return;
  ctx.gain = gain_from_json(read_json_file(c.gain));
  require(ctx.model->m() > 0, "--gain given for a model without inputs");
  require(ctx.gain.K.size() == ctx.family->segments.size(), "gain: segment count differs from the orbit");
  for (size_t k = 0; k < ctx.gain.K.size(); ++k)
    require(ctx.gain.K[k].size() == ctx.family->segments[k].tau.size(),
            "gain: knot count differs from the orbit");
}

Context full_context(const RunConfig& c) {
  Context ctx;
  load_model(c, ctx);
  load_orbit(c, ctx);
  load_family(c, ctx);
  load_gain(c, ctx);
  return ctx;
}

Weights load_weights(const RunConfig& c) {
  if (c.weights.empty()) return {};
  return weights_from_json(read_json_file(c.weights));
}

nlohmann::json multipliers_json(const Eigen::VectorXcd& ev) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < ev.size(); ++i)
    arr.push_back({{"re", ev(i).real()}, {"im", ev(i).imag()}, {"abs", std::abs(ev(i))}});
  return arr;
}

std::string moduli(const Eigen::VectorXcd& ev) {
  std::string s;
  for (int i = 0; i < ev.size(); ++i) s += (i ? "," : "") + fmt(std::abs(ev(i)));
  return s;
}

TransverseLTV linearization(const Context& ctx) {
  return transverse_linearization(*ctx.family, ctx.orbit, *ctx.model,
                                  ctx.gain.empty() ? nullptr : &ctx.gain);
}

CertOptions cert_options(const RunConfig& c) {
  CertOptions o;
  o.vdeg = c.vdeg;
  o.taus = c.taus;
  o.max_taus = std::max(c.max_taus, c.taus);
  o.refine_taus = c.refine_taus;
  for (int i = 0; i < 3; ++i) o.deltas[i] = c.deltas[i];
  o.taylor_degree = c.taylor_degree;
  o.max_iterations = c.max_iterations;
  o.weights = load_weights(c);
  return o;
}

CertProblem cert_problem(const Context& ctx, const CertOptions& o) {
  CertProblem pb{&*ctx.model, &ctx.orbit, ctx.family.get(), ctx.gain.empty() ? nullptr : &ctx.gain,
                 periodic_lyapunov(linearization(ctx), o.weights)};
  return pb;
}

void write_orbit(const RunConfig& c, const Context& ctx, Eigen::VectorXcd* mult = nullptr) {
  nlohmann::json j = orbit_to_json(ctx.orbit);
  Eigen::MatrixXd psi = monodromy(*ctx.model, ctx.orbit);
  Eigen::VectorXcd ev = floquet(psi);
  j["monodromy"] = eigen_to_json(psi);
  j["floquet"] = multipliers_json(ev);
  write_json_file(out_file(c, "orbit.json"), j);
  if (mult) *mult = ev;
}

}  // namespace

// ---------------------------------------------------------------- commands

CommandResult cmd_orbit(const RunConfig& c) {
  Context ctx;
  load_model(c, ctx);
  ctx.orbit = shoot(c, *ctx.model);
  Eigen::VectorXcd ev;
  write_orbit(c, ctx, &ev);
  return {"orbit: T=" + fmt(ctx.orbit.period(), 10) + " closure=" + fmt(ctx.orbit.closure(), 3) +
          " multipliers=" + moduli(ev)};
}

CommandResult cmd_translin(const RunConfig& c) {
  Context ctx = full_context(c);
  TransverseLTV ltv = linearization(ctx);
  Eigen::MatrixXd psi = transverse_monodromy(ltv);
  Eigen::VectorXcd ev = floquet(psi);
  nlohmann::json j = ltv_to_json(ltv);
  j["monodromy"] = eigen_to_json(psi);
  j["floquet"] = multipliers_json(ev);
  j["spectral_radius"] = spectral_radius(psi);
  double amax = 0.0;
  for (const auto& s : ltv.segments)
    for (const auto& A : s.A) amax = std::max(amax, A.cwiseAbs().maxCoeff());
  j["max_abs_A"] = amax;
  write_json_file(out_file(c, "surfaces.json"), surfaces_to_json(*ctx.family));
  write_json_file(out_file(c, "ltv.json"), j);
  return {"translin: dim=" + std::to_string(ltv.dim) + " spectral_radius=" + fmt(spectral_radius(psi)) +
          " multipliers=" + moduli(ev) + " max|A|=" + fmt(amax, 3)};
}

CommandResult cmd_seed(const RunConfig& c) {
  Context ctx = full_context(c);
  CertOptions o = cert_options(c);
  o.alternate = false;
  CertProblem pb = cert_problem(ctx, o);
  Certificate cert = certify(pb, o);
  nlohmann::json j;
  j["P"] = quadratic_to_json(pb.seed);
  j["rho"] = cert.seed_rho;
  j["r"] = cert.seed_r;
  j["taus"] = cert.taus;
  j["V"] = "x_perp' P(tau) x_perp / rho";
  j["certificate"] = certificate_to_json(cert);
  write_json_file(out_file(c, "seed.json"), j);
  return {"seed: rho=" + fmt(cert.seed_rho) + " r=" + fmt(cert.seed_r) + " taus=" +
          std::to_string(cert.taus)};
}

CommandResult cmd_verify(const RunConfig& c) {
  Context ctx = full_context(c);
  CertOptions o = cert_options(c);
  CertProblem pb = cert_problem(ctx, o);
  Certificate cert = certify(pb, o);
  write_json_file(out_file(c, "certificate.json"), certificate_to_json(cert));
  return {summary_line(cert), cert.valid()};
}

CommandResult cmd_stabilize(const RunConfig& c) {
  Context ctx;
  load_model(c, ctx);
  require(ctx.model->m() > 0, "no inputs: the model has no control inputs to stabilize with");
  load_orbit(c, ctx);
  load_family(c, ctx);
  TransverseLTV ltv = transverse_linearization(*ctx.family, ctx.orbit, *ctx.model);
  RiccatiResult ric = jump_riccati(ltv, load_weights(c));
  nlohmann::json g = gain_to_json(ric.gain, ric.P);
  g["open_loop_radius"] = ric.open_loop_radius;
  g["closed_loop_radius"] = ric.closed_loop_radius;
  g["P"] = quadratic_to_json(ric.P);
  const std::string gain_path = out_file(c, "gain.json");
  write_json_file(gain_path, g);
  if (c.orbit.empty()) write_orbit(c, ctx);
  nlohmann::json cl;
  cl["model"] = c.model;
  cl["orbit"] = c.orbit.empty() ? out_file(c, "orbit.json") : c.orbit;
  cl["gain"] = gain_path;
  cl["z"] = c.z;
  if (c.z == "file") cl["z_file"] = c.z_file;
  cl["feedback"] = "u = u*(tau) - K(tau) x_perp, tau from the transversal-surface projection";
  cl["open_loop_radius"] = ric.open_loop_radius;
  cl["closed_loop_radius"] = ric.closed_loop_radius;
  write_json_file(out_file(c, "closed_loop.json"), cl);
  return {"stabilize: open_loop_radius=" + fmt(ric.open_loop_radius) +
          " closed_loop_radius=" + fmt(ric.closed_loop_radius)};
}

CommandResult cmd_optimize_z(const RunConfig& c) {
  Context ctx;
  load_model(c, ctx);
  load_orbit(c, ctx);
  SurfaceOptProblem pb = make_surface_problem(ctx.orbit, *ctx.model);
  SurfaceOptOptions opt;
  opt.p = c.p;
  SurfaceOptResult r = optimize_z(pb, opt);
  write_json_file(out_file(c, "z_opt.json"), surface_opt_to_json(r, ctx.orbit, c.p));
  return {"optimize_z: cost " + fmt(r.cost_initial) + " -> " + fmt(r.cost_final) + " min_radius " +
          fmt(r.min_radius_initial) + " -> " + fmt(r.min_radius_final) + " iterations=" +
          std::to_string(r.iterations)};
}

CommandResult cmd_simulate(const RunConfig& c) {
  Context ctx;
  load_model(c, ctx);
  const HybridModel& m = *ctx.model;
  const bool have_orbit = !c.orbit.empty() || !c.guess.empty();
  if (have_orbit) load_orbit(c, ctx);
  VectorXd x0;
  if (!c.x0.empty()) {
    require(static_cast<int>(c.x0.size()) == m.n(), "--x0: dimension differs from the model");
    x0 = Eigen::Map<const VectorXd>(c.x0.data(), m.n());
  } else {
    require(have_orbit, "simulate needs --x0 or an orbit");
    x0 = ctx.orbit.segments()[0].x[0];
  }
  double duration = c.duration;
  if (duration <= 0) {
    require(have_orbit, "simulate needs --duration without an orbit");
    duration = 10.0 * ctx.orbit.period();
  }
  Feedback fb;
  if (!c.gain.empty()) {
    require(have_orbit, "closed-loop simulation needs the orbit");
    load_family(c, ctx);
    load_gain(c, ctx);
    fb = transverse_feedback(*ctx.family, ctx.orbit, m, ctx.gain);
  }
  FlowOptions fo;
  fo.sample_dt = c.sample_dt;
  if (have_orbit) fo.u_open_loop = ctx.orbit.u_nominal();
  const int phase = have_orbit ? ctx.orbit.segments()[0].phase : 0;
  FlowResult fr = hybrid_flow(m, phase, x0, duration, fb ? &fb : nullptr, fo);
  write_text_file(out_file(c, "trajectory.csv"), trajectory_csv(fr.samples, m.n()));
  write_json_file(out_file(c, "impacts.json"), impacts_to_json(fr.impacts));
  std::string s = "simulate: t=" + fmt(fr.t) + " samples=" + std::to_string(fr.samples.size()) +
                  " impacts=" + std::to_string(fr.impacts.size());
  if (have_orbit) s += " final_distance=" + fmt(ctx.orbit.distance(fr.x), 3);
  return {s};
}

CommandResult cmd_validate(const RunConfig& c) {
  require(c.samples > 0, "validate: sample count must be positive");
  require(!c.cert.empty(), "validate needs --cert certificate.json");
  Certificate cert = certificate_from_json(read_json_file(c.cert));
  Context ctx = full_context(c);
  require(cert.dim == ctx.family->n - 1, "certificate dimension differs from the model");
  require(cert.hybrid == ctx.family->hybrid, "certificate and orbit disagree on hybrid structure");
  CertProblem pb{&*ctx.model, &ctx.orbit, ctx.family.get(), ctx.gain.empty() ? nullptr : &ctx.gain, {}};
  ValidationOptions vo;
  vo.samples = c.samples;
  vo.periods = c.periods;
  vo.seed = c.seed;
  ValidationResult r = validate_certificate(pb, cert, vo);
  write_json_file(out_file(c, "validation.json"), validation_to_json(r));
  std::string s = "validation: converged=" + std::to_string(r.converged) + "/" +
                  std::to_string(r.samples) + " fraction=" + fixed3(r.fraction());
  if (r.hybrid)
    s += " impacts_checked=" + std::to_string(r.impacts_checked) +
         " v_increases=" + std::to_string(r.v_increases);
  return {s, r.ok()};
}

CommandResult cmd_pipeline(const RunConfig& cfg) {
  RunConfig c = cfg;
  std::string log;
  auto step = [&](const CommandResult& r) {
    log += r.summary + "\n";
    return r.positive;
  };
  if (c.orbit.empty()) {
    step(cmd_orbit(c));
    c.orbit = out_file(c, "orbit.json");
  }
  step(cmd_translin(c));
  // Stabilize first when the model is actuated and the open loop repels.
  if (c.gain.empty()) {
    Context ctx;
    load_model(c, ctx);
    if (ctx.model->m() > 0) {
      load_orbit(c, ctx);
      load_family(c, ctx);
      double rho = spectral_radius(transverse_monodromy(linearization(ctx)));
      if (!(rho < 1.0)) {
        step(cmd_stabilize(c));
        c.gain = out_file(c, "gain.json");
      }
    }
  }
  CommandResult v = cmd_verify(c);
  bool ok = step(v);
  if (ok) {
    c.cert = out_file(c, "certificate.json");
    ok = step(cmd_validate(c));
  }
  if (!log.empty() && log.back() == '\n') log.pop_back();
  return {log, ok};
}

}  // namespace orbitroa
