#include "orbitroa/pipeline.hpp"

#include <cmath>
#include <memory>
#include <random>

#include "orbitroa/error.hpp"
#include "orbitroa/json_util.hpp"
#include "orbitroa/parallel.hpp"

namespace orbitroa {

using Eigen::VectorXd;

namespace {

int segment_of_phase(const PeriodicOrbit& orbit, int phase) {
  for (int k = 0; k < orbit.num_segments(); ++k)
    if (orbit.segments()[k].phase == phase) return k;
  return 0;
}

}  // namespace

Feedback transverse_feedback(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                             const HybridModel& model, const FeedbackGain& gain) {
  auto hint = std::make_shared<double>(-1.0);
  return [&family, &orbit, &model, &gain, hint](int phase, double, const VectorXd& x) -> VectorXd {
    const int seg = family.hybrid ? segment_of_phase(orbit, phase) : 0;
    double h = *hint;
    if (h < 0) h = orbit.nearest_time(x);
    try {
      SurfacePoint sp = tau_project(family, orbit, model, x, h, seg);
      *hint = sp.tau;
      TauFrame fr = frame_at(family, orbit, model, sp.seg, sp.tau, &gain);
      return fr.us - fr.K * sp.xp;
    } catch (const Error&) {
      *hint = -1.0;
      return orbit.u_nominal();
    }
  };
}

double level_crossing(const Polynomial& V, const VectorXd& e) {
  // Coefficients of s -> V(s e).
  std::vector<double> a(V.degree() + 1, 0.0);
  for (const auto& [m, c] : V.terms()) {
    double v = c;
    for (int i = 0; i < m.nvars(); ++i) v *= std::pow(e(i), m.exponents[i]);
    a[m.degree()] += v;
  }
  auto g = [&](double s) {
    double acc = 0.0;
    for (int k = static_cast<int>(a.size()) - 1; k >= 0; --k) acc = acc * s + a[k];
    return acc - 1.0;
  };
  double hi = 1e-3;
  while (g(hi) < 0) {
    hi *= 2;
    if (hi > 1e8) fail(ErrorKind::kNumerical, "level set unbounded along a sampled direction");
  }
  double lo = 0.0;
  // The first crossing can hide below hi for non-monotone V; scan first.
  const int scan = 200;
  for (int k = 1; k <= scan; ++k) {
    double s = hi * k / scan;
    if (g(s) >= 0) {
      hi = s;
      lo = hi - hi / k;
      break;
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ValidationResult validate_certificate(const CertProblem& pb, const Certificate& cert,
                                      const ValidationOptions& opt) {
  require(pb.model && pb.orbit && pb.family, "validate: incomplete problem");
  require(opt.samples > 0, "validate: sample count must be positive");
  require(opt.periods > 0, "validate: number of periods must be positive");
  require(!cert.samples.empty(), "validate: certificate has no samples");
  const PeriodicOrbit& orbit = *pb.orbit;
  const SurfaceFamily& fam = *pb.family;
  const HybridModel& model = *pb.model;
  const int dim = fam.n - 1;
  const double T = orbit.period();

  ValidationResult res;
  res.samples = opt.samples;
  res.periods = opt.periods;
  res.tol = opt.tol;
  res.seed = opt.seed;
  res.hybrid = fam.hybrid;
  res.details.resize(opt.samples);

  // All random draws happen up front, in order, so results do not depend on
  // the thread count.
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& s : res.details) {
    double tau = T * uni(rng);
    s.seg = fam.hybrid ? orbit.segment_at(tau) : 0;
    s.tau = tau;
    VectorXd e(dim);
    for (int i = 0; i < dim; ++i) e(i) = nd(rng);
    e.normalize();
    s.xp = level_crossing(cert.V_at(s.seg, s.tau), e) * e;
    s.x0 = from_transverse(fam, orbit, model, s.xp, s.seg, s.tau);
  }

  const int ns = orbit.num_segments();
  parallel_for(opt.samples, [&](int idx) {
    ValidationSample& s = res.details[idx];
    FlowOptions fo;
    fo.ode.rtol = 1e-10;
    fo.ode.atol = 1e-12;
    fo.u_open_loop = orbit.u_nominal();
    Feedback fb;
    if (pb.gain && !pb.gain->empty()) fb = transverse_feedback(fam, orbit, model, *pb.gain);
    // Off the orbit a cycle does not take T, so hybrid runs count impact
    // cycles (the step-to-step return map) with a generous time cap.
    double horizon = opt.periods * T;
    if (fam.hybrid) {
      fo.stop_after_impacts = static_cast<int>(std::ceil(opt.periods * ns));
      horizon *= 4.0;
    }
    try {
      FlowResult fr = hybrid_flow(model, segment_phase(orbit, s.seg), s.x0, horizon,
                                  fb ? &fb : nullptr, fo);
      s.x_final = fr.x;
      s.final_distance = orbit.distance(fr.x);
      s.converged = s.final_distance < opt.tol;
      s.impacts = static_cast<int>(fr.impacts.size());
      for (const auto& imp : fr.impacts) {
        const int k = segment_of_phase(orbit, imp.phase);
        const int k2 = (k + 1) % ns;
        try {
          SurfacePoint a = tau_project(fam, orbit, model, imp.pre, fam.segments[k].tau.back(), k);
          SurfacePoint b = tau_project(fam, orbit, model, imp.post, fam.segments[k2].tau.front(), k2);
          const double vm = cert.V_at(k, a.tau).evaluate(a.xp);
          if (vm > 1.0) continue;  // outside the certified set
          const double vp = cert.V_at(k2, b.tau).evaluate(b.xp);
          ++s.impacts_checked;
          s.max_v_jump = s.impacts_checked == 1 ? vp - vm : std::max(s.max_v_jump, vp - vm);
          if (vp > vm + opt.impact_tol * (1.0 + vm)) ++s.v_increases;
        } catch (const Error&) {
          // Outside the transverse tube; V is not defined there.
        }
      }
    } catch (const Error& e) {
      s.error = e.what();
      s.converged = false;
      s.final_distance = std::numeric_limits<double>::infinity();
    }
  });
  for (const auto& s : res.details) {
    res.converged += s.converged;
    res.impacts_checked += s.impacts_checked;
    res.v_increases += s.v_increases;
  }
  return res;
}

nlohmann::json validation_to_json(const ValidationResult& r, bool with_samples) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["converged"] = r.converged;
  j["fraction"] = r.fraction();
  j["periods"] = r.periods;
  j["horizon"] = r.hybrid ? "impact cycles" : "orbit periods";
  j["tolerance"] = r.tol;
  j["seed"] = r.seed;
  j["impacts_checked"] = r.impacts_checked;
  j["v_increases"] = r.v_increases;
  j["ok"] = r.ok();
  if (with_samples) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : r.details) {
      nlohmann::json d;
      d["seg"] = s.seg;
      d["tau"] = s.tau;
      d["x_perp"] = eigen_to_json(s.xp);
      d["x0"] = eigen_to_json(s.x0);
      d["final_distance"] = std::isfinite(s.final_distance) ? nlohmann::json(s.final_distance)
                                                            : nlohmann::json(nullptr);
      d["converged"] = s.converged;
      d["impacts"] = s.impacts;
      d["impacts_checked"] = s.impacts_checked;
      d["v_increases"] = s.v_increases;
      d["max_v_jump"] = s.max_v_jump;
      if (!s.error.empty()) d["error"] = s.error;
      arr.push_back(d);
    }
    j["details"] = arr;
  }
  return j;
}

}  // namespace orbitroa
