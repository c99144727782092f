#include "orbitroa/surfopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "orbitroa/error.hpp"
#include "orbitroa/grid.hpp"
#include "orbitroa/json_util.hpp"

namespace orbitroa {

using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double spacing(const std::vector<double>& t) {
  return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

double radius(const VectorXd& z, const VectorXd& dz, const VectorXd& f) {
  const double d = dz.norm();
  if (d == 0.0) return kInf;
  return std::abs(z.dot(f)) / d;
}

}  // namespace

double wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit, int seg,
                        size_t knot) {
  const auto& s = family.segments.at(seg);
  return radius(s.z.at(knot), s.dz.at(knot), orbit.segments().at(seg).f.at(knot));
}

double wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit, double tau) {
  const int k = orbit.segment_at(tau);
  const auto& s = family.segments[k];
  double t = tau;
  if (!family.hybrid) t = tau - family.period * std::floor(tau / family.period);
  t = std::clamp(t, s.tau.front(), s.tau.back());
  const size_t i = bracket(s.tau, t);
  const double a = (t - s.tau[i]) / (s.tau[i + 1] - s.tau[i]);
  VectorXd z = (1 - a) * s.z[i] + a * s.z[i + 1];
  VectorXd dz = (1 - a) * s.dz[i] + a * s.dz[i + 1];
  return radius(z, dz, orbit.field_in_segment(k, t));
}

double min_wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit) {
  double r = kInf;
  for (size_t k = 0; k < family.segments.size(); ++k)
    for (size_t i = 0; i < family.segments[k].z.size(); ++i)
      r = std::min(r, wellposed_radius(family, orbit, static_cast<int>(k), i));
  return r;
}

double default_shaping(const std::vector<double>& impact_times, double period, double tau) {
  if (impact_times.empty()) return 1.0;
  // The product of sin^2 terms peaks below 1 for several impacts; normalize
  // by its maximum on a fine grid.
  auto raw = [&](double t) {
    double v = 1.0;
    for (double ti : impact_times) {
      double s = std::sin(std::numbers::pi * (t - ti) / period);
      v *= s * s;
    }
    return v;
  };
  double mx = 0.0;
  for (int j = 0; j < 2000; ++j) mx = std::max(mx, raw(period * j / 2000.0));
  return mx > 0 ? raw(tau) / mx : 0.0;
}

SurfaceOptProblem make_surface_problem(const PeriodicOrbit& orbit, const HybridModel& model) {
  SurfaceOptProblem pb;
  pb.orbit = &orbit;
  pb.model = &model;
  const auto& segs = orbit.segments();
  const int ns = static_cast<int>(segs.size());
  const std::vector<double> impacts = orbit.hybrid() ? orbit.impact_times() : std::vector<double>{};
  double fmin = kInf;
  for (const auto& s : segs)
    for (const auto& f : s.f) fmin = std::min(fmin, f.norm());
  const double delta = 1e-3 * fmin;

  pb.z0.resize(ns);
  pb.phi.resize(ns);
  pb.pinned.resize(ns);
  for (int k = 0; k < ns; ++k) {
    const auto& s = segs[k];
    for (size_t i = 0; i < s.t.size(); ++i) {
      pb.z0[k].push_back(s.f[i] / s.f[i].norm());
      pb.phi[k].push_back(default_shaping(impacts, orbit.period(), s.t[i]));
    }
    pb.pinned[k].assign(s.t.size(), 0);
  }
  if (!orbit.hybrid()) return pb;

  // Impact knots aligned with the switching-plane normals, signed so that
  // z'f > 0 there.
  auto pin = [&](int k, size_t i, const VectorXd& c) {
    const VectorXd& f = segs[k].f[i];
    VectorXd z = c / c.norm();
    if (z.dot(f) < 0) z = -z;
    if (!(z.dot(f) > delta))
      fail(ErrorKind::kInvalidArgument,
           "surface optimization: impact alignment violates transversality at segment " +
               std::to_string(k));
    pb.z0[k][i] = z;
    pb.pinned[k][i] = 1;
  };
  for (int k = 0; k < ns; ++k) {
    const auto& surf = model.phase(segs[k].phase).surface;
    require(surf.has_value(), "surface optimization: hybrid segment without switching surface");
    pin(k, segs[k].t.size() - 1, surf->c_minus);
    pin((k + 1) % ns, 0, surf->c_plus);
  }
  return pb;
}

SurfaceCost surface_cost(const SurfaceOptProblem& pb, const ZGrid& z, int p, bool gradient) {
  const auto& segs = pb.orbit->segments();
  const bool periodic = !pb.orbit->hybrid();
  const int ns = static_cast<int>(segs.size());
  SurfaceCost out;

  // Ratios, weights and dz per knot.
  std::vector<std::vector<double>> r(ns), w(ns);
  std::vector<std::vector<VectorXd>> dz(ns);
  double wsum = 0.0;
  for (int k = 0; k < ns; ++k) {
    const auto& s = segs[k];
    const double h = spacing(s.t);
    dz[k] = fd_derivative(z[k], h, periodic);
    const size_t N = s.t.size();
    r[k].resize(N);
    w[k].resize(N);
    for (size_t i = 0; i < N; ++i) {
      const double zf = z[k][i].dot(s.f[i]);
      r[k][i] = zf > 0 ? dz[k][i].norm() / zf : kInf;
      w[k][i] = (i == 0 || i + 1 == N ? 0.5 * h : h) * pb.phi[k][i];
      wsum += (i == 0 || i + 1 == N ? 0.5 * h : h);
      if (w[k][i] > 0) out.max_ratio = std::max(out.max_ratio, pb.phi[k][i] * r[k][i]);
    }
  }
  if (!std::isfinite(out.max_ratio)) {
    out.cost = kInf;
    return out;
  }
  if (out.max_ratio == 0.0) {
    out.cost = 0.0;
  } else {
    // Scaled by the largest ratio to keep r^p representable.
    double rmax = 0.0;
    for (int k = 0; k < ns; ++k)
      for (size_t i = 0; i < r[k].size(); ++i)
        if (w[k][i] > 0) rmax = std::max(rmax, r[k][i]);
    double acc = 0.0;
    for (int k = 0; k < ns; ++k)
      for (size_t i = 0; i < r[k].size(); ++i)
        if (w[k][i] > 0) acc += w[k][i] * std::pow(r[k][i] / rmax, p);
    out.cost = rmax * std::pow(acc / wsum, 1.0 / p);
  }
  if (!gradient) return out;

  // dJ/dr_i = (w_i / W) (r_i / J)^(p-1).
  out.grad.resize(ns);
  for (int k = 0; k < ns; ++k) {
    const auto& s = segs[k];
    const size_t N = s.t.size();
    std::vector<VectorXd> wdz(N, VectorXd::Zero(z[k][0].size()));
    out.grad[k].assign(N, VectorXd::Zero(z[k][0].size()));
    if (out.cost == 0.0) continue;
    for (size_t i = 0; i < N; ++i) {
      if (w[k][i] == 0.0) continue;
      const double g = (w[k][i] / wsum) * std::pow(r[k][i] / out.cost, p - 1);
      const double zf = z[k][i].dot(s.f[i]);
      const double nd = dz[k][i].norm();
      out.grad[k][i] -= g * r[k][i] / zf * s.f[i];
      if (nd > 0) wdz[i] = g / (nd * zf) * dz[k][i];
    }
    auto back = fd_derivative_adjoint(wdz, spacing(s.t), periodic);
    for (size_t i = 0; i < N; ++i) out.grad[k][i] += back[i];
    if (periodic) {
      out.grad[k][0] += out.grad[k][N - 1];
      out.grad[k][N - 1] = out.grad[k][0];
    }
  }
  return out;
}

namespace {

// Tangent-space projection with pinned knots frozen.
ZGrid project(const SurfaceOptProblem& pb, const ZGrid& z, const ZGrid& g) {
  ZGrid out = g;
  for (size_t k = 0; k < z.size(); ++k)
    for (size_t i = 0; i < z[k].size(); ++i) {
      if (pb.pinned[k][i]) out[k][i].setZero();
      else out[k][i] -= z[k][i].dot(g[k][i]) * z[k][i];
    }
  return out;
}

double max_norm(const ZGrid& g) {
  double m = 0.0;
  for (const auto& s : g)
    for (const auto& v : s) m = std::max(m, v.norm());
  return m;
}

double sq_norm(const ZGrid& g) {
  double m = 0.0;
  for (const auto& s : g)
    for (const auto& v : s) m += v.squaredNorm();
  return m;
}

bool transversal(const SurfaceOptProblem& pb, const ZGrid& z, double delta) {
  const auto& segs = pb.orbit->segments();
  for (size_t k = 0; k < z.size(); ++k)
    for (size_t i = 0; i < z[k].size(); ++i)
      if (!(z[k][i].dot(segs[k].f[i]) > delta)) return false;
  return true;
}

double min_radius(const SurfaceOptProblem& pb, const ZGrid& z) {
  const auto& segs = pb.orbit->segments();
  const bool periodic = !pb.orbit->hybrid();
  double r = kInf;
  for (size_t k = 0; k < z.size(); ++k) {
    auto dz = fd_derivative(z[k], spacing(segs[k].t), periodic);
    for (size_t i = 0; i < z[k].size(); ++i) r = std::min(r, radius(z[k][i], dz[i], segs[k].f[i]));
  }
  return r;
}

}  // namespace

SurfaceOptResult optimize_z(const SurfaceOptProblem& pb, const SurfaceOptOptions& opt) {
  require(pb.orbit && pb.model, "optimize_z: incomplete problem");
  require(opt.p >= 2 && opt.p % 2 == 0, "optimize_z: p must be an even integer >= 2");
  const auto& segs = pb.orbit->segments();
  const bool periodic = !pb.orbit->hybrid();
  double delta = opt.delta;
  if (delta < 0) {
    double fmin = kInf;
    for (const auto& s : segs)
      for (const auto& f : s.f) fmin = std::min(fmin, f.norm());
    delta = 1e-3 * fmin;
  }
  for (const auto& s : pb.phi)
    for (double v : s) require(v >= 0.0, "optimize_z: shaping must be nonnegative");

  ZGrid z = pb.z0;
  for (auto& s : z)
    for (auto& v : s) v.normalize();
  if (!transversal(pb, z, delta))
    fail(ErrorKind::kInvalidArgument, "optimize_z: initial z violates transversality");

  SurfaceOptResult res;
  SurfaceCost c = surface_cost(pb, z, opt.p, true);
  res.cost_initial = c.cost;
  res.min_radius_initial = min_radius(pb, z);
  ZGrid g = project(pb, z, c.grad);
  double step = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double gn = max_norm(g);
    if (c.cost == 0.0 || gn <= opt.grad_tol * std::max(c.cost, 1e-300)) {
      res.converged = true;
      break;
    }
    // First trial moves the worst knot by at most 0.1 rad.
    if (step == 0.0) step = 0.1 / gn;
    const double g2 = sq_norm(g);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      ZGrid trial = z;
      for (size_t k = 0; k < z.size(); ++k) {
        for (size_t i = 0; i < z[k].size(); ++i) {
          if (pb.pinned[k][i]) continue;
          trial[k][i] = (z[k][i] - step * g[k][i]).normalized();
        }
        if (periodic) trial[k].back() = trial[k].front();
      }
      if (transversal(pb, trial, delta)) {
        SurfaceCost ct = surface_cost(pb, trial, opt.p, true);
        if (ct.cost <= c.cost - opt.armijo * step * g2) {
          z = std::move(trial);
          c = std::move(ct);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no descent left at machine precision
      break;
    }
    res.iterations = it + 1;
    g = project(pb, z, c.grad);
    step *= 2.0;
  }
  res.z = z;
  res.cost_final = c.cost;
  res.min_radius_final = min_radius(pb, z);
  res.projected_gradient = max_norm(g);
  return res;
}

ZSpec zgrid_spec(const ZGrid& z) {
  ZSpec s;
  s.kind = ZSpec::Kind::kGrid;
  s.z_grid = z;
  return s;
}

nlohmann::json surface_opt_to_json(const SurfaceOptResult& r, const PeriodicOrbit& orbit, int p) {
  nlohmann::json j;
  j["p"] = p;
  j["cost_initial"] = r.cost_initial;
  j["cost_final"] = r.cost_final;
  j["min_radius_initial"] = r.min_radius_initial;
  j["min_radius_final"] = r.min_radius_final;
  j["projected_gradient"] = r.projected_gradient;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  nlohmann::json segs = nlohmann::json::array();
  for (size_t k = 0; k < r.z.size(); ++k) {
    nlohmann::json s;
    s["phase"] = orbit.segments()[k].phase;
    s["tau"] = orbit.segments()[k].t;
    nlohmann::json zs = nlohmann::json::array();
    for (const auto& v : r.z[k]) zs.push_back(eigen_to_json(v));
    s["z"] = zs;
    segs.push_back(s);
  }
  j["segments"] = segs;
  return j;
}

}  // namespace orbitroa
