#include "orbitroa/transverse.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/grid.hpp"
#include "orbitroa/json_util.hpp"

namespace orbitroa {

Eigen::MatrixXd complete_basis(const Eigen::VectorXd& w) {
  const int n = static_cast<int>(w.size());
  Eigen::VectorXd v = w;
  v(0) -= 1.0;
  const double vv = v.squaredNorm();
  if (vv < 1e-28) return Eigen::MatrixXd::Identity(n, n);
  // Householder reflection taking e1 to w.
  return Eigen::MatrixXd::Identity(n, n) - (2.0 / vv) * v * v.transpose();
}

Eigen::MatrixXd build_basis(const Eigen::VectorXd& z, const Eigen::MatrixXd& eta) {
  const int n = static_cast<int>(z.size());
  Eigen::MatrixXd Pi(n - 1, n);
  if (n == 2) {
    Pi << -z(1), z(0);
    return Pi;
  }
  require(eta.rows() == n && eta.cols() == n, "build_basis: basis dimension");
  const Eigen::VectorXd e1 = eta.col(0);
  const double den = 1.0 + e1.dot(z);
  require(den > 1e-12, "build_basis: seed vector antipodal to z");
  for (int j = 1; j < n; ++j) {
    const double a = eta.col(j).dot(z) / den;
    Pi.row(j - 1) = (eta.col(j) - a * (e1 + z)).transpose();
  }
  return Pi;
}

Eigen::MatrixXd basis_derivative(const Eigen::VectorXd& z, const Eigen::VectorXd& dz,
                                 const Eigen::MatrixXd& eta) {
  const int n = static_cast<int>(z.size());
  Eigen::MatrixXd dPi(n - 1, n);
  if (n == 2) {
    dPi << -dz(1), dz(0);
    return dPi;
  }
  const Eigen::VectorXd e1 = eta.col(0);
  const double den = 1.0 + e1.dot(z);
  const double dden = e1.dot(dz);
  for (int j = 1; j < n; ++j) {
    const double num = eta.col(j).dot(z);
    const double a = num / den;
    const double da = (eta.col(j).dot(dz) * den - num * dden) / (den * den);
    dPi.row(j - 1) = (-da * (e1 + z) - a * dz).transpose();
  }
  return dPi;
}

Eigen::VectorXd pick_w(const std::vector<Eigen::VectorXd>& z, int n, std::uint64_t seed) {
  require(n >= 3, "pick_w: only needed for n >= 3");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  // Among the first admissible draws keep the one farthest from antipodal to
  // z: the basis formula divides by 1 + w'z, and a small denominator makes
  // Pi(tau) spin faster than any tau grid resolves.
  constexpr int kCandidates = 64;
  Eigen::VectorXd best;
  double best_margin = -1.0;
  int found = 0;
  for (int draw = 0; draw < 10000 && found < kCandidates; ++draw) {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = gauss(rng);
    const double nw = w.norm();
    if (nw < 1e-12) continue;
    w /= nw;
    bool ok = true;
    double margin = 2.0;
    for (const auto& zi : z) {
      const double c = w.dot(zi);
      if (1.0 - std::abs(c) < 1e-3) {
        ok = false;
        break;
      }
      margin = std::min(margin, 1.0 + c);
    }
    if (!ok) continue;
    ++found;
    if (margin > best_margin) best_margin = margin, best = w;
  }
  if (found == 0) fail(ErrorKind::kNumerical, "pick_w: no admissible basis seed after 10000 draws");
  return best;
}

ZSpec ZSpec::from_json(const nlohmann::json& j) {
  ZSpec s;
  if (j.contains("z_constant")) {
    s.kind = Kind::kConstant;
    s.z_constant = json_to_vector(j.at("z_constant"), "z_constant");
    return s;
  }
  if (j.contains("segments")) {
    s.kind = Kind::kGrid;
    const auto& segs = j.at("segments");
    require(segs.is_array(), "z file: segments must be an array");
    for (size_t k = 0; k < segs.size(); ++k) {
      const std::string where = "segments[" + std::to_string(k) + "].z";
      require(segs[k].contains("z"), where + ": missing");
      std::vector<Eigen::VectorXd> col;
      for (size_t i = 0; i < segs[k]["z"].size(); ++i) {
        col.push_back(json_to_vector(segs[k]["z"][i], where));
      }
      s.z_grid.push_back(std::move(col));
    }
    return s;
  }
  fail(ErrorKind::kParse, "z file: expected 'z_constant' or 'segments'");
}

namespace {

bool parallel(const Eigen::VectorXd& z, const Eigen::VectorXd& c, double tol) {
  return std::abs(1.0 - std::abs(z.dot(c) / c.norm())) <= tol;
}

double knot_spacing(const std::vector<double>& t) {
  return (t.back() - t.front()) / static_cast<double>(t.size() - 1);
}

}  // namespace

SurfaceFamily make_surfaces(const PeriodicOrbit& orbit, const HybridModel& model,
                            const ZSpec& spec, std::uint64_t seed) {
  const int n = orbit.n();
  require(n >= 2, "transverse coordinates need n >= 2");
  require(model.n() == n, "make_surfaces: model and orbit dimensions differ");
  SurfaceFamily fam;
  fam.n = n;
  fam.period = orbit.period();
  fam.hybrid = orbit.hybrid();
  fam.orthogonal = spec.kind == ZSpec::Kind::kOrthogonal;
  const auto& osegs = orbit.segments();
  if (spec.kind == ZSpec::Kind::kConstant) {
    require(spec.z_constant.size() == n, "z_constant: dimension mismatch");
    require(spec.z_constant.norm() > 0, "z_constant: zero vector");
  }
  if (spec.kind == ZSpec::Kind::kGrid) {
    require(spec.z_grid.size() == osegs.size(), "z grid: segment count differs from the orbit");
  }

  double min_f = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < osegs.size(); ++k) {
    const auto& os = osegs[k];
    SurfaceSegment s;
    s.phase = os.phase;
    s.tau = os.t;
    const size_t N = os.t.size();
    if (spec.kind == ZSpec::Kind::kGrid) {
      require(spec.z_grid[k].size() == N,
              "z grid: segment " + std::to_string(k) + " has " +
                  std::to_string(spec.z_grid[k].size()) + " samples, orbit has " +
                  std::to_string(N));
    }
    for (size_t i = 0; i < N; ++i) {
      Eigen::VectorXd z;
      switch (spec.kind) {
        case ZSpec::Kind::kOrthogonal: z = os.f[i]; break;
        case ZSpec::Kind::kConstant: z = spec.z_constant; break;
        case ZSpec::Kind::kGrid: z = spec.z_grid[k][i]; break;
      }
      require(z.size() == n, "z: dimension mismatch");
      const double nz = z.norm();
      require(nz > 0 && std::isfinite(nz), "z: zero or non-finite vector");
      s.z.push_back(z / nz);
      min_f = std::min(min_f, os.f[i].norm());
    }
    s.dz = fd_derivative(s.z, knot_spacing(s.tau), !orbit.hybrid());
    fam.segments.push_back(std::move(s));
  }

  if (orbit.hybrid()) {
    const int ns = static_cast<int>(fam.segments.size());
    for (int k = 0; k < ns; ++k) {
      const auto& surf = model.phase(fam.segments[k].phase).surface;
      require(surf.has_value(), "hybrid orbit segment without switching surface");
      const Eigen::VectorXd& zm = fam.segments[k].z.back();
      const Eigen::VectorXd& zp = fam.segments[(k + 1) % ns].z.front();
      if (!parallel(zm, surf->c_minus, 1e-8) || !parallel(zp, surf->c_plus, 1e-8)) {
        std::ostringstream os;
        os << "alignment violation at impact " << k
           << ": z must be parallel to the switching-plane normals";
        fail(ErrorKind::kInvalidArgument, os.str());
      }
    }
  }

  fam.delta = 1e-3 * min_f;
  fam.min_zf = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < osegs.size(); ++k) {
    for (size_t i = 0; i < osegs[k].f.size(); ++i) {
      fam.min_zf = std::min(fam.min_zf, fam.segments[k].z[i].dot(osegs[k].f[i]));
    }
  }
  if (!(fam.min_zf > fam.delta)) {
    std::ostringstream os;
    os << "transversality violation: min z'f = " << fam.min_zf << " <= delta = " << fam.delta;
    fail(ErrorKind::kInvalidArgument, os.str());
  }

  if (n >= 3) {
    std::vector<Eigen::VectorXd> all;
    for (const auto& s : fam.segments) all.insert(all.end(), s.z.begin(), s.z.end());
    fam.w = pick_w(all, n, seed);
    fam.eta = complete_basis(fam.w);
  }
  for (auto& s : fam.segments) {
    for (size_t i = 0; i < s.z.size(); ++i) {
      s.Pi.push_back(build_basis(s.z[i], fam.eta));
      s.dPi.push_back(basis_derivative(s.z[i], s.dz[i], fam.eta));
      const Eigen::MatrixXd& P = s.Pi.back();
      const double orth = (P * P.transpose() - Eigen::MatrixXd::Identity(n - 1, n - 1))
                              .cwiseAbs()
                              .maxCoeff();
      if (orth > 1e-10 || (P * s.z[i]).cwiseAbs().maxCoeff() > 1e-10) {
        fail(ErrorKind::kNumerical, "basis lost orthonormality");
      }
    }
  }
  return fam;
}

nlohmann::json surfaces_to_json(const SurfaceFamily& fam) {
  nlohmann::json j;
  j["n"] = fam.n;
  j["period"] = fam.period;
  j["hybrid"] = fam.hybrid;
  j["orthogonal"] = fam.orthogonal;
  j["w"] = fam.w.size() ? eigen_to_json(fam.w) : nlohmann::json(nullptr);
  j["delta"] = fam.delta;
  j["min_zf"] = fam.min_zf;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : fam.segments) {
    nlohmann::json js;
    js["phase"] = s.phase;
    js["tau"] = s.tau;
    js["z"] = nlohmann::json::array();
    js["dz"] = nlohmann::json::array();
    js["Pi"] = nlohmann::json::array();
    for (size_t i = 0; i < s.z.size(); ++i) {
      js["z"].push_back(eigen_to_json(s.z[i]));
      js["dz"].push_back(eigen_to_json(s.dz[i]));
      js["Pi"].push_back(eigen_to_json(s.Pi[i]));
    }
    j["segments"].push_back(std::move(js));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Frames

namespace {

void fill_dynamic(TauFrame& fr, const PeriodicOrbit& orbit, const HybridModel& model) {
  fr.us = orbit.u_nominal();
  fr.fs = model.field(fr.phase, fr.xs, fr.us);
}

}  // namespace

TauFrame frame_at_knot(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                       const HybridModel& model, int seg, size_t knot, const FeedbackGain* gain) {
  const auto& s = fam.segments.at(seg);
  TauFrame fr;
  fr.seg = seg;
  fr.phase = s.phase;
  fr.tau = s.tau.at(knot);
  fr.xs = orbit.segments()[seg].x[knot];
  fill_dynamic(fr, orbit, model);
  fr.z = s.z[knot];
  fr.dz = s.dz[knot];
  fr.Pi = s.Pi[knot];
  fr.dPi = s.dPi[knot];
  if (gain && !gain->empty()) fr.K = gain->K.at(seg).at(knot);
  return fr;
}

TauFrame frame_at(const SurfaceFamily& fam, const PeriodicOrbit& orbit, const HybridModel& model,
                  int seg, double tau, const FeedbackGain* gain) {
  const auto& s = fam.segments.at(seg);
  tau = std::clamp(tau, s.tau.front(), s.tau.back());
  const size_t i = bracket(s.tau, tau);
  const double h = s.tau[i + 1] - s.tau[i];
  const double th = (tau - s.tau[i]) / h;
  if (th == 0.0) return frame_at_knot(fam, orbit, model, seg, i, gain);
  if (th == 1.0) return frame_at_knot(fam, orbit, model, seg, i + 1, gain);
  TauFrame fr;
  fr.seg = seg;
  fr.phase = s.phase;
  fr.tau = tau;
  fr.xs = orbit.state_in_segment(seg, tau);
  fill_dynamic(fr, orbit, model);
  // Cubic Hermite on z with dz, renormalized.
  const double t2 = th * th, t3 = t2 * th;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + th;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  const double d00 = (6 * t2 - 6 * th) / h, d10 = 3 * t2 - 4 * th + 1;
  const double d01 = (-6 * t2 + 6 * th) / h, d11 = 3 * t2 - 2 * th;
  Eigen::VectorXd zr = h00 * s.z[i] + h * h10 * s.dz[i] + h01 * s.z[i + 1] + h * h11 * s.dz[i + 1];
  Eigen::VectorXd dzr = d00 * s.z[i] + d10 * s.dz[i] + d01 * s.z[i + 1] + d11 * s.dz[i + 1];
  const double nz = zr.norm();
  fr.z = zr / nz;
  fr.dz = (dzr - fr.z * fr.z.dot(dzr)) / nz;
  fr.Pi = build_basis(fr.z, fam.eta);
  fr.dPi = basis_derivative(fr.z, fr.dz, fam.eta);
  if (gain && !gain->empty()) {
    const auto& K = gain->K.at(seg);
    fr.K = (1.0 - th) * K.at(i) + th * K.at(i + 1);
  }
  return fr;
}

SurfacePoint tau_project(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                         const HybridModel& model, const Eigen::VectorXd& x, double tau_hint,
                         int seg) {
  require(x.size() == fam.n, "tau_project: state dimension");
  const double T = fam.period;
  const bool wrap = !fam.hybrid;
  if (wrap) {
    seg = 0;
  } else if (seg < 0) {
    seg = orbit.segment_at(tau_hint);
  }
  const auto& s = fam.segments.at(seg);
  const double lo_lim = s.tau.front(), hi_lim = s.tau.back();
  auto wrapped = [&](double t) {
    if (!wrap) return std::clamp(t, lo_lim, hi_lim);
    double tw = std::fmod(t, T);
    if (tw < 0) tw += T;
    return tw;
  };
  auto resid = [&](double t, double* deriv) {
    TauFrame fr = frame_at(fam, orbit, model, seg, wrapped(t));
    const Eigen::VectorXd e = x - fr.xs;
    if (deriv) *deriv = fr.dz.dot(e) - fr.z.dot(fr.fs);
    return fr.z.dot(e);
  };

  double tau = wrap ? tau_hint : std::clamp(tau_hint, lo_lim, hi_lim);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const double max_step = T / 8.0;
  for (int it = 0; it < 200; ++it) {
    double dF = 0.0;
    const double F = resid(tau, &dF);
    if (std::abs(F) <= 1e-11 * std::max(1.0, x.norm())) {
      const double tw = wrapped(tau);
      TauFrame fr = frame_at(fam, orbit, model, seg, tw);
      return {fr.Pi * (x - fr.xs), wrap && tw >= T ? 0.0 : tw, seg};
    }
    // F decreases through the root (transversality), so the sign says
    // which side the root is on.
    if (F > 0) {
      lo = std::max(lo, tau);
    } else {
      hi = std::min(hi, tau);
    }
    double next;
    if (dF < 0) {
      next = tau - F / dF;
    } else {
      next = tau + (F > 0 ? max_step : -max_step);
    }
    next = std::clamp(next, tau - max_step, tau + max_step);
    if (std::isfinite(lo) && std::isfinite(hi) && !(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    if (!wrap) {
      next = std::clamp(next, lo_lim, hi_lim);
      if (next == tau) break;  // pinned at a segment end with nonzero residual
    }
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo < 1e-15 * std::max(1.0, T)) {
      tau = 0.5 * (lo + hi);
      if (std::abs(resid(tau, nullptr)) <= 1e-10) {
        const double tw = wrapped(tau);
        TauFrame fr = frame_at(fam, orbit, model, seg, tw);
        return {fr.Pi * (x - fr.xs), tw, seg};
      }
      break;
    }
    tau = next;
  }
  fail(ErrorKind::kNumerical, "tau projection did not converge (state outside the transverse tube)");
}

Eigen::VectorXd from_transverse(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                                const HybridModel& model, const Eigen::VectorXd& xp, int seg,
                                double tau) {
  TauFrame fr = frame_at(fam, orbit, model, seg, tau);
  return fr.xs + fr.Pi.transpose() * xp;
}

TransverseRhs transverse_rhs(const TauFrame& fr, const HybridModel& model,
                             const Eigen::VectorXd& xp) {
  const Eigen::VectorXd x = fr.xs + fr.Pi.transpose() * xp;
  Eigen::VectorXd u = fr.us;
  if (fr.K.size()) u -= fr.K * xp;
  const Eigen::VectorXd F = model.field(fr.phase, x, u);
  TransverseRhs r;
  r.num = fr.z.dot(F);
  r.den = fr.z.dot(fr.fs) - fr.dz.dot(fr.Pi.transpose() * xp);
  if (!(r.den > 0)) {
    fail(ErrorKind::kNumerical, "transverse coordinates break down (tau-rate denominator <= 0)");
  }
  r.taudot = r.num / r.den;
  r.xdot = r.taudot * (fr.dPi * (fr.Pi.transpose() * xp)) + fr.Pi * F - fr.Pi * fr.fs * r.taudot;
  return r;
}

void linearize_frame(const TauFrame& fr, const HybridModel& model, bool orthogonal,
                     Eigen::MatrixXd& A, Eigen::MatrixXd& B) {
  const Eigen::MatrixXd J = model.jacobian_x(fr.phase, fr.xs, fr.us);
  const Eigen::MatrixXd Ju = model.jacobian_u(fr.phase, fr.xs, fr.us);
  const Eigen::MatrixXd Pt = fr.Pi.transpose();
  const int n = static_cast<int>(fr.xs.size());
  A = fr.Pi * J * Pt;
  if (n > 2) A += fr.dPi * Pt;
  B = fr.Pi * Ju;
  if (!orthogonal) {
    const double zf = fr.z.dot(fr.fs);
    const Eigen::VectorXd pf = fr.Pi * fr.fs;
    const Eigen::RowVectorXd dtau_dx = (fr.z.transpose() * J * Pt + fr.dz.transpose() * Pt) / zf;
    A -= pf * dtau_dx;
    if (Ju.cols() > 0) B -= pf * ((fr.z.transpose() * Ju) / zf);
  }
  if (fr.K.size()) A -= B * fr.K;
}

TransverseLTV transverse_linearization(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                                       const HybridModel& model, const FeedbackGain* gain) {
  TransverseLTV ltv;
  ltv.dim = fam.n - 1;
  ltv.m = model.m();
  ltv.hybrid = fam.hybrid;
  ltv.period = fam.period;
  const int ns = static_cast<int>(fam.segments.size());
  for (int k = 0; k < ns; ++k) {
    const auto& s = fam.segments[k];
    LtvSegment ls;
    ls.tau = s.tau;
    for (size_t i = 0; i < s.tau.size(); ++i) {
      Eigen::MatrixXd A, B;
      linearize_frame(frame_at_knot(fam, orbit, model, k, i, gain), model, fam.orthogonal, A, B);
      if (!A.allFinite() || !B.allFinite()) fail(ErrorKind::kNumerical, "non-finite linearization");
      ls.A.push_back(std::move(A));
      ls.B.push_back(std::move(B));
      if (i + 1 < s.tau.size()) {
        const double tm = 0.5 * (s.tau[i] + s.tau[i + 1]);
        linearize_frame(frame_at(fam, orbit, model, k, tm, gain), model, fam.orthogonal, A, B);
        ls.A_mid.push_back(std::move(A));
        ls.B_mid.push_back(std::move(B));
      }
    }
    ltv.segments.push_back(std::move(ls));
    if (fam.hybrid) ltv.Ad.push_back(impact_linearization(fam, orbit, model, k));
  }
  return ltv;
}

Eigen::VectorXd impact_update(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                              const HybridModel& model, const Eigen::VectorXd& xp_minus, int i) {
  require(fam.hybrid, "impact_update: orbit has no impacts");
  const int ns = static_cast<int>(fam.segments.size());
  const auto& sm = fam.segments.at(i);
  const int ip = (i + 1) % ns;
  const Eigen::VectorXd xm = orbit.segments()[i].x.back() + sm.Pi.back().transpose() * xp_minus;
  const Eigen::VectorXd xplus = model.apply_delta(sm.phase, xm);
  return fam.segments[ip].Pi.front() * (xplus - orbit.segments()[ip].x.front());
}

Eigen::MatrixXd impact_linearization(const SurfaceFamily& fam, const PeriodicOrbit& orbit,
                                     const HybridModel& model, int i) {
  const int ns = static_cast<int>(fam.segments.size());
  const auto& sm = fam.segments.at(i);
  const int ip = (i + 1) % ns;
  const Eigen::MatrixXd D = model.delta_jacobian(sm.phase, orbit.segments()[i].x.back());
  return fam.segments[ip].Pi.front() * D * sm.Pi.back().transpose();
}

Eigen::MatrixXd interval_transition(const LtvSegment& s, size_t j) {
  const double h = s.tau[j + 1] - s.tau[j];
  const Eigen::MatrixXd& A0 = s.A[j];
  const Eigen::MatrixXd& Am = s.A_mid[j];
  const Eigen::MatrixXd& A1 = s.A[j + 1];
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(A0.rows(), A0.cols());
  const Eigen::MatrixXd k1 = A0;
  const Eigen::MatrixXd k2 = Am * (I + 0.5 * h * k1);
  const Eigen::MatrixXd k3 = Am * (I + 0.5 * h * k2);
  const Eigen::MatrixXd k4 = A1 * (I + h * k3);
  return I + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
}

Eigen::MatrixXd transverse_monodromy(const TransverseLTV& ltv) {
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Identity(ltv.dim, ltv.dim);
  for (size_t k = 0; k < ltv.segments.size(); ++k) {
    const auto& s = ltv.segments[k];
    for (size_t j = 0; j + 1 < s.tau.size(); ++j) Phi = interval_transition(s, j) * Phi;
    if (ltv.hybrid) Phi = ltv.Ad[k] * Phi;
  }
  return Phi;
}

double spectral_radius(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  return Eigen::EigenSolver<Eigen::MatrixXd>(M, false).eigenvalues().cwiseAbs().maxCoeff();
}

nlohmann::json ltv_to_json(const TransverseLTV& ltv) {
  nlohmann::json j;
  j["dim"] = ltv.dim;
  j["m"] = ltv.m;
  j["hybrid"] = ltv.hybrid;
  j["period"] = ltv.period;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : ltv.segments) {
    nlohmann::json js;
    js["tau"] = s.tau;
    js["A"] = nlohmann::json::array();
    js["B"] = nlohmann::json::array();
    for (size_t i = 0; i < s.tau.size(); ++i) {
      js["A"].push_back(eigen_to_json(s.A[i]));
      if (ltv.m > 0) js["B"].push_back(eigen_to_json(s.B[i]));
    }
    j["segments"].push_back(std::move(js));
  }
  j["Ad"] = nlohmann::json::array();
  for (const auto& M : ltv.Ad) j["Ad"].push_back(eigen_to_json(M));
  return j;
}

}  // namespace orbitroa
