#include "orbitroa/periodic_lyap.hpp"

#include <cmath>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/grid.hpp"
#include "orbitroa/json_util.hpp"

namespace orbitroa {

namespace {

Eigen::MatrixXd or_identity(const Eigen::MatrixXd& M, int rows, const char* what) {
  if (M.size() == 0) return Eigen::MatrixXd::Identity(rows, rows);
  require(M.rows() == rows && M.cols() == rows, std::string(what) + ": dimension mismatch");
  require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, M.norm()),
          std::string(what) + ": must be symmetric");
  return M;
}

Eigen::MatrixXd sym(const Eigen::MatrixXd& M) { return 0.5 * (M + M.transpose()); }

// Right-hand side G with -dP/dtau = G(P; A, B).
using Generator =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd& P, const Eigen::MatrixXd& A,
                                  const Eigen::MatrixXd& B)>;

Eigen::MatrixXd rk4_back(const Generator& G, const Eigen::MatrixXd& P1, double h,
                         const Eigen::MatrixXd& A0, const Eigen::MatrixXd& Am,
                         const Eigen::MatrixXd& A1, const Eigen::MatrixXd& B0,
                         const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& B1) {
  const Eigen::MatrixXd k1 = G(P1, A1, B1);
  const Eigen::MatrixXd k2 = G(P1 + 0.5 * h * k1, Am, Bm);
  const Eigen::MatrixXd k3 = G(P1 + 0.5 * h * k2, Am, Bm);
  const Eigen::MatrixXd k4 = G(P1 + h * k3, A0, B0);
  return sym(P1 + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4));
}

// One backward pass over the period. P_end is the value at the end of the
// last segment (pre-impact for hybrid orbits); returns the propagated value
// at the same point one period earlier.
Eigen::MatrixXd sweep(const TransverseLTV& ltv, const Eigen::MatrixXd& P_end, const Generator& G,
                      const Eigen::MatrixXd& Qi, std::vector<QuadraticSegment>* out) {
  const int ns = static_cast<int>(ltv.segments.size());
  if (out) out->assign(ns, {});
  Eigen::MatrixXd P = P_end;
  for (int k = ns - 1; k >= 0; --k) {
    const LtvSegment& s = ltv.segments[k];
    const size_t N = s.tau.size();
    std::vector<Eigen::MatrixXd> Ps;
    if (out) Ps.resize(N);
    if (out) Ps[N - 1] = P;
    for (size_t j = N - 1; j-- > 0;) {
      P = rk4_back(G, P, s.tau[j + 1] - s.tau[j], s.A[j], s.A_mid[j], s.A[j + 1], s.B[j],
                   s.B_mid[j], s.B[j + 1]);
      if (out) Ps[j] = P;
    }
    if (out) {
      QuadraticSegment& q = (*out)[k];
      q.tau = s.tau;
      q.P = std::move(Ps);
      for (size_t j = 0; j < N; ++j) q.dP.push_back(sym(-G(q.P[j], s.A[j], s.B[j])));
    }
    if (ltv.hybrid) {
      const Eigen::MatrixXd& Ad = ltv.Ad[(k - 1 + ns) % ns];
      P = sym(Ad.transpose() * P * Ad + Qi);
    }
  }
  return P;
}

PeriodicQuadratic package(const TransverseLTV& ltv, std::vector<QuadraticSegment> segs,
                          const Eigen::MatrixXd& Q, const Eigen::MatrixXd& Qi,
                          const Eigen::MatrixXd& R) {
  PeriodicQuadratic pq;
  pq.dim = ltv.dim;
  pq.hybrid = ltv.hybrid;
  pq.period = ltv.period;
  pq.Q = Q;
  pq.Qi = Qi;
  pq.R = R;
  pq.segments = std::move(segs);
  for (const auto& s : pq.segments) {
    for (const auto& P : s.P) {
      if (!P.allFinite()) fail(ErrorKind::kNumerical, "non-finite periodic solution");
    }
  }
  const double lam = pq.min_eigenvalue();
  if (!(lam > 0)) {
    std::ostringstream os;
    os << "periodic solution is not positive definite (min eigenvalue " << lam << ")";
    fail(ErrorKind::kNumerical, os.str());
  }
  return pq;
}

}  // namespace

Eigen::MatrixXd PeriodicQuadratic::at(int seg, double tau) const {
  const QuadraticSegment& s = segments.at(seg);
  tau = std::clamp(tau, s.tau.front(), s.tau.back());
  const size_t i = bracket(s.tau, tau);
  const double h = s.tau[i + 1] - s.tau[i];
  const double th = (tau - s.tau[i]) / h;
  if (th == 0.0) return s.P[i];
  if (th == 1.0) return s.P[i + 1];
  const double t2 = th * th, t3 = t2 * th;
  const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + th;
  const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return sym(h00 * s.P[i] + h * h10 * s.dP[i] + h01 * s.P[i + 1] + h * h11 * s.dP[i + 1]);
}

double PeriodicQuadratic::min_eigenvalue() const {
  double lam = std::numeric_limits<double>::infinity();
  auto upd = [&](const Eigen::MatrixXd& P) {
    lam = std::min(lam, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff());
  };
  for (size_t k = 0; k < segments.size(); ++k) {
    const auto& s = segments[k];
    for (size_t j = 0; j < s.tau.size(); ++j) {
      upd(s.P[j]);
      if (j + 1 < s.tau.size()) {
        for (int r = 1; r < 4; ++r) {
          upd(at(static_cast<int>(k), s.tau[j] + (s.tau[j + 1] - s.tau[j]) * r / 4.0));
        }
      }
    }
  }
  return lam;
}

PeriodicQuadratic periodic_lyapunov(const TransverseLTV& ltv, const Weights& w) {
  const int d = ltv.dim;
  require(d >= 1, "periodic_lyapunov: empty transverse system");
  const Eigen::MatrixXd Q = or_identity(w.Q, d, "Q");
  const Eigen::MatrixXd Qi = or_identity(w.Qi, d, "Qi");
  const double radius = spectral_radius(transverse_monodromy(ltv));
  if (!(radius < 1.0)) {
    std::ostringstream os;
    os << "transverse linearization unstable (spectral radius " << radius << ")";
    fail(ErrorKind::kInfeasible, os.str());
  }
  Generator G = [&](const Eigen::MatrixXd& P, const Eigen::MatrixXd& A, const Eigen::MatrixXd&) {
    return Eigen::MatrixXd(A.transpose() * P + P * A + Q);
  };
  // The period map is affine in P_end: probe it on a basis of symmetric matrices.
  const int nb = d * (d + 1) / 2;
  const Eigen::MatrixXd c = sweep(ltv, Eigen::MatrixXd::Zero(d, d), G, Qi, nullptr);
  Eigen::MatrixXd L(nb, nb);
  Eigen::VectorXd rhs(nb);
  std::vector<std::pair<int, int>> idx;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b <= a; ++b) idx.emplace_back(a, b);
  for (int col = 0; col < nb; ++col) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(d, d);
    E(idx[col].first, idx[col].second) = 1.0;
    E(idx[col].second, idx[col].first) = 1.0;
    const Eigen::MatrixXd img = sweep(ltv, E, G, Qi, nullptr) - c;
    for (int row = 0; row < nb; ++row) L(row, col) = img(idx[row].first, idx[row].second);
  }
  for (int row = 0; row < nb; ++row) rhs(row) = c(idx[row].first, idx[row].second);
  const Eigen::VectorXd p =
      (Eigen::MatrixXd::Identity(nb, nb) - L).fullPivLu().solve(rhs);
  Eigen::MatrixXd P_end(d, d);
  for (int k = 0; k < nb; ++k) {
    P_end(idx[k].first, idx[k].second) = p(k);
    P_end(idx[k].second, idx[k].first) = p(k);
  }
  std::vector<QuadraticSegment> segs;
  sweep(ltv, P_end, G, Qi, &segs);
  return package(ltv, std::move(segs), Q, Qi, Eigen::MatrixXd());
}

RiccatiResult jump_riccati(const TransverseLTV& ltv, const Weights& w) {
  const int d = ltv.dim;
  require(ltv.m >= 1, "no inputs: the model has no control inputs to stabilize with");
  const Eigen::MatrixXd Q = or_identity(w.Q, d, "Q");
  const Eigen::MatrixXd Qi = or_identity(w.Qi, d, "Qi");
  const Eigen::MatrixXd R = or_identity(w.R, ltv.m, "R");
  Eigen::LLT<Eigen::MatrixXd> rllt(R);
  require(rllt.info() == Eigen::Success, "R must be positive definite");
  const Eigen::MatrixXd Rinv = rllt.solve(Eigen::MatrixXd::Identity(ltv.m, ltv.m));
  Generator G = [&](const Eigen::MatrixXd& P, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    const Eigen::MatrixXd PB = P * B;
    return Eigen::MatrixXd(A.transpose() * P + P * A - PB * Rinv * PB.transpose() + Q);
  };
  RiccatiResult res;
  res.open_loop_radius = spectral_radius(transverse_monodromy(ltv));
  Eigen::MatrixXd P_end = Eigen::MatrixXd::Identity(d, d);
  bool converged = false;
  for (int it = 0; it < 5000; ++it) {
    const Eigen::MatrixXd Pn = sweep(ltv, P_end, G, Qi, nullptr);
    ++res.sweeps;
    if (!Pn.allFinite() || Pn.norm() > 1e12) {
      fail(ErrorKind::kInfeasible,
           "Riccati sweep diverged: transverse linearization is not stabilizable");
    }
    const double change = (Pn - P_end).cwiseAbs().maxCoeff();
    P_end = Pn;
    if (change <= 1e-10 * std::max(1.0, Pn.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    fail(ErrorKind::kInfeasible,
         "Riccati sweep did not reach a periodic solution: transverse linearization is not "
         "stabilizable");
  }
  std::vector<QuadraticSegment> segs;
  sweep(ltv, P_end, G, Qi, &segs);
  res.P = package(ltv, std::move(segs), Q, Qi, R);
  for (size_t k = 0; k < ltv.segments.size(); ++k) {
    std::vector<Eigen::MatrixXd> Ks;
    for (size_t j = 0; j < ltv.segments[k].tau.size(); ++j) {
      Ks.push_back(Rinv * ltv.segments[k].B[j].transpose() * res.P.segments[k].P[j]);
    }
    res.gain.K.push_back(std::move(Ks));
  }
  res.closed_loop_radius = spectral_radius(transverse_monodromy(close_loop(ltv, res)));
  if (!(res.closed_loop_radius < 1.0)) {
    std::ostringstream os;
    os << "transverse LQR failed to stabilize (closed-loop spectral radius "
       << res.closed_loop_radius << ")";
    fail(ErrorKind::kInfeasible, os.str());
  }
  return res;
}

TransverseLTV close_loop(const TransverseLTV& ltv, const RiccatiResult& ric) {
  TransverseLTV cl = ltv;
  const Eigen::MatrixXd Rinv = ric.P.R.inverse();
  for (size_t k = 0; k < cl.segments.size(); ++k) {
    LtvSegment& s = cl.segments[k];
    for (size_t j = 0; j < s.tau.size(); ++j) s.A[j] -= s.B[j] * ric.gain.K[k][j];
    for (size_t j = 0; j + 1 < s.tau.size(); ++j) {
      const double tm = 0.5 * (s.tau[j] + s.tau[j + 1]);
      const Eigen::MatrixXd Km =
          Rinv * s.B_mid[j].transpose() * ric.P.at(static_cast<int>(k), tm);
      s.A_mid[j] -= s.B_mid[j] * Km;
    }
  }
  return cl;
}

LevelResult bisect_level(const std::function<bool(double)>& verify, double rho_min,
                         double rho_max, double rel_width) {
  require(rho_min > 0 && rho_max >= rho_min, "bisect_level: need 0 < rho_min <= rho_max");
  LevelResult r;
  ++r.evaluations;
  if (!verify(rho_min)) {
    std::ostringstream os;
    os << "no verified level: the seed fails already at rho = " << rho_min;
    fail(ErrorKind::kInfeasible, os.str());
  }
  ++r.evaluations;
  if (verify(rho_max)) {
    r.rho = rho_max;
    return r;
  }
  double lo = rho_min, hi = rho_max;
  while ((hi - lo) > rel_width * hi) {
    const double mid = 0.5 * (lo + hi);
    ++r.evaluations;
    if (verify(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  r.rho = lo;
  return r;
}

namespace {

nlohmann::json lower_triangle(const Eigen::MatrixXd& P) {
  nlohmann::json row = nlohmann::json::array();
  for (int a = 0; a < P.rows(); ++a)
    for (int b = 0; b <= a; ++b) row.push_back(P(a, b));
  return row;
}

}  // namespace

nlohmann::json quadratic_to_json(const PeriodicQuadratic& pq) {
  nlohmann::json j;
  j["dim"] = pq.dim;
  j["hybrid"] = pq.hybrid;
  j["period"] = pq.period;
  j["Q"] = eigen_to_json(pq.Q);
  j["Qi"] = eigen_to_json(pq.Qi);
  if (pq.R.size()) j["R"] = eigen_to_json(pq.R);
  j["segments"] = nlohmann::json::array();
  for (const auto& s : pq.segments) {
    nlohmann::json js;
    js["tau"] = s.tau;
    js["P_lower"] = nlohmann::json::array();
    for (const auto& P : s.P) js["P_lower"].push_back(lower_triangle(P));
    j["segments"].push_back(std::move(js));
  }
  return j;
}

nlohmann::json gain_to_json(const FeedbackGain& gain, const PeriodicQuadratic& pq) {
  nlohmann::json j;
  j["segments"] = nlohmann::json::array();
  for (size_t k = 0; k < gain.K.size(); ++k) {
    nlohmann::json js;
    js["tau"] = pq.segments.at(k).tau;
    js["K"] = nlohmann::json::array();
    for (const auto& K : gain.K[k]) js["K"].push_back(eigen_to_json(K));
    j["segments"].push_back(std::move(js));
  }
  return j;
}

FeedbackGain gain_from_json(const nlohmann::json& j) {
  FeedbackGain g;
  try {
    for (const auto& js : j.at("segments")) {
      std::vector<Eigen::MatrixXd> Ks;
      for (const auto& K : js.at("K")) Ks.push_back(json_to_matrix(K, "gain.K"));
      g.K.push_back(std::move(Ks));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("gain: ") + e.what());
  }
  require(!g.K.empty(), "gain: no segments");
  return g;
}

Weights weights_from_json(const nlohmann::json& j) {
  Weights w;
  if (j.contains("Q")) w.Q = json_to_matrix(j.at("Q"), "weights.Q");
  if (j.contains("Qi")) w.Qi = json_to_matrix(j.at("Qi"), "weights.Qi");
  if (j.contains("R")) w.R = json_to_matrix(j.at("R"), "weights.R");
  return w;
}

}  // namespace orbitroa
