#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "orbitroa/error.hpp"
#include "orbitroa/grid.hpp"
#include "orbitroa/periodic_lyap.hpp"

using namespace orbitroa;

namespace {

const std::string kModels = ORBITROA_MODELS_DIR;

// Constant-coefficient LTV on `segs` equal segments of [0, T].
TransverseLTV constant_ltv(double a, double b, int segs, double ad, double T = 1.0,
                           int knots = 64) {
  TransverseLTV ltv;
  ltv.dim = 1;
  ltv.m = b == 0.0 ? 0 : 1;
  ltv.hybrid = segs > 1 || ad != 1.0;
  ltv.period = T;
  const Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, a);
  const Eigen::MatrixXd B = ltv.m ? Eigen::MatrixXd::Constant(1, 1, b) : Eigen::MatrixXd(1, 0);
  for (int k = 0; k < segs; ++k) {
    LtvSegment s;
    for (int i = 0; i <= knots; ++i) {
      s.tau.push_back(T * (k + static_cast<double>(i) / knots) / segs);
      s.A.push_back(A);
      s.B.push_back(B);
      if (i < knots) {
        s.A_mid.push_back(A);
        s.B_mid.push_back(B);
      }
    }
    ltv.segments.push_back(s);
    if (ltv.hybrid) ltv.Ad.push_back(Eigen::MatrixXd::Constant(1, 1, ad));
  }
  return ltv;
}

Weights scalar_weights(double q, double qi = 1.0, double r = 1.0) {
  return {Eigen::MatrixXd::Constant(1, 1, q), Eigen::MatrixXd::Constant(1, 1, qi),
          Eigen::MatrixXd::Constant(1, 1, r)};
}

double max_dev(const PeriodicQuadratic& pq, double value) {
  double m = 0;
  for (const auto& s : pq.segments)
    for (const auto& P : s.P) m = std::max(m, std::abs(P(0, 0) - value));
  return m;
}

struct VdpSetup {
  HybridModel model;
  PeriodicOrbit orbit;
  SurfaceFamily fam;
  TransverseLTV ltv;
};

VdpSetup vdp_setup() {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  PeriodicOrbit o = find_orbit(m, Eigen::Vector2d(2, 0), 6.5);
  SurfaceFamily f = make_surfaces(o, m, ZSpec::orthogonal());
  TransverseLTV l = transverse_linearization(f, o, m);
  return {m, o, f, l};
}

}  // namespace

TEST(PeriodicLyapunov, ScalarSteadyState) {
  PeriodicQuadratic pq = periodic_lyapunov(constant_ltv(-1, 0, 1, 1.0), scalar_weights(2));
  EXPECT_LE(max_dev(pq, 1.0), 1e-10);
}

TEST(PeriodicLyapunov, UnstableIsRejected) {
  try {
    periodic_lyapunov(constant_ltv(1, 0, 1, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
    EXPECT_NE(std::string(e.what()).find("transverse linearization unstable"), std::string::npos);
  }
}

TEST(JumpLyapunov, ScalarFixedPoint) {
  const double a = 0.5, q = 0.3;
  PeriodicQuadratic pq = jump_lyapunov(constant_ltv(0, 0, 1, a), scalar_weights(0, q));
  EXPECT_LE(max_dev(pq, q / (1 - a * a)), 1e-10);
  // Several impacts per period: same fixed point on every segment.
  PeriodicQuadratic pq3 = jump_lyapunov(constant_ltv(0, 0, 3, a), scalar_weights(0, q));
  EXPECT_LE(max_dev(pq3, q / (1 - a * a)), 1e-10);
  EXPECT_THROW(jump_lyapunov(constant_ltv(0, 0, 1, 1.2), scalar_weights(0, q)), Error);
  EXPECT_THROW(jump_lyapunov(constant_ltv(0, 0, 1, -1.0), scalar_weights(0, q)), Error);
}

TEST(PeriodicLyapunov, VanDerPolResidualAndPeriodicity) {
  VdpSetup s = vdp_setup();
  PeriodicQuadratic pq = periodic_lyapunov(s.ltv);
  const auto& seg = pq.segments[0];
  EXPECT_LE((seg.P.front() - seg.P.back()).norm(), 1e-8);
  EXPECT_GT(pq.min_eigenvalue(), 0);
  // Finite-difference derivative of the stored P against the equation.
  std::vector<Eigen::VectorXd> v;
  for (const auto& P : seg.P) v.push_back(Eigen::Map<const Eigen::VectorXd>(P.data(), P.size()));
  const double h = (seg.tau.back() - seg.tau.front()) / (seg.tau.size() - 1);
  auto dv = fd_derivative(v, h, true);
  double worst = 0;
  for (size_t j = 0; j < seg.P.size(); ++j) {
    const Eigen::MatrixXd& A = s.ltv.segments[0].A[j];
    Eigen::MatrixXd dP = Eigen::Map<const Eigen::MatrixXd>(dv[j].data(), 1, 1);
    Eigen::MatrixXd r = dP + A.transpose() * seg.P[j] + seg.P[j] * A + Eigen::MatrixXd::Identity(1, 1);
    worst = std::max(worst, r.norm());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(PeriodicLyapunov, DecreaseAlongLinearization) {
  HybridModel m = load_model_file(kModels + "/vanderpol3.json");
  Eigen::VectorXd g = integrate(m, 0, Eigen::Vector3d(2, 0, 1), 0.0, 60.0).x;
  PeriodicOrbit o = find_orbit(m, g, 6.6);
  SurfaceFamily f = make_surfaces(o, m, ZSpec::orthogonal(), 2);
  TransverseLTV ltv = transverse_linearization(f, o, m);
  PeriodicQuadratic pq = periodic_lyapunov(ltv);
  const auto& s = ltv.segments[0];
  std::mt19937_64 rng(1);
  std::normal_distribution<double> gd;
  Eigen::VectorXd x(2);
  x << gd(rng), gd(rng);
  double worst = 0;
  // Composite Simpson panels of two knot intervals.
  for (size_t j = 0; j + 2 < s.tau.size(); j += 2) {
    const Eigen::VectorXd x1 = interval_transition(s, j) * x;
    const Eigen::VectorXd x2 = interval_transition(s, j + 1) * x1;
    const double V0 = x.dot(pq.segments[0].P[j] * x);
    const double V2 = x2.dot(pq.segments[0].P[j + 2] * x2);
    const double integral = (s.tau[j + 2] - s.tau[j]) / 6.0 *
                            (x.squaredNorm() + 4 * x1.squaredNorm() + x2.squaredNorm());
    worst = std::max(worst, std::abs((V2 - V0) + integral) / V0);
    x = x2;
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(JumpLyapunov, RimlessWheel) {
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  PeriodicOrbit o = find_orbit(m, Eigen::Vector2d(0.2 - std::numbers::pi / 8, 0.5), 1.0);
  ZSpec spec;
  spec.kind = ZSpec::Kind::kConstant;
  spec.z_constant = Eigen::Vector2d(1, 0);
  SurfaceFamily f = make_surfaces(o, m, spec);
  TransverseLTV ltv = transverse_linearization(f, o, m);
  PeriodicQuadratic pq = jump_lyapunov(ltv);
  EXPECT_GT(pq.min_eigenvalue(), 0);
  const Eigen::MatrixXd& Pm = pq.segments[0].P.back();
  const Eigen::MatrixXd& Pp = pq.segments[0].P.front();
  const Eigen::MatrixXd& Ad = ltv.Ad[0];
  for (double x : {-0.3, 0.01, 0.7}) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x);
    const double lhs = v.dot(Pm * v) - (Ad * v).dot(Pp * (Ad * v));
    EXPECT_NEAR(lhs, x * x, 1e-10);
  }
  // Nonlinear impacts near the orbit decrease V.
  for (double x : {-0.02, 0.01, 0.03}) {
    Eigen::VectorXd v = Eigen::VectorXd::Constant(1, x);
    Eigen::VectorXd vp = impact_update(f, o, m, v, 0);
    EXPECT_LT(vp.dot(Pp * vp), v.dot(Pm * v));
  }
}

TEST(JumpRiccati, ScalarAlgebraic) {
  RiccatiResult r = jump_riccati(constant_ltv(0, 1, 1, 1.0), scalar_weights(1));
  EXPECT_LE(max_dev(r.P, 1.0), 1e-8);
  for (const auto& K : r.gain.K[0]) EXPECT_NEAR(K(0, 0), 1.0, 1e-8);
  EXPECT_LT(r.closed_loop_radius, 1.0);
}

TEST(JumpRiccati, GainIsStationary) {
  // Cost of u = -k x for x' = u, weights 1: P(k) = (1 + k^2) / (2k), minimized at k = 1.
  auto cost = [](double k) {
    return periodic_lyapunov(constant_ltv(-k, 0, 1, 1.0), scalar_weights(1 + k * k))
        .segments[0]
        .P[0](0, 0);
  };
  RiccatiResult r = jump_riccati(constant_ltv(0, 1, 1, 1.0), scalar_weights(1));
  const double k = r.gain.K[0][0](0, 0);
  const double eps = 1e-2;
  // Richardson-extrapolated first-order term (cancels the cubic part).
  const double first =
      std::abs(8 * (cost(k + eps) - cost(k - eps)) - (cost(k + 2 * eps) - cost(k - 2 * eps))) / 12;
  const double second = std::abs(cost(k + eps) + cost(k - eps) - 2 * cost(k)) / 2;
  EXPECT_LE(first, 1e-4 * second + 1e-12);
  EXPECT_GT(cost(k + eps), cost(k));
}

TEST(JumpRiccati, UnstabilizableFails) {
  TransverseLTV ltv = constant_ltv(1, 1, 1, 1.0);
  for (auto& s : ltv.segments) {
    for (auto& B : s.B) B.setZero();
    for (auto& B : s.B_mid) B.setZero();
  }
  try {
    jump_riccati(ltv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
  EXPECT_THROW(jump_riccati(constant_ltv(-1, 0, 1, 1.0)), Error);  // m = 0
}

TEST(JumpRiccati, ReversedVanDerPolIsStabilized) {
  HybridModel fwd = load_model_file(kModels + "/vanderpol.json");
  Eigen::VectorXd g = find_orbit(fwd, Eigen::Vector2d(2, 0), 6.5).segments()[0].x[0];
  HybridModel m = load_model_file(kModels + "/vanderpol_reversed_input.json");
  PeriodicOrbit o = find_orbit(m, g, 6.66);
  SurfaceFamily f = make_surfaces(o, m, ZSpec::orthogonal());
  TransverseLTV ltv = transverse_linearization(f, o, m);
  RiccatiResult r = jump_riccati(ltv);
  EXPECT_GT(r.open_loop_radius, 1.0);
  EXPECT_LT(r.closed_loop_radius, 1.0);
  EXPECT_LE((r.P.segments[0].P.front() - r.P.segments[0].P.back()).norm(), 1e-8);
  // The nonlinear closed loop linearizes to A - BK.
  TransverseLTV cl = transverse_linearization(f, o, m, &r.gain);
  EXPECT_LT(spectral_radius(transverse_monodromy(cl)), 1.0);
  EXPECT_NEAR(spectral_radius(transverse_monodromy(cl)), r.closed_loop_radius, 1e-4);
}

TEST(BisectLevel, Mechanics) {
  LevelResult r = bisect_level([](double rho) { return rho <= 0.37; }, 0.01, 1.0);
  EXPECT_GE(r.rho, 0.3663);
  EXPECT_LE(r.rho, 0.37);
  EXPECT_EQ(bisect_level([](double) { return true; }, 0.1, 2.0).rho, 2.0);
  EXPECT_THROW(bisect_level([](double) { return false; }, 0.1, 2.0), Error);
}

TEST(Json, QuadraticDump) {
  PeriodicQuadratic pq = periodic_lyapunov(constant_ltv(-1, 0, 1, 1.0), scalar_weights(2));
  nlohmann::json j = quadratic_to_json(pq);
  EXPECT_EQ(j["segments"][0]["P_lower"].size(), 65u);
  EXPECT_NEAR(j["segments"][0]["P_lower"][3][0].get<double>(), 1.0, 1e-10);
}
