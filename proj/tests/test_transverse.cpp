#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "orbitroa/error.hpp"
#include "orbitroa/grid.hpp"
#include "orbitroa/transverse.hpp"

using namespace orbitroa;

namespace {

const std::string kModels = ORBITROA_MODELS_DIR;

struct Fixture {
  HybridModel model;
  PeriodicOrbit orbit;
};

Fixture harmonic() {
  HybridModel h = load_model_file(kModels + "/harmonic.json");
  PeriodicOrbit o = find_orbit(h, Eigen::Vector2d(1.0, 0), 2 * std::numbers::pi);
  return {h, o};
}

Fixture vdp() {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  PeriodicOrbit o = find_orbit(m, Eigen::Vector2d(2, 0), 6.5);
  return {m, o};
}

Fixture vdp3() {
  HybridModel m = load_model_file(kModels + "/vanderpol3.json");
  // Settle onto the attracting cycle first.
  Eigen::VectorXd g = integrate(m, 0, Eigen::Vector3d(2, 0, 1), 0.0, 60.0).x;
  PeriodicOrbit o = find_orbit(m, g, 6.6);
  return {m, o};
}

Fixture rimless() {
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  PeriodicOrbit o = find_orbit(m, Eigen::Vector2d(0.2 - std::numbers::pi / 8, 0.5), 1.0);
  return {m, o};
}

Fixture scalar_fixture() {
  HybridModel m = load_model_file(kModels + "/scalar_fixture.json");
  PeriodicOrbit o = find_orbit(m, Eigen::Vector2d(0, 0.01), 1.0);
  return {m, o};
}

ZSpec constant_z(double a, double b) {
  ZSpec s;
  s.kind = ZSpec::Kind::kConstant;
  s.z_constant = Eigen::Vector2d(a, b);
  return s;
}

// Central-difference Jacobian of the nonlinear transverse field at x_perp = 0.
Eigen::MatrixXd fd_jacobian(const TauFrame& fr, const HybridModel& model, int dim, double h) {
  Eigen::MatrixXd J(dim, dim);
  for (int c = 0; c < dim; ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e(c) = h;
    J.col(c) = (transverse_rhs(fr, model, e).xdot - transverse_rhs(fr, model, -e).xdot) / (2 * h);
  }
  return J;
}

double max_fd_mismatch(const Fixture& fx, const SurfaceFamily& fam) {
  const TransverseLTV ltv = transverse_linearization(fam, fx.orbit, fx.model);
  double worst = 0.0;
  for (size_t k = 0; k < fam.segments.size(); ++k) {
    for (size_t i = 0; i < fam.segments[k].tau.size(); i += 7) {
      TauFrame fr = frame_at_knot(fam, fx.orbit, fx.model, static_cast<int>(k), i);
      Eigen::MatrixXd Jfd = fd_jacobian(fr, fx.model, ltv.dim, 1e-5);
      worst = std::max(worst, (Jfd - ltv.segments[k].A[i]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace

TEST(Basis, ThreeDimensionalExample) {
  Eigen::MatrixXd eta = complete_basis(Eigen::Vector3d(1, 0, 0));
  EXPECT_TRUE(eta.isApprox(Eigen::Matrix3d::Identity()));
  Eigen::MatrixXd Pi = build_basis(Eigen::Vector3d(0, 0, 1), eta);
  EXPECT_NEAR((Pi.row(0) - Eigen::RowVector3d(0, 1, 0)).norm(), 0, 1e-15);
  EXPECT_NEAR((Pi.row(1) - Eigen::RowVector3d(-1, 0, 0)).norm(), 0, 1e-15);
}

TEST(Basis, IdentityRotationWhenZEqualsW) {
  Eigen::Vector3d w = Eigen::Vector3d(1, 2, -2) / 3.0;
  Eigen::MatrixXd eta = complete_basis(w);
  EXPECT_NEAR((eta.col(0) - w).norm(), 0, 1e-15);
  EXPECT_NEAR((eta.transpose() * eta - Eigen::Matrix3d::Identity()).norm(), 0, 1e-14);
  Eigen::MatrixXd Pi = build_basis(w, eta);
  for (int j = 1; j < 3; ++j) EXPECT_NEAR((Pi.row(j - 1).transpose() - eta.col(j)).norm(), 0, 1e-15);
}

TEST(Basis, PlanarRule) {
  const double th = 0.7;
  Eigen::MatrixXd Pi = build_basis(Eigen::Vector2d(std::cos(th), std::sin(th)), {});
  EXPECT_DOUBLE_EQ(Pi(0, 0), -std::sin(th));
  EXPECT_DOUBLE_EQ(Pi(0, 1), std::cos(th));
}

TEST(Basis, OrthonormalAndDerivativeMatchesDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int n = 3; n <= 5; ++n) {
    Eigen::VectorXd w(n), a(n), b(n);
    for (int i = 0; i < n; ++i) {
      w(i) = g(rng);
      a(i) = g(rng);
      b(i) = g(rng);
    }
    w.normalize();
    Eigen::MatrixXd eta = complete_basis(w);
    auto zf = [&](double s) {
      Eigen::VectorXd v = a * std::cos(s) + b * std::sin(s);
      return Eigen::VectorXd(v / v.norm());
    };
    const double s = 0.3, h = 1e-6;
    Eigen::VectorXd z = zf(s);
    Eigen::VectorXd dz = (zf(s + h) - zf(s - h)) / (2 * h);
    Eigen::MatrixXd Pi = build_basis(z, eta);
    EXPECT_LT((Pi * Pi.transpose() - Eigen::MatrixXd::Identity(n - 1, n - 1)).norm(), 1e-12);
    EXPECT_LT((Pi * z).norm(), 1e-12);
    Eigen::MatrixXd fd = (build_basis(zf(s + h), eta) - build_basis(zf(s - h), eta)) / (2 * h);
    EXPECT_LT((basis_derivative(z, dz, eta) - fd).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(PickW, AcceptsAndRejects) {
  std::vector<Eigen::VectorXd> zc(10, Eigen::Vector3d(0, 0, 1));
  Eigen::VectorXd w = pick_w(zc, 3, 7);
  EXPECT_NEAR(w.norm(), 1.0, 1e-14);
  EXPECT_LE(std::abs(w(2)), 0.999);
  EXPECT_TRUE(w.isApprox(pick_w(zc, 3, 7)));  // seeded

  // Dense random grid of z on the sphere: almost every seed succeeds.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::vector<Eigen::VectorXd> zs;
  for (int i = 0; i < 500; ++i) {
    Eigen::Vector3d v(g(rng), g(rng), g(rng));
    zs.push_back(v.normalized());
  }
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    try {
      Eigen::VectorXd ws = pick_w(zs, 3, seed);
      for (const auto& z : zs) ASSERT_GE(1 - std::abs(ws.dot(z)), 1e-3);
      ++ok;
    } catch (const Error&) {
    }
  }
  EXPECT_GT(ok, 99);
}

TEST(PickW, StaysAwayFromAntipodes) {
  // z sweeps a circle of latitude; a poor seed lets 1 + w'z get small.
  std::vector<Eigen::VectorXd> zs;
  for (int i = 0; i < 360; ++i) {
    const double t = 2 * std::numbers::pi * i / 360;
    zs.push_back(Eigen::Vector3d(std::cos(t), std::sin(t), 0.3).normalized());
  }
  for (std::uint64_t seed : {1, 2, 3}) {
    Eigen::VectorXd w = pick_w(zs, 3, seed);
    double margin = 2.0;
    for (const auto& z : zs) margin = std::min(margin, 1.0 + w.dot(z));
    EXPECT_GE(margin, 0.6) << "seed " << seed;
  }
}

TEST(Grid, FourthOrderDifferences) {
  auto run = [](int N, bool periodic) {
    const double L = 2 * std::numbers::pi;
    const double h = L / N;
    std::vector<Eigen::VectorXd> v;
    for (int i = 0; i <= N; ++i) v.push_back(Eigen::VectorXd::Constant(1, std::sin(i * h)));
    auto d = fd_derivative(v, h, periodic);
    double err = 0;
    for (int i = 0; i <= N; ++i) err = std::max(err, std::abs(d[i](0) - std::cos(i * h)));
    return err;
  };
  for (bool p : {true, false}) {
    const double e1 = run(64, p), e2 = run(128, p);
    EXPECT_GT(e1 / e2, 12.0) << p;  // ~16 for fourth order
  }
}

TEST(Grid, AdjointIsTranspose) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  for (bool p : {true, false}) {
    const int N = 12;
    std::vector<Eigen::VectorXd> v(N + 1), w(N + 1);
    for (int i = 0; i <= N; ++i) {
      v[i] = Eigen::Vector2d(g(rng), g(rng));
      w[i] = Eigen::Vector2d(g(rng), g(rng));
    }
    if (p) v[N] = v[0];
    auto d = fd_derivative(v, 0.1, p);
    auto a = fd_derivative_adjoint(w, 0.1, p);
    double lhs = 0, rhs = 0;
    for (int i = 0; i <= N; ++i) lhs += w[i].dot(d[i]);
    if (p) {
      for (int i = 0; i < N; ++i) rhs += a[i].dot(v[i]) + (i == 0 ? a[N].dot(v[0]) : 0.0);
    } else {
      for (int i = 0; i <= N; ++i) rhs += a[i].dot(v[i]);
    }
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Surfaces, HarmonicOrthogonalIsZeroLinearization) {
  Fixture fx = harmonic();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  EXPECT_NEAR(fam.min_zf, 1.0, 1e-8);
  TransverseLTV ltv = transverse_linearization(fam, fx.orbit, fx.model);
  double mx = 0;
  for (const auto& s : ltv.segments) {
    for (const auto& A : s.A) mx = std::max(mx, A.cwiseAbs().maxCoeff());
  }
  EXPECT_LE(mx, 1e-9);

  // Radial perturbation of the unit circle.
  const double eps = 0.05;
  SurfacePoint p = tau_project(fam, fx.orbit, fx.model, Eigen::Vector2d(1 + eps, 0), 0.0);
  EXPECT_NEAR(std::min(p.tau, fam.period - p.tau), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(p.xp(0)), eps, 1e-9);

  // Circles are invariant: x_perp stays put for radial offsets.
  for (double tau : {0.3, 2.0, 5.0}) {
    TauFrame fr = frame_at(fam, fx.orbit, fx.model, 0, tau);
    for (double r : {-0.9, -0.4, 0.5}) {
      TransverseRhs rhs = transverse_rhs(fr, fx.model, Eigen::VectorXd::Constant(1, r));
      EXPECT_NEAR(rhs.xdot(0), 0.0, 1e-8);
    }
  }
}

TEST(Surfaces, OnOrbitIdentities) {
  Fixture fx = vdp();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  const double minf = [&] {
    double m = 1e300;
    for (const auto& f : fx.orbit.segments()[0].f) m = std::min(m, f.norm());
    return m;
  }();
  EXPECT_NEAR(fam.min_zf, minf, 1e-12);
  EXPECT_NEAR(fam.delta, 1e-3 * minf, 1e-15);
  for (double tau : {0.0, 1.234, 4.0}) {
    TauFrame fr = frame_at(fam, fx.orbit, fx.model, 0, tau);
    TransverseRhs r = transverse_rhs(fr, fx.model, Eigen::VectorXd::Zero(1));
    EXPECT_NEAR(r.taudot, 1.0, 1e-8);
    EXPECT_NEAR(r.xdot(0), 0.0, 1e-8);
    // Points on S(tau) project back to tau exactly.
    Eigen::VectorXd x = fr.xs + fr.Pi.transpose() * Eigen::VectorXd::Constant(1, 0.1);
    SurfacePoint p = tau_project(fam, fx.orbit, fx.model, x, tau + 0.2);
    EXPECT_NEAR(p.tau, tau, 1e-9);
    EXPECT_NEAR(p.xp(0), 0.1, 1e-9);
    Eigen::VectorXd back = from_transverse(fam, fx.orbit, fx.model, p.xp, p.seg, p.tau);
    EXPECT_LT((back - x).norm(), 1e-9);
  }
  SurfacePoint on = tau_project(fam, fx.orbit, fx.model, fx.orbit.state(2.5), 2.4);
  EXPECT_NEAR(on.tau, 2.5, 1e-8);
  EXPECT_NEAR(on.xp(0), 0.0, 1e-9);
}

TEST(Surfaces, ProjectionFailsFarAway) {
  Fixture fx = vdp();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  Fixture rw = rimless();
  SurfaceFamily rfam = make_surfaces(rw.orbit, rw.model, constant_z(1, 0));
  // Beyond the end of the only segment of the hybrid orbit.
  EXPECT_THROW(tau_project(rfam, rw.orbit, rw.model, Eigen::Vector2d(3.0, 0.5), 0.1), Error);
}

TEST(Linearization, MatchesFiniteDifferencesOnModels) {
  {
    Fixture fx = vdp();
    EXPECT_LE(max_fd_mismatch(fx, make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal())), 1e-5);
  }
  {
    Fixture fx = vdp3();
    EXPECT_LE(max_fd_mismatch(fx, make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal(), 4)), 1e-5);
  }
  {
    Fixture fx = rimless();
    EXPECT_LE(max_fd_mismatch(fx, make_surfaces(fx.orbit, fx.model, constant_z(1, 0))), 1e-5);
  }
  {
    Fixture fx = scalar_fixture();
    EXPECT_LE(max_fd_mismatch(fx, make_surfaces(fx.orbit, fx.model, constant_z(1, 0))), 1e-5);
  }
}

TEST(Linearization, NonOrthogonalSurfacesOnVanDerPol) {
  Fixture fx = vdp();
  // Tilt the orthogonal surfaces by a fixed small rotation.
  ZSpec spec;
  spec.kind = ZSpec::Kind::kGrid;
  const double a = 0.3;
  Eigen::Matrix2d R;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  std::vector<Eigen::VectorXd> zg;
  for (const auto& f : fx.orbit.segments()[0].f) zg.push_back(R * f.normalized());
  spec.z_grid.push_back(zg);
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, spec);
  EXPECT_FALSE(fam.orthogonal);
  EXPECT_LE(max_fd_mismatch(fx, fam), 1e-5);
  // Floquet multiplier does not depend on the surfaces.
  Eigen::MatrixXd psi = transverse_monodromy(transverse_linearization(fam, fx.orbit, fx.model));
  Eigen::MatrixXd psi0 = transverse_monodromy(transverse_linearization(
      make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal()), fx.orbit, fx.model));
  EXPECT_NEAR(psi(0, 0), psi0(0, 0), 1e-6);
}

TEST(Linearization, VanDerPolFloquetMultiplier) {
  Fixture fx = vdp();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  TransverseLTV ltv = transverse_linearization(fam, fx.orbit, fx.model);
  // exp of the trapezoid integral of the scalar A(tau).
  double integral = 0;
  const auto& s = ltv.segments[0];
  for (size_t i = 0; i + 1 < s.tau.size(); ++i) {
    integral += (s.tau[i + 1] - s.tau[i]) * (s.A[i](0, 0) + 4 * s.A_mid[i](0, 0) + s.A[i + 1](0, 0)) / 6;
  }
  Eigen::VectorXcd mult = floquet(monodromy(fx.model, fx.orbit));
  const double nontrivial = std::abs(mult(1));
  EXPECT_NEAR(std::exp(integral), nontrivial, 1e-4);
  EXPECT_NEAR(transverse_monodromy(ltv)(0, 0), nontrivial, 1e-4);
  EXPECT_LT(spectral_radius(transverse_monodromy(ltv)), 1.0);
}

TEST(Linearization, ThreeStateSpectrumMatchesFullMonodromy) {
  Fixture fx = vdp3();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal(), 1);
  Eigen::MatrixXd psi_t = transverse_monodromy(transverse_linearization(fam, fx.orbit, fx.model));
  Eigen::VectorXcd full = floquet(monodromy(fx.model, fx.orbit));
  Eigen::VectorXcd tr = floquet(psi_t);
  // Drop the unit multiplier from the full spectrum.
  std::vector<double> a, b;
  int dropped = 0;
  for (int i = 0; i < full.size(); ++i) {
    if (!dropped && std::abs(full(i) - 1.0) < 1e-6) {
      dropped = 1;
      continue;
    }
    a.push_back(std::abs(full(i)));
  }
  for (int i = 0; i < tr.size(); ++i) b.push_back(std::abs(tr(i)));
  ASSERT_EQ(dropped, 1);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-4);
}

TEST(Linearization, ControlledOrthogonalB) {
  HybridModel m = load_model_file(kModels + "/vanderpol_reversed_input.json");
  // The reversed cycle repels, so start shooting from a point of the forward cycle.
  PeriodicOrbit o = find_orbit(m, vdp().orbit.segments()[0].x[0], 6.66);
  SurfaceFamily fam = make_surfaces(o, m, ZSpec::orthogonal());
  TransverseLTV ltv = transverse_linearization(fam, o, m);
  ASSERT_EQ(ltv.m, 1);
  for (size_t i = 0; i < fam.segments[0].tau.size(); i += 100) {
    TauFrame fr = frame_at_knot(fam, o, m, 0, i);
    Eigen::MatrixXd Bexp = fr.Pi * m.jacobian_u(0, fr.xs, fr.us);
    EXPECT_LT((ltv.segments[0].B[i] - Bexp).norm(), 1e-12);
  }
  // Open loop is unstable in time-reversed van der Pol.
  EXPECT_GT(spectral_radius(transverse_monodromy(ltv)), 1.0);
  // Constant feedback through the gain path: A_cl = A - B K.
  FeedbackGain g;
  g.K.push_back(std::vector<Eigen::MatrixXd>(fam.segments[0].tau.size(),
                                             Eigen::MatrixXd::Constant(1, 1, 0.5)));
  TransverseLTV cl = transverse_linearization(fam, o, m, &g);
  for (size_t i = 0; i < cl.segments[0].A.size(); i += 100) {
    EXPECT_LT((cl.segments[0].A[i] - (ltv.segments[0].A[i] - 0.5 * ltv.segments[0].B[i])).norm(),
              1e-12);
  }
}

TEST(Hybrid, RimlessAlignmentAndImpactMap) {
  Fixture fx = rimless();
  try {
    make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
    FAIL() << "expected alignment violation";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("alignment violation"), std::string::npos);
  }
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, constant_z(1, 0));
  Eigen::MatrixXd Ad = impact_linearization(fam, fx.orbit, fx.model, 0);
  EXPECT_NEAR(Ad(0, 0), std::cos(std::numbers::pi / 4), 1e-12);
  // Finite-difference oracle for the nonlinear update.
  const double h = 1e-6;
  Eigen::VectorXd e = Eigen::VectorXd::Constant(1, h);
  const double fd =
      (impact_update(fam, fx.orbit, fx.model, e, 0) - impact_update(fam, fx.orbit, fx.model, -e, 0))(0) /
      (2 * h);
  EXPECT_NEAR(fd, Ad(0, 0), 1e-8);
  EXPECT_NEAR(impact_update(fam, fx.orbit, fx.model, Eigen::VectorXd::Zero(1), 0).norm(), 0, 1e-9);

  // Transverse spectrum equals the non-unit multiplier of the saltation monodromy.
  Eigen::VectorXcd full = floquet(monodromy(fx.model, fx.orbit));
  double nonunit = std::abs(full(0) - 1.0) < 1e-6 ? std::abs(full(1)) : std::abs(full(0));
  Eigen::MatrixXd psi_t = transverse_monodromy(transverse_linearization(fam, fx.orbit, fx.model));
  EXPECT_NEAR(std::abs(psi_t(0, 0)), nonunit, 1e-4);
}

TEST(Hybrid, ScalarFixtureHandComputation) {
  Fixture fx = scalar_fixture();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, constant_z(1, 0));
  EXPECT_NEAR(fam.period, 1.0, 1e-9);
  for (double tau : {0.1, 0.5, 0.9}) {
    TauFrame fr = frame_at(fam, fx.orbit, fx.model, 0, tau);
    for (double s : {-0.5, 0.3, 0.8}) {
      TransverseRhs r = transverse_rhs(fr, fx.model, Eigen::VectorXd::Constant(1, s));
      EXPECT_NEAR(r.taudot, 1.0, 1e-12);
      EXPECT_NEAR(r.xdot(0), -s + s * s, 1e-9);
    }
  }
  EXPECT_NEAR(impact_linearization(fam, fx.orbit, fx.model, 0)(0, 0), 1.0, 1e-12);
}

TEST(Simulation, TransverseFlowReproducesFullFlow) {
  Fixture fx = vdp();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  const double T = fam.period;
  const double xp0 = 0.15;
  // State y = (x_perp, tau) with tau unwrapped.
  RhsFn rhs = [&](double, const double* y, double* dy) {
    double tw = std::fmod(y[1], T);
    if (tw < 0) tw += T;
    TauFrame fr = frame_at(fam, fx.orbit, fx.model, 0, tw);
    TransverseRhs r = transverse_rhs(fr, fx.model, Eigen::VectorXd::Constant(1, y[0]));
    dy[0] = r.xdot(0);
    dy[1] = r.taudot;
  };
  Eigen::VectorXd y(2);
  y << xp0, 0.0;
  Eigen::VectorXd x0 = from_transverse(fam, fx.orbit, fx.model, Eigen::VectorXd::Constant(1, xp0), 0, 0.0);
  IntegratorOptions io{1e-11, 1e-13, 0.0, 10'000'000};
  double worst = 0;
  Eigen::VectorXd yc = y;
  double t = 0;
  for (int k = 1; k <= 10; ++k) {
    const double t1 = T * k / 10.0;
    dopri5(rhs, t, yc, t1, io, {}, nullptr);
    t = t1;
    double tw = std::fmod(yc(1), T);
    Eigen::VectorXd xr = from_transverse(fam, fx.orbit, fx.model, yc.head(1), 0, tw);
    FlowOptions fo;
    fo.ode = io;
    Eigen::VectorXd xf = integrate(fx.model, 0, x0, 0.0, t1, nullptr, fo).x;
    worst = std::max(worst, (xr - xf).norm());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Surfaces, JsonDumpAndZFile) {
  Fixture fx = vdp();
  SurfaceFamily fam = make_surfaces(fx.orbit, fx.model, ZSpec::orthogonal());
  nlohmann::json j = surfaces_to_json(fam);
  EXPECT_EQ(j["segments"][0]["tau"].size(), fam.segments[0].tau.size());
  // A family dump is itself a valid z specification.
  ZSpec spec = ZSpec::from_json(j);
  SurfaceFamily again = make_surfaces(fx.orbit, fx.model, spec);
  EXPECT_LT((again.segments[0].z[17] - fam.segments[0].z[17]).norm(), 1e-15);
  EXPECT_THROW(ZSpec::from_json(nlohmann::json::object()), Error);
  // Transversality failure.
  EXPECT_THROW(make_surfaces(fx.orbit, fx.model, constant_z(1, 0)), Error);
}
