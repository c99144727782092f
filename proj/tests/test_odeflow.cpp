#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "orbitroa/error.hpp"
#include "orbitroa/json_util.hpp"
#include "orbitroa/odeflow.hpp"

namespace orbitroa {
namespace {

const std::string kModels = ORBITROA_MODELS_DIR;

HybridModel Decay() {
  return load_model_text(R"({"n":1,"m":0,"phases":[{"f":[{"nvars":1,"terms":[{"c":-1,"e":[1]}]}],
      "surface":null,"delta":null}]})");
}

HybridModel Bouncer() {
  return load_model_text(R"({"n":1,"m":0,"phases":[{"f":[{"nvars":1,"terms":[{"c":-1,"e":[0]}]}],
      "surface":{"c_minus":[1],"d_minus":0,"guard":{"nvars":1,"terms":[{"c":1,"e":[0]}]},
                 "c_plus":[1],"d_plus":1},
      "delta":[{"nvars":1,"terms":[{"c":1,"e":[0]}]}]}]})");
}

// Independent fixed-step RK4 for van der Pol, used as an oracle.
struct VdpOracle {
  static Eigen::Vector3d rhs(const Eigen::Vector3d& y) {
    // (x1, x2, integral of trace df/dx)
    return {y(1), -y(0) + (1 - y(0) * y(0)) * y(1), 1 - y(0) * y(0)};
  }
  // Integrates from (2, 0) to the next upward crossing of x2 = 0 with x1 > 0
  // after one revolution; returns (period, integral of the trace).
  static std::pair<double, double> period() {
    Eigen::Vector3d y(2.0, 0.0, 0.0);
    // Converge onto the cycle first.
    const double h = 1e-4;
    auto step = [&](Eigen::Vector3d& v) {
      Eigen::Vector3d k1 = rhs(v), k2 = rhs(v + 0.5 * h * k1), k3 = rhs(v + 0.5 * h * k2),
                      k4 = rhs(v + h * k3);
      v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    };
    double t = 0;
    std::vector<double> crossings;
    std::vector<double> integrals;
    for (int i = 0; i < 2'000'000 && crossings.size() < 6; ++i) {
      Eigen::Vector3d prev = y;
      step(y);
      t += h;
      // x2 passes from positive to non-positive while x1 > 0.
      if (prev(1) > 0 && y(1) <= 0 && y(0) > 0) {
        const double s = prev(1) / (prev(1) - y(1));
        crossings.push_back(t - h + s * h);
        integrals.push_back(prev(2) + s * (y(2) - prev(2)));
      }
    }
    const size_t k = crossings.size() - 1;
    return {crossings[k] - crossings[k - 1], integrals[k] - integrals[k - 1]};
  }
};

TEST(OdeFlowTest, HarmonicRotation) {
  HybridModel h = load_model_file(kModels + "/harmonic.json");
  FlowResult r = integrate(h, 0, Eigen::Vector2d(1, 0), 0.0, 2 * std::numbers::pi);
  EXPECT_LE((r.x - Eigen::Vector2d(1, 0)).norm(), 1e-8);
  EXPECT_FALSE(r.event);
}

TEST(OdeFlowTest, ExponentialDecay) {
  FlowResult r = integrate(Decay(), 0, Eigen::VectorXd::Ones(1), 0.0, 1.0);
  EXPECT_NEAR(r.x(0), std::exp(-1.0), 1e-9);
}

TEST(OdeFlowTest, ErrorScalesWithTolerance) {
  std::vector<double> errs;
  for (double tol : {1e-6, 1e-7}) {
    FlowOptions o;
    o.ode.rtol = tol;
    o.ode.atol = tol * 1e-3;
    FlowResult r = integrate(Decay(), 0, Eigen::VectorXd::Ones(1), 0.0, 5.0, nullptr, o);
    errs.push_back(std::abs(r.x(0) - std::exp(-5.0)));
  }
  const double ratio = errs[0] / errs[1];
  EXPECT_GT(ratio, 10.0 / 3.0);
  EXPECT_LT(ratio, 30.0);
}

TEST(OdeFlowTest, RejectsBadInputs) {
  EXPECT_THROW(integrate(Decay(), 0, Eigen::VectorXd::Ones(1), 1.0, 1.0), Error);
  Eigen::VectorXd bad(1);
  bad << std::nan("");
  EXPECT_THROW(integrate(Decay(), 0, bad, 0.0, 1.0), Error);
}

TEST(OdeFlowTest, RimlessWheelEventLocalized) {
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  const auto& s = *m.phase(0).surface;
  FlowResult r = integrate(m, 0, Eigen::Vector2d(s.d_plus, 0.55), 0.0, 20.0);
  ASSERT_TRUE(r.event);
  EXPECT_LE(std::abs(s.exit_residual(r.x)), 1e-10);
  EXPECT_GE(s.guard.evaluate(r.x), 0.0);
}

TEST(OdeFlowTest, GuardBlocksBackwardCrossing) {
  // Rolling backwards across the touchdown angle is not an impact.
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  const auto& s = *m.phase(0).surface;
  FlowResult r = integrate(m, 0, Eigen::Vector2d(s.d_minus + 0.05, -0.5), 0.0, 0.3);
  EXPECT_FALSE(r.event);
  EXPECT_LT(r.x(0), s.d_minus);
}

TEST(OdeFlowTest, BouncingScalar) {
  FlowOptions o;
  o.sample_dt = 0.25;
  FlowResult r = hybrid_flow(Bouncer(), 0, Eigen::VectorXd::Ones(1), 2.5, nullptr, o);
  ASSERT_EQ(r.impacts.size(), 2u);
  EXPECT_NEAR(r.impacts[0].time, 1.0, 1e-10);
  EXPECT_NEAR(r.impacts[1].time, 2.0, 1e-10);
  EXPECT_NEAR(r.x(0), 0.5, 1e-10);
  EXPECT_NEAR(r.t, 2.5, 1e-12);
  const std::string csv = trajectory_csv(r.samples, 1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,x1,phase");
}

TEST(OdeFlowTest, ContinuousHybridFlowMatchesIntegrate) {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  FlowResult a = integrate(m, 0, Eigen::Vector2d(1, 1), 0.0, 3.0);
  FlowResult b = hybrid_flow(m, 0, Eigen::Vector2d(1, 1), 3.0);
  EXPECT_EQ(a.x, b.x);
  EXPECT_TRUE(b.impacts.empty());
}

TEST(OdeFlowTest, ZenoCapTriggers) {
  FlowOptions o;
  o.max_impacts = 3;
  EXPECT_THROW(hybrid_flow(Bouncer(), 0, Eigen::VectorXd::Ones(1), 10.0, nullptr, o), Error);
}

TEST(OdeFlowTest, HarmonicOrbitAndMonodromy) {
  HybridModel h = load_model_file(kModels + "/harmonic.json");
  PeriodicOrbit orbit = find_orbit(h, Eigen::Vector2d(1.1, 0), 2 * std::numbers::pi);
  EXPECT_LE(orbit.closure(), 1e-10);
  EXPECT_NEAR(orbit.segments()[0].x[0](1), 0.0, 1e-12);
  EXPECT_NEAR(orbit.period(), 2 * std::numbers::pi, 1e-8);
  Eigen::MatrixXd psi = monodromy(h, orbit);
  EXPECT_LE((psi - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(OdeFlowTest, VanDerPolPeriodMatchesOracle) {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  PeriodicOrbit orbit = find_orbit(m, Eigen::Vector2d(2, 0), 6.5);
  auto [T_oracle, trace_int] = VdpOracle::period();
  EXPECT_NEAR(orbit.period(), T_oracle, 1e-7);
  EXPECT_NEAR(orbit.period(), 6.663286859, 1e-6);
  EXPECT_LE(orbit.closure(), 1e-10);

  Eigen::MatrixXd psi = monodromy(m, orbit);
  Eigen::VectorXd f0 = orbit.segments()[0].f[0];
  EXPECT_LE((psi * f0 - f0).norm(), 1e-6);
  Eigen::VectorXcd mu = floquet(psi);
  EXPECT_NEAR(std::abs(mu(0) - 1.0), 0.0, 1e-6);
  EXPECT_NEAR((mu(0) * mu(1)).real(), std::exp(trace_int), 1e-4);
}

TEST(OdeFlowTest, BadGuessDiverges) {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  try {
    ShootingOptions o;
    o.max_iterations = 5;
    find_orbit(m, Eigen::Vector2d(40, 0), 0.3, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("shooting diverged"), std::string::npos) << e.what();
  }
}

TEST(OdeFlowTest, RimlessWheelFixedPoint) {
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  const double a = std::numbers::pi / 8, g = 0.2;
  // Energy bookkeeping: pre-impact speed squared grows by 4 sin(a) sin(g)
  // over the stance and shrinks by cos^2(2a) at impact.
  const double c = std::cos(2 * a);
  const double w_minus = std::sqrt(4 * std::sin(a) * std::sin(g) / (1 - c * c));
  const double w_plus = c * w_minus;
  PeriodicOrbit orbit = find_orbit(m, Eigen::Vector2d(g - a, 0.5), 1.0);
  EXPECT_NEAR(orbit.segments()[0].x[0](1), w_plus, 1e-9);
  EXPECT_NEAR(orbit.segments()[0].x[0](0), g - a, 1e-10);
  EXPECT_NEAR(orbit.segments()[0].x.back()(1), w_minus, 1e-9);

  Eigen::MatrixXd psi = monodromy(m, orbit);
  Eigen::VectorXd f0 = orbit.segments()[0].f[0];
  EXPECT_LE((psi * f0 - f0).norm(), 1e-6);
  Eigen::VectorXcd mu = floquet(psi);
  int unit = 0;
  for (int i = 0; i < mu.size(); ++i) unit += std::abs(mu(i) - 1.0) <= 1e-6;
  EXPECT_EQ(unit, 1);

  // Five cycles from the fixed point give five impacts at period spacing.
  FlowResult r = hybrid_flow(m, 0, orbit.segments()[0].x[0], 5 * orbit.period() + 1e-3);
  ASSERT_EQ(r.impacts.size(), 5u);
  for (size_t i = 1; i < r.impacts.size(); ++i) {
    EXPECT_NEAR(r.impacts[i].time - r.impacts[i - 1].time, orbit.period(), 1e-8);
  }
}

TEST(OdeFlowTest, RimlessWheelConvergesFromPerturbation) {
  HybridModel m = load_model_file(kModels + "/rimless_wheel.json");
  PeriodicOrbit orbit = find_orbit(m, Eigen::Vector2d(0.2 - std::numbers::pi / 8, 0.5), 1.0);
  Eigen::VectorXd x0 = orbit.segments()[0].x[0];
  x0(1) += 0.1;
  FlowResult r = hybrid_flow(m, 0, x0, 8 * orbit.period());
  ASSERT_GE(r.impacts.size(), 6u);
  std::vector<double> gaps;
  for (size_t i = 1; i < r.impacts.size(); ++i) {
    gaps.push_back(std::abs(r.impacts[i].time - r.impacts[i - 1].time - orbit.period()));
  }
  EXPECT_LT(gaps.back(), gaps.front());
}

TEST(OdeFlowTest, OrbitJsonRoundTrip) {
  HybridModel m = load_model_file(kModels + "/vanderpol.json");
  ShootingOptions o;
  o.knots_per_segment = 64;
  PeriodicOrbit orbit = find_orbit(m, Eigen::Vector2d(2, 0), 6.5, o);
  nlohmann::json j = orbit_to_json(orbit);
  PeriodicOrbit back = orbit_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(orbit_to_json(back).dump(), j.dump());
  EXPECT_NEAR(back.state(1.234)(0), orbit.state(1.234)(0), 0.0);
}

TEST(OdeFlowTest, OrbitInterpolationAndDistance) {
  HybridModel h = load_model_file(kModels + "/harmonic.json");
  PeriodicOrbit orbit = find_orbit(h, Eigen::Vector2d(1.0, 0), 2 * std::numbers::pi);
  for (double t : {0.1, 1.7, 3.3, 6.0}) {
    Eigen::Vector2d exact(std::cos(t), -std::sin(t));
    EXPECT_LE((orbit.state(t) - exact).norm(), 1e-9);
  }
  EXPECT_NEAR(orbit.distance(Eigen::Vector2d(1.5, 0)), 0.5, 1e-6);
  EXPECT_NEAR(orbit.distance(Eigen::Vector2d(0, 0.9)), 0.1, 1e-6);
}

}  // namespace
}  // namespace orbitroa
