#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "orbitroa/error.hpp"
#include "orbitroa/sosprog.hpp"

using namespace orbitroa;

namespace {

const std::string kModels = ORBITROA_MODELS_DIR;

Polynomial var(int n, int i) { return Polynomial::variable(n, i); }
Polynomial cst(int n, double c) { return Polynomial::constant(n, c); }

// b' G b + t * sum b_i^2 rebuilt by hand.
Polynomial gram_expand(const SosCheck& c) {
  const auto& b = c.basis;
  Polynomial p(b.empty() ? 0 : b[0].nvars());
  for (size_t i = 0; i < b.size(); ++i) {
    p.add_term(b[i] * b[i], c.margin);
    for (size_t j = 0; j < b.size(); ++j) p.add_term(b[i] * b[j], c.gram(i, j));
  }
  return p;
}

double max_coeff_diff(const Polynomial& a, const Polynomial& b) { return (a - b).max_abs_coeff(); }

// One transverse sample of xdot = -x + x^2 with unit clock.
TauSample scalar_sample() {
  TauSample s;
  s.num = cst(1, 1.0);
  s.den = cst(1, 1.0);
  Polynomial x = var(1, 0);
  s.xdot = {-1.0 * x + x * x};
  s.P = Eigen::MatrixXd::Identity(1, 1);
  return s;
}

std::string model_file(const std::string& which) {
  if (which == "scalar") return kModels + "/scalar_fixture.json";
  if (which == "vdp") return kModels + "/vanderpol.json";
  return kModels + "/rimless_wheel.json";
}

Eigen::VectorXd guess(const std::string& which) {
  if (which == "scalar") return Eigen::Vector2d(0, 0.01);
  if (which == "vdp") return Eigen::Vector2d(2, 0);
  return Eigen::Vector2d(0.2 - std::numbers::pi / 8, 0.5);
}

ZSpec zspec(const std::string& which) {
  ZSpec zs = ZSpec::orthogonal();
  if (which == "rimless") {
    zs.kind = ZSpec::Kind::kConstant;
    zs.z_constant = Eigen::Vector2d(1, 0);
  }
  return zs;
}

struct Setup {
  explicit Setup(const std::string& which)
      : model(load_model_file(model_file(which))),
        orbit(find_orbit(model, guess(which), which == "vdp" ? 6.5 : 1.0)),
        fam(make_surfaces(orbit, model, zspec(which))),
        pb{&model, &orbit, &fam, nullptr, periodic_lyapunov(transverse_linearization(fam, orbit, model))} {}
  HybridModel model;
  PeriodicOrbit orbit;
  SurfaceFamily fam;
  CertProblem pb;
};

std::unique_ptr<Setup> setup(const std::string& which) { return std::make_unique<Setup>(which); }

void expect_nonneg_on_samples(const Polynomial& p, std::mt19937& rng, double scale) {
  if (p.is_zero()) return;
  std::normal_distribution<double> nd(0.0, scale);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd x(p.nvars());
    for (int i = 0; i < x.size(); ++i) x(i) = nd(rng);
    EXPECT_GE(p.evaluate(x), -1e-8 * (1.0 + p.max_abs_coeff()));
  }
}

}  // namespace

TEST(AssembleSos, OnePlusSquareIsSos) {
  Polynomial x = var(1, 0);
  SosCheck c = assemble_sos(cst(1, 1.0) + x * x);
  EXPECT_TRUE(c.certified());
  EXPECT_LE(max_coeff_diff(gram_expand(c), cst(1, 1.0) + x * x), 1e-6);
}

TEST(AssembleSos, NegativeSquareIsNotSos) {
  Polynomial x = var(1, 0);
  SosCheck c = assemble_sos(-1.0 * (x * x));
  EXPECT_FALSE(c.feasible());
}

TEST(AssembleSos, BoundaryQuarticIsSos) {
  Polynomial x = var(1, 0);
  Polynomial t = (x * x - cst(1, 1.0)) * (x * x - cst(1, 1.0));
  SosCheck c = assemble_sos(t);
  EXPECT_TRUE(c.feasible());
  EXPECT_FALSE(c.certified() && c.margin > 1e-4);  // zeros at +-1 leave no room
}

TEST(AssembleSos, OddDegreeIsRejected) {
  Polynomial x = var(1, 0);
  EXPECT_THROW(assemble_sos(x * x * x + cst(1, 1.0)), Error);
}

TEST(AssembleSos, MotzkinLikeTwoVariable) {
  // x^4 + y^4 - x^2 y^2 + 1 is sos; Gram identity rebuilt independently.
  Polynomial x = var(2, 0), y = var(2, 1);
  Polynomial t = x * x * x * x + y * y * y * y - 1.0 * (x * x * y * y) + cst(2, 1.0);
  SosCheck c = assemble_sos(t);
  ASSERT_TRUE(c.certified());
  EXPECT_LE(max_coeff_diff(gram_expand(c), t), 1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.gram);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(BuildDV, MatchesHandExpansion) {
  TauSample s;
  Polynomial x = var(2, 0), y = var(2, 1);
  s.num = cst(2, 2.0) + x;
  s.den = cst(2, 1.0) - 0.5 * y;
  s.xdot = {y, -1.0 * x + x * y};
  Polynomial V = x * x + 3.0 * (y * y) + x * y;
  Polynomial dVdtau = 0.5 * (x * x);
  const double d = 0.01;
  Polynomial got = build_DV(s, V, dVdtau, d);
  Polynomial want = dVdtau * s.num + (2.0 * x + y) * s.xdot[0] + (6.0 * y + x) * s.xdot[1] +
                    d * (s.den * (x * x + y * y));
  EXPECT_LE(max_coeff_diff(got, want), 1e-14);
}

TEST(VerifySample, ScalarFixtureLevels) {
  TauSample s = scalar_sample();
  Margins mg{1e-4, 1e-4, 1e-4};
  Polynomial x = var(1, 0);
  auto inside = verify_tau_sample(s, (1.0 / 0.81) * (x * x), Polynomial(1), mg);
  EXPECT_EQ(inside.cert.decrease, CondStatus::kPass);
  EXPECT_EQ(inside.cert.wellposed, CondStatus::kPass);
  auto outside = verify_tau_sample(s, (1.0 / 1.21) * (x * x), Polynomial(1), mg);
  EXPECT_EQ(outside.cert.decrease, CondStatus::kFail);
}

TEST(VerifySample, BallCondition) {
  TauSample s = scalar_sample();
  Margins mg{1e-4, 1e-4, 1e-4};
  Polynomial x = var(1, 0);
  auto ok = verify_tau_sample(s, (1.0 / 0.81) * (x * x), Polynomial(1), mg, 0.8);
  EXPECT_EQ(ok.cert.ball, CondStatus::kPass);
  auto bad = verify_tau_sample(s, (1.0 / 0.81) * (x * x), Polynomial(1), mg, 0.82);
  EXPECT_EQ(bad.cert.ball, CondStatus::kFail);
}

TEST(BallRadius, QuadraticMatchesEigenvalue) {
  Polynomial x = var(2, 0), y = var(2, 1);
  Polynomial V = 2.0 * (x * x) + y * y + 0.6 * (x * y);
  Eigen::Matrix2d P;
  P << 2.0, 0.3, 0.3, 1.0;
  double want = 1.0 / Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(P).eigenvalues().maxCoeff();
  EXPECT_NEAR(ball_radius(V), want, 1e-6);
  EXPECT_NEAR(ball_radius(4.0 * (var(1, 0) * var(1, 0))), 0.25, 1e-12);
}

TEST(BallRadius, QuarticRoot) {
  // x^2 + x^4 = 1 at x^2 = (sqrt 5 - 1)/2.
  Polynomial x = var(1, 0);
  EXPECT_NEAR(ball_radius(x * x + x * x * x * x), (std::sqrt(5.0) - 1.0) / 2.0, 1e-9);
}

TEST(Certify, ScalarFixtureReachesUnitBall) {
  auto s = setup("scalar");
  CertOptions opt;
  opt.refine_taus = false;
  Certificate c = certify_fixed(s->pb, opt, 16);
  EXPECT_TRUE(c.valid());
  EXPECT_GE(c.r, 0.9);
  EXPECT_LE(c.r, 1.0 + 1e-6);  // x = 1 is an equilibrium
  for (size_t k = 1; k < c.r_history.size(); ++k) EXPECT_GT(c.r_history[k], c.r_history[k - 1]);
  EXPECT_LE(c.max_identity_residual, 1e-6);
}

TEST(Certify, VanDerPolMultipliersAndRoundTrip) {
  auto s = setup("vdp");
  CertOptions opt;
  opt.refine_taus = false;
  Certificate c = certify_fixed(s->pb, opt, 64);
  ASSERT_TRUE(c.valid());
  EXPECT_GT(c.r, c.seed_r);
  EXPECT_EQ(c.failed(), 0);
  EXPECT_EQ(c.passed(), 3 * 64);
  std::mt19937 rng(7);
  for (const auto& sc : c.samples) {
    expect_nonneg_on_samples(sc.l, rng, 1.0);
    expect_nonneg_on_samples(sc.m, rng, 1.0);
    expect_nonneg_on_samples(sc.s_ball, rng, 1.0);
    expect_nonneg_on_samples(sc.V, rng, 1.0);
    EXPECT_GE(sc.r, c.r * (1 - 1e-9));
  }
  nlohmann::json j = certificate_to_json(c);
  Certificate back = certificate_from_json(j);
  EXPECT_EQ(certificate_to_json(back).dump(), j.dump());
  EXPECT_EQ(summary_line(back), summary_line(c));
  EXPECT_EQ(j.at("rho").get<double>(), 1.0);
  EXPECT_NE(summary_line(c).find("certified: r="), std::string::npos);
}

TEST(Certify, QuarticBeatsQuadraticSeedOnVanDerPol) {
  auto s = setup("vdp");
  CertOptions opt;
  opt.refine_taus = false;
  opt.vdeg = 4;
  Certificate c = certify_fixed(s->pb, opt, 64);
  ASSERT_TRUE(c.valid());
  EXPECT_GT(c.r, c.seed_r);
  EXPECT_EQ(c.vdeg, 4);
}

TEST(Certify, RimlessWheelImpacts) {
  auto s = setup("rimless");
  CertOptions opt;
  opt.refine_taus = false;
  Certificate c = certify_fixed(s->pb, opt, 16);
  ASSERT_TRUE(c.valid());
  ASSERT_FALSE(c.impacts.empty());
  for (const auto& ic : c.impacts) {
    EXPECT_EQ(ic.decrease, CondStatus::kPass);
    EXPECT_EQ(ic.guard, CondStatus::kPass);
  }
  EXPECT_GT(c.r, 0.0);
}

TEST(Certify, Deterministic) {
  auto s = setup("scalar");
  CertOptions opt;
  opt.refine_taus = false;
  auto a = certificate_to_json(certify_fixed(s->pb, opt, 16)).dump();
  auto b = certificate_to_json(certify_fixed(s->pb, opt, 16)).dump();
  EXPECT_EQ(a, b);
}
