#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "orbitroa/error.hpp"
#include "orbitroa/polyalg.hpp"

namespace orbitroa {
namespace {

Polynomial x1(int nv = 1) { return Polynomial::variable(nv, 0); }
Polynomial x2(int nv = 2) { return Polynomial::variable(nv, 1); }
Polynomial c(int nv, double v) { return Polynomial::constant(nv, v); }

void ExpectSameCoeffs(const Polynomial& a, const Polynomial& b, double tol) {
  Polynomial d = a - b;
  for (const auto& [m, v] : d.terms()) EXPECT_NEAR(v, 0.0, tol) << to_string(d);
}

Polynomial RandomPoly(std::mt19937_64& rng, int nv, int max_deg, int nterms) {
  std::uniform_int_distribution<int> deg(0, max_deg);
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  std::uniform_int_distribution<int> var(0, nv - 1);
  Polynomial p(nv);
  for (int k = 0; k < nterms; ++k) {
    std::vector<int> e(nv, 0);
    const int d = deg(rng);
    for (int j = 0; j < d; ++j) e[var(rng)]++;
    p.add_term(Monomial(e), coeff(rng));
  }
  return p;
}

TEST(PolyAlgTest, AddCancels) {
  Polynomial sq = x1() * x1();
  EXPECT_TRUE(add(sq, -sq).is_zero());
  Polynomial s = add(x1() + c(1, 1), x1() - c(1, 1));
  ASSERT_EQ(s.terms().size(), 1u);
  EXPECT_EQ(s.coeff(Monomial::var(1, 0)), 2.0);

  Polynomial p = x1(2) * x1(2) + 2.0 * x2();
  Polynomial q = add(p, x2());
  EXPECT_EQ(q.coeff(Monomial::var(2, 0, 2)), 1.0);
  EXPECT_EQ(q.coeff(Monomial::var(2, 1)), 3.0);
  EXPECT_EQ(q.terms().size(), 2u);
}

TEST(PolyAlgTest, DimensionMismatchThrows) {
  EXPECT_THROW(add(x1(1), x1(2)), Error);
  EXPECT_THROW(mul(x1(1), x1(2)), Error);
}

TEST(PolyAlgTest, Multiply) {
  Polynomial p = mul(x1() + c(1, 1), x1() - c(1, 1));
  EXPECT_EQ(to_string(p), to_string(x1() * x1() - c(1, 1)));
  Polynomial q = x1() * x1() - c(1, 1);
  EXPECT_EQ(to_string(mul(q, c(1, 1))), to_string(q));
  Polynomial q2 = mul(q, q);
  EXPECT_EQ(q2.coeff(Monomial::var(1, 0, 4)), 1.0);
  EXPECT_EQ(q2.coeff(Monomial::var(1, 0, 2)), -2.0);
  EXPECT_EQ(q2.coeff(Monomial::one(1)), 1.0);
  EXPECT_EQ(q2.terms().size(), 3u);
}

TEST(PolyAlgTest, Differentiate) {
  Polynomial cube = pow(x1(), 3);
  Polynomial d = differentiate(cube, 0);
  EXPECT_EQ(d.coeff(Monomial::var(1, 0, 2)), 3.0);
  EXPECT_EQ(d.terms().size(), 1u);
  EXPECT_TRUE(differentiate(x1(2) * x1(2), 1).is_zero());
  Polynomial q = pow(x1() * x1() - c(1, 1), 2);
  Polynomial dq = differentiate(q, 0);
  EXPECT_EQ(dq.coeff(Monomial::var(1, 0, 3)), 4.0);
  EXPECT_EQ(dq.coeff(Monomial::var(1, 0, 1)), -4.0);
  EXPECT_EQ(dq.terms().size(), 2u);
}

TEST(PolyAlgTest, SubstituteAffine) {
  Eigen::MatrixXd M(1, 1);
  M << 2.0;
  Eigen::VectorXd b(1);
  b << 1.0;
  Polynomial p = substitute_affine(x1() * x1(), M, b);
  EXPECT_EQ(p.coeff(Monomial::var(1, 0, 2)), 4.0);
  EXPECT_EQ(p.coeff(Monomial::var(1, 0, 1)), 4.0);
  EXPECT_EQ(p.coeff(Monomial::one(1)), 1.0);

  Polynomial id = substitute_affine(x1(), Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1));
  EXPECT_EQ(to_string(id), to_string(x1()));

  Eigen::MatrixXd N(2, 1);
  N << 1.0, -1.0;
  Polynomial r = substitute_affine(x1(2) * x2(), N, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(r.nvars(), 1);
  EXPECT_EQ(r.coeff(Monomial::var(1, 0, 2)), -1.0);
  EXPECT_EQ(r.terms().size(), 1u);

  EXPECT_THROW(substitute_affine(x1(2), Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1)),
               Error);
}

TEST(PolyAlgTest, Evaluate) {
  Polynomial p = x1(2) * x1(2) + 2.0 * x2();
  EXPECT_EQ(p.evaluate(Eigen::Vector2d(1, 1)), 3.0);
  Polynomial q = p + c(2, -7.5);
  EXPECT_EQ(q.evaluate(Eigen::Vector2d(0, 0)), -7.5);
  Polynomial r = pow(x1() * x1() - c(1, 1), 2);
  EXPECT_EQ(r.evaluate(Eigen::VectorXd::Ones(1)), 0.0);
  EXPECT_THROW(p.evaluate(Eigen::VectorXd::Ones(3)), Error);
}

TEST(PolyAlgTest, MonomialBasis) {
  auto b = monomial_basis(1, 2, 0);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0], Monomial::one(1));
  EXPECT_EQ(b[1], Monomial::var(1, 0));
  EXPECT_EQ(b[2], Monomial::var(1, 0, 2));

  auto lin = monomial_basis(2, 1, 1);
  ASSERT_EQ(lin.size(), 2u);
  EXPECT_EQ(lin[0], Monomial::var(2, 0));
  EXPECT_EQ(lin[1], Monomial::var(2, 1));

  // Count is a sum of binomials C(nvars - 1 + d, d).
  auto binom = [](int n, int k) {
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return static_cast<size_t>(std::lround(r));
  };
  for (int nv = 1; nv <= 4; ++nv) {
    for (int lo = 0; lo <= 3; ++lo) {
      for (int hi = lo; hi <= 5; ++hi) {
        size_t expected = 0;
        for (int d = lo; d <= hi; ++d) expected += binom(nv - 1 + d, d);
        EXPECT_EQ(monomial_basis(nv, hi, lo).size(), expected);
      }
    }
  }
  EXPECT_EQ(monomial_basis(2, 2, 0).size(), 6u);
}

TEST(PolyAlgTest, GradedLexOrder) {
  Polynomial p = x2() * x2() + x1(2) * x2() + x1(2) * x1(2) + x1(2) + c(2, 1);
  std::vector<Monomial> order;
  for (const auto& [m, v] : p.terms()) order.push_back(m);
  ASSERT_EQ(order.size(), 5u);
  EXPECT_EQ(order[0], Monomial::one(2));
  EXPECT_EQ(order[1], Monomial::var(2, 0));
  EXPECT_EQ(order[2], Monomial::var(2, 0, 2));
  EXPECT_EQ(order[3], Monomial(std::vector<int>{1, 1}));
  EXPECT_EQ(order[4], Monomial::var(2, 1, 2));
}

TEST(PolyAlgTest, RingAxioms) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Polynomial a = RandomPoly(rng, 3, 6, 8);
    Polynomial b = RandomPoly(rng, 3, 6, 8);
    Polynomial d = RandomPoly(rng, 3, 6, 8);
    ExpectSameCoeffs(a + b, b + a, 1e-12);
    ExpectSameCoeffs((a + b) + d, a + (b + d), 1e-12);
    ExpectSameCoeffs(a * b, b * a, 1e-11);
    ExpectSameCoeffs((a * b) * d, a * (b * d), 1e-9);
    ExpectSameCoeffs(a * (b + d), a * b + a * d, 1e-10);
  }
}

TEST(PolyAlgTest, EvaluateIsMultiplicative) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    Polynomial a = RandomPoly(rng, 3, 6, 8);
    Polynomial b = RandomPoly(rng, 3, 6, 8);
    Eigen::Vector3d v(nd(rng), nd(rng), nd(rng));
    const double lhs = (a * b).evaluate(v);
    const double rhs = a.evaluate(v) * b.evaluate(v);
    EXPECT_NEAR(lhs, rhs, 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(PolyAlgTest, ChainRuleThroughAffineSubstitution) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    Polynomial p = RandomPoly(rng, 3, 5, 10);
    Eigen::MatrixXd M(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 2; ++j) M(i, j) = nd(rng);
    Eigen::Vector3d b(nd(rng), nd(rng), nd(rng));
    Polynomial q = substitute_affine(p, M, b);
    for (int j = 0; j < 2; ++j) {
      Polynomial chain(2);
      for (int i = 0; i < 3; ++i) {
        chain += substitute_affine(differentiate(p, i), M, b) * M(i, j);
      }
      ExpectSameCoeffs(differentiate(q, j), chain, 1e-9);
    }
  }
}

TEST(PolyAlgTest, JsonRoundTripIsBitExact) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    Polynomial p = RandomPoly(rng, 3, 6, 12);
    nlohmann::json j = p;
    const std::string text = j.dump();
    Polynomial back = nlohmann::json::parse(text).get<Polynomial>();
    EXPECT_EQ(nlohmann::json(back).dump(), text);
    ASSERT_EQ(back.terms().size(), p.terms().size());
    auto it = back.terms().begin();
    for (const auto& [m, v] : p.terms()) {
      EXPECT_EQ(it->first, m);
      EXPECT_EQ(it->second, v);
      ++it;
    }
  }
}

TEST(PolyAlgTest, JsonAcceptsArbitraryTermOrder) {
  auto j = nlohmann::json::parse(
      R"({"nvars":2,"terms":[{"c":2.0,"e":[0,1]},{"c":1.0,"e":[2,0]},{"c":-1.0,"e":[0,0]}]})");
  Polynomial p = j.get<Polynomial>();
  EXPECT_EQ(nlohmann::json(p).dump(),
            R"({"nvars":2,"terms":[{"c":-1.0,"e":[0,0]},{"c":2.0,"e":[0,1]},{"c":1.0,"e":[2,0]}]})");
}

TEST(PolyAlgTest, CompiledMatchesInterpreted) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<Polynomial> comps;
  for (int i = 0; i < 3; ++i) comps.push_back(RandomPoly(rng, 3, 5, 10));
  PolynomialVector pv(3, comps);
  CompiledPolyVector cpv(pv);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Vector3d v(nd(rng), nd(rng), nd(rng));
    Eigen::Vector3d out;
    cpv.evaluate(v.data(), out.data());
    Eigen::VectorXd ref = pv.evaluate(std::span<const double>(v.data(), 3));
    EXPECT_LE((out - ref).norm(), 1e-12 * std::max(1.0, ref.norm()));
  }
}

}  // namespace
}  // namespace orbitroa
