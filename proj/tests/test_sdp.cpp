#include <gtest/gtest.h>

#include <cmath>

#include "orbitroa/sdp.hpp"

using namespace orbitroa;

namespace {

// X in S^2, minimize <C,X> with X11 = rhs.
SdpProblem single_entry(double rhs) {
  SdpProblem p;
  int k = p.add_block(2);
  int r = p.add_row(rhs);
  p.block_entries[k].push_back({r, 0, 0, 1.0});
  p.C[k] = Eigen::MatrixXd::Identity(2, 2);
  return p;
}

}  // namespace

TEST(Sdp, FixedDiagonalEntryIsFeasible) {
  auto r = solve_sdp(single_entry(1.0));
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.primal_objective, 1.0, 1e-7);
  EXPECT_NEAR(r.X[0](0, 0), 1.0, 1e-8);
  EXPECT_LE(r.gap, 1e-7);
}

TEST(Sdp, NegativeDiagonalEntryIsInfeasible) {
  auto r = solve_sdp(single_entry(-1.0));
  EXPECT_EQ(r.status, SdpStatus::kPrimalInfeasible);
}

TEST(Sdp, UnboundedFreeVariable) {
  SdpProblem p;
  int k = p.add_block(1);
  int f = p.add_free(-1.0);
  int r = p.add_row(0.0);
  p.block_entries[k].push_back({r, 0, 0, 1.0});
  p.free_entries.push_back({r, f, -1.0});  // X = t, maximize t
  EXPECT_EQ(solve_sdp(p).status, SdpStatus::kDualInfeasible);
}

// 1 + x^2 = [1 x] G [1 x]': G00 = 1, 2 G10 = 0, G11 = 1.
TEST(Sdp, GramOfOnePlusXSquared) {
  SdpProblem p;
  int k = p.add_block(2);
  int t = p.add_free(-1.0);
  // maximize t with 1 + x^2 - t(1 + x^2) = Gram
  int r0 = p.add_row(1.0), r1 = p.add_row(0.0), r2 = p.add_row(1.0);
  p.block_entries[k].push_back({r0, 0, 0, 1.0});
  p.block_entries[k].push_back({r1, 1, 0, 1.0});
  p.block_entries[k].push_back({r2, 1, 1, 1.0});
  p.free_entries.push_back({r0, t, 1.0});
  p.free_entries.push_back({r2, t, 1.0});
  auto r = solve_sdp(p);
  ASSERT_EQ(r.status, SdpStatus::kOptimal);
  EXPECT_NEAR(r.x_free(t), 1.0, 1e-7);
}

TEST(Sdp, MaxEigenvalueDual) {
  // minimize trace(C X) s.t. trace(X) = 1: the smallest eigenvalue of C.
  Eigen::MatrixXd C(3, 3);
  C << 2, 1, 0, 1, 3, 1, 0, 1, 4;
  SdpProblem p;
  int k = p.add_block(3);
  int r = p.add_row(1.0);
  for (int i = 0; i < 3; ++i) p.block_entries[k].push_back({r, i, i, 1.0});
  p.C[k] = C;
  auto res = solve_sdp(p);
  ASSERT_EQ(res.status, SdpStatus::kOptimal);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  EXPECT_NEAR(res.primal_objective, es.eigenvalues()(0), 1e-7);
}

TEST(Sdp, LinearConeAndBound) {
  // maximize t subject to t + s = 2, s >= 0, X = t - 1 >= 0.
  SdpProblem p;
  int k = p.add_block(1);
  int t = p.add_free(-1.0);
  int s = p.add_lin();
  int r0 = p.add_row(2.0), r1 = p.add_row(-1.0);
  p.free_entries.push_back({r0, t, 1.0});
  p.lin_entries.push_back({r0, s, 1.0});
  p.block_entries[k].push_back({r1, 0, 0, 1.0});
  p.free_entries.push_back({r1, t, -1.0});
  auto res = solve_sdp(p);
  ASSERT_EQ(res.status, SdpStatus::kOptimal);
  EXPECT_NEAR(res.x_free(t), 2.0, 1e-7);
}
