#pragma once

// Primal-dual interior-point solver for
//   minimize   sum <C_j, X_j> + c_lin'x_lin + c_free'x_free
//   subject to sum A_j(X_j) + A_lin x_lin + A_free x_free = b,
//              X_j PSD, x_lin >= 0, x_free free.

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace orbitroa {

struct SdpEntry {
  int row = 0;
  int i = 0, j = 0;  // i >= j; the row matrix has value v at (i,j) and (j,i)
  double v = 0.0;
};

struct SdpScalarEntry {
  int row = 0;
  int col = 0;
  double v = 0.0;
};

struct SdpProblem {
  int rows = 0;
  Eigen::VectorXd b;
  std::vector<int> block_dims;
  std::vector<std::vector<SdpEntry>> block_entries;  // per block
  std::vector<Eigen::MatrixXd> C;                    // per block; empty means zero
  int n_lin = 0;
  std::vector<SdpScalarEntry> lin_entries;
  Eigen::VectorXd c_lin;
  int n_free = 0;
  std::vector<SdpScalarEntry> free_entries;
  Eigen::VectorXd c_free;

  int add_block(int dim);
  int add_free(double cost = 0.0);
  int add_lin(double cost = 0.0);
  int add_row(double rhs);
};

enum class SdpStatus { kOptimal, kPrimalInfeasible, kDualInfeasible, kNumerical };

const char* to_string(SdpStatus s);

struct SdpOptions {
  int max_iterations = 100;
  double gap_tol = 1e-9;
  double feas_tol = 1e-10;
  double step_fraction = 0.95;
};

struct SdpResult {
  SdpStatus status = SdpStatus::kNumerical;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;           // relative duality gap
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  std::vector<Eigen::MatrixXd> X, Z;
  Eigen::VectorXd x_lin, z_lin, x_free, y;
};

SdpResult solve_sdp(const SdpProblem& problem, const SdpOptions& opt = {});

}  // namespace orbitroa
