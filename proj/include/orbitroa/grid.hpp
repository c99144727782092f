#pragma once

// Finite differences and interpolation on uniform knot grids.

#include <Eigen/Dense>
#include <vector>

namespace orbitroa {

/// Fourth-order derivative of grid samples with spacing h. With periodic=true
/// the last sample duplicates the first (closed curve) and centered stencils
/// wrap; otherwise one-sided stencils are used at the two ends.
std::vector<Eigen::VectorXd> fd_derivative(const std::vector<Eigen::VectorXd>& v, double h,
                                           bool periodic);

/// Transpose of the linear map v -> fd_derivative(v): given weights w_j on the
/// derivative samples, returns dL/dv_j for L = sum_j w_j' D(v)_j.
std::vector<Eigen::VectorXd> fd_derivative_adjoint(const std::vector<Eigen::VectorXd>& w,
                                                   double h, bool periodic);

/// Index i with t[i] <= s <= t[i+1] (clamped to the valid range).
size_t bracket(const std::vector<double>& t, double s);

}  // namespace orbitroa
