#pragma once

// Periodic and jump Lyapunov / Riccati equations along the transverse
// linearization; bisection of the initial certified level.

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <vector>

#include "orbitroa/transverse.hpp"

namespace orbitroa {

/// Weights; empty matrices mean identity of the right size.
struct Weights {
  Eigen::MatrixXd Q, Qi, R;
};

struct QuadraticSegment {
  std::vector<double> tau;
  std::vector<Eigen::MatrixXd> P, dP;  // dP/dtau from the differential equation
};

struct PeriodicQuadratic {
  int dim = 0;
  bool hybrid = false;
  double period = 0.0;
  Eigen::MatrixXd Q, Qi, R;
  std::vector<QuadraticSegment> segments;

  /// Piecewise-cubic (Hermite) symmetric interpolant inside segment `seg`.
  Eigen::MatrixXd at(int seg, double tau) const;
  /// Smallest eigenvalue over the knots and a 4x refined grid.
  double min_eigenvalue() const;
};

/// Unique periodic solution of dP/dtau + A'P + PA + Q = 0 (with jumps
/// P(tau_i-) = Ad'P(tau_i+)Ad + Qi when the LTV has impacts).
PeriodicQuadratic periodic_lyapunov(const TransverseLTV& ltv, const Weights& w = {});
inline PeriodicQuadratic jump_lyapunov(const TransverseLTV& ltv, const Weights& w = {}) {
  return periodic_lyapunov(ltv, w);
}

struct RiccatiResult {
  PeriodicQuadratic P;
  FeedbackGain gain;
  double open_loop_radius = 0.0;
  double closed_loop_radius = 0.0;
  int sweeps = 0;
};

/// Periodic (jump) Riccati: -dP/dtau = A'P + PA - PBR^-1B'P + Q, K = R^-1B'P.
RiccatiResult jump_riccati(const TransverseLTV& ltv, const Weights& w = {});

/// The LTV with A replaced by A - BK (midpoint gains from the interpolated P).
TransverseLTV close_loop(const TransverseLTV& ltv, const RiccatiResult& ric);

struct LevelResult {
  double rho = 0.0;
  int evaluations = 0;
};

/// Largest rho in [rho_min, rho_max] accepted by `verify`, to relative width 0.01.
LevelResult bisect_level(const std::function<bool(double)>& verify, double rho_min,
                         double rho_max, double rel_width = 0.01);

nlohmann::json quadratic_to_json(const PeriodicQuadratic& pq);
nlohmann::json gain_to_json(const FeedbackGain& gain, const PeriodicQuadratic& pq);
FeedbackGain gain_from_json(const nlohmann::json& j);
/// {"Q": [[...]], "Qi": [[...]], "R": [[...]]}, every key optional.
Weights weights_from_json(const nlohmann::json& j);

}  // namespace orbitroa
