#pragma once

// Moving transversal surfaces S(tau) = {y : z(tau)'(y - x*(tau)) = 0}, the
// rotating basis Pi(tau), transverse dynamics and their linearization.

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "orbitroa/hybridmodel.hpp"
#include "orbitroa/odeflow.hpp"

namespace orbitroa {

/// Surface data on the knots of one orbit segment.
struct SurfaceSegment {
  int phase = 0;
  std::vector<double> tau;
  std::vector<Eigen::VectorXd> z, dz;
  std::vector<Eigen::MatrixXd> Pi, dPi;  // (n-1) x n
};

struct SurfaceFamily {
  int n = 0;
  double period = 0.0;
  bool hybrid = false;
  bool orthogonal = false;
  Eigen::VectorXd w;    // basis seed (empty for n = 2)
  Eigen::MatrixXd eta;  // orthonormal columns, eta.col(0) = w (empty for n = 2)
  double delta = 0.0;   // well-posedness margin
  double min_zf = 0.0;  // min over the grid of z'f(x*)
  std::vector<SurfaceSegment> segments;
};

/// How z(tau) is specified.
struct ZSpec {
  enum class Kind { kOrthogonal, kConstant, kGrid };
  Kind kind = Kind::kOrthogonal;
  Eigen::VectorXd z_constant;
  std::vector<std::vector<Eigen::VectorXd>> z_grid;  // per segment, on the orbit knots

  static ZSpec orthogonal() { return {}; }
  static ZSpec from_json(const nlohmann::json& j);
};

/// Time-varying feedback gain u = u* - K(tau) x_perp on the family grid.
struct FeedbackGain {
  std::vector<std::vector<Eigen::MatrixXd>> K;  // per segment, per knot: m x (n-1)
  bool empty() const { return K.empty(); }
};

/// Completion of w to an orthonormal basis (columns), first column w.
Eigen::MatrixXd complete_basis(const Eigen::VectorXd& w);

/// Rows xi_2'..xi_n' of the rotated basis; n = 2 uses [-z2, z1].
Eigen::MatrixXd build_basis(const Eigen::VectorXd& z, const Eigen::MatrixXd& eta);
/// d Pi / d tau given z and dz/dtau.
Eigen::MatrixXd basis_derivative(const Eigen::VectorXd& z, const Eigen::VectorXd& dz,
                                 const Eigen::MatrixXd& eta);

/// Random unit w with 1 - |w'z| >= 1e-3 on the whole grid.
Eigen::VectorXd pick_w(const std::vector<Eigen::VectorXd>& z, int n, std::uint64_t seed);

SurfaceFamily make_surfaces(const PeriodicOrbit& orbit, const HybridModel& model,
                            const ZSpec& spec, std::uint64_t seed = 0);

nlohmann::json surfaces_to_json(const SurfaceFamily& family);

/// Everything that depends only on the surface index.
struct TauFrame {
  int seg = 0;
  int phase = 0;
  double tau = 0.0;
  Eigen::VectorXd xs, fs, us, z, dz;
  Eigen::MatrixXd Pi, dPi, K;  // K empty without feedback
};

TauFrame frame_at(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                  const HybridModel& model, int seg, double tau,
                  const FeedbackGain* gain = nullptr);
TauFrame frame_at_knot(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                       const HybridModel& model, int seg, size_t knot,
                       const FeedbackGain* gain = nullptr);

struct SurfacePoint {
  Eigen::VectorXd xp;
  double tau = 0.0;
  int seg = 0;
};

/// Solves z(tau)'(x - x*(tau)) = 0 near tau_hint. For hybrid orbits the
/// search stays inside segment `seg` (-1 selects the segment of tau_hint).
SurfacePoint tau_project(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                         const HybridModel& model, const Eigen::VectorXd& x, double tau_hint,
                         int seg = -1);
inline SurfacePoint to_transverse(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                                  const HybridModel& model, const Eigen::VectorXd& x,
                                  double tau_hint, int seg = -1) {
  return tau_project(family, orbit, model, x, tau_hint, seg);
}
Eigen::VectorXd from_transverse(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                                const HybridModel& model, const Eigen::VectorXd& xp, int seg,
                                double tau);

struct TransverseRhs {
  Eigen::VectorXd xdot;
  double taudot = 0.0;
  double num = 0.0;  // numerator of taudot
  double den = 0.0;  // denominator of taudot
};

TransverseRhs transverse_rhs(const TauFrame& frame, const HybridModel& model,
                             const Eigen::VectorXd& xp);

/// A and B at one frame (closed loop when frame.K is set: A - BK).
void linearize_frame(const TauFrame& frame, const HybridModel& model, bool orthogonal,
                     Eigen::MatrixXd& A, Eigen::MatrixXd& B);

struct LtvSegment {
  std::vector<double> tau;
  std::vector<Eigen::MatrixXd> A, B;          // at knots
  std::vector<Eigen::MatrixXd> A_mid, B_mid;  // at interval midpoints
};

struct TransverseLTV {
  int dim = 0;  // n - 1
  int m = 0;
  bool hybrid = false;
  double period = 0.0;
  std::vector<LtvSegment> segments;
  std::vector<Eigen::MatrixXd> Ad;  // impact at the end of segment k
};

TransverseLTV transverse_linearization(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                                       const HybridModel& model,
                                       const FeedbackGain* gain = nullptr);

/// x_perp after the impact ending segment i.
Eigen::VectorXd impact_update(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                              const HybridModel& model, const Eigen::VectorXd& xp_minus, int i);
Eigen::MatrixXd impact_linearization(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                                     const HybridModel& model, int i);

/// State transition of the LTV over one period (impact maps included).
Eigen::MatrixXd transverse_monodromy(const TransverseLTV& ltv);
/// Transition over knot interval j of segment k (fourth-order Runge-Kutta).
Eigen::MatrixXd interval_transition(const LtvSegment& s, size_t j);

double spectral_radius(const Eigen::MatrixXd& M);

nlohmann::json ltv_to_json(const TransverseLTV& ltv);

}  // namespace orbitroa
