#pragma once

// Closed-loop simulation through the moving surfaces and Monte-Carlo
// falsification of certificates.

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <vector>

#include "orbitroa/odeflow.hpp"
#include "orbitroa/sosprog.hpp"
#include "orbitroa/transverse.hpp"

namespace orbitroa {

/// u = u* - K(tau) x_perp with tau from the surface projection of the
/// current state; u* where the projection fails. Each returned object keeps
/// its own phase hint, so use one per trajectory.
Feedback transverse_feedback(const SurfaceFamily& family, const PeriodicOrbit& orbit,
                             const HybridModel& model, const FeedbackGain& gain);

/// Phase active at the start of orbit segment k.
inline int segment_phase(const PeriodicOrbit& orbit, int k) { return orbit.segments().at(k).phase; }

/// Smallest s > 0 with V(s e) = 1 (V positive away from 0, growing along e).
double level_crossing(const Polynomial& V, const Eigen::VectorXd& e);

struct ValidationOptions {
  int samples = 500;
  double periods = 10.0;
  double tol = 1e-3;
  std::uint64_t seed = 1;
  double impact_tol = 1e-9;  // relative slack on V+ <= V-
};

struct ValidationSample {
  int seg = 0;
  double tau = 0.0;
  Eigen::VectorXd xp, x0, x_final;
  double final_distance = 0.0;
  bool converged = false;
  int impacts = 0;
  int impacts_checked = 0;
  int v_increases = 0;
  double max_v_jump = 0.0;  // max of V+ - V- over checked impacts
  std::string error;        // integration failure, if any
};

struct ValidationResult {
  int samples = 0;
  int converged = 0;
  int impacts_checked = 0;
  int v_increases = 0;
  double periods = 0.0, tol = 0.0;
  std::uint64_t seed = 0;
  bool hybrid = false;  // horizon counted in impact cycles
  std::vector<ValidationSample> details;
  double fraction() const { return samples ? static_cast<double>(converged) / samples : 0.0; }
  bool ok() const { return samples > 0 && converged == samples && v_increases == 0; }
};

/// Samples on {V = 1} at uniform random tau, integrates the full (closed-loop
/// when pb.gain is set) dynamics, checks the final distance to the orbit and,
/// for hybrid orbits, V(after) <= V(before) at every impact from inside {V <= 1}.
ValidationResult validate_certificate(const CertProblem& pb, const Certificate& cert,
                                      const ValidationOptions& opt = {});

nlohmann::json validation_to_json(const ValidationResult& r, bool with_samples = true);

}  // namespace orbitroa
