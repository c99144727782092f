#pragma once

// Surface-normal optimization: widen the tube in which the tau dynamics stay
// well posed by minimizing a p-norm of |dz/dtau| / z'f over the orbit.

#include <Eigen/Dense>
#include <json.hpp>
#include <vector>

#include "orbitroa/hybridmodel.hpp"
#include "orbitroa/odeflow.hpp"
#include "orbitroa/transverse.hpp"

namespace orbitroa {

/// |z'f(x*)| / |dz/dtau| at knot i of segment k; +inf when dz = 0.
double wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit, int seg,
                        size_t knot);
/// Same at an arbitrary tau, linear in z and dz between knots.
double wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit, double tau);
double min_wellposed_radius(const SurfaceFamily& family, const PeriodicOrbit& orbit);

using ZGrid = std::vector<std::vector<Eigen::VectorXd>>;  // per segment, per knot

struct SurfaceOptOptions {
  int p = 50;
  double delta = -1.0;  // transversality floor; negative: 1e-3 * min |f|
  int max_iterations = 2000;
  double grad_tol = 1e-9;  // on the projected gradient, relative to the cost
  double armijo = 1e-4;
};

struct SurfaceOptProblem {
  const PeriodicOrbit* orbit = nullptr;
  const HybridModel* model = nullptr;
  ZGrid z0;                               // empty: orthogonal with pinned impact knots
  std::vector<std::vector<double>> phi;   // empty: default shaping (1 for smooth orbits)
  std::vector<std::vector<char>> pinned;  // filled by make_surface_problem
};

SurfaceOptProblem make_surface_problem(const PeriodicOrbit& orbit, const HybridModel& model);

/// Default shaping prod_i sin^2(pi (tau - tau_i) / T), scaled to max 1.
double default_shaping(const std::vector<double>& impact_times, double period, double tau);

struct SurfaceCost {
  double cost = 0.0;
  double max_ratio = 0.0;  // max over knots of phi * |dz| / z'f
  ZGrid grad;              // Euclidean gradient wrt each knot of z
};

/// (sum w phi r^p / sum w)^(1/p), r = |dz|/z'f, trapezoid weights w. The
/// normalization makes the cost approach max phi*r from below as p grows.
SurfaceCost surface_cost(const SurfaceOptProblem& pb, const ZGrid& z, int p, bool gradient);

struct SurfaceOptResult {
  ZGrid z;
  double cost_initial = 0.0, cost_final = 0.0;
  double min_radius_initial = 0.0, min_radius_final = 0.0;
  double projected_gradient = 0.0;  // at the returned z, max over knots
  int iterations = 0;
  bool converged = false;
};

SurfaceOptResult optimize_z(const SurfaceOptProblem& pb, const SurfaceOptOptions& opt = {});

ZSpec zgrid_spec(const ZGrid& z);
/// {"segments": [{"tau": [...], "z": [[...], ...]}], ...} as read by ZSpec::from_json.
nlohmann::json surface_opt_to_json(const SurfaceOptResult& r, const PeriodicOrbit& orbit,
                                   int p);

}  // namespace orbitroa
