#pragma once

// Integration of hybrid flows, periodic-orbit shooting and monodromy.

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "orbitroa/hybridmodel.hpp"

namespace orbitroa {

struct IntegratorOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double h_init = 0.0;  // 0 selects a step from the local scale of the field
  long max_steps = 20'000'000;
};

using RhsFn = std::function<void(double t, const double* y, double* dydt)>;

/// One accepted step with endpoint derivatives, enough for Hermite output.
struct StepRecord {
  double t0 = 0.0, t1 = 0.0;
  Eigen::VectorXd y0, y1, f0, f1;
};

Eigen::VectorXd hermite(const StepRecord& s, double t);

/// Adaptive Dormand-Prince 5(4). Every entry of stop_times inside (t0, t1] is
/// hit exactly by a step boundary. on_step returns false to stop early.
/// Returns the final time; y holds the final state.
double dopri5(const RhsFn& rhs, double t0, Eigen::VectorXd& y, double t1,
              const IntegratorOptions& opt, const std::vector<double>& stop_times,
              const std::function<bool(const StepRecord&)>& on_step);

/// Single fixed step without error control.
Eigen::VectorXd dopri5_single_step(const RhsFn& rhs, double t, const Eigen::VectorXd& y, double h);

/// u = feedback(phase, t, x).
using Feedback = std::function<Eigen::VectorXd(int phase, double t, const Eigen::VectorXd& x)>;

struct FlowOptions {
  IntegratorOptions ode;
  double event_tol = 1e-10;
  int max_impacts = 10000;
  /// hybrid_flow returns (post-impact state) once this many impacts happened.
  int stop_after_impacts = -1;
  bool detect_events = true;
  /// Sample spacing for the recorded trajectory; 0 records accepted steps,
  /// negative disables recording.
  double sample_dt = -1.0;
  /// Control used when no feedback is given (empty means zeros).
  Eigen::VectorXd u_open_loop;
};

struct FlowSample {
  double t = 0.0;
  Eigen::VectorXd x;
  int phase = 0;
};

struct ImpactRecord {
  double time = 0.0;
  int phase = 0;  // phase whose exit surface was hit
  Eigen::VectorXd pre, post;
};

struct FlowResult {
  Eigen::VectorXd x;
  double t = 0.0;
  int phase = 0;
  bool event = false;  // ended on the exit surface of `phase` (pre-impact state)
  std::vector<FlowSample> samples;
  std::vector<ImpactRecord> impacts;
};

/// Integrates one phase from (t0, x0) until t1 or the first accepted
/// crossing of the exit surface.
FlowResult integrate(const HybridModel& model, int phase, const Eigen::VectorXd& x0, double t0,
                     double t1, const Feedback* feedback = nullptr, const FlowOptions& opt = {});

/// Alternates phase integration and impact maps for `duration`.
FlowResult hybrid_flow(const HybridModel& model, int phase, const Eigen::VectorXd& x0,
                       double duration, const Feedback* feedback = nullptr,
                       const FlowOptions& opt = {});

/// One continuous segment of the orbit, phase `phase`, on uniform knots.
struct OrbitSegment {
  int phase = 0;
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> f;
};

/// Sampled periodic solution. t = 0 is the start of phase 0 (post-impact of
/// the last phase for hybrid orbits); segment k ends at the impact of phase k.
class PeriodicOrbit {
 public:
  PeriodicOrbit() = default;
  PeriodicOrbit(int n, int m, std::vector<OrbitSegment> segments, Eigen::VectorXd u_nominal,
                bool hybrid, double closure);

  int n() const { return n_; }
  int m() const { return m_; }
  double period() const { return period_; }
  bool hybrid() const { return hybrid_; }
  double closure() const { return closure_; }
  const Eigen::VectorXd& u_nominal() const { return u_nominal_; }
  const std::vector<OrbitSegment>& segments() const { return segments_; }
  int num_segments() const { return static_cast<int>(segments_.size()); }

  /// Impact times t_1 < ... < t_N (segment end times) for hybrid orbits.
  std::vector<double> impact_times() const;
  /// Segment containing t (t wrapped into [0, T)); ties go to the later segment.
  int segment_at(double t) const;
  Eigen::VectorXd state(double t) const;
  Eigen::VectorXd state_in_segment(int k, double t) const;
  Eigen::VectorXd field_in_segment(int k, double t) const;
  /// Distance from x to the sampled orbit point set.
  double distance(const Eigen::VectorXd& x) const;
  /// Orbit time of the nearest knot.
  double nearest_time(const Eigen::VectorXd& x) const;

 private:
  int n_ = 0;
  int m_ = 0;
  double period_ = 0.0;
  bool hybrid_ = false;
  double closure_ = 0.0;
  Eigen::VectorXd u_nominal_;
  std::vector<OrbitSegment> segments_;
};

struct ShootingOptions {
  int max_iterations = 50;
  double closure_tol = 1e-10;
  int knots_per_segment = 2048;
  std::optional<int> anchor;  // continuous orbits: fixed coordinate of x(0)
  IntegratorOptions ode{1e-12, 1e-14, 0.0, 20'000'000};
  double graze_rel = 1e-6;
};

/// Newton shooting from a guess; continuous orbits solve for (x0, T),
/// hybrid orbits shoot impact to impact (T_guess bounds the search time).
PeriodicOrbit find_orbit(const HybridModel& model, const Eigen::VectorXd& x_guess, double T_guess,
                         const ShootingOptions& opt = {},
                         const Eigen::VectorXd& u_nominal = Eigen::VectorXd());

/// Full-state monodromy with saltation matrices at impacts.
Eigen::MatrixXd monodromy(const HybridModel& model, const PeriodicOrbit& orbit,
                          const IntegratorOptions& ode = {1e-11, 1e-13, 0.0, 20'000'000});

/// Eigenvalues sorted by decreasing modulus.
Eigen::VectorXcd floquet(const Eigen::MatrixXd& psi);

/// DΔ + (f+ - DΔ f-) c-' / (c-' f-).
Eigen::MatrixXd saltation_matrix(const Eigen::MatrixXd& ddelta, const Eigen::VectorXd& f_minus,
                                 const Eigen::VectorXd& f_plus, const Eigen::VectorXd& c_minus);

/// Impact-point checks along the orbit (surface membership, guard, entry
/// plane, non-grazing); throws Error(kInvalidArgument) on violation.
void check_orbit(const HybridModel& model, const PeriodicOrbit& orbit, double tol = 1e-8,
                 double graze_rel = 1e-6);

nlohmann::json orbit_to_json(const PeriodicOrbit& orbit);
PeriodicOrbit orbit_from_json(const nlohmann::json& j);

std::string trajectory_csv(const std::vector<FlowSample>& samples, int n);
nlohmann::json impacts_to_json(const std::vector<ImpactRecord>& impacts);

}  // namespace orbitroa
