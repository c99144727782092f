#pragma once

// Sum-of-squares certification of regional orbital stability on the
// transverse coordinates: Gram relaxation, per-sample and per-impact
// conditions, and the multiplier / V alternation.

#include <Eigen/Dense>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "orbitroa/periodic_lyap.hpp"
#include "orbitroa/polyalg.hpp"
#include "orbitroa/sdp.hpp"
#include "orbitroa/transverse.hpp"

namespace orbitroa {

/// Affine polynomial expression in the decision variables of a SosProgram:
/// fixed + sum_k y_k * free[k].second + sum_g w_g(x) * (b_g' X_g b_g).
struct SosExpr {
  Polynomial fixed;
  std::vector<std::pair<int, Polynomial>> free;
  std::vector<std::pair<int, Polynomial>> gram;
};

class SosProgram {
 public:
  explicit SosProgram(int nvars) : nvars_(nvars) {}

  int nvars() const { return nvars_; }
  /// Scalar decision variable; `cost` enters the minimized objective.
  int add_free(double cost = 0.0);
  /// x + s = ub with s >= 0.
  void bound_above(int var, double ub);
  /// PSD Gram matrix over `basis`; usable in SosExpr::gram.
  int add_gram(std::vector<Monomial> basis);
  /// expr - t * sum_a (b_a)^2 = b' X b with X PSD (t omitted when slack < 0).
  /// Returns the Gram id of X.
  int constrain_sos(const SosExpr& expr, std::vector<Monomial> basis, int slack = -1);

  SdpResult solve(const SdpOptions& opt = {}) const;

  double value(const SdpResult& r, int var) const { return r.x_free(var); }
  Eigen::MatrixXd gram(const SdpResult& r, int g) const { return r.X[gram_block_[g]]; }
  Polynomial gram_polynomial(const SdpResult& r, int g) const;
  Polynomial evaluate(const SdpResult& r, const SosExpr& e) const;
  /// Largest coefficient mismatch of any sos constraint's Gram identity.
  double identity_residual(const SdpResult& r) const;
  /// Equality residual per row with the owning constraint and monomial.
  struct RowResidual {
    int constraint;
    Monomial monomial;
    double residual;
  };
  std::vector<RowResidual> row_residuals(const SdpResult& r) const;

 private:
  struct Constraint {
    SosExpr expr;
    int gram = -1;
    int slack = -1;
  };
  int nvars_;
  SdpProblem sdp_;
  std::vector<std::vector<Monomial>> bases_;
  std::vector<int> gram_block_;
  std::vector<Constraint> constraints_;
  std::vector<std::pair<int, Monomial>> row_owner_;
  bool infeasible_ = false;  // a monomial no variable reaches has a nonzero coefficient
};

/// Sum of squares of the basis monomials.
Polynomial basis_square_sum(const std::vector<Monomial>& basis);

/// Monomials that can carry an sos representation of a polynomial with
/// degrees in [lo, hi]: degrees ceil(lo/2)..ceil(hi/2).
std::vector<Monomial> sos_basis(int nvars, int lo, int hi);

struct SosCheck {
  SdpStatus status = SdpStatus::kNumerical;
  double margin = 0.0;  // largest t with target - t*q sos
  Eigen::MatrixXd gram;
  std::vector<Monomial> basis;
  double residual = 0.0;
  bool certified() const { return status == SdpStatus::kOptimal && margin > 0.0; }
  /// Sos up to solver tolerance (boundary cases such as (x^2-1)^2 included).
  bool feasible() const { return status == SdpStatus::kOptimal && margin >= -1e-7; }
};

/// Fixed polynomial sos test. Errors on odd degree.
SosCheck assemble_sos(const Polynomial& target, int max_degree = -1);

enum class CondStatus { kPass, kFail, kNumerical, kSkipped };
const char* to_string(CondStatus s);

/// Polynomial data of the transverse dynamics on one surface S(tau).
struct TauSample {
  int seg = 0;
  double tau = 0.0;
  TauFrame frame;
  Polynomial num, den;             // taudot = num / den
  std::vector<Polynomial> xdot;    // den * d x_perp / d tau
  Polynomial exit;                 // c-'x - d- on S(tau) (hybrid)
  Polynomial guard;                // g on S(tau) (hybrid)
  bool check_premature = false;
  int prev = -1, next = -1;        // V-slope stencil: dV/dtau = (V[next]-V[prev])/dtau
  double dtau = 0.0;
  Eigen::MatrixXd P;               // seed quadratic form
};

struct ImpactData {
  int impact = 0;
  int before = 0, after = 0;  // sample indices on either side
  std::vector<Polynomial> update;  // x_perp+ as polynomial in x_perp-
  Polynomial guard;                // g at the pre-impact state
};

struct Margins {
  double positivity = 0.0;  // delta_1
  double decrease = 0.0;    // delta_2
  double wellposed = 0.0;   // delta_3
};

struct CertOptions {
  int vdeg = 2;
  int taus = 64;
  int max_taus = 256;
  bool refine_taus = true;
  double tau_rel_change = 0.02;
  double deltas[3] = {-1.0, -1.0, -1.0};  // negative: 1e-4 * min z'f
  int taylor_degree = 5;
  int max_iterations = 10;
  double rel_improvement = 1e-3;
  bool premature_switching = true;
  bool alternate = true;
  Weights weights;
};

struct SampleCert {
  int seg = 0;
  double tau = 0.0;
  Polynomial V, l, m, s_ball, sigma, ls;
  double r = 0.0;  // largest ball inside {V <= 1} at this sample
  double t_decrease = 0.0, t_wellposed = 0.0, t_premature = 0.0, t_ball = 0.0;
  CondStatus decrease = CondStatus::kSkipped, wellposed = CondStatus::kSkipped,
             premature = CondStatus::kSkipped, ball = CondStatus::kSkipped;
};

struct ImpactCert {
  int impact = 0;
  Polynomial sigma_decrease, sigma_guard;
  double t_decrease = 0.0, t_guard = 0.0;
  CondStatus decrease = CondStatus::kSkipped, guard = CondStatus::kSkipped;
};

struct Certificate {
  int dim = 0;
  int vdeg = 2;
  bool hybrid = false;
  double period = 0.0;
  int taylor_degree = 0;
  Margins margins;
  double seed_rho = 0.0;
  double seed_r = 0.0;
  double r = 0.0;
  int taus = 0;
  int iterations = 0;
  std::vector<double> r_history;
  std::vector<SampleCert> samples;
  std::vector<ImpactCert> impacts;
  std::vector<int> slope_prev, slope_next;
  std::vector<double> slope_dtau;
  int sdp_solves = 0;
  int sdp_max_iterations = 0;
  double max_gap = 0.0;
  double max_identity_residual = 0.0;

  int passed() const;
  int failed() const;
  bool valid() const { return failed() == 0; }
  /// V at (seg, tau) by linear interpolation between samples.
  Polynomial V_at(int seg, double tau) const;
};

/// Inputs shared by all certification steps.
struct CertProblem {
  const HybridModel* model = nullptr;
  const PeriodicOrbit* orbit = nullptr;
  const SurfaceFamily* family = nullptr;
  const FeedbackGain* gain = nullptr;  // closed loop when set
  PeriodicQuadratic seed;               // P(tau) for V1 = x'Px / rho
};

std::vector<TauSample> make_samples(const CertProblem& pb, int taus_per_segment,
                                    int taylor_degree, bool premature);
std::vector<ImpactData> make_impacts(const CertProblem& pb, const std::vector<TauSample>& s,
                                     int taylor_degree);

Margins default_margins(const SurfaceFamily& fam, const CertOptions& opt);

/// den*(dV/dtau along the flow) + den*delta*|x|^2 at one sample.
Polynomial build_DV(const TauSample& s, const Polynomial& V, const Polynomial& dVdtau,
                    double delta);

struct SampleVerdict {
  SampleCert cert;
  int solves = 0;
  double max_gap = 0.0, max_residual = 0.0;
  int max_iterations = 0;
  bool ok() const;
};

/// Decrease, well-posedness and (hybrid) premature-switching conditions; the
/// ball condition {|x|^2 <= r_ball} in {V <= 1} as well when r_ball > 0.
SampleVerdict verify_tau_sample(const TauSample& s, const Polynomial& V, const Polynomial& dVdtau,
                                const Margins& mg, double r_ball = 0.0);

struct ImpactVerdict {
  ImpactCert cert;
  int solves = 0;
  double max_gap = 0.0, max_residual = 0.0;
  int max_iterations = 0;
  bool ok() const;
};

ImpactVerdict verify_impact(const ImpactData& d, const Polynomial& V_minus,
                            const Polynomial& V_plus, const Margins& mg);

/// Largest r with {|x|^2 <= r} inside {V <= 1} (direction search).
double ball_radius(const Polynomial& V);

/// Seed level, then alternation; tau refinement on top when enabled.
Certificate certify(const CertProblem& pb, const CertOptions& opt = {});

/// One run at a fixed sample count.
Certificate certify_fixed(const CertProblem& pb, const CertOptions& opt, int taus);

nlohmann::json certificate_to_json(const Certificate& c);
Certificate certificate_from_json(const nlohmann::json& j);
std::string summary_line(const Certificate& c);

}  // namespace orbitroa
