#pragma once

// Hybrid polynomial systems: cyclic sequences of continuous phases, each
// optionally ending on a planar switching surface with an impact map.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "orbitroa/polyalg.hpp"

namespace orbitroa {

enum class AtomFn { kSin, kCos };

/// Non-polynomial scalar a = fn(arg(x, u)). Field polynomials treat each atom
/// as an extra variable appended after (x, u).
struct Atom {
  AtomFn fn = AtomFn::kSin;
  Polynomial arg;  // over n + m variables
};

/// S- = {x : c_minus'x = d_minus, guard(x) >= 0}, S+ = {x : c_plus'x = d_plus}.
struct SwitchingSurface {
  Eigen::VectorXd c_minus;
  double d_minus = 0.0;
  Polynomial guard;
  Eigen::VectorXd c_plus;
  double d_plus = 0.0;

  double exit_residual(const Eigen::VectorXd& x) const { return c_minus.dot(x) - d_minus; }
  double entry_residual(const Eigen::VectorXd& x) const { return c_plus.dot(x) - d_plus; }
};

struct HybridPhase {
  PolynomialVector f;  // over n + m + (number of atoms) variables
  std::optional<SwitchingSurface> surface;
  std::optional<PolynomialVector> delta;  // R^n -> R^n
};

class HybridModel {
 public:
  HybridModel(int n, int m, std::vector<HybridPhase> phases,
              std::vector<Atom> atoms = {}, std::string name = {});

  int n() const { return n_; }
  int m() const { return m_; }
  int num_phases() const { return static_cast<int>(phases_.size()); }
  int num_atoms() const { return static_cast<int>(atoms_.size()); }
  const std::string& name() const { return name_; }
  const HybridPhase& phase(int k) const { return phases_.at(k); }
  const std::vector<Atom>& atoms() const { return atoms_; }
  bool is_hybrid() const;
  bool is_polynomial() const { return atoms_.empty(); }
  int next_phase(int k) const { return (k + 1) % num_phases(); }

  Eigen::VectorXd field(int phase, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  /// Field evaluation into a raw buffer (integrator hot path).
  void field(int phase, const double* x, const double* u, double* out) const;
  Eigen::MatrixXd jacobian_x(int phase, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  Eigen::MatrixXd jacobian_u(int phase, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;

  Eigen::VectorXd apply_delta(int phase, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd delta_jacobian(int phase, const Eigen::VectorXd& x) const;
  double guard(int phase, const Eigen::VectorXd& x) const;

 private:
  struct Compiled {
    CompiledPolyVector f;
    std::vector<CompiledPolyVector> df;  // derivative wrt each extended variable
  };
  void extended_point(const double* x, const double* u, double* ext) const;

  int n_;
  int m_;
  std::vector<HybridPhase> phases_;
  std::vector<Atom> atoms_;
  std::string name_;
  std::vector<Compiled> compiled_;
  std::vector<std::vector<Polynomial>> atom_grad_;  // d arg_k / d (x,u)_v
};

/// Field of one phase as a polynomial in (x, u), Taylor-expanded about center
/// (length n + m) to the given total degree. Exact for polynomial phases whose
/// degree does not exceed `degree`.
PolynomialVector taylor_polynomialize(const HybridModel& model, int phase,
                                      const Eigen::VectorXd& center, int degree);

/// Same expansion expressed in the offset y = (x, u) - center.
PolynomialVector taylor_local(const HybridModel& model, int phase,
                              const Eigen::VectorXd& center, int degree);

/// Taylor polynomial of fn(arg) about center in the offset y, to `degree`.
Polynomial taylor_atom(const Atom& atom, const Eigen::VectorXd& center, int degree);

HybridModel load_model_text(const std::string& text);
HybridModel load_model_file(const std::string& path);
HybridModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const HybridModel& model);

Eigen::VectorXd eval_field(const HybridModel& model, int phase, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u);

}  // namespace orbitroa
