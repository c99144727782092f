#include "orbitroa/hybridmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/json_util.hpp"

namespace orbitroa {

namespace {

double atom_value(AtomFn fn, double a) { return fn == AtomFn::kSin ? std::sin(a) : std::cos(a); }

double atom_derivative(AtomFn fn, double a) {
  return fn == AtomFn::kSin ? std::cos(a) : -std::sin(a);
}

// k-th derivative of sin/cos at a.
double atom_derivative_k(AtomFn fn, double a, int k) {
  const int shift = (fn == AtomFn::kSin ? 0 : 1) + k;
  switch (shift % 4) {
    case 0: return std::sin(a);
    case 1: return std::cos(a);
    case 2: return -std::sin(a);
    default: return -std::cos(a);
  }
}

std::string fn_name(AtomFn fn) { return fn == AtomFn::kSin ? "sin" : "cos"; }

}  // namespace

HybridModel::HybridModel(int n, int m, std::vector<HybridPhase> phases, std::vector<Atom> atoms,
                         std::string name)
    : n_(n), m_(m), phases_(std::move(phases)), atoms_(std::move(atoms)), name_(std::move(name)) {
  require(n_ >= 1, "model state dimension must be positive");
  require(m_ >= 0, "model control dimension must be non-negative");
  require(!phases_.empty(), "model needs at least one phase");
  const int ext = n_ + m_ + num_atoms();
  for (const auto& a : atoms_) {
    require(a.arg.nvars() == n_ + m_, "atom argument must be a polynomial in (x, u)");
  }
  for (int k = 0; k < num_phases(); ++k) {
    const auto& ph = phases_[k];
    const std::string where = "phase " + std::to_string(k) + ": ";
    require(ph.f.size() == n_, where + "f must have n components");
    require(ph.f.nvars() == ext, where + "f polynomials must have n + m + atoms variables");
    require(ph.surface.has_value() == ph.delta.has_value(),
            where + "surface and delta must be given together");
    if (ph.surface) {
      const auto& s = *ph.surface;
      require(s.c_minus.size() == n_ && s.c_plus.size() == n_, where + "normal vector length");
      if (s.c_minus.norm() == 0.0 || s.c_plus.norm() == 0.0) {
        fail(ErrorKind::kInvalidArgument, where + "zero normal vector on switching surface");
      }
      require(s.guard.nvars() == n_, where + "guard must be a polynomial in x");
      require(ph.delta->size() == n_ && ph.delta->nvars() == n_,
              where + "delta must map R^n to R^n");
    }
  }
  if (num_phases() > 1) {
    for (int k = 0; k < num_phases(); ++k) {
      require(phases_[k].surface.has_value(),
              "every phase of a multi-phase model needs an exit surface");
    }
  }

  for (const auto& ph : phases_) {
    Compiled c;
    c.f = CompiledPolyVector(ph.f);
    for (int v = 0; v < ext; ++v) {
      std::vector<Polynomial> d;
      for (const auto& comp : ph.f.components()) d.push_back(differentiate(comp, v));
      c.df.emplace_back(PolynomialVector(ext, std::move(d)));
    }
    compiled_.push_back(std::move(c));
  }
  for (const auto& a : atoms_) {
    std::vector<Polynomial> g;
    for (int v = 0; v < n_ + m_; ++v) g.push_back(differentiate(a.arg, v));
    atom_grad_.push_back(std::move(g));
  }
}

bool HybridModel::is_hybrid() const {
  for (const auto& ph : phases_) {
    if (ph.surface) return true;
  }
  return false;
}

void HybridModel::extended_point(const double* x, const double* u, double* ext) const {
  for (int i = 0; i < n_; ++i) ext[i] = x[i];
  for (int i = 0; i < m_; ++i) ext[n_ + i] = u[i];
  for (int k = 0; k < num_atoms(); ++k) {
    const double a = atoms_[k].arg.evaluate(std::span<const double>(ext, n_ + m_));
    ext[n_ + m_ + k] = atom_value(atoms_[k].fn, a);
  }
}

void HybridModel::field(int phase, const double* x, const double* u, double* out) const {
  double buf[64];
  std::vector<double> heap;
  double* ext = buf;
  const int next = n_ + m_ + num_atoms();
  if (next > 64) {
    heap.resize(next);
    ext = heap.data();
  }
  extended_point(x, u, ext);
  compiled_.at(phase).f.evaluate(ext, out);
}

Eigen::VectorXd HybridModel::field(int phase, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u) const {
  require(x.size() == n_ && u.size() == m_, "field: dimension mismatch");
  require(phase >= 0 && phase < num_phases(), "field: phase index out of range");
  Eigen::VectorXd out(n_);
  field(phase, x.data(), u.data(), out.data());
  return out;
}

namespace {

// Jacobian of f wrt the extended variable block [offset, offset + count),
// including chain-rule contributions through atoms.
Eigen::MatrixXd chain_jacobian(int n, int m, const std::vector<Atom>& atoms,
                               const std::vector<std::vector<Polynomial>>& atom_grad,
                               const std::vector<CompiledPolyVector>& df, const std::vector<double>& ext,
                               int offset, int count) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, count);
  Eigen::VectorXd col(n);
  for (int v = 0; v < count; ++v) {
    df[offset + v].evaluate(ext.data(), col.data());
    J.col(v) = col;
  }
  std::span<const double> xu(ext.data(), n + m);
  for (size_t k = 0; k < atoms.size(); ++k) {
    df[n + m + k].evaluate(ext.data(), col.data());
    const double da = atom_derivative(atoms[k].fn, atoms[k].arg.evaluate(xu));
    for (int v = 0; v < count; ++v) {
      const double g = atom_grad[k][offset + v].evaluate(xu);
      if (g != 0.0) J.col(v) += col * (da * g);
    }
  }
  return J;
}

}  // namespace

Eigen::MatrixXd HybridModel::jacobian_x(int phase, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& u) const {
  require(x.size() == n_ && u.size() == m_, "jacobian: dimension mismatch");
  std::vector<double> ext(n_ + m_ + num_atoms());
  extended_point(x.data(), u.data(), ext.data());
  return chain_jacobian(n_, m_, atoms_, atom_grad_, compiled_.at(phase).df, ext, 0, n_);
}

Eigen::MatrixXd HybridModel::jacobian_u(int phase, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& u) const {
  require(x.size() == n_ && u.size() == m_, "jacobian: dimension mismatch");
  std::vector<double> ext(n_ + m_ + num_atoms());
  extended_point(x.data(), u.data(), ext.data());
  return chain_jacobian(n_, m_, atoms_, atom_grad_, compiled_.at(phase).df, ext, n_, m_);
}

Eigen::VectorXd HybridModel::apply_delta(int phase, const Eigen::VectorXd& x) const {
  const auto& ph = phases_.at(phase);
  require(ph.delta.has_value(), "phase has no impact map");
  return ph.delta->evaluate(std::span<const double>(x.data(), x.size()));
}

Eigen::MatrixXd HybridModel::delta_jacobian(int phase, const Eigen::VectorXd& x) const {
  const auto& ph = phases_.at(phase);
  require(ph.delta.has_value(), "phase has no impact map");
  return ph.delta->jacobian(std::span<const double>(x.data(), x.size()));
}

double HybridModel::guard(int phase, const Eigen::VectorXd& x) const {
  const auto& ph = phases_.at(phase);
  require(ph.surface.has_value(), "phase has no switching surface");
  return ph.surface->guard.evaluate(x);
}

Eigen::VectorXd eval_field(const HybridModel& model, int phase, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) {
  return model.field(phase, x, u);
}

Polynomial taylor_atom(const Atom& atom, const Eigen::VectorXd& center, int degree) {
  const int k = atom.arg.nvars();
  require(center.size() == k, "taylor_atom: center length mismatch");
  const double a0 = atom.arg.evaluate(center);
  // delta(y) = arg(center + y) - arg(center), no constant term.
  Polynomial delta = substitute_affine(atom.arg, Eigen::MatrixXd::Identity(k, k), center);
  delta.add_term(Monomial::one(k), -a0);
  delta = delta.truncated(degree);
  Polynomial result = Polynomial::constant(k, atom_value(atom.fn, a0));
  Polynomial dpow = Polynomial::constant(k, 1.0);
  double factorial = 1.0;
  for (int j = 1; j <= degree; ++j) {
    dpow = (dpow * delta).truncated(degree);
    if (dpow.is_zero()) break;
    factorial *= j;
    result += dpow * (atom_derivative_k(atom.fn, a0, j) / factorial);
  }
  return result;
}

PolynomialVector taylor_local(const HybridModel& model, int phase, const Eigen::VectorXd& center,
                              int degree) {
  const int k = model.n() + model.m();
  require(center.size() == k, "taylor_polynomialize: center must have n + m entries");
  require(degree >= 0, "taylor_polynomialize: negative degree");
  std::vector<Polynomial> subs;
  for (int i = 0; i < k; ++i) {
    Polynomial s = Polynomial::constant(k, center(i));
    s.add_term(Monomial::var(k, i), 1.0);
    subs.push_back(std::move(s));
  }
  for (const auto& a : model.atoms()) subs.push_back(taylor_atom(a, center, degree));
  std::vector<Polynomial> out;
  for (const auto& comp : model.phase(phase).f.components()) {
    out.push_back(compose(comp, subs).truncated(degree));
  }
  return PolynomialVector(k, std::move(out));
}

PolynomialVector taylor_polynomialize(const HybridModel& model, int phase,
                                      const Eigen::VectorXd& center, int degree) {
  const int k = model.n() + model.m();
  PolynomialVector local = taylor_local(model, phase, center, degree);
  return local.substitute_affine(Eigen::MatrixXd::Identity(k, k), -center);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Polynomial poly_at(const nlohmann::json& j, const std::string& where) {
  try {
    return j.get<Polynomial>();
  } catch (const Error& e) {
    fail(ErrorKind::kParse, where + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, where + ": " + e.what());
  }
}

Eigen::VectorXd vec_at(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::kParse, where + ": expected an array of numbers");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(ErrorKind::kParse, where + ": expected a number");
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

HybridModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::kParse, "model: top level must be an object");
  for (const char* key : {"n", "m", "phases"}) {
    if (!j.contains(key)) fail(ErrorKind::kParse, std::string("model: missing '") + key + "'");
  }
  const int n = j.at("n").get<int>();
  const int m = j.at("m").get<int>();
  if (n < 1 || m < 0) fail(ErrorKind::kParse, "model: 'n' must be >= 1 and 'm' >= 0");

  std::vector<Atom> atoms;
  if (j.contains("atoms") && !j.at("atoms").is_null()) {
    const auto& aj = j.at("atoms");
    for (size_t k = 0; k < aj.size(); ++k) {
      const std::string where = "atoms[" + std::to_string(k) + "]";
      const std::string fn = aj[k].at("fn").get<std::string>();
      Atom a;
      if (fn == "sin") {
        a.fn = AtomFn::kSin;
      } else if (fn == "cos") {
        a.fn = AtomFn::kCos;
      } else {
        fail(ErrorKind::kParse, where + ": unsupported atom '" + fn + "'");
      }
      a.arg = poly_at(aj[k].at("arg"), where + ".arg");
      if (a.arg.nvars() != n + m) {
        fail(ErrorKind::kParse, where + ".arg: atom argument must have n + m variables");
      }
      atoms.push_back(std::move(a));
    }
  }
  const int ext = n + m + static_cast<int>(atoms.size());

  std::vector<HybridPhase> phases;
  const auto& pj = j.at("phases");
  if (!pj.is_array() || pj.empty()) fail(ErrorKind::kParse, "model: 'phases' must be a non-empty array");
  for (size_t k = 0; k < pj.size(); ++k) {
    const std::string where = "phases[" + std::to_string(k) + "]";
    const auto& ph = pj[k];
    HybridPhase phase;
    if (!ph.contains("f")) fail(ErrorKind::kParse, where + ": missing 'f'");
    std::vector<Polynomial> f;
    for (size_t i = 0; i < ph.at("f").size(); ++i) {
      Polynomial p = poly_at(ph.at("f")[i], where + ".f[" + std::to_string(i) + "]");
      if (p.nvars() != ext) {
        fail(ErrorKind::kParse, where + ".f[" + std::to_string(i) + "]: expected nvars=" +
                                    std::to_string(ext) + " (n + m + atoms)");
      }
      f.push_back(std::move(p));
    }
    if (static_cast<int>(f.size()) != n) {
      fail(ErrorKind::kParse, where + ".f: dimension inconsistency, expected n components");
    }
    phase.f = PolynomialVector(ext, std::move(f));

    const bool has_surface = ph.contains("surface") && !ph.at("surface").is_null();
    const bool has_delta = ph.contains("delta") && !ph.at("delta").is_null();
    if (has_surface != has_delta) {
      fail(ErrorKind::kParse, where + ": 'surface' and 'delta' must both be present or both null");
    }
    if (has_surface) {
      const auto& sj = ph.at("surface");
      SwitchingSurface s;
      s.c_minus = vec_at(sj.at("c_minus"), where + ".surface.c_minus");
      s.d_minus = sj.at("d_minus").get<double>();
      s.c_plus = vec_at(sj.at("c_plus"), where + ".surface.c_plus");
      s.d_plus = sj.at("d_plus").get<double>();
      s.guard = sj.contains("guard") && !sj.at("guard").is_null()
                    ? poly_at(sj.at("guard"), where + ".surface.guard")
                    : Polynomial::constant(n, 1.0);
      if (s.c_minus.size() != n || s.c_plus.size() != n) {
        fail(ErrorKind::kParse, where + ".surface: dimension inconsistency in normal vectors");
      }
      if (s.guard.nvars() != n) fail(ErrorKind::kParse, where + ".surface.guard: expected nvars=n");
      if (s.c_minus.norm() == 0.0) fail(ErrorKind::kInvalidArgument, where + ".surface.c_minus: zero normal");
      if (s.c_plus.norm() == 0.0) fail(ErrorKind::kInvalidArgument, where + ".surface.c_plus: zero normal");
      phase.surface = std::move(s);
      std::vector<Polynomial> d;
      for (size_t i = 0; i < ph.at("delta").size(); ++i) {
        Polynomial p = poly_at(ph.at("delta")[i], where + ".delta[" + std::to_string(i) + "]");
        if (p.nvars() != n) fail(ErrorKind::kParse, where + ".delta: expected nvars=n");
        d.push_back(std::move(p));
      }
      if (static_cast<int>(d.size()) != n) {
        fail(ErrorKind::kParse, where + ".delta: dimension inconsistency, expected n components");
      }
      phase.delta = PolynomialVector(n, std::move(d));
    }
    phases.push_back(std::move(phase));
  }
  std::string name = j.contains("name") ? j.at("name").get<std::string>() : std::string();
  return HybridModel(n, m, std::move(phases), std::move(atoms), std::move(name));
}

nlohmann::json model_to_json(const HybridModel& model) {
  nlohmann::json j;
  if (!model.name().empty()) j["name"] = model.name();
  j["n"] = model.n();
  j["m"] = model.m();
  nlohmann::json phases = nlohmann::json::array();
  for (int k = 0; k < model.num_phases(); ++k) {
    const auto& ph = model.phase(k);
    nlohmann::json pj;
    pj["f"] = to_json(ph.f);
    if (ph.surface) {
      const auto& s = *ph.surface;
      pj["surface"] = {{"c_minus", eigen_to_json(s.c_minus)}, {"d_minus", s.d_minus},
                       {"guard", s.guard},
                       {"c_plus", eigen_to_json(s.c_plus)}, {"d_plus", s.d_plus}};
      pj["delta"] = to_json(*ph.delta);
    } else {
      pj["surface"] = nullptr;
      pj["delta"] = nullptr;
    }
    phases.push_back(std::move(pj));
  }
  j["phases"] = std::move(phases);
  if (model.num_atoms() > 0) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& a : model.atoms()) atoms.push_back({{"fn", fn_name(a.fn)}, {"arg", a.arg}});
    j["atoms"] = std::move(atoms);
  }
  return j;
}

HybridModel load_model_text(const std::string& text) {
  return model_from_json(parse_json_text(text, "model"));
}

HybridModel load_model_file(const std::string& path) {
  return model_from_json(read_json_file(path));
}

}  // namespace orbitroa
