#pragma once

// Sparse multivariate polynomials with real coefficients.
//
// Terms are kept in graded lexicographic order: lower total degree first,
// and within one degree the exponent vectors compare lexicographically with
// x1 ranking highest, so the degree-two monomials of (x1, x2) are ordered
// x1^2, x1*x2, x2^2. Coefficients whose magnitude falls below kPruneTol
// after an arithmetic operation are dropped.

#include <Eigen/Dense>
#include <map>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

namespace orbitroa {

inline constexpr double kPruneTol = 1e-14;

struct Monomial {
  std::vector<int> exponents;

  Monomial() = default;
  explicit Monomial(std::vector<int> e) : exponents(std::move(e)) {}
  static Monomial one(int nvars) { return Monomial(std::vector<int>(nvars, 0)); }
  static Monomial var(int nvars, int i, int power = 1);

  int nvars() const { return static_cast<int>(exponents.size()); }
  int degree() const;
  Monomial operator*(const Monomial& o) const;
  bool operator==(const Monomial& o) const = default;
};

struct GrlexLess {
  bool operator()(const Monomial& a, const Monomial& b) const;
};

class Polynomial {
 public:
  using Terms = std::map<Monomial, double, GrlexLess>;

  explicit Polynomial(int nvars = 0) : nvars_(nvars) {}
  static Polynomial constant(int nvars, double c);
  static Polynomial variable(int nvars, int i);
  /// Sum of squares of the variables, ||x||^2.
  static Polynomial norm_squared(int nvars);

  int nvars() const { return nvars_; }
  const Terms& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  /// Total degree; -1 for the zero polynomial.
  int degree() const;
  /// Smallest total degree among stored terms; -1 for zero.
  int min_degree() const;
  double coeff(const Monomial& m) const;
  double max_abs_coeff() const;

  /// Adds c to the coefficient of m (pruning the result).
  void add_term(const Monomial& m, double c);

  Polynomial operator-() const;
  Polynomial& operator+=(const Polynomial& o);
  Polynomial& operator-=(const Polynomial& o);
  Polynomial& operator*=(double s);

  double evaluate(std::span<const double> point) const;
  double evaluate(const Eigen::VectorXd& point) const {
    return evaluate(std::span<const double>(point.data(), point.size()));
  }

  /// Drops every term of total degree above max_degree.
  Polynomial truncated(int max_degree) const;

  /// Same coefficients viewed with nvars >= nvars() variables (new variables
  /// appended with zero exponent).
  Polynomial widened(int nvars) const;

 private:
  int nvars_;
  Terms terms_;
};

Polynomial operator+(Polynomial p, const Polynomial& q);
Polynomial operator-(Polynomial p, const Polynomial& q);
Polynomial operator*(const Polynomial& p, const Polynomial& q);
Polynomial operator*(Polynomial p, double s);
Polynomial operator*(double s, Polynomial p);

Polynomial add(const Polynomial& p, const Polynomial& q);
Polynomial mul(const Polynomial& p, const Polynomial& q);
Polynomial pow(const Polynomial& p, int k);
Polynomial differentiate(const Polynomial& p, int var);
double evaluate(const Polynomial& p, std::span<const double> point);

/// p(M*y + b) as a polynomial in y. M has p.nvars() rows.
Polynomial substitute_affine(const Polynomial& p, const Eigen::MatrixXd& M,
                             const Eigen::VectorXd& b);

/// p(q_1(y), ..., q_n(y)); every q_i shares one variable count.
Polynomial compose(const Polynomial& p, const std::vector<Polynomial>& subs);

/// All monomials of total degree in [min_degree, max_degree], graded-lex.
std::vector<Monomial> monomial_basis(int nvars, int max_degree,
                                     int min_degree = 0);

/// Polynomial map R^nvars -> R^size().
class PolynomialVector {
 public:
  PolynomialVector() = default;
  PolynomialVector(int nvars, std::vector<Polynomial> components);

  int nvars() const { return nvars_; }
  int size() const { return static_cast<int>(components_.size()); }
  const Polynomial& operator[](int i) const { return components_[i]; }
  const std::vector<Polynomial>& components() const { return components_; }
  int degree() const;

  Eigen::VectorXd evaluate(std::span<const double> point) const;
  /// size() x nvars() matrix of partial derivatives at point.
  Eigen::MatrixXd jacobian(std::span<const double> point) const;
  PolynomialVector substitute_affine(const Eigen::MatrixXd& M,
                                     const Eigen::VectorXd& b) const;

 private:
  int nvars_ = 0;
  std::vector<Polynomial> components_;
};

/// Flattened polynomial map evaluated without map traversal; used in the
/// integrator hot loop.
class CompiledPolyVector {
 public:
  CompiledPolyVector() = default;
  explicit CompiledPolyVector(const PolynomialVector& pv);

  int nvars() const { return nvars_; }
  int size() const { return size_; }
  void evaluate(const double* point, double* out) const;

 private:
  int nvars_ = 0;
  int size_ = 0;
  std::vector<int> max_exp_;
  struct Term {
    int component;
    double coeff;
    int first_factor;
    int num_factors;
  };
  std::vector<Term> terms_;
  std::vector<std::pair<int, int>> factors_;  // (variable, exponent)
};

std::string to_string(const Polynomial& p);

void to_json(nlohmann::json& j, const Polynomial& p);
void from_json(const nlohmann::json& j, Polynomial& p);
nlohmann::json to_json(const PolynomialVector& pv);
PolynomialVector poly_vector_from_json(const nlohmann::json& j, int nvars);

}  // namespace orbitroa
