#include "orbitroa/polyalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "orbitroa/error.hpp"

namespace orbitroa {

Monomial Monomial::var(int nvars, int i, int power) {
  Monomial m = one(nvars);
  m.exponents[i] = power;
  return m;
}

int Monomial::degree() const {
  return std::accumulate(exponents.begin(), exponents.end(), 0);
}

Monomial Monomial::operator*(const Monomial& o) const {
  Monomial r = *this;
  for (size_t i = 0; i < exponents.size(); ++i) r.exponents[i] += o.exponents[i];
  return r;
}

bool GrlexLess::operator()(const Monomial& a, const Monomial& b) const {
  const int da = a.degree();
  const int db = b.degree();
  if (da != db) return da < db;
  // Same degree: x1-heavy monomials come first.
  return std::lexicographical_compare(b.exponents.begin(), b.exponents.end(),
                                      a.exponents.begin(), a.exponents.end());
}

Polynomial Polynomial::constant(int nvars, double c) {
  Polynomial p(nvars);
  p.add_term(Monomial::one(nvars), c);
  return p;
}

Polynomial Polynomial::variable(int nvars, int i) {
  require(i >= 0 && i < nvars, "variable index out of range");
  Polynomial p(nvars);
  p.add_term(Monomial::var(nvars, i), 1.0);
  return p;
}

Polynomial Polynomial::norm_squared(int nvars) {
  Polynomial p(nvars);
  for (int i = 0; i < nvars; ++i) p.add_term(Monomial::var(nvars, i, 2), 1.0);
  return p;
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  return terms_.rbegin()->first.degree();
}

int Polynomial::min_degree() const {
  if (terms_.empty()) return -1;
  return terms_.begin()->first.degree();
}

double Polynomial::coeff(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& [mono, c] : terms_) m = std::max(m, std::abs(c));
  return m;
}

void Polynomial::add_term(const Monomial& m, double c) {
  require(m.nvars() == nvars_, "monomial variable count mismatch");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(m, c);
  if (!inserted) it->second += c;
  if (std::abs(it->second) < kPruneTol) terms_.erase(it);
}

Polynomial Polynomial::operator-() const {
  Polynomial r = *this;
  for (auto& [m, c] : r.terms_) c = -c;
  return r;
}

Polynomial& Polynomial::operator+=(const Polynomial& o) {
  require(o.nvars_ == nvars_, "polynomial dimension mismatch");
  for (const auto& [m, c] : o.terms_) add_term(m, c);
  return *this;
}

Polynomial& Polynomial::operator-=(const Polynomial& o) {
  require(o.nvars_ == nvars_, "polynomial dimension mismatch");
  for (const auto& [m, c] : o.terms_) add_term(m, -c);
  return *this;
}

Polynomial& Polynomial::operator*=(double s) {
  for (auto it = terms_.begin(); it != terms_.end();) {
    it->second *= s;
    if (std::abs(it->second) < kPruneTol) {
      it = terms_.erase(it);
    } else {
      ++it;
    }
  }
  return *this;
}

double Polynomial::evaluate(std::span<const double> point) const {
  require(static_cast<int>(point.size()) == nvars_,
          "evaluation point has wrong length");
  if (terms_.empty()) return 0.0;
  const int maxdeg = degree();
  // powers[v][k] = point[v]^k
  std::vector<double> powers(static_cast<size_t>(nvars_) * (maxdeg + 1));
  for (int v = 0; v < nvars_; ++v) {
    double* row = &powers[static_cast<size_t>(v) * (maxdeg + 1)];
    row[0] = 1.0;
    for (int k = 1; k <= maxdeg; ++k) row[k] = row[k - 1] * point[v];
  }
  double acc = 0.0;
  for (const auto& [m, c] : terms_) {
    double t = c;
    for (int v = 0; v < nvars_; ++v) {
      if (m.exponents[v] != 0) t *= powers[static_cast<size_t>(v) * (maxdeg + 1) + m.exponents[v]];
    }
    acc += t;
  }
  return acc;
}

Polynomial Polynomial::truncated(int max_degree) const {
  Polynomial r(nvars_);
  for (const auto& [m, c] : terms_) {
    if (m.degree() > max_degree) break;
    r.terms_.emplace_hint(r.terms_.end(), m, c);
  }
  return r;
}

Polynomial Polynomial::widened(int nvars) const {
  require(nvars >= nvars_, "cannot narrow a polynomial");
  Polynomial r(nvars);
  for (const auto& [m, c] : terms_) {
    Monomial w = Monomial::one(nvars);
    std::copy(m.exponents.begin(), m.exponents.end(), w.exponents.begin());
    r.terms_.emplace(w, c);
  }
  return r;
}

Polynomial operator+(Polynomial p, const Polynomial& q) { return p += q; }
Polynomial operator-(Polynomial p, const Polynomial& q) { return p -= q; }
Polynomial operator*(Polynomial p, double s) { return p *= s; }
Polynomial operator*(double s, Polynomial p) { return p *= s; }

Polynomial operator*(const Polynomial& p, const Polynomial& q) {
  require(p.nvars() == q.nvars(), "polynomial dimension mismatch");
  Polynomial r(p.nvars());
  for (const auto& [mp, cp] : p.terms()) {
    for (const auto& [mq, cq] : q.terms()) r.add_term(mp * mq, cp * cq);
  }
  return r;
}

Polynomial add(const Polynomial& p, const Polynomial& q) { return p + q; }
Polynomial mul(const Polynomial& p, const Polynomial& q) { return p * q; }

Polynomial pow(const Polynomial& p, int k) {
  require(k >= 0, "negative polynomial power");
  Polynomial r = Polynomial::constant(p.nvars(), 1.0);
  Polynomial base = p;
  while (k > 0) {
    if (k & 1) r = r * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return r;
}

Polynomial differentiate(const Polynomial& p, int var) {
  require(var >= 0 && var < p.nvars(), "differentiation variable out of range");
  Polynomial r(p.nvars());
  for (const auto& [m, c] : p.terms()) {
    const int e = m.exponents[var];
    if (e == 0) continue;
    Monomial d = m;
    d.exponents[var] = e - 1;
    r.add_term(d, c * e);
  }
  return r;
}

double evaluate(const Polynomial& p, std::span<const double> point) {
  return p.evaluate(point);
}

Polynomial compose(const Polynomial& p, const std::vector<Polynomial>& subs) {
  require(static_cast<int>(subs.size()) == p.nvars(),
          "compose: one substitution per variable required");
  const int k = subs.empty() ? 0 : subs.front().nvars();
  for (const auto& s : subs) require(s.nvars() == k, "compose: substitution dimension mismatch");

  // Cache powers of each substituted polynomial on demand.
  std::vector<std::vector<Polynomial>> powers(subs.size());
  auto power_of = [&](int v, int e) -> const Polynomial& {
    auto& cache = powers[v];
    if (cache.empty()) cache.push_back(Polynomial::constant(k, 1.0));
    while (static_cast<int>(cache.size()) <= e) cache.push_back(cache.back() * subs[v]);
    return cache[e];
  };

  Polynomial r(k);
  for (const auto& [m, c] : p.terms()) {
    Polynomial t = Polynomial::constant(k, c);
    for (int v = 0; v < p.nvars(); ++v) {
      if (m.exponents[v] != 0) t = t * power_of(v, m.exponents[v]);
    }
    r += t;
  }
  return r;
}

Polynomial substitute_affine(const Polynomial& p, const Eigen::MatrixXd& M,
                             const Eigen::VectorXd& b) {
  require(M.rows() == p.nvars() && b.size() == p.nvars(),
          "substitute_affine: shape mismatch");
  const int k = static_cast<int>(M.cols());
  std::vector<Polynomial> subs;
  subs.reserve(p.nvars());
  for (int i = 0; i < p.nvars(); ++i) {
    Polynomial s = Polynomial::constant(k, b(i));
    for (int j = 0; j < k; ++j) s.add_term(Monomial::var(k, j), M(i, j));
    subs.push_back(std::move(s));
  }
  return compose(p, subs);
}

namespace {

void append_monomials(int nvars, int degree, int var, std::vector<int>& cur,
                      std::vector<Monomial>& out) {
  if (var == nvars - 1) {
    cur[var] = degree;
    out.emplace_back(cur);
    cur[var] = 0;
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[var] = e;
    append_monomials(nvars, degree - e, var + 1, cur, out);
  }
  cur[var] = 0;
}

}  // namespace

std::vector<Monomial> monomial_basis(int nvars, int max_degree, int min_degree) {
  require(min_degree >= 0 && min_degree <= max_degree, "monomial_basis: bad degree range");
  std::vector<Monomial> out;
  if (nvars == 0) {
    if (min_degree == 0) out.emplace_back(std::vector<int>{});
    return out;
  }
  std::vector<int> cur(nvars, 0);
  for (int d = min_degree; d <= max_degree; ++d) append_monomials(nvars, d, 0, cur, out);
  return out;
}

PolynomialVector::PolynomialVector(int nvars, std::vector<Polynomial> components)
    : nvars_(nvars), components_(std::move(components)) {
  for (const auto& c : components_) {
    require(c.nvars() == nvars_, "PolynomialVector: component dimension mismatch");
  }
}

int PolynomialVector::degree() const {
  int d = -1;
  for (const auto& c : components_) d = std::max(d, c.degree());
  return d;
}

Eigen::VectorXd PolynomialVector::evaluate(std::span<const double> point) const {
  Eigen::VectorXd out(size());
  for (int i = 0; i < size(); ++i) out(i) = components_[i].evaluate(point);
  return out;
}

Eigen::MatrixXd PolynomialVector::jacobian(std::span<const double> point) const {
  Eigen::MatrixXd J(size(), nvars_);
  for (int i = 0; i < size(); ++i) {
    for (int v = 0; v < nvars_; ++v) J(i, v) = differentiate(components_[i], v).evaluate(point);
  }
  return J;
}

PolynomialVector PolynomialVector::substitute_affine(const Eigen::MatrixXd& M,
                                                     const Eigen::VectorXd& b) const {
  std::vector<Polynomial> out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(orbitroa::substitute_affine(c, M, b));
  return PolynomialVector(static_cast<int>(M.cols()), std::move(out));
}

CompiledPolyVector::CompiledPolyVector(const PolynomialVector& pv)
    : nvars_(pv.nvars()), size_(pv.size()), max_exp_(pv.nvars(), 0) {
  for (int i = 0; i < pv.size(); ++i) {
    for (const auto& [m, c] : pv[i].terms()) {
      Term t{i, c, static_cast<int>(factors_.size()), 0};
      for (int v = 0; v < nvars_; ++v) {
        if (m.exponents[v] == 0) continue;
        factors_.emplace_back(v, m.exponents[v]);
        max_exp_[v] = std::max(max_exp_[v], m.exponents[v]);
        ++t.num_factors;
      }
      terms_.push_back(t);
    }
  }
}

void CompiledPolyVector::evaluate(const double* point, double* out) const {
  int stride = 1;
  for (int e : max_exp_) stride = std::max(stride, e + 1);
  // Small fixed buffer covers every model shipped here; fall back otherwise.
  double stack_buf[256];
  std::vector<double> heap_buf;
  double* powers = stack_buf;
  const size_t need = static_cast<size_t>(nvars_) * stride;
  if (need > 256) {
    heap_buf.resize(need);
    powers = heap_buf.data();
  }
  for (int v = 0; v < nvars_; ++v) {
    double* row = powers + static_cast<size_t>(v) * stride;
    row[0] = 1.0;
    for (int k = 1; k <= max_exp_[v]; ++k) row[k] = row[k - 1] * point[v];
  }
  std::fill(out, out + size_, 0.0);
  for (const auto& t : terms_) {
    double val = t.coeff;
    for (int f = 0; f < t.num_factors; ++f) {
      const auto& [v, e] = factors_[t.first_factor + f];
      val *= powers[static_cast<size_t>(v) * stride + e];
    }
    out[t.component] += val;
  }
}

std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(6);
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    if (!first) os << (c < 0 ? " - " : " + ");
    else if (c < 0) os << "-";
    first = false;
    const double a = std::abs(c);
    const bool is_one = m.degree() == 0;
    if (a != 1.0 || is_one) os << a;
    bool need_star = a != 1.0;
    for (int v = 0; v < m.nvars(); ++v) {
      if (m.exponents[v] == 0) continue;
      if (need_star) os << "*";
      os << "x" << (v + 1);
      if (m.exponents[v] > 1) os << "^" << m.exponents[v];
      need_star = true;
    }
  }
  return os.str();
}

void to_json(nlohmann::json& j, const Polynomial& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [m, c] : p.terms()) {
    terms.push_back({{"c", c}, {"e", m.exponents}});
  }
  j = nlohmann::json{{"nvars", p.nvars()}, {"terms", std::move(terms)}};
}

void from_json(const nlohmann::json& j, Polynomial& p) {
  if (!j.is_object() || !j.contains("nvars") || !j.contains("terms")) {
    fail(ErrorKind::kParse, "polynomial must be an object with 'nvars' and 'terms'");
  }
  const int nvars = j.at("nvars").get<int>();
  if (nvars < 0) fail(ErrorKind::kParse, "polynomial 'nvars' must be non-negative");
  Polynomial r(nvars);
  for (const auto& t : j.at("terms")) {
    auto e = t.at("e").get<std::vector<int>>();
    if (static_cast<int>(e.size()) != nvars) {
      fail(ErrorKind::kParse, "polynomial term exponent length differs from 'nvars'");
    }
    for (int x : e) {
      if (x < 0) fail(ErrorKind::kParse, "negative exponent in polynomial term");
    }
    r.add_term(Monomial(std::move(e)), t.at("c").get<double>());
  }
  p = std::move(r);
}

nlohmann::json to_json(const PolynomialVector& pv) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : pv.components()) arr.push_back(c);
  return arr;
}

PolynomialVector poly_vector_from_json(const nlohmann::json& j, int nvars) {
  if (!j.is_array()) fail(ErrorKind::kParse, "polynomial vector must be an array");
  std::vector<Polynomial> comps;
  for (const auto& pj : j) {
    Polynomial p = pj.get<Polynomial>();
    if (p.nvars() != nvars) {
      fail(ErrorKind::kParse, "polynomial has nvars=" + std::to_string(p.nvars()) +
                                  ", expected " + std::to_string(nvars));
    }
    comps.push_back(std::move(p));
  }
  return PolynomialVector(nvars, std::move(comps));
}

}  // namespace orbitroa
