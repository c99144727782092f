#include "orbitroa/sosprog.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/parallel.hpp"

namespace orbitroa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------- programs

int SosProgram::add_free(double cost) { return sdp_.add_free(cost); }

void SosProgram::bound_above(int var, double ub) {
  int s = sdp_.add_lin();
  int r = sdp_.add_row(ub);
  row_owner_.push_back({-1, Monomial::one(nvars_)});
  sdp_.free_entries.push_back({r, var, 1.0});
  sdp_.lin_entries.push_back({r, s, 1.0});
}

int SosProgram::add_gram(std::vector<Monomial> basis) {
  int blk = sdp_.add_block(static_cast<int>(basis.size()));
  bases_.push_back(std::move(basis));
  gram_block_.push_back(blk);
  return static_cast<int>(bases_.size()) - 1;
}

namespace {

struct RowData {
  double rhs = 0.0;
  std::vector<SdpEntry> block;  // .row holds the block index
  std::vector<SdpScalarEntry> free;
};

using RowMap = std::map<Monomial, RowData, GrlexLess>;

void add_gram_terms(RowMap& rows, const std::vector<Monomial>& basis, int blk,
                    const Polynomial& w, double sign) {
  const int nb = static_cast<int>(basis.size());
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b <= a; ++b) {
      Monomial ab = basis[a] * basis[b];
      for (const auto& [mw, cw] : w.terms()) rows[ab * mw].block.push_back({blk, a, b, sign * cw});
    }
}

}  // namespace

int SosProgram::constrain_sos(const SosExpr& e, std::vector<Monomial> basis, int slack) {
  const int g = add_gram(basis);
  constraints_.push_back({e, g, slack});
  RowMap rows;
  double scale = std::max(1.0, e.fixed.max_abs_coeff());
  for (const auto& [m, c] : e.fixed.terms()) rows[m].rhs -= c;
  for (const auto& [k, p] : e.free)
    for (const auto& [m, c] : p.terms()) rows[m].free.push_back({0, k, c});
  for (const auto& [gid, w] : e.gram) add_gram_terms(rows, bases_[gid], gram_block_[gid], w, 1.0);
  add_gram_terms(rows, bases_[g], gram_block_[g], Polynomial::constant(nvars_, 1.0), -1.0);
  if (slack >= 0)
    for (const auto& m : bases_[g]) rows[m * m].free.push_back({0, slack, -1.0});

  for (auto& [m, rd] : rows) {
    if (rd.block.empty() && rd.free.empty()) {
      // Monomial no decision variable can reach: must vanish on its own.
      if (std::abs(rd.rhs) > 1e-9 * scale) infeasible_ = true;
      continue;
    }
    int r = sdp_.add_row(rd.rhs);
    row_owner_.push_back({static_cast<int>(constraints_.size()) - 1, m});
    for (auto be : rd.block) sdp_.block_entries[be.row].push_back({r, be.i, be.j, be.v});
    for (auto fe : rd.free) sdp_.free_entries.push_back({r, fe.col, fe.v});
  }
  return g;
}

SdpResult SosProgram::solve(const SdpOptions& opt) const {
  if (infeasible_) {
    SdpResult r;
    r.status = SdpStatus::kPrimalInfeasible;
    return r;
  }
  return solve_sdp(sdp_, opt);
}

Polynomial SosProgram::gram_polynomial(const SdpResult& r, int g) const {
  const auto& B = bases_[g];
  const MatrixXd& X = r.X[gram_block_[g]];
  Polynomial p(nvars_);
  for (size_t a = 0; a < B.size(); ++a)
    for (size_t b = 0; b < B.size(); ++b) p.add_term(B[a] * B[b], X(a, b));
  return p;
}

Polynomial SosProgram::evaluate(const SdpResult& r, const SosExpr& e) const {
  Polynomial p = e.fixed.nvars() == nvars_ ? e.fixed : Polynomial(nvars_);
  for (const auto& [k, q] : e.free) p += r.x_free(k) * q;
  for (const auto& [g, w] : e.gram) p += w * gram_polynomial(r, g);
  return p;
}

double SosProgram::identity_residual(const SdpResult& r) const {
  double worst = 0.0;
  for (const auto& c : constraints_) {
    Polynomial d = evaluate(r, c.expr) - gram_polynomial(r, c.gram);
    if (c.slack >= 0) d -= r.x_free(c.slack) * basis_square_sum(bases_[c.gram]);
    worst = std::max(worst, d.max_abs_coeff());
  }
  return worst;
}

std::vector<SosProgram::RowResidual> SosProgram::row_residuals(const SdpResult& r) const {
  Eigen::VectorXd res = sdp_.b;
  for (size_t k = 0; k < sdp_.block_entries.size(); ++k)
    for (const auto& e : sdp_.block_entries[k])
      res(e.row) -= e.i == e.j ? e.v * r.X[k](e.i, e.i) : 2 * e.v * r.X[k](e.i, e.j);
  for (const auto& e : sdp_.free_entries) res(e.row) -= e.v * r.x_free(e.col);
  for (const auto& e : sdp_.lin_entries) res(e.row) -= e.v * r.x_lin(e.col);
  std::vector<RowResidual> out;
  for (int i = 0; i < sdp_.rows; ++i) out.push_back({row_owner_[i].first, row_owner_[i].second, res(i)});
  return out;
}

Polynomial basis_square_sum(const std::vector<Monomial>& basis) {
  Polynomial q(basis.empty() ? 0 : basis[0].nvars());
  for (const auto& m : basis) q.add_term(m * m, 1.0);
  return q;
}

std::vector<Monomial> sos_basis(int nvars, int lo, int hi) {
  lo = std::max(lo, 0);
  return monomial_basis(nvars, (hi + 1) / 2, lo / 2);
}

namespace {

int even_up(int d) { return d <= 0 ? 0 : d + (d % 2); }

double relative_cap(double x) { return std::max(1e-300, x); }

}  // namespace

SosCheck assemble_sos(const Polynomial& target, int max_degree) {
  const int deg = target.degree();
  if (deg < 0) {
    SosCheck c;
    c.status = SdpStatus::kOptimal;
    return c;
  }
  require(deg % 2 == 0, "assemble_sos: odd-degree target cannot be a sum of squares");
  if (max_degree >= 0)
    require(deg <= 2 * max_degree, "assemble_sos: target degree exceeds twice the basis degree");
  const int nv = target.nvars();
  const double alpha = 1.0 / relative_cap(target.max_abs_coeff());
  SosProgram prog(nv);
  int t = prog.add_free(-1.0);
  prog.bound_above(t, 1.0);
  SosCheck out;
  out.basis = sos_basis(nv, target.min_degree(), max_degree >= 0 ? 2 * max_degree : deg);
  SosExpr e{alpha * target, {}, {}};
  int g = prog.constrain_sos(e, out.basis, t);
  SdpResult r = prog.solve();
  out.status = r.status;
  if (r.status == SdpStatus::kOptimal) {
    out.margin = r.x_free(t);
    out.gram = prog.gram(r, g) / alpha;
    out.residual = prog.identity_residual(r) / alpha;
  }
  return out;
}

const char* to_string(CondStatus s) {
  switch (s) {
    case CondStatus::kPass: return "pass";
    case CondStatus::kFail: return "fail";
    case CondStatus::kNumerical: return "numerical";
    case CondStatus::kSkipped: return "skipped";
  }
  return "?";
}

// ---------------------------------------------------------------- samples

namespace {

// Linear polynomial c0 + g'x.
Polynomial affine_poly(int nv, double c0, const VectorXd& g) {
  Polynomial p = Polynomial::constant(nv, c0);
  for (int i = 0; i < nv; ++i) p.add_term(Monomial::var(nv, i), g(i));
  return p;
}

int field_degree(const HybridModel& model, int phase, int taylor_degree) {
  return model.is_polynomial() ? std::max(1, model.phase(phase).f.degree()) : taylor_degree;
}

// Field F(x* + Pi'x, u* - Kx) as polynomials in x (the transverse coordinates).
std::vector<Polynomial> field_on_surface(const HybridModel& model, const TauFrame& fr, int deg) {
  const int n = model.n(), m = model.m(), dim = static_cast<int>(fr.Pi.rows());
  VectorXd center(n + m);
  center << fr.xs, (m ? VectorXd(fr.us) : VectorXd());
  PolynomialVector F = taylor_local(model, fr.phase, center, deg);
  MatrixXd M = MatrixXd::Zero(n + m, dim);
  M.topRows(n) = fr.Pi.transpose();
  if (m && fr.K.size()) M.bottomRows(m) = -fr.K;
  return F.substitute_affine(M, VectorXd::Zero(n + m)).components();
}

}  // namespace

std::vector<TauSample> make_samples(const CertProblem& pb, int N, int taylor_degree,
                                    bool premature) {
  const auto& fam = *pb.family;
  const auto& model = *pb.model;
  const auto& orbit = *pb.orbit;
  require(N >= 2, "tau samples: need at least two per segment");
  const int dim = fam.n - 1;
  std::vector<TauSample> out;
  const int ns = static_cast<int>(fam.segments.size());
  for (int k = 0; k < ns; ++k) {
    const auto& seg = fam.segments[k];
    const double t0 = seg.tau.front(), t1 = seg.tau.back();
    const int base = static_cast<int>(out.size());
    for (int i = 0; i < N; ++i) {
      TauSample s;
      s.seg = k;
      if (fam.hybrid) {
        s.tau = i == N - 1 ? t1 : t0 + (t1 - t0) * i / (N - 1);
        s.dtau = (t1 - t0) / (N - 1);
        s.prev = base + (i == N - 1 ? i - 1 : i);
        s.next = base + (i == N - 1 ? i : i + 1);
      } else {
        s.tau = t0 + (t1 - t0) * i / N;
        s.dtau = (t1 - t0) / N;
        s.prev = base + i;
        s.next = base + (i + 1) % N;
      }
      s.frame = frame_at(fam, orbit, model, k, s.tau, pb.gain);
      const auto& fr = s.frame;
      const int deg = field_degree(model, fr.phase, taylor_degree);
      std::vector<Polynomial> F = field_on_surface(model, fr, deg);
      s.num = Polynomial(dim);
      for (int j = 0; j < fam.n; ++j) s.num += fr.z(j) * F[j];
      s.den = affine_poly(dim, fr.z.dot(fr.fs), -(fr.Pi * fr.dz));
      const MatrixXd G = fr.dPi * fr.Pi.transpose();
      const VectorXd Pf = fr.Pi * fr.fs;
      for (int a = 0; a < dim; ++a) {
        Polynomial PF(dim);
        for (int j = 0; j < fam.n; ++j) PF += fr.Pi(a, j) * F[j];
        Polynomial xd = s.num * affine_poly(dim, 0.0, G.row(a).transpose()) + s.den * PF -
                        Pf(a) * s.num;
        s.xdot.push_back(std::move(xd));
      }
      const auto& ph = model.phase(fr.phase);
      if (fam.hybrid && ph.surface) {
        const auto& sf = *ph.surface;
        s.exit = affine_poly(dim, sf.c_minus.dot(fr.xs) - sf.d_minus, fr.Pi * sf.c_minus);
        s.guard = substitute_affine(sf.guard.widened(fam.n), fr.Pi.transpose(), fr.xs);
        s.check_premature = premature && i != N - 1;
      }
      s.P = pb.seed.segments.empty() ? MatrixXd::Identity(dim, dim) : pb.seed.at(k, s.tau);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<ImpactData> make_impacts(const CertProblem& pb, const std::vector<TauSample>& samples,
                                     int) {
  const auto& fam = *pb.family;
  const auto& model = *pb.model;
  std::vector<ImpactData> out;
  if (!fam.hybrid) return out;
  const int ns = static_cast<int>(fam.segments.size());
  const int N = static_cast<int>(samples.size()) / ns;
  const int dim = fam.n - 1;
  for (int k = 0; k < ns; ++k) {
    ImpactData d;
    d.impact = k;
    d.before = k * N + N - 1;
    d.after = ((k + 1) % ns) * N;
    const TauFrame& fm = samples[d.before].frame;
    const TauFrame& fp = samples[d.after].frame;
    const auto& ph = model.phase(fm.phase);
    std::vector<Polynomial> D;
    if (ph.delta) {
      D = ph.delta->substitute_affine(fm.Pi.transpose(), fm.xs).components();
    } else {
      for (int i = 0; i < fam.n; ++i) {
        Polynomial p = Polynomial::constant(dim, fm.xs(i));
        for (int a = 0; a < dim; ++a) p.add_term(Monomial::var(dim, a), fm.Pi(a, i));
        D.push_back(p);
      }
    }
    for (int a = 0; a < dim; ++a) {
      Polynomial u(dim);
      for (int i = 0; i < fam.n; ++i) u += fp.Pi(a, i) * (D[i] - Polynomial::constant(dim, fp.xs(i)));
      // The orbit closes through the impact: drop the round-off constant.
      u.add_term(Monomial::one(dim), -u.coeff(Monomial::one(dim)));
      d.update.push_back(u);
    }
    if (ph.surface) d.guard = substitute_affine(ph.surface->guard.widened(fam.n), fm.Pi.transpose(), fm.xs);
    out.push_back(std::move(d));
  }
  return out;
}

Margins default_margins(const SurfaceFamily& fam, const CertOptions& opt) {
  const double base = 1e-4 * fam.min_zf;
  Margins m;
  m.positivity = opt.deltas[0] >= 0 ? opt.deltas[0] : base;
  m.decrease = opt.deltas[1] >= 0 ? opt.deltas[1] : base;
  m.wellposed = opt.deltas[2] >= 0 ? opt.deltas[2] : base;
  return m;
}

Polynomial build_DV(const TauSample& s, const Polynomial& V, const Polynomial& dVdtau,
                    double delta) {
  const int dim = static_cast<int>(s.xdot.size());
  Polynomial dv = dVdtau * s.num;
  for (int a = 0; a < dim; ++a) dv += differentiate(V, a) * s.xdot[a];
  if (delta != 0.0) dv += delta * (s.den * Polynomial::norm_squared(dim));
  return dv;
}

// ---------------------------------------------------------------- verification

namespace {

// Clears terms of degree below `lo` that are round-off (relative to scale).
Polynomial drop_low(const Polynomial& p, int lo) {
  Polynomial q(p.nvars());
  const double tol = 1e-9 * p.max_abs_coeff();
  for (const auto& [m, c] : p.terms())
    if (m.degree() >= lo || std::abs(c) > tol) q.add_term(m, c);
  return q;
}

struct CondResult {
  CondStatus status = CondStatus::kNumerical;
  double t = 0.0;
  std::vector<Polynomial> mult;
  double gap = 0.0, residual = 0.0;
  int iterations = 0;
};

// Maximizes t with alpha*fixed + sum_k w_k*sigma_k [+ free terms] - t*q sos,
// where each sigma_k is sos over its basis. Multipliers are returned in the
// unscaled units.
CondResult slack_condition(int dim, const Polynomial& fixed, bool homogeneous,
                           const std::vector<std::pair<std::vector<Monomial>, Polynomial>>& mults,
                           const std::vector<std::pair<Monomial, Polynomial>>& free_polys = {}) {
  const int lo = homogeneous ? 2 : 0;
  Polynomial f = homogeneous ? drop_low(fixed, 2) : fixed;
  const double alpha = 1.0 / relative_cap(f.max_abs_coeff());
  SosProgram prog(dim);
  int t = prog.add_free(-1.0);
  prog.bound_above(t, 1.0);
  SosExpr e{alpha * f, {}, {}};
  int hi = f.degree();
  std::vector<int> gids;
  for (const auto& [basis, w] : mults) {
    int g = prog.add_gram(basis);
    gids.push_back(g);
    e.gram.push_back({g, w});
    int bd = 0;
    for (const auto& m : basis) bd = std::max(bd, m.degree());
    hi = std::max(hi, 2 * bd + w.degree());
  }
  std::vector<int> fids;
  for (const auto& [m, p] : free_polys) {
    int k = prog.add_free(0.0);
    fids.push_back(k);
    Polynomial mp(dim);
    mp.add_term(m, 1.0);
    e.free.push_back({k, mp * p});
    hi = std::max(hi, m.degree() + p.degree());
  }
  prog.constrain_sos(e, sos_basis(dim, lo, hi), t);
  SdpResult r = prog.solve();
  CondResult out;
  out.iterations = r.iterations;
  out.gap = r.gap;
  if (r.status == SdpStatus::kPrimalInfeasible) {
    out.status = CondStatus::kFail;
    out.t = -std::numeric_limits<double>::infinity();
    return out;
  }
  if (r.status != SdpStatus::kOptimal) return out;
  out.t = r.x_free(t) / alpha;  // absolute units
  out.status = out.t > 0 ? CondStatus::kPass : CondStatus::kFail;
  out.residual = prog.identity_residual(r) / alpha;
  for (int g : gids) out.mult.push_back(prog.gram_polynomial(r, g) * (1.0 / alpha));
  if (!fids.empty()) {
    Polynomial ls(dim);
    for (size_t i = 0; i < fids.size(); ++i) ls.add_term(free_polys[i].first, r.x_free(fids[i]) / alpha);
    out.mult.push_back(ls);
  }
  return out;
}

template <class V>
void absorb(V& v, const CondResult& c) {
  ++v.solves;
  v.max_gap = std::max(v.max_gap, c.gap);
  v.max_residual = std::max(v.max_residual, c.residual);
  v.max_iterations = std::max(v.max_iterations, c.iterations);
}

bool passing(CondStatus s) { return s == CondStatus::kPass || s == CondStatus::kSkipped; }

}  // namespace

bool SampleVerdict::ok() const {
  return passing(cert.decrease) && passing(cert.wellposed) && passing(cert.premature) &&
         passing(cert.ball);
}

bool ImpactVerdict::ok() const { return passing(cert.decrease) && passing(cert.guard); }

SampleVerdict verify_tau_sample(const TauSample& s, const Polynomial& V, const Polynomial& dVdtau,
                                const Margins& mg, double r_ball) {
  const int dim = static_cast<int>(s.xdot.size());
  const int dV = std::max(2, V.degree());
  const Polynomial Vm1 = V - Polynomial::constant(dim, 1.0);  // -(1 - V)
  SampleVerdict out;
  out.cert.seg = s.seg;
  out.cert.tau = s.tau;
  out.cert.V = V;

  {  // -DV - l(1 - V) sos, l sos vanishing at 0
    Polynomial DV = build_DV(s, V, dVdtau, mg.decrease);
    int dl = std::max(2, even_up(DV.degree() - dV));
    auto c = slack_condition(dim, -DV, true, {{monomial_basis(dim, dl / 2, 1), Vm1}});
    absorb(out, c);
    out.cert.decrease = c.status;
    out.cert.t_decrease = c.t;
    if (!c.mult.empty()) out.cert.l = c.mult[0];
  }
  {  // d - delta3 - m(1 - V) sos, deg m = 2
    auto c = slack_condition(dim, s.den - Polynomial::constant(dim, mg.wellposed), false,
                             {{monomial_basis(dim, 1, 0), Vm1}});
    absorb(out, c);
    out.cert.wellposed = c.status;
    out.cert.t_wellposed = c.t;
    if (!c.mult.empty()) out.cert.m = c.mult[0];
  }
  if (s.check_premature) {
    // -(e*l_s + g) - eps - sigma(1 - V) sos with l_s of free sign.
    std::vector<std::pair<Monomial, Polynomial>> ls;
    for (const auto& m : monomial_basis(dim, 2, 0)) ls.push_back({m, -s.exit});
    auto c = slack_condition(dim, -s.guard - Polynomial::constant(dim, mg.wellposed), false,
                             {{monomial_basis(dim, 1, 0), Vm1}}, ls);
    absorb(out, c);
    out.cert.premature = c.status;
    out.cert.t_premature = c.t;
    if (c.mult.size() == 2) {
      out.cert.sigma = c.mult[0];
      out.cert.ls = c.mult[1];
    }
  }
  if (r_ball > 0) {
    // 1 - V - s(r - |x|^2) sos
    Polynomial w = Polynomial::norm_squared(dim) - Polynomial::constant(dim, r_ball);
    auto c = slack_condition(dim, Polynomial::constant(dim, 1.0) - V, false,
                             {{monomial_basis(dim, (dV - 2) / 2, 0), w}});
    absorb(out, c);
    out.cert.ball = c.status;
    out.cert.t_ball = c.t;
    if (!c.mult.empty()) out.cert.s_ball = c.mult[0];
  }
  return out;
}

ImpactVerdict verify_impact(const ImpactData& d, const Polynomial& Vm, const Polynomial& Vp,
                            const Margins& mg) {
  const int dim = Vm.nvars();
  const int dV = std::max(2, Vm.degree());
  const Polynomial Vm1 = Vm - Polynomial::constant(dim, 1.0);
  ImpactVerdict out;
  out.cert.impact = d.impact;
  {
    Polynomial target = Vm - compose(Vp, d.update);
    int ds = std::max(2, even_up(target.degree() - dV));
    auto c = slack_condition(dim, target, true, {{monomial_basis(dim, ds / 2, 1), Vm1}});
    absorb(out, c);
    out.cert.decrease = c.status;
    out.cert.t_decrease = c.t;
    if (!c.mult.empty()) out.cert.sigma_decrease = c.mult[0];
  }
  if (!d.guard.is_zero() || d.guard.nvars() == dim) {
    auto c = slack_condition(dim, d.guard - Polynomial::constant(dim, mg.wellposed), false,
                             {{monomial_basis(dim, 1, 0), Vm1}});
    absorb(out, c);
    out.cert.guard = c.status;
    out.cert.t_guard = c.t;
    if (!c.mult.empty()) out.cert.sigma_guard = c.mult[0];
  }
  return out;
}

// ---------------------------------------------------------------- ball radius

namespace {

// Smallest s > 0 with sum_d a_d s^d = 1 (a_0 = 0); infinity if none.
double first_crossing(const std::vector<double>& a) {
  int deg = static_cast<int>(a.size()) - 1;
  while (deg > 0 && std::abs(a[deg]) < 1e-300) --deg;
  if (deg <= 0) return std::numeric_limits<double>::infinity();
  MatrixXd Cm = MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) Cm(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) Cm(i, deg - 1) = -(i == 0 ? a[0] - 1.0 : a[i]) / a[deg];
  Eigen::EigenSolver<MatrixXd> es(Cm, false);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < deg; ++i) {
    auto z = es.eigenvalues()(i);
    if (std::abs(z.imag()) <= 1e-9 * std::max(1.0, std::abs(z)) && z.real() > 0)
      best = std::min(best, z.real());
  }
  return best;
}

double radius_along(const Polynomial& V, const VectorXd& u) {
  std::vector<double> a(std::max(1, V.degree()) + 1, 0.0);
  for (const auto& [m, c] : V.terms()) {
    double v = c;
    for (int i = 0; i < m.nvars(); ++i) v *= std::pow(u(i), m.exponents[i]);
    a[m.degree()] += v;
  }
  a[0] = 0.0;
  double s = first_crossing(a);
  return s * s;
}

}  // namespace

double ball_radius(const Polynomial& V) {
  const int dim = V.nvars();
  double best = std::numeric_limits<double>::infinity();
  if (dim == 1) {
    for (double sgn : {1.0, -1.0}) best = std::min(best, radius_along(V, VectorXd::Constant(1, sgn)));
    return best;
  }
  if (dim == 2) {
    const int K = 720;
    int arg = 0;
    for (int k = 0; k < K; ++k) {
      double th = 2 * M_PI * k / K;
      double r = radius_along(V, (VectorXd(2) << std::cos(th), std::sin(th)).finished());
      if (r < best) best = r, arg = k;
    }
    // Golden-section refinement around the best grid angle.
    double lo = 2 * M_PI * (arg - 1) / K, hi = 2 * M_PI * (arg + 1) / K;
    auto f = [&](double th) { return radius_along(V, (VectorXd(2) << std::cos(th), std::sin(th)).finished()); };
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    double c = hi - g * (hi - lo), d = lo + g * (hi - lo), fc = f(c), fd = f(d);
    for (int it = 0; it < 60; ++it) {
      if (fc < fd) hi = d, d = c, fd = fc, c = hi - g * (hi - lo), fc = f(c);
      else lo = c, c = d, fc = fd, d = lo + g * (hi - lo), fd = f(d);
    }
    return std::min({best, fc, fd});
  }
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 4000; ++k) {
    VectorXd u(dim);
    for (int i = 0; i < dim; ++i) u(i) = nd(rng);
    best = std::min(best, radius_along(V, u.normalized()));
  }
  return best;
}

// ---------------------------------------------------------------- certificate

int Certificate::passed() const {
  int n = 0;
  for (const auto& s : samples)
    for (auto c : {s.decrease, s.wellposed, s.premature, s.ball}) n += c == CondStatus::kPass;
  for (const auto& i : impacts)
    for (auto c : {i.decrease, i.guard}) n += c == CondStatus::kPass;
  return n;
}

int Certificate::failed() const {
  int n = 0;
  for (const auto& s : samples)
    for (auto c : {s.decrease, s.wellposed, s.premature, s.ball})
      n += c == CondStatus::kFail || c == CondStatus::kNumerical;
  for (const auto& i : impacts)
    for (auto c : {i.decrease, i.guard}) n += c == CondStatus::kFail || c == CondStatus::kNumerical;
  return n;
}

Polynomial Certificate::V_at(int seg, double tau) const {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i)
    if (samples[i].seg == seg) idx.push_back(i);
  require(!idx.empty(), "certificate: no samples on segment");
  if (!hybrid) {
    // Periodic wrap.
    const double T = period;
    double t = std::fmod(tau, T);
    if (t < 0) t += T;
    const int N = static_cast<int>(idx.size());
    const double h = T / N;
    int k = std::min(N - 1, static_cast<int>(std::floor((t - samples[idx[0]].tau) / h)));
    k = std::max(k, 0);
    double th = (t - samples[idx[k]].tau) / h;
    th = std::clamp(th, 0.0, 1.0);
    return (1 - th) * samples[idx[k]].V + th * samples[idx[(k + 1) % N]].V;
  }
  if (tau <= samples[idx.front()].tau) return samples[idx.front()].V;
  if (tau >= samples[idx.back()].tau) return samples[idx.back()].V;
  for (size_t k = 0; k + 1 < idx.size(); ++k) {
    double a = samples[idx[k]].tau, b = samples[idx[k + 1]].tau;
    if (tau <= b) {
      double th = (tau - a) / (b - a);
      return (1 - th) * samples[idx[k]].V + th * samples[idx[k + 1]].V;
    }
  }
  return samples[idx.back()].V;
}

namespace {

std::vector<Monomial> v_monomials(int dim, int vdeg) {
  std::vector<Monomial> out;
  for (const auto& m : monomial_basis(dim, vdeg, 2))
    if (m.degree() % 2 == 0) out.push_back(m);
  return out;
}

Polynomial quadratic_form(const MatrixXd& P) {
  const int dim = static_cast<int>(P.rows());
  Polynomial p(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) {
      std::vector<int> e(dim, 0);
      e[i] += 1;
      e[j] += 1;
      p.add_term(Monomial(e), P(i, j));
    }
  return p;
}

Polynomial slope(const std::vector<TauSample>& S, const std::vector<Polynomial>& V, int i) {
  return (1.0 / S[i].dtau) * (V[S[i].next] - V[S[i].prev]);
}

struct Pass {
  std::vector<SampleVerdict> samples;
  std::vector<ImpactVerdict> impacts;
  bool ok = true;
};

// Multiplier step over every sample and impact.
Pass multiplier_step(const std::vector<TauSample>& S, const std::vector<ImpactData>& I,
                     const std::vector<Polynomial>& V, const Margins& mg, double r_ball,
                     bool stop_early) {
  Pass p;
  p.samples.resize(S.size());
  p.impacts.resize(I.size());
  std::atomic<bool> bad{false};
  parallel_for(static_cast<int>(S.size()), [&](int i) {
    if (stop_early && bad) return;
    p.samples[i] = verify_tau_sample(S[i], V[i], slope(S, V, i), mg, r_ball);
    if (!p.samples[i].ok()) bad = true;
  });
  parallel_for(static_cast<int>(I.size()), [&](int k) {
    if (stop_early && bad) return;
    p.impacts[k] = verify_impact(I[k], V[I[k].before], V[I[k].after], mg);
    if (!p.impacts[k].ok()) bad = true;
  });
  p.ok = !bad;
  if (stop_early && !p.ok) return p;
  for (const auto& s : p.samples) p.ok = p.ok && s.ok();
  for (const auto& s : p.impacts) p.ok = p.ok && s.ok();
  return p;
}

double min_ball(const std::vector<Polynomial>& V) {
  double r = std::numeric_limits<double>::infinity();
  for (const auto& v : V) r = std::min(r, ball_radius(v));
  return r;
}

// Full verification including the ball condition; the radius shrinks until
// every sample certifies it.
bool certify_ball(const std::vector<TauSample>& S, const std::vector<ImpactData>& I,
                  const std::vector<Polynomial>& V, const Margins& mg, double& r, Pass& pass) {
  r = min_ball(V) * (1 - 1e-4);
  if (!std::isfinite(r)) return false;
  for (int attempt = 0; attempt < 12; ++attempt) {
    pass = multiplier_step(S, I, V, mg, r, false);
    bool ball_ok = true, rest_ok = true;
    for (const auto& s : pass.samples) {
      ball_ok = ball_ok && passing(s.cert.ball);
      rest_ok = rest_ok && passing(s.cert.decrease) && passing(s.cert.wellposed) &&
                passing(s.cert.premature);
    }
    for (const auto& s : pass.impacts) rest_ok = rest_ok && s.ok();
    if (!rest_ok) return false;
    if (ball_ok) return true;
    r *= 0.98;
  }
  return false;
}

struct VStepResult {
  bool ok = false;
  std::vector<Polynomial> V;
  double r = 0.0;
};

// Joint SDP over the V coefficients with every multiplier fixed, maximizing r.
VStepResult v_step(const std::vector<TauSample>& S, const std::vector<ImpactData>& I,
                   const std::vector<Polynomial>& Vcur, const Pass& pass, const Margins& mg,
                   int vdeg, double r_cur) {
  const int dim = static_cast<int>(S[0].xdot.size());
  const int ns = static_cast<int>(S.size());
  const auto mons = v_monomials(dim, vdeg);
  const int nm = static_cast<int>(mons.size());
  std::vector<Polynomial> mpoly;
  for (const auto& m : mons) {
    Polynomial p(dim);
    p.add_term(m, 1.0);
    mpoly.push_back(p);
  }
  const Polynomial one = Polynomial::constant(dim, 1.0);
  const Polynomial nx2 = Polynomial::norm_squared(dim);
  SosProgram prog(dim);
  std::vector<std::vector<int>> c(ns, std::vector<int>(nm));
  for (int i = 0; i < ns; ++i)
    for (int k = 0; k < nm; ++k) c[i][k] = prog.add_free(0.0);
  // Objective: gamma = max of V over the current certified ball. For
  // quadratic V the ball then grows to r_cur / gamma.
  const int gam = prog.add_free(1.0);
  prog.bound_above(gam, 1.0);

  // Margin kept below half the slack the current V already has, so the
  // current V stays feasible.
  auto margin_of = [&](const Polynomial& p, double slack) {
    return std::min(1e-6 * std::max(1e-12, p.max_abs_coeff()), 0.5 * std::max(0.0, slack));
  };
  auto constrain = [&](SosExpr e, const Polynomial& current, bool hom, double slack) {
    int hi = current.degree();
    for (const auto& [k, p] : e.free) hi = std::max(hi, p.degree());
    hi = std::max(hi, e.fixed.degree());
    auto basis = sos_basis(dim, hom ? 2 : 0, hi);
    e.fixed -= margin_of(current, slack) * basis_square_sum(basis);
    if (hom) {
      e.fixed = drop_low(e.fixed, 2);
      for (auto& [k, p] : e.free) p = drop_low(p, 2);
    }
    prog.constrain_sos(e, basis);
  };

  for (int i = 0; i < ns; ++i) {
    const auto& s = S[i];
    const auto& sc = pass.samples[i].cert;
    // decrease
    {
      SosExpr e;
      e.fixed = -mg.decrease * (s.den * nx2) - sc.l;
      for (int k = 0; k < nm; ++k) {
        Polynomial G(dim);
        for (int a = 0; a < dim; ++a) G += differentiate(mpoly[k], a) * s.xdot[a];
        Polynomial H = mpoly[k] * s.num * (1.0 / s.dtau);
        e.free.push_back({c[i][k], sc.l * mpoly[k] - G});
        e.free.push_back({c[s.next][k], -H});
        e.free.push_back({c[s.prev][k], H});
      }
      Polynomial cur = -build_DV(s, Vcur[i], slope(S, Vcur, i), mg.decrease) - sc.l * (one - Vcur[i]);
      constrain(e, cur, true, sc.t_decrease);
    }
    // well-posedness
    {
      SosExpr e;
      e.fixed = s.den - mg.wellposed * one - sc.m;
      for (int k = 0; k < nm; ++k) e.free.push_back({c[i][k], sc.m * mpoly[k]});
      constrain(e, s.den - mg.wellposed * one - sc.m * (one - Vcur[i]), false, sc.t_wellposed);
    }
    if (s.check_premature) {
      SosExpr e;
      Polynomial base = -(s.exit * sc.ls + s.guard) - mg.wellposed * one;
      e.fixed = base - sc.sigma;
      for (int k = 0; k < nm; ++k) e.free.push_back({c[i][k], sc.sigma * mpoly[k]});
      constrain(e, base - sc.sigma * (one - Vcur[i]), false, sc.t_premature);
    }
    // positivity V - delta1 |x|^2
    {
      SosExpr e;
      e.fixed = -mg.positivity * nx2;
      for (int k = 0; k < nm; ++k) e.free.push_back({c[i][k], mpoly[k]});
      constrain(e, Vcur[i] - mg.positivity * nx2, true, 0.0);
    }
    // ball: gamma - V - s(r_cur - |x|^2), s sos
    {
      SosExpr e;
      int sg = prog.add_gram(monomial_basis(dim, (vdeg - 2) / 2, 0));
      e.gram.push_back({sg, nx2 - r_cur * one});
      for (int k = 0; k < nm; ++k) e.free.push_back({c[i][k], -mpoly[k]});
      e.free.push_back({gam, one});
      e.fixed = Polynomial(dim);
      prog.constrain_sos(e, sos_basis(dim, 0, vdeg));
    }
  }
  for (size_t q = 0; q < I.size(); ++q) {
    const auto& d = I[q];
    const auto& ic = pass.impacts[q].cert;
    {
      SosExpr e;
      e.fixed = -ic.sigma_decrease;
      for (int k = 0; k < nm; ++k) {
        e.free.push_back({c[d.before][k], mpoly[k] + ic.sigma_decrease * mpoly[k]});
        e.free.push_back({c[d.after][k], -compose(mpoly[k], d.update)});
      }
      Polynomial cur = Vcur[d.before] - compose(Vcur[d.after], d.update) -
                       ic.sigma_decrease * (one - Vcur[d.before]);
      constrain(e, cur, true, ic.t_decrease);
    }
    if (ic.guard != CondStatus::kSkipped) {
      SosExpr e;
      Polynomial base = d.guard - mg.wellposed * one;
      e.fixed = base - ic.sigma_guard;
      for (int k = 0; k < nm; ++k) e.free.push_back({c[d.before][k], ic.sigma_guard * mpoly[k]});
      constrain(e, base - ic.sigma_guard * (one - Vcur[d.before]), false, ic.t_guard);
    }
  }
  SdpResult res = prog.solve();
  // An inaccurate solution is still a usable candidate: the caller verifies
  // every accepted V from scratch.
  VStepResult out;
  if (res.status == SdpStatus::kPrimalInfeasible || res.status == SdpStatus::kDualInfeasible) return out;
  if (!res.x_free.allFinite() || !(res.x_free(gam) > 0.0)) return out;
  out.ok = true;
  out.r = r_cur / std::max(1e-300, res.x_free(gam));
  for (int i = 0; i < ns; ++i) {
    Polynomial v(dim);
    for (int k = 0; k < nm; ++k) v += res.x_free(c[i][k]) * mpoly[k];
    out.V.push_back(v);
  }
  return out;
}

void fill_certificate(Certificate& cert, const Pass& pass, double r) {
  cert.samples.clear();
  cert.impacts.clear();
  for (const auto& s : pass.samples) {
    cert.samples.push_back(s.cert);
    cert.samples.back().r = ball_radius(s.cert.V);
    cert.sdp_solves += s.solves;
    cert.sdp_max_iterations = std::max(cert.sdp_max_iterations, s.max_iterations);
    cert.max_gap = std::max(cert.max_gap, s.max_gap);
    cert.max_identity_residual = std::max(cert.max_identity_residual, s.max_residual);
  }
  for (const auto& s : pass.impacts) {
    cert.impacts.push_back(s.cert);
    cert.sdp_solves += s.solves;
    cert.sdp_max_iterations = std::max(cert.sdp_max_iterations, s.max_iterations);
    cert.max_gap = std::max(cert.max_gap, s.max_gap);
    cert.max_identity_residual = std::max(cert.max_identity_residual, s.max_residual);
  }
  cert.r = r;
}

}  // namespace

Certificate certify_fixed(const CertProblem& pb, const CertOptions& opt, int taus) {
  require(pb.model && pb.orbit && pb.family, "certify: incomplete problem");
  require(opt.vdeg == 2 || opt.vdeg == 4, "certify: V degree must be 2 or 4");
  const int dim = pb.family->n - 1;
  const auto S = make_samples(pb, taus, opt.taylor_degree, opt.premature_switching);
  const auto I = make_impacts(pb, S, opt.taylor_degree);
  const Margins mg = default_margins(*pb.family, opt);
  const int ns = static_cast<int>(S.size());

  std::vector<Polynomial> Q(ns);
  double lmax = 0.0;
  for (int i = 0; i < ns; ++i) {
    Q[i] = quadratic_form(S[i].P);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S[i].P);
    lmax = std::max(lmax, es.eigenvalues().maxCoeff());
  }
  auto scaled = [&](double rho) {
    std::vector<Polynomial> V(ns);
    for (int i = 0; i < ns; ++i) V[i] = (1.0 / rho) * Q[i];
    return V;
  };
  auto verify = [&](double rho) { return multiplier_step(S, I, scaled(rho), mg, 0.0, true).ok; };

  // Bracket the seed level.
  double lo = 1e-2 * lmax;
  int tries = 0;
  while (!verify(lo)) {
    lo *= 0.1;
    if (++tries > 8)
      fail(ErrorKind::kInfeasible, "seed infeasible: no verified level for the quadratic seed");
  }
  double hi = lo;
  for (int k = 0; k < 30; ++k) {
    if (!verify(hi * 4)) {
      hi *= 4;
      break;
    }
    hi *= 4;
    lo = hi;
  }
  LevelResult lv = hi > lo ? bisect_level(verify, lo, hi) : LevelResult{lo, 0};

  Certificate cert;
  cert.dim = dim;
  cert.vdeg = opt.vdeg;
  cert.hybrid = pb.family->hybrid;
  cert.period = pb.family->period;
  cert.taylor_degree = pb.model->is_polynomial() ? 0 : opt.taylor_degree;
  cert.margins = mg;
  cert.seed_rho = lv.rho;
  cert.taus = taus;
  for (const auto& s : S) {
    cert.slope_prev.push_back(s.prev);
    cert.slope_next.push_back(s.next);
    cert.slope_dtau.push_back(s.dtau);
  }

  std::vector<Polynomial> V = scaled(lv.rho);
  Pass pass;
  double r = 0.0;
  if (!certify_ball(S, I, V, mg, r, pass))
    fail(ErrorKind::kNumerical, "seed certificate could not be reproduced at its level");
  cert.seed_r = r;
  cert.r_history.push_back(r);

  if (opt.alternate) {
    for (int it = 0; it < opt.max_iterations; ++it) {
      VStepResult vs = v_step(S, I, V, pass, mg, opt.vdeg, r);
      if (!vs.ok) break;
      bool accepted = false;
      std::vector<Polynomial> trial = vs.V;
      for (int shrink = 0; shrink < 4 && !accepted; ++shrink) {
        Pass p2;
        double r2 = 0.0;
        bool cb = certify_ball(S, I, trial, mg, r2, p2);
        if (cb && r2 > r) {
          double gain = (r2 - r) / r;
          V = trial;
          pass = std::move(p2);
          r = r2;
          accepted = true;
          cert.iterations = it + 1;
          cert.r_history.push_back(r);
          if (gain < opt.rel_improvement) it = opt.max_iterations;
        } else {
          for (int i = 0; i < ns; ++i) trial[i] = 0.5 * (trial[i] + V[i]);
        }
      }
      if (!accepted) break;
    }
  }
  fill_certificate(cert, pass, r);
  return cert;
}

Certificate certify(const CertProblem& pb, const CertOptions& opt) {
  int N = opt.taus;
  Certificate cert;
  // A coarse grid can make even the seed infeasible through the V-slope
  // stencil; refine before giving up.
  for (;;) {
    try {
      cert = certify_fixed(pb, opt, N);
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInfeasible) throw;
      if (!opt.refine_taus || 2 * N > opt.max_taus)
        fail(ErrorKind::kInfeasible, std::string(e.what()) + " (" + std::to_string(N) +
                                         " taus per segment; a finer grid may help, see --max-taus)");
      N *= 2;
    }
  }
  while (opt.refine_taus && 2 * N <= opt.max_taus) {
    N *= 2;
    Certificate finer = certify_fixed(pb, opt, N);
    double change = std::abs(finer.r - cert.r) / std::max(cert.r, 1e-300);
    cert = std::move(finer);
    if (change < opt.tau_rel_change) break;
  }
  return cert;
}

// ---------------------------------------------------------------- output

namespace {

nlohmann::json cond_json(CondStatus s, double t) {
  nlohmann::json j;
  j["status"] = to_string(s);
  if (s != CondStatus::kSkipped) j["margin"] = std::isfinite(t) ? nlohmann::json(t) : nlohmann::json(nullptr);
  return j;
}

CondStatus cond_from(const nlohmann::json& j, double& t) {
  std::string s = j.at("status").get<std::string>();
  t = j.contains("margin") && j["margin"].is_number() ? j["margin"].get<double>() : 0.0;
  if (s == "pass") return CondStatus::kPass;
  if (s == "fail") return CondStatus::kFail;
  if (s == "numerical") return CondStatus::kNumerical;
  return CondStatus::kSkipped;
}

Polynomial poly_or_zero(const nlohmann::json& j, const char* key, int dim) {
  if (!j.contains(key)) return Polynomial(dim);
  return j.at(key).get<Polynomial>();
}

}  // namespace

nlohmann::json certificate_to_json(const Certificate& c) {
  nlohmann::json j;
  j["dim"] = c.dim;
  j["vdeg"] = c.vdeg;
  j["hybrid"] = c.hybrid;
  j["period"] = c.period;
  j["taylor_degree"] = c.taylor_degree;
  j["margins"] = {{"positivity", c.margins.positivity},
                  {"decrease", c.margins.decrease},
                  {"wellposed", c.margins.wellposed}};
  j["seed_rho"] = c.seed_rho;
  j["seed_r"] = c.seed_r;
  j["r"] = c.r;
  j["rho"] = 1.0;
  j["taus"] = c.taus;
  j["iterations"] = c.iterations;
  j["r_history"] = c.r_history;
  j["interpolation"] = "piecewise-linear in tau";
  j["certification"] = "sampled tau; Monte-Carlo validation separate";
  nlohmann::json samples = nlohmann::json::array();
  for (size_t i = 0; i < c.samples.size(); ++i) {
    const auto& s = c.samples[i];
    nlohmann::json e;
    e["seg"] = s.seg;
    e["tau"] = s.tau;
    e["V"] = s.V;
    e["r"] = s.r;
    e["multipliers"] = {{"l", s.l}, {"m", s.m}, {"s_ball", s.s_ball}};
    if (s.premature != CondStatus::kSkipped) {
      e["multipliers"]["sigma"] = s.sigma;
      e["multipliers"]["l_s"] = s.ls;
    }
    e["conditions"] = {{"decrease", cond_json(s.decrease, s.t_decrease)},
                       {"wellposed", cond_json(s.wellposed, s.t_wellposed)},
                       {"premature_switching", cond_json(s.premature, s.t_premature)},
                       {"ball", cond_json(s.ball, s.t_ball)}};
    if (i < c.slope_prev.size())
      e["slope"] = {{"prev", c.slope_prev[i]}, {"next", c.slope_next[i]}, {"dtau", c.slope_dtau[i]}};
    samples.push_back(e);
  }
  j["samples"] = samples;
  nlohmann::json impacts = nlohmann::json::array();
  for (const auto& s : c.impacts) {
    nlohmann::json e;
    e["impact"] = s.impact;
    e["multipliers"] = {{"sigma_decrease", s.sigma_decrease}, {"sigma_guard", s.sigma_guard}};
    e["conditions"] = {{"decrease", cond_json(s.decrease, s.t_decrease)},
                       {"guard", cond_json(s.guard, s.t_guard)}};
    impacts.push_back(e);
  }
  j["impacts"] = impacts;
  j["solver"] = {{"sdp_solves", c.sdp_solves},
                 {"max_iterations", c.sdp_max_iterations},
                 {"max_gap", c.max_gap},
                 {"max_identity_residual", c.max_identity_residual}};
  j["conditions"] = {{"pass", c.passed()}, {"fail", c.failed()}};
  j["summary"] = summary_line(c);
  return j;
}

Certificate certificate_from_json(const nlohmann::json& j) {
  Certificate c;
  try {
    c.dim = j.at("dim");
    c.vdeg = j.at("vdeg");
    c.hybrid = j.at("hybrid");
    c.period = j.at("period");
    c.taylor_degree = j.value("taylor_degree", 0);
    c.margins.positivity = j.at("margins").at("positivity");
    c.margins.decrease = j.at("margins").at("decrease");
    c.margins.wellposed = j.at("margins").at("wellposed");
    c.seed_rho = j.value("seed_rho", 0.0);
    c.seed_r = j.value("seed_r", 0.0);
    c.r = j.at("r");
    c.taus = j.at("taus");
    c.iterations = j.value("iterations", 0);
    c.r_history = j.value("r_history", std::vector<double>{});
    for (const auto& e : j.at("samples")) {
      SampleCert s;
      s.seg = e.at("seg");
      s.tau = e.at("tau");
      s.V = e.at("V").get<Polynomial>();
      s.r = e.value("r", 0.0);
      const auto& m = e.at("multipliers");
      s.l = poly_or_zero(m, "l", c.dim);
      s.m = poly_or_zero(m, "m", c.dim);
      s.s_ball = poly_or_zero(m, "s_ball", c.dim);
      s.sigma = poly_or_zero(m, "sigma", c.dim);
      s.ls = poly_or_zero(m, "l_s", c.dim);
      const auto& cj = e.at("conditions");
      s.decrease = cond_from(cj.at("decrease"), s.t_decrease);
      s.wellposed = cond_from(cj.at("wellposed"), s.t_wellposed);
      s.premature = cond_from(cj.at("premature_switching"), s.t_premature);
      s.ball = cond_from(cj.at("ball"), s.t_ball);
      if (e.contains("slope")) {
        c.slope_prev.push_back(e["slope"].at("prev"));
        c.slope_next.push_back(e["slope"].at("next"));
        c.slope_dtau.push_back(e["slope"].at("dtau"));
      }
      c.samples.push_back(std::move(s));
    }
    for (const auto& e : j.at("impacts")) {
      ImpactCert s;
      s.impact = e.at("impact");
      s.sigma_decrease = poly_or_zero(e.at("multipliers"), "sigma_decrease", c.dim);
      s.sigma_guard = poly_or_zero(e.at("multipliers"), "sigma_guard", c.dim);
      s.decrease = cond_from(e.at("conditions").at("decrease"), s.t_decrease);
      s.guard = cond_from(e.at("conditions").at("guard"), s.t_guard);
      c.impacts.push_back(std::move(s));
    }
    if (j.contains("solver")) {
      c.sdp_solves = j["solver"].value("sdp_solves", 0);
      c.sdp_max_iterations = j["solver"].value("max_iterations", 0);
      c.max_gap = j["solver"].value("max_gap", 0.0);
      c.max_identity_residual = j["solver"].value("max_identity_residual", 0.0);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("certificate: ") + e.what());
  }
  return c;
}

std::string summary_line(const Certificate& c) {
  std::ostringstream os;
  os << "certified: r=" << std::setprecision(6) << c.r << " rho=1 taus=" << c.taus
     << " conditions=" << c.passed() << "/" << c.failed();
  return os.str();
}

}  // namespace orbitroa
