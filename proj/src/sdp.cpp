#include "orbitroa/sdp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace orbitroa {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int SdpProblem::add_block(int dim) {
  block_dims.push_back(dim);
  block_entries.emplace_back();
  C.emplace_back();
  return static_cast<int>(block_dims.size()) - 1;
}

int SdpProblem::add_free(double cost) {
  c_free.conservativeResize(n_free + 1);
  c_free(n_free) = cost;
  return n_free++;
}

int SdpProblem::add_lin(double cost) {
  c_lin.conservativeResize(n_lin + 1);
  c_lin(n_lin) = cost;
  return n_lin++;
}

int SdpProblem::add_row(double rhs) {
  b.conservativeResize(rows + 1);
  b(rows) = rhs;
  return rows++;
}

const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::kOptimal: return "optimal";
    case SdpStatus::kPrimalInfeasible: return "infeasible";
    case SdpStatus::kDualInfeasible: return "unbounded";
    case SdpStatus::kNumerical: return "numerical";
  }
  return "?";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

// Row matrix restricted to one block, in local-row form.
struct LocalRow {
  int row;
  std::vector<SdpEntry> entries;
};

struct BlockData {
  int dim;
  std::vector<LocalRow> rows;
};

MatrixXd sym(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

// <A_row, W> for a sparse symmetric row matrix.
double inner(const std::vector<SdpEntry>& e, const MatrixXd& W) {
  double s = 0.0;
  for (const auto& t : e) s += t.i == t.j ? t.v * W(t.i, t.i) : t.v * (W(t.i, t.j) + W(t.j, t.i));
  return s;
}

// Accumulates alpha*A_row into dense S.
void scatter(const std::vector<SdpEntry>& e, double alpha, MatrixXd& S) {
  for (const auto& t : e) {
    S(t.i, t.j) += alpha * t.v;
    if (t.i != t.j) S(t.j, t.i) += alpha * t.v;
  }
}

// Largest step alpha with X + alpha*dX PSD (infinity if unbounded).
double max_step(const MatrixXd& X, const MatrixXd& dX) {
  if (X.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::LLT<MatrixXd> llt(X);
  if (llt.info() != Eigen::Success) return 0.0;
  MatrixXd L = llt.matrixL();
  MatrixXd S = L.triangularView<Eigen::Lower>().solve(dX);
  S = L.triangularView<Eigen::Lower>().solve(S.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(S), Eigen::EigenvaluesOnly);
  double lmin = es.eigenvalues()(0);
  return lmin >= 0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

double max_step_lin(const VectorXd& x, const VectorXd& dx) {
  double a = std::numeric_limits<double>::infinity();
  for (int i = 0; i < x.size(); ++i)
    if (dx(i) < 0) a = std::min(a, -x(i) / dx(i));
  return a;
}

class Solver {
 public:
  Solver(const SdpProblem& p, const SdpOptions& o) : P_(p), opt_(o) {}
  SdpResult run();

 private:
  void setup();
  VectorXd apply_A(const std::vector<MatrixXd>& X, const VectorXd& xl, const VectorXd& xf) const;
  std::vector<MatrixXd> apply_At_blocks(const VectorXd& y) const;
  VectorXd apply_At_lin(const VectorXd& y) const;
  VectorXd apply_At_free(const VectorXd& y) const;
  bool factor();
  VectorXd solve_kkt(const VectorXd& r1, const VectorXd& r2) const;

  const SdpProblem& P_;
  SdpOptions opt_;
  int m_ = 0, nb_ = 0;
  VectorXd scale_;  // row scaling
  VectorXd b_;
  std::vector<BlockData> blocks_;
  std::vector<MatrixXd> C_;
  std::vector<SdpScalarEntry> lin_, free_;
  VectorXd cl_, cf_;
  SpMat Al_, Af_;

  std::vector<MatrixXd> X_, Z_, Zinv_;
  VectorXd xl_, zl_, xf_, y_;

  SpMat K_;
  SpMat Kref_;  // unregularized system for refinement
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

void Solver::setup() {
  m_ = P_.rows;
  nb_ = static_cast<int>(P_.block_dims.size());
  // Row equilibration.
  scale_ = VectorXd::Zero(m_);
  for (int k = 0; k < nb_; ++k)
    for (const auto& e : P_.block_entries[k]) scale_(e.row) = std::max(scale_(e.row), std::abs(e.v));
  for (const auto& e : P_.lin_entries) scale_(e.row) = std::max(scale_(e.row), std::abs(e.v));
  for (const auto& e : P_.free_entries) scale_(e.row) = std::max(scale_(e.row), std::abs(e.v));
  for (int r = 0; r < m_; ++r) scale_(r) = scale_(r) > 0 ? 1.0 / scale_(r) : 1.0;
  b_ = P_.b.cwiseProduct(scale_);

  blocks_.resize(nb_);
  C_.resize(nb_);
  for (int k = 0; k < nb_; ++k) {
    int d = P_.block_dims[k];
    blocks_[k].dim = d;
    std::vector<SdpEntry> es = P_.block_entries[k];
    std::sort(es.begin(), es.end(), [](const SdpEntry& a, const SdpEntry& b) { return a.row < b.row; });
    for (auto e : es) {
      e.v *= scale_(e.row);
      if (blocks_[k].rows.empty() || blocks_[k].rows.back().row != e.row)
        blocks_[k].rows.push_back({e.row, {}});
      blocks_[k].rows.back().entries.push_back(e);
    }
    C_[k] = (k < static_cast<int>(P_.C.size()) && P_.C[k].size() > 0) ? sym(P_.C[k]) : MatrixXd::Zero(d, d);
  }
  cl_ = P_.n_lin > 0 ? VectorXd(P_.c_lin) : VectorXd();
  cf_ = P_.n_free > 0 ? VectorXd(P_.c_free) : VectorXd();
  std::vector<Eigen::Triplet<double>> tl, tf;
  for (const auto& e : P_.lin_entries) tl.emplace_back(e.row, e.col, e.v * scale_(e.row));
  for (const auto& e : P_.free_entries) tf.emplace_back(e.row, e.col, e.v * scale_(e.row));
  Al_.resize(m_, P_.n_lin);
  Al_.setFromTriplets(tl.begin(), tl.end());
  Af_.resize(m_, P_.n_free);
  Af_.setFromTriplets(tf.begin(), tf.end());
}

VectorXd Solver::apply_A(const std::vector<MatrixXd>& X, const VectorXd& xl, const VectorXd& xf) const {
  VectorXd r = VectorXd::Zero(m_);
  for (int k = 0; k < nb_; ++k)
    for (const auto& lr : blocks_[k].rows) r(lr.row) += inner(lr.entries, X[k]);
  if (xl.size()) r += Al_ * xl;
  if (xf.size()) r += Af_ * xf;
  return r;
}

std::vector<MatrixXd> Solver::apply_At_blocks(const VectorXd& y) const {
  std::vector<MatrixXd> S(nb_);
  for (int k = 0; k < nb_; ++k) {
    S[k] = MatrixXd::Zero(blocks_[k].dim, blocks_[k].dim);
    for (const auto& lr : blocks_[k].rows) scatter(lr.entries, y(lr.row), S[k]);
  }
  return S;
}

VectorXd Solver::apply_At_lin(const VectorXd& y) const {
  return Al_.cols() ? VectorXd(Al_.transpose() * y) : VectorXd();
}
VectorXd Solver::apply_At_free(const VectorXd& y) const {
  return Af_.cols() ? VectorXd(Af_.transpose() * y) : VectorXd();
}

bool Solver::factor() {
  const int nf = static_cast<int>(Af_.cols());
  std::vector<Eigen::Triplet<double>> trip;
  double maxdiag = 0.0;
  VectorXd diag = VectorXd::Zero(m_);
  for (int k = 0; k < nb_; ++k) {
    const auto& B = blocks_[k];
    const int nr = static_cast<int>(B.rows.size());
    std::vector<MatrixXd> W(nr);
    for (int s = 0; s < nr; ++s) {
      MatrixXd XA = MatrixXd::Zero(B.dim, B.dim);
      for (const auto& t : B.rows[s].entries) {
        XA.col(t.j) += t.v * X_[k].col(t.i);
        if (t.i != t.j) XA.col(t.i) += t.v * X_[k].col(t.j);
      }
      W[s] = XA * Zinv_[k];
    }
    for (int s = 0; s < nr; ++s)
      for (int r = s; r < nr; ++r) {
        double v = inner(B.rows[r].entries, W[s]);
        int i = B.rows[r].row, j = B.rows[s].row;
        if (i < j) std::swap(i, j);
        trip.emplace_back(i, j, v);
        if (i == j) diag(i) += v;
      }
  }
  if (Al_.cols()) {
    VectorXd D = xl_.cwiseQuotient(zl_);
    SpMat ADA = Al_ * D.asDiagonal() * Al_.transpose();
    for (int c = 0; c < ADA.outerSize(); ++c)
      for (SpMat::InnerIterator it(ADA, c); it; ++it)
        if (it.row() >= it.col()) {
          trip.emplace_back(it.row(), it.col(), it.value());
          if (it.row() == it.col()) diag(it.row()) += it.value();
        }
  }
  maxdiag = diag.size() ? diag.cwiseAbs().maxCoeff() : 0.0;
  double reg = 1e-13 * (1.0 + maxdiag);
  for (int c = 0; c < Af_.outerSize(); ++c)
    for (SpMat::InnerIterator it(Af_, c); it; ++it) trip.emplace_back(m_ + c, it.row(), it.value());
  std::vector<Eigen::Triplet<double>> ref = trip;
  for (int i = 0; i < m_; ++i) {
    trip.emplace_back(i, i, reg);
    ref.emplace_back(i, i, 0.0);
  }
  for (int i = 0; i < nf; ++i) {
    trip.emplace_back(m_ + i, m_ + i, -1e-10);
    ref.emplace_back(m_ + i, m_ + i, 0.0);
  }
  K_.resize(m_ + nf, m_ + nf);
  K_.setFromTriplets(trip.begin(), trip.end());
  Kref_.resize(m_ + nf, m_ + nf);
  Kref_.setFromTriplets(ref.begin(), ref.end());
  if (!analyzed_) {
    ldlt_.analyzePattern(K_);
    analyzed_ = true;
  }
  ldlt_.factorize(K_);
  return ldlt_.info() == Eigen::Success;
}

VectorXd Solver::solve_kkt(const VectorXd& r1, const VectorXd& r2) const {
  const int nf = static_cast<int>(Af_.cols());
  VectorXd rhs(m_ + nf);
  rhs << r1, r2;
  VectorXd sol = ldlt_.solve(rhs);
  for (int it = 0; it < 3; ++it) {
    VectorXd res = rhs - Kref_.selfadjointView<Eigen::Lower>() * sol;
    if (res.norm() <= 1e-14 * (1.0 + rhs.norm())) break;
    sol += ldlt_.solve(res);
  }
  return sol;
}

SdpResult Solver::run() {
  setup();
  SdpResult res;
  const int nl = P_.n_lin, nf = P_.n_free;

  double bnorm = b_.norm();
  double cnorm = 0.0;
  for (const auto& c : C_) cnorm += c.squaredNorm();
  if (nl) cnorm += cl_.squaredNorm();
  if (nf) cnorm += cf_.squaredNorm();
  cnorm = std::sqrt(cnorm);

  double x0 = std::max(1.0, std::sqrt(bnorm)), z0 = std::max(1.0, std::sqrt(cnorm));
  X_.resize(nb_);
  Z_.resize(nb_);
  Zinv_.resize(nb_);
  int ncone = nl;
  for (int k = 0; k < nb_; ++k) {
    int d = blocks_[k].dim;
    X_[k] = x0 * MatrixXd::Identity(d, d);
    Z_[k] = z0 * MatrixXd::Identity(d, d);
    ncone += d;
  }
  xl_ = VectorXd::Constant(nl, x0);
  zl_ = VectorXd::Constant(nl, z0);
  xf_ = VectorXd::Zero(nf);
  y_ = VectorXd::Zero(m_);

  auto pobj_of = [&]() {
    double s = 0.0;
    for (int k = 0; k < nb_; ++k) s += (C_[k].cwiseProduct(X_[k])).sum();
    if (nl) s += cl_.dot(xl_);
    if (nf) s += cf_.dot(xf_);
    return s;
  };

  // Best iterate by worst tolerance ratio; returned if the run later stalls
  // or loses feasibility to round-off in the Newton systems.
  struct Snapshot {
    double score = std::numeric_limits<double>::infinity();
    std::vector<MatrixXd> X, Z;
    VectorXd xl, zl, xf, y;
    double pobj = 0, dobj = 0, gap = 0, pres = 0, dres = 0;
    int it = 0;
  } best;
  const bool trace = std::getenv("ORBITROA_SDP_TRACE") != nullptr;

  int stall = 0;
  for (int it = 0; it <= opt_.max_iterations; ++it) {
    res.iterations = it;
    VectorXd rp = b_ - apply_A(X_, xl_, xf_);
    auto AtY = apply_At_blocks(y_);
    std::vector<MatrixXd> Rd(nb_);
    double dn = 0.0;
    for (int k = 0; k < nb_; ++k) {
      Rd[k] = C_[k] - AtY[k] - Z_[k];
      dn += Rd[k].squaredNorm();
    }
    VectorXd rdl = nl ? VectorXd(cl_ - apply_At_lin(y_) - zl_) : VectorXd();
    VectorXd rdf = nf ? VectorXd(cf_ - apply_At_free(y_)) : VectorXd();
    if (nl) dn += rdl.squaredNorm();
    if (nf) dn += rdf.squaredNorm();

    double comp = 0.0;
    for (int k = 0; k < nb_; ++k) comp += X_[k].cwiseProduct(Z_[k]).sum();
    if (nl) comp += xl_.dot(zl_);
    double mu = ncone ? comp / ncone : 0.0;
    double pobj = pobj_of(), dobj = b_.dot(y_);
    res.primal_objective = pobj;
    res.dual_objective = dobj;
    res.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    res.primal_residual = rp.norm() / (1.0 + bnorm);
    res.dual_residual = std::sqrt(dn) / (1.0 + cnorm);
    double compgap = comp / (1.0 + std::abs(pobj) + std::abs(dobj));

    if (res.gap <= opt_.gap_tol && compgap <= 10 * opt_.gap_tol &&
        res.primal_residual <= opt_.feas_tol && res.dual_residual <= opt_.feas_tol) {
      res.status = SdpStatus::kOptimal;
      break;
    }
    // Divergence of the objectives with the other side nearly feasible
    // certifies infeasibility.
    double xnorm = 0.0;
    for (int k = 0; k < nb_; ++k) xnorm = std::max(xnorm, X_[k].norm());
    if (nl) xnorm = std::max(xnorm, xl_.cwiseAbs().maxCoeff());
    if (nf) xnorm = std::max(xnorm, xf_.cwiseAbs().maxCoeff());
    if (dobj > 1e8 * (1.0 + cnorm) && res.dual_residual * (1.0 + cnorm) <= 1e-6 * std::abs(dobj)) {
      res.status = SdpStatus::kPrimalInfeasible;
      break;
    }
    if (pobj < -1e8 * (1.0 + bnorm) && res.primal_residual * (1.0 + bnorm) <= 1e-6 * std::abs(pobj)) {
      res.status = SdpStatus::kDualInfeasible;
      break;
    }
    double score = std::max({res.gap / opt_.gap_tol, res.primal_residual / opt_.feas_tol,
                             res.dual_residual / opt_.feas_tol});
    if (score < best.score) {
      best.score = score;
      best.X = X_;
      best.Z = Z_;
      best.xl = xl_;
      best.zl = zl_;
      best.xf = xf_;
      best.y = y_;
      best.pobj = pobj;
      best.dobj = dobj;
      best.gap = res.gap;
      best.pres = res.primal_residual;
      best.dres = res.dual_residual;
      best.it = it;
    } else if (best.score <= 1e3 && score > 1e3) {
      break;  // accuracy lost after an acceptable point
    }
    if (trace)
      fprintf(stderr, "  it %d pobj %.10g dobj %.10g gap %.2e pinf %.2e dinf %.2e mu %.2e\n", it, pobj, dobj,
              res.gap, res.primal_residual, res.dual_residual, mu);
    if (it == opt_.max_iterations) break;

    bool ok = true;
    for (int k = 0; k < nb_; ++k) {
      Eigen::LLT<MatrixXd> llt(Z_[k]);
      if (llt.info() != Eigen::Success) { ok = false; break; }
      Zinv_[k] = sym(llt.solve(MatrixXd::Identity(Z_[k].rows(), Z_[k].cols())));
    }
    if (!ok || !factor()) break;

    // Direction for a given complementarity target Rc (block) / rcl (lin).
    struct Dir {
      std::vector<MatrixXd> dX, dZ;
      VectorXd dxl, dzl, dxf, dy;
    };
    auto direction = [&](const std::vector<MatrixXd>& RcZinv, const VectorXd& rcl) {
      Dir d;
      std::vector<MatrixXd> G(nb_);
      for (int k = 0; k < nb_; ++k) G[k] = RcZinv[k] - X_[k] - sym(X_[k] * Rd[k] * Zinv_[k]);
      VectorXd gl;
      if (nl) gl = rcl.cwiseQuotient(zl_) - xl_ - xl_.cwiseProduct(rdl).cwiseQuotient(zl_);
      VectorXd r1 = rp - apply_A(G, nl ? gl : VectorXd(), VectorXd());
      VectorXd sol = solve_kkt(r1, nf ? rdf : VectorXd());
      d.dy = sol.head(m_);
      d.dxf = sol.tail(nf);
      auto Atdy = apply_At_blocks(d.dy);
      d.dX.resize(nb_);
      d.dZ.resize(nb_);
      for (int k = 0; k < nb_; ++k) {
        d.dZ[k] = Rd[k] - Atdy[k];
        d.dX[k] = G[k] + sym(X_[k] * Atdy[k] * Zinv_[k]);
      }
      if (nl) {
        d.dzl = rdl - apply_At_lin(d.dy);
        d.dxl = gl + xl_.cwiseProduct(apply_At_lin(d.dy)).cwiseQuotient(zl_);
      }
      return d;
    };
    auto steps = [&](const Dir& d, double& ap, double& ad) {
      ap = std::numeric_limits<double>::infinity();
      ad = ap;
      for (int k = 0; k < nb_; ++k) {
        ap = std::min(ap, max_step(X_[k], d.dX[k]));
        ad = std::min(ad, max_step(Z_[k], d.dZ[k]));
      }
      if (nl) {
        ap = std::min(ap, max_step_lin(xl_, d.dxl));
        ad = std::min(ad, max_step_lin(zl_, d.dzl));
      }
    };

    std::vector<MatrixXd> zero(nb_);
    for (int k = 0; k < nb_; ++k) zero[k] = MatrixXd::Zero(blocks_[k].dim, blocks_[k].dim);
    Dir pred = direction(zero, VectorXd::Zero(nl));
    double ap, ad;
    steps(pred, ap, ad);
    ap = std::min(1.0, ap);
    ad = std::min(1.0, ad);
    double comp_aff = 0.0;
    for (int k = 0; k < nb_; ++k)
      comp_aff += (X_[k] + ap * pred.dX[k]).cwiseProduct(Z_[k] + ad * pred.dZ[k]).sum();
    if (nl) comp_aff += (xl_ + ap * pred.dxl).dot(zl_ + ad * pred.dzl);
    double sigma = ncone ? std::pow(std::max(0.0, comp_aff) / std::max(comp, 1e-300), 3) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    std::vector<MatrixXd> RcZ(nb_);
    for (int k = 0; k < nb_; ++k) {
      int dim = blocks_[k].dim;
      RcZ[k] = sym((sigma * mu * MatrixXd::Identity(dim, dim) - pred.dX[k] * pred.dZ[k]) * Zinv_[k]);
    }
    VectorXd rcl;
    if (nl) rcl = VectorXd::Constant(nl, sigma * mu) - pred.dxl.cwiseProduct(pred.dzl);
    Dir corr = direction(RcZ, nl ? rcl : VectorXd::Zero(0));
    steps(corr, ap, ad);
    ap = std::min(1.0, opt_.step_fraction * ap);
    ad = std::min(1.0, opt_.step_fraction * ad);
    if (!std::isfinite(ap) || !std::isfinite(ad)) break;

    for (int k = 0; k < nb_; ++k) {
      X_[k] = sym(X_[k] + ap * corr.dX[k]);
      Z_[k] = sym(Z_[k] + ad * corr.dZ[k]);
    }
    if (nl) {
      xl_ += ap * corr.dxl;
      zl_ += ad * corr.dzl;
    }
    if (nf) xf_ += ap * corr.dxf;
    y_ += ad * corr.dy;
    if (trace) fprintf(stderr, "     ap %.3e ad %.3e sigma %.3e\n", ap, ad, sigma);
    stall = (ap < 1e-8 || ad < 1e-8) ? stall + 1 : 0;
    if (stall >= 3) break;
  }

  if (res.status == SdpStatus::kNumerical && best.score < std::numeric_limits<double>::infinity()) {
    X_ = best.X;
    Z_ = best.Z;
    xl_ = best.xl;
    zl_ = best.zl;
    xf_ = best.xf;
    y_ = best.y;
    res.primal_objective = best.pobj;
    res.dual_objective = best.dobj;
    res.gap = best.gap;
    res.primal_residual = best.pres;
    res.dual_residual = best.dres;
  }
  if (res.status == SdpStatus::kNumerical) {
    // Accept a slightly inaccurate solution.
    if (res.gap <= 1e3 * opt_.gap_tol && res.primal_residual <= 1e3 * opt_.feas_tol &&
        res.dual_residual <= 1e3 * opt_.feas_tol)
      res.status = SdpStatus::kOptimal;
  }
  res.X = X_;
  res.Z = Z_;
  res.x_lin = xl_;
  res.z_lin = zl_;
  res.x_free = xf_;
  res.y = y_.cwiseProduct(scale_);
  return res;
}

}  // namespace

SdpResult solve_sdp(const SdpProblem& problem, const SdpOptions& opt) {
  Solver s(problem, opt);
  return s.run();
}

}  // namespace orbitroa
