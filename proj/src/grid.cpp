#include "orbitroa/grid.hpp"

#include <algorithm>

#include "orbitroa/error.hpp"

namespace orbitroa {

namespace {

// Stencil rows: derivative at index i = sum_k coef[k] * v[idx[k]] / h.
struct Row {
  int idx[5];
  double coef[5];
};

Row stencil(int i, int N, bool periodic) {
  // N = number of distinct samples.
  Row r{};
  static const double central[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
  static const double fwd0[5] = {-25.0 / 12, 48.0 / 12, -36.0 / 12, 16.0 / 12, -3.0 / 12};
  static const double fwd1[5] = {-3.0 / 12, -10.0 / 12, 18.0 / 12, -6.0 / 12, 1.0 / 12};
  if (periodic) {
    for (int k = 0; k < 5; ++k) {
      r.idx[k] = ((i + k - 2) % N + N) % N;
      r.coef[k] = central[k];
    }
    return r;
  }
  if (i >= 2 && i <= N - 3) {
    for (int k = 0; k < 5; ++k) {
      r.idx[k] = i + k - 2;
      r.coef[k] = central[k];
    }
  } else if (i == 0 || i == 1) {
    const double* c = i == 0 ? fwd0 : fwd1;
    for (int k = 0; k < 5; ++k) {
      r.idx[k] = k;
      r.coef[k] = c[k];
    }
  } else {
    // Mirror of the forward stencils.
    const double* c = i == N - 1 ? fwd0 : fwd1;
    for (int k = 0; k < 5; ++k) {
      r.idx[k] = N - 1 - k;
      r.coef[k] = -c[k];
    }
  }
  return r;
}

}  // namespace

std::vector<Eigen::VectorXd> fd_derivative(const std::vector<Eigen::VectorXd>& v, double h,
                                           bool periodic) {
  const int total = static_cast<int>(v.size());
  const int N = periodic ? total - 1 : total;
  require(N >= 5, "finite differences need at least five distinct samples");
  require(h > 0, "finite differences need a positive spacing");
  std::vector<Eigen::VectorXd> d(total);
  for (int i = 0; i < N; ++i) {
    Row r = stencil(i, N, periodic);
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(v[0].size());
    for (int k = 0; k < 5; ++k) {
      if (r.coef[k] != 0.0) acc += r.coef[k] * v[r.idx[k]];
    }
    d[i] = acc / h;
  }
  if (periodic) d[N] = d[0];
  return d;
}

std::vector<Eigen::VectorXd> fd_derivative_adjoint(const std::vector<Eigen::VectorXd>& w,
                                                   double h, bool periodic) {
  const int total = static_cast<int>(w.size());
  const int N = periodic ? total - 1 : total;
  std::vector<Eigen::VectorXd> g(total, Eigen::VectorXd::Zero(w[0].size()));
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd wi = w[i];
    // The duplicated closing sample shares the first derivative.
    if (periodic && i == 0) wi += w[N];
    Row r = stencil(i, N, periodic);
    for (int k = 0; k < 5; ++k) {
      if (r.coef[k] != 0.0) g[r.idx[k]] += (r.coef[k] / h) * wi;
    }
  }
  return g;
}

size_t bracket(const std::vector<double>& t, double s) {
  if (t.size() < 2) return 0;
  auto it = std::upper_bound(t.begin(), t.end(), s);
  std::ptrdiff_t i = (it - t.begin()) - 1;
  i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(t.size()) - 2);
  return static_cast<size_t>(i);
}

}  // namespace orbitroa
