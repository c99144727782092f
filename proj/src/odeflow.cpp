#include "orbitroa/odeflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "orbitroa/error.hpp"
#include "orbitroa/json_util.hpp"

namespace orbitroa {

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Stages {
  Eigen::VectorXd k2, k3, k4, k5, k6, k7, tmp;
  explicit Stages(int n) : k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n) {}
};

// Takes one step from (t, y) with derivative k1; writes y_new and k7 = f(y_new)
// and returns the embedded error estimate vector in err.
void dp_step(const RhsFn& rhs, double t, const Eigen::VectorXd& y, const Eigen::VectorXd& k1,
             double h, Stages& s, Eigen::VectorXd& y_new, Eigen::VectorXd* err) {
  s.tmp = y + h * a21 * k1;
  rhs(t + c2 * h, s.tmp.data(), s.k2.data());
  s.tmp = y + h * (a31 * k1 + a32 * s.k2);
  rhs(t + c3 * h, s.tmp.data(), s.k3.data());
  s.tmp = y + h * (a41 * k1 + a42 * s.k2 + a43 * s.k3);
  rhs(t + c4 * h, s.tmp.data(), s.k4.data());
  s.tmp = y + h * (a51 * k1 + a52 * s.k2 + a53 * s.k3 + a54 * s.k4);
  rhs(t + c5 * h, s.tmp.data(), s.k5.data());
  s.tmp = y + h * (a61 * k1 + a62 * s.k2 + a63 * s.k3 + a64 * s.k4 + a65 * s.k5);
  rhs(t + h, s.tmp.data(), s.k6.data());
  y_new = y + h * (a71 * k1 + a73 * s.k3 + a74 * s.k4 + a75 * s.k5 + a76 * s.k6);
  rhs(t + h, y_new.data(), s.k7.data());
  if (err) *err = h * (e1 * k1 + e3 * s.k3 + e4 * s.k4 + e5 * s.k5 + e6 * s.k6 + e7 * s.k7);
}

double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0, const Eigen::VectorXd& y1,
                  const IntegratorOptions& opt) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = opt.atol + opt.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const RhsFn& rhs, double t0, const Eigen::VectorXd& y, const Eigen::VectorXd& f,
                    const IntegratorOptions& opt) {
  Eigen::VectorXd sc = (opt.atol + opt.rtol * y.array().abs()).matrix();
  const double n = std::sqrt(static_cast<double>(y.size()));
  const double d0 = (y.array() / sc.array()).matrix().norm() / n;
  const double d1 = (f.array() / sc.array()).matrix().norm() / n;
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Eigen::VectorXd y1 = y + h0 * f;
  Eigen::VectorXd f1(y.size());
  rhs(t0 + h0, y1.data(), f1.data());
  const double d2 = ((f1 - f).array() / sc.array()).matrix().norm() / n / h0;
  const double dm = std::max(d1, d2);
  const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
  return std::min(100 * h0, h1);
}

}  // namespace

Eigen::VectorXd hermite(const StepRecord& s, double t) {
  const double h = s.t1 - s.t0;
  if (h <= 0.0) return s.y1;
  const double th = (t - s.t0) / h;
  const double th2 = th * th, th3 = th2 * th;
  const double h00 = 2 * th3 - 3 * th2 + 1;
  const double h10 = th3 - 2 * th2 + th;
  const double h01 = -2 * th3 + 3 * th2;
  const double h11 = th3 - th2;
  return h00 * s.y0 + (h10 * h) * s.f0 + h01 * s.y1 + (h11 * h) * s.f1;
}

Eigen::VectorXd dopri5_single_step(const RhsFn& rhs, double t, const Eigen::VectorXd& y, double h) {
  Stages s(static_cast<int>(y.size()));
  Eigen::VectorXd k1(y.size()), y_new(y.size());
  rhs(t, y.data(), k1.data());
  dp_step(rhs, t, y, k1, h, s, y_new, nullptr);
  return y_new;
}

double dopri5(const RhsFn& rhs, double t0, Eigen::VectorXd& y, double t1,
              const IntegratorOptions& opt, const std::vector<double>& stop_times,
              const std::function<bool(const StepRecord&)>& on_step) {
  if (!(t1 > t0)) return t0;
  if (!y.allFinite()) fail(ErrorKind::kNumerical, "integrate: non-finite initial state");
  const int n = static_cast<int>(y.size());
  std::vector<double> stops;
  for (double s : stop_times) {
    if (s > t0 && s < t1) stops.push_back(s);
  }
  std::sort(stops.begin(), stops.end());
  stops.push_back(t1);
  size_t next_stop = 0;

  Stages st(n);
  Eigen::VectorXd k1(n), y_new(n), err(n);
  rhs(t0, y.data(), k1.data());
  double h = opt.h_init > 0 ? opt.h_init : initial_step(rhs, t0, y, k1, opt);
  double t = t0;
  StepRecord rec;
  for (long step = 0; step < opt.max_steps; ++step) {
    const double target = stops[next_stop];
    double h_try = h;
    bool landing = false;
    if (t + h_try >= target - 1e-13 * std::max(1.0, std::abs(target))) {
      h_try = target - t;
      landing = true;
    }
    dp_step(rhs, t, y, k1, h_try, st, y_new, &err);
    const double en = error_norm(err, y, y_new, opt);
    if (!std::isfinite(en) || !y_new.allFinite()) {
      // Non-finite trial: shrink hard, the state itself is still finite.
      h = h_try * 0.1;
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        fail(ErrorKind::kNumerical, "integrate: non-finite state");
      }
      continue;
    }
    const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
    if (en <= 1.0) {
      rec.t0 = t;
      rec.y0 = y;
      rec.f0 = k1;
      t = landing ? target : t + h_try;
      y = y_new;
      k1 = st.k7;
      rec.t1 = t;
      rec.y1 = y;
      rec.f1 = k1;
      h = landing ? std::max(h, h_try * fac) : h_try * fac;
      if (landing) ++next_stop;
      if (on_step && !on_step(rec)) return t;
      if (next_stop >= stops.size()) return t;
    } else {
      h = h_try * fac;
      if (h < 1e-14 * std::max(1.0, std::abs(t))) {
        fail(ErrorKind::kNumerical, "integrate: step size underflow at t=" + std::to_string(t));
      }
    }
  }
  fail(ErrorKind::kNumerical, "integrate: maximum number of steps exceeded");
}

// ---------------------------------------------------------------------------
// Phase integration with surface events

namespace {

struct PhaseRun {
  double t = 0.0;
  Eigen::VectorXd y;
  bool event = false;
};

Eigen::VectorXd control_for(const HybridModel& model, int phase, double t, const Eigen::VectorXd& x,
                            const Feedback* fb, const Eigen::VectorXd& u_open) {
  if (model.m() == 0) return Eigen::VectorXd(0);
  if (fb) return (*fb)(phase, t, x);
  if (u_open.size() == model.m()) return u_open;
  return Eigen::VectorXd::Zero(model.m());
}

// Right-hand side for the phase; with variational=true the state is
// [x; vec(X)] and X' = (df/dx) X (open loop only).
RhsFn phase_rhs(const HybridModel& model, int phase, bool variational, const Feedback* fb,
                const Eigen::VectorXd& u_open) {
  const int n = model.n();
  if (!variational) {
    return [&model, phase, fb, u_open, n](double t, const double* y, double* dy) {
      if (fb || model.m() == 0) {
        Eigen::Map<const Eigen::VectorXd> x(y, n);
        Eigen::VectorXd u = control_for(model, phase, t, x, fb, u_open);
        model.field(phase, y, u.data(), dy);
      } else {
        Eigen::VectorXd u =
            u_open.size() == model.m() ? u_open : Eigen::VectorXd::Zero(model.m());
        model.field(phase, y, u.data(), dy);
      }
    };
  }
  return [&model, phase, u_open, n](double, const double* y, double* dy) {
    Eigen::VectorXd u = u_open.size() == model.m() ? u_open : Eigen::VectorXd::Zero(model.m());
    Eigen::Map<const Eigen::VectorXd> x(y, n);
    model.field(phase, y, u.data(), dy);
    Eigen::MatrixXd J = model.jacobian_x(phase, x, u);
    Eigen::Map<const Eigen::MatrixXd> X(y + n, n, n);
    Eigen::Map<Eigen::MatrixXd> dX(dy + n, n, n);
    dX.noalias() = J * X;
  };
}

PhaseRun run_phase(const HybridModel& model, int phase, double t0, Eigen::VectorXd y0, double t1,
                   bool variational, const Feedback* fb, const FlowOptions& opt,
                   const std::vector<double>& stop_times,
                   const std::function<void(const StepRecord&)>& observe) {
  const int n = model.n();
  const auto& ph = model.phase(phase);
  RhsFn rhs = phase_rhs(model, phase, variational, fb, opt.u_open_loop);
  const bool events = opt.detect_events && ph.surface.has_value();
  const SwitchingSurface* surf = events ? &*ph.surface : nullptr;
  auto resid = [&](const Eigen::VectorXd& y) { return surf->exit_residual(y.head(n)); };

  PhaseRun out;
  const double r_start = events ? resid(y0) : 0.0;
  bool first = true;
  Eigen::VectorXd y = y0;
  auto on_step = [&](const StepRecord& s) -> bool {
    const bool was_first = first;
    first = false;
    if (!events) {
      if (observe) observe(s);
      return true;
    }
    const double r0 = resid(s.y0);
    const double r1 = resid(s.y1);
    const bool crossing = (r0 < 0 && r1 >= 0) || (r0 > 0 && r1 <= 0);
    if (!crossing || (was_first && std::abs(r_start) <= 10 * opt.event_tol)) {
      if (observe) observe(s);
      return true;
    }
    // Root of the Hermite interpolant by bisection, then Newton on true steps.
    double lo = s.t0, hi = s.t1;
    for (int it = 0; it < 60 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      const double rm = resid(hermite(s, mid));
      if ((rm < 0) == (r0 < 0) && rm != 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    double h = 0.5 * (lo + hi) - s.t0;
    const double hmax = s.t1 - s.t0;
    Eigen::VectorXd ye = s.y1;
    double re = r1;
    Eigen::VectorXd fe(y0.size());
    bool ok = false;
    for (int it = 0; it < 30; ++it) {
      h = std::clamp(h, 0.0, hmax);
      ye = h == hmax ? s.y1 : (h == 0.0 ? s.y0 : dopri5_single_step(rhs, s.t0, s.y0, h));
      re = resid(ye);
      if (std::abs(re) <= opt.event_tol) {
        ok = true;
        break;
      }
      rhs(s.t0 + h, ye.data(), fe.data());
      const double rdot = surf->c_minus.dot(fe.head(n));
      if (rdot == 0.0) break;
      h -= re / rdot;
    }
    if (!ok) {
      // Bisection on true steps as a fallback.
      double a = 0.0, b = hmax;
      for (int it = 0; it < 200; ++it) {
        h = 0.5 * (a + b);
        ye = dopri5_single_step(rhs, s.t0, s.y0, h);
        re = resid(ye);
        if (std::abs(re) <= opt.event_tol) {
          ok = true;
          break;
        }
        if ((re < 0) == (r0 < 0)) {
          a = h;
        } else {
          b = h;
        }
      }
      if (!ok) fail(ErrorKind::kNumerical, "event localization failed");
    }
    const double g = surf->guard.evaluate(Eigen::VectorXd(ye.head(n)));
    if (g < 0.0) {
      if (observe) observe(s);
      return true;
    }
    if (observe) {
      StepRecord partial = s;
      partial.t1 = s.t0 + h;
      partial.y1 = ye;
      rhs(partial.t1, ye.data(), fe.data());
      partial.f1 = fe;
      observe(partial);
    }
    out.event = true;
    out.t = s.t0 + h;
    out.y = ye;
    return false;
  };
  const double tf = dopri5(rhs, t0, y, t1, opt.ode, stop_times, on_step);
  if (!out.event) {
    out.t = tf;
    out.y = y;
  }
  return out;
}

// Records trajectory samples for FlowOptions::sample_dt.
struct Sampler {
  const FlowOptions& opt;
  int phase;
  std::vector<FlowSample>& out;
  double next;

  void operator()(const StepRecord& s, int n) {
    if (opt.sample_dt < 0) return;
    if (opt.sample_dt == 0) {
      out.push_back({s.t1, s.y1.head(n), phase});
      return;
    }
    while (next <= s.t1 + 1e-12 * std::max(1.0, std::abs(next))) {
      out.push_back({next, hermite(s, std::min(next, s.t1)).head(n), phase});
      next += opt.sample_dt;
    }
  }
};

}  // namespace

FlowResult integrate(const HybridModel& model, int phase, const Eigen::VectorXd& x0, double t0,
                     double t1, const Feedback* feedback, const FlowOptions& opt) {
  require(x0.size() == model.n(), "integrate: initial state dimension");
  require(phase >= 0 && phase < model.num_phases(), "integrate: phase index");
  require(t1 > t0, "integrate: time span must be positive");
  if (!x0.allFinite()) fail(ErrorKind::kInvalidArgument, "integrate: non-finite initial state");
  FlowResult res;
  if (opt.sample_dt >= 0) res.samples.push_back({t0, x0, phase});
  Sampler sampler{opt, phase, res.samples, t0 + opt.sample_dt};
  PhaseRun run = run_phase(model, phase, t0, x0, t1, false, feedback, opt, {},
                           [&](const StepRecord& s) { sampler(s, model.n()); });
  res.x = run.y;
  res.t = run.t;
  res.phase = phase;
  res.event = run.event;
  if (run.event && opt.sample_dt > 0) res.samples.push_back({run.t, run.y, phase});
  return res;
}

FlowResult hybrid_flow(const HybridModel& model, int phase, const Eigen::VectorXd& x0,
                       double duration, const Feedback* feedback, const FlowOptions& opt) {
  require(duration > 0, "hybrid_flow: duration must be positive");
  FlowResult res;
  res.phase = phase;
  res.x = x0;
  res.t = 0.0;
  if (opt.sample_dt >= 0) res.samples.push_back({0.0, x0, phase});
  double next_sample = opt.sample_dt;
  while (res.t < duration) {
    FlowResult seg;
    {
      FlowOptions o = opt;
      std::vector<FlowSample> samples;
      Sampler sampler{opt, res.phase, samples, next_sample};
      PhaseRun run = run_phase(model, res.phase, res.t, res.x, duration, false, feedback, o, {},
                               [&](const StepRecord& s) { sampler(s, model.n()); });
      next_sample = sampler.next;
      res.samples.insert(res.samples.end(), samples.begin(), samples.end());
      seg.x = run.y;
      seg.t = run.t;
      seg.event = run.event;
    }
    res.x = seg.x;
    res.t = seg.t;
    if (!seg.event) break;
    ImpactRecord imp;
    imp.time = seg.t;
    imp.phase = res.phase;
    imp.pre = seg.x;
    imp.post = model.apply_delta(res.phase, seg.x);
    if (!imp.post.allFinite()) fail(ErrorKind::kNumerical, "hybrid_flow: non-finite impact state");
    if (opt.sample_dt > 0) {
      res.samples.push_back({imp.time, imp.pre, res.phase});
      res.samples.push_back({imp.time, imp.post, model.next_phase(res.phase)});
    }
    res.impacts.push_back(imp);
    if (static_cast<int>(res.impacts.size()) > opt.max_impacts) {
      fail(ErrorKind::kNumerical, "hybrid_flow: more than " + std::to_string(opt.max_impacts) +
                                      " impacts (probable Zeno behavior or modeling error)");
    }
    res.x = imp.post;
    res.phase = model.next_phase(res.phase);
    res.event = false;
    if (opt.stop_after_impacts >= 0 &&
        static_cast<int>(res.impacts.size()) >= opt.stop_after_impacts)
      break;
  }
  res.event = false;
  return res;
}

// ---------------------------------------------------------------------------
// PeriodicOrbit

PeriodicOrbit::PeriodicOrbit(int n, int m, std::vector<OrbitSegment> segments,
                             Eigen::VectorXd u_nominal, bool hybrid, double closure)
    : n_(n), m_(m), hybrid_(hybrid), closure_(closure), u_nominal_(std::move(u_nominal)),
      segments_(std::move(segments)) {
  require(!segments_.empty(), "orbit needs at least one segment");
  if (u_nominal_.size() == 0) u_nominal_ = Eigen::VectorXd::Zero(m_);
  require(u_nominal_.size() == m_, "orbit: nominal control dimension");
  double prev = 0.0;
  for (const auto& s : segments_) {
    require(s.t.size() >= 2 && s.t.size() == s.x.size() && s.t.size() == s.f.size(),
            "orbit segment: inconsistent knot arrays");
    require(std::abs(s.t.front() - prev) <= 1e-9 * std::max(1.0, prev),
            "orbit segments must be contiguous");
    for (size_t i = 1; i < s.t.size(); ++i) {
      require(s.t[i] > s.t[i - 1], "orbit knot times must be strictly increasing");
    }
    prev = s.t.back();
  }
  period_ = segments_.back().t.back();
  require(period_ > 0, "orbit period must be positive");
}

std::vector<double> PeriodicOrbit::impact_times() const {
  std::vector<double> out;
  if (!hybrid_) return out;
  for (const auto& s : segments_) out.push_back(s.t.back());
  return out;
}

int PeriodicOrbit::segment_at(double t) const {
  double tw = std::fmod(t, period_);
  if (tw < 0) tw += period_;
  for (int k = 0; k < num_segments(); ++k) {
    if (tw < segments_[k].t.back()) return k;
  }
  return num_segments() - 1;
}

namespace {

Eigen::VectorXd segment_hermite(const OrbitSegment& s, double t) {
  t = std::clamp(t, s.t.front(), s.t.back());
  auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  size_t i = static_cast<size_t>(std::max<std::ptrdiff_t>(1, it - s.t.begin()));
  if (i >= s.t.size()) i = s.t.size() - 1;
  StepRecord r;
  r.t0 = s.t[i - 1];
  r.t1 = s.t[i];
  r.y0 = s.x[i - 1];
  r.y1 = s.x[i];
  r.f0 = s.f[i - 1];
  r.f1 = s.f[i];
  return hermite(r, t);
}

}  // namespace

Eigen::VectorXd PeriodicOrbit::state_in_segment(int k, double t) const {
  return segment_hermite(segments_.at(k), t);
}

Eigen::VectorXd PeriodicOrbit::field_in_segment(int k, double t) const {
  // Derivative of the Hermite interpolant.
  const auto& s = segments_.at(k);
  t = std::clamp(t, s.t.front(), s.t.back());
  auto it = std::upper_bound(s.t.begin(), s.t.end(), t);
  size_t i = static_cast<size_t>(std::max<std::ptrdiff_t>(1, it - s.t.begin()));
  if (i >= s.t.size()) i = s.t.size() - 1;
  const double h = s.t[i] - s.t[i - 1];
  const double th = (t - s.t[i - 1]) / h;
  const double d00 = (6 * th * th - 6 * th) / h;
  const double d10 = 3 * th * th - 4 * th + 1;
  const double d01 = (-6 * th * th + 6 * th) / h;
  const double d11 = 3 * th * th - 2 * th;
  return d00 * s.x[i - 1] + d10 * s.f[i - 1] + d01 * s.x[i] + d11 * s.f[i];
}

Eigen::VectorXd PeriodicOrbit::state(double t) const {
  double tw = std::fmod(t, period_);
  if (tw < 0) tw += period_;
  return state_in_segment(segment_at(tw), tw);
}

namespace {

double point_segment_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& a,
                              const Eigen::VectorXd& b, double* frac) {
  Eigen::VectorXd ab = b - a;
  const double L2 = ab.squaredNorm();
  double s = L2 > 0 ? std::clamp((p - a).dot(ab) / L2, 0.0, 1.0) : 0.0;
  if (frac) *frac = s;
  return (p - a - s * ab).norm();
}

}  // namespace

double PeriodicOrbit::distance(const Eigen::VectorXd& x) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) {
    for (size_t i = 1; i < s.x.size(); ++i) {
      best = std::min(best, point_segment_distance(x, s.x[i - 1], s.x[i], nullptr));
    }
  }
  return best;
}

double PeriodicOrbit::nearest_time(const Eigen::VectorXd& x) const {
  double best = std::numeric_limits<double>::infinity();
  double tb = 0.0;
  for (const auto& s : segments_) {
    for (size_t i = 1; i < s.x.size(); ++i) {
      double frac = 0.0;
      const double d = point_segment_distance(x, s.x[i - 1], s.x[i], &frac);
      if (d < best) {
        best = d;
        tb = s.t[i - 1] + frac * (s.t[i] - s.t[i - 1]);
      }
    }
  }
  return tb >= period_ ? tb - period_ : tb;
}

// ---------------------------------------------------------------------------
// Saltation, shooting, monodromy

Eigen::MatrixXd saltation_matrix(const Eigen::MatrixXd& ddelta, const Eigen::VectorXd& f_minus,
                                 const Eigen::VectorXd& f_plus, const Eigen::VectorXd& c_minus) {
  const double denom = c_minus.dot(f_minus);
  if (denom == 0.0) fail(ErrorKind::kNumerical, "saltation: grazing impact");
  return ddelta + (f_plus - ddelta * f_minus) * c_minus.transpose() / denom;
}

namespace {

Eigen::VectorXd pack_variational(const Eigen::VectorXd& x, const Eigen::MatrixXd& X) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd y(n + n * n);
  y.head(n) = x;
  y.tail(n * n) = Eigen::Map<const Eigen::VectorXd>(X.data(), n * n);
  return y;
}

struct HybridPass {
  Eigen::VectorXd x;    // state after the final impact
  Eigen::MatrixXd DP;   // Jacobian of the impact-to-impact map
  Eigen::MatrixXd Psi;  // fixed-time sensitivity (saltation-corrected monodromy)
  std::vector<double> durations;
};

// Flows phase 0 .. N-1 from x0 through every impact, with variational data.
HybridPass hybrid_pass(const HybridModel& model, const Eigen::VectorXd& x0, double t_budget,
                       const IntegratorOptions& ode, const Eigen::VectorXd& u_nom) {
  const int n = model.n();
  FlowOptions fo;
  fo.ode = ode;
  fo.u_open_loop = u_nom;
  HybridPass out;
  Eigen::VectorXd x = x0;
  Eigen::MatrixXd Psi = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd DP = Eigen::MatrixXd::Identity(n, n);
  for (int k = 0; k < model.num_phases(); ++k) {
    PhaseRun run = run_phase(model, k, 0.0, pack_variational(x, Eigen::MatrixXd::Identity(n, n)),
                             t_budget, true, nullptr, fo, {}, nullptr);
    if (!run.event) fail(ErrorKind::kNumerical, "shooting diverged: no impact in phase " +
                                                    std::to_string(k));
    const Eigen::VectorXd xm = run.y.head(n);
    const Eigen::MatrixXd Phi = Eigen::Map<const Eigen::MatrixXd>(run.y.data() + n, n, n);
    const Eigen::VectorXd xp = model.apply_delta(k, xm);
    const Eigen::VectorXd fm = model.field(k, xm, u_nom);
    const Eigen::VectorXd fp = model.field(model.next_phase(k), xp, u_nom);
    const Eigen::VectorXd& c = model.phase(k).surface->c_minus;
    const Eigen::MatrixXd D = model.delta_jacobian(k, xm);
    // Event-stopped map: the impact time moves with the state.
    const Eigen::MatrixXd E =
        D * (Eigen::MatrixXd::Identity(n, n) - fm * c.transpose() / c.dot(fm));
    DP = E * Phi * DP;
    Psi = saltation_matrix(D, fm, fp, c) * Phi * Psi;
    x = xp;
    out.durations.push_back(run.t);
  }
  out.x = x;
  out.DP = DP;
  out.Psi = Psi;
  return out;
}

Eigen::VectorXd pinv_solve(const Eigen::MatrixXd& J, const Eigen::VectorXd& F) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J);
  cod.setThreshold(1e-9);
  return cod.solve(F);
}

OrbitSegment sample_segment(const HybridModel& model, int phase, double t0,
                            const Eigen::VectorXd& x0, double duration, bool hybrid, int knots,
                            const IntegratorOptions& ode, const Eigen::VectorXd& u_nom,
                            Eigen::VectorXd* x_end) {
  FlowOptions fo;
  fo.ode = ode;
  fo.u_open_loop = u_nom;
  fo.detect_events = hybrid;
  std::vector<double> stops;
  for (int j = 1; j <= knots; ++j) stops.push_back(t0 + duration * j / knots);
  OrbitSegment seg;
  seg.phase = phase;
  seg.t.push_back(t0);
  seg.x.push_back(x0);
  size_t next = 0;
  // A hybrid run continues slightly past the nominal duration so the event
  // (not the time limit) ends it.
  const double t_end = hybrid ? t0 + duration * 1.01 + 1e-6 : stops.back();
  PhaseRun run = run_phase(model, phase, t0, x0, t_end, false, nullptr, fo, stops,
                           [&](const StepRecord& s) {
                             while (next < stops.size() && stops[next] < s.t1) ++next;
                             if (next < stops.size() && s.t1 == stops[next]) {
                               seg.t.push_back(s.t1);
                               seg.x.push_back(s.y1);
                               ++next;
                             }
                           });
  if (hybrid) {
    if (!run.event) fail(ErrorKind::kNumerical, "orbit resampling missed the impact");
    const double tol = 1e-6 * duration / knots;
    while (seg.t.size() > 1 && seg.t.back() >= run.t - tol) {
      seg.t.pop_back();
      seg.x.pop_back();
    }
    seg.t.push_back(run.t);
    seg.x.push_back(run.y);
  }
  for (const auto& x : seg.x) seg.f.push_back(model.field(phase, x, u_nom));
  if (x_end) *x_end = run.y;
  return seg;
}

}  // namespace

PeriodicOrbit find_orbit(const HybridModel& model, const Eigen::VectorXd& x_guess, double T_guess,
                         const ShootingOptions& opt, const Eigen::VectorXd& u_nominal_in) {
  const int n = model.n();
  require(x_guess.size() == n, "find_orbit: guess dimension");
  require(T_guess > 0, "find_orbit: period guess must be positive");
  Eigen::VectorXd u_nom =
      u_nominal_in.size() == model.m() ? u_nominal_in : Eigen::VectorXd::Zero(model.m());
  const bool hybrid = model.is_hybrid();
  Eigen::VectorXd x = x_guess;
  double T = T_guess;
  double closure = std::numeric_limits<double>::infinity();
  std::vector<double> durations;
  const double blowup = 1e6 * std::max(1.0, x_guess.norm());

  if (!hybrid) {
    Eigen::VectorXd f0 = model.field(0, x_guess, u_nom);
    int anchor = opt.anchor.value_or(-1);
    if (anchor < 0) f0.cwiseAbs().maxCoeff(&anchor);
    require(anchor >= 0 && anchor < n, "find_orbit: anchor index out of range");
    const double anchor_val = x_guess(anchor);
    FlowOptions fo;
    fo.ode = opt.ode;
    fo.u_open_loop = u_nom;
    bool converged = false;
    for (int it = 0; it <= opt.max_iterations; ++it) {
      PhaseRun run;
      try {
        run = run_phase(model, 0, 0.0, pack_variational(x, Eigen::MatrixXd::Identity(n, n)), T,
                        true, nullptr, fo, {}, nullptr);
      } catch (const Error& e) {
        fail(ErrorKind::kNumerical, std::string("shooting diverged: ") + e.what());
      }
      const Eigen::VectorXd xT = run.y.head(n);
      const Eigen::MatrixXd Psi = Eigen::Map<const Eigen::MatrixXd>(run.y.data() + n, n, n);
      if (!xT.allFinite() || xT.norm() > blowup) fail(ErrorKind::kNumerical, "shooting diverged");
      if (model.field(0, x, u_nom).norm() <= 1e-9) {
        fail(ErrorKind::kNumerical, "shooting diverged: converged to an equilibrium");
      }
      Eigen::VectorXd F(n + 1);
      F.head(n) = xT - x;
      F(n) = x(anchor) - anchor_val;
      closure = F.head(n).norm();
      if (closure <= opt.closure_tol && std::abs(F(n)) <= opt.closure_tol) {
        converged = true;
        break;
      }
      if (it == opt.max_iterations) break;
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n + 1, n + 1);
      J.topLeftCorner(n, n) = Psi - Eigen::MatrixXd::Identity(n, n);
      J.topRightCorner(n, 1) = model.field(0, xT, u_nom);
      J(n, anchor) = 1.0;
      Eigen::VectorXd d = pinv_solve(J, -F);
      // Keep steps modest relative to the orbit scale.
      const double scale = std::max({1.0, x.norm(), T});
      if (d.norm() > 0.5 * scale) d *= 0.5 * scale / d.norm();
      // Never shrink the period by more than half in one step.
      if (d(n) < -0.5 * T) d *= -0.5 * T / d(n);
      x += d.head(n);
      T += d(n);
      if (!(T > 0) || !x.allFinite()) fail(ErrorKind::kNumerical, "shooting diverged");
      if (T < 1e-2 * T_guess) fail(ErrorKind::kNumerical, "shooting diverged: period collapsed");
    }
    if (!converged) {
      fail(ErrorKind::kNumerical, "shooting diverged: closure " + std::to_string(closure) +
                                      " after " + std::to_string(opt.max_iterations) +
                                      " iterations");
    }
    std::vector<OrbitSegment> segs;
    segs.push_back(sample_segment(model, 0, 0.0, x, T, false, opt.knots_per_segment, opt.ode, u_nom,
                                  nullptr));
    PeriodicOrbit orbit(n, model.m(), std::move(segs), u_nom, false, closure);
    check_orbit(model, orbit, 1e-8, opt.graze_rel);
    return orbit;
  }

  // Hybrid: shoot impact to impact from the post-impact state of the last phase.
  const auto& last = *model.phase(model.num_phases() - 1).surface;
  bool converged = false;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    HybridPass pass;
    try {
      pass = hybrid_pass(model, x, 5.0 * T_guess, opt.ode, u_nom);
    } catch (const Error& e) {
      const std::string w = e.what();
      fail(ErrorKind::kNumerical,
           w.rfind("shooting diverged", 0) == 0 ? w : "shooting diverged: " + w);
    }
    if (!pass.x.allFinite() || pass.x.norm() > blowup) fail(ErrorKind::kNumerical, "shooting diverged");
    Eigen::VectorXd F(n + 1);
    F.head(n) = pass.x - x;
    F(n) = last.entry_residual(x);
    closure = F.head(n).norm();
    durations = pass.durations;
    if (closure <= opt.closure_tol && std::abs(F(n)) <= opt.closure_tol) {
      converged = true;
      break;
    }
    if (it == opt.max_iterations) break;
    Eigen::MatrixXd J(n + 1, n);
    J.topRows(n) = pass.DP - Eigen::MatrixXd::Identity(n, n);
    J.row(n) = last.c_plus.transpose();
    Eigen::VectorXd d = pinv_solve(J, -F);
    const double scale = std::max(1.0, x.norm());
    if (d.norm() > 0.5 * scale) d *= 0.5 * scale / d.norm();
    x += d;
  }
  if (!converged) {
    fail(ErrorKind::kNumerical, "shooting diverged: closure " + std::to_string(closure) +
                                    " after " + std::to_string(opt.max_iterations) +
                                    " iterations");
  }
  std::vector<OrbitSegment> segs;
  Eigen::VectorXd xs = x;
  double t0 = 0.0;
  for (int k = 0; k < model.num_phases(); ++k) {
    Eigen::VectorXd pre;
    segs.push_back(sample_segment(model, k, t0, xs, durations[k], true, opt.knots_per_segment,
                                  opt.ode, u_nom, &pre));
    t0 = segs.back().t.back();
    xs = model.apply_delta(k, pre);
  }
  PeriodicOrbit orbit(n, model.m(), std::move(segs), u_nom, true, closure);
  check_orbit(model, orbit, 1e-8, opt.graze_rel);
  return orbit;
}

Eigen::MatrixXd monodromy(const HybridModel& model, const PeriodicOrbit& orbit,
                          const IntegratorOptions& ode) {
  const int n = model.n();
  require(orbit.n() == n, "monodromy: orbit/model dimension mismatch");
  const Eigen::VectorXd x0 = orbit.segments().front().x.front();
  try {
    if (!orbit.hybrid()) {
      FlowOptions fo;
      fo.ode = ode;
      fo.u_open_loop = orbit.u_nominal();
      fo.detect_events = false;
      PhaseRun run = run_phase(model, 0, 0.0, pack_variational(x0, Eigen::MatrixXd::Identity(n, n)),
                               orbit.period(), true, nullptr, fo, {}, nullptr);
      return Eigen::Map<const Eigen::MatrixXd>(run.y.data() + n, n, n);
    }
    return hybrid_pass(model, x0, 2.0 * orbit.period() + 1.0, ode, orbit.u_nominal()).Psi;
  } catch (const Error& e) {
    fail(ErrorKind::kNumerical, std::string("monodromy propagation failed: ") + e.what());
  }
}

Eigen::VectorXcd floquet(const Eigen::MatrixXd& psi) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(psi, false);
  Eigen::VectorXcd ev = es.eigenvalues();
  std::vector<std::complex<double>> v(ev.data(), ev.data() + ev.size());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return Eigen::Map<Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_orbit(const HybridModel& model, const PeriodicOrbit& orbit, double tol,
                 double graze_rel) {
  const auto& segs = orbit.segments();
  for (const auto& s : segs) {
    for (const auto& f : s.f) {
      if (!(f.norm() > 1e-12)) {
        fail(ErrorKind::kInvalidArgument, "orbit: vector field vanishes at a knot (equilibrium)");
      }
    }
  }
  if (!orbit.hybrid()) {
    if ((segs.front().x.front() - segs.back().x.back()).norm() > 1e-6) {
      fail(ErrorKind::kInvalidArgument, "orbit: endpoints do not close");
    }
    return;
  }
  require(orbit.num_segments() == model.num_phases(), "orbit: one segment per phase expected");
  for (int k = 0; k < orbit.num_segments(); ++k) {
    const auto& surf = *model.phase(k).surface;
    const Eigen::VectorXd& pre = segs[k].x.back();
    const Eigen::VectorXd& fm = segs[k].f.back();
    const std::string where = "orbit impact " + std::to_string(k) + ": ";
    if (std::abs(surf.exit_residual(pre)) > tol) {
      fail(ErrorKind::kInvalidArgument, where + "pre-impact state off the exit surface");
    }
    if (surf.guard.evaluate(pre) < -tol) {
      fail(ErrorKind::kInvalidArgument, where + "guard negative at impact");
    }
    const Eigen::VectorXd post = model.apply_delta(k, pre);
    if (std::abs(surf.entry_residual(post)) > tol) {
      fail(ErrorKind::kInvalidArgument, where + "impact map does not reach the entry plane");
    }
    const int kn = (k + 1) % orbit.num_segments();
    if ((post - segs[kn].x.front()).norm() > 1e-6 * std::max(1.0, post.norm())) {
      fail(ErrorKind::kInvalidArgument, where + "post-impact state does not match next segment");
    }
    const Eigen::VectorXd fp = model.field(kn, post, orbit.u_nominal());
    if (std::abs(surf.c_minus.dot(fm)) <= graze_rel * fm.norm() * surf.c_minus.norm() ||
        std::abs(surf.c_plus.dot(fp)) <= graze_rel * fp.norm() * surf.c_plus.norm()) {
      fail(ErrorKind::kInvalidArgument, where + "grazing impact");
    }
  }
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json orbit_to_json(const PeriodicOrbit& orbit) {
  nlohmann::json j;
  j["n"] = orbit.n();
  j["m"] = orbit.m();
  j["period"] = orbit.period();
  j["hybrid"] = orbit.hybrid();
  j["closure"] = orbit.closure();
  j["u_nominal"] = eigen_to_json(orbit.u_nominal());
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : orbit.segments()) {
    nlohmann::json sj;
    sj["phase"] = s.phase;
    sj["t"] = s.t;
    nlohmann::json xs = nlohmann::json::array(), fs = nlohmann::json::array();
    for (size_t i = 0; i < s.t.size(); ++i) {
      xs.push_back(eigen_to_json(s.x[i]));
      fs.push_back(eigen_to_json(s.f[i]));
    }
    sj["x"] = std::move(xs);
    sj["f"] = std::move(fs);
    segs.push_back(std::move(sj));
  }
  j["segments"] = std::move(segs);
  j["impact_times"] = orbit.impact_times();
  return j;
}

PeriodicOrbit orbit_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("n").get<int>();
    const int m = j.at("m").get<int>();
    std::vector<OrbitSegment> segs;
    for (const auto& sj : j.at("segments")) {
      OrbitSegment s;
      s.phase = sj.at("phase").get<int>();
      s.t = sj.at("t").get<std::vector<double>>();
      for (const auto& x : sj.at("x")) s.x.push_back(json_to_vector(x, "orbit.x"));
      for (const auto& f : sj.at("f")) s.f.push_back(json_to_vector(f, "orbit.f"));
      for (const auto& x : s.x) {
        if (x.size() != n) fail(ErrorKind::kParse, "orbit: state dimension mismatch");
      }
      segs.push_back(std::move(s));
    }
    Eigen::VectorXd u = json_to_vector(j.at("u_nominal"), "orbit.u_nominal");
    return PeriodicOrbit(n, m, std::move(segs), u, j.at("hybrid").get<bool>(),
                         j.value("closure", 0.0));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParse, std::string("orbit JSON: ") + e.what());
  }
}

std::string trajectory_csv(const std::vector<FlowSample>& samples, int n) {
  std::ostringstream os;
  os.precision(17);
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << ",phase\n";
  for (const auto& s : samples) {
    os << s.t;
    for (int i = 0; i < n; ++i) os << "," << s.x(i);
    os << "," << s.phase << "\n";
  }
  return os.str();
}

nlohmann::json impacts_to_json(const std::vector<ImpactRecord>& impacts) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& imp : impacts) {
    j.push_back({{"time", imp.time},
                 {"phase", imp.phase},
                 {"pre", eigen_to_json(imp.pre)},
                 {"post", eigen_to_json(imp.post)}});
  }
  return j;
}

}  // namespace orbitroa
