#include "loci/ode.hpp"

#include <algorithm>
#include <cmath>

namespace loci::ode {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Continuous extension.
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const Options& opt) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = err[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

double initial_step(const Rhs& rhs, double t0, const Vec& y0, const Vec& f0, double dir,
                    const Options& opt) {
  Vec sc = (opt.atol + opt.rtol * y0.array().abs()).matrix();
  const double dnf = std::sqrt((f0.array() / sc.array()).square().mean());
  const double dny = std::sqrt((y0.array() / sc.array()).square().mean());
  double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, opt.h_max);
  Vec y1 = y0 + dir * h * f0;
  Vec f1(y0.size());
  rhs(t0 + dir * h, y1, f1);
  const double der2 = std::sqrt(((f1 - f0).array() / sc.array()).square().mean()) / h;
  const double der12 = std::max(std::abs(der2), dnf);
  const double h1 =
      der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / 5.0);
  return std::min({100 * h, h1, opt.h_max});
}

}  // namespace

std::string to_string(Status s) {
  switch (s) {
    case Status::Complete: return "complete";
    case Status::StepUnderflow: return "step size underflow";
    case Status::Overflow: return "state overflow";
    case Status::NonFinite: return "non-finite state";
    case Status::TooManySteps: return "too many steps";
    case Status::GuardStopped: return "left admissible region";
  }
  return "unknown";
}

double DenseOutput::t_begin() const {
  if (segments_.empty()) throw Error("dense output is empty");
  return segments_.front().t0;
}

double DenseOutput::t_end() const {
  if (segments_.empty()) throw Error("dense output is empty");
  return segments_.back().t0 + segments_.back().h;
}

std::size_t DenseOutput::locate(double t) const {
  // Segments are ordered along the direction of integration.
  const bool forward = segments_.front().h >= 0.0;
  auto before = [forward](const DenseSegment& s, double tt) {
    return forward ? (s.t0 + s.h < tt) : (s.t0 + s.h > tt);
  };
  auto it = std::lower_bound(segments_.begin(), segments_.end(), t, before);
  if (it == segments_.end()) --it;
  return static_cast<std::size_t>(it - segments_.begin());
}

Vec DenseOutput::eval(double t) const {
  if (segments_.empty()) throw Error("dense output is empty");
  const DenseSegment& s = segments_[locate(t)];
  if (s.h == 0.0) return s.c[0];
  const double th = (t - s.t0) / s.h;
  const double th1 = 1.0 - th;
  return s.c[0] + th * (s.c[1] + th1 * (s.c[2] + th * (s.c[3] + th1 * s.c[4])));
}

Result integrate(const Rhs& rhs, double t0, const Vec& y0, double t1, const Options& opt,
                 const Guard& guard) {
  Result res;
  res.times.push_back(t0);
  res.states.push_back(y0);
  res.t_last = t0;
  res.y_last = y0;

  const Eigen::Index n = y0.size();
  if (t1 == t0) {
    DenseSegment seg;
    seg.t0 = t0;
    seg.h = 0.0;
    seg.c[0] = y0;
    for (int i = 1; i < 5; ++i) seg.c[i] = Vec::Zero(n);
    res.dense.push(std::move(seg));
    return res;
  }
  const double dir = t1 > t0 ? 1.0 : -1.0;

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y(n), ytmp(n), ynew(n), err(n);
  y = y0;
  double t = t0;
  rhs(t, y, k1);
  if (!k1.allFinite()) {
    res.status = Status::NonFinite;
    return res;
  }
  double h = opt.h_init > 0 ? opt.h_init : initial_step(rhs, t0, y0, k1, dir, opt);
  bool last_rejected = false;

  while (dir * (t1 - t) > 0.0) {
    if (res.accepted + res.rejected >= opt.max_steps) {
      res.status = Status::TooManySteps;
      return res;
    }
    const double tiny = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
    if (h < tiny) {
      res.status = Status::StepUnderflow;
      return res;
    }
    bool final_step = false;
    if (dir * (t + dir * h - t1) >= 0.0) {
      h = std::abs(t1 - t);
      final_step = true;
    }
    const double hs = dir * h;

    ytmp = y + hs * (a21 * k1);
    rhs(t + c2 * hs, ytmp, k2);
    ytmp = y + hs * (a31 * k1 + a32 * k2);
    rhs(t + c3 * hs, ytmp, k3);
    ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * hs, ytmp, k4);
    ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * hs, ytmp, k5);
    ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + hs, ytmp, k6);
    ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    const double tnew = final_step ? t1 : t + hs;
    rhs(tnew, ynew, k7);
    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double en = error_norm(err, y, ynew, opt);
    if (!std::isfinite(en) || !ynew.allFinite() || !k7.allFinite()) {
      // Shrink hard; a non-finite trial is treated as a rejection.
      h *= 0.1;
      ++res.rejected;
      last_rejected = true;
      continue;
    }

    if (en <= 1.0) {
      DenseSegment seg;
      seg.t0 = t;
      seg.h = tnew - t;
      const Vec ydiff = ynew - y;
      const Vec bspl = seg.h * k1 - ydiff;
      seg.c[0] = y;
      seg.c[1] = ydiff;
      seg.c[2] = bspl;
      seg.c[3] = ydiff - seg.h * k7 - bspl;
      seg.c[4] = seg.h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

      if (ynew.cwiseAbs().maxCoeff() > opt.overflow) {
        res.status = Status::Overflow;
        return res;
      }
      if (guard && !guard(tnew, ynew)) {
        res.status = Status::GuardStopped;
        return res;
      }
      res.dense.push(std::move(seg));
      t = tnew;
      y = ynew;
      k1 = k7;
      ++res.accepted;
      res.times.push_back(t);
      res.states.push_back(y);
      res.t_last = t;
      res.y_last = y;

      double fac = en == 0.0 ? 10.0 : 0.9 * std::pow(en, -0.2);
      fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 10.0);
      h = std::min(h * fac, opt.h_max);
      last_rejected = false;
    } else {
      const double fac = std::max(0.2, 0.9 * std::pow(en, -0.2));
      h *= fac;
      ++res.rejected;
      last_rejected = true;
    }
  }
  res.status = Status::Complete;
  return res;
}

}  // namespace loci::ode
