#include "loci/hamiltonian.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace loci {

namespace {

double fd_step(const Vec& x, const Vec& p) {
  const double state = std::sqrt(x.squaredNorm() + p.squaredNorm());
  return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + state);
}

}  // namespace

HamiltonianModel::HamiltonianModel(std::string name, int n, double level, Evaluators ev)
    : name_(std::move(name)), n_(n), level_(level), ev_(std::move(ev)) {
  if (n_ < 1) throw Error("model dimension must be positive");
  if (!ev_.H || !ev_.grad_x || !ev_.grad_p) {
    throw Error("model '" + name_ + "' needs H and both gradients");
  }
  const bool analytic = ev_.hess_xx && ev_.hess_xp && ev_.hess_pp;
  second_source_ = analytic ? DerivativeSource::Analytic : DerivativeSource::FiniteDifference;
}

void HamiltonianModel::set_region(RegionFn region, std::string description) {
  region_ = std::move(region);
  region_desc_ = std::move(description);
}

Mat HamiltonianModel::hess_xx(const Vec& x, const Vec& p) const {
  if (ev_.hess_xx) return ev_.hess_xx(x, p);
  const double h = fd_step(x, p);
  Mat A(n_, n_);
  Vec xp = x, xm = x;
  for (int j = 0; j < n_; ++j) {
    xp[j] = x[j] + h;
    xm[j] = x[j] - h;
    A.col(j) = (ev_.grad_x(xp, p) - ev_.grad_x(xm, p)) / (2 * h);
    xp[j] = xm[j] = x[j];
  }
  return A;
}

Mat HamiltonianModel::hess_xp(const Vec& x, const Vec& p) const {
  if (ev_.hess_xp) return ev_.hess_xp(x, p);
  const double h = fd_step(x, p);
  Mat B(n_, n_);
  Vec pp = p, pm = p;
  for (int j = 0; j < n_; ++j) {
    pp[j] = p[j] + h;
    pm[j] = p[j] - h;
    B.col(j) = (ev_.grad_x(x, pp) - ev_.grad_x(x, pm)) / (2 * h);
    pp[j] = pm[j] = p[j];
  }
  return B;
}

Mat HamiltonianModel::hess_pp(const Vec& x, const Vec& p) const {
  if (ev_.hess_pp) return ev_.hess_pp(x, p);
  const double h = fd_step(x, p);
  Mat Q(n_, n_);
  Vec pp = p, pm = p;
  for (int j = 0; j < n_; ++j) {
    pp[j] = p[j] + h;
    pm[j] = p[j] - h;
    Q.col(j) = (ev_.grad_p(x, pp) - ev_.grad_p(x, pm)) / (2 * h);
    pp[j] = pm[j] = p[j];
  }
  return Q;
}

double HamiltonianModel::lagrangian_along(const Vec& x, const Vec& p) const {
  return p.dot(grad_p(x, p)) - H(x, p) + level_;
}

// ---------------------------------------------------------------------------

bool ValidationReport::passed(const std::string& id) const {
  for (const auto& c : checks) {
    if (c.id == id) return c.pass;
  }
  return false;
}

bool ValidationReport::all_pass() const {
  return failures.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

ValidationReport validate_model(const HamiltonianModel& model,
                                const std::vector<PhasePoint>& samples) {
  if (samples.empty()) throw Error("validate_model: sample set is empty");
  const int n = model.dim();

  ValidationReport rep;
  rep.model = model.name();
  rep.samples = samples.size();
  rep.second_derivatives =
      model.second_derivative_source() == DerivativeSource::Analytic ? "analytic"
                                                                     : "finite-difference";

  HypothesisCheck h1{"H1", true, 0.0,
                     "sampled proxy: H(x, s p/|p|) / s >= K at the largest probe s, "
                     "C(K) = max over probes of K s - H, K in {1, 10}"};
  HypothesisCheck h2{"H2", true, std::numeric_limits<double>::infinity(),
                     "smallest eigenvalue of d2H/dp2 over samples; symmetry residual <= 1e-10"};
  HypothesisCheck h3{"H3", true, -std::numeric_limits<double>::infinity(),
                     "max over sample positions of H(x, 0) - level (must be < 0)"};
  HypothesisCheck grad{"gradients", true, 0.0,
                       "max ratio |supplied - central difference| / max(1e-6, 1e-4 |value|)"};

  double CK1 = -std::numeric_limits<double>::infinity();
  double CK10 = CK1;
  bool h1_growth_ok = true;

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Vec& x = samples[s].x;
    const Vec& p = samples[s].p;
    try {
      if (x.size() != n || p.size() != n) throw Error("dimension mismatch");
      // (H2)
      const Mat Q = model.hess_pp(x, p);
      if (!Q.allFinite()) throw Error("non-finite d2H/dp2");
      const double asym = (Q - Q.transpose()).cwiseAbs().maxCoeff();
      Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(Q));
      const double lmin = es.eigenvalues().minCoeff();
      h2.worst = std::min(h2.worst, lmin);
      if (asym > 1e-10 || !(lmin > 0.0)) h2.pass = false;

      // (H3)
      const double h0 = model.H(x, Vec::Zero(n)) - model.level();
      if (!std::isfinite(h0)) throw Error("non-finite H(x, 0)");
      h3.worst = std::max(h3.worst, h0);
      if (!(h0 < 0.0)) h3.pass = false;

      // (H1) proxy along the sampled direction (or e_1 when p = 0).
      Vec dir = p.norm() > 0 ? Vec(p / p.norm()) : Vec(Vec::Unit(n, 0));
      double ratio_at_max = 0.0;
      for (int k = 0; k <= 10; ++k) {
        const double sc = std::ldexp(1.0, k);
        const double hv = model.H(x, sc * dir);
        if (!std::isfinite(hv)) throw Error("non-finite H on superlinearity probe");
        CK1 = std::max(CK1, sc - hv);
        CK10 = std::max(CK10, 10 * sc - hv);
        ratio_at_max = hv / sc;
      }
      if (ratio_at_max < 10.0) h1_growth_ok = false;

      // Gradients vs central differences of H.
      const Vec gx = model.grad_x(x, p);
      const Vec gp = model.grad_p(x, p);
      const double h = 1e-6 * (1.0 + std::sqrt(x.squaredNorm() + p.squaredNorm()));
      Vec xp = x, xm = x, pp = p, pm = p;
      for (int j = 0; j < n; ++j) {
        xp[j] += h;
        xm[j] -= h;
        pp[j] += h;
        pm[j] -= h;
        const double fdx = (model.H(xp, p) - model.H(xm, p)) / (2 * h);
        const double fdp = (model.H(x, pp) - model.H(x, pm)) / (2 * h);
        const double rx = std::abs(gx[j] - fdx) / std::max(1e-6, 1e-4 * std::abs(gx[j]));
        const double rp = std::abs(gp[j] - fdp) / std::max(1e-6, 1e-4 * std::abs(gp[j]));
        grad.worst = std::max({grad.worst, rx, rp});
        xp[j] = xm[j] = x[j];
        pp[j] = pm[j] = p[j];
      }
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "sample " << s << ": " << e.what();
      rep.failures.push_back(os.str());
    }
  }
  if (grad.worst > 1.0) grad.pass = false;
  h1.pass = h1_growth_ok && std::isfinite(CK1) && std::isfinite(CK10);
  h1.worst = CK10;
  rep.h1_C_K1 = CK1;
  rep.h1_C_K10 = CK10;
  rep.min_eig_Q = h2.worst;
  rep.checks = {h1, h2, h3, grad};
  return rep;
}

// ---------------------------------------------------------------------------

PhasePoint Trajectory::state_at(double t, Interpolation order) const {
  Vec y;
  if (order == Interpolation::Continuous4 || times.size() < 2) {
    y = dense.eval(t);
  } else {
    const bool forward = times.back() >= times.front();
    auto it = forward ? std::upper_bound(times.begin(), times.end(), t)
                      : std::upper_bound(times.begin(), times.end(), t, std::greater<>());
    std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    i = std::min(i, times.size() - 2);
    const double h = times[i + 1] - times[i];
    const double s = (t - times[i]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    Vec y0(2 * n), y1(2 * n);
    y0 << states[i].x, states[i].p;
    y1 << states[i + 1].x, states[i + 1].p;
    y = h00 * y0 + h10 * h * rates[i].head(2 * n) + h01 * y1 + h11 * h * rates[i + 1].head(2 * n);
  }
  return {y.head(n), y.segment(n, n)};
}

double Trajectory::action_at(double t) const { return dense.eval(t)[2 * n]; }

Trajectory flow(const HamiltonianModel& model, const PhasePoint& start, double t_end, double tol,
                const FlowOptions& opt) {
  const int n = model.dim();
  if (start.x.size() != n || start.p.size() != n) throw Error("flow: start has wrong dimension");
  if (!start.x.allFinite() || !start.p.allFinite()) throw Error("flow: start is not finite");
  if (!(tol > 0)) throw Error("flow: tolerance must be positive");

  auto rhs = [&model, n](double, const Vec& y, Vec& dy) {
    const Vec x = y.head(n);
    const Vec p = y.segment(n, n);
    const Vec gp = model.grad_p(x, p);
    dy.resize(2 * n + 1);
    dy.head(n) = gp;
    dy.segment(n, n) = -model.grad_x(x, p);
    dy[2 * n] = p.dot(gp) - model.H(x, p) + model.level();
  };
  ode::Options o;
  o.rtol = o.atol = tol;
  o.h_max = opt.max_step;
  o.overflow = opt.overflow;
  ode::Guard guard;
  if (model.has_region()) {
    guard = [&model, n](double, const Vec& y) { return model.in_region(y.head(n)); };
  }

  Vec y0(2 * n + 1);
  y0 << start.x, start.p, 0.0;
  ode::Result r = ode::integrate(rhs, 0.0, y0, t_end, o, guard);

  Trajectory tr;
  tr.n = n;
  tr.level = model.level();
  tr.times = std::move(r.times);
  tr.dense = std::move(r.dense);
  tr.states.reserve(r.states.size());
  const double h_start = model.H(start.x, start.p);
  for (const Vec& y : r.states) {
    tr.states.push_back({y.head(n), y.segment(n, n)});
    tr.actions.push_back(y[2 * n]);
    Vec dy;
    rhs(0.0, y, dy);
    tr.rates.push_back(std::move(dy));
    tr.max_energy_drift =
        std::max(tr.max_energy_drift, std::abs(model.H(y.head(n), y.segment(n, n)) - h_start));
  }
  tr.last_valid_time = r.t_last;
  if (r.status != ode::Status::Complete) {
    tr.escaped = true;
    tr.escape_reason = "escaped before t_end: " + ode::to_string(r.status);
    if (r.status == ode::Status::GuardStopped && !model.region_description().empty()) {
      tr.escape_reason += " (" + model.region_description() + ")";
    }
  }
  if (tr.dense.empty()) {
    // Rejected at the very first step: keep a constant interpolant at the start.
    ode::DenseSegment seg;
    seg.t0 = 0.0;
    seg.h = 0.0;
    seg.c[0] = y0;
    for (int i = 1; i < 5; ++i) seg.c[i] = Vec::Zero(y0.size());
    tr.dense.push(std::move(seg));
  }
  return tr;
}

void require_complete(const Trajectory& traj, double t_requested) {
  const double span = std::abs(traj.t_end());
  if (traj.escaped || span + 1e-14 < std::abs(t_requested)) {
    throw EscapedError(traj.escape_reason.empty() ? "beyond maximal time" : traj.escape_reason,
                       traj.last_valid_time);
  }
}

CoefficientMatrices coeff_matrices(const HamiltonianModel& model, const PhasePoint& at) {
  CoefficientMatrices cm;
  Mat A = model.hess_xx(at.x, at.p);
  Mat B = model.hess_xp(at.x, at.p);
  Mat Q = model.hess_pp(at.x, at.p);
  if (!A.allFinite() || !B.allFinite() || !Q.allFinite()) {
    throw Error("coeff_matrices: non-finite second derivatives");
  }
  cm.symmetry_residual = std::max((A - A.transpose()).cwiseAbs().maxCoeff(),
                                  (Q - Q.transpose()).cwiseAbs().maxCoeff());
  cm.A = symmetrized(A);
  cm.B = std::move(B);
  cm.Q = symmetrized(Q);
  return cm;
}

LegendreResult legendre(const HamiltonianModel& model, const Vec& x, const Vec& v, int max_iter) {
  const int n = model.dim();
  // Minimize phi(p) = H(x, p) - <p, v>; its gradient is dH/dp - v.
  auto phi = [&](const Vec& p) { return model.H(x, p) - p.dot(v); };
  Vec p = Vec::Zero(n);
  Vec g = model.grad_p(x, p) - v;
  const double tol = 1e-10 * std::max(1.0, v.norm());
  LegendreResult res;
  int it = 0;
  for (; it < max_iter && g.norm() > tol; ++it) {
    const Mat Q = symmetrized(model.hess_pp(x, p));
    Eigen::LLT<Mat> llt(Q);
    Vec d = llt.info() == Eigen::Success ? Vec(-llt.solve(g)) : Vec(-g);
    const double f0 = phi(p);
    double step = 1.0;
    Vec trial = p + d;
    while (step > 1e-12 && !(phi(trial) <= f0 + 1e-4 * step * g.dot(d))) {
      step *= 0.5;
      trial = p + step * d;
    }
    p = trial;
    g = model.grad_p(x, p) - v;
    if (!g.allFinite()) break;
  }
  res.iterations = it;
  res.residual = g.norm();
  if (!(res.residual <= tol)) {
    throw LegendreError("legendre: Newton did not converge", res.residual);
  }
  res.p_star = p;
  res.value = p.dot(v) - model.H(x, p);
  return res;
}

double action(const HamiltonianModel& model, const Trajectory& traj) {
  // 5-point Gauss-Legendre on each accepted step.
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
  const int n = traj.n;
  double total = 0.0;
  for (const auto& seg : traj.dense.segments()) {
    if (seg.h == 0.0) continue;
    double acc = 0.0;
    for (int k = 0; k < 5; ++k) {
      const double t = seg.t0 + 0.5 * seg.h * (1.0 + nodes[k]);
      const Vec y = traj.dense.eval(t);
      acc += weights[k] * model.lagrangian_along(y.head(n), y.segment(n, n));
    }
    total += 0.5 * seg.h * acc;
  }
  return total;
}

// ---------------------------------------------------------------------------

HamiltonianModel quadratic_model(const Mat& P, double offset, double level, std::string name) {
  const int n = static_cast<int>(P.rows());
  const Mat Ps = symmetrized(P);
  HamiltonianModel::Evaluators ev;
  ev.H = [Ps, offset](const Vec&, const Vec& p) { return 0.5 * p.dot(Ps * p) + offset; };
  ev.grad_x = [n](const Vec&, const Vec&) { return Vec(Vec::Zero(n)); };
  ev.grad_p = [Ps](const Vec&, const Vec& p) { return Vec(Ps * p); };
  ev.hess_xx = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  ev.hess_xp = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  ev.hess_pp = [Ps](const Vec&, const Vec&) { return Ps; };
  HamiltonianModel m(std::move(name), n, level, std::move(ev));
  m.set_declared_smoothness("C^infinity");
  return m;
}

HamiltonianModel euclidean_eikonal(int n) {
  return quadratic_model(Mat::Identity(n, n), 0.0, 0.5, "euclidean-eikonal");
}

HamiltonianModel linear_model(const Vec& c, double offset, double level) {
  const int n = static_cast<int>(c.size());
  HamiltonianModel::Evaluators ev;
  ev.H = [c, offset](const Vec&, const Vec& p) { return c.dot(p) + offset; };
  ev.grad_x = [n](const Vec&, const Vec&) { return Vec(Vec::Zero(n)); };
  ev.grad_p = [c](const Vec&, const Vec&) { return c; };
  ev.hess_xx = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  ev.hess_xp = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  ev.hess_pp = [n](const Vec&, const Vec&) { return Mat(Mat::Zero(n, n)); };
  return HamiltonianModel("linear", n, level, std::move(ev));
}

}  // namespace loci
