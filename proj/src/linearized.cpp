#include "loci/linearized.hpp"

#include <cmath>
#include <ostream>

namespace loci {

namespace {

Mat unpack(const Vec& y, int n, int k) {
  return Eigen::Map<const Mat>(y.data() + 2 * n + 1, 2 * n, k);
}

ode::Rhs augmented_rhs(const HamiltonianModel& model, int n, int k) {
  return [&model, n, k](double, const Vec& y, Vec& dy) {
    const Vec x = y.head(n);
    const Vec p = y.segment(n, n);
    const Vec gp = model.grad_p(x, p);
    dy.resize(y.size());
    dy.head(n) = gp;
    dy.segment(n, n) = -model.grad_x(x, p);
    dy[2 * n] = p.dot(gp) - model.H(x, p) + model.level();
    const Mat A = model.hess_xx(x, p);
    const Mat B = model.hess_xp(x, p);
    const Mat Q = model.hess_pp(x, p);
    const auto F = Eigen::Map<const Mat>(y.data() + 2 * n + 1, 2 * n, k);
    auto dF = Eigen::Map<Mat>(dy.data() + 2 * n + 1, 2 * n, k);
    dF.topRows(n) = B.transpose() * F.topRows(n) + Q * F.bottomRows(n);
    dF.bottomRows(n) = -A * F.topRows(n) - B * F.bottomRows(n);
  };
}

Mat sigma_gram(const Mat& c) {
  const Eigen::Index n = c.rows() / 2;
  return c.topRows(n).transpose() * c.bottomRows(n) - c.bottomRows(n).transpose() * c.topRows(n);
}

}  // namespace

PhasePoint FrameTrajectory::state_at(double t) const {
  const Vec y = dense.eval(t);
  return {y.head(n), y.segment(n, n)};
}

Mat FrameTrajectory::columns_at(double t) const { return unpack(dense.eval(t), n, k); }

double frame_s_min(const Mat& columns) {
  const Eigen::Index n = columns.rows() / 2;
  const Mat q = orthonormal_columns(columns);
  return smallest_singular_value(q.topRows(n));
}

FrameTrajectory propagate(const HamiltonianModel& model, const PhasePoint& start, const Mat& frame0,
                          double t_end, const LinearizedOptions& opt) {
  const int n = model.dim();
  const int k = static_cast<int>(frame0.cols());
  if (frame0.rows() != 2 * n) throw Error("propagate: frame has wrong row count");
  FrameTrajectory ft;
  ft.n = n;
  ft.k = k;
  ft.options = opt;

  const auto rhs = augmented_rhs(model, n, k);
  ode::Options o;
  o.rtol = o.atol = opt.tol;
  o.h_max = opt.max_step;
  ode::Guard guard;
  if (model.has_region()) {
    guard = [&model, n](double, const Vec& y) { return model.in_region(y.head(n)); };
  }
  const bool lagrangian_shaped = frame0.rows() == 2 * frame0.cols();
  const Mat gram0 = sigma_gram(frame0);

  Vec y(2 * n + 1 + 2 * n * k);
  y << start.x, start.p, 0.0, Eigen::Map<const Vec>(frame0.data(), frame0.size());
  double t = 0.0;
  const double dir = t_end >= 0 ? 1.0 : -1.0;
  const double seg_len = opt.reorthonormalize ? opt.checkpoint : std::abs(t_end);
  bool first = true;

  auto record = [&](double tt, const Vec& yy) {
    const Mat F = unpack(yy, n, k);
    ft.times.push_back(tt);
    ft.frames.push_back(F);
    if (lagrangian_shaped) {
      ft.s_min.push_back(frame_s_min(F));
      ft.max_isotropy = std::max(ft.max_isotropy, isotropy_residual(F));
    }
  };

  while (true) {
    const double t_next =
        std::abs(t_end - t) <= seg_len * (1 + 1e-12) ? t_end : t + dir * seg_len;
    ode::Result r;
    try {
      r = ode::integrate(rhs, t, y, t_next, o, guard);
    } catch (const std::exception& e) {
      ft.truncated = true;
      ft.diagnostic = std::string("coefficient evaluation failed: ") + e.what();
      break;
    }
    for (std::size_t i = first ? 0 : 1; i < r.times.size(); ++i) record(r.times[i], r.states[i]);
    for (const auto& seg : r.dense.segments()) ft.dense.push(seg);
    first = false;
    if (r.status != ode::Status::Complete) {
      ft.truncated = true;
      ft.diagnostic = "linearized flow stopped: " + ode::to_string(r.status);
      break;
    }
    t = t_next;
    y = r.y_last;
    if (t == t_end) break;
    if (opt.reorthonormalize) {
      const Mat q = orthonormal_columns(unpack(y, n, k));
      y.tail(2 * n * k) = Eigen::Map<const Vec>(q.data(), q.size());
    }
  }
  if (ft.times.empty()) record(0.0, y);
  if (ft.dense.empty()) {
    ode::DenseSegment seg;
    seg.t0 = 0.0;
    seg.h = 0.0;
    seg.c[0] = y;
    for (int i = 1; i < 5; ++i) seg.c[i] = Vec::Zero(y.size());
    ft.dense.push(std::move(seg));
  }
  ft.last_valid_time = ft.times.back();
  if (!opt.reorthonormalize) {
    for (const auto& F : ft.frames) {
      ft.isotropy_drift = std::max(ft.isotropy_drift, (sigma_gram(F) - gram0).cwiseAbs().maxCoeff());
    }
  }
  return ft;
}

FrameTrajectory linearized_flow(const HamiltonianModel& model, const Trajectory& traj,
                                const LagrangianFrame& frame0, const LinearizedOptions& opt) {
  if (traj.states.empty()) throw Error("linearized_flow: empty trajectory");
  if (frame0.isotropy > 1e-8) throw Error("linearized_flow: initial frame is not isotropic");
  return propagate(model, traj.states.front(), frame0.columns, traj.t_end(), opt);
}

Mat fundamental_matrix(const HamiltonianModel& model, const PhasePoint& start, double t,
                       const LinearizedOptions& opt) {
  const int n = model.dim();
  LinearizedOptions o = opt;
  o.reorthonormalize = false;
  const auto ft = propagate(model, start, Mat::Identity(2 * n, 2 * n), t, o);
  if (ft.truncated) {
    throw EscapedError("fundamental_matrix: " + ft.diagnostic, ft.last_valid_time);
  }
  return ft.frames.back();
}

KResult extract_K(const LagrangianFrame& frame, double svd_tol) {
  KResult r;
  const Mat Hb = frame.hblock();
  const Mat Vb = frame.vblock();
  Eigen::JacobiSVD<Mat> full(frame.columns);
  const double norm = full.singularValues().maxCoeff();
  r.s_min = smallest_singular_value(Hb);
  r.threshold = svd_tol * norm;
  if (!(r.s_min > r.threshold)) {
    r.degenerate = true;
    return r;
  }
  // Solve K Hb = Vb, i.e. Hb^T K^T = Vb^T.
  const Mat Kraw = Hb.transpose().fullPivLu().solve(Vb.transpose()).transpose();
  r.asymmetry = (Kraw - Kraw.transpose()).cwiseAbs().maxCoeff();
  r.K = symmetrized(Kraw);
  return r;
}

LagrangianFrame vertical_arrival_frame(const HamiltonianModel& model, const PhasePoint& start,
                                       double t, const LinearizedOptions& opt) {
  const int n = model.dim();
  if (t == 0.0) return vertical_frame(n);
  auto tr = flow(model, start, t, opt.tol, {opt.max_step, 1e10});
  require_complete(tr, t);
  LinearizedOptions o = opt;
  o.reorthonormalize = false;
  const auto back = propagate(model, tr.states.back(), vertical_frame(n).columns, -t, o);
  if (back.truncated) throw Error("vertical_arrival_frame: " + back.diagnostic);
  return LagrangianFrame(back.frames.back());
}

void write_trace_csv(std::ostream& os, const FrameTrajectory& ft, const std::vector<double>& grid) {
  const int n = ft.n;
  os << "t,s_min,det_sign";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) os << ",K" << i + 1 << j + 1;
  os << '\n';
  const auto old = os.precision(17);
  for (double t : grid) {
    const Mat F = ft.columns_at(t);
    const double det = F.topRows(n).determinant();
    os << t << ',' << frame_s_min(F) << ',' << (det > 0 ? 1 : (det < 0 ? -1 : 0));
    const auto kr = extract_K(LagrangianFrame(F), ft.options.svd_tol);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        os << ',';
        if (!kr.degenerate) os << kr.K(i, j);
      }
    os << '\n';
  }
  os.precision(old);
}

}  // namespace loci
