#include "loci/loci.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

namespace loci {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int sgn(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

double bisect_sign(const std::function<double(double)>& f, double a, double b, double tol) {
  int sa = sgn(f(a));
  for (int it = 0; it < 200 && b - a > tol; ++it) {
    const double m = 0.5 * (a + b);
    const int sm = sgn(f(m));
    if (sm == 0) return m;
    if (sm == sa) {
      a = m;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

std::pair<double, double> golden_min(const std::function<double(double)>& f, double a, double b,
                                     double tol) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 300 && b - a > tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  const double t = 0.5 * (a + b);
  return {t, f(t)};
}

double angle_between(const Vec& a, const Vec& b) {
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

// ---------------------------------------------------------------------------

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("LOCI_LAB_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(resolve_workers(workers)), count);
  if (w <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t k = 0; k < w; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

RootScan scan_first_zero(const std::function<double(double)>& size_fn,
                         const std::function<double(double)>& sign_fn, double t0, double t1,
                         double step, double refine_tol, double singular_tol) {
  RootScan out;
  if (!(t1 > t0)) return out;
  std::vector<double> ts;
  for (double t = t0; t < t1; t += step) ts.push_back(t);
  ts.push_back(t1);
  std::vector<double> s(ts.size()), g(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    s[k] = size_fn(ts[k]);
    g[k] = sign_fn(ts[k]);
  }
  std::optional<double> det_root, min_root;
  double min_value = 0.0;
  for (std::size_t k = 1; k < ts.size(); ++k) {
    if (det_root && min_root) break;
    if (!det_root && sgn(g[k - 1]) * sgn(g[k]) < 0) {
      det_root = bisect_sign(sign_fn, ts[k - 1], ts[k], 0.1 * refine_tol);
    }
    if (!min_root && k + 1 < ts.size() && s[k] <= s[k - 1] && s[k] <= s[k + 1] &&
        (s[k] < s[k - 1] || s[k] < s[k + 1]) && s[k] < 0.25) {
      auto [tm, vm] = golden_min(size_fn, ts[k - 1], ts[k + 1], refine_tol);
      if (vm < singular_tol) {
        min_root = tm;
        min_value = vm;
      }
    }
    // Anything found strictly before the current window cannot be beaten later.
    if ((det_root && *det_root < ts[k - 1]) || (min_root && *min_root < ts[k - 1])) break;
  }
  if (det_root && (!min_root || *det_root <= *min_root + refine_tol)) {
    out.root = det_root;
    out.method = "det-sign";
    out.value_at_root = size_fn(*det_root);
  } else if (min_root) {
    out.root = min_root;
    out.method = "s_min-minimum";
    out.value_at_root = min_value;
  }
  return out;
}

ConjugateResult conjugate_time(const HamiltonianModel& model, const SourceSample& sample,
                               const FrameTrajectory& ft, const ConjugateOptions& opt) {
  ConjugateResult res;
  const int n = model.dim();
  res.escaped = ft.truncated;
  const double t_end = ft.t_end();
  res.searched_to = t_end;
  const double t0 = std::min(0.25 * opt.grid_step, 0.5 * t_end);

  auto size_fn = [&](double t) { return frame_s_min(ft.columns_at(t)); };
  auto sign_fn = [&](double t) { return ft.columns_at(t).topRows(n).determinant(); };
  const RootScan primary =
      scan_first_zero(size_fn, sign_fn, t0, t_end, opt.grid_step, opt.refine_tol, opt.singular_tol);
  res.t_conj = primary.root;
  res.method = primary.method;
  res.s_min_at_root = primary.value_at_root;

  if (opt.dual_detector && t_end > 0) {
    LinearizedOptions lo = opt.linear;
    lo.reorthonormalize = false;
    const auto R = propagate(model, {sample.x, sample.p0}, Mat::Identity(2 * n, 2 * n), t_end, lo);
    const Mat Uo = orthonormal_columns(sample.frame.columns);
    Mat vert = Mat::Zero(2 * n, n);
    vert.bottomRows(n).setIdentity();
    auto J_at = [&](double t) -> Mat {
      return R.columns_at(t).partialPivLu().solve(vert);
    };
    auto pair_matrix = [&](double t) {
      Mat m(2 * n, 2 * n);
      m << orthonormal_columns(J_at(t)), Uo;
      return m;
    };
    const double t_dual_end = R.t_end();
    const RootScan dual = scan_first_zero(
        [&](double t) { return smallest_singular_value(pair_matrix(t)); },
        [&](double t) { return pair_matrix(t).determinant(); }, t0, t_dual_end, opt.grid_step,
        opt.refine_tol, opt.singular_tol);
    res.t_dual = dual.root;
    if (res.t_conj && res.t_dual) {
      res.detector_gap = std::abs(*res.t_conj - *res.t_dual);
      const auto ku = extract_K(sample.frame, opt.linear.svd_tol);
      const auto kj = extract_K(LagrangianFrame(J_at(*res.t_dual)), opt.linear.svd_tol);
      if (!ku.degenerate && !kj.degenerate) {
        Eigen::SelfAdjointEigenSolver<Mat> es(kj.K - ku.K);
        res.gap_eig_at_root = es.eigenvalues().cwiseAbs().minCoeff();
      }
    }
  }
  return res;
}

ConjugateResult conjugate_time(const HamiltonianModel& model, const SourceSample& sample,
                               double horizon, const ConjugateOptions& opt) {
  if (!sample.ok) {
    ConjugateResult r;
    r.error = sample.error;
    return r;
  }
  const auto ft = propagate(model, {sample.x, sample.p0}, sample.frame.columns, horizon, opt.linear);
  if (ft.truncated && ft.t_end() <= 0) {
    throw Error("conjugate_time: frame propagation failed: " + ft.diagnostic);
  }
  return conjugate_time(model, sample, ft, opt);
}

// ---------------------------------------------------------------------------

ValueField::ValueField(int n, FieldOptions opt) : n_(n), opt_(opt) {
  if (!(opt_.capture > 0)) throw Error("value field: capture radius must be positive");
}

long long ValueField::cell_key(const Vec& y) const {
  unsigned long long h = 1469598103934665603ULL;
  for (int i = 0; i < n_; ++i) {
    const long long c = static_cast<long long>(std::floor(y[i] / opt_.capture));
    h ^= static_cast<unsigned long long>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<long long>(h);
}

void ValueField::add(FieldSample s) {
  lip_ = std::max(lip_, s.p.norm());
  grid_[cell_key(s.x)].push_back(samples_.size());
  samples_.push_back(std::move(s));
}

void ValueField::finalize() {
  for (auto& [k, v] : grid_) std::sort(v.begin(), v.end());
}

std::vector<std::size_t> ValueField::near(const Vec& y, double r) const {
  std::vector<std::size_t> out;
  const int reach = static_cast<int>(std::ceil(r / opt_.capture));
  std::vector<int> off(n_, -reach);
  Vec c(n_);
  while (true) {
    for (int i = 0; i < n_; ++i) c[i] = y[i] + off[i] * opt_.capture;
    auto it = grid_.find(cell_key(c));
    if (it != grid_.end()) {
      for (std::size_t j : it->second) {
        if ((samples_[j].x - y).norm() <= r) out.push_back(j);
      }
    }
    int a = 0;
    while (a < n_ && ++off[a] > reach) off[a++] = -reach;
    if (a == n_) break;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<BranchBound> ValueField::bounds(const Vec& y, std::optional<std::size_t> exclude_ray) const {
  const auto idx = near(y, opt_.capture);
  std::map<std::size_t, double> lam;
  for (std::size_t j : idx) {
    const auto& s = samples_[j];
    if (exclude_ray && s.ray == *exclude_ray) continue;
    auto [it, fresh] = lam.try_emplace(s.ray, s.lambda_plus);
    if (!fresh) it->second = std::max(it->second, s.lambda_plus);
  }
  std::vector<BranchBound> out;
  for (std::size_t j : idx) {
    const auto& s = samples_[j];
    if (exclude_ray && s.ray == *exclude_ray) continue;
    const double l = lam[s.ray];
    if (!std::isfinite(l)) continue;
    const Vec d = y - s.x;
    out.push_back({j, s.action + s.p.dot(d), 0.5 * d.squaredNorm() * l * opt_.band_safety + opt_.tol});
  }
  return out;
}

FieldQuery ValueField::query(const Vec& y, std::optional<std::size_t> exclude_ray) const {
  FieldQuery q;
  for (std::size_t j : near(y, opt_.capture)) {
    const auto& s = samples_[j];
    if (exclude_ray && s.ray == *exclude_ray) continue;
    if (!q.covered || s.action < q.plain) q.plain = s.action;
    q.covered = true;
  }
  q.correction = lip_ * opt_.capture;
  const auto bs = bounds(y, exclude_ray);
  if (bs.empty()) {
    q.linear = q.plain;
    q.band = q.correction;
    return q;
  }
  double best_ub = kInf;
  for (const auto& b : bs) {
    if (b.linear + b.band < best_ub) {
      best_ub = b.linear + b.band;
      q.linear = b.linear;
      q.band = b.band;
      q.argmin_sample = b.sample;
      q.argmin_ray = samples_[b.sample].ray;
    }
  }
  double other = kInf;
  for (const auto& b : bs) {
    if (samples_[b.sample].ray != q.argmin_ray) other = std::min(other, b.linear + b.band);
  }
  if (std::isfinite(other)) q.second_ray_gap = other - best_ub;
  return q;
}

Ray propagate_ray(const HamiltonianModel& model, const SourceSample& sample, double horizon,
                  const LinearizedOptions& opt) {
  Ray r;
  r.sample = sample;
  if (!sample.ok) {
    r.error = sample.error;
    return r;
  }
  try {
    r.frames = propagate(model, {sample.x, sample.p0}, sample.frame.columns, horizon, opt);
    r.ok = !r.frames.times.empty();
    if (r.frames.truncated) r.error = r.frames.diagnostic;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

ValueField build_value_field(const HamiltonianModel& model, const std::vector<Ray>& rays,
                             const std::vector<std::pair<std::size_t, std::size_t>>& neighbours,
                             double horizon, const FieldOptions& opt) {
  const int n = model.dim();
  ValueField field(n, opt);
  const double h = opt.capture;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const Ray& ray = rays[i];
    if (!ray.ok) continue;
    const double t_end = ray.frames.t_end();
    double t = 0.0;
    while (true) {
      const Vec y = ray.frames.dense.eval(t);
      const Vec x = y.head(n), p = y.segment(n, n);
      const Vec v = model.grad_p(x, p);
      const double speed = std::max(v.norm(), 1e-12);
      if (field.inside(x)) {
        FieldSample s;
        s.x = x;
        s.p = p;
        s.velocity = v;
        s.action = y[2 * n];
        s.time = t;
        s.ray = i;
        const Mat F = Eigen::Map<const Mat>(y.data() + 2 * n + 1, 2 * n, n);
        const auto kr = extract_K(LagrangianFrame(F), ray.frames.options.svd_tol);
        if (kr.degenerate) {
          s.lambda_plus = kInf;
        } else {
          Eigen::SelfAdjointEigenSolver<Mat> es(kr.K, Eigen::EigenvaluesOnly);
          s.lambda_plus = std::max(0.0, es.eigenvalues().maxCoeff());
        }
        field.add(std::move(s));
      }
      if (t >= t_end) break;
      const double dt = field.inside(x) ? std::clamp(0.5 * h / speed, 1e-7, 0.05) : 0.01;
      t = std::min(t + dt, t_end);
    }
  }
  field.finalize();

  for (const auto& [a, b] : neighbours) {
    if (a >= rays.size() || b >= rays.size() || !rays[a].ok || !rays[b].ok) continue;
    const double T = std::min({horizon, rays[a].frames.t_end(), rays[b].frames.t_end()});
    const Vec xa = rays[a].frames.state_at(T).x, xb = rays[b].frames.state_at(T).x;
    if (!field.inside(xa) || !field.inside(xb)) continue;
    const double gap = (xa - xb).norm();
    if (gap > field.widest_gap) {
      field.widest_gap = gap;
      field.widest_gap_between = std::to_string(a) + "-" + std::to_string(b);
    }
  }
  if (opt.check_overlap && field.widest_gap >= h) {
    std::ostringstream os;
    os << "insufficient density: widest gap " << field.widest_gap << " between rays "
       << field.widest_gap_between << " exceeds capture radius " << h;
    throw Error(os.str());
  }
  return field;
}

// ---------------------------------------------------------------------------

CutResult cut_time(const HamiltonianModel& model, const Ray& ray, const ValueField& field,
                   double horizon, std::optional<double> t_conj, double time_tol) {
  CutResult res;
  if (!ray.ok) {
    res.undetermined = true;
    res.note = "ray unavailable: " + ray.error;
    return res;
  }
  const int n = model.dim();
  const double t_end = std::min(horizon, ray.frames.t_end());
  const double h = field.options().capture;

  struct Probe {
    bool covered;
    bool fires;
    double excess;
    double band;
  };
  auto probe = [&](double t) {
    const Vec y = ray.frames.dense.eval(t);
    const Vec x = y.head(n);
    Probe p{false, false, 0.0, 0.0};
    if (!field.inside(x)) return p;
    const FieldQuery q = field.query(x);
    if (!q.covered) return p;
    p.covered = true;
    p.excess = y[2 * n] - q.linear;
    p.band = q.band;
    p.fires = p.excess > q.band;
    return p;
  };

  double t = 0.0, t_prev = 0.0;
  double last_covered = 0.0;
  bool ended_covered = true;
  std::optional<double> fire_at;
  while (true) {
    const Probe pr = probe(t);
    ended_covered = pr.covered;
    if (pr.covered) last_covered = t;
    if (pr.fires && t > 0) {
      fire_at = t;
      break;
    }
    if (t >= t_end) break;
    const PhasePoint s = ray.frames.state_at(t);
    const double speed = std::max(model.grad_p(s.x, s.p).norm(), 1e-12);
    t_prev = t;
    t = std::min(t + std::clamp(0.5 * h / speed, 1e-7, 0.05), t_end);
  }

  if (fire_at) {
    double a = t_prev, b = *fire_at;
    for (int it = 0; it < 60 && b - a > 1e-10; ++it) {
      const double m = 0.5 * (a + b);
      (probe(m).fires ? b : a) = m;
    }
    res.t_raw = b;
    const Probe at = probe(b);
    res.excess_at_cut = at.excess;
    res.band_at_cut = at.band;
  } else if (!ended_covered || ray.frames.t_end() < horizon) {
    res.undetermined = true;
    res.undetermined_beyond = last_covered;
    std::ostringstream os;
    os << "undetermined beyond t* = " << last_covered;
    res.note = os.str();
  }

  if (t_conj) {
    if (!res.t_raw) {
      if (!res.undetermined && *t_conj < t_end) {
        // Still minimal (within the band) past the conjugate time.
        res.t_cut = *t_conj;
        res.clamped = true;
        res.note = "no competitor found before the horizon; clamped to t_conj";
      }
    } else if (*res.t_raw > *t_conj) {
      res.t_cut = *t_conj;
      res.clamped = true;
      // Resolution of the action comparison near a conjugate point: the
      // neighbouring branch separates at least cubically in the overshoot.
      const double margin = time_tol + std::cbrt(res.band_at_cut) + res.band_at_cut;
      res.order_violation = *res.t_raw > *t_conj + margin;
    } else {
      res.t_cut = res.t_raw;
    }
  } else {
    res.t_cut = res.t_raw;
  }
  return res;
}

std::string to_string(CutClass c) {
  switch (c) {
    case CutClass::SigmaPoint: return "SigmaPoint";
    case CutClass::GammaPoint: return "GammaPoint";
    case CutClass::Undetermined: return "Undetermined";
    case CutClass::None: return "none";
  }
  return "none";
}

Classification classify_cut_point(const Ray& ray, const CutResult& cut, std::optional<double> t_conj,
                                  const ValueField& field, double angle_tol, double time_tol) {
  Classification c;
  if (!cut.t_cut) {
    c.cls = cut.undetermined ? CutClass::Undetermined : CutClass::None;
    c.note = cut.note;
    return c;
  }
  const int n = ray.frames.n;
  const double t = *cut.t_cut;
  const Vec y = ray.frames.dense.eval(t);
  const Vec x = y.head(n);
  const double action = y[2 * n];
  const Vec own_v = [&] {
    // Arrival direction in the chart by a forward difference of the dense output.
    const PhasePoint s = ray.frames.state_at(t);
    const Vec yy = ray.frames.dense.eval(std::min(t + 1e-6, ray.frames.t_end()));
    const Vec d = yy.head(n) - s.x;
    return d.norm() > 0 ? Vec(d) : Vec(Vec::Unit(n, 0));
  }();

  const auto& opt = field.options();
  double best_angle = -1.0;
  for (const auto& b : field.bounds(x, ray.sample.id)) {
    const auto& s = field.samples()[b.sample];
    const double slack = std::max(b.band, cut.band_at_cut);
    if (std::abs(b.linear - action) > slack + opt.tol) continue;
    const double ang = angle_between(own_v, s.velocity);
    if (ang > best_angle) {
      best_angle = ang;
      c.competitor = s.ray;
    }
  }
  c.competitor_angle = std::max(best_angle, 0.0);
  c.gamma_flag = t_conj && std::abs(*cut.t_cut - *t_conj) <= time_tol;
  if (best_angle > angle_tol) {
    c.cls = CutClass::SigmaPoint;
  } else if (c.gamma_flag) {
    c.cls = CutClass::GammaPoint;
    c.competitor.reset();
  } else {
    c.cls = CutClass::Undetermined;
    c.note = "no competitor beyond angle_tol and t_cut differs from t_conj";
  }
  return c;
}

// ---------------------------------------------------------------------------

std::size_t LociTable::violations() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const auto& r) { return r.order_violation; }));
}

std::vector<std::pair<std::size_t, std::size_t>> mesh_neighbours(const SourceSpec& source,
                                                                 const std::vector<int>& resolution) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t dims = resolution.size();
  std::vector<std::size_t> stride(dims, 1);
  for (std::size_t a = dims; a-- > 1;) stride[a - 1] = stride[a] * static_cast<std::size_t>(resolution[a]);
  std::size_t total = 1;
  for (int r : resolution) total *= static_cast<std::size_t>(r);
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t a = 0; a < dims; ++a) {
      const std::size_t k = (i / stride[a]) % static_cast<std::size_t>(resolution[a]);
      if (k + 1 < static_cast<std::size_t>(resolution[a])) {
        out.push_back({i, i + stride[a]});
      } else if (source.box[a].periodic) {
        out.push_back({i, i - k * stride[a]});
      }
    }
  }
  return out;
}

LociTable scan_loci(const HamiltonianModel& model, const SourceSpec& source,
                    const std::vector<int>& resolution, const ScanOptions& opt) {
  LociTable table;
  table.time_tol = opt.time_tol > 0 ? opt.time_tol : 10 * opt.conj.refine_tol;
  const auto params = mesh_parameters(source, resolution);
  const std::size_t N = params.size();

  std::vector<Ray> rays(N);
  std::vector<ConjugateResult> conj(N);
  parallel_for(N, opt.workers, [&](std::size_t i) {
    const SourceSample s = make_sample(model, source, params[i], i);
    rays[i] = propagate_ray(model, s, opt.horizon, opt.conj.linear);
    if (opt.conjugate && rays[i].ok) {
      try {
        conj[i] = conjugate_time(model, s, rays[i].frames, opt.conj);
      } catch (const std::exception& e) {
        conj[i].error = e.what();
      }
    }
  });

  table.records.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    auto& r = table.records[i];
    r.id = i;
    r.parameter = params[i];
    if (!rays[i].ok) {
      r.status = "failed: " + rays[i].error;
      continue;
    }
    if (!rays[i].error.empty()) r.status = "truncated: " + rays[i].error;
    r.t_conj = conj[i].t_conj;
    r.conj_method = conj[i].method;
    r.s_min_at_root = conj[i].s_min_at_root;
    r.t_dual = conj[i].t_dual;
    r.detector_gap = conj[i].detector_gap;
    if (!conj[i].error.empty()) r.status = "conjugate failed: " + conj[i].error;
  }
  if (!opt.cut) return table;

  const auto field =
      build_value_field(model, rays, mesh_neighbours(source, resolution), opt.horizon, opt.field);
  table.widest_gap = field.widest_gap;
  table.widest_gap_between = field.widest_gap_between;
  table.lipschitz_u = field.lipschitz();
  table.field_samples = field.samples().size();

  parallel_for(N, opt.workers, [&](std::size_t i) {
    auto& r = table.records[i];
    if (!rays[i].ok) return;
    const CutResult cut = cut_time(model, rays[i], field, opt.horizon, r.t_conj, table.time_tol);
    const Classification cls =
        classify_cut_point(rays[i], cut, r.t_conj, field, opt.angle_tol, table.time_tol);
    r.t_cut = cut.t_cut;
    r.t_cut_raw = cut.t_raw;
    r.clamped = cut.clamped;
    r.order_violation = cut.order_violation;
    r.excess_at_cut = cut.excess_at_cut;
    r.band_at_cut = cut.band_at_cut;
    r.cls = cls.cls;
    r.gamma_flag = cls.gamma_flag;
    r.competitor = cls.competitor;
    r.competitor_angle = cls.competitor_angle;
    if (cut.undetermined && r.status == "ok") r.status = cut.note;
  });
  return table;
}

}  // namespace loci
