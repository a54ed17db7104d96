#include "loci/sphere.hpp"

#include <cmath>
#include <numbers>

#include "loci/ode.hpp"

namespace loci::sphere {

namespace {

constexpr double kPi = std::numbers::pi;

Vec grad_f(const Vec& y) { return -2.0 * y / (1.0 + y.squaredNorm()); }

// Christoffel part of the conformal connection: nabla_V W = D_V W + gamma(V, W).
Vec gamma(const Vec& y, const Vec& V, const Vec& W) {
  const Vec gf = grad_f(y);
  return gf.dot(V) * W + gf.dot(W) * V - V.dot(W) * gf;
}

}  // namespace

Vec project(const Vec& X) {
  const Eigen::Index n = X.size() - 1;
  const double lam = X[n];
  if (!(1.0 - lam > 1e-300)) throw Error("project: north pole is not in the chart");
  return X.head(n) / (1.0 - lam);
}

Vec unproject(const Vec& y) {
  const double r2 = y.squaredNorm();
  Vec X(y.size() + 1);
  X.head(y.size()) = 2.0 * y / (1.0 + r2);
  X[y.size()] = (r2 - 1.0) / (1.0 + r2);
  return X;
}

double metric_factor(const Vec& y) {
  const double w = 1.0 + y.squaredNorm();
  return 4.0 / (w * w);
}

HamiltonianModel round_model(int n, double guard_radius) {
  if (n < 2) throw Error("round_model: n must be at least 2");
  HamiltonianModel::Evaluators ev;
  ev.H = [](const Vec& y, const Vec& p) {
    const double w = 1.0 + y.squaredNorm();
    return w * w * p.squaredNorm() / 8.0;
  };
  ev.grad_x = [](const Vec& y, const Vec& p) {
    const double w = 1.0 + y.squaredNorm();
    return Vec(0.5 * w * p.squaredNorm() * y);
  };
  ev.grad_p = [](const Vec& y, const Vec& p) {
    const double w = 1.0 + y.squaredNorm();
    return Vec(0.25 * w * w * p);
  };
  ev.hess_xx = [n](const Vec& y, const Vec& p) {
    const double w = 1.0 + y.squaredNorm();
    return Mat(p.squaredNorm() * (y * y.transpose() + 0.5 * w * Mat::Identity(n, n)));
  };
  ev.hess_xp = [](const Vec& y, const Vec& p) {
    const double w = 1.0 + y.squaredNorm();
    return Mat(w * y * p.transpose());
  };
  ev.hess_pp = [n](const Vec& y, const Vec&) {
    const double w = 1.0 + y.squaredNorm();
    return Mat(0.25 * w * w * Mat::Identity(n, n));
  };
  HamiltonianModel m("sphere-chart", n, 0.5, std::move(ev));
  m.set_declared_smoothness("C^infinity");
  const double r2 = guard_radius * guard_radius;
  m.set_region([r2](const Vec& y) { return y.squaredNorm() <= r2; },
               "chart pole guard |y| <= " + std::to_string(guard_radius));
  return m;
}

GeodesicPoint geodesic_closed_form(const Vec& v, double t) {
  const Eigen::Index n = v.size();
  const double vn = v[n - 1];
  const double D = 1.0 - std::sin(t) * vn;
  if (!(std::abs(D) > 1e-14)) throw Error("geodesic_closed_form: geodesic passes the chart pole");
  GeodesicPoint g;
  g.theta.resize(n);
  g.theta[0] = -std::cos(t) / D;
  for (Eigen::Index i = 1; i < n; ++i) g.theta[i] = std::sin(t) * v[i - 1] / D;
  g.p.resize(n);
  g.p[0] = std::sin(t) - vn;
  for (Eigen::Index i = 1; i < n; ++i) g.p[i] = std::cos(t) * v[i - 1];
  if (!(1.0 - vn > 1e-14)) throw Error("geodesic_closed_form: z^V undefined for v_n = 1");
  g.z = Vec::Zero(n);
  for (Eigen::Index i = 1; i < n; ++i) g.z[i] = v[i - 1] / (1.0 - vn);
  return g;
}

Vec geodesic_velocity(const Vec& v, double t) {
  const Eigen::Index n = v.size();
  const double vn = v[n - 1];
  const double D = 1.0 - std::sin(t) * vn;
  Vec d(n);
  d[0] = (std::sin(t) - vn) / (D * D);
  for (Eigen::Index i = 1; i < n; ++i) d[i] = std::cos(t) * v[i - 1] / (D * D);
  return d;
}

Vec velocity_for_crossing(const Vec& z) {
  const Eigen::Index m = z.size();
  const double w = 1.0 + z.squaredNorm();
  Vec v(m + 1);
  v.head(m) = 2.0 * z / w;
  v[m] = (z.squaredNorm() - 1.0) / w;
  return v;
}

Mat closed_form_U(const Vec& z) {
  const Eigen::Index n = z.size() + 1;
  const double w = 1.0 + z.squaredNorm();
  Mat U = Mat::Zero(n, n);
  U.block(0, 1, 1, n - 1) = z.transpose();
  U.block(1, 0, n - 1, 1) = z;
  return (-4.0 / (w * w)) * U;
}

GapMatrices closed_form_gap(const Vec& z, double s, GapVariant variant) {
  if (!(s > 0.0 && s < kPi)) throw Error("closed_form_gap: s must lie in (0, pi)");
  const Eigen::Index n = z.size() + 1;
  const double w = 1.0 + z.squaredNorm();
  const double c = -4.0 / (w * w);
  const double cot = std::cos(s) / std::sin(s);
  const double transverse = variant == GapVariant::Displayed ? -cot : cot;
  Mat inner = Mat::Zero(n, n);
  inner(0, 0) = 1.0 / s;
  inner.block(0, 1, 1, n - 1) = z.transpose();
  inner.block(1, 0, n - 1, 1) = z;
  for (Eigen::Index i = 1; i < n; ++i) inner(i, i) = transverse;
  GapMatrices g;
  g.K = c * inner;
  g.U = closed_form_U(z);
  g.gap = g.K - g.U;
  return g;
}

Vec parallel_frame_e1(const Vec& z, double s) {
  return geodesic_velocity(velocity_for_crossing(z), s + kPi / 2);
}

Mat parallel_frame(const Vec& z, double s, double tol) {
  if (!(s >= 0.0 && s <= kPi - 0.01)) throw Error("parallel_frame: s must lie in [0, pi - 0.01]");
  const Eigen::Index n = z.size() + 1;
  const Vec v = velocity_for_crossing(z);
  const double vn = v[n - 1];
  Mat E0 = Mat::Identity(n, n);
  E0(0, 0) = 1.0 / (1.0 - vn);
  if (s == 0.0) return E0;

  auto rhs = [&](double t, const Vec& y, Vec& dy) {
    const GeodesicPoint g = geodesic_closed_form(v, t + kPi / 2);
    const Vec vel = geodesic_velocity(v, t + kPi / 2);
    dy.resize(y.size());
    for (Eigen::Index j = 0; j < n; ++j) {
      dy.segment(j * n, n) = -gamma(g.theta, vel, y.segment(j * n, n));
    }
  };
  ode::Options o;
  o.rtol = o.atol = tol;
  const Vec y0 = Eigen::Map<const Vec>(E0.data(), n * n);
  const auto r = ode::integrate(rhs, 0.0, y0, s, o);
  if (r.status != ode::Status::Complete) {
    throw Error("parallel_frame: transport failed: " + ode::to_string(r.status));
  }
  return Eigen::Map<const Mat>(r.y_last.data(), n, n);
}

SourceSpec equator_source(int n, double half_width) {
  std::vector<ParameterAxis> box(n - 1, ParameterAxis{-half_width, half_width, false, 0.0});
  SourceSpec s = hyperplane_source(n, 0, 0.0, box, 1);
  s.label = "equator";
  return s;
}

SourceSpec equator_angle_source(double phi_max) {
  if (!(phi_max > 0.0 && phi_max < kPi)) throw Error("equator_angle_source: phi_max must lie in (0, pi)");
  auto chart = [](const Vec& u) {
    Vec x(2);
    x << 0.0, std::tan(0.5 * u[0]);
    return x;
  };
  auto tangent = [](const Vec& u) {
    const double c = std::cos(0.5 * u[0]);
    Mat t(2, 1);
    t << 0.0, 0.5 / (c * c);
    return t;
  };
  return curve_source(chart, tangent, 2, {{-phi_max, phi_max, false, 0.0}}, 1, "equator-angle");
}

Vec ybar(int n) {
  Vec y = Vec::Zero(n);
  y[0] = -1.0;
  return y;
}

// ---------------------------------------------------------------------------

PerturbationSpec parse_perturbation(const nlohmann::json& j, int n) {
  PerturbationSpec s;
  s.eps = j.value("eps", 0.0);
  s.c4_bound = j.value("c4_bound", 1.0);
  s.region_radius = j.value("region_radius", 3.0);
  for (const auto& b : j.value("bumps", nlohmann::json::array())) {
    Bump bump;
    const auto c = b.at("center").get<std::vector<double>>();
    if (static_cast<int>(c.size()) != n) throw Error("perturbation: bump center has wrong dimension");
    bump.center = Eigen::Map<const Vec>(c.data(), n);
    bump.width = b.value("width", 1.0);
    bump.amplitude = b.value("amplitude", 1.0);
    const std::string kind = b.value("kind", "chart");
    if (kind != "chart" && kind != "ambient") throw Error("perturbation: bump kind must be 'chart' or 'ambient'");
    bump.ambient = kind == "ambient";
    if (!(bump.width > 0.0)) throw Error("perturbation: bump width must be positive");
    s.bumps.push_back(std::move(bump));
  }
  return s;
}

nlohmann::json to_json(const PerturbationSpec& spec) {
  nlohmann::json bumps = nlohmann::json::array();
  for (const auto& b : spec.bumps) {
    bumps.push_back({{"center", std::vector<double>(b.center.data(), b.center.data() + b.center.size())},
                     {"width", b.width},
                     {"amplitude", b.amplitude},
                     {"kind", b.ambient ? "ambient" : "chart"}});
  }
  return {{"eps", spec.eps}, {"bumps", bumps}, {"c4_bound", spec.c4_bound},
          {"region_radius", spec.region_radius}};
}

namespace {

struct BumpTerms {
  double value;
  Vec grad;
  Mat hess;
};

// Chart bumps are Gaussians in y. Ambient bumps are Gaussians in the embedding,
// a exp(-|X(y) - X_c|^2 / (2 w^2)) = a exp((s - 1) / w^2), s = <X(y), X_c>,
// and stay uniformly smooth over the whole sphere.
BumpTerms bump_terms(const Bump& b, const Vec& y, int order) {
  const Eigen::Index n = y.size();
  const double beta = 1.0 / (b.width * b.width);
  BumpTerms t;
  if (!b.ambient) {
    const Vec d = y - b.center;
    t.value = b.amplitude * std::exp(-0.5 * beta * d.squaredNorm());
    if (order >= 1) t.grad = -beta * t.value * d;
    if (order >= 2) t.hess = t.value * (beta * beta * d * d.transpose() - beta * Mat::Identity(n, n));
    return t;
  }
  const Vec Xc = unproject(b.center);
  const Vec cx = Xc.head(n);
  const double cl = Xc[n];
  const double D = 1.0 + y.squaredNorm();
  const double N = 2.0 * y.dot(cx) + (y.squaredNorm() - 1.0) * cl;
  const double sv = N / D;
  t.value = b.amplitude * std::exp(beta * (sv - 1.0));
  if (order == 0) return t;
  const Vec gN = 2.0 * cx + 2.0 * cl * y;
  const Vec gD = 2.0 * y;
  const Vec gs = (gN - sv * gD) / D;
  t.grad = beta * t.value * gs;
  if (order == 1) return t;
  const Mat I = Mat::Identity(n, n);
  const Mat Hs = (2.0 * cl * I - 2.0 * sv * I - gs * gD.transpose() - gD * gs.transpose()) / D;
  t.hess = t.value * (beta * beta * gs * gs.transpose() + beta * Hs);
  return t;
}

}  // namespace

double phi_value(const PerturbationSpec& spec, const Vec& y) {
  double v = 0.0;
  for (const auto& b : spec.bumps) v += bump_terms(b, y, 0).value;
  return v;
}

Vec phi_gradient(const PerturbationSpec& spec, const Vec& y) {
  Vec g = Vec::Zero(y.size());
  for (const auto& b : spec.bumps) g += bump_terms(b, y, 1).grad;
  return g;
}

Mat phi_hessian(const PerturbationSpec& spec, const Vec& y) {
  Mat h = Mat::Zero(y.size(), y.size());
  for (const auto& b : spec.bumps) h += bump_terms(b, y, 2).hess;
  return h;
}

C4Check c4_proxy(const PerturbationSpec& spec, int n, int grid) {
  // Directions: coordinate axes and pairwise diagonals.
  std::vector<Vec> dirs;
  for (int i = 0; i < n; ++i) dirs.push_back(Vec::Unit(n, i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      dirs.push_back((Vec::Unit(n, i) + Vec::Unit(n, j)) / std::sqrt(2.0));
      dirs.push_back((Vec::Unit(n, i) - Vec::Unit(n, j)) / std::sqrt(2.0));
    }
  const double r = spec.region_radius;
  const double step = 2 * r / (grid - 1);
  const double h = 0.02;
  static constexpr double binom[5][5] = {
      {1, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {1, 2, 1, 0, 0}, {1, 3, 3, 1, 0}, {1, 4, 6, 4, 1}};
  double worst = 0.0;
  std::vector<int> idx(n, 0);
  while (true) {
    Vec y(n);
    for (int i = 0; i < n; ++i) y[i] = -r + step * idx[i];
    worst = std::max(worst, std::abs(phi_value(spec, y)));
    for (const auto& d : dirs) {
      for (int k = 1; k <= 4; ++k) {
        // Centred k-th difference.
        double acc = 0.0;
        for (int j = 0; j <= k; ++j) {
          const double sgn = (j % 2 == 0) ? 1.0 : -1.0;
          acc += sgn * binom[k][j] * phi_value(spec, y + (0.5 * k - j) * h * d);
        }
        worst = std::max(worst, std::abs(acc) / std::pow(h, k));
      }
    }
    int a = 0;
    while (a < n && ++idx[a] == grid) idx[a++] = 0;
    if (a == n) break;
  }
  C4Check c;
  c.value = spec.eps * worst;
  c.pass = c.value <= spec.c4_bound;
  return c;
}

HamiltonianModel perturbed_model(const PerturbationSpec& spec, int n, double guard_radius) {
  const HamiltonianModel base = round_model(n, guard_radius);
  const double eps = spec.eps;
  HamiltonianModel::Evaluators ev;
  ev.H = [base, spec, eps](const Vec& y, const Vec& p) {
    return std::exp(-2 * eps * phi_value(spec, y)) * base.H(y, p);
  };
  ev.grad_x = [base, spec, eps](const Vec& y, const Vec& p) {
    const double E = std::exp(-2 * eps * phi_value(spec, y));
    return Vec(E * (base.grad_x(y, p) - 2 * eps * base.H(y, p) * phi_gradient(spec, y)));
  };
  ev.grad_p = [base, spec, eps](const Vec& y, const Vec& p) {
    return Vec(std::exp(-2 * eps * phi_value(spec, y)) * base.grad_p(y, p));
  };
  ev.hess_xx = [base, spec, eps](const Vec& y, const Vec& p) {
    const double E = std::exp(-2 * eps * phi_value(spec, y));
    const double H0 = base.H(y, p);
    const Vec g = phi_gradient(spec, y);
    const Vec hx = base.grad_x(y, p);
    const Mat cross = g * hx.transpose() + hx * g.transpose();
    return Mat(E * (base.hess_xx(y, p) - 2 * eps * cross + 4 * eps * eps * H0 * g * g.transpose() -
                    2 * eps * H0 * phi_hessian(spec, y)));
  };
  ev.hess_xp = [base, spec, eps](const Vec& y, const Vec& p) {
    const double E = std::exp(-2 * eps * phi_value(spec, y));
    return Mat(E * (base.hess_xp(y, p) -
                    2 * eps * phi_gradient(spec, y) * base.grad_p(y, p).transpose()));
  };
  ev.hess_pp = [base, spec, eps](const Vec& y, const Vec& p) {
    return Mat(std::exp(-2 * eps * phi_value(spec, y)) * base.hess_pp(y, p));
  };
  HamiltonianModel m("sphere-chart-perturbed", n, 0.5, std::move(ev));
  m.set_declared_smoothness("C^infinity (conformal Gaussian bumps)");
  const double r2 = guard_radius * guard_radius;
  m.set_region([r2](const Vec& y) { return y.squaredNorm() <= r2; },
               "chart pole guard |y| <= " + std::to_string(guard_radius));
  return m;
}

}  // namespace loci::sphere
