#include "loci/source.hpp"

#include <cmath>
#include <numbers>

namespace loci {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double level_gap(const HamiltonianModel& m, const Vec& x, const Vec& d, double lambda) {
  return m.H(x, lambda * d) - m.level();
}

// Richardson-extrapolated central difference of f along axis i of u.
template <class F>
auto richardson(const F& f, const Vec& u, int i, double h) {
  auto central = [&](double s) {
    Vec up = u, um = u;
    up[i] += s;
    um[i] -= s;
    return ((f(up) - f(um)) / (2 * s)).eval();
  };
  return ((4.0 * central(h / 2) - central(h)) / 3.0).eval();
}

}  // namespace

SourceSpec hyperplane_source(int n, int axis, double offset, std::vector<ParameterAxis> box,
                             int orientation) {
  if (axis < 0 || axis >= n) throw Error("hyperplane_source: axis out of range");
  if (static_cast<int>(box.size()) != n - 1) throw Error("hyperplane_source: box needs n-1 axes");
  SourceSpec s;
  s.kind = SourceKind::Hypersurface;
  s.n = n;
  s.label = "hyperplane";
  s.orientation = orientation;
  s.box = std::move(box);
  s.chart = [n, axis, offset](const Vec& u) {
    Vec x(n);
    for (int i = 0, k = 0; i < n; ++i) x[i] = i == axis ? offset : u[k++];
    return x;
  };
  s.tangent = [n, axis](const Vec&) {
    Mat t = Mat::Zero(n, n - 1);
    for (int i = 0, k = 0; i < n; ++i)
      if (i != axis) t(i, k++) = 1.0;
    return t;
  };
  return s;
}

SourceSpec circle_source(const Vec& center, double radius, ParameterAxis box, int orientation) {
  if (center.size() != 2) throw Error("circle_source: planar only");
  SourceSpec s;
  s.kind = SourceKind::Hypersurface;
  s.n = 2;
  s.label = "circle";
  s.orientation = orientation;
  s.box = {box};
  s.chart = [center, radius](const Vec& u) {
    Vec x(2);
    x << center[0] + radius * std::cos(u[0]), center[1] + radius * std::sin(u[0]);
    return x;
  };
  s.tangent = [radius](const Vec& u) {
    Mat t(2, 1);
    t << -radius * std::sin(u[0]), radius * std::cos(u[0]);
    return t;
  };
  return s;
}

SourceSpec curve_source(std::function<Vec(const Vec&)> chart, std::function<Mat(const Vec&)> tangent,
                        int n, std::vector<ParameterAxis> box, int orientation, std::string label) {
  SourceSpec s;
  s.kind = SourceKind::Hypersurface;
  s.n = n;
  s.label = std::move(label);
  s.chart = std::move(chart);
  s.tangent = std::move(tangent);
  s.box = std::move(box);
  s.orientation = orientation;
  return s;
}

SourceSpec point_source(const Vec& base) {
  const int n = static_cast<int>(base.size());
  SourceSpec s;
  s.kind = SourceKind::Point;
  s.n = n;
  s.label = "point";
  s.base = base;
  if (n == 2) {
    s.box = {{0.0, kTwoPi, true, 0.25}};
  } else if (n == 3) {
    s.box = {{0.0, std::numbers::pi, false, 0.5}, {0.0, kTwoPi, true, 0.25}};
  } else {
    throw Error("point_source: direction meshes exist for n = 2 and 3 only");
  }
  return s;
}

Vec point_direction(const Vec& u) {
  Vec d;
  if (u.size() == 1) {
    d.resize(2);
    d << std::cos(u[0]), std::sin(u[0]);
  } else if (u.size() == 2) {
    d.resize(3);
    d << std::sin(u[0]) * std::cos(u[1]), std::sin(u[0]) * std::sin(u[1]), std::cos(u[0]);
  } else {
    throw Error("point_direction: unsupported parameter dimension");
  }
  return d;
}

Mat tangent_frame(const SourceSpec& source, const Vec& u) {
  if (source.kind != SourceKind::Hypersurface) throw Error("tangent_frame: not a hypersurface");
  if (source.tangent) return source.tangent(u);
  Mat t(source.n, source.n - 1);
  for (int i = 0; i < source.n - 1; ++i) t.col(i) = richardson(source.chart, u, i, 1e-3);
  return t;
}

Vec unit_normal(const Mat& tangents) {
  const Eigen::Index n = tangents.rows();
  if (tangents.cols() != n - 1) throw Error("unit_normal: need n-1 tangent columns");
  Vec nu(n);
  Mat m(n, n);
  m.rightCols(n - 1) = tangents;
  for (Eigen::Index i = 0; i < n; ++i) {
    m.col(0) = Vec::Unit(n, i);
    nu[i] = m.determinant();
  }
  const double len = nu.norm();
  if (!(len > 1e-14)) throw Error("unit_normal: tangent frame is rank deficient");
  return nu / len;
}

Vec covector_on_level(const HamiltonianModel& model, const Vec& x, const Vec& d) {
  double lo = 0.0;
  if (!(level_gap(model, x, d, lo) < 0.0)) {
    throw Error("source not admissible here: H(x, 0) is not below the level");
  }
  double hi = 1.0;
  int expand = 0;
  while (!(level_gap(model, x, d, hi) >= 0.0)) {
    lo = hi;
    hi *= 2.0;
    if (++expand > 80) throw Error("source not admissible here: no conormal root");
  }
  // Bisection to a tight bracket, then Newton polish.
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (level_gap(model, x, d, mid) < 0.0 ? lo : hi) = mid;
  }
  double lam = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const double g = level_gap(model, x, d, lam);
    const double dg = model.grad_p(x, lam * d).dot(d);
    if (!(dg > 0.0)) break;
    const double next = lam - g / dg;
    if (!(next > 0.0) || !std::isfinite(next)) break;
    lam = next;
  }
  return lam * d;
}

Vec boundary_covector(const HamiltonianModel& model, const SourceSpec& source, const Vec& u) {
  if (source.kind != SourceKind::Hypersurface) throw Error("boundary_covector: not a hypersurface");
  const Vec x = source.chart(u);
  const Vec nu = static_cast<double>(source.orientation) * unit_normal(tangent_frame(source, u));
  Vec p = covector_on_level(model, x, nu);
  if (!(model.grad_p(x, p).dot(nu) > 0.0)) {
    throw Error("source not admissible here: characteristic does not enter the inward side");
  }
  return p;
}

LagrangianFrame initial_lagrangian(const HamiltonianModel& model, const SourceSpec& source,
                                   const Vec& u) {
  const int n = source.n;
  if (source.kind == SourceKind::Point) return vertical_frame(n);

  const Vec x = source.chart(u);
  const Vec p = boundary_covector(model, source, u);
  const Mat tau = tangent_frame(source, u);
  Mat c(2 * n, n);
  auto covector = [&](const Vec& uu) { return boundary_covector(model, source, uu); };
  for (int i = 0; i < n - 1; ++i) {
    c.col(i).head(n) = tau.col(i);
    c.col(i).tail(n) = richardson(covector, u, i, 2e-3);
  }
  c.col(n - 1).head(n) = model.grad_p(x, p);
  c.col(n - 1).tail(n) = -model.grad_x(x, p);

  Eigen::JacobiSVD<Mat> svd(c);
  const double smin = svd.singularValues().minCoeff();
  if (!(smin > 1e-8 * svd.singularValues().maxCoeff())) {
    throw Error("initial_lagrangian: assembled frame is rank deficient");
  }
  return LagrangianFrame(c);
}

SourceSample make_sample(const HamiltonianModel& model, const SourceSpec& source, const Vec& u,
                         std::size_t id) {
  SourceSample s;
  s.id = id;
  s.parameter = u;
  try {
    if (source.kind == SourceKind::Point) {
      s.x = source.base;
      s.p0 = covector_on_level(model, s.x, point_direction(u));
    } else {
      s.x = source.chart(u);
      s.p0 = boundary_covector(model, source, u);
    }
    s.frame = initial_lagrangian(model, source, u);
    s.ok = true;
  } catch (const std::exception& e) {
    s.ok = false;
    s.error = e.what();
  }
  return s;
}

Vec exp_map(const HamiltonianModel& model, const SourceSample& sample, double t, double tol) {
  if (!sample.ok) throw Error("exp_map: sample failed: " + sample.error);
  if (t == 0.0) return sample.x;
  auto tr = flow(model, {sample.x, sample.p0}, t, tol);
  try {
    require_complete(tr, t);
  } catch (const EscapedError& e) {
    throw EscapedError(std::string("beyond maximal time: ") + e.what(), e.last_valid_time());
  }
  return tr.states.back().x;
}

std::vector<double> axis_samples(const ParameterAxis& ax, int N) {
  if (N < 2) throw Error("mesh: resolution must be at least 2 per axis");
  std::vector<double> out;
  for (int k = 0; k < N; ++k) {
    if (ax.offset > 0.0 || ax.periodic) {
      out.push_back(ax.lo + (ax.hi - ax.lo) * (k + ax.offset) / N);
    } else {
      out.push_back(ax.lo + (ax.hi - ax.lo) * k / (N - 1));
    }
  }
  return out;
}

std::vector<Vec> mesh_parameters(const SourceSpec& source, const std::vector<int>& resolution) {
  const std::size_t dims = source.box.size();
  if (dims == 0) throw Error("mesh: source has no parameter axes");
  if (resolution.size() != dims) throw Error("mesh: resolution needs one entry per parameter axis");
  std::vector<std::vector<double>> axes(dims);
  for (std::size_t a = 0; a < dims; ++a) axes[a] = axis_samples(source.box[a], resolution[a]);
  std::vector<Vec> out;
  std::vector<int> idx(dims, 0);
  while (true) {
    Vec u(static_cast<Eigen::Index>(dims));
    for (std::size_t a = 0; a < dims; ++a) u[static_cast<Eigen::Index>(a)] = axes[a][idx[a]];
    out.push_back(u);
    std::size_t a = dims;
    while (a > 0) {
      --a;
      if (++idx[a] < resolution[a]) break;
      idx[a] = 0;
      if (a == 0) return out;
    }
  }
}

std::vector<SourceSample> source_mesh(const HamiltonianModel& model, const SourceSpec& source,
                                      const std::vector<int>& resolution) {
  std::vector<SourceSample> out;
  const auto params = mesh_parameters(source, resolution);
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back(make_sample(model, source, params[i], i));
  return out;
}

}  // namespace loci
