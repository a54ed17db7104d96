#include "loci/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace loci {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// All non-zero integer offsets with entries in [-m, m] whose first non-zero
// entry is positive, so each unordered pair is visited once.
std::vector<std::vector<int>> half_offsets(std::size_t dims, const std::vector<int>& reach) {
  std::vector<std::vector<int>> out;
  std::vector<int> o(dims);
  for (std::size_t a = 0; a < dims; ++a) o[a] = -reach[a];
  while (true) {
    const auto first = std::find_if(o.begin(), o.end(), [](int v) { return v != 0; });
    if (first != o.end() && *first > 0) out.push_back(o);
    std::size_t a = 0;
    while (a < dims && ++o[a] > reach[a]) {
      o[a] = -reach[a];
      ++a;
    }
    if (a == dims) break;
  }
  return out;
}

double offset_length(const SampledFunction& f, const std::vector<int>& o, double scale = 1.0) {
  double s = 0.0;
  for (std::size_t a = 0; a < o.size(); ++a) {
    const double d = scale * o[a] * f.spacing(a);
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<int> shifted(const std::vector<int>& idx, const std::vector<int>& o, int k) {
  std::vector<int> r(idx);
  for (std::size_t a = 0; a < r.size(); ++a) r[a] += k * o[a];
  return r;
}

double cross2(const Vec& a, const Vec& b) { return a[0] * b[1] - a[1] * b[0]; }

Vec closest_on_segment(const Vec& p, const Vec& a, const Vec& b) {
  const Vec ab = b - a;
  const double L = ab.squaredNorm();
  if (L == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / L, 0.0, 1.0);
  return a + t * ab;
}

Vec closest_on_triangle(const Vec& p, const Vec& a, const Vec& b, const Vec& c) {
  const Vec ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Distance along the ray center + s * dir (|dir| = 1) to the boundary, or +inf.
double ray_hit(const BoundaryMesh& b, const Vec& dir) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < b.simplices.size(); ++k) {
    const Vec rc = b.bound_center[k] - b.center;
    const double along = rc.dot(dir);
    const double r = b.bound_radius[k];
    if (along + r < 0 || (rc - along * dir).squaredNorm() > r * r || along - r > best) continue;
    const auto& s = b.simplices[k];
    if (b.n == 2) {
      const Vec p = b.points[s[0]] - b.center, q = b.points[s[1]] - b.center;
      const Vec e = q - p;
      const double den = cross2(dir, e);
      if (den == 0.0) continue;
      const double t = cross2(p, e) / den;
      const double u = cross2(p, dir) / den;
      if (t > 0 && u >= -1e-12 && u <= 1 + 1e-12) best = std::min(best, t);
    } else {
      const Vec v0 = b.points[s[0]] - b.center, v1 = b.points[s[1]] - b.center,
                v2 = b.points[s[2]] - b.center;
      const Eigen::Vector3d e1 = v1 - v0, e2 = v2 - v0, d = dir;
      const Eigen::Vector3d h = d.cross(e2);
      const double det = e1.dot(h);
      if (std::abs(det) < 1e-300) continue;
      const Eigen::Vector3d s0 = -Eigen::Vector3d(v0);
      const double u = s0.dot(h) / det;
      if (u < -1e-12 || u > 1 + 1e-12) continue;
      const Eigen::Vector3d q = s0.cross(e1);
      const double v = d.dot(q) / det;
      if (v < -1e-12 || u + v > 1 + 1e-12) continue;
      const double t = e2.dot(q) / det;
      if (t > 0) best = std::min(best, t);
    }
  }
  return best;
}

double circumradius(const Vec& a, const Vec& b, const Vec& c) {
  const double A = (b - c).norm(), B = (a - c).norm(), C = (a - b).norm();
  const Vec u = b - a, v = c - a;
  const double area2 = std::sqrt(std::max(0.0, u.squaredNorm() * v.squaredNorm() - std::pow(u.dot(v), 2)));
  if (area2 == 0.0) return std::numeric_limits<double>::infinity();
  return A * B * C / (2.0 * area2);
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<int> SampledFunction::index(std::size_t flat_index) const {
  std::vector<int> idx(counts.size());
  for (std::size_t a = counts.size(); a-- > 0;) {
    idx[a] = static_cast<int>(flat_index % static_cast<std::size_t>(counts[a]));
    flat_index /= static_cast<std::size_t>(counts[a]);
  }
  return idx;
}

std::optional<std::size_t> SampledFunction::flat(std::vector<int> idx) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    int k = idx[a];
    if (axes[a].periodic) {
      k = ((k % counts[a]) + counts[a]) % counts[a];
    } else if (k < 0 || k >= counts[a]) {
      return std::nullopt;
    }
    f = f * static_cast<std::size_t>(counts[a]) + static_cast<std::size_t>(k);
  }
  return f;
}

double SampledFunction::spacing(std::size_t a) const {
  const auto& ax = axes[a];
  const bool centred = ax.periodic || ax.offset > 0.0;
  return (ax.hi - ax.lo) / (centred ? counts[a] : counts[a] - 1);
}

Vec SampledFunction::coordinate(std::size_t f) const {
  const auto idx = index(f);
  Vec c(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t a = 0; a < counts.size(); ++a) {
    c[static_cast<Eigen::Index>(a)] = axis_samples(axes[a], counts[a])[static_cast<std::size_t>(idx[a])];
  }
  return c;
}

Vec SampledFunction::displacement(std::size_t a, std::size_t b) const {
  const auto ia = index(a), ib = index(b);
  Vec d(static_cast<Eigen::Index>(counts.size()));
  for (std::size_t k = 0; k < counts.size(); ++k) {
    int di = ib[k] - ia[k];
    if (axes[k].periodic) {
      const int N = counts[k];
      di = ((di % N) + N) % N;
      if (di > N / 2) di -= N;
    }
    d[static_cast<Eigen::Index>(k)] = di * spacing(k);
  }
  return d;
}

SampledFunction sampled_from_loci(const LociTable& table, const SourceSpec& source,
                                  const std::vector<int>& resolution, const std::string& which) {
  SampledFunction f;
  f.id = which;
  f.axes = source.box;
  f.counts = resolution;
  for (const auto& r : table.records) {
    std::optional<double> v;
    if (which == "t_conj") {
      v = r.t_conj;
    } else if (which == "t_cut") {
      v = r.t_cut;
    } else {
      throw Error("sampled_from_loci: unknown quantity '" + which + "'");
    }
    f.values.push_back(v ? *v : kNaN);
  }
  return f;
}

// ---------------------------------------------------------------------------

LipschitzEstimate lipschitz_estimate(const SampledFunction& f, double radius) {
  LipschitzEstimate e;
  e.radius = radius;
  const std::size_t dims = f.counts.size();
  std::vector<int> reach(dims);
  for (std::size_t a = 0; a < dims; ++a) {
    reach[a] = std::min(static_cast<int>(std::floor(radius / f.spacing(a) + 1e-9)), f.counts[a] - 1);
  }
  const auto offsets = half_offsets(dims, reach);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::isnan(f.values[i])) continue;
    const auto idx = f.index(i);
    for (const auto& o : offsets) {
      const double d = offset_length(f, o);
      if (d > radius * (1 + 1e-12) || d == 0.0) continue;
      const auto j = f.flat(shifted(idx, o, 1));
      if (!j || *j == i || std::isnan(f.values[*j])) continue;
      ++e.pairs;
      const double q = std::abs(f.values[*j] - f.values[i]) / d;
      if (q > e.value) {
        e.value = q;
        e.witness_a = i;
        e.witness_b = *j;
      }
    }
  }
  if (e.pairs == 0) throw Error("lipschitz_estimate: no admissible pair within the radius");
  return e;
}

SemiconcavityEstimate semiconcavity_estimate(const SampledFunction& f, double delta) {
  SemiconcavityEstimate e;
  e.delta = delta;
  const std::size_t dims = f.counts.size();
  std::vector<int> reach(dims);
  for (std::size_t a = 0; a < dims; ++a) {
    reach[a] = std::min(static_cast<int>(std::floor(delta / f.spacing(a) + 1e-9)), f.counts[a] - 1);
  }
  const auto offsets = half_offsets(dims, reach);
  // (a, b): x = mid - a o, y = mid + b o, mu = b / (a + b).
  const std::pair<int, int> arms[] = {{1, 1}, {1, 3}, {3, 1}};
  std::map<long long, std::pair<double, double>> scales;
  for (std::size_t m = 0; m < f.size(); ++m) {
    if (std::isnan(f.values[m])) continue;
    const auto idx = f.index(m);
    for (const auto& o : offsets) {
      const double len = offset_length(f, o);
      for (const auto& [a, b] : arms) {
        if (std::max(a, b) * len > delta * (1 + 1e-12)) continue;
        const auto ix = f.flat(shifted(idx, o, -a));
        const auto iy = f.flat(shifted(idx, o, b));
        if (!ix || !iy || std::isnan(f.values[*ix]) || std::isnan(f.values[*iy])) continue;
        const double mu = static_cast<double>(b) / (a + b);
        const double dist = (a + b) * len;
        const double lhs = mu * f.values[*ix] + (1 - mu) * f.values[*iy] - f.values[m];
        const double C = lhs / (mu * (1 - mu) * dist * dist);
        ++e.triples;
        const long long key = std::llround(dist * 1e9);
        auto [it, fresh] = scales.try_emplace(key, dist, C);
        if (!fresh) it->second.second = std::max(it->second.second, C);
        if (C > e.C) {
          e.C = C;
          e.witness_x = *ix;
          e.witness_mid = m;
          e.witness_y = *iy;
          e.witness_mu = mu;
        }
      }
    }
  }
  if (e.triples == 0) throw Error("semiconcavity_estimate: degenerate mesh, no triple fits in the ball");
  for (const auto& [k, v] : scales) e.by_scale.push_back({v.first, std::max(v.second, 0.0)});
  // Blow-up test: required C growing like a negative power of the scale at
  // the smallest scales, and large enough not to be round-off.
  const std::size_t m = std::min<std::size_t>(3, e.by_scale.size());
  if (m >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const auto [d, C] = e.by_scale[i];
      if (C <= 0) continue;
      const double lx = std::log(d), ly = std::log(C);
      sx += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++used;
    }
    if (used >= 2) {
      const double u = static_cast<double>(used);
      e.slope = (u * sxy - sx * sy) / (u * sxx - sx * sx);
      const auto [d0, C0] = e.by_scale.front();
      e.infinite = e.slope <= -0.5 && C0 * d0 > 1e-3;
    }
  }
  return e;
}

double hessian_bound_estimate(const SampledFunction& f) {
  const std::size_t dims = f.counts.size();
  for (int c : f.counts) {
    if (c < 5) throw Error("hessian_bound_estimate: mesh too coarse (fewer than 5 points per axis)");
  }
  double best = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::isnan(f.values[i])) continue;
    const auto idx = f.index(i);
    const Vec u = f.coordinate(i);
    for (std::size_t a = 0; a < dims; ++a) {
      std::vector<int> o(dims, 0);
      o[a] = 1;
      const auto im = f.flat(shifted(idx, o, -1)), ip = f.flat(shifted(idx, o, 1));
      if (!im || !ip || std::isnan(f.values[*im]) || std::isnan(f.values[*ip])) continue;
      double h = f.spacing(a);
      // Azimuthal steps on the direction sphere have length sin(polar) * step.
      if (dims == 2 && a == 1) h *= std::sin(u[0]);
      if (h <= 0) continue;
      best = std::max(best, std::abs(f.values[*ip] - 2 * f.values[i] + f.values[*im]) / (h * h));
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

NonfocalDomain nonfocal_domain(const HamiltonianModel& model, const SourceSpec& point,
                               const std::vector<int>& resolution, double horizon,
                               const ConjugateOptions& opt, int workers) {
  if (point.kind != SourceKind::Point) throw Error("nonfocal_domain: source must be a point");
  NonfocalDomain d;
  d.n = model.dim();
  d.counts = resolution;
  d.directions = mesh_parameters(point, resolution);
  const std::size_t N = d.directions.size();
  d.t_conj.assign(N, kNaN);
  d.boundary.assign(N, Vec());
  std::vector<std::string> errors(N);
  parallel_for(N, workers, [&](std::size_t i) {
    const SourceSample s = make_sample(model, point, d.directions[i], i);
    if (!s.ok) {
      errors[i] = s.error;
      return;
    }
    try {
      const auto c = conjugate_time(model, s, horizon, opt);
      if (!c.t_conj) {
        errors[i] = "no conjugate time up to " + std::to_string(c.searched_to);
        return;
      }
      d.t_conj[i] = *c.t_conj;
      Eigen::SelfAdjointEigenSolver<Mat> es(model.hess_pp(s.x, s.p0));
      d.boundary[i] = *c.t_conj * (es.operatorSqrt() * s.p0);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::ostringstream bad;
  std::size_t missing = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (errors[i].empty()) continue;
    if (missing < 10) {
      bad << (missing ? "; " : "") << "direction " << i << " (";
      for (Eigen::Index k = 0; k < d.directions[i].size(); ++k) bad << (k ? ", " : "") << d.directions[i][k];
      bad << "): " << errors[i];
    }
    ++missing;
  }
  if (missing) {
    std::ostringstream os;
    os << "nonfocal_domain: " << missing << " direction(s) without conjugate time: " << bad.str();
    throw Error(os.str());
  }
  d.radius_min = std::numeric_limits<double>::infinity();
  d.radius_max = 0.0;
  for (const auto& b : d.boundary) {
    d.radius_min = std::min(d.radius_min, b.norm());
    d.radius_max = std::max(d.radius_max, b.norm());
  }
  return d;
}

BoundaryMesh closed_polyline(std::vector<Vec> points, const Vec& center) {
  if (points.size() < 3) throw Error("closed_polyline: need at least 3 points");
  BoundaryMesh b;
  b.n = 2;
  b.center = center;
  b.points = std::move(points);
  const std::size_t N = b.points.size();
  for (std::size_t i = 0; i < N; ++i) b.simplices.push_back({i, (i + 1) % N});
  b.finalize();
  return b;
}

BoundaryMesh sphere_grid_surface(const std::vector<Vec>& points, int n_polar, int n_azimuth,
                                 const Vec& north, const Vec& south, const Vec& center) {
  if (static_cast<int>(points.size()) != n_polar * n_azimuth) throw Error("sphere_grid_surface: size mismatch");
  BoundaryMesh b;
  b.n = 3;
  b.center = center;
  b.points = points;
  const std::size_t N = points.size();
  b.points.push_back(north);
  b.points.push_back(south);
  const std::size_t in = N, is = N + 1;
  auto at = [&](int i, int j) {
    return static_cast<std::size_t>(i * n_azimuth + ((j % n_azimuth) + n_azimuth) % n_azimuth);
  };
  for (int j = 0; j < n_azimuth; ++j) {
    b.simplices.push_back({in, at(0, j), at(0, j + 1)});
    b.simplices.push_back({is, at(n_polar - 1, j + 1), at(n_polar - 1, j)});
    for (int i = 0; i + 1 < n_polar; ++i) {
      b.simplices.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
      b.simplices.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  }
  b.finalize();
  return b;
}

BoundaryMesh boundary_from_nonfocal(const NonfocalDomain& d) {
  const Vec origin = Vec::Zero(d.n);
  if (d.n == 2) return closed_polyline(d.boundary, origin);
  if (d.n != 3 || d.counts.size() != 2) throw Error("boundary_from_nonfocal: unsupported dimension");
  // Axis points: mean ring radius along the direction of the ring's mean.
  auto cap = [&](int ring) {
    Vec mean = Vec::Zero(3);
    double r = 0.0;
    for (int j = 0; j < d.counts[1]; ++j) {
      const Vec& p = d.boundary[static_cast<std::size_t>(ring * d.counts[1] + j)];
      mean += p;
      r += p.norm();
    }
    r /= d.counts[1];
    return Vec(r * mean.normalized());
  };
  return sphere_grid_surface(d.boundary, d.counts[0], d.counts[1], cap(0), cap(d.counts[0] - 1), origin);
}

void BoundaryMesh::finalize() {
  bound_center.clear();
  bound_radius.clear();
  spacing = 0.0;
  for (const auto& s : simplices) {
    Vec c = Vec::Zero(n);
    for (std::size_t v : s) c += points[v];
    c /= static_cast<double>(s.size());
    double r = 0.0;
    for (std::size_t v : s) r = std::max(r, (points[v] - c).norm());
    bound_center.push_back(c);
    bound_radius.push_back(r * (1 + 1e-12));
    for (std::size_t k = 0; k < s.size(); ++k) {
      spacing = std::max(spacing, (points[s[k]] - points[s[(k + 1) % s.size()]]).norm());
    }
  }
}

double signed_boundary_distance(const BoundaryMesh& b, const Vec& p) {
  auto exact = [&](std::size_t k) {
    const auto& s = b.simplices[k];
    const Vec q = b.n == 2 ? closest_on_segment(p, b.points[s[0]], b.points[s[1]])
                           : closest_on_triangle(p, b.points[s[0]], b.points[s[1]], b.points[s[2]]);
    return (p - q).norm();
  };
  const std::size_t S = b.simplices.size();
  std::vector<double> lower(S);
  std::size_t first = 0;
  for (std::size_t k = 0; k < S; ++k) {
    lower[k] = (p - b.bound_center[k]).norm() - b.bound_radius[k];
    if (lower[k] < lower[first]) first = k;
  }
  double dist = exact(first);
  for (std::size_t k = 0; k < S; ++k) {
    if (lower[k] < dist) dist = std::min(dist, exact(k));
  }
  const Vec rel = p - b.center;
  if (rel.norm() == 0.0) return dist;
  const double hit = ray_hit(b, rel.normalized());
  return rel.norm() <= hit ? dist : -dist;
}

void check_star_shaped(const BoundaryMesh& b) {
  int sign = 0;
  double winding = 0.0;
  for (std::size_t k = 0; k < b.simplices.size(); ++k) {
    const auto& s = b.simplices[k];
    double orient;
    if (b.n == 2) {
      const Vec p = b.points[s[0]] - b.center, q = b.points[s[1]] - b.center;
      orient = cross2(p, q);
      winding += std::atan2(orient, p.dot(q));
    } else {
      Eigen::Matrix3d m;
      m << b.points[s[0]] - b.center, b.points[s[1]] - b.center, b.points[s[2]] - b.center;
      orient = m.determinant();
    }
    const int sg = orient > 0 ? 1 : (orient < 0 ? -1 : 0);
    if (sg == 0 || (sign != 0 && sg != sign)) {
      std::ostringstream os;
      os << "boundary is not star-shaped about its center (simplex " << k << ")";
      throw Error(os.str());
    }
    sign = sg;
  }
  if (b.n == 2 && std::abs(std::abs(winding) - 2 * std::numbers::pi) > 1e-6) {
    throw Error("boundary is not star-shaped about its center (winding number is not one)");
  }
}

ConvexityCertificate uniform_convexity(const BoundaryMesh& b, const ConvexityOptions& opt) {
  check_star_shaped(b);
  ConvexityCertificate c;
  c.kappa_min = opt.kappa_min;
  c.spacing = b.spacing;
  c.delta = opt.delta > 0 ? opt.delta : 4 * b.spacing;
  const std::size_t N = b.n == 2 ? b.points.size() : b.points.size() - 2;
  c.samples = N;

  // Sagitta bound of the sampled boundary against a curve through the samples.
  double sagitta = 0.0;
  if (b.n == 2) {
    for (std::size_t i = 0; i < N; ++i) {
      const Vec& a = b.points[(i + N - 1) % N];
      const Vec& m = b.points[i];
      const Vec& z = b.points[(i + 1) % N];
      const double R = circumradius(a, m, z);
      const double s = std::max((m - a).norm(), (z - m).norm());
      if (std::isfinite(R)) sagitta = std::max(sagitta, s * s / (8 * R));
    }
  } else {
    // Curvature across each interior edge from the bend between its two triangles.
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> edges;
    for (std::size_t k = 0; k < b.simplices.size(); ++k) {
      const auto& s = b.simplices[k];
      for (std::size_t e = 0; e < 3; ++e) {
        const auto u = std::minmax(s[e], s[(e + 1) % 3]);
        edges[{u.first, u.second}].push_back(k);
      }
    }
    auto normal = [&](std::size_t k) {
      const auto& s = b.simplices[k];
      const Eigen::Vector3d e1 = b.points[s[1]] - b.points[s[0]], e2 = b.points[s[2]] - b.points[s[0]];
      return Vec(e1.cross(e2).normalized());
    };
    for (const auto& [e, tris] : edges) {
      if (tris.size() != 2) continue;
      const double bend = std::acos(std::clamp(normal(tris[0]).dot(normal(tris[1])), -1.0, 1.0));
      const double sep = (b.bound_center[tris[0]] - b.bound_center[tris[1]]).norm();
      const double len = (b.points[e.first] - b.points[e.second]).norm();
      if (sep > 0) sagitta = std::max(sagitta, len * len * (bend / sep) / 8);
    }
  }

  // Chord criterion.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const double min_len = opt.min_chord_spacings * b.spacing;
  if (b.n == 2) {
    std::vector<std::size_t> ladder;
    for (std::size_t k = static_cast<std::size_t>(std::ceil(opt.min_chord_spacings)); k <= N / 2;
         k = std::max(k + 1, static_cast<std::size_t>(std::llround(k * 1.25)))) {
      ladder.push_back(k);
    }
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k : ladder) pairs.push_back({i, (i + k) % N});
  } else {
    const std::size_t stride = std::max<std::size_t>(1, N * N / 50000);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1 + (i % stride); j < N; j += stride) pairs.push_back({i, j});
  }
  c.kappa_chord = std::numeric_limits<double>::infinity();
  for (const auto& [i, j] : pairs) {
    const Vec& x = b.points[i];
    const Vec& y = b.points[j];
    const double L2 = (x - y).squaredNorm();
    if (std::sqrt(L2) < min_len) continue;
    ++c.pairs;
    for (double lam : {0.25, 0.5, 0.75}) {
      const double d = signed_boundary_distance(b, lam * x + (1 - lam) * y);
      const double k = d / (lam * (1 - lam) * L2);
      if (k < c.kappa_chord) {
        c.kappa_chord = k;
        c.chord_a = i;
        c.chord_b = j;
        c.chord_lambda = lam;
        c.kappa_chord_error = sagitta / (lam * (1 - lam) * L2);
      }
    }
  }
  if (c.pairs == 0) throw Error("uniform_convexity: no chord longer than the minimum length");
  c.kappa_chord = std::max(c.kappa_chord, 0.0);

  // Enclosing-ball criterion: at each sample, the smallest ball tangent at the
  // sample (normal optimized by pattern search) that contains its neighbours.
  c.kappa_ball = std::numeric_limits<double>::infinity();
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<Vec> nbr;
    for (std::size_t j = 0; j < N; ++j) {
      const Vec d = b.points[j] - b.points[i];
      if (j != i && d.norm() <= c.delta) nbr.push_back(d);
    }
    if (nbr.empty()) {
      c.failure = "ball criterion: no neighbours within delta";
      break;
    }
    Vec nu0;
    if (b.n == 2) {
      const Vec t = b.points[(i + 1) % N] - b.points[(i + N - 1) % N];
      nu0 = Vec(2);
      nu0 << -t[1], t[0];
    } else {
      nu0 = Vec::Zero(3);
      for (const auto& s : b.simplices) {
        if (std::find(s.begin(), s.end(), i) == s.end()) continue;
        const Eigen::Vector3d e1 = b.points[s[1]] - b.points[s[0]], e2 = b.points[s[2]] - b.points[s[0]];
        nu0 += Vec(e1.cross(e2));
      }
    }
    if ((b.center - b.points[i]).dot(nu0) < 0) nu0 = -nu0;
    nu0.normalize();
    const Mat T = Eigen::JacobiSVD<Mat>(nu0.transpose(), Eigen::ComputeFullV).matrixV().rightCols(b.n - 1);
    auto radius = [&](const Vec& a) {
      const Vec nu = (nu0 + T * a).normalized();
      double R = 0.0;
      for (const Vec& d : nbr) {
        const double h = d.dot(nu);
        if (h <= 0) return inf;
        R = std::max(R, d.squaredNorm() / (2 * h));
      }
      return R;
    };
    Vec a = Vec::Zero(b.n - 1);
    double R = radius(a);
    for (double step = 0.1; step > 1e-7; step *= 0.5) {
      bool improved = true;
      while (improved) {
        improved = false;
        for (Eigen::Index k = 0; k < a.size(); ++k) {
          for (double sgn : {1.0, -1.0}) {
            Vec trial = a;
            trial[k] += sgn * step;
            const double Rt = radius(trial);
            if (Rt < R) {
              R = Rt;
              a = trial;
              improved = true;
            }
          }
        }
      }
    }
    const double k = R > 0 ? 1.0 / R : inf;
    if (k < c.kappa_ball) {
      c.kappa_ball = k;
      c.ball_at = i;
    }
  }
  c.pass = c.failure.empty() && std::min(c.kappa_chord, c.kappa_ball) >= opt.kappa_min;
  return c;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LipschitzEstimate& e) {
  return {{"radius", e.radius}, {"value", e.value}, {"pairs", e.pairs}, {"witness", {e.witness_a, e.witness_b}}};
}

nlohmann::json to_json(const SemiconcavityEstimate& e) {
  nlohmann::json scales = nlohmann::json::array();
  for (const auto& [d, C] : e.by_scale) scales.push_back({d, C});
  return {{"delta", e.delta},
          {"C", e.C},
          {"infinite", e.infinite},
          {"triples", e.triples},
          {"slope_smallest_scales", e.slope},
          {"witness", {{"x", e.witness_x}, {"mid", e.witness_mid}, {"y", e.witness_y}, {"mu", e.witness_mu}}},
          {"by_scale", scales}};
}

nlohmann::json to_json(const ConvexityCertificate& c) {
  return {{"kappa_min", c.kappa_min},
          {"kappa_chord", c.kappa_chord},
          {"kappa_chord_error", c.kappa_chord_error},
          {"kappa_ball", c.kappa_ball},
          {"kappa", std::min(c.kappa_chord, c.kappa_ball)},
          {"pass", c.pass},
          {"chord_witness", {{"a", c.chord_a}, {"b", c.chord_b}, {"lambda", c.chord_lambda}}},
          {"ball_witness", c.ball_at},
          {"pairs", c.pairs},
          {"samples", c.samples},
          {"spacing", c.spacing},
          {"delta", c.delta},
          {"failure", c.failure}};
}

}  // namespace loci
