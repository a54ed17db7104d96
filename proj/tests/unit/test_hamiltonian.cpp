#include <cmath>

#include "doctest.h"
#include "loci/hamiltonian.hpp"

using namespace loci;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// H = (1 + x1^2) |p|^2 / 2 + x2 p1, only first derivatives supplied.
HamiltonianModel bumpy_fd() {
  HamiltonianModel::Evaluators ev;
  ev.H = [](const Vec& x, const Vec& p) { return 0.5 * (1 + x[0] * x[0]) * p.squaredNorm() + x[1] * p[0]; };
  ev.grad_x = [](const Vec& x, const Vec& p) {
    return v2(x[0] * p.squaredNorm(), p[0]);
  };
  ev.grad_p = [](const Vec& x, const Vec& p) {
    Vec g = (1 + x[0] * x[0]) * p;
    g[0] += x[1];
    return g;
  };
  return HamiltonianModel("bumpy", 2, 0.5, ev);
}

std::vector<PhasePoint> grid_samples(double pmax) {
  std::vector<PhasePoint> s;
  for (double a = -1; a <= 1; a += 0.5)
    for (double b = -pmax; b <= pmax; b += pmax / 2) s.push_back({v2(a, -a), v2(b, 0.3 * b)});
  return s;
}

}  // namespace

TEST_CASE("validation of the Euclidean eikonal and a linear model") {
  auto rep = validate_model(euclidean_eikonal(2), grid_samples(10));
  CHECK(rep.passed("H2"));
  CHECK(rep.passed("H3"));
  CHECK(rep.passed("H1"));
  CHECK(rep.passed("gradients"));
  CHECK(rep.min_eig_Q == doctest::Approx(1.0));

  auto lin = validate_model(linear_model(v2(1, 2), -1.0, 0.0), grid_samples(3));
  CHECK_FALSE(lin.passed("H2"));
  CHECK(std::abs(lin.min_eig_Q) < 1e-14);
  CHECK_FALSE(lin.passed("H1"));

  CHECK_THROWS_AS(validate_model(euclidean_eikonal(2), {}), Error);
}

TEST_CASE("evaluator failures become report entries") {
  HamiltonianModel::Evaluators ev;
  ev.H = [](const Vec& x, const Vec& p) {
    if (x[0] > 0.9) throw Error("outside domain");
    return 0.5 * p.squaredNorm();
  };
  ev.grad_x = [](const Vec&, const Vec&) { return Vec(Vec::Zero(2)); };
  ev.grad_p = [](const Vec&, const Vec& p) { return p; };
  HamiltonianModel m("fragile", 2, 0.5, ev);
  auto rep = validate_model(m, grid_samples(1));
  CHECK(rep.failures.size() == 5);
  CHECK_FALSE(rep.all_pass());
}

TEST_CASE("finite-difference second derivatives") {
  auto m = bumpy_fd();
  CHECK(m.second_derivative_source() == DerivativeSource::FiniteDifference);
  const Vec x = v2(0.7, -0.2), p = v2(0.4, 1.1);
  auto cm = coeff_matrices(m, {x, p});
  Mat A(2, 2), B(2, 2);
  A << p.squaredNorm(), 0, 0, 0;
  B << 2 * x[0] * p[0], 2 * x[0] * p[1], 1, 0;
  CHECK((cm.A - A).norm() < 1e-8);
  CHECK((cm.B - B).norm() < 1e-8);
  CHECK((cm.Q - (1 + x[0] * x[0]) * Mat::Identity(2, 2)).norm() < 1e-8);

  auto e = coeff_matrices(euclidean_eikonal(3), {Vec::Zero(3), Vec::Ones(3)});
  CHECK(e.A.norm() == 0.0);
  CHECK(e.B.norm() == 0.0);
  CHECK(e.Q == Mat::Identity(3, 3));

  Mat P(2, 2);
  P << 2, 0.5, 0.5, 1;
  CHECK(coeff_matrices(quadratic_model(P, 0, 0.5), {v2(1, 1), v2(0, 1)}).Q == P);
}

TEST_CASE("straight characteristics and trivial flows") {
  auto m = euclidean_eikonal(2);
  auto tr = flow(m, {v2(0, 0), v2(1, 0)}, 1.0, 1e-10);
  CHECK_FALSE(tr.escaped);
  auto end = tr.states.back();
  CHECK((end.x - v2(1, 0)).norm() < 1e-12);
  CHECK((end.p - v2(1, 0)).norm() < 1e-12);

  auto z = flow(m, {v2(3, 4), v2(0.6, 0.8)}, 0.0, 1e-10);
  CHECK(z.times.size() == 1);
  CHECK(action(m, z) == 0.0);
  CHECK(z.state_at(0.0).x == v2(3, 4));

  // Eikonal ray: L = 1, action over T = 2 is 2.
  auto ray = flow(m, {v2(0, 0), v2(0.6, 0.8)}, 2.0, 1e-10);
  CHECK(action(m, ray) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(ray.actions.back() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("energy, group property and reversibility") {
  auto m = bumpy_fd();
  const double tol = 1e-10;
  PhasePoint s{v2(0.3, -0.1), v2(0.5, 0.7)};
  auto full = flow(m, s, 2.0, tol);
  CHECK(full.max_energy_drift <= 10 * tol);
  auto first = flow(m, s, 0.8, tol);
  auto second = flow(m, first.states.back(), 1.2, tol);
  auto a = second.states.back(), b = full.states.back();
  const double gap = std::sqrt((a.x - b.x).squaredNorm() + (a.p - b.p).squaredNorm());
  CHECK(gap <= 100 * tol);

  auto back = flow(m, full.states.back(), -2.0, tol);
  const auto r = back.states.back();
  CHECK(std::sqrt((r.x - s.x).squaredNorm() + (r.p - s.p).squaredNorm()) <= 100 * tol);

  // Both interpolants agree with the integrated path.
  const double tm = 1.234;
  auto mid = flow(m, s, tm, tol).states.back();
  CHECK((full.state_at(tm).x - mid.x).norm() < 1e-8);
  CHECK((full.state_at(tm, Interpolation::Hermite3).x - mid.x).norm() < 1e-5);
}

TEST_CASE("escape is reported with the last valid time") {
  // H = p^3/3-ish growth: x' = p^2 style blow-up through H = |p|^4/4.
  HamiltonianModel::Evaluators ev;
  ev.H = [](const Vec& x, const Vec& p) { return 0.5 * p.squaredNorm() - 0.25 * std::pow(x[0], 4); };
  ev.grad_x = [](const Vec& x, const Vec&) { return v2(-std::pow(x[0], 3), 0); };
  ev.grad_p = [](const Vec&, const Vec& p) { return p; };
  HamiltonianModel m("quartic-well", 2, 0.0, ev);
  auto tr = flow(m, {v2(1, 0), v2(1, 0)}, 5.0, 1e-9);
  CHECK(tr.escaped);
  CHECK(tr.last_valid_time < 5.0);
  CHECK_THROWS_AS(require_complete(tr, 5.0), EscapedError);
}

TEST_CASE("legendre transform") {
  auto m = euclidean_eikonal(2);
  auto r = legendre(m, v2(0, 0), v2(3, 4));
  CHECK(r.value == doctest::Approx(12.5));
  CHECK((r.p_star - v2(3, 4)).norm() < 1e-10);

  // Involution on a non-quadratic model.
  auto b = bumpy_fd();
  const Vec x = v2(-0.4, 0.9), p = v2(1.3, -0.2);
  auto inv = legendre(b, x, b.grad_p(x, p));
  CHECK((inv.p_star - p).norm() < 1e-8);

  // Dirichlet mode: L(x, 0) >= -H(x, 0) > 0.
  auto d = quadratic_model(Mat::Identity(2, 2), -0.5, 0.0);
  auto l0 = legendre(d, v2(1, 1), v2(0, 0));
  CHECK(l0.value >= 0.5 - 1e-12);

  CHECK_THROWS_AS(legendre(linear_model(v2(1, 0), 0, 0), v2(0, 0), v2(0, 1), 20), LegendreError);
}
