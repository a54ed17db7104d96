#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "loci/linearized.hpp"
#include "loci/sphere.hpp"

using namespace loci;
namespace sp = loci::sphere;
constexpr double kPi = std::numbers::pi;

namespace {

Vec vec(std::initializer_list<double> l) {
  Vec v(static_cast<Eigen::Index>(l.size()));
  Eigen::Index i = 0;
  for (double x : l) v[i++] = x;
  return v;
}

double rel_residual(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("stereographic chart maps") {
  CHECK(sp::project(vec({0, 0, -1})).norm() == 0.0);
  CHECK((sp::project(vec({-1, 0, 0})) - vec({-1, 0})).norm() == 0.0);
  CHECK_THROWS_AS(sp::project(vec({0, 0, 1})), Error);
  std::mt19937 rng(7);
  std::normal_distribution<double> g;
  for (int k = 0; k < 50; ++k) {
    Vec X(4);
    for (int i = 0; i < 4; ++i) X[i] = g(rng);
    X.normalize();
    CHECK((sp::unproject(sp::project(X)) - X).norm() < 1e-12);
  }
}

TEST_CASE("round model values") {
  auto m = sp::round_model(2);
  CHECK(m.H(Vec::Zero(2), vec({2, 0})) == doctest::Approx(0.5));
  CHECK(sp::metric_factor(Vec::Zero(2)) == 4.0);
  auto cm = coeff_matrices(m, {Vec::Zero(2), vec({2, 0})});
  CHECK((cm.Q - 0.25 * Mat::Identity(2, 2)).norm() < 1e-15);

  // Analytic second derivatives against central differences of the gradients.
  const Vec y = vec({0.3, -0.8}), p = vec({0.7, 0.2});
  const double h = 1e-6;
  Mat A(2, 2), B(2, 2);
  for (int j = 0; j < 2; ++j) {
    Vec e = Vec::Unit(2, j) * h;
    A.col(j) = (m.grad_x(y + e, p) - m.grad_x(y - e, p)) / (2 * h);
    B.col(j) = (m.grad_x(y, p + e) - m.grad_x(y, p - e)) / (2 * h);
  }
  CHECK((m.hess_xx(y, p) - A).norm() < 1e-7);
  CHECK((m.hess_xp(y, p) - B).norm() < 1e-7);

  auto rep = validate_model(m, {{y, p}, {Vec::Zero(2), vec({2, 0})}});
  CHECK(rep.passed("H2"));
  CHECK(rep.passed("H3"));
  CHECK(rep.passed("gradients"));
}

TEST_CASE("closed-form geodesics agree with the flow") {
  auto m = sp::round_model(2);
  const Vec vbar = vec({0, -1});
  auto g0 = sp::geodesic_closed_form(vbar, 0.0);
  CHECK((g0.theta - sp::ybar(2)).norm() < 1e-15);
  auto g1 = sp::geodesic_closed_form(vbar, kPi / 2);
  CHECK(g1.theta.norm() < 1e-15);
  CHECK((g1.p - vec({2, 0})).norm() < 1e-15);
  CHECK(1 + g1.z.squaredNorm() == doctest::Approx(2.0 / (1 - vbar[1])));

  auto tr = flow(m, {sp::ybar(2), vec({1, 0})}, kPi / 2, 1e-12);
  CHECK((tr.states.back().x - vec({0, 0})).norm() < 1e-8);
  CHECK((tr.states.back().p - vec({2, 0})).norm() < 1e-8);

  for (double a : {-0.9, -0.3, 0.2, 0.7}) {
    const Vec v = vec({std::sin(a), -std::cos(a)});
    CHECK((sp::geodesic_closed_form(v, 1.0).z - vec({0, std::tan(a / 2)})).norm() < 1e-14);
    auto ray = flow(m, {sp::ybar(2), sp::geodesic_closed_form(v, 0.0).p}, kPi - 0.1, 1e-12);
    double worst = 0.0;
    for (double t = 0; t <= kPi - 0.1; t += 0.05) {
      worst = std::max(worst, (ray.state_at(t).x - sp::geodesic_closed_form(v, t).theta).norm());
    }
    CHECK(worst < 1e-8);
  }
}

TEST_CASE("closed-form gap displayed values") {
  auto g = sp::closed_form_gap(vec({0}), kPi / 4);
  CHECK(g.gap(0, 0) == doctest::Approx(-16 / kPi));
  CHECK(g.gap(1, 1) == doctest::Approx(4.0));
  CHECK(std::abs(g.gap(0, 1)) < 1e-15);
  auto h = sp::closed_form_gap(vec({0}), kPi / 2);
  CHECK(h.gap(0, 0) == doctest::Approx(-8 / kPi));
  CHECK(std::abs(h.gap(1, 1)) < 1e-15);
  CHECK(sp::closed_form_U(vec({0, 0})).norm() == 0.0);
  CHECK_THROWS_AS(sp::closed_form_gap(vec({0}), 0.0), Error);
  for (double z : {-1.0, 0.3}) {
    auto c = sp::closed_form_gap(vec({z, 0.5}), kPi / 2, sp::GapVariant::Corrected);
    CHECK(std::abs(c.gap(1, 1)) < 1e-15);
    CHECK(std::abs(c.gap(2, 2)) < 1e-15);
  }
}

TEST_CASE("initial frames on the equator reproduce U(z)") {
  auto m = sp::round_model(3);
  auto src = sp::equator_source(3);
  for (double a : {-1.0, -0.25, 0.5}) {
    for (double b : {-0.75, 0.0, 1.0}) {
      const Vec z = vec({a, b});
      const auto s = make_sample(m, src, z);
      REQUIRE(s.ok);
      const double w = 1 + z.squaredNorm();
      CHECK((s.p0 - vec({2 / w, 0, 0})).norm() < 1e-12);
      CHECK(s.frame.isotropy < 1e-8);
      auto k = extract_K(s.frame);
      REQUIRE_FALSE(k.degenerate);
      CHECK((k.K - sp::closed_form_U(z)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("vertical-arrival K matches the corrected closed form") {
  auto m = sp::round_model(2);
  auto src = sp::equator_source(2);
  for (double z : {-1.0, 0.0, 0.5}) {
    const auto smp = make_sample(m, src, vec({z}));
    for (double s : {0.1, kPi / 4, 1.3, 2.5, kPi - 0.1}) {
      const auto J = vertical_arrival_frame(m, {smp.x, smp.p0}, s, {1e-12});
      auto k = extract_K(J);
      REQUIRE_FALSE(k.degenerate);
      CHECK(k.asymmetry < 1e-6);
      const auto cf = sp::closed_form_gap(vec({z}), s, sp::GapVariant::Corrected);
      CHECK(rel_residual(k.K, cf.K) < 1e-6);
      const auto disp = sp::closed_form_gap(vec({z}), s, sp::GapVariant::Displayed);
      if (std::abs(s - kPi / 2) > 0.05) CHECK(rel_residual(k.K, disp.K) > 1e-3);
    }
  }
}

TEST_CASE("parallel frame along the crossing geodesic") {
  const Vec z = vec({0.4});
  const Vec v = sp::velocity_for_crossing(z);
  Mat E0 = sp::parallel_frame(z, 0.0);
  CHECK(E0(0, 0) == doctest::Approx(1 / (1 - v[1])));
  CHECK(E0(1, 1) == 1.0);
  double norm0[2];
  for (int i = 0; i < 2; ++i) {
    const Vec th = sp::geodesic_closed_form(v, kPi / 2).theta;
    norm0[i] = sp::metric_factor(th) * E0.col(i).squaredNorm();
  }
  for (double s : {0.3, 1.5, kPi - 0.01}) {
    const Mat E = sp::parallel_frame(z, s);
    CHECK((E.col(0) - sp::parallel_frame_e1(z, s)).norm() < 1e-8);
    const Vec th = sp::geodesic_closed_form(v, s + kPi / 2).theta;
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(sp::metric_factor(th) * E.col(i).squaredNorm() - norm0[i]) < 1e-8);
    }
  }
  // Initial derivative of E_1 against the displayed expression.
  const double ds = 1e-5;
  const Vec d1 = (sp::parallel_frame(z, ds).col(0) - sp::parallel_frame(z, 0).col(0)) / ds;
  CHECK(std::abs(d1[0]) < 1e-4);
  CHECK(d1[1] == doctest::Approx(-v[0] / ((1 - v[1]) * (1 - v[1]))).epsilon(1e-4));
}

TEST_CASE("perturbed model") {
  sp::PerturbationSpec spec;
  spec.eps = 0.0;
  spec.bumps = {{vec({0.3, 0.4}), 0.5, 1.0}};
  auto round = sp::round_model(2);
  auto zero = sp::perturbed_model(spec, 2);
  const Vec y = vec({0.2, -0.6}), p = vec({1.1, 0.3});
  CHECK(zero.H(y, p) == round.H(y, p));
  CHECK(zero.grad_x(y, p) == round.grad_x(y, p));
  CHECK(zero.hess_xx(y, p) == round.hess_xx(y, p));
  CHECK(zero.hess_xp(y, p) == round.hess_xp(y, p));

  spec.eps = 0.05;
  auto m = sp::perturbed_model(spec, 2);
  const double h = 1e-6;
  Mat A(2, 2), B(2, 2);
  for (int j = 0; j < 2; ++j) {
    Vec e = Vec::Unit(2, j) * h;
    A.col(j) = (m.grad_x(y + e, p) - m.grad_x(y - e, p)) / (2 * h);
    B.col(j) = (m.grad_x(y, p + e) - m.grad_x(y, p - e)) / (2 * h);
  }
  CHECK((m.hess_xx(y, p) - A).norm() < 1e-7);
  CHECK((m.hess_xp(y, p) - B).norm() < 1e-7);
  CHECK(validate_model(m, {{y, p}, {vec({0.3, 0.4}), p}}).all_pass());

  spec.c4_bound = 5.0;
  auto c4 = sp::c4_proxy(spec, 2);
  CHECK(c4.value == doctest::Approx(0.05 * 3 / std::pow(0.5, 4)).epsilon(0.05));
  CHECK(c4.value > 0.0);
  CHECK(c4.pass);
}

TEST_CASE("ambient bumps: derivatives and whole-sphere smoothness") {
  sp::PerturbationSpec spec;
  spec.eps = 0.05;
  spec.bumps = {{vec({0.8, 0.3}), 0.6, 1.0, true}, {vec({-0.2, -0.6}), 0.8, -0.7, true}};
  const Vec X1 = sp::unproject(vec({0.8, 0.3})), X2 = sp::unproject(vec({-0.2, -0.6}));
  const double oracle = 1.0 - 0.7 * std::exp(-(X1 - X2).squaredNorm() / (2 * 0.8 * 0.8));
  CHECK(sp::phi_value(spec, vec({0.8, 0.3})) == doctest::Approx(oracle).epsilon(1e-13));
  const double h = 1e-5;
  for (const Vec& y : {vec({0.1, 0.2}), vec({-1.3, 0.7}), vec({4.0, -3.0})}) {
    Vec g(2);
    Mat H(2, 2);
    for (int j = 0; j < 2; ++j) {
      const Vec e = Vec::Unit(2, j) * h;
      g[j] = (sp::phi_value(spec, y + e) - sp::phi_value(spec, y - e)) / (2 * h);
      H.col(j) = (sp::phi_gradient(spec, y + e) - sp::phi_gradient(spec, y - e)) / (2 * h);
    }
    CHECK((sp::phi_gradient(spec, y) - g).norm() < 1e-8);
    CHECK((sp::phi_hessian(spec, y) - H).norm() < 1e-7);
  }
  // Far out in the chart the field tends to its value at the north pole.
  const Vec Xn = sp::unproject(vec({1e6, 0}));
  CHECK(std::abs(sp::phi_value(spec, vec({1e6, 0})) - sp::phi_value(spec, vec({0, 1e6}))) < 1e-5);
  CHECK(Xn[2] > 0.999);
  auto m = sp::perturbed_model(spec, 2);
  CHECK(validate_model(m, {{vec({0.2, -0.6}), vec({1.1, 0.3})}}).all_pass());
}
