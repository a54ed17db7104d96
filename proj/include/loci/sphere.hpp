#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "loci/hamiltonian.hpp"
#include "loci/source.hpp"

namespace loci::sphere {

/// sigma(X) = x / (1 - lambda) for X = (x, lambda) on the unit sphere minus the north pole.
Vec project(const Vec& X);
/// sigma^{-1}(y) = (2y / (1+|y|^2), (|y|^2-1) / (1+|y|^2)).
Vec unproject(const Vec& y);

/// Conformal factor of the chart metric: g_y(v, v) = 4 |v|^2 / (1+|y|^2)^2.
double metric_factor(const Vec& y);

/// H(y, p) = (1+|y|^2)^2 |p|^2 / 8 on the 1/2 level. Positions with
/// |y| > guard_radius are outside the model region (north pole neighbourhood).
HamiltonianModel round_model(int n, double guard_radius = 1e4);

struct GeodesicPoint {
  Vec theta;  // chart position
  Vec p;      // covector
  Vec z;      // theta(pi/2), the crossing with {y_1 = 0}
};

/// Closed-form geodesic from ybar = (-1, 0, ..., 0) with sphere velocity V = (0, v),
/// |v| = 1 (v_n is the component along the sphere's axis).
GeodesicPoint geodesic_closed_form(const Vec& v, double t);
/// d theta_V / dt.
Vec geodesic_velocity(const Vec& v, double t);
/// Inverse of z^V: v with z^V = (0, z) for a parameter z of {y_1 = 0}.
Vec velocity_for_crossing(const Vec& z);

enum class GapVariant {
  Displayed,  // transverse entries exactly as printed: gap_ii = +4 cot(s) / w^2
  Corrected,  // transverse entries from the Jacobi-field derivation: gap_ii = -4 cot(s) / w^2
};

struct GapMatrices {
  Mat K;
  Mat U;
  Mat gap;
};

/// K(z, s), U(z) and K - U for the source {y_1 = 0}; z holds (z_2, ..., z_n).
GapMatrices closed_form_gap(const Vec& z, double s, GapVariant variant = GapVariant::Displayed);
Mat closed_form_U(const Vec& z);

/// Parallel frame E_1..E_n (columns) along s -> theta_V(s + pi/2), V = velocity_for_crossing(z),
/// transported numerically with the conformal connection.
Mat parallel_frame(const Vec& z, double s, double tol = 1e-12);
/// Closed-form comparison value for E_1: theta_V'(s + pi/2).
Vec parallel_frame_e1(const Vec& z, double s);

/// Source {y_1 = 0} parametrized by (z_2, ..., z_n).
SourceSpec equator_source(int n, double half_width = 1.0);
/// Whole great circle {y_1 = 0} in n = 2 by the angle phi from the south
/// pole: z = tan(phi / 2), phi in [-phi_max, phi_max].
SourceSpec equator_angle_source(double phi_max);
/// ybar = (-1, 0, ..., 0).
Vec ybar(int n);

// ---------------------------------------------------------------------------
// Conformal perturbations

struct Bump {
  Vec center;
  double width = 1.0;
  double amplitude = 1.0;
  bool ambient = false;  // Gaussian in the embedding R^{n+1} instead of in the chart
};

/// g_eps = exp(2 eps phi) g_round with phi = sum of Gaussian bumps.
struct PerturbationSpec {
  double eps = 0.0;
  std::vector<Bump> bumps;
  double c4_bound = 1.0;        // declared bound on eps * max |D^k phi|, k <= 4
  double region_radius = 3.0;   // box [-r, r]^n where the bound is checked
};

PerturbationSpec parse_perturbation(const nlohmann::json& j, int n);
nlohmann::json to_json(const PerturbationSpec& spec);

double phi_value(const PerturbationSpec& spec, const Vec& y);
Vec phi_gradient(const PerturbationSpec& spec, const Vec& y);
Mat phi_hessian(const PerturbationSpec& spec, const Vec& y);

struct C4Check {
  double value = 0.0;  // eps * max over the grid and orders 1..4 of finite-difference norms
  bool pass = false;
};
C4Check c4_proxy(const PerturbationSpec& spec, int n, int grid = 21);

/// H_eps(y, p) = exp(-2 eps phi(y)) H_round(y, p), level 1/2.
HamiltonianModel perturbed_model(const PerturbationSpec& spec, int n, double guard_radius = 1e4);

}  // namespace loci::sphere
