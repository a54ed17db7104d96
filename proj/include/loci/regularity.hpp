#pragma once

#include "json.hpp"

#include <optional>
#include <string>
#include <vector>

#include "loci/loci.hpp"
#include "loci/source.hpp"

namespace loci {

/// Values on a tensor grid of parameter space; NaN marks a missing value.
/// Distances are Euclidean in parameter coordinates, with wrap-around on
/// periodic axes.
struct SampledFunction {
  std::string id;
  std::vector<ParameterAxis> axes;
  std::vector<int> counts;
  std::vector<double> values;  // row-major, last axis fastest

  std::size_t size() const { return values.size(); }
  std::vector<int> index(std::size_t flat) const;
  std::optional<std::size_t> flat(std::vector<int> idx) const;  // wraps periodic axes
  Vec coordinate(std::size_t flat) const;
  /// Coordinate difference b - a along the grid, taking the short way on periodic axes.
  Vec displacement(std::size_t a, std::size_t b) const;
  double spacing(std::size_t axis) const;
};

SampledFunction sampled_from_loci(const LociTable& table, const SourceSpec& source,
                                  const std::vector<int>& resolution, const std::string& which);

struct LipschitzEstimate {
  double radius = 0.0;
  double value = 0.0;
  std::size_t witness_a = 0, witness_b = 0;
  std::size_t pairs = 0;
};

/// max |f(a) - f(b)| / |a - b| over grid pairs with 0 < |a - b| <= radius.
LipschitzEstimate lipschitz_estimate(const SampledFunction& f, double radius);

struct SemiconcavityEstimate {
  double delta = 0.0;
  double C = 0.0;
  bool infinite = false;
  std::size_t witness_x = 0, witness_mid = 0, witness_y = 0;
  double witness_mu = 0.5;
  std::size_t triples = 0;
  std::vector<std::pair<double, double>> by_scale;  // (|x - y|, max required C at that scale)
  double slope = 0.0;  // log-log slope over the three smallest scales
};

/// Smallest C with mu f(x) + (1 - mu) f(y) - f(mu x + (1 - mu) y) <= mu (1 - mu) C |x - y|^2
/// over grid-aligned triples inside a delta-ball, mu in {1/4, 1/2, 3/4}.
SemiconcavityEstimate semiconcavity_estimate(const SampledFunction& f, double delta);

/// Max absolute second difference quotient along mesh axes of a function on
/// the direction circle (n = 2: one periodic angle) or sphere (polar, azimuth).
double hessian_bound_estimate(const SampledFunction& f);

// ---------------------------------------------------------------------------

struct NonfocalDomain {
  int n = 2;
  std::vector<Vec> directions;  // mesh parameters
  std::vector<double> t_conj;
  std::vector<Vec> boundary;    // t_conj(v) * Q^{1/2} p0 in orthonormal tangent coordinates
  std::vector<int> counts;
  double radius_min = 0.0, radius_max = 0.0;
};

NonfocalDomain nonfocal_domain(const HamiltonianModel& model, const SourceSpec& point,
                               const std::vector<int>& resolution, double horizon,
                               const ConjugateOptions& opt, int workers = 0);

/// Closed boundary of a compact set: vertices plus simplices (segments for
/// n = 2, triangles for n = 3), star-shaped about `center`.
struct BoundaryMesh {
  int n = 2;
  std::vector<Vec> points;
  std::vector<std::vector<std::size_t>> simplices;
  Vec center;
  double spacing = 0.0;  // longest edge
  // Bounding sphere per simplex, used to prune distance and ray queries.
  std::vector<Vec> bound_center;
  std::vector<double> bound_radius;

  void finalize();
};

BoundaryMesh closed_polyline(std::vector<Vec> points, const Vec& center);
/// Triangulated surface from a (polar, azimuth) grid with polar samples away
/// from the poles; the caps are closed by fans to the axis points.
BoundaryMesh sphere_grid_surface(const std::vector<Vec>& points, int n_polar, int n_azimuth,
                                 const Vec& north, const Vec& south, const Vec& center);
BoundaryMesh boundary_from_nonfocal(const NonfocalDomain& d);

/// Signed distance from p to the boundary: positive inside.
double signed_boundary_distance(const BoundaryMesh& b, const Vec& p);

struct ConvexityCertificate {
  double kappa_min = 0.0;
  double kappa_chord = 0.0;
  double kappa_chord_error = 0.0;  // bound on the sampling error in kappa_chord
  double kappa_ball = 0.0;
  bool pass = false;
  std::size_t chord_a = 0, chord_b = 0;
  double chord_lambda = 0.5;
  std::size_t ball_at = 0;
  std::size_t pairs = 0;
  std::size_t samples = 0;
  double spacing = 0.0;
  double delta = 0.0;
  std::string failure;
};

struct ConvexityOptions {
  double kappa_min = 0.0;
  double min_chord_spacings = 8.0;  // chords shorter than this many spacings are skipped
  double delta = 0.0;               // ball-criterion neighbourhood; 0 = 4 spacings
};

/// Throws Error when the boundary is not star-shaped about its center.
ConvexityCertificate uniform_convexity(const BoundaryMesh& b, const ConvexityOptions& opt);
void check_star_shaped(const BoundaryMesh& b);

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LipschitzEstimate& e);
nlohmann::json to_json(const SemiconcavityEstimate& e);
nlohmann::json to_json(const ConvexityCertificate& c);

}  // namespace loci
