#pragma once

#include <functional>
#include <string>
#include <vector>

#include "loci/frame.hpp"
#include "loci/hamiltonian.hpp"

namespace loci {

enum class SourceKind { Hypersurface, Point };

struct ParameterAxis {
  double lo = 0.0;
  double hi = 1.0;
  bool periodic = false;  // periodic axes drop the duplicated endpoint
  double offset = 0.0;    // > 0: cell-centred samples shifted by this fraction of a step
};

/// Either a parametrized hypersurface patch carrying u = 0, or a point.
struct SourceSpec {
  SourceKind kind = SourceKind::Hypersurface;
  int n = 2;
  std::string label;
  // Hypersurface: chart R^{n-1} -> R^n and optional analytic tangent frame.
  std::function<Vec(const Vec&)> chart;
  std::function<Mat(const Vec&)> tangent;
  int orientation = 1;  // inward side is orientation * (generalized cross product of tangents)
  std::vector<ParameterAxis> box;
  // Point source.
  Vec base;
  // Point sources: the parameter is an angle (n = 2) or (polar, azimuth) (n = 3).
};

SourceSpec hyperplane_source(int n, int axis, double offset, std::vector<ParameterAxis> box,
                             int orientation = 1);
SourceSpec circle_source(const Vec& center, double radius, ParameterAxis box, int orientation);
/// Unit-speed chart of a general chart curve; tangent supplied analytically.
SourceSpec curve_source(std::function<Vec(const Vec&)> chart, std::function<Mat(const Vec&)> tangent,
                        int n, std::vector<ParameterAxis> box, int orientation, std::string label);
SourceSpec point_source(const Vec& base);

/// Tangent frame n x (n-1) (analytic or Richardson central differences of the chart).
Mat tangent_frame(const SourceSpec& source, const Vec& u);
/// Unit normal from the generalized cross product of the tangent columns.
Vec unit_normal(const Mat& tangents);

/// Direction in covector space for a point-source parameter.
Vec point_direction(const Vec& u);

struct SourceSample {
  std::size_t id = 0;
  Vec parameter;
  Vec x;
  Vec p0;
  LagrangianFrame frame;
  bool ok = false;
  std::string error;
};

/// Conormal covector with H(x, p) = level entering the inward side.
Vec boundary_covector(const HamiltonianModel& model, const SourceSpec& source, const Vec& u);
/// Covector lambda * d with H(x, p) = level, lambda > 0.
Vec covector_on_level(const HamiltonianModel& model, const Vec& x, const Vec& d);
/// Initial frame: graph of D^2 u on S (hypersurface) or the vertical space (point).
LagrangianFrame initial_lagrangian(const HamiltonianModel& model, const SourceSpec& source,
                                   const Vec& u);
SourceSample make_sample(const HamiltonianModel& model, const SourceSpec& source, const Vec& u,
                         std::size_t id = 0);

Vec exp_map(const HamiltonianModel& model, const SourceSample& sample, double t, double tol = 1e-11);

/// Sample coordinates along one axis: inclusive endpoints, or cell-centred
/// (lo + (hi - lo)(k + offset)/N) for periodic or offset axes.
std::vector<double> axis_samples(const ParameterAxis& axis, int count);
/// Tensor-grid parameters, row-major over axes, deterministic.
std::vector<Vec> mesh_parameters(const SourceSpec& source, const std::vector<int>& resolution);
std::vector<SourceSample> source_mesh(const HamiltonianModel& model, const SourceSpec& source,
                                      const std::vector<int>& resolution);

}  // namespace loci
