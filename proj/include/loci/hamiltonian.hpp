#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "loci/ode.hpp"
#include "loci/types.hpp"

namespace loci {

enum class DerivativeSource { Analytic, FiniteDifference };

struct PhasePoint {
  Vec x;
  Vec p;
};

/// A Hamiltonian H(x, p) on R^n x R^n together with the level c on which
/// characteristics live (0 for the Dirichlet problem, 1/2 for eikonal mode).
///
/// Second derivatives are optional; when absent they are synthesized by
/// central differences of the supplied gradients. Evaluators must be safe for
/// concurrent read-only use.
class HamiltonianModel {
 public:
  using ScalarFn = std::function<double(const Vec&, const Vec&)>;
  using VectorFn = std::function<Vec(const Vec&, const Vec&)>;
  using MatrixFn = std::function<Mat(const Vec&, const Vec&)>;
  using RegionFn = std::function<bool(const Vec&)>;

  struct Evaluators {
    ScalarFn H;
    VectorFn grad_x;
    VectorFn grad_p;
    MatrixFn hess_xx;  // A
    MatrixFn hess_xp;  // B, B(i,j) = d2H / dx_i dp_j
    MatrixFn hess_pp;  // Q
  };

  HamiltonianModel(std::string name, int n, double level, Evaluators ev);

  const std::string& name() const { return name_; }
  int dim() const { return n_; }
  double level() const { return level_; }
  DerivativeSource second_derivative_source() const { return second_source_; }

  /// Smoothness class is user-declared metadata; it cannot be verified.
  const std::string& declared_smoothness() const { return smoothness_; }
  void set_declared_smoothness(std::string s) { smoothness_ = std::move(s); }

  /// Optional chart-domain predicate on positions (e.g. pole exclusion).
  void set_region(RegionFn region, std::string description);
  bool in_region(const Vec& x) const { return !region_ || region_(x); }
  const std::string& region_description() const { return region_desc_; }
  bool has_region() const { return static_cast<bool>(region_); }

  double H(const Vec& x, const Vec& p) const { return ev_.H(x, p); }
  Vec grad_x(const Vec& x, const Vec& p) const { return ev_.grad_x(x, p); }
  Vec grad_p(const Vec& x, const Vec& p) const { return ev_.grad_p(x, p); }
  Mat hess_xx(const Vec& x, const Vec& p) const;
  Mat hess_xp(const Vec& x, const Vec& p) const;
  Mat hess_pp(const Vec& x, const Vec& p) const;

  /// Legendre integrand of the shifted Hamiltonian H - level along a
  /// characteristic: <p, dH/dp> - H + level.
  double lagrangian_along(const Vec& x, const Vec& p) const;

 private:
  std::string name_;
  int n_;
  double level_;
  Evaluators ev_;
  DerivativeSource second_source_;
  std::string smoothness_ = "C^{2,1} (declared)";
  RegionFn region_;
  std::string region_desc_;
};

// ---------------------------------------------------------------------------
// Model validation

struct HypothesisCheck {
  std::string id;  // "H1", "H2", "H3", "gradients"
  bool pass = true;
  double worst = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::string model;
  std::size_t samples = 0;
  std::vector<HypothesisCheck> checks;
  std::vector<std::string> failures;  // evaluator failures, per sample
  double min_eig_Q = 0.0;
  double h1_C_K1 = 0.0;
  double h1_C_K10 = 0.0;
  std::string second_derivatives;

  bool passed(const std::string& id) const;
  bool all_pass() const;
};

/// Checks (H1) as a sampled proxy, (H2) and (H3) pointwise, plus consistency
/// of the supplied gradients with central differences of H.
ValidationReport validate_model(const HamiltonianModel& model,
                                const std::vector<PhasePoint>& samples);

// ---------------------------------------------------------------------------
// Characteristics

enum class Interpolation { Hermite3, Continuous4 };

struct Trajectory {
  int n = 0;
  double level = 0.0;
  std::vector<double> times;
  std::vector<PhasePoint> states;
  std::vector<double> actions;
  std::vector<Vec> rates;  // d/dt of [x, p, action] at each stored time
  ode::DenseOutput dense;  // over [x, p, action]
  bool escaped = false;
  double last_valid_time = 0.0;
  std::string escape_reason;
  double max_energy_drift = 0.0;  // max |H(t) - H(0)| over stored states

  double t_end() const { return times.back(); }
  PhasePoint state_at(double t, Interpolation order = Interpolation::Continuous4) const;
  double action_at(double t) const;
};

struct FlowOptions {
  double max_step = 0.25;
  double overflow = 1e10;
};

/// Adaptive integration of the characteristic system with cumulative action.
/// Blow-up or leaving the model region marks the trajectory as escaped.
Trajectory flow(const HamiltonianModel& model, const PhasePoint& start, double t_end, double tol,
                const FlowOptions& opt = {});

/// Throws EscapedError when the trajectory did not reach its requested end.
void require_complete(const Trajectory& traj, double t_requested);

struct CoefficientMatrices {
  Mat A;
  Mat B;
  Mat Q;
  double symmetry_residual = 0.0;
};

CoefficientMatrices coeff_matrices(const HamiltonianModel& model, const PhasePoint& at);

struct LegendreResult {
  double value = 0.0;
  Vec p_star;
  double residual = 0.0;
  int iterations = 0;
};

class LegendreError : public Error {
 public:
  LegendreError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// L(x, v) = max_p <p, v> - H(x, p), solved by damped Newton on dH/dp = v.
LegendreResult legendre(const HamiltonianModel& model, const Vec& x, const Vec& v,
                        int max_iter = 100);

/// Action of a trajectory by Gauss-Legendre quadrature over its dense output.
double action(const HamiltonianModel& model, const Trajectory& traj);

// ---------------------------------------------------------------------------
// Simple built-in models

/// H = 1/2 <P p, p> + offset (constant coefficients).
HamiltonianModel quadratic_model(const Mat& P, double offset, double level,
                                 std::string name = "quadratic");
/// H = 1/2 |p|^2 on the 1/2 level.
HamiltonianModel euclidean_eikonal(int n);
/// H = <c, p> + offset; violates strict convexity.
HamiltonianModel linear_model(const Vec& c, double offset, double level);

}  // namespace loci
