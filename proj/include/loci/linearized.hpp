#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "loci/frame.hpp"
#include "loci/hamiltonian.hpp"
#include "loci/ode.hpp"

namespace loci {

struct LinearizedOptions {
  double tol = 1e-11;
  double max_step = 0.1;
  bool reorthonormalize = false;  // QR on the frame at every checkpoint
  double checkpoint = 0.5;
  double svd_tol = 1e-9;
};

/// Characteristic and a family of linearized solutions integrated together.
/// State layout: [x, p, action, column_0, ..., column_{k-1}], each column (h, v).
struct FrameTrajectory {
  int n = 0;
  int k = 0;
  std::vector<double> times;
  std::vector<Mat> frames;        // 2n x k at each accepted step
  std::vector<double> s_min;      // smallest singular value of the orthonormalized Hblock
  double max_isotropy = 0.0;      // max over stored frames (meaningful for isotropic frames)
  double isotropy_drift = 0.0;    // max change of the sigma Gram matrix from t = 0
  ode::DenseOutput dense;
  bool truncated = false;
  double last_valid_time = 0.0;
  std::string diagnostic;
  LinearizedOptions options;

  double t_end() const { return times.back(); }
  PhasePoint state_at(double t) const;
  Mat columns_at(double t) const;
  LagrangianFrame frame_at(double t) const { return LagrangianFrame(columns_at(t)); }
};

/// Integrates (sysH) together with the linearized system
///   h' = B^T h + Q v,  v' = -A h - B v
/// for every column of frame0, from `start` over [0, t_end].
FrameTrajectory propagate(const HamiltonianModel& model, const PhasePoint& start, const Mat& frame0,
                          double t_end, const LinearizedOptions& opt = {});

/// Same, with the characteristic given by a trajectory from flow (its start and end time).
FrameTrajectory linearized_flow(const HamiltonianModel& model, const Trajectory& traj,
                                const LagrangianFrame& frame0, const LinearizedOptions& opt = {});

/// Fundamental matrix R(t): propagation of the identity frame.
Mat fundamental_matrix(const HamiltonianModel& model, const PhasePoint& start, double t,
                       const LinearizedOptions& opt = {});

struct KResult {
  bool degenerate = false;  // Hblock numerically singular (frame meets the vertical)
  Mat K;
  double asymmetry = 0.0;
  double s_min = 0.0;
  double threshold = 0.0;
};

/// K = Vblock * Hblock^{-1}, symmetrized, when Hblock is invertible.
KResult extract_K(const LagrangianFrame& frame, double svd_tol = 1e-9);

/// Frame at time 0 whose image at time t is the vertical space (backward
/// integration of the linearized system from (0; I) at time t).
LagrangianFrame vertical_arrival_frame(const HamiltonianModel& model, const PhasePoint& start,
                                       double t, const LinearizedOptions& opt = {});

/// Smallest singular value of the Hblock of an orthonormal basis of the frame span.
double frame_s_min(const Mat& columns);

/// CSV trace: t, s_min, det_sign, K entries (row-major) or empty when degenerate.
void write_trace_csv(std::ostream& os, const FrameTrajectory& ft, const std::vector<double>& grid);

}  // namespace loci
