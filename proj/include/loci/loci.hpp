#pragma once

#include <functional>
#include <optional>
#include <string>
#include <map>
#include <unordered_map>
#include <vector>

#include "loci/linearized.hpp"
#include "loci/source.hpp"

namespace loci {

struct ConjugateOptions {
  double refine_tol = 1e-9;
  double grid_step = 0.01;     // scan spacing over the dense output
  double singular_tol = 1e-6;  // accepted s_min at a refined interior minimum
  bool dual_detector = true;   // also run the J(x,t) ∩ U(x) detector
  LinearizedOptions linear;
};

struct ConjugateResult {
  std::optional<double> t_conj;
  std::string method;            // "det-sign" or "s_min-minimum"
  double s_min_at_root = 0.0;
  std::optional<double> t_dual;  // J ∩ U detector
  double detector_gap = 0.0;     // |t_conj - t_dual| when both exist
  double gap_eig_at_root = 0.0;  // min |eig(K - U)| just before the root, when both are graphs
  bool escaped = false;
  double searched_to = 0.0;
  std::string error;
};

/// First t in (0, horizon] where the propagated source frame meets the vertical.
ConjugateResult conjugate_time(const HamiltonianModel& model, const SourceSample& sample,
                               double horizon, const ConjugateOptions& opt = {});
/// Same on an already propagated source frame.
ConjugateResult conjugate_time(const HamiltonianModel& model, const SourceSample& sample,
                               const FrameTrajectory& ft, const ConjugateOptions& opt = {});

/// Earliest zero of a scalar criterion sampled on [t0, t1]: a sign change of
/// `sign_fn` (refined by bisection) or an interior minimum of `size_fn`
/// below singular_tol (refined by golden section).
struct RootScan {
  std::optional<double> root;
  std::string method;
  double value_at_root = 0.0;
};
RootScan scan_first_zero(const std::function<double(double)>& size_fn,
                         const std::function<double(double)>& sign_fn, double t0, double t1,
                         double step, double refine_tol, double singular_tol);

// ---------------------------------------------------------------------------
// Value field

struct FieldOptions {
  double capture = 0.01;       // h
  double store_radius = 1e300; // chart radius beyond which samples are not stored
  double band_safety = 2.0;
  double tol = 1e-6;           // additive slack in every comparison
  bool check_overlap = true;
};

struct FieldSample {
  Vec x;
  Vec p;
  Vec velocity;
  double action = 0.0;
  double time = 0.0;
  double lambda_plus = 0.0;  // largest positive eigenvalue of D^2 u of the ray's own branch (inf if unknown)
  std::size_t ray = 0;
};

struct FieldQuery {
  bool covered = false;
  double plain = 0.0;           // min action over samples within h
  double correction = 0.0;      // Lip * h
  double linear = 0.0;          // min over samples of A_j + <p_j, y - x_j>
  double band = 0.0;            // 1/2 d^2 lambda_plus * safety + tol at the linear argmin
  std::size_t argmin_sample = 0;
  std::size_t argmin_ray = 0;
  std::optional<double> second_ray_gap;  // best value from a different ray minus the best value
};

/// Upper bound for the branch of one sample at a query point: linear + band.
struct BranchBound {
  std::size_t sample = 0;
  double linear = 0.0;
  double band = 0.0;
};

class ValueField {
 public:
  ValueField(int n, FieldOptions opt);
  void add(FieldSample s);
  void finalize();

  const FieldOptions& options() const { return opt_; }
  const std::vector<FieldSample>& samples() const { return samples_; }
  double lipschitz() const { return lip_; }
  bool inside(const Vec& y) const { return y.squaredNorm() <= opt_.store_radius * opt_.store_radius; }

  /// Field value at y; exclude_ray skips samples from that ray.
  FieldQuery query(const Vec& y, std::optional<std::size_t> exclude_ray = std::nullopt) const;
  /// Bounds from every sample within h of y. The curvature bound of a branch is
  /// the largest lambda_plus of its ray within h of y; rays that are singular
  /// there are skipped.
  std::vector<BranchBound> bounds(const Vec& y, std::optional<std::size_t> exclude_ray = std::nullopt) const;
  /// Indices of samples within radius r of y.
  std::vector<std::size_t> near(const Vec& y, double r) const;

  double widest_gap = 0.0;  // tube-overlap diagnostic
  std::string widest_gap_between;

 private:
  long long cell_key(const Vec& y) const;
  int n_;
  FieldOptions opt_;
  double lip_ = 0.0;
  std::vector<FieldSample> samples_;
  std::unordered_map<long long, std::vector<std::size_t>> grid_;
};

/// One propagated ray of the family (characteristic plus source frame).
struct Ray {
  SourceSample sample;
  FrameTrajectory frames;
  bool ok = false;
  std::string error;
};

Ray propagate_ray(const HamiltonianModel& model, const SourceSample& sample, double horizon,
                  const LinearizedOptions& opt = {});

/// Stores the family and checks tube overlap between mesh neighbours
/// (`neighbours` lists index pairs adjacent in the parameter mesh).
ValueField build_value_field(const HamiltonianModel& model, const std::vector<Ray>& rays,
                             const std::vector<std::pair<std::size_t, std::size_t>>& neighbours,
                             double horizon, const FieldOptions& opt);

struct CutResult {
  std::optional<double> t_cut;
  std::optional<double> t_raw;  // before clamping by t_conj
  bool clamped = false;
  bool order_violation = false;
  double excess_at_cut = 0.0;
  double band_at_cut = 0.0;
  bool undetermined = false;
  double undetermined_beyond = 0.0;
  std::string note;
};

/// Last time the ray's action agrees with the field (action-band semantics).
CutResult cut_time(const HamiltonianModel& model, const Ray& ray, const ValueField& field,
                   double horizon, std::optional<double> t_conj, double time_tol);

enum class CutClass { SigmaPoint, GammaPoint, Undetermined, None };
std::string to_string(CutClass c);

struct Classification {
  CutClass cls = CutClass::None;
  bool gamma_flag = false;
  std::optional<std::size_t> competitor;
  double competitor_angle = 0.0;
  std::string note;
};

Classification classify_cut_point(const Ray& ray, const CutResult& cut, std::optional<double> t_conj,
                                  const ValueField& field, double angle_tol, double time_tol);

// ---------------------------------------------------------------------------
// Scans

struct LociRecord {
  std::size_t id = 0;
  Vec parameter;
  std::optional<double> t_conj;
  std::optional<double> t_cut;
  std::optional<double> t_cut_raw;
  CutClass cls = CutClass::None;
  bool gamma_flag = false;
  std::optional<std::size_t> competitor;
  double competitor_angle = 0.0;
  std::string conj_method;
  double s_min_at_root = 0.0;
  std::optional<double> t_dual;
  double detector_gap = 0.0;
  double excess_at_cut = 0.0;
  double band_at_cut = 0.0;
  bool clamped = false;
  bool order_violation = false;
  std::string status = "ok";
};

struct ScanOptions {
  double horizon = 3.2;
  bool conjugate = true;
  bool cut = true;
  ConjugateOptions conj;
  FieldOptions field;
  double angle_tol = 1e-2;
  double time_tol = 0.0;  // 0: 10 * refine_tol
  int workers = 0;        // 0: hardware concurrency
};

struct LociTable {
  std::vector<LociRecord> records;
  double widest_gap = 0.0;
  std::string widest_gap_between;
  double lipschitz_u = 0.0;
  std::size_t field_samples = 0;
  double time_tol = 0.0;
  std::size_t violations() const;
};

/// Mesh neighbours of a tensor mesh; periodic axes wrap around.
std::vector<std::pair<std::size_t, std::size_t>> mesh_neighbours(const SourceSpec& source,
                                                                 const std::vector<int>& resolution);

LociTable scan_loci(const HamiltonianModel& model, const SourceSpec& source,
                    const std::vector<int>& resolution, const ScanOptions& opt);

/// Runs fn(i) for i in [0, count) on up to `workers` threads.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);
int resolve_workers(int requested);

}  // namespace loci
