#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "loci/loci.hpp"
#include "loci/regularity.hpp"
#include "loci/scenario.hpp"

namespace loci::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitViolation = 2;

/// Shortest round-trip formatting ("%.17g"); "none" for a missing value.
std::string number(double v);
std::string number(const std::optional<double>& v);
/// Quotes a CSV field when it contains a separator, quote or line break.
std::string csv_field(const std::string& s);

/// Provenance carried by every artifact: scenario hash plus tolerance set.
struct Provenance {
  std::string hash;
  nlohmann::json tolerances = nlohmann::json::object();
  static Provenance of(const Scenario& s);
  static Provenance from_artifact(const nlohmann::json& j);
};

/// "# scenario_hash=..." and "# tolerances=..." lines opening every CSV file.
void write_csv_preamble(std::ostream& os, const Provenance& prov);
/// Artifact object with "kind", "scenario_hash" and "tolerances" set.
nlohmann::json artifact(const std::string& kind, const Provenance& prov);

// ---------------------------------------------------------------------------
// Loci tables

nlohmann::json record_to_json(const LociRecord& r);
LociRecord record_from_json(const nlohmann::json& j);
nlohmann::json loci_table_to_json(const LociTable& t, int parameter_dim, const Provenance& prov);
LociTable loci_table_from_json(const nlohmann::json& j);
void write_loci_csv(std::ostream& os, const LociTable& t, int parameter_dim, const Provenance& prov);

// ---------------------------------------------------------------------------
// Subcommand computations

nlohmann::json validation_to_json(const ValidationReport& r);
/// Seeded uniform samples in [-position_radius, position_radius]^n x [-covector_radius, covector_radius]^n.
std::vector<PhasePoint> validation_samples(int n, std::size_t count, double position_radius,
                                           double covector_radius, std::uint64_t seed);
/// Uniform double in [0, 1) from a 64-bit draw (same on every platform).
double unit_uniform(std::uint64_t bits);

struct OracleRow {
  Vec z;
  double s = 0.0;
  double residual_corrected = 0.0;
  double residual_displayed = 0.0;
  double residual_U = 0.0;
};

struct OracleResult {
  std::vector<OracleRow> rows;
  double max_corrected = 0.0;
  double max_displayed = 0.0;
  double max_U = 0.0;
};

/// Numeric K(z, s) (backward linearized flow from the vertical) and U(z) for
/// the equator source of the round sphere versus their closed forms, on a
/// z-grid of [-1, 1]^{n-1} with z_points per axis and s_points values in [s_lo, s_hi].
/// Residuals are max |entry difference| / max(1, max |closed-form entry|).
OracleResult sphere_oracle(int n, int z_points, double s_lo, double s_hi, int s_points, double tol,
                           int workers);

struct RegularityRun {
  std::vector<int> coarse, fine;
  LociTable coarse_table, fine_table;
  std::vector<double> radii;
  std::vector<LipschitzEstimate> lip_coarse, lip_fine;
  double lipschitz_ratio = 0.0;  // max(fine / coarse, coarse / fine) at the largest radius
  double delta = 0.0;
  SemiconcavityEstimate semi_coarse, semi_fine;
  std::optional<double> hessian_bound;
  std::string hessian_note;
  bool violation = false;
  std::vector<std::string> reasons;
};

/// Mesh doubling: cell-centred axes (periodic or offset) N -> 2N, endpoint axes N -> 2N - 1.
std::vector<int> doubled_resolution(const SourceSpec& source, const std::vector<int>& res);
RegularityRun regularity_run(const Scenario& sc, int workers);
nlohmann::json regularity_to_json(const RegularityRun& r, const Provenance& prov);

struct ConvexityRun {
  std::string mode;  // "nonfocal" or "disc"
  BoundaryMesh mesh;
  std::optional<NonfocalDomain> domain;
  ConvexityCertificate certificate;
};

ConvexityRun convexity_run(const Scenario& sc, int workers);
nlohmann::json boundary_to_json(const ConvexityRun& r, const Provenance& prov);

// ---------------------------------------------------------------------------
// Front end

struct Options {
  std::string subcommand;
  std::string scenario;
  std::string out;
  std::string input;   // export
  std::string format;  // export: csv | json
  int workers = 0;
  bool quiet = false;
};

/// Runs one subcommand; artifacts go to opt.out (or the scenario's output
/// directory). Returns the exit code. Configuration errors throw Error.
int run(const Options& opt, std::ostream& log);

/// Full command line including argument parsing and error mapping.
int main_entry(int argc, char** argv);

}  // namespace loci::cli
