#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "loci/hamiltonian.hpp"
#include "loci/loci.hpp"
#include "loci/source.hpp"
#include "loci/sphere.hpp"

namespace loci {

inline constexpr int kScenarioVersion = 1;

struct Tolerances {
  double integration = 1e-11;  // linearized-flow local tolerance
  double refine = 1e-9;        // conjugate-time bracket width
  double singular = 1e-6;      // s_min acceptance for touching roots
  double svd = 1e-9;           // K extraction degeneracy threshold
  double angle = 1e-2;         // classification angle_tol (radians)
  double time = 0.0;           // classification time_tol; 0 = 10 * refine
  double capture = 0.05;       // value-field capture radius h
  double field = 1e-6;         // additive slack in action comparisons
  double band_safety = 2.0;
  double grid_step = 0.01;     // conjugate scan grid
};

/// Parsed scenario. `raw` is the file content; the hash is taken over its
/// canonical serialization (sorted keys, no whitespace).
struct Scenario {
  nlohmann::json raw;
  std::string name;
  std::string hash;
  std::filesystem::path base_dir;

  nlohmann::json model;
  nlohmann::json source;
  std::vector<int> resolution;
  double horizon = 0.0;
  Tolerances tol;
  double store_radius = 1e300;
  std::string output;
  std::uint64_t seed = 1;

  int dimension() const;
  ScanOptions scan_options(int workers) const;
  nlohmann::json tolerance_json() const;
  const nlohmann::json& section(const std::string& key) const;  // empty object when absent
};

/// 64-bit FNV-1a of a byte string, as 16 lower-case hex digits.
std::string fnv1a64(const std::string& bytes);

Scenario parse_scenario(const nlohmann::json& j, std::filesystem::path base_dir = {});
Scenario load_scenario(const std::filesystem::path& file);

/// Model from a catalog name ("euclidean-eikonal", "sphere-chart",
/// "sphere-chart-perturbed") or a polynomial coefficient table.
HamiltonianModel build_model(const nlohmann::json& model, const std::filesystem::path& base_dir = {});
SourceSpec build_source(const nlohmann::json& source, int n);

/// True when the scenario's model is the unperturbed sphere chart.
bool is_round_sphere(const Scenario& s);

}  // namespace loci
