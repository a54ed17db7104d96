#include "loci/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "loci/polynomial.hpp"

namespace loci {

namespace {

Vec to_vec(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw Error(what + " must be an array of numbers");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ParameterAxis parse_axis(const nlohmann::json& j) {
  ParameterAxis a;
  a.lo = j.at("lo").get<double>();
  a.hi = j.at("hi").get<double>();
  a.periodic = j.value("periodic", false);
  a.offset = j.value("offset", 0.0);
  if (!(a.hi > a.lo)) throw Error("source box: hi must exceed lo");
  if (a.offset < 0.0 || a.offset >= 1.0) throw Error("source box: offset must lie in [0, 1)");
  return a;
}

std::vector<ParameterAxis> parse_box(const nlohmann::json& j) {
  std::vector<ParameterAxis> box;
  if (j.is_object()) {
    box.push_back(parse_axis(j));
  } else {
    for (const auto& a : j) box.push_back(parse_axis(a));
  }
  return box;
}

double positive(const nlohmann::json& j, const char* key, double fallback) {
  const double v = j.value(key, fallback);
  if (!(v > 0.0)) throw Error(std::string("tolerances.") + key + " must be positive");
  return v;
}

}  // namespace

std::string fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int Scenario::dimension() const { return model.at("dimension").get<int>(); }

const nlohmann::json& Scenario::section(const std::string& key) const {
  static const nlohmann::json empty = nlohmann::json::object();
  return raw.contains(key) ? raw.at(key) : empty;
}

nlohmann::json Scenario::tolerance_json() const {
  return {{"integration", tol.integration}, {"refine", tol.refine},   {"singular", tol.singular},
          {"svd", tol.svd},                 {"angle", tol.angle},     {"time", tol.time},
          {"capture", tol.capture},         {"field", tol.field},     {"band_safety", tol.band_safety},
          {"grid_step", tol.grid_step}};
}

ScanOptions Scenario::scan_options(int workers) const {
  ScanOptions o;
  o.horizon = horizon;
  o.conj.refine_tol = tol.refine;
  o.conj.grid_step = tol.grid_step;
  o.conj.singular_tol = tol.singular;
  o.conj.linear.tol = tol.integration;
  o.conj.linear.svd_tol = tol.svd;
  o.field.capture = tol.capture;
  o.field.tol = tol.field;
  o.field.band_safety = tol.band_safety;
  o.field.store_radius = store_radius;
  o.angle_tol = tol.angle;
  o.time_tol = tol.time;
  o.workers = workers;
  return o;
}

Scenario parse_scenario(const nlohmann::json& j, std::filesystem::path base_dir) {
  if (!j.is_object()) throw Error("scenario must be a JSON object");
  static const std::set<std::string> known = {
      "schema", "version", "name", "description", "model", "source", "resolution", "horizon",
      "tolerances", "field", "output", "seed", "trace", "validate", "sphere_verify",
      "regularity", "convexity"};
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw Error("scenario: unknown key '" + k + "'");
  }
  if (j.value("schema", std::string("loci-lab/scenario")) != "loci-lab/scenario") {
    throw Error("scenario: schema must be 'loci-lab/scenario'");
  }
  const int version = j.value("version", kScenarioVersion);
  if (version != kScenarioVersion) {
    throw Error("scenario: unsupported version " + std::to_string(version));
  }
  Scenario s;
  s.raw = j;
  s.base_dir = std::move(base_dir);
  s.hash = fnv1a64(j.dump());
  s.name = j.value("name", std::string("scenario"));
  s.model = j.at("model");
  if (!s.model.contains("dimension")) throw Error("scenario: model.dimension is required");
  s.source = j.at("source");
  s.resolution = j.at("resolution").get<std::vector<int>>();
  for (int r : s.resolution) {
    if (r < 2) throw Error("scenario: resolution entries must be at least 2");
  }
  s.horizon = j.at("horizon").get<double>();
  if (!(s.horizon > 0.0)) throw Error("scenario: horizon must be positive");
  const auto& t = j.contains("tolerances") ? j.at("tolerances") : nlohmann::json::object();
  Tolerances d;
  s.tol.integration = positive(t, "integration", d.integration);
  s.tol.refine = positive(t, "refine", d.refine);
  s.tol.singular = positive(t, "singular", d.singular);
  s.tol.svd = positive(t, "svd", d.svd);
  s.tol.angle = positive(t, "angle", d.angle);
  s.tol.time = positive(t, "time", 10 * s.tol.refine);
  s.tol.capture = positive(t, "capture", d.capture);
  s.tol.field = positive(t, "field", d.field);
  s.tol.band_safety = positive(t, "band_safety", d.band_safety);
  s.tol.grid_step = positive(t, "grid_step", d.grid_step);
  if (j.contains("field")) s.store_radius = positive(j.at("field"), "store_radius", 1e300);
  s.output = j.value("output", "out/" + s.name);
  s.seed = j.value("seed", std::uint64_t{1});
  // Fail early on model and source errors.
  const auto model = build_model(s.model, s.base_dir);
  const auto src = build_source(s.source, model.dim());
  if (s.resolution.size() != src.box.size()) {
    throw Error("scenario: resolution needs " + std::to_string(src.box.size()) + " entries for this source");
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open scenario file '" + file.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("scenario '" + file.string() + "' is not valid JSON: " + e.what());
  }
  return parse_scenario(j, file.parent_path());
}

HamiltonianModel build_model(const nlohmann::json& m, const std::filesystem::path& base_dir) {
  const std::string name = m.value("name", std::string());
  const int n = m.at("dimension").get<int>();
  if (n < 1) throw Error("model: dimension must be positive");
  try {
    if (name == "euclidean-eikonal") return euclidean_eikonal(n);
    if (name == "sphere-chart") return sphere::round_model(n, m.value("guard_radius", 1e4));
    if (name == "sphere-chart-perturbed") {
      const auto spec = sphere::parse_perturbation(m.at("perturbation"), n);
      const auto c4 = sphere::c4_proxy(spec, n);
      if (!c4.pass) {
        std::ostringstream os;
        os << "model: perturbation C4 proxy " << c4.value << " exceeds declared bound " << spec.c4_bound;
        throw Error(os.str());
      }
      return sphere::perturbed_model(spec, n, m.value("guard_radius", 1e4));
    }
    if (name == "polynomial") {
      nlohmann::json table;
      if (m.contains("file")) {
        const auto path = base_dir / m.at("file").get<std::string>();
        std::ifstream in(path);
        if (!in) throw Error("model: cannot open coefficient file '" + path.string() + "'");
        in >> table;
      } else {
        table = m.at("coefficients");
      }
      const auto spec = parse_polynomial(table);
      if (spec.dimension != n) throw Error("model: coefficient table dimension differs from model.dimension");
      return polynomial_model(spec, m.value("label", std::string("polynomial")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model: ") + e.what());
  }
  throw Error("model: unknown catalog name '" + name + "'");
}

SourceSpec build_source(const nlohmann::json& s, int n) {
  const std::string kind = s.value("kind", std::string());
  try {
    if (kind == "hyperplane") {
      return hyperplane_source(n, s.value("axis", 0), s.value("offset", 0.0), parse_box(s.at("box")),
                               s.value("orientation", 1));
    }
    if (kind == "circle") {
      ParameterAxis box{0.0, 2 * std::numbers::pi, true, 0.0};
      if (s.contains("box")) box = parse_axis(s.at("box"));
      return circle_source(to_vec(s.at("center"), "source.center"), s.at("radius").get<double>(), box,
                           s.value("orientation", 1));
    }
    if (kind == "point") {
      Vec base = sphere::ybar(n);
      if (s.contains("base") && !(s.at("base").is_string() && s.at("base") == "ybar")) {
        base = to_vec(s.at("base"), "source.base");
      }
      if (base.size() != n) throw Error("source: base has the wrong dimension");
      return point_source(base);
    }
    if (kind == "equator") return sphere::equator_source(n, s.value("half_width", 1.0));
    if (kind == "equator-angle") {
      if (n != 2) throw Error("source: equator-angle is planar (n = 2)");
      return sphere::equator_angle_source(s.at("phi_max").get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("source: ") + e.what());
  }
  throw Error("source: unknown kind '" + kind + "'");
}

bool is_round_sphere(const Scenario& s) { return s.model.value("name", std::string()) == "sphere-chart"; }

}  // namespace loci
