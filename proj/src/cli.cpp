#include "loci/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "loci/linearized.hpp"
#include "loci/sphere.hpp"

namespace loci::cli {

namespace fs = std::filesystem;

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string number(const std::optional<double>& v) { return v ? number(*v) : "none"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

Provenance Provenance::of(const Scenario& s) { return {s.hash, s.tolerance_json()}; }

Provenance Provenance::from_artifact(const nlohmann::json& j) {
  Provenance p;
  p.hash = j.value("scenario_hash", std::string());
  if (j.contains("tolerances")) p.tolerances = j.at("tolerances");
  return p;
}

void write_csv_preamble(std::ostream& os, const Provenance& prov) {
  os << "# scenario_hash=" << prov.hash << "\n";
  os << "# tolerances=" << prov.tolerances.dump() << "\n";
}

nlohmann::json artifact(const std::string& kind, const Provenance& prov) {
  return {{"kind", kind}, {"scenario_hash", prov.hash}, {"tolerances", prov.tolerances}};
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

// JSON has no inf/nan; they are written as null and read back as nan.
double num(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

CutClass class_from_string(const std::string& s) {
  for (CutClass c : {CutClass::SigmaPoint, CutClass::GammaPoint, CutClass::Undetermined, CutClass::None}) {
    if (to_string(c) == s) return c;
  }
  throw Error("unknown cut class '" + s + "'");
}

std::vector<double> linspace(double a, double b, int count) {
  std::vector<double> v(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<std::size_t>(i)] = count == 1 ? a : a + (b - a) * i / (count - 1);
  return v;
}

double rel_residual(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json record_to_json(const LociRecord& r) {
  return {{"id", r.id},
          {"parameter", vec_json(r.parameter)},
          {"t_conj", opt_json(r.t_conj)},
          {"t_cut", opt_json(r.t_cut)},
          {"t_cut_raw", opt_json(r.t_cut_raw)},
          {"class", to_string(r.cls)},
          {"gamma_flag", r.gamma_flag},
          {"competitor", r.competitor ? nlohmann::json(*r.competitor) : nlohmann::json()},
          {"competitor_angle", r.competitor_angle},
          {"conj_method", r.conj_method},
          {"s_min_at_root", r.s_min_at_root},
          {"t_dual", opt_json(r.t_dual)},
          {"detector_gap", r.detector_gap},
          {"excess_at_cut", r.excess_at_cut},
          {"band_at_cut", r.band_at_cut},
          {"clamped", r.clamped},
          {"order_violation", r.order_violation},
          {"status", r.status}};
}

LociRecord record_from_json(const nlohmann::json& j) {
  LociRecord r;
  r.id = j.at("id").get<std::size_t>();
  r.parameter = json_vec(j.at("parameter"));
  r.t_conj = opt_double(j, "t_conj");
  r.t_cut = opt_double(j, "t_cut");
  r.t_cut_raw = opt_double(j, "t_cut_raw");
  r.cls = class_from_string(j.at("class").get<std::string>());
  r.gamma_flag = j.at("gamma_flag").get<bool>();
  if (!j.at("competitor").is_null()) r.competitor = j.at("competitor").get<std::size_t>();
  r.competitor_angle = num(j, "competitor_angle");
  r.conj_method = j.at("conj_method").get<std::string>();
  r.s_min_at_root = num(j, "s_min_at_root");
  r.t_dual = opt_double(j, "t_dual");
  r.detector_gap = num(j, "detector_gap");
  r.excess_at_cut = num(j, "excess_at_cut");
  r.band_at_cut = num(j, "band_at_cut");
  r.clamped = j.at("clamped").get<bool>();
  r.order_violation = j.at("order_violation").get<bool>();
  r.status = j.at("status").get<std::string>();
  return r;
}

nlohmann::json loci_table_to_json(const LociTable& t, int parameter_dim, const Provenance& prov) {
  auto j = artifact("loci-table", prov);
  std::map<std::string, std::size_t> classes;
  std::size_t conj = 0, cut = 0;
  for (const auto& r : t.records) {
    ++classes[to_string(r.cls)];
    conj += r.t_conj.has_value();
    cut += r.t_cut.has_value();
  }
  j["parameter_dim"] = parameter_dim;
  j["summary"] = {{"rows", t.records.size()},
                  {"with_t_conj", conj},
                  {"with_t_cut", cut},
                  {"classes", classes},
                  {"order_violations", t.violations()},
                  {"time_tol", t.time_tol},
                  {"widest_gap", t.widest_gap},
                  {"widest_gap_between", t.widest_gap_between},
                  {"lipschitz_u", t.lipschitz_u},
                  {"field_samples", t.field_samples}};
  auto rows = nlohmann::json::array();
  for (const auto& r : t.records) rows.push_back(record_to_json(r));
  j["records"] = std::move(rows);
  return j;
}

LociTable loci_table_from_json(const nlohmann::json& j) {
  if (j.value("kind", std::string()) != "loci-table") throw Error("input is not a loci table");
  LociTable t;
  const auto& s = j.at("summary");
  t.time_tol = num(s, "time_tol");
  t.widest_gap = num(s, "widest_gap");
  t.widest_gap_between = s.at("widest_gap_between").get<std::string>();
  t.lipschitz_u = num(s, "lipschitz_u");
  t.field_samples = s.at("field_samples").get<std::size_t>();
  for (const auto& r : j.at("records")) t.records.push_back(record_from_json(r));
  return t;
}

void write_loci_csv(std::ostream& os, const LociTable& t, int parameter_dim, const Provenance& prov) {
  write_csv_preamble(os, prov);
  os << "id";
  for (int k = 0; k < parameter_dim; ++k) os << ",param_" << k;
  os << ",t_conj,t_cut,t_cut_raw,class,gamma_flag,competitor,competitor_angle,conj_method,"
        "s_min_at_root,t_dual,detector_gap,excess_at_cut,band_at_cut,clamped,order_violation,status\n";
  for (const auto& r : t.records) {
    os << r.id;
    for (Eigen::Index k = 0; k < r.parameter.size(); ++k) os << ',' << number(r.parameter[k]);
    os << ',' << number(r.t_conj) << ',' << number(r.t_cut) << ',' << number(r.t_cut_raw) << ','
       << to_string(r.cls) << ',' << (r.gamma_flag ? 1 : 0) << ','
       << (r.competitor ? std::to_string(*r.competitor) : "none") << ',' << number(r.competitor_angle) << ','
       << csv_field(r.conj_method.empty() ? "none" : r.conj_method) << ',' << number(r.s_min_at_root) << ','
       << number(r.t_dual) << ',' << number(r.detector_gap) << ',' << number(r.excess_at_cut) << ','
       << number(r.band_at_cut) << ',' << (r.clamped ? 1 : 0) << ',' << (r.order_violation ? 1 : 0) << ','
       << csv_field(r.status) << '\n';
  }
}

// ---------------------------------------------------------------------------

nlohmann::json validation_to_json(const ValidationReport& r) {
  auto checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"id", c.id}, {"pass", c.pass}, {"worst", c.worst}, {"detail", c.detail}});
  }
  return {{"model", r.model},
          {"samples", r.samples},
          {"second_derivatives", r.second_derivatives},
          {"min_eig_Q", r.min_eig_Q},
          {"h1_proxy_C_for_K1", r.h1_C_K1},
          {"h1_proxy_C_for_K10", r.h1_C_K10},
          {"all_pass", r.all_pass()},
          {"checks", checks},
          {"evaluator_failures", r.failures}};
}

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

std::vector<PhasePoint> validation_samples(int n, std::size_t count, double position_radius,
                                           double covector_radius, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PhasePoint> out(count);
  for (auto& s : out) {
    s.x.resize(n);
    s.p.resize(n);
    for (int i = 0; i < n; ++i) s.x[i] = position_radius * (2 * unit_uniform(rng()) - 1);
    for (int i = 0; i < n; ++i) s.p[i] = covector_radius * (2 * unit_uniform(rng()) - 1);
  }
  return out;
}

OracleResult sphere_oracle(int n, int z_points, double s_lo, double s_hi, int s_points, double tol,
                           int workers) {
  if (n < 2) throw Error("sphere oracle needs n >= 2");
  const auto model = sphere::round_model(n);
  const auto source = sphere::equator_source(n);
  const auto axis = linspace(-1.0, 1.0, z_points);
  const auto svals = linspace(s_lo, s_hi, s_points);
  std::vector<Vec> zs;
  std::vector<int> idx(static_cast<std::size_t>(n - 1), 0);
  while (true) {
    Vec z(n - 1);
    for (int k = 0; k < n - 1; ++k) z[k] = axis[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    zs.push_back(z);
    int k = n - 2;
    while (k >= 0 && ++idx[static_cast<std::size_t>(k)] == z_points) idx[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
  }
  std::vector<std::vector<OracleRow>> rows(zs.size());
  LinearizedOptions lo;
  lo.tol = tol;
  parallel_for(zs.size(), workers, [&](std::size_t i) {
    const Vec& z = zs[i];
    const auto smp = make_sample(model, source, z, i);
    double ru = std::numeric_limits<double>::infinity();
    if (smp.ok) {
      const auto u = extract_K(smp.frame);
      if (!u.degenerate) ru = (u.K - sphere::closed_form_U(z)).cwiseAbs().maxCoeff();
    }
    for (double s : svals) {
      OracleRow row;
      row.z = z;
      row.s = s;
      row.residual_U = ru;
      row.residual_corrected = row.residual_displayed = std::numeric_limits<double>::infinity();
      if (smp.ok) {
        const auto J = vertical_arrival_frame(model, {smp.x, smp.p0}, s, lo);
        const auto k = extract_K(J);
        if (!k.degenerate) {
          row.residual_corrected = rel_residual(k.K, sphere::closed_form_gap(z, s, sphere::GapVariant::Corrected).K);
          row.residual_displayed = rel_residual(k.K, sphere::closed_form_gap(z, s, sphere::GapVariant::Displayed).K);
        }
      }
      rows[i].push_back(row);
    }
  });
  OracleResult res;
  for (auto& rz : rows) {
    for (auto& r : rz) {
      res.max_corrected = std::max(res.max_corrected, r.residual_corrected);
      res.max_displayed = std::max(res.max_displayed, r.residual_displayed);
      res.max_U = std::max(res.max_U, r.residual_U);
      res.rows.push_back(std::move(r));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

std::vector<int> doubled_resolution(const SourceSpec& source, const std::vector<int>& res) {
  std::vector<int> out(res.size());
  for (std::size_t a = 0; a < res.size(); ++a) {
    const auto& ax = source.box.at(a);
    out[a] = (ax.periodic || ax.offset > 0.0) ? 2 * res[a] : 2 * res[a] - 1;
  }
  return out;
}

RegularityRun regularity_run(const Scenario& sc, int workers) {
  const auto& sec = sc.section("regularity");
  const auto model = build_model(sc.model, sc.base_dir);
  const auto source = build_source(sc.source, model.dim());
  RegularityRun r;
  r.coarse = sec.value("resolution", sc.resolution);
  r.fine = doubled_resolution(source, r.coarse);
  const auto opt = sc.scan_options(workers);
  r.coarse_table = scan_loci(model, source, r.coarse, opt);
  r.fine_table = scan_loci(model, source, r.fine, opt);

  const auto cut_c = sampled_from_loci(r.coarse_table, source, r.coarse, "t_cut");
  const auto cut_f = sampled_from_loci(r.fine_table, source, r.fine, "t_cut");
  const auto conj_c = sampled_from_loci(r.coarse_table, source, r.coarse, "t_conj");
  const auto conj_f = sampled_from_loci(r.fine_table, source, r.fine, "t_conj");
  double h = 0.0;
  for (std::size_t a = 0; a < r.coarse.size(); ++a) h = std::max(h, cut_c.spacing(a));

  for (double k : sec.value("lipschitz_radii_spacings", std::vector<double>{1, 2, 3})) {
    r.radii.push_back(k * h);
    r.lip_coarse.push_back(lipschitz_estimate(cut_c, k * h));
    r.lip_fine.push_back(lipschitz_estimate(cut_f, k * h));
  }
  const double lc = r.lip_coarse.back().value, lf = r.lip_fine.back().value;
  r.lipschitz_ratio = (lc > 0 && lf > 0) ? std::max(lf / lc, lc / lf) : (lc == lf ? 1.0 : INFINITY);

  r.delta = sec.value("semiconcavity_delta_spacings", 4.0) * h;
  r.semi_coarse = semiconcavity_estimate(conj_c, r.delta);
  r.semi_fine = semiconcavity_estimate(conj_f, r.delta);
  if (source.kind == SourceKind::Point) {
    try {
      r.hessian_bound = hessian_bound_estimate(conj_f);
    } catch (const Error& e) {
      r.hessian_note = e.what();
    }
  } else {
    r.hessian_note = "hessian bound is defined for point sources only";
  }

  const double max_ratio = sec.value("max_lipschitz_ratio", 2.0);
  for (std::size_t i = 0; i < r.radii.size(); ++i) {
    if (!std::isfinite(r.lip_coarse[i].value) || !std::isfinite(r.lip_fine[i].value)) {
      r.reasons.push_back("lipschitz estimate of t_cut is not finite");
    }
  }
  if (r.lipschitz_ratio > max_ratio) {
    r.reasons.push_back("lipschitz estimate of t_cut changes by " + number(r.lipschitz_ratio) +
                        "x under mesh doubling");
  }
  if (r.semi_coarse.infinite || r.semi_fine.infinite) {
    r.reasons.push_back("semiconcavity constant of t_conj flagged infinite");
  }
  if (r.coarse_table.violations() || r.fine_table.violations()) {
    r.reasons.push_back("rows with t_cut > t_conj beyond tolerance");
  }
  r.violation = !r.reasons.empty();
  return r;
}

nlohmann::json regularity_to_json(const RegularityRun& r, const Provenance& prov) {
  auto j = artifact("regularity-report", prov);
  auto lip = nlohmann::json::array();
  for (std::size_t i = 0; i < r.radii.size(); ++i) {
    lip.push_back({{"radius", r.radii[i]}, {"coarse", to_json(r.lip_coarse[i])}, {"fine", to_json(r.lip_fine[i])}});
  }
  j["convention"] =
      "semiconcavity: mu f(x) + (1 - mu) f(y) - f(mu x + (1 - mu) y) <= mu (1 - mu) C |x - y|^2, "
      "mu in {1/4, 1/2, 3/4}; distances in mesh parameter coordinates";
  j["mesh"] = {{"coarse", r.coarse}, {"fine", r.fine}};
  j["t_cut"] = {{"function", "t_cut"}, {"lipschitz", lip}, {"ratio_under_doubling", r.lipschitz_ratio}};
  j["t_conj"] = {{"function", "t_conj"},
                 {"semiconcavity", {{"coarse", to_json(r.semi_coarse)}, {"fine", to_json(r.semi_fine)}}},
                 {"hessian_bound", r.hessian_bound ? nlohmann::json(*r.hessian_bound) : nlohmann::json()},
                 {"hessian_note", r.hessian_note}};
  j["order_violations"] = {{"coarse", r.coarse_table.violations()}, {"fine", r.fine_table.violations()}};
  j["violation"] = r.violation;
  j["reasons"] = r.reasons;
  return j;
}

// ---------------------------------------------------------------------------

ConvexityRun convexity_run(const Scenario& sc, int workers) {
  const auto& sec = sc.section("convexity");
  ConvexityRun r;
  ConvexityOptions co;
  co.kappa_min = sec.value("kappa_min", 0.0);
  co.min_chord_spacings = sec.value("min_chord_spacings", co.min_chord_spacings);
  co.delta = sec.value("delta", 0.0);
  if (sec.contains("disc")) {
    r.mode = "disc";
    const double radius = sec.at("disc").at("radius").get<double>();
    const int samples = sec.at("disc").value("samples", 721);
    if (!(radius > 0) || samples < 8) throw Error("convexity.disc: radius > 0 and samples >= 8 required");
    std::vector<Vec> pts;
    for (int k = 0; k < samples; ++k) {
      const double a = 2 * std::numbers::pi * k / samples;
      pts.push_back((Vec(2) << radius * std::cos(a), radius * std::sin(a)).finished());
    }
    r.mesh = closed_polyline(pts, Vec::Zero(2));
  } else {
    r.mode = "nonfocal";
    const auto model = build_model(sc.model, sc.base_dir);
    const auto source = build_source(sc.source, model.dim());
    if (source.kind != SourceKind::Point) throw Error("convexity: the scenario source must be a point");
    const auto res = sec.value("resolution", sc.resolution);
    r.domain = nonfocal_domain(model, source, res, sc.horizon, sc.scan_options(workers).conj, workers);
    r.mesh = boundary_from_nonfocal(*r.domain);
  }
  try {
    r.certificate = uniform_convexity(r.mesh, co);
  } catch (const Error& e) {
    r.certificate.kappa_min = co.kappa_min;
    r.certificate.pass = false;
    r.certificate.samples = r.mesh.points.size();
    r.certificate.failure = e.what();
  }
  return r;
}

nlohmann::json boundary_to_json(const ConvexityRun& r, const Provenance& prov) {
  auto j = artifact("boundary-set", prov);
  j["mode"] = r.mode;
  j["n"] = r.mesh.n;
  j["center"] = vec_json(r.mesh.center);
  auto pts = nlohmann::json::array();
  for (const auto& p : r.mesh.points) pts.push_back(vec_json(p));
  j["points"] = std::move(pts);
  if (r.domain) {
    auto dirs = nlohmann::json::array();
    for (const auto& d : r.domain->directions) dirs.push_back(vec_json(d));
    j["directions"] = std::move(dirs);
    j["t_conj"] = r.domain->t_conj;
    j["counts"] = r.domain->counts;
    j["radius_min"] = r.domain->radius_min;
    j["radius_max"] = r.domain->radius_max;
  }
  return j;
}

// ---------------------------------------------------------------------------

namespace {

struct Writer {
  fs::path dir;
  std::vector<std::string> files;
  std::ostream& log;
  bool quiet;

  void text(const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << content;
    if (!out) throw Error("write failed for '" + p.string() + "'");
    files.push_back(name);
    if (!quiet) log << "wrote " << p.string() << "\n";
  }
  void json(const std::string& name, const nlohmann::json& j) { text(name, j.dump(2) + "\n"); }
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + p.string() + "' is not valid JSON: " + e.what());
  }
}


int cmd_validate(const Scenario& sc, Writer& w) {
  const auto& sec = sc.section("validate");
  const auto model = build_model(sc.model, sc.base_dir);
  const auto samples = validation_samples(model.dim(), sec.value("samples", std::size_t{200}),
                                          sec.value("position_radius", 2.0), sec.value("covector_radius", 10.0),
                                          sc.seed);
  const auto report = validate_model(model, samples);
  auto j = artifact("validation-report", Provenance::of(sc));
  j["report"] = validation_to_json(report);
  j["declared_smoothness"] = model.declared_smoothness();
  w.json("validation.json", j);
  if (!w.quiet) {
    for (const auto& c : report.checks) w.log << c.id << ": " << (c.pass ? "pass" : "FAIL") << " (" << c.detail << ")\n";
  }
  return report.all_pass() ? kExitOk : kExitViolation;
}

int cmd_trace(const Scenario& sc, Writer& w) {
  const auto& sec = sc.section("trace");
  const auto model = build_model(sc.model, sc.base_dir);
  const auto source = build_source(sc.source, model.dim());
  const auto params = mesh_parameters(source, sc.resolution);
  const auto ray_id = sec.value("ray", std::size_t{0});
  if (ray_id >= params.size()) throw Error("trace.ray is outside the source mesh");
  const double dt = sec.value("dt", 0.01);
  if (!(dt > 0)) throw Error("trace.dt must be positive");
  const auto sample = make_sample(model, source, params[ray_id], ray_id);
  if (!sample.ok) throw Error("trace: source sample failed: " + sample.error);
  const Ray ray = propagate_ray(model, sample, sc.horizon, sc.scan_options(1).conj.linear);
  if (!ray.ok) throw Error("trace: " + ray.error);
  const int n = model.dim();
  std::ostringstream os;
  write_csv_preamble(os, Provenance::of(sc));
  os << "# ray=" << ray_id << "\n";
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x_" << i;
  for (int i = 0; i < n; ++i) os << ",p_" << i;
  os << ",action,s_min\n";
  const double t_end = ray.frames.t_end();
  const auto steps = static_cast<long>(std::floor(t_end / dt + 1e-9));
  for (long k = 0; k <= steps; ++k) {
    const double t = std::min(k * dt, t_end);
    const Vec y = ray.frames.dense.eval(t);
    os << number(t);
    for (int i = 0; i < 2 * n + 1; ++i) os << ',' << number(y[i]);
    os << ',' << number(frame_s_min(ray.frames.columns_at(t))) << '\n';
  }
  w.text("trace.csv", os.str());
  if (!ray.error.empty() && !w.quiet) w.log << "note: " << ray.error << "\n";
  return kExitOk;
}

int cmd_scan(const Scenario& sc, Writer& w, const std::string& name, int workers) {
  const auto model = build_model(sc.model, sc.base_dir);
  const auto source = build_source(sc.source, model.dim());
  auto opt = sc.scan_options(workers);
  opt.conjugate = name != "cut-scan";
  opt.cut = name != "conj-scan";
  const auto table = scan_loci(model, source, sc.resolution, opt);
  const auto prov = Provenance::of(sc);
  const int pdim = static_cast<int>(source.box.size());
  std::ostringstream os;
  write_loci_csv(os, table, pdim, prov);
  w.text(name + ".csv", os.str());
  const auto j = loci_table_to_json(table, pdim, prov);
  w.json(name + ".json", j);
  if (!w.quiet) w.log << name << ": " << j.at("summary").dump() << "\n";
  return table.violations() ? kExitViolation : kExitOk;
}

int cmd_regularity(const Scenario& sc, Writer& w, int workers) {
  const auto r = regularity_run(sc, workers);
  w.json("regularity.json", regularity_to_json(r, Provenance::of(sc)));
  if (!w.quiet) {
    w.log << "lipschitz(t_cut) coarse " << number(r.lip_coarse.back().value) << " fine "
          << number(r.lip_fine.back().value) << " ratio " << number(r.lipschitz_ratio) << "\n";
    w.log << "semiconcavity(t_conj) C coarse " << number(r.semi_coarse.C) << " fine " << number(r.semi_fine.C)
          << (r.semi_fine.infinite || r.semi_coarse.infinite ? " (infinite)" : "") << "\n";
    for (const auto& s : r.reasons) w.log << "violation: " << s << "\n";
  }
  return r.violation ? kExitViolation : kExitOk;
}

int cmd_sphere_verify(const Scenario& sc, Writer& w, int workers) {
  if (!is_round_sphere(sc)) throw Error("sphere-verify needs the 'sphere-chart' model");
  const auto& sec = sc.section("sphere_verify");
  const int n = sc.dimension();
  const double k_tol = sec.value("k_tolerance", 1e-6);
  const double u_tol = sec.value("u_tolerance", 1e-8);
  const auto res = sphere_oracle(n, sec.value("z_points", 9), sec.value("s_lo", 0.1),
                                 sec.value("s_hi", std::numbers::pi - 0.1), sec.value("s_points", 31),
                                 sec.value("integration", sc.tol.integration), workers);
  std::ostringstream os;
  write_csv_preamble(os, Provenance::of(sc));
  for (int k = 2; k <= n; ++k) os << "z_" << k << ",";
  os << "s,residual_K_corrected,residual_K_displayed,residual_U\n";
  for (const auto& r : res.rows) {
    for (Eigen::Index k = 0; k < r.z.size(); ++k) os << number(r.z[k]) << ',';
    os << number(r.s) << ',' << number(r.residual_corrected) << ',' << number(r.residual_displayed) << ','
       << number(r.residual_U) << '\n';
  }
  os << "# summary max_residual_K_corrected=" << number(res.max_corrected)
     << " max_residual_K_displayed=" << number(res.max_displayed) << " max_residual_U=" << number(res.max_U)
     << "\n";
  w.text("sphere-verify.csv", os.str());
  if (!w.quiet) {
    w.log << "max K residual (corrected transverse sign) " << number(res.max_corrected) << "\n";
    w.log << "max K residual (transverse sign as displayed) " << number(res.max_displayed) << "\n";
    w.log << "max U residual " << number(res.max_U) << "\n";
  }
  return (res.max_corrected <= k_tol && res.max_U <= u_tol) ? kExitOk : kExitViolation;
}

int cmd_convexity(const Scenario& sc, Writer& w, int workers) {
  const auto r = convexity_run(sc, workers);
  const auto prov = Provenance::of(sc);
  auto j = artifact("convexity-certificate", prov);
  j["mode"] = r.mode;
  j["certificate"] = to_json(r.certificate);
  if (r.domain) j["nonfocal"] = {{"radius_min", r.domain->radius_min}, {"radius_max", r.domain->radius_max},
                                  {"directions", r.domain->directions.size()}};
  w.json("convexity.json", j);
  w.json("boundary.json", boundary_to_json(r, prov));
  if (!w.quiet) {
    w.log << "kappa_chord " << number(r.certificate.kappa_chord) << " kappa_ball " << number(r.certificate.kappa_ball)
          << " kappa_min " << number(r.certificate.kappa_min) << (r.certificate.pass ? " pass" : " FAIL") << "\n";
    if (!r.certificate.failure.empty()) w.log << "failure: " << r.certificate.failure << "\n";
  }
  return r.certificate.pass ? kExitOk : kExitViolation;
}

nlohmann::json schema(const std::vector<std::pair<std::string, std::string>>& cols, const Provenance& prov,
                      const std::string& file) {
  auto j = artifact("plot-schema", prov);
  j["file"] = file;
  auto c = nlohmann::json::array();
  for (const auto& [name, desc] : cols) c.push_back({{"name", name}, {"description", desc}});
  j["columns"] = std::move(c);
  return j;
}

int cmd_export(const Options& opt, Writer& w) {
  if (opt.format != "csv" && opt.format != "json") throw Error("export: unknown format '" + opt.format + "'");
  if (opt.input.empty()) throw Error("export: --input is required");
  const fs::path in(opt.input);
  const auto j = read_json(in);
  const auto prov = Provenance::from_artifact(j);
  const std::string kind = j.value("kind", std::string());
  const std::string stem = in.stem().string() + ".plot";
  const std::string file = stem + "." + opt.format;
  std::vector<std::pair<std::string, std::string>> cols;
  if (kind == "loci-table") {
    const auto table = loci_table_from_json(j);
    const int pdim = j.at("parameter_dim").get<int>();
    for (int k = 0; k < pdim; ++k) cols.emplace_back("param_" + std::to_string(k), "source mesh parameter");
    cols.insert(cols.end(), {{"t_conj", "first conjugate time, none if not found before the horizon"},
                             {"t_cut", "cut time (clamped to t_conj), none if undetermined"},
                             {"t_cut_raw", "cut time before clamping"},
                             {"class", "SigmaPoint | GammaPoint | Undetermined | none"},
                             {"gamma_flag", "1 when |t_cut - t_conj| <= time_tol"},
                             {"competitor", "ray id of the competing minimizer, none if absent"},
                             {"competitor_angle", "arrival angle to the competitor (radians)"},
                             {"conj_method", "det-sign | s_min-minimum"},
                             {"s_min_at_root", "smallest singular value of the Hblock at t_conj"},
                             {"t_dual", "conjugate time from the J(x,t) and U(x) detector"},
                             {"detector_gap", "|t_conj - t_dual|"},
                             {"excess_at_cut", "action excess over the field at the cut"},
                             {"band_at_cut", "action band at the cut"},
                             {"clamped", "1 when t_cut was clamped to t_conj"},
                             {"order_violation", "1 when t_cut exceeds t_conj beyond tolerance"},
                             {"status", "ok or a diagnostic"}});
    if (opt.format == "csv") {
      std::ostringstream os;
      write_loci_csv(os, table, pdim, prov);
      w.text(file, os.str());
    } else {
      w.json(file, loci_table_to_json(table, pdim, prov));
    }
  } else if (kind == "boundary-set") {
    const int n = j.at("n").get<int>();
    const Vec c = json_vec(j.at("center"));
    std::vector<Vec> pts;
    for (const auto& p : j.at("points")) pts.push_back(json_vec(p) - c);
    if (n == 2) {
      cols = {{"angle", "polar angle about the center (radians, atan2)"}, {"radius", "distance from the center"}};
    } else {
      for (int k = 0; k < n; ++k) cols.emplace_back("x_" + std::to_string(k), "coordinate relative to the center");
      cols.emplace_back("radius", "distance from the center");
    }
    if (opt.format == "csv") {
      std::ostringstream os;
      write_csv_preamble(os, prov);
      for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k].first;
      os << "\n";
      for (const auto& p : pts) {
        if (n == 2) {
          os << number(std::atan2(p[1], p[0])) << ',' << number(p.norm()) << '\n';
        } else {
          for (Eigen::Index k = 0; k < p.size(); ++k) os << number(p[k]) << ',';
          os << number(p.norm()) << '\n';
        }
      }
      w.text(file, os.str());
    } else {
      auto out = artifact("boundary-plot", prov);
      auto rows = nlohmann::json::array();
      for (const auto& p : pts) {
        if (n == 2) {
          rows.push_back({std::atan2(p[1], p[0]), p.norm()});
        } else {
          auto row = vec_json(p);
          row.push_back(p.norm());
          rows.push_back(row);
        }
      }
      out["rows"] = std::move(rows);
      w.json(file, out);
    }
  } else {
    throw Error("export: input kind '" + kind + "' is not a loci table or boundary set");
  }
  w.json(stem + ".schema.json", schema(cols, prov, file));
  return kExitOk;
}

}  // namespace

int run(const Options& opt, std::ostream& log) {
  static const std::vector<std::string> known = {"validate", "trace", "conj-scan", "cut-scan", "loci",
                                                 "regularity", "sphere-verify", "convexity", "export"};
  if (std::find(known.begin(), known.end(), opt.subcommand) == known.end()) {
    throw Error("unknown subcommand '" + opt.subcommand + "'");
  }
  if (opt.workers < 0) throw Error("--workers must be non-negative");
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Scenario> sc;
  if (!opt.scenario.empty()) sc = load_scenario(opt.scenario);
  if (!sc && opt.subcommand != "export") throw Error(opt.subcommand + ": a scenario file is required");

  fs::path out = opt.out;
  if (out.empty()) out = sc ? fs::path(sc->output) : fs::path(opt.input).parent_path();
  if (out.empty()) out = ".";
  Writer w{out, {}, log, opt.quiet};
  const int workers = resolve_workers(opt.workers);

  int code = kExitOk;
  const auto& s = opt.subcommand;
  if (s == "validate") code = cmd_validate(*sc, w);
  if (s == "trace") code = cmd_trace(*sc, w);
  if (s == "conj-scan" || s == "cut-scan" || s == "loci") code = cmd_scan(*sc, w, s, workers);
  if (s == "regularity") code = cmd_regularity(*sc, w, workers);
  if (s == "sphere-verify") code = cmd_sphere_verify(*sc, w, workers);
  if (s == "convexity") code = cmd_convexity(*sc, w, workers);
  if (s == "export") code = cmd_export(opt, w);

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json manifest = {{"subcommand", s},
                             {"scenario_file", opt.scenario},
                             {"scenario_hash", sc ? sc->hash : std::string()},
                             {"started_utc", started},
                             {"finished_utc", utc_now()},
                             {"wall_seconds", wall},
                             {"workers", workers},
                             {"exit_code", code},
                             {"files", w.files}};
  fs::create_directories(out);
  std::ofstream(out / (s + ".manifest.json"), std::ios::binary) << manifest.dump(2) << "\n";
  return code;
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args.front() == "run") args.erase(args.begin());

  CLI::App app{"conjugate and cut loci of Hamilton-Jacobi characteristics", "loci-lab"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> subs = {
      {"validate", "check the model hypotheses on seeded samples"},
      {"trace", "CSV trace of one ray: t, x, p, action, s_min"},
      {"conj-scan", "conjugate times over the source mesh"},
      {"cut-scan", "cut times over the source mesh (no conjugate detection)"},
      {"loci", "conjugate and cut times with classification"},
      {"regularity", "Lipschitz and semiconcavity estimates under mesh doubling"},
      {"sphere-verify", "round-sphere closed-form oracle residuals"},
      {"convexity", "uniform convexity certificate of a nonfocal domain or disc"},
      {"export", "plot data from a loci table or boundary set"}};
  for (const auto& [name, desc] : subs) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--scenario,scenario", opt.scenario, "scenario JSON file");
    sub->add_option("--out", opt.out, "output directory (default: the scenario's output)");
    sub->add_option("--workers", opt.workers, "worker threads (default: LOCI_LAB_WORKERS or all cores)");
    sub->add_flag("--quiet", opt.quiet, "no summary on standard output");
    if (name == "export") {
      sub->add_option("--input", opt.input, "loci table or boundary set JSON")->required();
      sub->add_option("--format", opt.format, "csv or json")->required();
    }
  }
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  opt.subcommand = app.get_subcommands().front()->get_name();
  try {
    return run(opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace loci::cli
