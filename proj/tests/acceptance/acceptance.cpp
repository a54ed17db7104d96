// Acceptance checks. Usage: acceptance <criterion 1..10 | all>
// Prints one PASS/FAIL line per criterion; exit status 0 only if all pass.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "loci/cli.hpp"
#include "loci/linearized.hpp"
#include "loci/loci.hpp"
#include "loci/regularity.hpp"
#include "loci/scenario.hpp"
#include "loci/sphere.hpp"

using namespace loci;
namespace fs = std::filesystem;
namespace sp = loci::sphere;
constexpr double kPi = std::numbers::pi;

namespace {

const fs::path kScenarios = LOCI_SCENARIO_DIR;
const std::string kBinary = LOCI_LAB_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

fs::path scratch(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("loci-acceptance-" + std::to_string(getpid())) / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Scenario scenario(const std::string& name) { return load_scenario(kScenarios / (name + ".json")); }

LociTable scan(const Scenario& sc, bool cut) {
  const auto model = build_model(sc.model, sc.base_dir);
  const auto source = build_source(sc.source, model.dim());
  auto opt = sc.scan_options(0);
  opt.cut = cut;
  return scan_loci(model, source, sc.resolution, opt);
}

std::vector<fs::path> shipped() {
  std::vector<fs::path> v;
  for (const auto& e : fs::directory_iterator(kScenarios)) {
    if (e.path().extension() == ".json") v.push_back(e.path());
  }
  std::sort(v.begin(), v.end());
  return v;
}

int run_cli(const std::string& args) {
  const std::string cmd = "\"" + kBinary + "\" " + args + " --quiet > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// sigma(a, b) = <h_a, v_b> - <v_a, h_b>, written out here rather than taken from the library.
Mat sigma_gram(const Mat& F) {
  const auto n = F.rows() / 2;
  const Mat H = F.topRows(n), V = F.bottomRows(n);
  return H.transpose() * V - V.transpose() * H;
}

Vec random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v.normalized();
}

// ---------------------------------------------------------------------------

Outcome oracle(bool frame_only) {
  double kc = 0, kd = 0, u = 0;
  for (int n : {2, 3}) {
    const auto r = cli::sphere_oracle(n, 9, 0.1, kPi - 0.1, 31, 1e-11, 0);
    kc = std::max(kc, r.max_corrected);
    kd = std::max(kd, r.max_displayed);
    u = std::max(u, r.max_U);
  }
  if (frame_only) {
    return {u <= 1e-8, "max |U_numeric - U(z)| = " + fmt(u) + " (n = 2, 3; 9 points per axis) <= 1e-8"};
  }
  return {kc <= 1e-6, "max relative K residual = " + fmt(kc) +
                          " (n = 2, 3; 9-point z-grid; 31 values of s in [0.1, pi-0.1]) <= 1e-6 against the "
                          "sign-corrected transverse entries; residual against the displayed signs = " +
                          fmt(kd) + " (reported)"};
}

Outcome conjugate() {
  double worst_eq = 0, worst_pt = 0, worst_rel = 0;
  std::size_t rows = 0, missing = 0;
  for (const char* name : {"round-equator", "round-equator-3d", "round-equator-cut"}) {
    for (const auto& r : scan(scenario(name), false).records) {
      ++rows;
      if (!r.t_conj) ++missing;
      else worst_eq = std::max(worst_eq, std::abs(*r.t_conj - kPi / 2));
    }
  }
  const auto pt = scenario("round-point");
  for (const auto& r : scan(pt, false).records) {
    ++rows;
    if (!r.t_conj) ++missing;
    else worst_pt = std::max(worst_pt, std::abs(*r.t_conj - kPi));
  }
  // Point source from ybar versus the equator source at the crossing point.
  const auto model = sp::round_model(2);
  const auto point = point_source(sp::ybar(2));
  const auto equator = sp::equator_source(2);
  for (int k = 0; k < 16; ++k) {
    Vec u(1);
    u << 2 * kPi * (k + 0.3) / 16;
    const auto s = make_sample(model, point, u);
    const Vec z = exp_map(model, s, kPi / 2);
    if (std::abs(z[1]) > 50) continue;  // crossing near the north pole
    if (std::abs(z[0]) > 1e-6) {
      ++missing;
      continue;
    }
    const auto c_pt = conjugate_time(model, s, kPi + 0.3);
    const auto c_eq = conjugate_time(model, make_sample(model, equator, z.tail(1)), 2.0);
    if (!c_pt.t_conj || !c_eq.t_conj) {
      ++missing;
      continue;
    }
    worst_rel = std::max(worst_rel, std::abs(*c_pt.t_conj - (*c_eq.t_conj + kPi / 2)));
  }
  const bool ok = missing == 0 && worst_eq <= 1e-4 && worst_pt <= 1e-4 && worst_rel <= 1e-4;
  return {ok, "equator sources max |t_conj - pi/2| = " + fmt(worst_eq) + ", point source max |t_conj - pi| = " +
                  fmt(worst_pt) + " over " + std::to_string(rows) + " rays; point-vs-equator offset error " +
                  fmt(worst_rel) + "; missing " + std::to_string(missing) + "; tolerance 1e-4"};
}

Outcome cut() {
  struct Case {
    const char* name;
    double expect;
  };
  double worst = 0;
  std::size_t bad_class = 0, rows = 0;
  std::string detail;
  for (const Case c : {Case{"round-equator-cut", kPi / 2}, Case{"round-point", kPi}}) {
    double w = 0, raw = 0;
    const auto t = scan(scenario(c.name), true);
    for (const auto& r : t.records) {
      ++rows;
      w = std::max(w, r.t_cut ? std::abs(*r.t_cut - c.expect) : INFINITY);
      if (r.t_cut_raw) raw = std::max(raw, std::abs(*r.t_cut_raw - c.expect));
      if (r.cls != CutClass::SigmaPoint || !r.gamma_flag) ++bad_class;
    }
    worst = std::max(worst, w);
    detail += std::string(c.name) + " (" + std::to_string(t.records.size()) + " rays) max |t_cut - " +
              (c.expect == kPi ? "pi" : "pi/2") + "| = " + fmt(w) + " (" + fmt(raw) + " before clamping to t_conj); ";
  }
  return {worst <= 5e-3 && bad_class == 0,
          detail + "rows not SigmaPoint+gamma_flag: " + std::to_string(bad_class) + " of " + std::to_string(rows) +
              "; tolerance 5e-3"};
}

Outcome ordering() {
  const auto dir = scratch("ordering");
  std::size_t bad = 0, rows = 0, flagged = 0;
  double raw_excess = -INFINITY;
  std::string failed;
  for (const auto& f : shipped()) {
    const auto out = dir / f.stem();
    const int rc = run_cli("loci \"" + f.string() + "\" --out \"" + out.string() + "\"");
    if (rc != 0) failed += f.stem().string() + " (exit " + std::to_string(rc) + ") ";
    std::ifstream in(out / "loci.json");
    if (!in) continue;
    const auto j = nlohmann::json::parse(in);
    const double tol = j.at("summary").at("time_tol").get<double>();
    for (const auto& r : j.at("records")) {
      ++rows;
      flagged += r.at("order_violation").get<bool>();
      if (r.at("t_cut").is_null() || r.at("t_conj").is_null()) continue;
      if (r.at("t_cut").get<double>() > r.at("t_conj").get<double>() + tol) ++bad;
      if (!r.at("t_cut_raw").is_null()) {
        raw_excess = std::max(raw_excess, r.at("t_cut_raw").get<double>() - r.at("t_conj").get<double>());
      }
    }
  }
  return {bad == 0 && flagged == 0 && failed.empty(),
          std::to_string(shipped().size()) + " scenarios, " + std::to_string(rows) +
              " rows: t_cut > t_conj + time_tol in " + std::to_string(bad) + ", order_violation flags " +
              std::to_string(flagged) + ", largest raw t_cut - t_conj before clamping " + fmt(raw_excess) +
              (failed.empty() ? "; all exit 0" : "; non-zero exit: " + failed)};
}

Outcome symplectic() {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  sp::PerturbationSpec ps = sp::parse_perturbation(scenario("perturbed-eps005").model.at("perturbation"), 2);
  struct Model {
    HamiltonianModel m;
    int count;
  };
  std::vector<Model> models = {{sp::round_model(2), 40}, {sp::round_model(3), 30}, {sp::perturbed_model(ps, 2), 30}};
  double worst = 0;
  int rays = 0, skipped = 0;
  LinearizedOptions lo;
  lo.tol = 1e-12;
  for (auto& [m, count] : models) {
    const int n = m.dim();
    for (int done = 0; done < count;) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = 1.5 * U(rng);
      const Vec p = covector_on_level(m, x, random_unit(rng, n));
      Mat F(2 * n, 2 * n);
      for (int i = 0; i < F.size(); ++i) F.data()[i] = U(rng);
      // Rays through the north-pole neighbourhood leave the chart's well-scaled region.
      const auto traj = flow(m, {x, p}, kPi, 1e-12);
      double reach = 0;
      for (const auto& s : traj.states) reach = std::max(reach, s.x.norm());
      if (traj.escaped || reach > 20) {
        ++skipped;
        continue;
      }
      const auto ft = propagate(m, {x, p}, F, kPi, lo);
      const Mat g0 = sigma_gram(F);
      for (double t = 0; t <= kPi + 1e-12; t += 0.01) {
        worst = std::max(worst, (sigma_gram(ft.columns_at(std::min(t, kPi))) - g0).cwiseAbs().maxCoeff());
      }
      ++done;
      ++rays;
    }
  }
  return {worst <= 1e-8, "max |sigma(t) - sigma(0)| = " + fmt(worst) + " over " + std::to_string(rays) +
                             " random rays (40 round n=2, 30 round n=3, 30 perturbed eps=0.05), t in [0, pi] step "
                             "0.01, random 2n x 2n frames; " +
                             std::to_string(skipped) + " draws rejected for passing |y| > 20; tolerance 1e-8"};
}

Outcome regularity() {
  const auto r = cli::regularity_run(scenario("perturbed-eps005"), 0);
  const bool ok = !r.violation && std::isfinite(r.lip_coarse.back().value) && r.lipschitz_ratio <= 2.0 &&
                  !r.semi_coarse.infinite && !r.semi_fine.infinite;
  std::string why;
  for (const auto& s : r.reasons) why += "; " + s;
  return {ok, "eps=0.05: Lipschitz(t_cut) " + fmt(r.lip_coarse.back().value) + " -> " +
                  fmt(r.lip_fine.back().value) + " under mesh doubling " + std::to_string(r.coarse[0]) + " -> " +
                  std::to_string(r.fine[0]) + " (ratio " + fmt(r.lipschitz_ratio) + " <= 2); semiconcavity C(t_conj) " +
                  fmt(r.semi_coarse.C) + " / " + fmt(r.semi_fine.C) + ", infinity flag " +
                  (r.semi_coarse.infinite || r.semi_fine.infinite ? "set" : "clear") + why};
}

Outcome convexity() {
  const auto disc = cli::convexity_run(scenario("disc"), 0);
  const double kd = std::min(disc.certificate.kappa_chord, disc.certificate.kappa_ball);
  const double rel = std::abs(kd - 1 / (2 * kPi)) * 2 * kPi;
  bool ok = rel <= 0.05;
  std::string detail = "disc radius pi: kappa " + fmt(kd) + " vs 1/(2 pi) (rel err " + fmt(rel) + " <= 5%)";
  for (const char* name : {"perturbed-eps001", "perturbed-eps005"}) {
    const auto r = cli::convexity_run(scenario(name), 0);
    const auto& c = r.certificate;
    const double k = std::min(c.kappa_chord, c.kappa_ball);
    const bool good = c.pass && k >= 0.1 && c.failure.empty() && r.domain && r.domain->directions.size() == 721;
    ok = ok && good;
    detail += std::string("; ") + name + ": kappa " + fmt(k) + " (chord " + fmt(c.kappa_chord) + ", ball " +
              fmt(c.kappa_ball) + ") over " + std::to_string(r.domain ? r.domain->directions.size() : 0) +
              " samples" + (c.failure.empty() ? "" : ", failure: " + c.failure);
  }
  return {ok, detail + "; kappa_min 0.1"};
}

Outcome dexp() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(-1.0, 1.0), T(0.3, 2.5);
  sp::PerturbationSpec ps = sp::parse_perturbation(scenario("perturbed-eps005").model.at("perturbation"), 2);
  std::vector<std::pair<HamiltonianModel, int>> models = {
      {sp::round_model(2), 20}, {sp::round_model(3), 15}, {sp::perturbed_model(ps, 2), 15}};
  double worst = 0;
  int rays = 0;
  LinearizedOptions lo;
  lo.tol = 1e-12;
  for (auto& [m, count] : models) {
    const int n = m.dim();
    for (int done = 0; done < count;) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = 1.2 * U(rng);
      const Vec p = covector_on_level(m, x, random_unit(rng, n));
      const double t = T(rng);
      const auto traj = flow(m, {x, p}, t, 1e-12);
      double reach = 0;
      for (const auto& s : traj.states) reach = std::max(reach, s.x.norm());
      if (traj.escaped || reach > 20) continue;
      // Hblock of the vertical frame = d x(t) / d p0.
      const Mat Hb = propagate(m, {x, p}, vertical_frame(n).columns, t, lo).columns_at(t).topRows(n);
      Mat fd(n, n);
      const double h = 1e-5;
      for (int k = 0; k < n; ++k) {
        Vec dp = Vec::Zero(n);
        dp[k] = h;
        const Vec a = flow(m, {x, p + dp}, t, 1e-13).states.back().x;
        const Vec b = flow(m, {x, p - dp}, t, 1e-13).states.back().x;
        fd.col(k) = (a - b) / (2 * h);
      }
      worst = std::max(worst, (Hb - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff());
      ++done;
      ++rays;
    }
  }
  return {worst <= 1e-4, "max relative |Hblock - FD Jacobian of exp| = " + fmt(worst) + " over " +
                             std::to_string(rays) +
                             " random rays (20 round n=2, 15 round n=3, 15 perturbed eps=0.05), t in [0.3, 2.5], "
                             "central step 1e-5; tolerance 1e-4"};
}

// Subcommands that apply to a scenario, by its sections and model.
std::vector<std::string> commands_for(const fs::path& f) {
  const auto sc = load_scenario(f);
  std::vector<std::string> c = {"validate", "trace", "loci"};
  if (is_round_sphere(sc)) c.push_back("sphere-verify");
  if (sc.raw.contains("regularity")) c.push_back("regularity");
  if (sc.raw.contains("convexity")) c.push_back("convexity");
  return c;
}

Outcome determinism() {
  const auto dir = scratch("determinism");
  std::size_t files = 0, runs = 0;
  std::string diff;
  for (const auto& f : shipped()) {
    for (const auto& cmd : commands_for(f)) {
      const auto a = dir / "a" / f.stem(), b = dir / "b" / f.stem();
      const std::string base = cmd + " \"" + f.string() + "\" --out ";
      const int ra = run_cli(base + "\"" + a.string() + "\" --workers 1");
      const int rb = run_cli(base + "\"" + b.string() + "\" --workers 3");
      runs += 2;
      if (ra != rb) diff += f.stem().string() + ":" + cmd + " exit codes differ; ";
    }
    for (const auto& e : fs::directory_iterator(dir / "a" / f.stem())) {
      const std::string name = e.path().filename().string();
      if (name.find("manifest") != std::string::npos) continue;
      ++files;
      const auto other = dir / "b" / f.stem() / name;
      if (!fs::exists(other) || slurp(e.path()) != slurp(other)) diff += f.stem().string() + "/" + name + " differs; ";
    }
  }
  return {diff.empty() && files > 0, std::to_string(runs) + " runs (1 vs 3 workers) over " +
                                          std::to_string(shipped().size()) + " scenarios, " + std::to_string(files) +
                                          " artifact files compared byte for byte" +
                                          (diff.empty() ? "" : "; " + diff)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"oracle equivalence of K(z,s)", [] { return oracle(false); }}},
      {2, {"initial frame U(z)", [] { return oracle(true); }}},
      {3, {"conjugate times", conjugate}},
      {4, {"cut times and classification", cut}},
      {5, {"ordering t_cut <= t_conj", ordering}},
      {6, {"symplectic invariance", symplectic}},
      {7, {"regularity under mesh doubling", regularity}},
      {8, {"uniform convexity", convexity}},
      {9, {"d exp cross-check", dexp}},
      {10, {"determinism", determinism}},
  };
  std::vector<int> which;
  const std::string arg = argc > 1 ? argv[1] : "all";
  if (arg == "all") {
    for (const auto& [k, v] : criteria) which.push_back(k);
  } else {
    which.push_back(std::atoi(arg.c_str()));
    if (!criteria.count(which[0])) {
      std::cerr << "usage: acceptance <1..10 | all>\n";
      return 2;
    }
  }
  bool all = true;
  for (int k : which) {
    const auto& [name, fn] = criteria.at(k);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << k << " (" << name << "): " << o.detail << std::endl;
  }
  fs::remove_all(fs::temp_directory_path() / ("loci-acceptance-" + std::to_string(getpid())));
  return all ? 0 : 1;
}
