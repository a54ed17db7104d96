#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "loci/cli.hpp"
#include "loci/scenario.hpp"

using namespace loci;
namespace fs = std::filesystem;

namespace {

nlohmann::json flat_scenario() {
  return nlohmann::json::parse(R"({
    "schema": "loci-lab/scenario", "version": 1, "name": "flat-test",
    "model": {"name": "euclidean-eikonal", "dimension": 2},
    "source": {"kind": "hyperplane", "axis": 0, "offset": 0.0, "box": [{"lo": -1.0, "hi": 1.0}]},
    "resolution": [11], "horizon": 1.0,
    "tolerances": {"capture": 0.25}
  })");
}

fs::path temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("loci-unit-" + std::to_string(getpid())) / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("fnv-1a reference values") {
  CHECK(fnv1a64("") == "cbf29ce484222325");
  CHECK(fnv1a64("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a64("foobar") == "85944171f73967e8");
}

TEST_CASE("scenario parsing and validation") {
  const auto sc = parse_scenario(flat_scenario());
  CHECK(sc.name == "flat-test");
  CHECK(sc.dimension() == 2);
  CHECK(sc.tol.time == doctest::Approx(10 * sc.tol.refine));
  CHECK(sc.output == "out/flat-test");
  CHECK(sc.hash.size() == 16);
  // Key order does not change the hash; content does.
  auto reordered = nlohmann::json::parse(flat_scenario().dump());
  CHECK(parse_scenario(reordered).hash == sc.hash);
  auto changed = flat_scenario();
  changed["horizon"] = 1.5;
  CHECK(parse_scenario(changed).hash != sc.hash);

  const auto opt = sc.scan_options(3);
  CHECK(opt.field.capture == 0.25);
  CHECK(opt.horizon == 1.0);
  CHECK(opt.workers == 3);

  auto bad = flat_scenario();
  bad["tolerances"]["refine"] = 0.0;
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["horizon"] = -1.0;
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["version"] = 2;
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["horizn"] = 1.0;
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["model"]["name"] = "no-such-model";
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["resolution"] = {11, 11};
  CHECK_THROWS_AS(parse_scenario(bad), Error);
  bad = flat_scenario();
  bad["model"] = nlohmann::json::parse(R"({"name": "sphere-chart-perturbed", "dimension": 2,
      "perturbation": {"eps": 0.5, "c4_bound": 0.01,
                       "bumps": [{"center": [0, 0], "width": 0.3, "amplitude": 1}]}})");
  CHECK_THROWS_WITH_AS(parse_scenario(bad), doctest::Contains("C4 proxy"), Error);
}

TEST_CASE("polynomial model from a coefficient file") {
  const auto dir = temp_dir("poly");
  std::ofstream(dir / "h.json") << R"({"dimension": 2, "level": 0.5, "terms": [
      {"coeff": 0.5, "x_powers": [0, 0], "p_powers": [2, 0]},
      {"coeff": 0.5, "x_powers": [0, 0], "p_powers": [0, 2]}]})";
  const auto m = build_model(nlohmann::json{{"name", "polynomial"}, {"dimension", 2}, {"file", "h.json"}}, dir);
  Vec x(2), p(2);
  x << 1, 2;
  p << 0.3, 0.4;
  CHECK(m.H(x, p) == doctest::Approx(0.125));
  CHECK_THROWS_AS(build_model(nlohmann::json{{"name", "polynomial"}, {"dimension", 3}, {"file", "h.json"}}, dir),
                  Error);
}

TEST_CASE("number formatting and csv quoting") {
  CHECK(cli::number(0.5) == "0.5");
  CHECK(cli::number(0.1) == "0.10000000000000001");
  CHECK(cli::number(std::optional<double>()) == "none");
  CHECK(cli::csv_field("ok") == "ok");
  CHECK(cli::csv_field("a,b") == "\"a,b\"");
  CHECK(cli::csv_field("say \"x\"") == "\"say \"\"x\"\"\"");
  CHECK(cli::unit_uniform(0) == 0.0);
  CHECK(cli::unit_uniform(~std::uint64_t{0}) < 1.0);
}

TEST_CASE("loci tables round-trip through json") {
  LociTable t;
  t.time_tol = 1e-8;
  t.widest_gap = 0.0123;
  t.widest_gap_between = "3-4";
  LociRecord a;
  a.id = 0;
  a.parameter = Vec::Constant(1, 0.1);
  a.t_conj = 1.5707963267948966;
  a.t_cut = 1.5707963267948966;
  a.t_cut_raw = 1.5712;
  a.cls = CutClass::SigmaPoint;
  a.gamma_flag = true;
  a.competitor = 7;
  a.competitor_angle = 3.0;
  a.conj_method = "det-sign";
  a.clamped = true;
  LociRecord b;
  b.id = 1;
  b.parameter = Vec::Constant(1, 1.0 / 3);
  b.status = "undetermined beyond t* = 2.5, uncovered";
  t.records = {a, b};
  const cli::Provenance prov{"0123456789abcdef", {{"refine", 1e-9}}};
  const auto j = cli::loci_table_to_json(t, 1, prov);
  const auto back = cli::loci_table_from_json(nlohmann::json::parse(j.dump()));
  CHECK(cli::loci_table_to_json(back, 1, prov).dump() == j.dump());
  CHECK(back.records[0].t_cut_raw == a.t_cut_raw);
  CHECK(*back.records[0].competitor == 7);
  CHECK_FALSE(back.records[1].t_conj);

  std::ostringstream os;
  cli::write_loci_csv(os, t, 1, prov);
  const auto csv = os.str();
  CHECK(csv.rfind("# scenario_hash=0123456789abcdef\n", 0) == 0);
  CHECK(csv.find("\"undetermined beyond t* = 2.5, uncovered\"") != std::string::npos);
  CHECK(csv.find('\r') == std::string::npos);

  std::ostringstream empty;
  cli::write_loci_csv(empty, LociTable{}, 1, prov);
  int lines = 0;
  for (char c : empty.str()) lines += c == '\n';
  CHECK(lines == 3);  // two provenance lines and the header
}

TEST_CASE("mesh doubling") {
  const auto eq = build_source(nlohmann::json{{"kind", "equator"}}, 2);
  CHECK(cli::doubled_resolution(eq, {41}) == std::vector<int>{81});
  const auto pt2 = build_source(nlohmann::json{{"kind", "point"}}, 2);
  CHECK(cli::doubled_resolution(pt2, {181}) == std::vector<int>{362});
  const auto pt3 = build_source(nlohmann::json{{"kind", "point"}}, 3);
  CHECK(cli::doubled_resolution(pt3, {8, 16}) == std::vector<int>{16, 32});
}

TEST_CASE("subcommands on a flat scenario") {
  const auto dir = temp_dir("run");
  const auto file = dir / "flat.json";
  std::ofstream(file) << flat_scenario().dump(2);
  std::ostringstream log;
  cli::Options opt;
  opt.scenario = file.string();
  opt.out = (dir / "out").string();
  opt.workers = 1;
  opt.quiet = true;

  opt.subcommand = "loci";
  CHECK(cli::run(opt, log) == cli::kExitOk);
  const auto csv = slurp(dir / "out" / "loci.csv");
  CHECK(csv.find(",none,none,none,none,0,none,") != std::string::npos);
  const auto first = slurp(dir / "out" / "loci.json");
  CHECK(cli::run(opt, log) == cli::kExitOk);
  CHECK(slurp(dir / "out" / "loci.json") == first);
  CHECK(fs::exists(dir / "out" / "loci.manifest.json"));

  opt.subcommand = "validate";
  CHECK(cli::run(opt, log) == cli::kExitOk);
  const auto v = nlohmann::json::parse(slurp(dir / "out" / "validation.json"));
  CHECK(v.at("scenario_hash") == parse_scenario(flat_scenario()).hash);
  CHECK(v.at("report").at("all_pass") == true);

  opt.subcommand = "trace";
  CHECK(cli::run(opt, log) == cli::kExitOk);
  CHECK(slurp(dir / "out" / "trace.csv").find("t,x_0,x_1,p_0,p_1,action,s_min\n") != std::string::npos);

  opt.subcommand = "sphere-verify";
  CHECK_THROWS_AS(cli::run(opt, log), Error);

  opt.subcommand = "export";
  opt.input = (dir / "out" / "loci.json").string();
  opt.format = "csv";
  opt.scenario.clear();
  CHECK(cli::run(opt, log) == cli::kExitOk);
  CHECK(fs::exists(dir / "out" / "loci.plot.csv"));
  CHECK(fs::exists(dir / "out" / "loci.plot.schema.json"));
  opt.format = "json";
  CHECK(cli::run(opt, log) == cli::kExitOk);
  CHECK(nlohmann::json::parse(slurp(dir / "out" / "loci.plot.json")) == nlohmann::json::parse(first));
  opt.format = "xml";
  CHECK_THROWS_AS(cli::run(opt, log), Error);
}

TEST_CASE("command line exit codes") {
  const auto dir = temp_dir("argv");
  const auto file = dir / "flat.json";
  std::ofstream(file) << flat_scenario().dump(2);
  auto call = [](std::vector<std::string> args) {
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main_entry(static_cast<int>(argv.size()), argv.data());
  };
  const std::string out = (dir / "o").string();
  CHECK(call({"loci-lab", "run", "loci", file.string(), "--out", out, "--quiet"}) == 0);
  CHECK(call({"loci-lab", "conj-scan", "--scenario", file.string(), "--out", out, "--quiet"}) == 0);
  CHECK(call({"loci-lab", "loci", (dir / "missing.json").string(), "--quiet"}) == 1);
  CHECK(call({"loci-lab", "nonsense"}) == 1);
  CHECK(call({"loci-lab", "loci", file.string(), "--workers", "-2", "--quiet"}) == 1);
}
