#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "otflow/scenario.hpp"

using namespace otflow;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
  static int counter = 0;
  fs::path p = fs::temp_directory_path() /
               ("otflow_scn_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
  fs::create_directories(p);
  return p.string();
}

std::string write_cfg(const std::string& body) {
  std::string path = tmp_dir() + "/scenario.cfg";
  std::ofstream os(path);
  os << body;
  return path;
}

const char* kTinyStationary = R"(
[cost]
kind = "bilinear"
[source]
kind = "disc"
params = [1.0]
[target]
kind = "disc"
params = [1.0]
[densities]
kind = "uniform"
[initializer]
kind = "quadratic"
bump = 0.0
[grid]
resolution = 40
[solver]
min_steps = 120
max_steps = 240
monitor_cadence = 10
[audit]
samples = 512
seed = 77
[diagnostics]
pushforward_boxes = 60
)";

}  // namespace

TEST_CASE("config parser handles types, comments and errors") {
  ConfigTable t = parse_config_text(
      "# comment\n[sec]\na = 1.5\nb = \"text # not comment\"\nc = true\n"
      "d = [1, 2.5, -3]\n");
  ConfigReader r(t);
  CHECK(r.number("sec", "a") == 1.5);
  CHECK(r.str("sec", "b") == "text # not comment");
  CHECK(r.array("sec", "d") == std::vector<double>{1.0, 2.5, -3.0});
  CHECK(r.number("sec", "missing", 7.0) == 7.0);
  CHECK_THROWS_AS((void)r.number("sec", "missing"), IoError);
  CHECK_THROWS_AS((void)parse_config_text("[bad\n"), IoError);
  CHECK_THROWS_AS((void)parse_config_text("[s]\nnoequals\n"), IoError);
  CHECK_THROWS_AS((void)parse_config_text("[s]\nx = 1.2.3\n"), IoError);
  CHECK_THROWS_AS((void)parse_config_text("[s]\nx = \"open\n"), IoError);
}

TEST_CASE("scenario assembly rejects unknown registry entries") {
  ScenarioConfig c = parse_scenario(kTinyStationary);
  c.cost_kind = "cubic";
  CHECK_THROWS_AS((void)build_scenario(c), BadParameters);
  c = parse_scenario(kTinyStationary);
  c.source_kind = "square";
  CHECK_THROWS_AS((void)build_scenario(c), BadParameters);
  c = parse_scenario(kTinyStationary);
  c.density_kind = "gaussian";
  CHECK_THROWS_AS((void)build_scenario(c), BadParameters);
  c = parse_scenario(kTinyStationary);
  c.resolution = 16;
  CHECK_THROWS_AS((void)parse_scenario("[grid]\nresolution = 8\n"), OtError);
}

TEST_CASE("cmd_verify: bilinear disc pair passes, square domain does not") {
  std::string ok_cfg = write_cfg(kTinyStationary);
  CHECK(cmd_verify(ok_cfg) == kExitOk);

  std::string square = kTinyStationary;
  square.replace(square.find("\"disc\""), 6, "\"square\"");
  std::string bad_cfg = write_cfg(square);
  CHECK(cmd_verify(bad_cfg) == kExitAuditFail);

  CHECK(cmd_verify("/nonexistent/path.cfg") == kExitIo);
}

TEST_CASE("cmd_verify: sqrt cost on discs passes with recorded margins") {
  std::string body = kTinyStationary;
  body.replace(body.find("\"bilinear\""), 10, "\"sqrt\"");
  std::string csv = tmp_dir() + "/audits.csv";
  CHECK(cmd_verify(write_cfg(body), csv) == kExitOk);
  std::vector<std::string> lines = read_lines(csv);
  CHECK(lines.size() >= 9);
}

TEST_CASE("cmd_run: stationary scenario exits 0 with all verdicts") {
  std::string cfg = write_cfg(kTinyStationary);
  std::string out = tmp_dir();
  CHECK(cmd_run(cfg, out) == kExitOk);
  CHECK(fs::exists(out + "/monitor.csv"));
  CHECK(fs::exists(out + "/verdicts.txt"));
  CHECK(fs::exists(out + "/final_state.txt"));
  CHECK(fs::exists(out + "/history.csv"));
  CHECK(fs::exists(out + "/audits.csv"));
  for (const auto& line : read_lines(out + "/verdicts.txt"))
    CHECK(line.find("FAIL") == std::string::npos);

  SUBCASE("cmd_report reproduces the verdicts bit-exactly") {
    CHECK(cmd_report(out) == kExitOk);
    CHECK(fs::exists(out + "/report/envelope.csv"));
    CHECK(fs::exists(out + "/report/margins.csv"));
    CHECK(fs::exists(out + "/report/residuals.csv"));
  }

  SUBCASE("tampered monitor rows are detected") {
    std::vector<std::string> lines = read_lines(out + "/monitor.csv");
    REQUIRE(lines.size() > 2);
    // corrupt the min-eig-w column of the second data row
    std::string& row = lines[2];
    std::size_t pos = 0;
    for (int commas = 0; commas < 5; ++commas) pos = row.find(',', pos) + 1;
    row = row.substr(0, pos) + "-1" + row.substr(row.find(',', pos));
    std::ofstream os(out + "/monitor.csv", std::ios::binary);
    for (const auto& l : lines) os << l << "\n";
    os.close();
    CHECK(cmd_report(out) == kExitVerdictMismatch);
  }
}

TEST_CASE("cmd_run exit codes: truncation and inadmissible data") {
  // max-steps truncation: perturbed start with a tiny step budget
  std::string body = kTinyStationary;
  body.replace(body.find("bump = 0.0"), 10, "bump = 0.05");
  body.replace(body.find("min_steps = 120"), 15, "min_steps = 0");
  body.replace(body.find("max_steps = 240"), 15, "max_steps = 5");
  CHECK(cmd_run(write_cfg(body), tmp_dir()) == kExitNoConvergence);

  // inadmissible u0: zero potential under the bilinear cost has w = 0
  std::string flat = kTinyStationary;
  flat.replace(flat.find("\"quadratic\""), 11, "\"zero\"");
  CHECK(cmd_run(write_cfg(flat), tmp_dir()) == kExitInadmissible);

  // report on an empty directory
  CHECK(cmd_report(tmp_dir()) == kExitIo);
}

TEST_CASE("identical config and seed give byte-identical monitor files") {
  std::string cfg = write_cfg(kTinyStationary);
  std::string out1 = tmp_dir(), out2 = tmp_dir();
  REQUIRE(cmd_run(cfg, out1) == kExitOk);
  REQUIRE(cmd_run(cfg, out2) == kExitOk);
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(out1 + "/monitor.csv") == slurp(out2 + "/monitor.csv"));
  CHECK(slurp(out1 + "/verdicts.txt") == slurp(out2 + "/verdicts.txt"));
  CHECK(slurp(out1 + "/history.csv") == slurp(out2 + "/history.csv"));
}

#ifdef OTFLOW_CLI_PATH
TEST_CASE("cli end to end: worker count does not change the bytes") {
  std::string cfg = write_cfg(kTinyStationary);
  std::string out1 = tmp_dir(), out2 = tmp_dir();
  std::string base = std::string(OTFLOW_CLI_PATH) + " run --config " + cfg;
  std::string cmd1 = "OTFLOW_THREADS=1 " + base + " --out " + out1 + " >/dev/null 2>&1";
  std::string cmd2 = "OTFLOW_THREADS=4 " + base + " --out " + out2 + " >/dev/null 2>&1";
  REQUIRE(std::system(cmd1.c_str()) == 0);
  REQUIRE(std::system(cmd2.c_str()) == 0);
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  CHECK(slurp(out1 + "/monitor.csv") == slurp(out2 + "/monitor.csv"));
  CHECK(slurp(out1 + "/verdicts.txt") == slurp(out2 + "/verdicts.txt"));

  std::string rep = std::string(OTFLOW_CLI_PATH) + " report --dir " + out1 +
                    " >/dev/null 2>&1";
  CHECK(std::system(rep.c_str()) == 0);
}

TEST_CASE("cli verify subcommand") {
  std::string cfg = write_cfg(kTinyStationary);
  std::string cmd = std::string(OTFLOW_CLI_PATH) + " verify --config " + cfg +
                    " >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
}
#endif

TEST_CASE("shipped scenarios all exit 0 through cmd_run") {
  for (const char* name :
       {"stationary_disc.cfg", "perturbed_disc.cfg", "ellipse_affine.cfg"}) {
    std::string cfg = std::string(OTFLOW_SCENARIO_DIR) + "/" + name;
    std::string out = tmp_dir();
    INFO(name);
    CHECK(cmd_run(cfg, out) == kExitOk);
  }
}

TEST_CASE("snapshot cadence writes numbered snapshots") {
  std::string body = kTinyStationary;
  body.replace(body.find("monitor_cadence = 10"), 20,
               "monitor_cadence = 10\nsnapshot_cadence = 50");
  std::string out = tmp_dir();
  REQUIRE(cmd_run(write_cfg(body), out) == kExitOk);
  CHECK(fs::exists(out + "/snapshots/snap_000000.txt"));
  CHECK(fs::exists(out + "/snapshots/snap_000001.txt"));
  CHECK(fs::exists(out + "/snapshots/snap_000002.txt"));
}
