#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "otflow/diagnostics.hpp"

namespace otflow {

constexpr int kExitOk = 0;
constexpr int kExitAuditFail = 1;
constexpr int kExitNoConvergence = 2;
constexpr int kExitInadmissible = 3;
constexpr int kExitVerdictMismatch = 4;
constexpr int kExitIo = 5;

// ---------------------------------------------------------------------------
// Minimal TOML-style config: [section] headers, key = value lines, values
// are numbers, quoted strings, booleans or numeric arrays. '#' comments.
// ---------------------------------------------------------------------------

struct ConfigValue {
  enum class Kind { Number, String, Bool, Array } kind = Kind::Number;
  double num = 0.0;
  std::string str;
  bool b = false;
  std::vector<double> arr;
};

using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

namespace detail {
inline std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

inline ConfigTable parse_config_text(const std::string& text) {
  ConfigTable table;
  std::string section;
  std::istringstream is(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string line = raw;
    std::size_t hash = line.find('#');
    bool in_quote = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
      if (line[k] == '"') in_quote = !in_quote;
      if (line[k] == '#' && !in_quote) {
        hash = k;
        break;
      }
      hash = std::string::npos;
    }
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw IoError("config line " + std::to_string(lineno) +
                      ": bad section header");
      section = detail::strip(line.substr(1, line.size() - 2));
      table[section];
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config line " + std::to_string(lineno) + ": expected '='");
    std::string key = detail::strip(line.substr(0, eq));
    std::string val = detail::strip(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw IoError("config line " + std::to_string(lineno) + ": empty key/value");
    ConfigValue cv;
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"')
        throw IoError("config line " + std::to_string(lineno) +
                      ": unterminated string");
      cv.kind = ConfigValue::Kind::String;
      cv.str = val.substr(1, val.size() - 2);
    } else if (val == "true" || val == "false") {
      cv.kind = ConfigValue::Kind::Bool;
      cv.b = (val == "true");
    } else if (val.front() == '[') {
      if (val.back() != ']')
        throw IoError("config line " + std::to_string(lineno) + ": bad array");
      cv.kind = ConfigValue::Kind::Array;
      std::string body = val.substr(1, val.size() - 2);
      std::istringstream as(body);
      std::string item;
      while (std::getline(as, item, ',')) {
        item = detail::strip(item);
        if (item.empty()) continue;
        char* end = nullptr;
        double d = std::strtod(item.c_str(), &end);
        if (end == item.c_str() || *end != '\0')
          throw IoError("config line " + std::to_string(lineno) +
                        ": bad array entry '" + item + "'");
        cv.arr.push_back(d);
      }
    } else {
      char* end = nullptr;
      cv.num = std::strtod(val.c_str(), &end);
      if (end == val.c_str() || *end != '\0')
        throw IoError("config line " + std::to_string(lineno) +
                      ": bad value '" + val + "'");
      cv.kind = ConfigValue::Kind::Number;
    }
    table[section][key] = cv;
  }
  return table;
}

class ConfigReader {
 public:
  explicit ConfigReader(ConfigTable t) : table_(std::move(t)) {}

  double number(const std::string& sec, const std::string& key,
                std::optional<double> def = std::nullopt) const {
    const ConfigValue* v = find(sec, key);
    if (!v) {
      if (def) return *def;
      throw IoError("config: missing " + sec + "." + key);
    }
    if (v->kind != ConfigValue::Kind::Number)
      throw IoError("config: " + sec + "." + key + " must be a number");
    return v->num;
  }
  std::string str(const std::string& sec, const std::string& key,
                  std::optional<std::string> def = std::nullopt) const {
    const ConfigValue* v = find(sec, key);
    if (!v) {
      if (def) return *def;
      throw IoError("config: missing " + sec + "." + key);
    }
    if (v->kind != ConfigValue::Kind::String)
      throw IoError("config: " + sec + "." + key + " must be a string");
    return v->str;
  }
  std::vector<double> array(const std::string& sec, const std::string& key,
                            std::vector<double> def = {}) const {
    const ConfigValue* v = find(sec, key);
    if (!v) return def;
    if (v->kind == ConfigValue::Kind::Array) return v->arr;
    if (v->kind == ConfigValue::Kind::Number) return {v->num};
    throw IoError("config: " + sec + "." + key + " must be an array");
  }

 private:
  const ConfigValue* find(const std::string& sec, const std::string& key) const {
    auto si = table_.find(sec);
    if (si == table_.end()) return nullptr;
    auto ki = si->second.find(key);
    if (ki == si->second.end()) return nullptr;
    return &ki->second;
  }
  ConfigTable table_;
};

// ---------------------------------------------------------------------------
// Scenario assembly.
// ---------------------------------------------------------------------------

struct ScenarioConfig {
  std::string cost_kind;
  std::vector<double> cost_params;
  std::string source_kind, target_kind;
  std::vector<double> source_params, target_params;
  std::string density_kind = "uniform";
  double density_scale_f = 1.0;
  std::string init_kind;
  double init_bump = 0.0;
  int resolution = 64;
  SolverConfig solver;
  int audit_samples = 4096;
  std::uint64_t seed = 1234;
  int pushforward_boxes = 200;
  std::string raw_text;  // echoed into the run directory
};

inline ScenarioConfig parse_scenario(const std::string& text) {
  ConfigReader r(parse_config_text(text));
  ScenarioConfig c;
  c.raw_text = text;
  c.cost_kind = r.str("cost", "kind");
  c.cost_params = r.array("cost", "params");
  c.source_kind = r.str("source", "kind");
  c.source_params = r.array("source", "params");
  c.target_kind = r.str("target", "kind");
  c.target_params = r.array("target", "params");
  c.density_kind = r.str("densities", "kind", std::string("uniform"));
  c.density_scale_f = r.number("densities", "scale_f", 1.0);
  c.init_kind = r.str("initializer", "kind");
  c.init_bump = r.number("initializer", "bump", 0.0);
  c.resolution = static_cast<int>(r.number("grid", "resolution", 64));
  c.solver.sigma = r.number("solver", "sigma", 0.5);
  c.solver.tau_steady = r.number("solver", "tau_steady", 1e-8);
  c.solver.boundary_tol = r.number("solver", "boundary_tol", 1e-11);
  c.solver.max_steps = static_cast<long>(r.number("solver", "max_steps", 20000));
  c.solver.min_steps = static_cast<long>(r.number("solver", "min_steps", 0));
  c.solver.monitor_cadence =
      static_cast<int>(r.number("solver", "monitor_cadence", 25));
  c.solver.snapshot_cadence =
      static_cast<int>(r.number("solver", "snapshot_cadence", 0));
  c.audit_samples = static_cast<int>(r.number("audit", "samples", 4096));
  c.seed = static_cast<std::uint64_t>(r.number("audit", "seed", 1234));
  c.pushforward_boxes =
      static_cast<int>(r.number("diagnostics", "pushforward_boxes", 200));
  if (c.resolution < 32) throw BadParameters("scenario: resolution must be >= 32");
  return c;
}

inline ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_scenario(ss.str());
}

struct Scenario {
  ScenarioConfig cfg;
  std::shared_ptr<CostModel> cost;
  std::shared_ptr<DomainSpec> source, target;
  std::shared_ptr<DensityPair> dens;
  double delta1 = 0.0, delta1_star = 0.0;
  std::optional<ExtendedDefiningFunction> h_source;
  std::shared_ptr<BoundaryOperator> bop;
};

inline Scenario build_scenario(const ScenarioConfig& cfg) {
  Scenario s;
  s.cfg = cfg;
  s.cost = std::make_shared<CostModel>(make_cost(cfg.cost_kind, cfg.cost_params));
  s.source = std::make_shared<DomainSpec>(
      make_domain(cfg.source_kind, cfg.source_params));
  s.target = std::make_shared<DomainSpec>(
      make_domain(cfg.target_kind, cfg.target_params));
  if (cfg.density_kind != "uniform")
    throw BadParameters("density kind '" + cfg.density_kind + "' not registered");
  s.dens = std::make_shared<DensityPair>(
      make_uniform_densities(s.source, s.target, cfg.density_scale_f));
  return s;
}

// ---------------------------------------------------------------------------
// Audits (cmd_verify).
// ---------------------------------------------------------------------------

struct AuditRow {
  std::string quantity;
  double value = 0.0;
  Vec2 where_x, where_y;
  double threshold = 0.0;
  bool bigger_is_better = true;
  bool pass = false;
};

inline std::string audit_row_line(const AuditRow& a) {
  using detail::fmt_g17;
  std::ostringstream os;
  os << a.quantity << "," << fmt_g17(a.value) << "," << fmt_g17(a.where_x.x)
     << "," << fmt_g17(a.where_x.y) << "," << fmt_g17(a.where_y.x) << ","
     << fmt_g17(a.where_y.y) << "," << fmt_g17(a.threshold) << ","
     << (a.pass ? "PASS" : "FAIL");
  return os.str();
}

// Runs every structural audit. Fills `scenario` with the certified
// constructions (h, h*, G) on success.
inline std::vector<AuditRow> run_audits(Scenario& s) {
  std::vector<AuditRow> rows;
  auto add = [&rows](std::string name, double value, Vec2 wx, Vec2 wy,
                     double thr, bool bigger) {
    AuditRow a;
    a.quantity = std::move(name);
    a.value = value;
    a.where_x = wx;
    a.where_y = wy;
    a.threshold = thr;
    a.bigger_is_better = bigger;
    a.pass = bigger ? (value > thr) : (value <= thr);
    rows.push_back(a);
    return a.pass;
  };
  const int ns = s.cfg.audit_samples;
  auto src_sampler = s.source->closure_sampler();
  auto tgt_sampler = s.target->closure_sampler();

  SelfCheckReport sc = derivative_selfcheck(*s.cost, src_sampler, tgt_sampler,
                                            256, s.cfg.seed + 1);
  add("derivative_selfcheck_max_rel_err", sc.worst(), {}, {}, 1e-5, false);

  // (A1) round trip through the inverse maps.
  {
    Rng rng(s.cfg.seed + 2);
    double worst_y = 0.0, worst_x = 0.0;
    Vec2 wx, wy;
    for (int k = 0; k < 1000; ++k) {
      Vec2 x = src_sampler(rng);
      Vec2 y = tgt_sampler(rng);
      Vec2 yb = y_from_p(*s.cost, x, s.cost->grad_x(x, y), y);
      Vec2 xb = x_from_q(*s.cost, s.cost->grad_y(x, y), y, x);
      if ((yb - y).norm() > worst_y) {
        worst_y = (yb - y).norm();
        wx = x;
        wy = y;
      }
      worst_x = std::max(worst_x, (xb - x).norm());
    }
    add("a1_roundtrip_y", worst_y, wx, wy, 1e-10, false);
    add("a1_roundtrip_x", worst_x, wx, wy, 1e-10, false);
  }

  AuditResult a2 =
      audit_nondegeneracy(*s.cost, src_sampler, tgt_sampler, ns, s.cfg.seed + 3);
  add("a2_min_abs_det_cross", a2.value, a2.arg_x, a2.arg_y, 1e-8, true);

  AuditResult a3 =
      audit_mtw(*s.cost, s.source->interior_sampler(), s.target->interior_sampler(),
                std::min(ns, 10000), s.cfg.seed + 4);
  add("a3w_min_contraction", a3.value, a3.arg_x, a3.arg_y, -1e-5 - 1e-300, true);

  AuditResult c1 = audit_uniform_c_convexity(*s.source, *s.target, *s.cost,
                                             256, 64, s.cfg.seed + 5);
  s.delta1 = c1.value;
  add("uniform_c_convexity_delta1", c1.value, c1.arg_x, c1.arg_y, 0.0, true);

  AuditResult c2 = audit_uniform_cstar_convexity(*s.target, *s.source, *s.cost,
                                                 256, 64, s.cfg.seed + 6);
  s.delta1_star = c2.value;
  add("uniform_cstar_convexity_delta1", c2.value, c2.arg_x, c2.arg_y, 0.0, true);

  quadrature_masses(*s.dens, *s.source, *s.target);
  add("mass_balance_error", s.dens->mass_error(), {}, {}, 1e-6, false);

  if (s.delta1 > 0.0) {
    try {
      s.h_source = build_extended_defining(*s.source, *s.target, *s.cost,
                                           s.delta1, DefiningSide::Source);
      add("h_collar_margin", s.h_source->collar_margin, {}, {},
          s.h_source->delta0 - 1e-300, true);
    } catch (const OtError& e) {
      add(std::string("h_construction_failed(") + e.what() + ")", 0.0, {}, {},
          0.0, true);
    }
  }
  if (s.delta1_star > 0.0) {
    try {
      BoundaryOperatorOptions opt;
      opt.seed = s.cfg.seed + 7;
      s.bop = std::make_shared<BoundaryOperator>(build_boundary_operator(
          s.cost, s.source, s.target, s.delta1_star, opt));
      add("g_construction_delta2", s.bop->delta2_observed, {}, {},
          0.0, true);
    } catch (const OtError& e) {
      add(std::string("g_construction_failed(") + e.what() + ")", 0.0, {}, {},
          0.0, true);
    }
  }
  return rows;
}

inline bool audits_pass(const std::vector<AuditRow>& rows) {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return true;
}

inline void write_audit_csv(const std::string& path,
                            const std::vector<AuditRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "quantity,value,where_x1,where_x2,where_y1,where_y2,threshold,verdict\n";
  for (const auto& r : rows) os << audit_row_line(r) << "\n";
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

inline int cmd_verify(const std::string& config_path,
                      const std::string& out_csv = "") {
  try {
    ScenarioConfig cfg = load_scenario_file(config_path);
    Scenario s = build_scenario(cfg);
    std::vector<AuditRow> rows = run_audits(s);
    if (!out_csv.empty()) write_audit_csv(out_csv, rows);
    for (const auto& r : rows)
      std::printf("%s\n", audit_row_line(r).c_str());
    return audits_pass(rows) ? kExitOk : kExitAuditFail;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const OtError& e) {
    std::fprintf(stderr, "audit error: %s\n", e.what());
    return kExitAuditFail;
  }
}

struct RunArtifacts {
  RunResult result;
  std::vector<MonitorRow> rows;
  std::vector<Verdict> verdicts;
  bool converged = false;
};

// The full verdict battery over one finished run. cmd_run assembles it from
// in-memory data and cmd_report from the persisted files; both paths must
// call this one function so the lines can be compared byte-for-byte.
inline std::vector<Verdict> assemble_verdicts(const Scenario& s,
                                              const FlowState& state,
                                              const std::vector<MonitorRow>& rows,
                                              double c_inf, bool c_inf_valid,
                                              bool converged) {
  const SolverConfig& sc = s.cfg.solver;
  const double h = state.grid->h;
  std::vector<Verdict> v;
  v.push_back(check_envelope(rows, 10.0 * h * h));
  v.push_back(check_c2_coupling(rows));
  v.push_back(check_positivity(rows));
  v.push_back(check_obliqueness(rows));
  v.push_back(check_boundary_residual(rows, 10.0 * sc.boundary_tol));
  v.push_back(check_detdt(rows, h));
  v.push_back(check_dual_inverse(rows, h));
  v.push_back(check_elliptic(rows, sc.tau_steady));
  v.push_back(check_mass(rows, 1e-6));
  v.push_back(check_c_infinity(c_inf_valid ? c_inf : 1e300, sc.tau_steady));
  {
    Verdict pv;
    pv.name = "pushforward";
    if (converged) {
      PushforwardResult pr = pushforward_test(state, s.cfg.pushforward_boxes,
                                              s.cfg.seed + 9, false);
      pv.witness = pr.max_discrepancy;
      pv.threshold = pr.threshold;
      pv.pass = pr.max_discrepancy <= pr.threshold;
    } else {
      pv.witness = 1e300;
      pv.threshold = 0.0;
      pv.pass = false;
    }
    v.push_back(pv);
  }
  v.push_back(check_chi(state));
  v.push_back(check_boundary_winding(state));
  return v;
}

// Everything cmd_run does after the audits, callable in-process by tests:
// initialize, march, and assemble monitor rows plus verdicts.
inline RunArtifacts run_scenario(Scenario& s, FlowState& state,
                                 const std::function<void(const FlowState&)>&
                                     snapshot_hook = {}) {
  const SolverConfig& sc = s.cfg.solver;
  RunArtifacts art;
  std::vector<MonitorRow>& rows = art.rows;
  auto dual_err = [&](const FlowState& st, int stride) {
    DualState d = c_transform(st);
    return inverse_consistency(st, d, stride);
  };
  auto on_step = [&](const FlowState& st) {
    bool cadence = (st.steps % sc.monitor_cadence == 0);
    if (cadence) rows.push_back(fill_monitor_row(st, dual_err(st, 4)));
    if (snapshot_hook && sc.snapshot_cadence > 0 &&
        st.steps % sc.snapshot_cadence == 0)
      snapshot_hook(st);
  };
  art.result = run(state, sc, on_step);
  if (rows.empty() || rows.back().t != state.t)
    rows.push_back(fill_monitor_row(state, dual_err(state, 1)));
  else {
    rows.back() = fill_monitor_row(state, dual_err(state, 1));
  }
  if (snapshot_hook) snapshot_hook(state);
  art.converged = art.result.status == RunStatus::Converged;
  art.verdicts =
      assemble_verdicts(s, state, rows, art.result.c_infinity,
                        art.result.c_infinity_valid, art.converged);
  return art;
}

inline bool verdicts_pass(const std::vector<Verdict>& vs) {
  for (const auto& v : vs)
    if (!v.pass) return false;
  return true;
}

inline void write_history_csv(
    const std::string& path,
    const std::vector<std::pair<double, double>>& hist) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << "t,mean_u\n";
  for (const auto& [t, m] : hist)
    os << detail::fmt_g17(t) << "," << detail::fmt_g17(m) << "\n";
}

inline std::vector<std::pair<double, double>> read_history_csv(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(is, line) || line != "t,mean_u")
    throw IoError("history csv header mismatch");
  std::vector<std::pair<double, double>> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    char* end = nullptr;
    double t = std::strtod(line.c_str(), &end);
    if (*end != ',') throw IoError("bad history row");
    double m = std::strtod(end + 1, nullptr);
    out.emplace_back(t, m);
  }
  return out;
}

inline int cmd_run(const std::string& config_path, const std::string& out_dir) {
  namespace fs = std::filesystem;
  try {
    ScenarioConfig cfg = load_scenario_file(config_path);
    Scenario s = build_scenario(cfg);
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/snapshots");
    {
      std::ofstream os(out_dir + "/scenario.cfg", std::ios::binary);
      os << cfg.raw_text;
    }
    std::vector<AuditRow> audits = run_audits(s);
    write_audit_csv(out_dir + "/audits.csv", audits);
    if (!audits_pass(audits)) {
      std::fprintf(stderr, "run: audits failed, see %s/audits.csv\n",
                   out_dir.c_str());
      return kExitAuditFail;
    }
    auto grid = std::make_shared<const Grid>(build_grid(s.source, cfg.resolution));
    Initializer init = make_initializer(cfg.init_kind, *s.source, cfg.init_bump);
    FlowState state;
    try {
      state = initialize_u0(grid, s.cost, s.dens, s.bop, init, cfg.solver);
    } catch (const InadmissibleInitial& e) {
      std::fprintf(stderr, "run: inadmissible initial data: %s\n", e.what());
      return kExitInadmissible;
    }
    long snap_counter = 0;
    auto snapshot_hook = [&](const FlowState& st) {
      char name[64];
      std::snprintf(name, sizeof(name), "/snapshots/snap_%06ld.txt",
                    snap_counter++);
      write_snapshot(out_dir + name, st);
    };
    RunArtifacts art = run_scenario(s, state, snapshot_hook);
    write_monitor_csv(out_dir + "/monitor.csv", art.rows);
    write_history_csv(out_dir + "/history.csv", art.result.mean_u_history);
    write_verdicts(out_dir + "/verdicts.txt", art.verdicts);
    write_snapshot(out_dir + "/final_state.txt", state);
    {
      std::ofstream os(out_dir + "/summary.txt", std::ios::binary);
      os << "status,"
         << (art.converged ? "converged" : "max_steps_exceeded") << "\n"
         << "steps," << art.result.steps << "\n"
         << "t_end," << detail::fmt_g17(art.result.t_end) << "\n"
         << "final_sup_udot," << detail::fmt_g17(art.result.final_sup_udot)
         << "\n"
         << "c_infinity," << detail::fmt_g17(art.result.c_infinity) << "\n"
         << "envelope_violations," << art.result.envelope_violations << "\n"
         // diagnostic only: tangential boundary identity at the final state
         << "max_u_beta_tau," << detail::fmt_g17(max_u_beta_tau(state))
         << "\n"
         << "min_cell_orientation,"
         << detail::fmt_g17(min_cell_image_orientation(state)) << "\n";
    }
    for (const auto& v : art.verdicts)
      std::printf("%s\n", verdict_line(v).c_str());
    if (!art.converged) return kExitNoConvergence;
    return verdicts_pass(art.verdicts) ? kExitOk : kExitVerdictMismatch;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const InadmissibleInitial& e) {
    std::fprintf(stderr, "inadmissible: %s\n", e.what());
    return kExitInadmissible;
  } catch (const OtError& e) {
    std::fprintf(stderr, "run error: %s\n", e.what());
    return kExitAuditFail;
  }
}

inline int cmd_report(const std::string& dir) {
  namespace fs = std::filesystem;
  try {
    if (!fs::exists(dir + "/monitor.csv") || !fs::exists(dir + "/verdicts.txt") ||
        !fs::exists(dir + "/scenario.cfg"))
      return kExitIo;
    ScenarioConfig cfg = load_scenario_file(dir + "/scenario.cfg");
    Scenario s = build_scenario(cfg);
    std::vector<AuditRow> audits = run_audits(s);
    if (!s.bop) return kExitAuditFail;
    auto grid = std::make_shared<const Grid>(build_grid(s.source, cfg.resolution));
    Initializer init = make_initializer(cfg.init_kind, *s.source, cfg.init_bump);
    FlowState state = initialize_u0(grid, s.cost, s.dens, s.bop, init,
                                    cfg.solver);
    load_snapshot_u(dir + "/final_state.txt", state, cfg.solver);

    std::vector<MonitorRow> rows = read_monitor_csv(dir + "/monitor.csv");
    auto hist = read_history_csv(dir + "/history.csv");

    double c_inf = 1e300;
    bool c_inf_valid = false;
    try {
      c_inf = estimate_c_infinity(hist);
      c_inf_valid = true;
    } catch (const InsufficientHistory&) {
    }
    bool converged = !rows.empty() && rows.back().sup_udot < cfg.solver.tau_steady;
    std::vector<Verdict> v = assemble_verdicts(s, state, rows, c_inf,
                                               c_inf_valid, converged);

    // Plot-ready slices.
    const double h = grid->h;
    fs::create_directories(dir + "/report");
    {
      std::ofstream os(dir + "/report/envelope.csv", std::ios::binary);
      os << "t,min_udot,max_udot,envelope_lo,envelope_hi\n";
      double lo = rows.front().min_udot - 10.0 * h * h;
      double hi = rows.front().max_udot + 10.0 * h * h;
      for (const auto& r : rows)
        os << detail::fmt_g17(r.t) << "," << detail::fmt_g17(r.min_udot) << ","
           << detail::fmt_g17(r.max_udot) << "," << detail::fmt_g17(lo) << ","
           << detail::fmt_g17(hi) << "\n";
    }
    {
      std::ofstream os(dir + "/report/margins.csv", std::ios::binary);
      os << "t,obliqueness_margin,min_eig_w\n";
      for (const auto& r : rows)
        os << detail::fmt_g17(r.t) << ","
           << detail::fmt_g17(r.obliqueness_margin) << ","
           << detail::fmt_g17(r.min_eig_w) << "\n";
    }
    {
      std::ofstream os(dir + "/report/residuals.csv", std::ios::binary);
      os << "t,elliptic_residual,detdt_residual,max_gbar,dual_inverse_error\n";
      for (const auto& r : rows)
        os << detail::fmt_g17(r.t) << ","
           << detail::fmt_g17(r.elliptic_residual) << ","
           << detail::fmt_g17(r.detdt_residual) << ","
           << detail::fmt_g17(r.max_gbar) << ","
           << detail::fmt_g17(r.dual_inverse_error) << "\n";
    }

    std::vector<std::string> stored = read_lines(dir + "/verdicts.txt");
    std::vector<std::string> fresh;
    for (const auto& vv : v) fresh.push_back(verdict_line(vv));
    if (stored != fresh) {
      std::fprintf(stderr, "report: verdict mismatch against %s/verdicts.txt\n",
                   dir.c_str());
      for (std::size_t k = 0; k < std::max(stored.size(), fresh.size()); ++k) {
        const std::string& a = k < stored.size() ? stored[k] : std::string("<none>");
        const std::string& b = k < fresh.size() ? fresh[k] : std::string("<none>");
        if (a != b)
          std::fprintf(stderr, "  stored: %s\n  fresh : %s\n", a.c_str(),
                       b.c_str());
      }
      return kExitVerdictMismatch;
    }
    for (const auto& line : fresh) std::printf("%s\n", line.c_str());
    return kExitOk;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const OtError& e) {
    std::fprintf(stderr, "report error: %s\n", e.what());
    return kExitIo;
  }
}

}  // namespace otflow
