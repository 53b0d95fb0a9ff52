#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "otflow/dual.hpp"
#include "otflow/flow.hpp"

namespace otflow {

// One monitor record. Column order is frozen; monitor.csv is the interface.
struct MonitorRow {
  double t = 0.0;
  double dt = 0.0;
  double max_udot = 0.0;
  double min_udot = 0.0;
  double sup_udot = 0.0;
  double min_eig_w = 0.0;
  double max_eig_w = 0.0;
  double bdry_hess_max = 0.0;
  double obliqueness_margin = 0.0;
  double max_gbar = 0.0;
  double detdt_residual = 0.0;
  double dual_inverse_error = 0.0;
  double elliptic_residual = 0.0;
  double mass_error = 0.0;
};

inline const char* monitor_header() {
  return "t,dt,max_udot,min_udot,sup_udot,min_eig_w,max_eig_w,bdry_hess_max,"
         "obliqueness_margin,max_gbar,detdt_residual,dual_inverse_error,"
         "elliptic_residual,mass_error";
}

inline MonitorRow fill_monitor_row(const FlowState& s,
                                   double dual_inverse_err) {
  MonitorRow r;
  r.t = s.t;
  r.dt = s.dt_last;
  r.max_udot = s.max_udot;
  r.min_udot = s.min_udot;
  r.sup_udot = s.sup_udot;
  r.min_eig_w = s.min_eig_w_all;
  r.max_eig_w = s.max_eig_w_all;
  r.bdry_hess_max = s.bdry_hess_max;
  r.obliqueness_margin = s.obliq_margin;
  r.max_gbar = s.max_gbar;
  r.detdt_residual = detdt_identity_residual(s);
  r.dual_inverse_error = dual_inverse_err;
  r.elliptic_residual = residual_elliptic(s);
  r.mass_error = s.dens->mass_error();
  return r;
}

namespace detail {
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline std::string monitor_row_line(const MonitorRow& r) {
  using detail::fmt_g17;
  std::string out;
  const double vals[14] = {r.t, r.dt, r.max_udot, r.min_udot, r.sup_udot,
                           r.min_eig_w, r.max_eig_w, r.bdry_hess_max,
                           r.obliqueness_margin, r.max_gbar, r.detdt_residual,
                           r.dual_inverse_error, r.elliptic_residual,
                           r.mass_error};
  for (int k = 0; k < 14; ++k) {
    if (k) out += ',';
    out += fmt_g17(vals[k]);
  }
  return out;
}

inline void write_monitor_csv(const std::string& path,
                              const std::vector<MonitorRow>& rows) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << monitor_header() << "\n";
  for (const auto& r : rows) os << monitor_row_line(r) << "\n";
}

inline std::vector<MonitorRow> read_monitor_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(is, line) || line != monitor_header())
    throw IoError("monitor csv header mismatch in " + path);
  std::vector<MonitorRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double v[14];
    const char* p = line.c_str();
    char* end = nullptr;
    for (int k = 0; k < 14; ++k) {
      v[k] = std::strtod(p, &end);
      if (end == p) throw IoError("bad monitor row in " + path);
      p = (*end == ',') ? end + 1 : end;
    }
    MonitorRow r;
    r.t = v[0];
    r.dt = v[1];
    r.max_udot = v[2];
    r.min_udot = v[3];
    r.sup_udot = v[4];
    r.min_eig_w = v[5];
    r.max_eig_w = v[6];
    r.bdry_hess_max = v[7];
    r.obliqueness_margin = v[8];
    r.max_gbar = v[9];
    r.detdt_residual = v[10];
    r.dual_inverse_error = v[11];
    r.elliptic_residual = v[12];
    r.mass_error = v[13];
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Verdicts: structural checks over the monitor series and end-of-run data.
// ---------------------------------------------------------------------------

struct Verdict {
  std::string name;
  bool pass = false;
  double witness = 0.0;
  double threshold = 0.0;
};

inline std::string verdict_line(const Verdict& v) {
  return v.name + "," + (v.pass ? "PASS" : "FAIL") + "," +
         detail::fmt_g17(v.witness) + "," + detail::fmt_g17(v.threshold);
}

inline void write_verdicts(const std::string& path,
                           const std::vector<Verdict>& vs) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& v : vs) os << verdict_line(v) << "\n";
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

// Every row's [min udot, max udot] inside the t=0 envelope widened by
// eps_num.
inline Verdict check_envelope(const std::vector<MonitorRow>& rows,
                              double eps_num) {
  Verdict v;
  v.name = "udot_envelope";
  if (rows.empty()) return v;
  double lo = rows.front().min_udot - eps_num;
  double hi = rows.front().max_udot + eps_num;
  double worst = 0.0;
  for (const auto& r : rows) {
    worst = std::max(worst, lo - r.min_udot);
    worst = std::max(worst, r.max_udot - hi);
  }
  v.witness = worst;
  v.threshold = 0.0;
  v.pass = worst <= 0.0;
  return v;
}

// Interior/boundary coupling: max eig w <= C_fit (1 + boundary Hessian) with
// C_fit frozen at t=0 (doubled for slack). A structural check with a fitted
// constant; the sharp coupling constant is not computable.
inline Verdict check_c2_coupling(const std::vector<MonitorRow>& rows) {
  Verdict v;
  v.name = "c2_coupling";
  if (rows.empty()) return v;
  double cfit =
      2.0 * rows.front().max_eig_w / (1.0 + rows.front().bdry_hess_max);
  double worst = 0.0;
  for (const auto& r : rows)
    worst = std::max(worst, r.max_eig_w - cfit * (1.0 + r.bdry_hess_max));
  v.witness = worst;
  v.threshold = 0.0;
  v.pass = worst <= 0.0;
  return v;
}

inline Verdict check_positivity(const std::vector<MonitorRow>& rows) {
  Verdict v;
  v.name = "positivity_w";
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) m = std::min(m, r.min_eig_w);
  v.witness = m;
  v.threshold = 0.0;
  v.pass = m > 0.0;
  return v;
}

inline Verdict check_obliqueness(const std::vector<MonitorRow>& rows) {
  Verdict v;
  v.name = "obliqueness";
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) m = std::min(m, r.obliqueness_margin);
  v.witness = m;
  v.threshold = 0.0;
  v.pass = m > 0.0;
  return v;
}

inline Verdict check_boundary_residual(const std::vector<MonitorRow>& rows,
                                       double tol) {
  Verdict v;
  v.name = "boundary_residual";
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.max_gbar);
  v.witness = m;
  v.threshold = tol;
  v.pass = m <= tol;
  return v;
}

inline Verdict check_detdt(const std::vector<MonitorRow>& rows, double h) {
  Verdict v;
  v.name = "detdt_identity";
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.detdt_residual);
  v.witness = m;
  v.threshold = 20.0 * h * h;
  v.pass = m <= v.threshold;
  return v;
}

inline Verdict check_dual_inverse(const std::vector<MonitorRow>& rows,
                                  double h) {
  Verdict v;
  v.name = "dual_inverse";
  v.witness = rows.empty() ? 1e300 : rows.back().dual_inverse_error;
  v.threshold = 10.0 * h * h;
  v.pass = v.witness <= v.threshold;
  return v;
}

inline Verdict check_elliptic(const std::vector<MonitorRow>& rows,
                              double tau_steady) {
  Verdict v;
  v.name = "elliptic_residual";
  v.witness = rows.empty() ? 1e300 : rows.back().elliptic_residual;
  v.threshold = 10.0 * tau_steady;
  v.pass = v.witness <= v.threshold;
  return v;
}

inline Verdict check_mass(const std::vector<MonitorRow>& rows, double tol) {
  Verdict v;
  v.name = "mass_balance";
  v.witness = rows.empty() ? 1e300 : rows.back().mass_error;
  v.threshold = tol;
  v.pass = v.witness <= tol;
  return v;
}

inline Verdict check_c_infinity(double c_inf, double tau_steady) {
  Verdict v;
  v.name = "c_infinity";
  v.witness = std::abs(c_inf);
  v.threshold = tau_steady;
  v.pass = v.witness <= tau_steady;
  return v;
}

inline Verdict check_chi(const FlowState& s) {
  Verdict v;
  v.name = "chi_positive";
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < s.grid->ghosts.size(); ++k)
    m = std::min(m, chi_factor(s, k));
  v.witness = m;
  v.threshold = 0.0;
  v.pass = m > 0.0;
  return v;
}

inline Verdict check_boundary_winding(const FlowState& s) {
  Verdict v;
  v.name = "boundary_winding";
  v.witness = boundary_image_winding(s);
  v.threshold = 0.01;
  v.pass = std::abs(v.witness - 1.0) <= v.threshold;
  return v;
}

// ---------------------------------------------------------------------------
// Pushforward test.
// ---------------------------------------------------------------------------

struct PushforwardResult {
  double max_discrepancy = 0.0;  // relative to the box target mass
  double threshold = 0.0;
  int boxes = 0;
};

// Compares source mass carried into random boxes E inside the target against
// the target mass of E, relative to the latter. `map` supplies the transport
// image of each inside node; swapping it for the identity is the negative
// control.
inline PushforwardResult pushforward_boxes(
    const Grid& grid, const DensityPair& dens, const DomainSpec& target,
    const std::function<Vec2(int)>& map, int trials, std::uint64_t seed) {
  Rng rng(seed);
  PushforwardResult out;
  out.boxes = trials;
  double rscale = std::sqrt(target.area() / kPi);
  out.threshold = 5.0 * (grid.h + 1.0 / std::sqrt(static_cast<double>(trials)));
  for (int trial = 0; trial < trials; ++trial) {
    Vec2 c;
    double hx = 0.0, hy = 0.0;
    bool ok = false;
    for (int tries = 0; tries < 400 && !ok; ++tries) {
      c = rng.in_box(target.bbox);
      if (!target.inside(c)) continue;
      hx = rng.uniform(0.15, 0.45) * rscale;
      hy = rng.uniform(0.15, 0.45) * rscale;
      ok = target.inside({c.x - hx, c.y - hy}) &&
           target.inside({c.x - hx, c.y + hy}) &&
           target.inside({c.x + hx, c.y - hy}) &&
           target.inside({c.x + hx, c.y + hy});
    }
    if (!ok) continue;  // deterministic given the seed
    double mu = 0.0;
    for (int id : grid.inside) {
      Vec2 img = map(id);
      if (std::abs(img.x - c.x) <= hx && std::abs(img.y - c.y) <= hy)
        mu += grid.quad_w[id] * dens.f(grid.pos[id]);
    }
    // Box target mass by midpoint subsampling; the box lies inside the
    // target so no indicator is involved.
    double nu = 0.0;
    const int m = 24;
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i) {
        Vec2 q{c.x - hx + (2.0 * hx) * (i + 0.5) / m,
               c.y - hy + (2.0 * hy) * (j + 0.5) / m};
        nu += dens.g(q);
      }
    nu *= (2.0 * hx) * (2.0 * hy) / (m * m);
    double rel = std::abs(mu - nu) / std::max(nu, 1e-12);
    out.max_discrepancy = std::max(out.max_discrepancy, rel);
  }
  return out;
}

inline PushforwardResult pushforward_test(const FlowState& s, int trials,
                                          std::uint64_t seed,
                                          bool require_converged = true,
                                          double tau_steady = 1e-8) {
  if (require_converged && !(s.sup_udot < 10.0 * tau_steady))
    throw NotConverged("pushforward_test: state has not reached steady state");
  const FlowState* sp = &s;
  return pushforward_boxes(
      *s.grid, *s.dens, *s.bop->target,
      [sp](int id) { return sp->T[id]; }, trials, seed);
}

// ---------------------------------------------------------------------------
// Snapshot files: header "nx ny h t", then one row per non-exterior node:
// i j x y u udot T1 T2 w11 w12 w22. Ghost rows carry zeros in the cache
// columns.
// ---------------------------------------------------------------------------

inline void write_snapshot(const std::string& path, const FlowState& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  const Grid& g = *s.grid;
  using detail::fmt_g17;
  os << g.nx << " " << g.ny << " " << fmt_g17(g.h) << " " << fmt_g17(s.t)
     << "\n";
  for (std::size_t id = 0; id < g.n_nodes(); ++id) {
    if (g.cls[id] == NodeClass::Exterior) continue;
    int i = static_cast<int>(id) % g.nx;
    int j = static_cast<int>(id) / g.nx;
    bool in = g.is_inside_class(static_cast<int>(id));
    os << i << " " << j << " " << fmt_g17(g.pos[id].x) << " "
       << fmt_g17(g.pos[id].y) << " " << fmt_g17(s.u[id]) << " "
       << fmt_g17(in ? s.udot[id] : 0.0) << " " << fmt_g17(in ? s.T[id].x : 0.0)
       << " " << fmt_g17(in ? s.T[id].y : 0.0) << " "
       << fmt_g17(in ? s.w[id].a11 : 0.0) << " "
       << fmt_g17(in ? s.w[id].a12 : 0.0) << " "
       << fmt_g17(in ? s.w[id].a22 : 0.0) << "\n";
  }
}

// Reads nodal u values back into a fresh state built over the same grid; all
// caches are recomputed, so the result is byte-equivalent to the state that
// was dumped.
inline void load_snapshot_u(const std::string& path, FlowState& s,
                            const SolverConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  const Grid& g = *s.grid;
  int nx = 0, ny = 0;
  double h = 0.0, t = 0.0;
  if (!(is >> nx >> ny >> h >> t) || nx != g.nx || ny != g.ny)
    throw IoError("snapshot grid mismatch in " + path);
  int i = 0, j = 0;
  double x, y, u, rest[7];
  while (is >> i >> j >> x >> y >> u >> rest[0] >> rest[1] >> rest[2] >>
         rest[3] >> rest[4] >> rest[5]) {
    if (i < 0 || j < 0 || i >= g.nx || j >= g.ny)
      throw IoError("snapshot node out of range in " + path);
    s.u[g.idx(i, j)] = u;
  }
  s.t = t;
  apply_boundary(s, cfg);
  recompute(s);
}

}  // namespace otflow
