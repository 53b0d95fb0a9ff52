#pragma once

#include <functional>
#include <optional>
#include <sstream>

#include "otflow/boundary.hpp"
#include "otflow/cost.hpp"
#include "otflow/density.hpp"
#include "otflow/grid.hpp"
#include "otflow/parallel.hpp"

namespace otflow {

struct SolverConfig {
  double sigma = 0.5;          // CFL safety factor, <= 0.9
  double tau_steady = 1e-8;    // steady tolerance on sup |udot|
  double boundary_tol = 1e-11; // ghost Newton tolerance
  long max_steps = 20000;
  long min_steps = 0;          // keep stepping even if already steady
  int monitor_cadence = 25;
  int snapshot_cadence = 0;    // 0: final snapshot only
  int max_rejects = 20;
  int max_sweeps = 80;

  void validate() const {
    if (!(sigma > 0.0 && sigma <= 0.9))
      throw BadParameters("SolverConfig: sigma must lie in (0, 0.9]");
    if (!(tau_steady > 0.0) || !(boundary_tol > 0.0))
      throw BadParameters("SolverConfig: tolerances must be positive");
    if (max_steps < 1 || min_steps < 0 || monitor_cadence < 1)
      throw BadParameters("SolverConfig: bad step counts");
  }
};

struct FootEval {
  Vec2 p;       // reconstructed gradient at the foot
  Vec2 y;       // Y(foot, p)
  double res;   // hbar*(y), the boundary residual
  Vec2 beta;    // Gbar_p at the foot
  double margin;  // <beta, nu>
};

// Shared ownership of the pieces the state refers to: FlowState values are
// copied and moved freely (snapshots, trial buffers, test rigs) and must not
// dangle when their rig moves.
struct FlowState {
  std::shared_ptr<const Grid> grid;
  std::shared_ptr<const CostModel> cost;
  std::shared_ptr<const DensityPair> dens;
  std::shared_ptr<const BoundaryOperator> bop;

  double t = 0.0;
  long steps = 0;
  double dt_last = 0.0;

  std::vector<double> u;  // all grid nodes; meaningful on inside + ghost

  // Caches over inside nodes (arrays span all nodes for direct indexing).
  std::vector<Vec2> du;
  std::vector<Mat2> w;
  std::vector<double> udot;
  std::vector<Vec2> T;
  std::vector<double> btil;
  std::vector<double> min_eig_w;
  std::vector<double> det_w;

  // Per-ghost caches.
  std::vector<Vec2> ghost_y_hint;
  std::vector<FootEval> feet;

  // Reductions (deterministic, sequential).
  double sup_udot = 0.0, max_udot = 0.0, min_udot = 0.0;
  double min_eig_w_all = 0.0, max_eig_w_all = 0.0;
  double max_trace_winv = 0.0;
  double bdry_hess_max = 0.0;
  double obliq_margin = 0.0;
  double max_gbar = 0.0;
  double max_hbar_T = 0.0;  // containment of T in the closed target
  bool finite = true;
};

// u_dot at one node from the cached fields.
inline double eval_rhs(const FlowState& s, int node) {
  const Mat2& wn = s.w[node];
  double mineig = wn.min_eig();
  if (!(mineig > 0.0)) {
    std::ostringstream os;
    os << "eval_rhs: w not positive definite at node " << node
       << " (min eigenvalue " << mineig << ")";
    throw NonconvexNode(os.str());
  }
  return std::log(wn.det()) - s.btil[node];
}

namespace detail {

inline void recompute_node(FlowState& s, int id) {
  const Grid& g = *s.grid;
  const int nx = g.nx;
  const double h = g.h;
  const double* u = s.u.data();
  double uc = u[id];
  double ue = u[id + 1], uw = u[id - 1], un = u[id + nx], us = u[id - nx];
  double une = u[id + nx + 1], unw = u[id + nx - 1], use_ = u[id - nx + 1],
         usw = u[id - nx - 1];
  Vec2 grad{(ue - uw) / (2.0 * h), (un - us) / (2.0 * h)};
  double uxx = (ue - 2.0 * uc + uw) / (h * h);
  double uyy = (un - 2.0 * uc + us) / (h * h);
  double uxy = (une - unw - use_ + usw) / (4.0 * h * h);
  const Vec2 x = g.pos[id];
  Vec2 y = y_from_p(*s.cost, x, grad, s.T[id]);
  Mat2 A = s.cost->hess_xx(x, y);
  Mat2 wm{uxx - A.a11, uxy - 0.5 * (A.a12 + A.a21),
          uxy - 0.5 * (A.a12 + A.a21), uyy - A.a22};
  double dcross = std::abs(s.cost->cross(x, y).det());
  double gval = s.dens->g_ext(y);
  double b = dcross * s.dens->f(x) / gval;

  s.du[id] = grad;
  s.w[id] = wm;
  s.T[id] = y;
  s.btil[id] = std::log(b);
  s.det_w[id] = wm.det();
  s.min_eig_w[id] = wm.min_eig();
  s.udot[id] = (s.det_w[id] > 0.0) ? std::log(s.det_w[id]) - s.btil[id]
                                   : std::numeric_limits<double>::quiet_NaN();
}

inline FootEval eval_foot(const FlowState& s, const GhostInfo& gi,
                          std::optional<Vec2> hint) {
  FootEval fe;
  Vec2 p{0.0, 0.0};
  for (std::size_t k = 0; k < gi.stencil.size(); ++k)
    p += gi.w_grad[k] * s.u[gi.stencil[k]];
  fe.p = p;
  fe.y = y_from_p(*s.cost, gi.foot, p, hint);
  fe.res = s.bop->hbar_star(fe.y);
  fe.beta = s.bop->beta_at(gi.foot, p, fe.y);
  fe.margin = fe.beta.dot(gi.normal);
  return fe;
}

}  // namespace detail

// Scalar Newton per ghost on Gbar = 0 at its foot. Foot stencils draw
// tangential content from current inside values only, so the ghost
// equations are mutually decoupled and each solve is a genuine 1-D Newton
// whose derivative <beta, W_ghost> is kept away from zero by obliqueness.
inline void apply_boundary(FlowState& s, const SolverConfig& cfg) {
  const Grid& g = *s.grid;
  const std::size_t ng = g.ghosts.size();
  if (s.ghost_y_hint.size() != ng) s.ghost_y_hint.assign(ng, Vec2{});
  for (std::size_t gi_idx = 0; gi_idx < ng; ++gi_idx) {
    const GhostInfo& gi = g.ghosts[gi_idx];
    std::optional<Vec2> hint;
    if (s.steps > 0 || s.t > 0.0) hint = s.ghost_y_hint[gi_idx];
    FootEval fe = detail::eval_foot(s, gi, hint);
    int it = 0;
    for (; it < cfg.max_sweeps; ++it) {
      s.ghost_y_hint[gi_idx] = fe.y;
      if (std::abs(fe.res) <= cfg.boundary_tol) break;
      double slope = fe.beta.dot(gi.w_grad[gi.self_pos]);
      if (!(std::abs(slope) > 1e-12 / g.h)) {
        std::ostringstream os;
        os << "apply_boundary: obliqueness collapsed at ghost " << gi_idx
           << " (slope " << slope << ")";
        throw BoundaryNewtonFail(os.str());
      }
      double delta = -fe.res / slope;
      // step halving on the 1-D residual
      double lambda = 1.0;
      bool moved = false;
      for (int half = 0; half < 20; ++half) {
        s.u[gi.node] += lambda * delta;
        FootEval trial = detail::eval_foot(s, gi, s.ghost_y_hint[gi_idx]);
        if (std::isfinite(trial.res) &&
            std::abs(trial.res) < std::abs(fe.res)) {
          fe = trial;
          moved = true;
          break;
        }
        s.u[gi.node] -= lambda * delta;
        lambda *= 0.5;
      }
      if (!moved) {
        std::ostringstream os;
        os << "apply_boundary: no descent at ghost " << gi_idx << " (residual "
           << fe.res << ")";
        throw BoundaryNewtonFail(os.str());
      }
    }
    if (std::abs(fe.res) > cfg.boundary_tol) {
      std::ostringstream os;
      os << "apply_boundary: residual " << fe.res << " at ghost " << gi_idx
         << " after " << it << " Newton iterations";
      throw BoundaryNewtonFail(os.str());
    }
  }
}

// Recomputes every cached field and the deterministic reductions. Assumes
// ghost values already satisfy the boundary condition.
inline void recompute(FlowState& s) {
  const Grid& g = *s.grid;
  const std::size_t ni = g.inside.size();
  parallel_for(ni, [&](std::size_t k) { detail::recompute_node(s, g.inside[k]); });

  s.finite = true;
  s.sup_udot = 0.0;
  s.max_udot = -std::numeric_limits<double>::infinity();
  s.min_udot = std::numeric_limits<double>::infinity();
  s.min_eig_w_all = std::numeric_limits<double>::infinity();
  s.max_eig_w_all = -std::numeric_limits<double>::infinity();
  s.max_trace_winv = 0.0;
  s.bdry_hess_max = 0.0;
  s.max_hbar_T = -std::numeric_limits<double>::infinity();
  for (int id : g.inside) {
    double ud = s.udot[id];
    if (!std::isfinite(ud)) {
      s.finite = false;
      continue;
    }
    s.sup_udot = std::max(s.sup_udot, std::abs(ud));
    s.max_udot = std::max(s.max_udot, ud);
    s.min_udot = std::min(s.min_udot, ud);
    auto eig = s.w[id].eig_sym();
    s.min_eig_w_all = std::min(s.min_eig_w_all, eig[0]);
    s.max_eig_w_all = std::max(s.max_eig_w_all, eig[1]);
    if (eig[0] > 0.0)
      s.max_trace_winv = std::max(s.max_trace_winv, s.w[id].trace() / s.det_w[id]);
    if (g.cls[id] == NodeClass::BoundaryAdjacent) {
      const Mat2& wm = s.w[id];
      Mat2 A = s.cost->hess_xx(g.pos[id], s.T[id]);
      s.bdry_hess_max = std::max(s.bdry_hess_max, (wm + A).spectral_norm());
    }
    s.max_hbar_T = std::max(s.max_hbar_T, s.bop->hbar_star(s.T[id]));
  }

  const std::size_t ng = g.ghosts.size();
  s.feet.resize(ng);
  if (s.ghost_y_hint.size() != ng) s.ghost_y_hint.assign(ng, Vec2{});
  parallel_for(ng, [&](std::size_t k) {
    std::optional<Vec2> hint;
    if (s.steps > 0 || s.t > 0.0) hint = s.ghost_y_hint[k];
    s.feet[k] = detail::eval_foot(s, g.ghosts[k], hint);
  });
  s.obliq_margin = std::numeric_limits<double>::infinity();
  s.max_gbar = 0.0;
  for (std::size_t k = 0; k < ng; ++k) {
    s.ghost_y_hint[k] = s.feet[k].y;
    s.obliq_margin = std::min(s.obliq_margin, s.feet[k].margin);
    s.max_gbar = std::max(s.max_gbar, std::abs(s.feet[k].res));
  }
}

inline bool state_valid(const FlowState& s, const SolverConfig& cfg) {
  if (!s.finite) return false;
  if (!(s.min_eig_w_all > 0.0)) return false;
  if (!(s.max_gbar <= 10.0 * cfg.boundary_tol)) return false;
  if (!(s.obliq_margin > 0.0)) return false;
  if (!(s.max_hbar_T <= s.grid->h)) return false;
  return true;
}

// sup |det w - B| over inside nodes: the steady-state (elliptic) residual.
inline double residual_elliptic(const FlowState& s) {
  double r = 0.0;
  for (int id : s.grid->inside)
    r = std::max(r, std::abs(s.det_w[id] - std::exp(s.btil[id])));
  return r;
}

// Independent-path check of det DT = (f/g(T)) e^{udot}: the left side from
// centered differences of the cached map T, the right side from the flow
// quantities. Evaluated on core nodes where the full map neighborhood exists.
inline double detdt_identity_residual(const FlowState& s) {
  const Grid& g = *s.grid;
  double r = 0.0;
  for (int id : g.core) {
    double h2 = 2.0 * g.h;
    Vec2 tx = (s.T[id + 1] - s.T[id - 1]) / h2;
    Vec2 ty = (s.T[id + g.nx] - s.T[id - g.nx]) / h2;
    double det_fd = tx.x * ty.y - tx.y * ty.x;
    double rhs = s.dens->f(g.pos[id]) / s.dens->g_ext(s.T[id]) *
                 std::exp(s.udot[id]);
    r = std::max(r, std::abs(det_fd - rhs));
  }
  return r;
}

// Orientation proxy for injectivity: min det DT over core nodes.
inline double min_det_dt(const FlowState& s) {
  const Grid& g = *s.grid;
  double m = std::numeric_limits<double>::infinity();
  for (int id : g.core) {
    double h2 = 2.0 * g.h;
    Vec2 tx = (s.T[id + 1] - s.T[id - 1]) / h2;
    Vec2 ty = (s.T[id + g.nx] - s.T[id - g.nx]) / h2;
    m = std::min(m, tx.x * ty.y - tx.y * ty.x);
  }
  return m;
}

// Second injectivity proxy: the image quadrilateral of every fully inside
// grid cell keeps positive orientation (both of its triangles), so no two
// cell images overlap with opposite orientation.
inline double min_cell_image_orientation(const FlowState& s) {
  const Grid& g = *s.grid;
  double m = std::numeric_limits<double>::infinity();
  for (int j = 0; j + 1 < g.ny; ++j) {
    for (int i = 0; i + 1 < g.nx; ++i) {
      int a = g.idx(i, j), b = g.idx(i + 1, j);
      int c = g.idx(i + 1, j + 1), d = g.idx(i, j + 1);
      if (!g.is_inside_class(a) || !g.is_inside_class(b) ||
          !g.is_inside_class(c) || !g.is_inside_class(d))
        continue;
      Vec2 A = s.T[a], B = s.T[b], C = s.T[c], D = s.T[d];
      m = std::min(m, (B - A).cross(C - A));
      m = std::min(m, (C - A).cross(D - A));
    }
  }
  return m;
}

// Winding of the boundary feet images around the target centroid, in turns.
inline double boundary_image_winding(const FlowState& s) {
  std::vector<Vec2> images;
  images.reserve(s.feet.size());
  for (int gi : s.grid->boundary_order) images.push_back(s.feet[gi].y);
  return winding_turns(images, s.bop->target->centroid);
}


inline double mean_u(const FlowState& s) {
  double m = 0.0;
  for (int id : s.grid->inside) m += s.u[id];
  return m / static_cast<double>(s.grid->inside.size());
}

// w and Hessian of u reconstructed at a boundary foot; used by the chi
// diagnostic and the boundary coupling monitor.
inline Mat2 foot_w(const FlowState& s, std::size_t ghost_idx) {
  const GhostInfo& gi = s.grid->ghosts[ghost_idx];
  double uxx = 0.0, uxy = 0.0, uyy = 0.0;
  for (std::size_t k = 0; k < gi.stencil.size(); ++k) {
    uxx += gi.w_hess[k][0] * s.u[gi.stencil[k]];
    uxy += gi.w_hess[k][1] * s.u[gi.stencil[k]];
    uyy += gi.w_hess[k][2] * s.u[gi.stencil[k]];
  }
  const FootEval& fe = s.feet[ghost_idx];
  Mat2 A = s.cost->hess_xx(gi.foot, fe.y);
  return Mat2{uxx - A.a11, uxy - 0.5 * (A.a12 + A.a21),
              uxy - 0.5 * (A.a12 + A.a21), uyy - A.a22};
}

// chi = <beta, nu> / (w^{-1} : nu x nu) at one boundary foot; positive on
// accepted states.
inline double chi_factor(const FlowState& s, std::size_t ghost_idx) {
  const GhostInfo& gi = s.grid->ghosts[ghost_idx];
  Mat2 winv = foot_w(s, ghost_idx).inverse();
  double denom = winv.quad(gi.normal, gi.normal);
  return s.feet[ghost_idx].margin / denom;
}

// Tangential second derivative of u along beta at the feet; the continuum
// boundary identity makes it vanish, the discrete value is reported only.
inline double max_u_beta_tau(const FlowState& s) {
  double m = 0.0;
  for (std::size_t k = 0; k < s.grid->ghosts.size(); ++k) {
    const GhostInfo& gi = s.grid->ghosts[k];
    Mat2 wf = foot_w(s, k);
    Mat2 A = s.cost->hess_xx(gi.foot, s.feet[k].y);
    m = std::max(m, std::abs((wf + A).quad(s.feet[k].beta, gi.tangent)));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Initialization.
// ---------------------------------------------------------------------------

struct Initializer {
  std::string name;
  std::function<double(Vec2)> u0;
  std::function<Vec2(Vec2)> grad_u0;  // used by the admissibility report only
};

// Built-in initial data. The bump factor vanishes to second order on the
// source boundary, so it perturbs neither the boundary condition nor the
// boundary image.
inline Initializer make_initializer(const std::string& kind,
                                    const DomainSpec& source, double bump_amp) {
  Initializer init;
  init.name = kind;
  std::function<double(Vec2)> base;
  std::function<Vec2(Vec2)> grad_base;
  if (kind == "quadratic") {  // u = |x|^2/2, stationary for bilinear discs
    base = [](Vec2 x) { return 0.5 * x.norm2(); };
    grad_base = [](Vec2 x) { return x; };
  } else if (kind == "affine") {
    if (source.kind != "ellipse" && source.kind != "disc")
      throw BadParameters("affine initializer needs an ellipse or disc source");
    double a = source.params[0];
    double b = source.params.size() > 1 ? source.params[1] : source.params[0];
    base = [a, b](Vec2 x) {
      return 0.5 * x.x * x.x / a + 0.5 * x.y * x.y / b;
    };
    grad_base = [a, b](Vec2 x) { return Vec2{x.x / a, x.y / b}; };
  } else if (kind == "zero") {  // stationary for the quadratic cost
    base = [](Vec2) { return 0.0; };
    grad_base = [](Vec2) { return Vec2{0.0, 0.0}; };
  } else {
    throw BadParameters("make_initializer: unknown kind '" + kind + "'");
  }
  if (bump_amp == 0.0) {
    init.u0 = base;
    init.grad_u0 = grad_base;
    return init;
  }
  auto phi = source.phi;
  auto gphi = source.grad_phi;
  init.u0 = [base, phi, bump_amp](Vec2 x) {
    double f = phi(x);
    return base(x) + bump_amp * (x.x * x.x - x.y * x.y) * f * f;
  };
  init.grad_u0 = [grad_base, phi, gphi, bump_amp](Vec2 x) {
    double f = phi(x);
    Vec2 gf = gphi(x);
    Vec2 g = grad_base(x);
    double q = x.x * x.x - x.y * x.y;
    return Vec2{g.x + bump_amp * (2.0 * x.x * f * f + q * 2.0 * f * gf.x),
                g.y + bump_amp * (-2.0 * x.y * f * f + q * 2.0 * f * gf.y)};
  };
  return init;
}

// Samples u0, enforces the discrete boundary condition, and runs the three
// admissibility checks: w positive definite, boundary residual small, and
// the boundary image winding once around the target.
inline FlowState initialize_u0(std::shared_ptr<const Grid> grid_ptr,
                               std::shared_ptr<const CostModel> cost,
                               std::shared_ptr<const DensityPair> dens,
                               std::shared_ptr<const BoundaryOperator> bop,
                               const Initializer& init,
                               const SolverConfig& cfg) {
  cfg.validate();
  FlowState s;
  s.grid = std::move(grid_ptr);
  s.cost = std::move(cost);
  s.dens = std::move(dens);
  s.bop = std::move(bop);
  const Grid& grid = *s.grid;
  const std::size_t n = grid.n_nodes();
  s.u.assign(n, 0.0);
  s.du.assign(n, Vec2{});
  s.w.assign(n, Mat2{});
  s.udot.assign(n, 0.0);
  s.T.assign(n, Vec2{});
  s.btil.assign(n, 0.0);
  s.min_eig_w.assign(n, 0.0);
  s.det_w.assign(n, 0.0);
  for (std::size_t id = 0; id < n; ++id)
    if (grid.cls[id] != NodeClass::Exterior) s.u[id] = init.u0(grid.pos[id]);
  // Seed the map caches with the analytic gradient so the first Y inversions
  // start near their roots.
  for (std::size_t id = 0; id < n; ++id)
    if (grid.is_inside_class(static_cast<int>(id)))
      s.T[id] = y_from_p(*s.cost, grid.pos[id], init.grad_u0(grid.pos[id]));

  try {
    apply_boundary(s, cfg);
    recompute(s);
  } catch (const BoundaryNewtonFail& e) {
    throw InadmissibleInitial(std::string("boundary enforcement failed: ") +
                              e.what());
  } catch (const NoConvergence& e) {
    throw InadmissibleInitial(
        std::string("u0 gradient left the admissible range: ") + e.what());
  } catch (const SingularJacobian& e) {
    throw InadmissibleInitial(std::string("degenerate cross-Hessian on u0: ") +
                              e.what());
  }

  if (!s.finite)
    throw InadmissibleInitial("initial caches contain non-finite values");
  if (!(s.min_eig_w_all > 0.0)) {
    std::ostringstream os;
    os << "u0 is not locally uniformly c-convex: min eig w = "
       << s.min_eig_w_all;
    throw InadmissibleInitial(os.str());
  }
  if (!(s.max_gbar <= 10.0 * cfg.boundary_tol)) {
    std::ostringstream os;
    os << "boundary residual " << s.max_gbar << " exceeds tolerance";
    throw InadmissibleInitial(os.str());
  }
  std::vector<Vec2> images;
  images.reserve(s.feet.size());
  for (int gi : grid.boundary_order) images.push_back(s.feet[gi].y);
  double turns = winding_turns(images, s.bop->target->centroid);
  if (std::abs(turns - 1.0) > 0.01) {
    std::ostringstream os;
    os << "boundary image winding " << turns << " != 1: T0 does not cover "
       << "the target boundary";
    throw InadmissibleInitial(os.str());
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stepping.
// ---------------------------------------------------------------------------

struct StepInfo {
  double dt = 0.0;
  int rejects = 0;
};

// One explicit Euler step with the parabolic CFL bound
//   dt = sigma h^2 / (2 max trace(w^{-1}))
// and rejection/halving when positivity, obliqueness, the boundary residual
// or target containment fail on the trial state.
inline StepInfo step(FlowState& s, const SolverConfig& cfg) {
  const Grid& g = *s.grid;
  if (!(s.max_trace_winv > 0.0))
    throw StepRejectedForever("step: invalid trace(w^{-1}) cache");
  double dt0 = cfg.sigma * g.h * g.h / (2.0 * s.max_trace_winv);
  std::vector<double> u_saved = s.u;
  std::vector<double> udot_saved = s.udot;
  for (int attempt = 0; attempt <= cfg.max_rejects; ++attempt) {
    double dt = dt0 * std::pow(0.5, attempt);
    s.u = u_saved;
    for (int id : g.inside) s.u[id] += dt * udot_saved[id];
    bool ok = true;
    // A trial state can also push gradients outside the admissible range of
    // the inverse maps; that rejects the step like any other invariant.
    try {
      apply_boundary(s, cfg);
      recompute(s);
      ok = state_valid(s, cfg);
    } catch (const BoundaryNewtonFail&) {
      ok = false;
    } catch (const NoConvergence&) {
      ok = false;
    } catch (const SingularJacobian&) {
      ok = false;
    }
    if (ok) {
      s.t += dt;
      s.steps += 1;
      s.dt_last = dt;
      return {dt, attempt};
    }
  }
  s.u = std::move(u_saved);
  apply_boundary(s, cfg);
  recompute(s);
  std::ostringstream os;
  os << "step: rejected " << cfg.max_rejects + 1
     << " halvings at t = " << s.t << " (state dumped unchanged)";
  throw StepRejectedForever(os.str());
}

// ---------------------------------------------------------------------------
// Time-marching driver.
// ---------------------------------------------------------------------------

enum class RunStatus { Converged, MaxStepsExceeded };

struct RunResult {
  RunStatus status = RunStatus::MaxStepsExceeded;
  long steps = 0;
  double t_end = 0.0;
  double final_sup_udot = 0.0;
  double final_elliptic_residual = 0.0;
  double c_infinity = 0.0;
  bool c_infinity_valid = false;

  // Envelope bookkeeping (checked at every accepted step).
  double udot0_min = 0.0, udot0_max = 0.0;
  long envelope_violations = 0;
  double eps_num = 0.0;

  // Extremes over every accepted step.
  double min_eig_w_run = std::numeric_limits<double>::infinity();
  double min_obliq_run = std::numeric_limits<double>::infinity();
  double max_gbar_run = 0.0;
  double max_hbar_T_run = -std::numeric_limits<double>::infinity();

  std::vector<std::pair<double, double>> mean_u_history;  // (t, mean u)
};

// Least-squares slope of mean(u)(t) over the tail of a run; the discrete
// stand-in for the translation constant C_infinity.
inline double estimate_c_infinity(
    const std::vector<std::pair<double, double>>& history,
    long min_span_steps = 100) {
  if (static_cast<long>(history.size()) < min_span_steps + 1 ||
      history.size() < 3)
    throw InsufficientHistory(
        "estimate_c_infinity: need >= 3 samples spanning >= 100 steps");
  std::size_t window = std::min<std::size_t>(history.size(),
                                             std::max<std::size_t>(
                                                 min_span_steps + 1, 400));
  std::size_t b = history.size() - window;
  double tm = 0.0, um = 0.0;
  for (std::size_t k = b; k < history.size(); ++k) {
    tm += history[k].first;
    um += history[k].second;
  }
  tm /= window;
  um /= window;
  double stt = 0.0, stu = 0.0;
  for (std::size_t k = b; k < history.size(); ++k) {
    double dt = history[k].first - tm;
    stt += dt * dt;
    stu += dt * (history[k].second - um);
  }
  if (stt == 0.0) return 0.0;
  return stu / stt;
}

// Marches to steady state or the step cap. `on_step` fires after every
// accepted step (and once at t = 0) for monitoring and snapshots.
inline RunResult run(FlowState& s, const SolverConfig& cfg,
                     const std::function<void(const FlowState&)>& on_step = {}) {
  cfg.validate();
  RunResult r;
  r.eps_num = 10.0 * s.grid->h * s.grid->h;
  r.udot0_min = s.min_udot;
  r.udot0_max = s.max_udot;
  auto track = [&] {
    r.min_eig_w_run = std::min(r.min_eig_w_run, s.min_eig_w_all);
    r.min_obliq_run = std::min(r.min_obliq_run, s.obliq_margin);
    r.max_gbar_run = std::max(r.max_gbar_run, s.max_gbar);
    r.max_hbar_T_run = std::max(r.max_hbar_T_run, s.max_hbar_T);
    if (s.min_udot < r.udot0_min - r.eps_num ||
        s.max_udot > r.udot0_max + r.eps_num)
      r.envelope_violations += 1;
    r.mean_u_history.emplace_back(s.t, mean_u(s));
  };
  track();
  if (on_step) on_step(s);
  while (s.steps < cfg.max_steps) {
    if (s.sup_udot < cfg.tau_steady && s.steps >= cfg.min_steps) break;
    step(s, cfg);
    track();
    if (on_step) on_step(s);
  }
  r.steps = s.steps;
  r.t_end = s.t;
  r.final_sup_udot = s.sup_udot;
  r.final_elliptic_residual = residual_elliptic(s);
  r.status = (s.sup_udot < cfg.tau_steady) ? RunStatus::Converged
                                           : RunStatus::MaxStepsExceeded;
  try {
    r.c_infinity = estimate_c_infinity(r.mean_u_history);
    r.c_infinity_valid = true;
  } catch (const InsufficientHistory&) {
    r.c_infinity = 0.0;
    r.c_infinity_valid = false;
  }
  return r;
}

}  // namespace otflow
