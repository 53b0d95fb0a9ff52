#pragma once

#include <array>
#include <memory>
#include <vector>

#include "otflow/core.hpp"
#include "otflow/domain.hpp"

namespace otflow {

enum class NodeClass : std::uint8_t {
  Exterior = 0,
  Ghost = 1,            // outside, 8-adjacent to an inside node
  BoundaryAdjacent = 2, // inside, has a ghost neighbor
  Interior = 3,         // inside, full inside 9-point neighborhood
};

// Weighted quadratic least-squares reconstruction at a ghost's boundary
// foot. The fit is linear in nodal data, so value/gradient/Hessian at the
// foot are stored as weight rows over the stencil. Quadratics are
// reproduced exactly.
struct GhostInfo {
  int node = -1;
  Vec2 foot, normal, tangent;
  double kappa = 0.0;
  std::vector<int> stencil;                     // node indices, ghost included
  std::vector<double> w_val;                    // value weights
  std::vector<Vec2> w_grad;                     // gradient weights
  std::vector<std::array<double, 3>> w_hess;    // (uxx, uxy, uyy) weights
  int self_pos = -1;                            // ghost's slot in the stencil
};

class Grid {
 public:
  std::shared_ptr<const DomainSpec> dom;
  int nx = 0, ny = 0;
  double h = 0.0;
  Vec2 origin;
  std::vector<NodeClass> cls;
  std::vector<Vec2> pos;
  std::vector<int> inside;        // interior + boundary-adjacent, fixed order
  std::vector<int> core;          // inside nodes whose axis neighbors are inside
  std::vector<GhostInfo> ghosts;
  std::vector<int> ghost_slot;    // node -> index into ghosts, or -1
  std::vector<int> boundary_order;  // ghost indices sorted by foot angle
  std::vector<double> quad_w;     // per-node cut-cell area weights (inside only)

  int idx(int i, int j) const { return j * nx + i; }
  Vec2 at(int i, int j) const {
    return {origin.x + i * h, origin.y + j * h};
  }
  bool is_inside_class(int n) const {
    return cls[n] == NodeClass::Interior || cls[n] == NodeClass::BoundaryAdjacent;
  }
  std::size_t n_nodes() const { return cls.size(); }
};

namespace detail {

// Dense solve with partial pivoting; m is row-major n x n. When
// `pivot_ratio` is supplied it receives min|pivot| / max|pivot| as a cheap
// rank signal.
inline bool solve_dense(std::vector<double>& m, std::vector<double>& rhs, int n,
                        int nrhs, double* pivot_ratio = nullptr) {
  double piv_min = std::numeric_limits<double>::infinity(), piv_max = 0.0;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(m[r * n + col]) > std::abs(m[piv * n + col])) piv = r;
    piv_min = std::min(piv_min, std::abs(m[piv * n + col]));
    piv_max = std::max(piv_max, std::abs(m[piv * n + col]));
    if (pivot_ratio) *pivot_ratio = piv_max > 0.0 ? piv_min / piv_max : 0.0;
    if (std::abs(m[piv * n + col]) < 1e-300) return false;
    if (piv != col) {
      for (int c = 0; c < n; ++c) std::swap(m[col * n + c], m[piv * n + c]);
      for (int k = 0; k < nrhs; ++k)
        std::swap(rhs[col * nrhs + k], rhs[piv * nrhs + k]);
    }
    double d = m[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      double f = m[r * n + col] / d;
      if (f == 0.0) continue;
      for (int c = col; c < n; ++c) m[r * n + c] -= f * m[col * n + c];
      for (int k = 0; k < nrhs; ++k)
        rhs[r * nrhs + k] -= f * rhs[col * nrhs + k];
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    for (int k = 0; k < nrhs; ++k) {
      double s = rhs[col * nrhs + k];
      for (int c = col + 1; c < n; ++c)
        s -= m[col * n + c] * rhs[c * nrhs + k];
      rhs[col * nrhs + k] = s / m[col * n + col];
    }
  }
  return true;
}

// Weighted quadratic LSQ at `center` over scaled offsets; fills the weight
// rows of `gi`. Returns false when the normal equations are too
// ill-conditioned at this radius.
inline bool fit_foot_stencil(GhostInfo& gi, const Grid& g, double radius) {
  const double h = g.h;
  gi.stencil.clear();
  int ci = static_cast<int>(std::floor((gi.foot.x - g.origin.x) / h + 0.5));
  int cj = static_cast<int>(std::floor((gi.foot.y - g.origin.y) / h + 0.5));
  int reach = static_cast<int>(std::ceil(radius / h)) + 1;
  // Only interior data plus this ghost's own slot: tangential content comes
  // from current inside values, so the per-ghost boundary equations stay
  // scalar and decoupled.
  for (int j = cj - reach; j <= cj + reach; ++j) {
    for (int i = ci - reach; i <= ci + reach; ++i) {
      if (i < 0 || j < 0 || i >= g.nx || j >= g.ny) continue;
      int n = g.idx(i, j);
      if (g.cls[n] == NodeClass::Exterior || g.cls[n] == NodeClass::Ghost)
        continue;
      if ((g.pos[n] - gi.foot).norm() > radius) continue;
      gi.stencil.push_back(n);
    }
  }
  if (std::find(gi.stencil.begin(), gi.stencil.end(), gi.node) ==
      gi.stencil.end())
    gi.stencil.push_back(gi.node);
  std::sort(gi.stencil.begin(), gi.stencil.end());
  const int m = static_cast<int>(gi.stencil.size());
  if (m < 8) return false;

  // Normal equations A^T W A c = A^T W u; we need S = (A^T W A)^{-1} A^T W.
  std::vector<double> ata(36, 0.0);
  std::vector<double> atw(6 * m, 0.0);
  for (int k = 0; k < m; ++k) {
    Vec2 d = (g.pos[gi.stencil[k]] - gi.foot) / h;
    double wgt = std::exp(-d.norm2());
    double basis[6] = {1.0, d.x, d.y, d.x * d.x, d.x * d.y, d.y * d.y};
    for (int r = 0; r < 6; ++r) {
      atw[r * m + k] = wgt * basis[r];
      for (int c = 0; c < 6; ++c) ata[r * 6 + c] += wgt * basis[r] * basis[c];
    }
  }
  // Condition guard on the scaled normal matrix.
  double diag_min = 1e300, diag_max = 0.0;
  for (int r = 0; r < 6; ++r) {
    diag_min = std::min(diag_min, ata[r * 6 + r]);
    diag_max = std::max(diag_max, ata[r * 6 + r]);
  }
  if (diag_min <= 0.0 || diag_max / diag_min > 1e8) return false;
  if (!solve_dense(ata, atw, 6, m)) return false;

  gi.w_val.assign(m, 0.0);
  gi.w_grad.assign(m, Vec2{});
  gi.w_hess.assign(m, {0.0, 0.0, 0.0});
  for (int k = 0; k < m; ++k) {
    gi.w_val[k] = atw[0 * m + k];
    gi.w_grad[k] = Vec2{atw[1 * m + k] / h, atw[2 * m + k] / h};
    gi.w_hess[k] = {2.0 * atw[3 * m + k] / (h * h), atw[4 * m + k] / (h * h),
                    2.0 * atw[5 * m + k] / (h * h)};
  }
  gi.self_pos = -1;
  for (int k = 0; k < m; ++k)
    if (gi.stencil[k] == gi.node) gi.self_pos = k;
  // The ghost must carry real weight in the normal direction, otherwise the
  // boundary Newton has no handle on it.
  if (gi.self_pos < 0) return false;
  if (std::abs(gi.w_grad[gi.self_pos].dot(gi.normal)) * h < 1e-3) return false;
  return true;
}

}  // namespace detail

// Uniform Cartesian grid over the source domain. `resolution` counts nodes
// across the longer extent of the domain (margin cells included); spacing is
// equal on both axes.
inline Grid build_grid(std::shared_ptr<const DomainSpec> dom, int resolution,
                       int margin = 3) {
  if (resolution < 32) throw BadParameters("grid resolution must be >= 32");
  Grid g;
  g.dom = dom;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int k = 0; k < 1024; ++k) {
    Vec2 b = dom->boundary_at(2.0 * kPi * k / 1024.0);
    xmin = std::min(xmin, b.x);
    xmax = std::max(xmax, b.x);
    ymin = std::min(ymin, b.y);
    ymax = std::max(ymax, b.y);
  }
  double ext = std::max(xmax - xmin, ymax - ymin);
  g.h = ext / (resolution - 1 - 2 * margin);
  if (std::min(xmax - xmin, ymax - ymin) < 6.0 * g.h)
    throw BadParameters(
        "build_grid: domain thinner than six cells at this resolution");
  g.nx = static_cast<int>(std::ceil((xmax - xmin) / g.h)) + 2 * margin + 1;
  g.ny = static_cast<int>(std::ceil((ymax - ymin) / g.h)) + 2 * margin + 1;
  g.origin = {xmin - margin * g.h, ymin - margin * g.h};

  const int n = g.nx * g.ny;
  g.cls.assign(n, NodeClass::Exterior);
  g.pos.resize(n);
  g.ghost_slot.assign(n, -1);
  g.quad_w.assign(n, 0.0);

  std::vector<char> is_in(n, 0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      int id = g.idx(i, j);
      g.pos[id] = g.at(i, j);
      is_in[id] = dom->inside(g.pos[id]) ? 1 : 0;
    }
  }
  auto any_neighbor = [&](int i, int j, auto pred) {
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        if (di == 0 && dj == 0) continue;
        int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny) continue;
        if (pred(g.idx(ii, jj))) return true;
      }
    return false;
  };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      int id = g.idx(i, j);
      if (is_in[id]) continue;
      if (any_neighbor(i, j, [&](int nb) { return is_in[nb] == 1; }))
        g.cls[id] = NodeClass::Ghost;
    }
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      int id = g.idx(i, j);
      if (!is_in[id]) continue;
      bool adj = any_neighbor(
          i, j, [&](int nb) { return g.cls[nb] == NodeClass::Ghost; });
      g.cls[id] = adj ? NodeClass::BoundaryAdjacent : NodeClass::Interior;
      if (i == 0 || j == 0 || i == g.nx - 1 || j == g.ny - 1)
        throw BadParameters("build_grid: inside node on the bounding box edge");
      g.inside.push_back(id);
    }
  for (int id : g.inside) {
    int i = id % g.nx, j = id / g.nx;
    bool core = is_in[g.idx(i - 1, j)] && is_in[g.idx(i + 1, j)] &&
                is_in[g.idx(i, j - 1)] && is_in[g.idx(i, j + 1)];
    if (core) g.core.push_back(id);
  }

  // Cut-cell area weights: full cells get h^2, boundary cells a subsampled
  // inside fraction. Used by the pushforward quadrature, not the solver.
  for (int id : g.inside) {
    int i = id % g.nx, j = id / g.nx;
    bool full = true;
    for (int dj = -1; dj <= 1 && full; ++dj)
      for (int di = -1; di <= 1 && full; ++di) {
        int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= g.nx || jj >= g.ny || !is_in[g.idx(ii, jj)])
          full = false;
      }
    if (full) {
      g.quad_w[id] = g.h * g.h;
    } else {
      int cnt = 0;
      for (int sj = 0; sj < 4; ++sj)
        for (int si = 0; si < 4; ++si) {
          Vec2 q{g.pos[id].x + ((si + 0.5) / 4.0 - 0.5) * g.h,
                 g.pos[id].y + ((sj + 0.5) / 4.0 - 0.5) * g.h};
          if (dom->inside(q)) ++cnt;
        }
      g.quad_w[id] = g.h * g.h * cnt / 16.0;
    }
  }

  // Ghost feet and reconstruction stencils.
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      int id = g.idx(i, j);
      if (g.cls[id] != NodeClass::Ghost) continue;
      GhostInfo gi;
      gi.node = id;
      gi.foot = dom->project(g.pos[id]);
      if (std::abs(dom->phi(gi.foot)) > 1e-9)
        throw BadParameters("build_grid: boundary foot off the level set");
      gi.normal = dom->unit_normal(gi.foot);
      gi.tangent = gi.normal.perp();
      gi.kappa = dom->curvature(gi.foot);
      bool ok = false;
      for (double radius : {2.6, 3.2, 4.0}) {
        if (detail::fit_foot_stencil(gi, g, radius * g.h)) {
          ok = true;
          break;
        }
      }
      if (!ok)
        throw BadParameters(
            "build_grid: no well-conditioned foot stencil; domain too thin "
            "for this resolution");
      g.ghost_slot[id] = static_cast<int>(g.ghosts.size());
      g.ghosts.push_back(std::move(gi));
    }
  }
  if (g.ghosts.size() < 8)
    throw BadParameters("build_grid: degenerate boundary discretization");

  g.boundary_order.resize(g.ghosts.size());
  for (std::size_t k = 0; k < g.ghosts.size(); ++k)
    g.boundary_order[k] = static_cast<int>(k);
  std::sort(g.boundary_order.begin(), g.boundary_order.end(),
            [&](int a, int b) {
              const Vec2 c = dom->centroid;
              Vec2 fa = g.ghosts[a].foot - c;
              Vec2 fb = g.ghosts[b].foot - c;
              double ta = std::atan2(fa.y, fa.x), tb = std::atan2(fb.y, fb.x);
              if (ta != tb) return ta < tb;
              return a < b;
            });
  return g;
}

}  // namespace otflow
