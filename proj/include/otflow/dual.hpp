#pragma once

#include <algorithm>
#include <vector>

#include "otflow/flow.hpp"

namespace otflow {

// Scattered samples of the c-transform u*(y) = c(x, y) - u(x) at y = T(x),
// one per inside node, with a uniform-bin index for neighbor queries.
struct DualState {
  std::vector<Vec2> y;
  std::vector<double> ustar;
  std::vector<int> node;

  // bin index
  Vec2 lo, hi;
  double cell = 0.0;
  int bx = 0, by = 0;
  std::vector<std::vector<int>> bins;

  void build_index() {
    lo = {1e300, 1e300};
    hi = {-1e300, -1e300};
    for (const auto& p : y) {
      lo.x = std::min(lo.x, p.x);
      lo.y = std::min(lo.y, p.y);
      hi.x = std::max(hi.x, p.x);
      hi.y = std::max(hi.y, p.y);
    }
    double span = std::max(hi.x - lo.x, hi.y - lo.y) + 1e-12;
    cell = span / std::max(4.0, std::sqrt(static_cast<double>(y.size())));
    bx = static_cast<int>((hi.x - lo.x) / cell) + 2;
    by = static_cast<int>((hi.y - lo.y) / cell) + 2;
    bins.assign(static_cast<std::size_t>(bx) * by, {});
    for (std::size_t k = 0; k < y.size(); ++k) {
      int i = static_cast<int>((y[k].x - lo.x) / cell);
      int j = static_cast<int>((y[k].y - lo.y) / cell);
      bins[static_cast<std::size_t>(j) * bx + i].push_back(static_cast<int>(k));
    }
  }

  // k nearest samples to q, deterministic order (distance, then index).
  std::vector<int> nearest(const Vec2& q, int k) const {
    int ci = static_cast<int>((q.x - lo.x) / cell);
    int cj = static_cast<int>((q.y - lo.y) / cell);
    std::vector<std::pair<double, int>> cand;
    for (int ring = 0; ring < std::max(bx, by) + 1; ++ring) {
      for (int j = cj - ring; j <= cj + ring; ++j) {
        for (int i = ci - ring; i <= ci + ring; ++i) {
          if (std::max(std::abs(i - ci), std::abs(j - cj)) != ring) continue;
          if (i < 0 || j < 0 || i >= bx || j >= by) continue;
          for (int id : bins[static_cast<std::size_t>(j) * bx + i])
            cand.emplace_back((y[id] - q).norm2(), id);
        }
      }
      // One extra ring after enough candidates: a nearer point can still sit
      // in the next shell.
      if (static_cast<int>(cand.size()) >= k && ring >= 1) break;
    }
    std::sort(cand.begin(), cand.end());
    std::vector<int> out;
    for (int i = 0; i < std::min<int>(k, static_cast<int>(cand.size())); ++i)
      out.push_back(cand[i].second);
    return out;
  }
};

inline DualState c_transform(const FlowState& s) {
  DualState d;
  const Grid& g = *s.grid;
  d.y.reserve(g.inside.size());
  d.ustar.reserve(g.inside.size());
  d.node.reserve(g.inside.size());
  for (int id : g.inside) {
    Vec2 yk = s.T[id];
    d.y.push_back(yk);
    d.ustar.push_back(s.cost->eval(g.pos[id], yk) - s.u[id]);
    d.node.push_back(id);
  }
  d.build_index();
  return d;
}

struct MlsFit {
  double value = 0.0;
  Vec2 grad;
  Mat2 hess;
};

// Quadratic moving least squares, starting from the 12 nearest cloud
// samples. Transport images of a Cartesian grid can form strongly
// anisotropic lattices whose 12 nearest neighbors hit too few distinct
// levels per axis, so offsets are scaled per axis and the neighbor count
// grows until the scaled normal equations have full-rank pivots.
inline MlsFit mls_fit(const DualState& d, const Vec2& q, int k = 12) {
  for (int nk : {k, 2 * k, 3 * k, 5 * k}) {
    std::vector<int> nb = d.nearest(q, nk);
    if (static_cast<int>(nb.size()) < 6) break;
    double sx = 0.0, sy = 0.0;
    for (int id : nb) {
      Vec2 dd = d.y[id] - q;
      sx += dd.x * dd.x;
      sy += dd.y * dd.y;
    }
    sx = std::sqrt(sx / nb.size());
    sy = std::sqrt(sy / nb.size());
    double floor = 1e-8 * std::max(sx, sy) + 1e-300;
    sx = std::max(sx, floor);
    sy = std::max(sy, floor);
    double iso = std::max(sx, sy);
    std::vector<double> ata(36, 0.0);
    std::vector<double> atwu(6, 0.0);
    for (int id : nb) {
      Vec2 raw = d.y[id] - q;
      Vec2 dd{raw.x / sx, raw.y / sy};
      double wgt = std::exp(-0.5 * (raw / iso).norm2());
      double basis[6] = {1.0, dd.x, dd.y, dd.x * dd.x, dd.x * dd.y,
                         dd.y * dd.y};
      for (int r = 0; r < 6; ++r) {
        atwu[r] += wgt * basis[r] * d.ustar[id];
        for (int c = 0; c < 6; ++c) ata[r * 6 + c] += wgt * basis[r] * basis[c];
      }
    }
    double pivot_ratio = 0.0;
    std::vector<double> work = ata;
    std::vector<double> sol = atwu;
    if (!detail::solve_dense(work, sol, 6, 1, &pivot_ratio)) continue;
    if (pivot_ratio < 1e-9) continue;
    MlsFit f;
    f.value = sol[0];
    f.grad = Vec2{sol[1] / sx, sol[2] / sy};
    f.hess = Mat2{2.0 * sol[3] / (sx * sx), sol[4] / (sx * sy),
                  sol[4] / (sx * sy), 2.0 * sol[5] / (sy * sy)};
    return f;
  }
  throw PoorLocalFit("mls_fit: no full-rank neighborhood around the query");
}

// max |X(grad u*(T(x)), T(x)) - x|: the discrete statement of T* = T^{-1}.
inline double inverse_consistency(const FlowState& s, const DualState& d,
                                  int stride = 1) {
  const Grid& g = *s.grid;
  double worst = 0.0;
  for (std::size_t k = 0; k < g.inside.size();
       k += static_cast<std::size_t>(stride)) {
    int id = g.inside[k];
    Vec2 yq = s.T[id];
    MlsFit f = mls_fit(d, yq);
    Vec2 xr = x_from_q(*s.cost, f.grad, yq, g.pos[id]);
    worst = std::max(worst, (xr - g.pos[id]).norm());
  }
  return worst;
}

// Dual structure functions of the reverse flow:
//   A*(y,q) = hess_y c at x = X(q,y);  B* = |det cross| g(y)/f_ext(X(q,y)).
inline std::pair<Mat2, double> dual_structure_eval(const CostModel& cost,
                                                   const DensityPair& dens,
                                                   const Vec2& y,
                                                   const Vec2& q) {
  Vec2 x = x_from_q(cost, q, y);
  Mat2 astar = cost.hess_yy(x, y);
  double bstar =
      std::abs(cost.cross(x, y).det()) * dens.g(y) / dens.f_ext(x);
  return {astar, bstar};
}

// Conjugacy residual max |w*(T(x)) - M^T w^{-1} M| with M the cross-Hessian
// at (x, T(x)); w* is reconstructed from the scattered dual cloud, which
// costs one order of h.
inline double w_conjugacy_residual(const FlowState& s, const DualState& d,
                                   int stride = 4) {
  const Grid& g = *s.grid;
  double worst = 0.0;
  for (std::size_t k = 0; k < g.core.size();
       k += static_cast<std::size_t>(stride)) {
    int id = g.core[k];
    Vec2 yq = s.T[id];
    MlsFit f = mls_fit(d, yq);
    Mat2 wstar = f.hess - s.cost->hess_yy(g.pos[id], yq);
    Mat2 m = s.cost->cross(g.pos[id], yq);
    Mat2 expect = m.transpose() * s.w[id].inverse() * m;
    worst = std::max(worst, (wstar - expect).max_abs());
  }
  return worst;
}

// Finite-difference check of udot*(y) = -udot(T*(y)) between two states:
// u* at the new image point compared against the previous cloud.
inline double dual_time_derivative_residual(const FlowState& prev,
                                            const DualState& dual_prev,
                                            const FlowState& next,
                                            int stride = 4) {
  double dt = next.t - prev.t;
  if (!(dt > 0.0))
    throw BadParameters("dual_time_derivative_residual: states not ordered");
  const Grid& g = *next.grid;
  double worst = 0.0;
  for (std::size_t k = 0; k < g.inside.size();
       k += static_cast<std::size_t>(stride)) {
    int id = g.inside[k];
    Vec2 ynew = next.T[id];
    double ustar_new = next.cost->eval(g.pos[id], ynew) - next.u[id];
    MlsFit f = mls_fit(dual_prev, ynew);
    double fd = (ustar_new - f.value) / dt;
    worst = std::max(worst, std::abs(fd + next.udot[id]));
  }
  return worst;
}

// Residual of the dual boundary condition h(X(grad u*, y)) = 0 at the
// boundary image samples; verified, never enforced.
inline double dual_boundary_residual(const FlowState& s, const DualState& d) {
  double worst = 0.0;
  for (std::size_t k = 0; k < s.feet.size(); ++k) {
    Vec2 yq = s.feet[k].y;
    MlsFit f = mls_fit(d, yq);
    Vec2 xr = x_from_q(*s.cost, f.grad, yq, s.grid->ghosts[k].foot);
    worst = std::max(worst, std::abs(s.grid->dom->rho(xr)));
  }
  return worst;
}

}  // namespace otflow
