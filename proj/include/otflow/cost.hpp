#pragma once

#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "otflow/core.hpp"

namespace otflow {

// Index conventions follow the usual optimal-transport shorthand:
//   cross(i,j)   = d2c / dx_i dy_j
//   third_xxy[l] = matrix (i,j) of d3c / dx_i dx_j dy_l
//   third_xyy[l] = matrix (i,j) of d3c / dx_l dy_i dy_j
// The inverse cross-Hessian is used with the y index first: invcross(k,l)
// below means the (k,l) entry of cross^{-1} with k a y index, l an x index,
// so that dY^k/dp_l = invcross(k,l).
struct CostModel {
  std::string name;
  std::function<double(Vec2, Vec2)> eval;
  std::function<Vec2(Vec2, Vec2)> grad_x;
  std::function<Vec2(Vec2, Vec2)> grad_y;
  std::function<Mat2(Vec2, Vec2)> hess_xx;
  std::function<Mat2(Vec2, Vec2)> hess_yy;
  std::function<Mat2(Vec2, Vec2)> cross;  // c_{i,j}
  std::function<Ten3(Vec2, Vec2)> third_xxy;  // c_{ij,l}
  std::function<Ten3(Vec2, Vec2)> third_xyy;  // c_{l,ij}

  // Optional closed-form inverses; the Newton path is used when absent.
  std::function<Vec2(Vec2, Vec2)> y_of_p;
  std::function<Vec2(Vec2, Vec2)> x_of_q;

  Box x_box{{-8.0, -8.0}, {8.0, 8.0}};
  Box y_box{{-8.0, -8.0}, {8.0, 8.0}};
};

struct CostJet {
  double c = 0.0;
  Vec2 gx, gy;
  Mat2 cxx, cyy, cxy;  // cxy = cross Hessian c_{i,j}
  Ten3 t_xxy, t_xyy;
};

inline CostJet cost_jet(const CostModel& cost, const Vec2& x, const Vec2& y) {
  CostJet j;
  j.c = cost.eval(x, y);
  j.gx = cost.grad_x(x, y);
  j.gy = cost.grad_y(x, y);
  j.cxx = cost.hess_xx(x, y);
  j.cyy = cost.hess_yy(x, y);
  j.cxy = cost.cross(x, y);
  j.t_xxy = cost.third_xxy(x, y);
  j.t_xyy = cost.third_xyy(x, y);
  return j;
}

namespace detail {
inline void check_cross_invertible(const Mat2& m, const char* where) {
  if (std::abs(m.det()) < 1e-14) {
    std::ostringstream os;
    os << where << ": cross-Hessian determinant " << m.det()
       << " is numerically singular (condition A2 violated)";
    throw SingularJacobian(os.str());
  }
}
}  // namespace detail

// Y(x, p): the unique y with grad_x c(x, y) = p. Damped Newton with the
// cross-Hessian as Jacobian; `hint` warm-starts the iteration.
inline Vec2 y_from_p(const CostModel& cost, const Vec2& x, const Vec2& p,
                     std::optional<Vec2> hint = std::nullopt) {
  if (cost.y_of_p) return cost.y_of_p(x, p);
  Vec2 y = hint.value_or(cost.y_box.center());
  double res = (cost.grad_x(x, y) - p).norm();
  for (int it = 0; it < 50; ++it) {
    if (res <= 1e-13) return y;
    Mat2 jac = cost.cross(x, y);
    detail::check_cross_invertible(jac, "y_from_p");
    Vec2 step = jac.inverse() * (p - cost.grad_x(x, y));
    double lambda = 1.0;
    for (int half = 0; half < 30; ++half) {
      Vec2 trial = cost.y_box.clamp(y + step * lambda);
      double r = (cost.grad_x(x, trial) - p).norm();
      if (std::isfinite(r) && r < res) {
        y = trial;
        res = r;
        break;
      }
      lambda *= 0.5;
      if (half == 29) {
        std::ostringstream os;
        os << "y_from_p: no descent at residual " << res
           << " (p likely outside the admissible gradient range)";
        throw NoConvergence(os.str());
      }
    }
  }
  if (res <= 1e-12) {
    return y;
  }
  std::ostringstream os;
  os << "y_from_p: residual " << res << " after 50 iterations at x=(" << x.x
     << "," << x.y << "), p=(" << p.x << "," << p.y << ")";
  throw NoConvergence(os.str());
}

// X(q, y): the unique x with grad_y c(x, y) = q. Jacobian is the transposed
// cross-Hessian.
inline Vec2 x_from_q(const CostModel& cost, const Vec2& q, const Vec2& y,
                     std::optional<Vec2> hint = std::nullopt) {
  if (cost.x_of_q) return cost.x_of_q(q, y);
  Vec2 x = hint.value_or(cost.x_box.center());
  double res = (cost.grad_y(x, y) - q).norm();
  for (int it = 0; it < 50; ++it) {
    if (res <= 1e-13) return x;
    Mat2 jac = cost.cross(x, y).transpose();
    detail::check_cross_invertible(jac, "x_from_q");
    Vec2 step = jac.inverse() * (q - cost.grad_y(x, y));
    double lambda = 1.0;
    for (int half = 0; half < 30; ++half) {
      Vec2 trial = cost.x_box.clamp(x + step * lambda);
      double r = (cost.grad_y(trial, y) - q).norm();
      if (std::isfinite(r) && r < res) {
        x = trial;
        res = r;
        break;
      }
      lambda *= 0.5;
      if (half == 29) {
        std::ostringstream os;
        os << "x_from_q: no descent at residual " << res;
        throw NoConvergence(os.str());
      }
    }
  }
  if (res <= 1e-12) {
    return x;
  }
  std::ostringstream os;
  os << "x_from_q: residual " << res << " after 50 iterations";
  throw NoConvergence(os.str());
}

// A(x, p) = hess_x c(x, y) at y = Y(x, p).
inline Mat2 structure_A(const CostModel& cost, const Vec2& x, const Vec2& p,
                        std::optional<Vec2> hint = std::nullopt) {
  Vec2 y = y_from_p(cost, x, p, hint);
  return cost.hess_xx(x, y);
}

// Source/target densities with extensions of each to the whole plane.
struct DensityPair {
  std::function<double(Vec2)> f;      // on the source
  std::function<double(Vec2)> g;      // on the target
  std::function<double(Vec2)> f_ext;  // global extension of f
  std::function<double(Vec2)> g_ext;  // global extension of g
  double lambda = 0.0;                // lower density bound
  double Lambda = 0.0;                // upper density bound
  double mass_f = 0.0;
  double mass_g = 0.0;
  double mass_error() const { return std::abs(mass_f - mass_g); }
};

// B(x, p) = |det cross| * f(x) / g_ext(Y(x, p)).
inline double structure_B(const CostModel& cost, const DensityPair& dens,
                          const Vec2& x, const Vec2& p,
                          std::optional<Vec2> hint = std::nullopt) {
  Vec2 y = y_from_p(cost, x, p, hint);
  double dcross = std::abs(cost.cross(x, y).det());
  double gval = dens.g_ext(y);
  if (!(gval > 0.0)) {
    throw BadParameters("structure_B: extended target density not positive");
  }
  return dcross * dens.f(x) / gval;
}

inline double structure_B_log(const CostModel& cost, const DensityPair& dens,
                              const Vec2& x, const Vec2& p,
                              std::optional<Vec2> hint = std::nullopt) {
  return std::log(structure_B(cost, dens, x, p, hint));
}

using PointSampler = std::function<Vec2(Rng&)>;

struct AuditResult {
  double value = 0.0;  // sampled extremum
  Vec2 arg_x, arg_y;   // location of the extremum
};

// Condition (A2): min |det cross-Hessian| over sampled closure pairs.
inline AuditResult audit_nondegeneracy(const CostModel& cost,
                                       const PointSampler& sample_src,
                                       const PointSampler& sample_tgt,
                                       int samples, std::uint64_t seed) {
  Rng rng(seed);
  AuditResult r;
  r.value = std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    Vec2 x = sample_src(rng);
    Vec2 y = sample_tgt(rng);
    double d = std::abs(cost.cross(x, y).det());
    if (d < r.value) {
      r.value = d;
      r.arg_x = x;
      r.arg_y = y;
    }
  }
  return r;
}

// Condition (A3w): sampled minimum of D^2_pp A contracted with xi ⊗ xi and
// eta ⊗ eta for unit xi ⊥ eta. The p-Hessian of A is taken by second-order
// central differences; fourth derivatives of c are never requested.
inline AuditResult audit_mtw(const CostModel& cost,
                             const PointSampler& sample_src,
                             const PointSampler& sample_tgt, int samples,
                             std::uint64_t seed, double fd_step = 1e-4) {
  Rng rng(seed);
  AuditResult r;
  r.value = std::numeric_limits<double>::infinity();
  int done = 0, attempts = 0;
  while (done < samples && attempts < 20 * samples) {
    ++attempts;
    Vec2 x = sample_src(rng);
    Vec2 y = sample_tgt(rng);
    Vec2 xi = rng.unit();
    Vec2 eta = xi.perp();
    try {
      Vec2 p = cost.grad_x(x, y);
      auto a_eta = [&](const Vec2& pp) {
        Mat2 A = structure_A(cost, x, pp, y);
        return A.quad(eta, eta);
      };
      double second = (a_eta(p + xi * fd_step) - 2.0 * a_eta(p) +
                       a_eta(p - xi * fd_step)) /
                      (fd_step * fd_step);
      if (second < r.value) {
        r.value = second;
        r.arg_x = x;
        r.arg_y = y;
      }
      ++done;
    } catch (const NoConvergence&) {
      // p + fd_step*xi fell outside the admissible range; resample.
    }
  }
  if (done < samples) {
    throw NoConvergence("audit_mtw: too many samples outside the admissible range");
  }
  return r;
}

struct SelfCheckReport {
  double max_rel_grad_x = 0.0;
  double max_rel_grad_y = 0.0;
  double max_rel_hess_xx = 0.0;
  double max_rel_hess_yy = 0.0;
  double max_rel_cross = 0.0;
  double max_rel_third_xxy = 0.0;
  double max_rel_third_xyy = 0.0;
  double worst() const {
    double w = max_rel_grad_x;
    w = std::max(w, max_rel_grad_y);
    w = std::max(w, max_rel_hess_xx);
    w = std::max(w, max_rel_hess_yy);
    w = std::max(w, max_rel_cross);
    w = std::max(w, max_rel_third_xxy);
    w = std::max(w, max_rel_third_xyy);
    return w;
  }
  bool pass(double tol = 1e-5) const { return worst() <= tol; }
};

// Every analytic derivative supplier against central differences of the one
// below it, at random admissible points.
inline SelfCheckReport derivative_selfcheck(const CostModel& cost,
                                            const PointSampler& sample_src,
                                            const PointSampler& sample_tgt,
                                            int trials, std::uint64_t seed,
                                            double step = 1e-5) {
  Rng rng(seed);
  SelfCheckReport rep;
  const Vec2 e[2] = {{1.0, 0.0}, {0.0, 1.0}};
  auto rel = [](double got, double want, double scale) {
    return std::abs(got - want) / std::max(1.0, std::max(std::abs(want), scale));
  };
  for (int t = 0; t < trials; ++t) {
    Vec2 x = sample_src(rng);
    Vec2 y = sample_tgt(rng);
    CostJet j = cost_jet(cost, x, y);
    double scale = std::max(std::abs(j.c), 1.0);
    for (int i = 0; i < 2; ++i) {
      double fdx = (cost.eval(x + e[i] * step, y) - cost.eval(x - e[i] * step, y)) /
                   (2.0 * step);
      double fdy = (cost.eval(x, y + e[i] * step) - cost.eval(x, y - e[i] * step)) /
                   (2.0 * step);
      rep.max_rel_grad_x = std::max(rep.max_rel_grad_x, rel(j.gx[i], fdx, scale));
      rep.max_rel_grad_y = std::max(rep.max_rel_grad_y, rel(j.gy[i], fdy, scale));
      Vec2 gxp = cost.grad_x(x + e[i] * step, y);
      Vec2 gxm = cost.grad_x(x - e[i] * step, y);
      Vec2 gxyp = cost.grad_x(x, y + e[i] * step);
      Vec2 gxym = cost.grad_x(x, y - e[i] * step);
      Vec2 gyp = cost.grad_y(x, y + e[i] * step);
      Vec2 gym = cost.grad_y(x, y - e[i] * step);
      for (int k = 0; k < 2; ++k) {
        // hess_xx(k,i) = d/dx_i of grad_x[k]; cross(k,i) = d/dy_i of grad_x[k]
        rep.max_rel_hess_xx = std::max(
            rep.max_rel_hess_xx,
            rel(j.cxx(k, i), (gxp[k] - gxm[k]) / (2.0 * step), scale));
        rep.max_rel_cross = std::max(
            rep.max_rel_cross,
            rel(j.cxy(k, i), (gxyp[k] - gxym[k]) / (2.0 * step), scale));
        rep.max_rel_hess_yy = std::max(
            rep.max_rel_hess_yy,
            rel(j.cyy(k, i), (gyp[k] - gym[k]) / (2.0 * step), scale));
      }
      // c_{kl,i} = d/dy_i of hess_xx(k,l); c_{i,kl} = d/dx_i of hess_yy(k,l)
      Mat2 hxxp = cost.hess_xx(x, y + e[i] * step);
      Mat2 hxxm = cost.hess_xx(x, y - e[i] * step);
      Mat2 hyyp = cost.hess_yy(x + e[i] * step, y);
      Mat2 hyym = cost.hess_yy(x - e[i] * step, y);
      for (int k = 0; k < 2; ++k) {
        for (int l = 0; l < 2; ++l) {
          rep.max_rel_third_xxy = std::max(
              rep.max_rel_third_xxy,
              rel(j.t_xxy[i](k, l), (hxxp(k, l) - hxxm(k, l)) / (2.0 * step),
                  scale));
          rep.max_rel_third_xyy = std::max(
              rep.max_rel_third_xyy,
              rel(j.t_xyy[i](k, l), (hyyp(k, l) - hyym(k, l)) / (2.0 * step),
                  scale));
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Built-in cost catalog: bilinear x.y, quadratic -|x-y|^2/2, and
// -sqrt(1+|x-y|^2). The first two have constant structure; the third has a
// nonconstant A and exercises every code path.
// ---------------------------------------------------------------------------

inline CostModel make_bilinear_cost() {
  CostModel m;
  m.name = "bilinear";
  m.eval = [](Vec2 x, Vec2 y) { return x.dot(y); };
  m.grad_x = [](Vec2, Vec2 y) { return y; };
  m.grad_y = [](Vec2 x, Vec2) { return x; };
  m.hess_xx = [](Vec2, Vec2) { return Mat2::zero(); };
  m.hess_yy = [](Vec2, Vec2) { return Mat2::zero(); };
  m.cross = [](Vec2, Vec2) { return Mat2::identity(); };
  m.third_xxy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  m.third_xyy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  m.y_of_p = [](Vec2, Vec2 p) { return p; };
  m.x_of_q = [](Vec2 q, Vec2) { return q; };
  return m;
}

inline CostModel make_quadratic_cost() {
  CostModel m;
  m.name = "quadratic";
  m.eval = [](Vec2 x, Vec2 y) { return -0.5 * (x - y).norm2(); };
  m.grad_x = [](Vec2 x, Vec2 y) { return y - x; };
  m.grad_y = [](Vec2 x, Vec2 y) { return x - y; };
  m.hess_xx = [](Vec2, Vec2) { return Mat2::identity() * -1.0; };
  m.hess_yy = [](Vec2, Vec2) { return Mat2::identity() * -1.0; };
  m.cross = [](Vec2, Vec2) { return Mat2::identity(); };
  m.third_xxy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  m.third_xyy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  m.y_of_p = [](Vec2 x, Vec2 p) { return x + p; };
  m.x_of_q = [](Vec2 q, Vec2 y) { return y + q; };
  return m;
}

// c(x,y) = -sqrt(1 + |x-y|^2), written in r = x - y:
//   c_i = -r_i/s, c_{ij} = -d_{ij}/s + r_i r_j / s^3 with s = sqrt(1+|r|^2).
// y derivatives flip the sign of each d/dr.
inline CostModel make_sqrt_cost() {
  CostModel m;
  m.name = "sqrt";
  auto s_of = [](Vec2 r) { return std::sqrt(1.0 + r.norm2()); };
  auto d2 = [s_of](Vec2 r) {  // F_{r_i r_j} for F(r) = -sqrt(1+|r|^2)
    double s = s_of(r);
    double s3 = s * s * s;
    Mat2 out = Mat2::identity() * (-1.0 / s) + Mat2::outer(r, r) * (1.0 / s3);
    return out;
  };
  auto d3 = [s_of](Vec2 r) {  // F_{r_i r_j r_l}, returned as ten[l](i,j)
    double s = s_of(r);
    double s3 = s * s * s, s5 = s3 * s * s;
    Ten3 out;
    for (int l = 0; l < 2; ++l) {
      Mat2 t = Mat2::zero();
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          double v = 0.0;
          v += (i == j ? r[l] : 0.0) / s3;
          v += (i == l ? r[j] : 0.0) / s3;
          v += (j == l ? r[i] : 0.0) / s3;
          v -= 3.0 * r[i] * r[j] * r[l] / s5;
          t.at(i, j) = v;
        }
      }
      out[l] = t;
    }
    return out;
  };
  m.eval = [s_of](Vec2 x, Vec2 y) { return -s_of(x - y); };
  m.grad_x = [s_of](Vec2 x, Vec2 y) {
    Vec2 r = x - y;
    return r * (-1.0 / s_of(r));
  };
  m.grad_y = [s_of](Vec2 x, Vec2 y) {
    Vec2 r = x - y;
    return r * (1.0 / s_of(r));
  };
  m.hess_xx = [d2](Vec2 x, Vec2 y) { return d2(x - y); };
  m.hess_yy = [d2](Vec2 x, Vec2 y) { return d2(x - y); };
  m.cross = [d2](Vec2 x, Vec2 y) { return d2(x - y) * -1.0; };
  m.third_xxy = [d3](Vec2 x, Vec2 y) {  // c_{ij,l} = -F_{r_i r_j r_l}
    Ten3 t = d3(x - y);
    return Ten3{t[0] * -1.0, t[1] * -1.0};
  };
  m.third_xyy = [d3](Vec2 x, Vec2 y) {  // c_{l,ij} = +F_{r_i r_j r_l}
    return d3(x - y);
  };
  m.y_of_p = [](Vec2 x, Vec2 p) {
    double n2 = p.norm2();
    if (n2 >= 1.0) throw NoConvergence("sqrt cost: |p| >= 1 has no preimage");
    return x + p * (1.0 / std::sqrt(1.0 - n2));
  };
  m.x_of_q = [](Vec2 q, Vec2 y) {
    double n2 = q.norm2();
    if (n2 >= 1.0) throw NoConvergence("sqrt cost: |q| >= 1 has no preimage");
    return y + q * (1.0 / std::sqrt(1.0 - n2));
  };
  return m;
}

inline CostModel make_cost(const std::string& kind,
                           const std::vector<double>& params = {}) {
  if (kind == "bilinear") return make_bilinear_cost();
  if (kind == "quadratic") return make_quadratic_cost();
  if (kind == "sqrt") return make_sqrt_cost();
  (void)params;
  throw BadParameters("make_cost: unknown cost kind '" + kind + "'");
}

// Drops the closed-form inverse maps; used by tests that exercise the Newton
// inversion path against the closed forms.
inline CostModel without_closed_forms(CostModel m) {
  m.y_of_p = nullptr;
  m.x_of_q = nullptr;
  return m;
}

}  // namespace otflow
