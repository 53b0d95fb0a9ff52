#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <vector>

#include "otflow/cost.hpp"
#include "otflow/core.hpp"

namespace otflow {

struct BoundaryPoint {
  Vec2 pos;
  Vec2 normal;   // outward unit normal
  Vec2 tangent;  // unit tangent (normal rotated by +90 degrees)
  double kappa = 0.0;
  double theta = 0.0;
};

namespace detail {
// Gauss-Legendre nodes/weights on [0,1].
inline void gauss_legendre01(int n, std::vector<double>& nodes,
                             std::vector<double>& weights) {
  nodes.resize(n);
  weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[n - 1 - i] = 0.5 * (1.0 + x);
    weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * pp * pp);
  }
}
}  // namespace detail

// A smooth bounded planar domain given by an analytic defining function
// (negative inside). Distance, normals and curvature come from the level
// set; quadrature and boundary sampling use the star-shaped parameterization
// around the centroid.
class DomainSpec {
 public:
  std::string kind;
  std::vector<double> params;
  Vec2 centroid{0.0, 0.0};
  std::function<double(Vec2)> phi;
  std::function<Vec2(Vec2)> grad_phi;
  std::function<Mat2(Vec2)> hess_phi;
  Box bbox;
  // Optional closed forms (set for the disc); the generic level-set
  // machinery is the fallback.
  std::function<Vec2(Vec2)> project_fn;
  std::function<double(Vec2)> rho_fn;

  bool inside(const Vec2& x) const { return phi(x) < 0.0; }

  // Radius of the boundary along the ray at angle theta from the centroid.
  double ray_radius(double theta) const {
    Vec2 u{std::cos(theta), std::sin(theta)};
    double t_hi = 0.5 * (bbox.hi - bbox.lo).norm() + 1.0;
    double t_lo = 0.0;
    if (phi(centroid + u * t_hi) <= 0.0)
      throw BadParameters("ray_radius: bounding box does not enclose the domain");
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (t_lo + t_hi);
      (phi(centroid + u * mid) < 0.0 ? t_lo : t_hi) = mid;
      if (t_hi - t_lo < 1e-15 * (1.0 + t_hi)) break;
    }
    double t = 0.5 * (t_lo + t_hi);
    for (int it = 0; it < 8; ++it) {  // Newton polish along the ray
      double f = phi(centroid + u * t);
      double df = grad_phi(centroid + u * t).dot(u);
      if (std::abs(df) < 1e-14) break;
      t -= f / df;
    }
    return t;
  }

  Vec2 boundary_at(double theta) const {
    Vec2 u{std::cos(theta), std::sin(theta)};
    return centroid + u * ray_radius(theta);
  }

  Vec2 unit_normal(const Vec2& xb) const { return grad_phi(xb).normalized(); }

  // Full Jacobian D_i nu_j of the level-set normal field, row i, column j.
  Mat2 normal_jacobian(const Vec2& x) const {
    Vec2 g = grad_phi(x);
    Mat2 H = hess_phi(x);
    double n = g.norm();
    Vec2 Hg = H * g;
    Mat2 out;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        out.at(i, j) = H(i, j) / n - g[j] * Hg[i] / (n * n * n);
    return out;
  }

  // Curvature of the level curve (positive for a convex boundary).
  double curvature(const Vec2& x) const {
    Vec2 g = grad_phi(x);
    Mat2 H = hess_phi(x);
    double n = g.norm();
    return (g.y * g.y * H.a11 - 2.0 * g.x * g.y * H.a12 + g.x * g.x * H.a22) /
           (n * n * n);
  }

  BoundaryPoint boundary_point(double theta) const {
    BoundaryPoint b;
    b.pos = boundary_at(theta);
    b.normal = unit_normal(b.pos);
    b.tangent = b.normal.perp();
    b.kappa = curvature(b.pos);
    b.theta = theta;
    return b;
  }

  std::vector<BoundaryPoint> boundary_points(int n) const {
    std::vector<BoundaryPoint> out;
    out.reserve(n);
    for (int k = 0; k < n; ++k)
      out.push_back(boundary_point(2.0 * kPi * k / n));
    return out;
  }

  // Nearest boundary point. Lagrange-Newton on the projection system with
  // multistart seeds from a coarse boundary scan; the seeds guard against
  // the medial axis of elongated domains.
  Vec2 project(const Vec2& x) const {
    if (project_fn) return project_fn(x);
    double theta0 = std::atan2(x.y - centroid.y, x.x - centroid.x);
    if (!std::isfinite(theta0)) theta0 = 0.0;
    const double offs[5] = {0.0, 0.5, -0.5, 1.4, -1.4};
    Vec2 best;
    double best_d = std::numeric_limits<double>::infinity();
    for (double off : offs) {
      Vec2 s = boundary_at(theta0 + off);
      double lam = 0.0;
      for (int it = 0; it < 60; ++it) {
        Vec2 g = grad_phi(s);
        Mat2 H = hess_phi(s);
        // KKT residual: s - x + lam*g = 0, phi(s) = 0
        Vec2 r{s.x - x.x + lam * g.x, s.y - x.y + lam * g.y};
        double rp = phi(s);
        double a11 = 1.0 + lam * H.a11, a12 = lam * H.a12;
        double a21 = lam * H.a21, a22 = 1.0 + lam * H.a22;
        // Solve [[A, g], [g^T, 0]] * (ds, dlam) = -(r, rp)
        double m00 = a11, m01 = a12, m02 = g.x;
        double m10 = a21, m11 = a22, m12 = g.y;
        double m20 = g.x, m21 = g.y, m22 = 0.0;
        double det = m00 * (m11 * m22 - m12 * m21) -
                     m01 * (m10 * m22 - m12 * m20) +
                     m02 * (m10 * m21 - m11 * m20);
        if (std::abs(det) < 1e-16) break;
        double b0 = -r.x, b1 = -r.y, b2 = -rp;
        double ds_x = (b0 * (m11 * m22 - m12 * m21) -
                       m01 * (b1 * m22 - m12 * b2) +
                       m02 * (b1 * m21 - m11 * b2)) / det;
        double ds_y = (m00 * (b1 * m22 - m12 * b2) -
                       b0 * (m10 * m22 - m12 * m20) +
                       m02 * (m10 * b2 - b1 * m20)) / det;
        double dl = (m00 * (m11 * b2 - b1 * m21) -
                     m01 * (m10 * b2 - b1 * m20) +
                     b0 * (m10 * m21 - m11 * m20)) / det;
        s.x += ds_x;
        s.y += ds_y;
        lam += dl;
        if (ds_x * ds_x + ds_y * ds_y + dl * dl < 1e-30) break;
      }
      // Final polish: pull exactly onto the level set along the gradient.
      for (int it = 0; it < 4; ++it) {
        Vec2 g = grad_phi(s);
        s -= g * (phi(s) / g.norm2());
      }
      double d = (s - x).norm();
      if (std::abs(phi(s)) < 1e-11 && d < best_d) {
        best_d = d;
        best = s;
      }
    }
    if (!std::isfinite(best_d))
      throw NoConvergence("project: no projection seed converged");
    return best;
  }

  // Distance to the boundary, nonnegative inside.
  double dist(const Vec2& x) const { return (x - project(x)).norm(); }

  // Inside-signed distance: positive inside, negative outside.
  double rho(const Vec2& x) const {
    if (rho_fn) return rho_fn(x);
    double d = dist(x);
    return inside(x) ? d : -d;
  }

  struct TubeFrame {
    Vec2 foot, normal, tangent;
    double rho = 0.0, kappa = 0.0;
  };
  TubeFrame tube_frame(const Vec2& x) const {
    TubeFrame f;
    f.foot = project(x);
    f.normal = unit_normal(f.foot);
    f.tangent = f.normal.perp();
    f.kappa = curvature(f.foot);
    double d = (x - f.foot).norm();
    f.rho = inside(x) ? d : -d;
    return f;
  }

  struct Quadrature {
    std::vector<Vec2> nodes;
    std::vector<double> weights;
  };
  // Tensor rule in (theta, s): trapezoid in angle, Gauss-Legendre radially.
  Quadrature quadrature(int n_theta = 512, int n_s = 48) const {
    Quadrature q;
    std::vector<double> gs, gw;
    detail::gauss_legendre01(n_s, gs, gw);
    std::vector<double> radii(n_theta);
    for (int a = 0; a < n_theta; ++a)
      radii[a] = ray_radius(2.0 * kPi * a / n_theta);
    double dtheta = 2.0 * kPi / n_theta;
    q.nodes.reserve(static_cast<std::size_t>(n_theta) * n_s);
    q.weights.reserve(static_cast<std::size_t>(n_theta) * n_s);
    for (int a = 0; a < n_theta; ++a) {
      double th = 2.0 * kPi * a / n_theta;
      Vec2 u{std::cos(th), std::sin(th)};
      double R = radii[a];
      for (int k = 0; k < n_s; ++k) {
        double s = gs[k];
        q.nodes.push_back(centroid + u * (s * R));
        q.weights.push_back(gw[k] * s * R * R * dtheta);
      }
    }
    return q;
  }

  double area() const {
    if (area_cache_ < 0.0) {
      double a = 0.0;
      int n_theta = 1024;
      for (int k = 0; k < n_theta; ++k) {
        double R = ray_radius(2.0 * kPi * k / n_theta);
        a += 0.5 * R * R * (2.0 * kPi / n_theta);
      }
      area_cache_ = a;
    }
    return area_cache_;
  }

  // Distance from the boundary to the medial axis, estimated from the
  // curvature maximum and the centroid clearance.
  double reach_estimate() const {
    double kmax = 0.0, rmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 256; ++k) {
      double th = 2.0 * kPi * k / 256.0;
      BoundaryPoint b = boundary_point(th);
      kmax = std::max(kmax, b.kappa);
      rmin = std::min(rmin, ray_radius(th));
    }
    double r = rmin;
    if (kmax > 0.0) r = std::min(r, 1.0 / kmax);
    return r;
  }

  // Samplers for the audits. `closure` mixes in exact boundary points.
  PointSampler interior_sampler() const {
    const DomainSpec* self = this;
    return [self](Rng& rng) {
      double th = rng.uniform(0.0, 2.0 * kPi);
      double s = std::sqrt(rng.uniform01()) * 0.999;
      return self->centroid +
             Vec2{std::cos(th), std::sin(th)} * (s * self->ray_radius(th));
    };
  }
  PointSampler closure_sampler() const {
    const DomainSpec* self = this;
    return [self](Rng& rng) {
      double th = rng.uniform(0.0, 2.0 * kPi);
      double s = rng.uniform01() < 0.25 ? 1.0 : std::sqrt(rng.uniform01());
      return self->centroid +
             Vec2{std::cos(th), std::sin(th)} * (s * self->ray_radius(th));
    };
  }

 private:
  mutable double area_cache_ = -1.0;
};

inline DomainSpec make_domain(const std::string& kind,
                              const std::vector<double>& params) {
  DomainSpec d;
  d.kind = kind;
  d.params = params;
  if (kind == "disc") {
    if (params.size() != 1 || params[0] <= 0.0)
      throw BadParameters("disc domain needs one positive radius");
    double r = params[0];
    d.phi = [r](Vec2 x) { return (x.norm2() - r * r) / (2.0 * r); };
    d.grad_phi = [r](Vec2 x) { return x * (1.0 / r); };
    d.hess_phi = [r](Vec2) { return Mat2::identity() * (1.0 / r); };
    d.bbox = {{-1.2 * r, -1.2 * r}, {1.2 * r, 1.2 * r}};
    d.project_fn = [r](Vec2 x) {
      double n = x.norm();
      if (n < 1e-300) return Vec2{r, 0.0};
      return x * (r / n);
    };
    d.rho_fn = [r](Vec2 x) { return r - x.norm(); };
  } else if (kind == "ellipse") {
    if (params.size() != 2 || params[0] <= 0.0 || params[1] <= 0.0)
      throw BadParameters("ellipse domain needs two positive semi-axes");
    double a = params[0], b = params[1];
    d.phi = [a, b](Vec2 x) {
      return x.x * x.x / (a * a) + x.y * x.y / (b * b) - 1.0;
    };
    d.grad_phi = [a, b](Vec2 x) {
      return Vec2{2.0 * x.x / (a * a), 2.0 * x.y / (b * b)};
    };
    d.hess_phi = [a, b](Vec2) {
      return Mat2{2.0 / (a * a), 0.0, 0.0, 2.0 / (b * b)};
    };
    d.bbox = {{-1.2 * a, -1.2 * b}, {1.2 * a, 1.2 * b}};
  } else if (kind == "superellipse-smooth") {
    if (params.size() < 2 || params[0] <= 0.0 || params[1] <= 0.0)
      throw BadParameters("superellipse needs two positive semi-axes");
    double a = params[0], b = params[1];
    int p = params.size() > 2 ? static_cast<int>(params[2]) : 4;
    if (p < 4 || p % 2 != 0)
      throw BadParameters("superellipse exponent must be an even integer >= 4");
    d.phi = [a, b, p](Vec2 x) {
      return std::pow(x.x / a, p) + std::pow(x.y / b, p) - 1.0;
    };
    d.grad_phi = [a, b, p](Vec2 x) {
      return Vec2{p * std::pow(x.x / a, p - 1) / a,
                  p * std::pow(x.y / b, p - 1) / b};
    };
    d.hess_phi = [a, b, p](Vec2 x) {
      return Mat2{p * (p - 1) * std::pow(x.x / a, p - 2) / (a * a), 0.0, 0.0,
                  p * (p - 1) * std::pow(x.y / b, p - 2) / (b * b)};
    };
    d.bbox = {{-1.2 * a, -1.2 * b}, {1.2 * a, 1.2 * b}};
  } else if (kind == "square") {
    throw BadParameters(
        "square domain rejected: corners violate the smooth-normal "
        "precondition");
  } else {
    throw BadParameters("make_domain: unknown domain kind '" + kind + "'");
  }
  return d;
}

// ---------------------------------------------------------------------------
// Uniform c- and c*-convexity audits.
// ---------------------------------------------------------------------------

// Sampled min over boundary x, target y of
//   [D_i nu_j(x) - c^{l,k} c_{ij,l}(x,y) nu_k(x)] tau_i tau_j.
inline AuditResult audit_uniform_c_convexity(const DomainSpec& src,
                                             const DomainSpec& tgt,
                                             const CostModel& cost,
                                             int n_boundary = 256,
                                             int n_target = 64,
                                             std::uint64_t seed = 17) {
  Rng rng(seed);
  auto bpts = src.boundary_points(n_boundary);
  auto tsample = tgt.closure_sampler();
  std::vector<Vec2> ys(n_target);
  for (auto& y : ys) y = tsample(rng);
  AuditResult r;
  r.value = std::numeric_limits<double>::infinity();
  for (const auto& b : bpts) {
    Mat2 dnu = src.normal_jacobian(b.pos);
    for (const auto& y : ys) {
      Mat2 minv = cost.cross(b.pos, y).inverse();
      Ten3 t = cost.third_xxy(b.pos, y);
      // v_l = sum_k c^{l,k} nu_k = (M^{-1} nu)_l
      Vec2 v = minv * b.normal;
      Mat2 S = dnu - (t[0] * v.x + t[1] * v.y);
      double val = S.quad(b.tangent, b.tangent);
      if (val < r.value) {
        r.value = val;
        r.arg_x = b.pos;
        r.arg_y = y;
      }
    }
  }
  return r;
}

// Mirror audit over boundary y, source x, using c_{l,ij} and the transposed
// inverse cross-Hessian.
inline AuditResult audit_uniform_cstar_convexity(const DomainSpec& tgt,
                                                 const DomainSpec& src,
                                                 const CostModel& cost,
                                                 int n_boundary = 256,
                                                 int n_source = 64,
                                                 std::uint64_t seed = 18) {
  Rng rng(seed);
  auto bpts = tgt.boundary_points(n_boundary);
  auto ssample = src.closure_sampler();
  std::vector<Vec2> xs(n_source);
  for (auto& x : xs) x = ssample(rng);
  AuditResult r;
  r.value = std::numeric_limits<double>::infinity();
  for (const auto& b : bpts) {
    Mat2 dnu = tgt.normal_jacobian(b.pos);
    for (const auto& x : xs) {
      Mat2 minv_t = cost.cross(x, b.pos).inverse().transpose();
      Ten3 t = cost.third_xyy(x, b.pos);
      // u_l = sum_k c^{k,l} nu*_k = (M^{-T} nu*)_l
      Vec2 u = minv_t * b.normal;
      Mat2 S = dnu - (t[0] * u.x + t[1] * u.y);
      double val = S.quad(b.tangent, b.tangent);
      if (val < r.value) {
        r.value = val;
        r.arg_x = x;
        r.arg_y = b.pos;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Extended defining function h = C d^2 - d on a collar, continued inward.
// ---------------------------------------------------------------------------

enum class DefiningSide { Source, Target };

// h(x) = C sig(rho)^2 - sig(rho) where sig saturates the inside distance
// with a C^2 ramp: identity on [0, eps], constant 1.5*eps beyond 2*eps.
// Outside points (rho < 0) keep the raw formula, so h > 0 there.
class ExtendedDefiningFunction {
 public:
  const DomainSpec* dom = nullptr;
  double C = 0.0;
  double eps = 0.0;
  double delta0 = 0.0;  // certified collar constant
  double boundary_margin = 0.0;
  double collar_margin = 0.0;

  double value_frame(const DomainSpec::TubeFrame& f) const {
    double s = sig(f.rho);
    return C * s * s - s;
  }
  Vec2 gradient_frame(const DomainSpec::TubeFrame& f) const {
    double s = sig(f.rho), sp = sig_p(f.rho);
    return f.normal * (-(2.0 * C * s - 1.0) * sp);
  }
  Mat2 hessian_frame(const DomainSpec::TubeFrame& f) const {
    double s = sig(f.rho), sp = sig_p(f.rho), spp = sig_pp(f.rho);
    Mat2 nn = Mat2::outer(f.normal, f.normal);
    double dh = (2.0 * C * s - 1.0);
    Mat2 out = nn * (dh * spp + 2.0 * C * sp * sp);
    if (sp != 0.0) {
      // distance Hessian in tube coordinates; only valid within the reach,
      // which sp == 0 already excludes past the saturated collar
      double hess_rho_tt = -f.kappa / (1.0 - f.rho * f.kappa);
      out = out + Mat2::outer(f.tangent, f.tangent) * (dh * sp * hess_rho_tt);
    }
    return out;
  }

  double value(const Vec2& x) const { return value_frame(dom->tube_frame(x)); }
  Vec2 gradient(const Vec2& x) const {
    return gradient_frame(dom->tube_frame(x));
  }
  Mat2 hessian(const Vec2& x) const { return hessian_frame(dom->tube_frame(x)); }

  double sig(double t) const {
    if (t <= eps) return t;
    if (t >= 2.0 * eps) return 1.5 * eps;
    double s = (t - eps) / eps;
    return eps * (1.0 + s - s * s * s + 0.5 * s * s * s * s);
  }
  double sig_p(double t) const {
    if (t <= eps) return 1.0;
    if (t >= 2.0 * eps) return 0.0;
    double s = (t - eps) / eps;
    return 1.0 - 3.0 * s * s + 2.0 * s * s * s;
  }
  double sig_pp(double t) const {
    if (t <= eps || t >= 2.0 * eps) return 0.0;
    double s = (t - eps) / eps;
    return (-6.0 * s + 6.0 * s * s) / eps;
  }
};

// The collar inequality matrix for one side:
//   source: S_ij = D_ij h - c_{ij,l} (M^{-1} grad h)_l   (x in collar, y free)
//   target: S_ij = D_ij h* - c_{l,ij} (M^{-T} grad h*)_l (y in collar, x free)
inline Mat2 defining_inequality_matrix_hg(const Mat2& H, const Vec2& g,
                                          const CostModel& cost,
                                          DefiningSide side,
                                          const Vec2& collar_pt,
                                          const Vec2& other_pt) {
  if (side == DefiningSide::Source) {
    Mat2 minv = cost.cross(collar_pt, other_pt).inverse();
    Ten3 t = cost.third_xxy(collar_pt, other_pt);
    Vec2 v = minv * g;
    return H - (t[0] * v.x + t[1] * v.y);
  }
  Mat2 minv_t = cost.cross(other_pt, collar_pt).inverse().transpose();
  Ten3 t = cost.third_xyy(other_pt, collar_pt);
  Vec2 u = minv_t * g;
  return H - (t[0] * u.x + t[1] * u.y);
}

inline Mat2 defining_inequality_matrix(const ExtendedDefiningFunction& h,
                                       const CostModel& cost,
                                       DefiningSide side, const Vec2& collar_pt,
                                       const Vec2& other_pt) {
  return defining_inequality_matrix_hg(h.hessian(collar_pt),
                                       h.gradient(collar_pt), cost, side,
                                       collar_pt, other_pt);
}

// Construction of the corrected defining function: pick C by doubling from
// 1/delta1 until the boundary inequality holds with margin delta1/2, then
// shrink the collar from the reach until the full inequality holds with
// margin delta0 = delta1/8.
inline ExtendedDefiningFunction build_extended_defining(
    const DomainSpec& dom, const DomainSpec& other, const CostModel& cost,
    double delta1, DefiningSide side, double min_eps = 0.0,
    int n_boundary = 128, int n_other = 48, int n_depth = 6,
    std::uint64_t seed = 23) {
  if (!(delta1 > 0.0))
    throw NoAdmissibleC("build_extended_defining: need a positive delta1 audit");
  ExtendedDefiningFunction h;
  h.dom = &dom;
  h.delta0 = delta1 / 8.0;

  Rng rng(seed);
  auto bpts = dom.boundary_points(n_boundary);
  auto osample = other.closure_sampler();
  std::vector<Vec2> others(n_other);
  for (auto& o : others) o = osample(rng);

  double reach = dom.reach_estimate();
  auto sampled_min = [&](double depth_max) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& b : bpts) {
      for (int kd = 0; kd <= n_depth; ++kd) {
        double depth = depth_max * kd / n_depth;
        // Points along the inward normal stay within the tube, so the frame
        // is known without a projection solve.
        DomainSpec::TubeFrame f;
        f.foot = b.pos;
        f.normal = b.normal;
        f.tangent = b.tangent;
        f.kappa = b.kappa;
        f.rho = depth;
        Vec2 x = b.pos - b.normal * depth;
        Mat2 H = h.hessian_frame(f);
        Vec2 g = h.gradient_frame(f);
        for (const auto& o : others) {
          Mat2 S = defining_inequality_matrix_hg(H, g, cost, side, x, o);
          m = std::min(m, S.min_eig());
        }
        if (depth_max == 0.0) break;
      }
    }
    return m;
  };

  // Stage 1: boundary inequality with margin delta1/2.
  double c0 = 1.0 / delta1;
  bool found = false;
  for (int k = 0; k <= 20; ++k) {
    h.C = c0 * std::pow(2.0, k);
    h.eps = std::min(0.5 * reach, 0.25 / h.C);
    double m = sampled_min(0.0);
    if (m >= 0.5 * delta1) {
      h.boundary_margin = m;
      found = true;
      break;
    }
  }
  if (!found)
    throw NoAdmissibleC(
        "build_extended_defining: boundary inequality failed up to C = 2^20/delta1 "
        "(domain not uniformly c-convex at this sampling)");

  // Stage 2: collar width.
  double eps = std::min(0.5 * reach, 0.25 / h.C);
  for (int k = 0; k < 30; ++k) {
    h.eps = eps;
    double m = sampled_min(eps);
    if (m >= h.delta0) {
      h.collar_margin = m;
      if (min_eps > 0.0 && h.eps < min_eps) {
        throw CollarTooThin(
            "build_extended_defining: certified collar thinner than the grid "
            "needs");
      }
      return h;
    }
    eps *= 0.5;
    if (min_eps > 0.0 && eps < min_eps)
      throw CollarTooThin("build_extended_defining: collar shrank below the grid scale");
  }
  throw CollarTooThin("build_extended_defining: no collar width certified the inequality");
}

// Point on the c-segment with respect to y between x1 and x2.
inline Vec2 c_segment(const CostModel& cost, const Vec2& y, const Vec2& x1,
                      const Vec2& x2, double s) {
  Vec2 q1 = cost.grad_y(x1, y);
  Vec2 q2 = cost.grad_y(x2, y);
  Vec2 q = q1 * (1.0 - s) + q2 * s;
  return x_from_q(cost, q, y, x1 * (1.0 - s) + x2 * s);
}

}  // namespace otflow
