#pragma once

#include <memory>

#include "otflow/cost.hpp"
#include "otflow/core.hpp"
#include "otflow/domain.hpp"

namespace otflow {

// Boundary operator Gbar(x,p) = hbar*(Y(x,p)) with hbar* the signed distance
// to the target boundary (negative inside), its p-gradient beta, and the
// globally p-convex G assembled from the extended defining function h*, the
// quadratic h1*(p) = (|p|^2 - K^2)/C1 and a quartic smoothing of |s|.
class BoundaryOperator {
 public:
  std::shared_ptr<const CostModel> cost;
  std::shared_ptr<const DomainSpec> source;
  std::shared_ptr<const DomainSpec> target;
  ExtendedDefiningFunction hstar;  // extended defining function of the target
  double eps_star = 0.0;           // certified collar width of hstar
  double a = 0.0;                  // smoothing half-width = eps_star / 16
  double K = 0.0;                  // gradient bound, > sup |grad u|
  double C1 = 0.0;                 // quadratic scale, K^2/C1 < eps_star/4
  double delta2 = 0.0;             // certified p-convexity constant of G
  double delta2_observed = 0.0;    // sampled min eigenvalue of D2pp G
  // Quartic smoothing phi(s) = alpha s^4 + beta s^2 + gamma on [-a, a];
  // coefficients are forced by C^2 matching with |s| at s = +-a.
  double alpha = 0.0, beta_c = 0.0, gamma = 0.0;

  // Normalized defining function of the target: zero on the boundary,
  // negative inside, gradient equal to the outward normal on the boundary.
  // TODO: memoize target projections for non-disc targets; the ghost Newton
  // evaluates this once per iteration and only the disc has a closed form.
  double hbar_star(const Vec2& y) const { return -target->rho(y); }
  Vec2 grad_hbar_star(const Vec2& y) const {
    return target->unit_normal(target->project(y));
  }

  double gbar(const Vec2& x, const Vec2& p) const {
    return hbar_star(y_from_p(*cost, x, p));
  }

  // beta_k = hbar*_l c^{l,k}, i.e. (M^{-1})^T grad hbar* at y = Y(x,p).
  Vec2 beta(const Vec2& x, const Vec2& p) const {
    Vec2 y = y_from_p(*cost, x, p);
    Mat2 m = cost->cross(x, y);
    detail::check_cross_invertible(m, "beta");
    return m.inverse().transpose() * grad_hbar_star(y);
  }
  Vec2 beta_at(const Vec2& x, const Vec2& /*p*/, const Vec2& y) const {
    Mat2 m = cost->cross(x, y);
    detail::check_cross_invertible(m, "beta");
    return m.inverse().transpose() * grad_hbar_star(y);
  }

  double phi_smooth(double s) const {
    if (std::abs(s) > a) return std::abs(s);
    double s2 = s * s;
    return alpha * s2 * s2 + beta_c * s2 + gamma;
  }
  double phi_smooth_p(double s) const {
    if (std::abs(s) > a) return s > 0.0 ? 1.0 : -1.0;
    return 4.0 * alpha * s * s * s + 2.0 * beta_c * s;
  }
  double phi_smooth_pp(double s) const {
    if (std::abs(s) > a) return 0.0;
    return 12.0 * alpha * s * s + 2.0 * beta_c;
  }

  double hstar1(const Vec2& p) const { return (p.norm2() - K * K) / C1; }

  // G(x,p): smoothed max of h*(Y(x,p)) and h1*(p) on the collar preimage,
  // h1*(p) outside it.
  double G(const Vec2& x, const Vec2& p) const {
    Vec2 y = y_from_p(*cost, x, p);
    auto f = target->tube_frame(y);
    double h1 = hstar1(p);
    if (f.rho > eps_star) return h1;
    double hs = hstar.value_frame(f);
    return 0.5 * (hs + h1) + phi_smooth(0.5 * (hs - h1));
  }

  // G is C^2 but only piecewise C^3: phi''' jumps at the smoothing kink
  // |s| = a. A finite-difference Hessian probe whose stencil straddles that
  // ring reads truncation noise of order step * phi''', so certification
  // sweeps skip the ring; D2pp G is continuous, which extends the certified
  // bound onto it.
  bool near_smoothing_kink(const Vec2& x, const Vec2& p, double step) const {
    Vec2 y = y_from_p(*cost, x, p);
    auto f = target->tube_frame(y);
    if (f.rho > eps_star) return false;
    double s = 0.5 * (hstar.value_frame(f) - hstar1(p));
    Vec2 grad_s =
        (cost->cross(x, y).inverse().transpose() * hstar.gradient_frame(f) -
         p * (2.0 / C1)) * 0.5;
    double blur = 6.0 * step * (1.0 + grad_s.norm());
    return std::abs(std::abs(s) - a) <= blur;
  }
};

struct BoundaryOperatorOptions {
  int sample_boundary = 96;   // samples for the K bound
  int sample_interior = 96;
  int cert_samples = 10000;   // finite-difference Hessian certification
  double fd_step = 1e-4;
  std::uint64_t seed = 31;
  double min_eps = 0.0;       // grid resolution floor for the collar
};

// Assembles the operator: extended h* for the target (mirror inequality),
// K = max |grad_x c| over the closures + 1, C1 the smallest power of two
// with K^2/C1 < eps*/4, smoothing coefficients from C^2 matching, and a
// sampled certification of the uniform p-convexity constant delta2*.
inline BoundaryOperator build_boundary_operator(
    std::shared_ptr<const CostModel> cost,
    std::shared_ptr<const DomainSpec> source,
    std::shared_ptr<const DomainSpec> target, double delta1_star,
    const BoundaryOperatorOptions& opt = {}) {
  BoundaryOperator op;
  op.cost = cost;
  op.source = source;
  op.target = target;
  op.hstar = build_extended_defining(*target, *source, *cost, delta1_star,
                                     DefiningSide::Target, opt.min_eps);
  op.eps_star = op.hstar.eps;
  op.a = op.eps_star / 16.0;
  op.alpha = -1.0 / (8.0 * op.a * op.a * op.a);
  op.beta_c = 3.0 / (4.0 * op.a);
  op.gamma = 3.0 * op.a / 8.0;

  // K from the gradient bound: T ranges in the closed target, so
  // sup |grad u| <= max |grad_x c| over the closures.
  Rng rng(opt.seed);
  auto ssample = source->closure_sampler();
  auto tsample = target->closure_sampler();
  double gmax = 0.0;
  for (int k = 0; k < opt.sample_boundary * opt.sample_interior / 8; ++k) {
    Vec2 x = ssample(rng);
    Vec2 y = tsample(rng);
    gmax = std::max(gmax, cost->grad_x(x, y).norm());
  }
  op.K = gmax + 1.0;

  // C1 window: K^2/C1 < eps*/4 keeps the branch-matching condition with
  // margin; (K^2 - (K-1)^2)/C1 >= eps*/8 keeps the smoothing kink away from
  // the boundary data so that G and Gbar vanish together there. When both
  // can hold we take the geometric mean, otherwise fall back to the smallest
  // admissible power of two.
  {
    double lo = 4.0 * op.K * op.K / op.eps_star;
    double hi = 8.0 * (2.0 * op.K - 1.0) / op.eps_star;
    if (hi > 1.01 * lo) {
      op.C1 = std::sqrt(lo * hi);
    } else {
      op.C1 = 1.0;
      while (op.K * op.K / op.C1 >= op.eps_star / 4.0) op.C1 *= 2.0;
    }
  }
  if (op.K * op.K / op.C1 >= op.eps_star / 2.0)
    throw BadConstants("build_boundary_operator: K^2/C1 >= eps*/2");

  // delta2* target value: min(delta0* sigma_min(c^{l,k})^2, 1/C1)/2, then a
  // finite-difference sweep of D2pp G confirms it.
  double smin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 512; ++k) {
    Vec2 x = ssample(rng);
    Vec2 y = tsample(rng);
    smin = std::min(smin, cost->cross(x, y).inverse().min_singular());
  }
  op.delta2 = 0.5 * std::min(op.hstar.delta0 * smin * smin, 1.0 / op.C1);

  double observed = std::numeric_limits<double>::infinity();
  int done = 0, attempts = 0;
  double t = opt.fd_step;
  while (done < opt.cert_samples && attempts < 20 * opt.cert_samples) {
    ++attempts;
    Vec2 x = ssample(rng);
    Vec2 y = tsample(rng);
    try {
      Vec2 p = cost->grad_x(x, y);
      if (op.near_smoothing_kink(x, p, t)) continue;
      double g00 = (op.G(x, p + Vec2{t, 0} ) - 2.0 * op.G(x, p) +
                    op.G(x, p - Vec2{t, 0})) / (t * t);
      double g11 = (op.G(x, p + Vec2{0, t}) - 2.0 * op.G(x, p) +
                    op.G(x, p - Vec2{0, t})) / (t * t);
      double g01 = (op.G(x, p + Vec2{t, t}) - op.G(x, p + Vec2{t, -t}) -
                    op.G(x, p - Vec2{t, -t}) + op.G(x, p - Vec2{t, t})) /
                   (4.0 * t * t);
      Mat2 hess{g00, g01, g01, g11};
      observed = std::min(observed, hess.min_eig());
      ++done;
    } catch (const NoConvergence&) {
      // sample fell outside the admissible gradient range
    }
  }
  if (done < opt.cert_samples / 2)
    throw NoConvergence("build_boundary_operator: certification sampling starved");
  op.delta2_observed = observed;
  if (!(observed >= op.delta2))
    throw BadConstants(
        "build_boundary_operator: sampled p-convexity fell below the target "
        "delta2*");
  return op;
}

}  // namespace otflow
