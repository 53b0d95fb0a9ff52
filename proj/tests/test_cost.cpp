#include "doctest.h"
#include "otflow/cost.hpp"
#include "otflow/density.hpp"
#include "otflow/domain.hpp"

using namespace otflow;

namespace {

PointSampler unit_disc_sampler() {
  return [](Rng& rng) {
    double th = rng.uniform(0.0, 2.0 * kPi);
    double s = std::sqrt(rng.uniform01());
    return Vec2{s * std::cos(th), s * std::sin(th)};
  };
}

}  // namespace

TEST_CASE("bilinear and quadratic inverse maps are identities") {
  CostModel bil = make_bilinear_cost();
  CostModel quad = make_quadratic_cost();
  Vec2 x{0.3, -0.2}, p{0.4, 0.1};
  CHECK((y_from_p(bil, x, p) - p).norm() == doctest::Approx(0.0));
  CHECK((x_from_q(bil, p, x) - p).norm() == doctest::Approx(0.0));
  CHECK((y_from_p(quad, x, p) - (x + p)).norm() == doctest::Approx(0.0));
  CHECK((x_from_q(quad, p, x) - (x + p)).norm() == doctest::Approx(0.0));
}

TEST_CASE("sqrt cost closed form matches its defining equation and Newton") {
  CostModel c = make_sqrt_cost();
  CostModel cn = without_closed_forms(c);
  Rng rng(7);
  for (int k = 0; k < 200; ++k) {
    Vec2 x = rng.in_box({{-1, -1}, {1, 1}});
    Vec2 p = rng.unit() * rng.uniform(0.0, 0.8);
    Vec2 y = y_from_p(c, x, p);
    CHECK((c.grad_x(x, y) - p).norm() < 1e-12);
    // Newton from several cold starts lands on the same point.
    for (Vec2 start : {Vec2{0, 0}, Vec2{2, 2}, Vec2{-3, 1}}) {
      Vec2 yn = y_from_p(cn, x, p, start);
      CHECK((yn - y).norm() < 1e-9);
    }
    Vec2 q = rng.unit() * rng.uniform(0.0, 0.8);
    Vec2 xx = x_from_q(c, q, x);
    CHECK((c.grad_y(xx, x) - q).norm() < 1e-12);
    CHECK((x_from_q(cn, q, x, Vec2{0, 0}) - xx).norm() < 1e-9);
  }
}

TEST_CASE("structure_A trivial cases and finite-difference oracle") {
  CostModel bil = make_bilinear_cost();
  CostModel quad = make_quadratic_cost();
  CostModel sq = make_sqrt_cost();
  Vec2 x{0.1, 0.2}, p{0.25, -0.3};
  CHECK(structure_A(bil, x, p).max_abs() == 0.0);
  CHECK((structure_A(quad, x, p) - Mat2::identity() * -1.0).max_abs() == 0.0);

  // sqrt cost at x=(0,0), p=(0.3,0): central differences of eval in x at
  // y = Y(x,p) as the oracle.
  Vec2 x0{0.0, 0.0}, p0{0.3, 0.0};
  Vec2 y0 = y_from_p(sq, x0, p0);
  Mat2 A = structure_A(sq, x0, p0);
  double t = 1e-5;
  auto ev = [&](Vec2 xx) { return sq.eval(xx, y0); };
  double fxx = (ev({t, 0}) - 2.0 * ev({0, 0}) + ev({-t, 0})) / (t * t);
  double fyy = (ev({0, t}) - 2.0 * ev({0, 0}) + ev({0, -t})) / (t * t);
  double fxy = (ev({t, t}) - ev({t, -t}) - ev({-t, t}) + ev({-t, -t})) /
               (4.0 * t * t);
  CHECK(A.a11 == doctest::Approx(fxx).epsilon(1e-5));
  CHECK(A.a22 == doctest::Approx(fyy).epsilon(1e-5));
  CHECK(A.a12 == doctest::Approx(fxy).epsilon(1e-4));
}

TEST_CASE("structure_A is symmetric") {
  CostModel sq = make_sqrt_cost();
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    Vec2 x = rng.in_box({{-1, -1}, {1, 1}});
    Vec2 p = rng.unit() * rng.uniform(0.0, 0.8);
    CHECK(structure_A(sq, x, p).asym() <= 1e-12);
  }
}

TEST_CASE("structure_B trivial and derived cases") {
  auto disc = std::make_shared<const DomainSpec>(make_domain("disc", {1.0}));
  auto ell =
      std::make_shared<const DomainSpec>(make_domain("ellipse", {2.0, 0.5}));
  CostModel bil = make_bilinear_cost();
  CostModel quad = make_quadratic_cost();

  DensityPair dd = make_uniform_densities(disc, disc);
  Vec2 x{0.2, 0.1}, p{0.3, -0.2};
  CHECK(structure_B(bil, dd, x, p) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(structure_B(quad, dd, x, p) == doctest::Approx(1.0).epsilon(1e-9));

  // Uniform ellipse (2, 0.5) onto the unit disc: B = 1/(a b) = 1, the
  // area-preserving case.
  DensityPair ed = make_uniform_densities(ell, disc);
  CHECK(structure_B(bil, ed, Vec2{0.5, 0.1}, Vec2{0.2, 0.1}) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(structure_B_log(bil, ed, Vec2{0.5, 0.1}, Vec2{0.2, 0.1}) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("B stays positive at admissible samples") {
  auto disc = std::make_shared<const DomainSpec>(make_domain("disc", {1.0}));
  DensityPair dd = make_uniform_densities(disc, disc);
  CostModel sq = make_sqrt_cost();
  Rng rng(13);
  auto sample = unit_disc_sampler();
  for (int k = 0; k < 500; ++k) {
    Vec2 x = sample(rng);
    Vec2 y = sample(rng);
    Vec2 p = sq.grad_x(x, y);
    CHECK(structure_B(sq, dd, x, p) > 0.0);
  }
}

TEST_CASE("A1 round trip over random pairs") {
  auto sample = unit_disc_sampler();
  for (const char* kind : {"bilinear", "quadratic", "sqrt"}) {
    CostModel c = make_cost(kind);
    Rng rng(17);
    for (int k = 0; k < 1000; ++k) {
      Vec2 x = sample(rng);
      Vec2 y = sample(rng);
      CHECK((y_from_p(c, x, c.grad_x(x, y), y) - y).norm() <= 1e-10);
      CHECK((x_from_q(c, c.grad_y(x, y), y, x) - x).norm() <= 1e-10);
    }
  }
}

TEST_CASE("Jacobian of Y in p equals the inverse cross-Hessian") {
  auto sample = unit_disc_sampler();
  for (const char* kind : {"bilinear", "quadratic", "sqrt"}) {
    CostModel c = make_cost(kind);
    Rng rng(19);
    for (int k = 0; k < 1000; ++k) {
      Vec2 x = sample(rng);
      Vec2 y = sample(rng);
      Vec2 p = c.grad_x(x, y);
      double t = 1e-6;
      Vec2 dyx = (y_from_p(c, x, p + Vec2{t, 0}) - y_from_p(c, x, p - Vec2{t, 0})) /
                 (2.0 * t);
      Vec2 dyy = (y_from_p(c, x, p + Vec2{0, t}) - y_from_p(c, x, p - Vec2{0, t})) /
                 (2.0 * t);
      Mat2 inv = c.cross(x, y_from_p(c, x, p)).inverse();
      // dY^k/dp_l = invcross(k, l)
      CHECK(dyx.x == doctest::Approx(inv.a11).epsilon(1e-5));
      CHECK(dyx.y == doctest::Approx(inv.a21).epsilon(1e-5));
      CHECK(dyy.x == doctest::Approx(inv.a12).epsilon(1e-5));
      CHECK(dyy.y == doctest::Approx(inv.a22).epsilon(1e-5));
    }
  }
}

TEST_CASE("nondegeneracy audit (A2)") {
  auto sample = unit_disc_sampler();
  CostModel bil = make_bilinear_cost();
  CostModel quad = make_quadratic_cost();
  CostModel sq = make_sqrt_cost();
  CHECK(audit_nondegeneracy(bil, sample, sample, 2000, 5).value ==
        doctest::Approx(1.0));
  CHECK(audit_nondegeneracy(quad, sample, sample, 2000, 5).value ==
        doctest::Approx(1.0));
  AuditResult r = audit_nondegeneracy(sq, sample, sample, 2000, 5);
  CHECK(r.value > 1e-8);
  // |det cross| = (1+|x-y|^2)^{-2} >= 1/25 on unit discs
  CHECK(r.value > 0.03);
}

TEST_CASE("MTW audit (A3w)") {
  auto sample = unit_disc_sampler();
  CHECK(std::abs(audit_mtw(make_bilinear_cost(), sample, sample, 500, 5).value) <
        1e-8);
  CHECK(std::abs(audit_mtw(make_quadratic_cost(), sample, sample, 500, 5).value) <
        1e-8);
  AuditResult r = audit_mtw(make_sqrt_cost(), sample, sample, 10000, 5);
  CHECK(r.value >= -1e-5);
}

TEST_CASE("derivative self-check across the catalog") {
  auto sample = unit_disc_sampler();
  for (const char* kind : {"bilinear", "quadratic", "sqrt"}) {
    SelfCheckReport rep =
        derivative_selfcheck(make_cost(kind), sample, sample, 200, 31);
    INFO(kind, " worst rel err ", rep.worst());
    CHECK(rep.pass(1e-5));
  }
  // first derivatives agree to 1e-6 relative
  SelfCheckReport rep =
      derivative_selfcheck(make_sqrt_cost(), sample, sample, 200, 31);
  CHECK(rep.max_rel_grad_x <= 1e-6);
  CHECK(rep.max_rel_grad_y <= 1e-6);
}

TEST_CASE("inverse map error paths") {
  CostModel sq = make_sqrt_cost();
  CHECK_THROWS_AS((void)y_from_p(sq, Vec2{0, 0}, Vec2{1.2, 0.0}),
                  NoConvergence);
  CostModel sqn = without_closed_forms(make_sqrt_cost());
  CHECK_THROWS_AS((void)y_from_p(sqn, Vec2{0, 0}, Vec2{1.2, 0.0}),
                  NoConvergence);

  // Degenerate cross-Hessian: c = x1*y1 only.
  CostModel degenerate;
  degenerate.name = "degenerate";
  degenerate.eval = [](Vec2 x, Vec2 y) { return x.x * y.x; };
  degenerate.grad_x = [](Vec2, Vec2 y) { return Vec2{y.x, 0.0}; };
  degenerate.grad_y = [](Vec2 x, Vec2) { return Vec2{x.x, 0.0}; };
  degenerate.hess_xx = [](Vec2, Vec2) { return Mat2::zero(); };
  degenerate.hess_yy = [](Vec2, Vec2) { return Mat2::zero(); };
  degenerate.cross = [](Vec2, Vec2) { return Mat2{1, 0, 0, 0}; };
  degenerate.third_xxy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  degenerate.third_xyy = [](Vec2, Vec2) { return Ten3{Mat2::zero(), Mat2::zero()}; };
  CHECK_THROWS_AS((void)y_from_p(degenerate, Vec2{0, 0}, Vec2{0.5, 0.5}),
                  SingularJacobian);
}

TEST_CASE("density bounds and plane extensions") {
  auto disc = std::make_shared<const DomainSpec>(make_domain("disc", {1.0}));
  auto ell =
      std::make_shared<const DomainSpec>(make_domain("ellipse", {2.0, 0.5}));
  DensityPair d = make_uniform_densities(ell, disc);
  Rng rng(29);
  for (int k = 0; k < 2000; ++k) {
    Vec2 p = rng.in_box({{-3.0, -3.0}, {3.0, 3.0}});
    if (ell->inside(p)) {
      CHECK(d.f(p) >= d.lambda);
      CHECK(d.f(p) <= d.Lambda);
    }
    if (disc->inside(p)) {
      CHECK(d.g(p) >= d.lambda);
      CHECK(d.g(p) <= d.Lambda);
    }
    // extensions stay within [lambda/2, 2 Lambda] everywhere
    CHECK(d.g_ext(p) >= 0.5 * d.lambda);
    CHECK(d.g_ext(p) <= 2.0 * d.Lambda);
    CHECK(d.f_ext(p) >= 0.5 * d.lambda);
    CHECK(d.f_ext(p) <= 2.0 * d.Lambda);
  }
  // balanced by construction; the audit sees the quadrature masses
  quadrature_masses(d, *ell, *disc);
  CHECK(d.mass_error() <= 1e-6);

  DensityPair unbal = make_uniform_densities(ell, disc, 1.1);
  quadrature_masses(unbal, *ell, *disc);
  CHECK(unbal.mass_error() > 0.05);
}
