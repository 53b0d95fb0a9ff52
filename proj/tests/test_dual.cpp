#include "doctest.h"
#include "otflow/dual.hpp"

using namespace otflow;

namespace {

struct DualSetup {
  std::shared_ptr<const CostModel> cost;
  std::shared_ptr<const DomainSpec> source, target;
  std::shared_ptr<DensityPair> dens;
  std::shared_ptr<BoundaryOperator> bop;
  std::shared_ptr<Grid> grid;
  FlowState state;
};

DualSetup dual_setup(const std::string& cost_kind, const std::string& src_kind,
                     std::vector<double> src_params, const std::string& init_kind,
                     double bump, int resolution = 48) {
  DualSetup s;
  s.cost = std::make_shared<const CostModel>(make_cost(cost_kind));
  s.source = std::make_shared<const DomainSpec>(
      make_domain(src_kind, std::move(src_params)));
  s.target = std::make_shared<const DomainSpec>(make_domain("disc", {1.0}));
  s.dens = std::make_shared<DensityPair>(make_uniform_densities(s.source, s.target));
  double d1s =
      audit_uniform_cstar_convexity(*s.target, *s.source, *s.cost).value;
  s.bop = std::make_shared<BoundaryOperator>(
      build_boundary_operator(s.cost, s.source, s.target, d1s));
  s.grid = std::make_shared<Grid>(build_grid(s.source, resolution));
  Initializer init = make_initializer(init_kind, *s.source, bump);
  SolverConfig cfg;
  s.state = initialize_u0(s.grid, s.cost, s.dens, s.bop, init, cfg);
  return s;
}

}  // namespace

TEST_CASE("c-transform values: stationary disc is self-dual") {
  DualSetup s = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.0);
  DualState d = c_transform(s.state);
  for (std::size_t k = 0; k < d.y.size(); ++k)
    CHECK(d.ustar[k] == doctest::Approx(0.5 * d.y[k].norm2()).epsilon(1e-9));
}

TEST_CASE("c-transform values: ellipse affine scenario") {
  DualSetup s = dual_setup("bilinear", "ellipse", {2.0, 0.5}, "affine", 0.0);
  DualState d = c_transform(s.state);
  // u*(y) = a y1^2/2 + b y2^2/2 with (a,b) = (2, 0.5)
  for (std::size_t k = 0; k < d.y.size(); ++k) {
    double expect = 1.0 * d.y[k].x * d.y[k].x + 0.25 * d.y[k].y * d.y[k].y;
    CHECK(d.ustar[k] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("c-transform values: quadratic cost identity map") {
  DualSetup s = dual_setup("quadratic", "disc", {1.0}, "zero", 0.0);
  DualState d = c_transform(s.state);
  for (std::size_t k = 0; k < d.y.size(); ++k)
    CHECK(std::abs(d.ustar[k]) < 1e-10);
}

TEST_CASE("inverse consistency: T* undoes T") {
  DualSetup s = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.0);
  DualState d = c_transform(s.state);
  CHECK(inverse_consistency(s.state, d) < 1e-9);

  DualSetup e = dual_setup("bilinear", "ellipse", {2.0, 0.5}, "affine", 0.0);
  DualState de = c_transform(e.state);
  CHECK(inverse_consistency(e.state, de) <= 10.0 * e.grid->h * e.grid->h);

  // perturbed data: the oracle sees a genuinely curved dual cloud
  DualSetup p = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.05);
  DualState dp = c_transform(p.state);
  CHECK(inverse_consistency(p.state, dp) <= 10.0 * p.grid->h * p.grid->h);
}

TEST_CASE("dual structure functions") {
  auto disc = std::make_shared<const DomainSpec>(make_domain("disc", {1.0}));
  DensityPair dens = make_uniform_densities(disc, disc);
  CostModel bil = make_bilinear_cost();
  CostModel quad = make_quadratic_cost();
  auto [a_b, b_b] = dual_structure_eval(bil, dens, {0.2, 0.1}, {0.3, -0.2});
  CHECK(a_b.max_abs() == 0.0);
  CHECK(b_b == doctest::Approx(1.0).epsilon(1e-9));
  auto [a_q, b_q] = dual_structure_eval(quad, dens, {0.2, 0.1}, {0.3, -0.2});
  CHECK((a_q - Mat2::identity() * -1.0).max_abs() == 0.0);

  // B(x,p) * B*(y,q) = |det cross|^2 at corresponding points for equal
  // uniform densities.
  CostModel sq = make_sqrt_cost();
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    Vec2 x = rng.unit() * rng.uniform(0.0, 0.9);
    Vec2 y = rng.unit() * rng.uniform(0.0, 0.9);
    Vec2 p = sq.grad_x(x, y);
    Vec2 q = sq.grad_y(x, y);
    double b = structure_B(sq, dens, x, p);
    auto [astar, bstar] = dual_structure_eval(sq, dens, y, q);
    (void)astar;
    double dc = std::abs(sq.cross(x, y).det());
    CHECK(b * bstar == doctest::Approx(dc * dc).epsilon(1e-8));
  }
}

TEST_CASE("w-conjugacy between primal and dual clouds") {
  DualSetup p = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.05);
  DualState dp = c_transform(p.state);
  double res = w_conjugacy_residual(p.state, dp);
  // scattered-data differentiation loses one order: O(h)
  CHECK(res <= 10.0 * p.grid->h);
}

TEST_CASE("dual time derivative matches -udot between snapshots") {
  DualSetup p = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.05);
  SolverConfig cfg;
  cfg.sigma = 0.75;
  FlowState prev = p.state;
  DualState dual_prev = c_transform(prev);
  FlowState next = prev;
  step(next, cfg);
  double res = dual_time_derivative_residual(prev, dual_prev, next, 2);
  double budget = 10.0 * ((next.t - prev.t) + p.grid->h * p.grid->h);
  CHECK(res <= budget);
}

TEST_CASE("dual boundary condition holds at image samples") {
  DualSetup p = dual_setup("bilinear", "disc", {1.0}, "quadratic", 0.05);
  DualState dp = c_transform(p.state);
  CHECK(dual_boundary_residual(p.state, dp) <= 10.0 * p.grid->h * p.grid->h);
}

TEST_CASE("mls fit rejects degenerate clouds") {
  DualState d;
  for (int k = 0; k < 20; ++k) {
    d.y.push_back({0.01 * k, 0.0});  // collinear
    d.ustar.push_back(0.0);
    d.node.push_back(k);
  }
  d.build_index();
  CHECK_THROWS_AS((void)mls_fit(d, Vec2{0.05, 0.0}), PoorLocalFit);
}
