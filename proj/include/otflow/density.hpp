#pragma once

#include <memory>

#include "otflow/cost.hpp"
#include "otflow/domain.hpp"

namespace otflow {

// Extension of a density beyond its domain: nearest-boundary value blended
// into the constant lambda/2 + Lambda over a collar of width `width`, then
// clamped into [lambda/2, 2*Lambda]. The converged flow never depends on the
// extension; a regression test checks that rather than assuming it.
inline std::function<double(Vec2)> extend_density(
    std::function<double(Vec2)> f, std::shared_ptr<const DomainSpec> dom,
    double lambda, double Lambda, double width) {
  double cmid = 0.5 * lambda + Lambda;
  return [f = std::move(f), dom = std::move(dom), lambda, Lambda, width,
          cmid](Vec2 x) {
    if (dom->inside(x)) return f(x);
    Vec2 foot = dom->project(x);
    double s = std::min((x - foot).norm() / width, 1.0);
    double wgt = s * s * (3.0 - 2.0 * s);
    double val = (1.0 - wgt) * f(foot) + wgt * cmid;
    return std::min(std::max(val, 0.5 * lambda), 2.0 * Lambda);
  };
}

// Uniform probability densities on the two domains. `scale_f` deliberately
// unbalances the masses; the mass-balance audit is expected to catch it.
inline DensityPair make_uniform_densities(
    std::shared_ptr<const DomainSpec> src, std::shared_ptr<const DomainSpec> tgt,
    double scale_f = 1.0, double ext_width_src = -1.0,
    double ext_width_tgt = -1.0) {
  DensityPair d;
  double fs = scale_f / src->area();
  double gs = 1.0 / tgt->area();
  d.f = [fs](Vec2) { return fs; };
  d.g = [gs](Vec2) { return gs; };
  d.lambda = std::min(fs, gs);
  d.Lambda = std::max(fs, gs);
  if (ext_width_src <= 0.0) ext_width_src = 0.5 * src->reach_estimate();
  if (ext_width_tgt <= 0.0) ext_width_tgt = 0.5 * tgt->reach_estimate();
  d.f_ext = extend_density(d.f, src, d.lambda, d.Lambda, ext_width_src);
  d.g_ext = extend_density(d.g, tgt, d.lambda, d.Lambda, ext_width_tgt);
  d.mass_f = scale_f;
  d.mass_g = 1.0;
  return d;
}

// Quadrature masses for the balance audit; uniform densities make these
// exact, general ones inherit the quadrature accuracy.
inline void quadrature_masses(DensityPair& d, const DomainSpec& src,
                              const DomainSpec& tgt) {
  auto qs = src.quadrature();
  auto qt = tgt.quadrature();
  double mf = 0.0, mg = 0.0;
  for (std::size_t k = 0; k < qs.nodes.size(); ++k)
    mf += qs.weights[k] * d.f(qs.nodes[k]);
  for (std::size_t k = 0; k < qt.nodes.size(); ++k)
    mg += qt.weights[k] * d.g(qt.nodes[k]);
  d.mass_f = mf;
  d.mass_g = mg;
}

}  // namespace otflow
