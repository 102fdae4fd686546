// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Hodge-Backlund and conformal correspondences between quasilinear systems:
// the dual transform xi = *(rho(Q) w), pointwise conformal rescalings in t
// and in x, and the sign rule deciding how ellipticity transports.

#ifndef NLHODGE_BACKLUND_HPP
#define NLHODGE_BACKLUND_HPP

#include <optional>
#include <string>
#include <vector>

#include "nlhodge/density.hpp"
#include "nlhodge/forms.hpp"

namespace nlhodge {

enum class TransformKind { dual, conformal_t, conformal_x };
enum class TransformDirection { forward, inverse };

struct TransformRecord {
  TransformKind kind = TransformKind::dual;
  TransformDirection direction = TransformDirection::forward;
  int degree_in = 0;
  int degree_out = 0;
  std::string density_in;
  std::string density_out;
  std::optional<Regime> regime_in;
  std::optional<Regime> regime_out;
};

// ---------------------------------------------------------------------------
// Dual transform.
// ---------------------------------------------------------------------------

struct DualTransformResult {
  DiscreteForm xi;   // (n-k)-form *(rho(|w|^2) w)
  DualPair pair;     // (rho, rho_hat) on the branch
  TransformRecord record;
};

/// xi = *(rho(Q) w). If w solves the system with right-hand coefficients
/// (Sigma, Gamma), xi solves the dual system with the roles of Sigma and
/// Gamma exchanged and density rho_hat; * (rho_hat(|xi|^2) xi) returns
/// (-1)^{k(n-k)} w.
inline DualTransformResult dual_transform(const DiscreteForm& w, const Density& rho,
                                          const MonotoneBranch& branch) {
  DualTransformResult out{hodge_star(apply_A(rho, w)), dual_density(rho, branch), {}};
  out.record.kind = TransformKind::dual;
  out.record.degree_in = w.degree();
  out.record.degree_out = out.xi.degree();
  out.record.density_in = rho.label();
  out.record.density_out = out.pair.rho_hat.label();
  out.record.regime_in = branch.regime;
  out.record.regime_out = out.pair.branch_hat.regime;
  return out;
}

// ---------------------------------------------------------------------------
// Conformal transforms in t.
// ---------------------------------------------------------------------------

/// w0 = exp(-eta(|w1|^2)) w1; the squared norm transforms by f_eta.
inline DiscreteForm conformal_forward_t(const DiscreteForm& w1, const ScalarFn& eta) {
  const Grid& g = w1.grid();
  const ScalarField q = qnorm(w1);
  ScalarField s(g);
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = std::exp(-eta(q[i]));
  return scale_pointwise(w1, s);
}

/// w1 = exp(eta(g_eta(|w0|^2))) w0; inverse of conformal_forward_t.
inline DiscreteForm conformal_inverse_t(const DiscreteForm& w0, const EtaMap& map) {
  const Grid& g = w0.grid();
  const ScalarField q = qnorm(w0);
  std::vector<std::size_t> bad;
  ScalarField s(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double slack = 1e-12 * std::max(1.0, q[i]);
    if (q[i] < map.g.range_lo() - slack || q[i] > map.g.range_hi() + slack) {
      bad.push_back(i);
      continue;
    }
    s[i] = std::exp(map.eta(map.g(std::clamp(q[i], map.g.range_lo(), map.g.range_hi()))));
  }
  if (!bad.empty())
    throw range_error("conformal_inverse_t: |w0|^2 outside the image of f_eta at " +
                      std::to_string(bad.size()) + " nodes", bad);
  return scale_pointwise(w0, s);
}

/// Pointwise rescale by exp(-eta(x)) (forward) or exp(+eta(x)) (inverse).
inline DiscreteForm conformal_x(const DiscreteForm& w, const SpaceFn& eta,
                                TransformDirection dir) {
  const Grid& g = w.grid();
  const double sgn = dir == TransformDirection::forward ? -1.0 : 1.0;
  ScalarField s(g);
  for (std::size_t i = 0; i < g.size(); ++i)
    s[i] = std::exp(sgn * eta(g.coord(i)));
  return scale_pointwise(w, s);
}

// ---------------------------------------------------------------------------
// Ellipticity sign rule: d phi_{rho0}/d th = d phi_{rho1 e^-zeta}/dt * g'(th).
// ---------------------------------------------------------------------------

struct SignProbe {
  double t_hat = 0.0;
  double lhs = 0.0;        // d phi_{rho0} / d t_hat
  double rhs = 0.0;        // d phi_{rho1 e^-zeta}/dt at g(t_hat), times g'
  bool consistent = false;
  bool inconclusive = false;
  Regime regime = Regime::elliptic;  // from the sign of lhs
};

struct SignCheckReport {
  std::vector<SignProbe> probes;
  int failures = 0;
  int inconclusive = 0;
  bool all_consistent() const { return failures == 0; }
};

/// Finite-difference verification that the transformed density's phi has
/// the sign of (d phi_{rho1 e^-zeta}/dt) g_eta' at each probe.
inline SignCheckReport ellipticity_sign_check(const Density& rho1,
                                              const ScalarFn& zeta,
                                              const ScalarFn& eta, const EtaMap& map,
                                              const std::vector<double>& probes_t_hat,
                                              const Point& x = {0, 0, 0, 0},
                                              double noise_floor = 1e-10) {
  const Density rho0 = transform_density_t(rho1, eta, zeta, map);
  auto phi0 = [&](double th) { return rho0.phi(x, th); };
  auto phi_rz = [&](double t) {
    const double v = rho1.rho(x, t) * std::exp(-zeta(t));
    return t * v * v;
  };
  SignCheckReport rep;
  for (double th : probes_t_hat) {
    SignProbe p;
    p.t_hat = th;
    const double h0 = fd_step(th);
    p.lhs = (phi0(th + h0) - phi0(th - h0)) / (2.0 * h0);
    const double t = map.g(th);
    const double h1 = fd_step(t);
    const double dphi = (phi_rz(t + h1) - phi_rz(t - h1)) / (2.0 * h1);
    p.rhs = dphi * map.g.deriv(th);
    p.regime = p.lhs > 0.0 ? Regime::elliptic : Regime::hyperbolic;
    if (std::abs(p.lhs) < noise_floor || std::abs(p.rhs) < noise_floor) {
      p.inconclusive = true;
      ++rep.inconclusive;
    } else {
      p.consistent = (p.lhs > 0.0) == (p.rhs > 0.0);
      if (!p.consistent) ++rep.failures;
    }
    rep.probes.push_back(p);
  }
  return rep;
}

}  // namespace nlhodge

#endif  // NLHODGE_BACKLUND_HPP
