// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Construction of explicit solutions from stream forms, residual
// verification of the quasilinear Hodge systems, recovery of the Frobenius
// coefficient, conjugate-pair checks, and the nonlinear energy.

#ifndef NLHODGE_CONSTRUCT_HPP
#define NLHODGE_CONSTRUCT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlhodge/density.hpp"
#include "nlhodge/forms.hpp"

namespace nlhodge {

struct ResidualReport {
  Norms2 codiff;                          // co-differential equation residual
  std::optional<Norms2> frobenius;        // d w - Gamma ^ w (Gamma supplied)
  std::optional<Norms2> weak_frobenius;   // w ^ d w (degrees permitting)
  std::optional<Norms2> closedness;       // d F of a prescribed closed form
  int sonic_nodes = 0;                    // nodes near a branch endpoint
  double h_max = 0.0;
};

// ---------------------------------------------------------------------------
// Stream-form construction: w = *F / rho(psi(|F|^2)) with F either the
// exterior derivative of a prescribed potential or a closed form supplied
// directly. On the branch this satisfies rho(|w|^2) w = *F, so the
// co-differential residual measures d of a (discretely or analytically)
// closed form.
// ---------------------------------------------------------------------------

struct StreamInput {
  std::optional<DiscreteForm> potential;  // f: F = d f
  std::optional<DiscreteForm> closed;     // F supplied directly
  MonotoneBranch branch;

  static StreamInput from_potential(DiscreteForm f, MonotoneBranch br) {
    StreamInput in;
    in.potential = std::move(f);
    in.branch = std::move(br);
    return in;
  }
  static StreamInput from_closed(DiscreteForm F, MonotoneBranch br) {
    StreamInput in;
    in.closed = std::move(F);
    in.branch = std::move(br);
    return in;
  }
};

struct StreamResult {
  DiscreteForm w;
  ResidualReport report;
  double max_q = 0.0;
};

inline StreamResult from_stream(const StreamInput& in,
                                double closedness_tol_factor = 25.0) {
  if (!in.potential == !in.closed)
    throw precondition_error("from_stream: supply exactly one of f or F");

  const DiscreteForm F =
      in.potential ? exterior_d(*in.potential) : *in.closed;
  const Grid& g = F.grid();
  const int n = g.dim();
  const MonotoneBranch& br = in.branch;

  StreamResult out;
  out.report.h_max = g.h_max();

  if (in.closed) {
    const Norms2 dn = norms2(exterior_d(F));
    out.report.closedness = dn;
    const double tol =
        closedness_tol_factor * g.h_max() * g.h_max() * (1.0 + max_abs(F));
    if (dn.max > tol)
      throw precondition_error(
          "from_stream: prescribed F is not closed (max |dF| = " +
          fmt17(dn.max) + ")");
  }

  const ScalarField qF = qnorm(F);
  const double margin = 1e-6 * (br.r2 - br.r1);
  std::vector<double> rho_of_psi(g.size());
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.coord(i);
    const auto t = try_psi_invert(br, x, qF[i]);
    if (!t) {
      bad.push_back(i);
      continue;
    }
    rho_of_psi[i] = br.rho.rho(x, *t);
    if (std::min(qF[i] - br.r1, br.r2 - qF[i]) < margin) ++out.report.sonic_nodes;
  }
  if (!bad.empty())
    throw range_error("from_stream: |F|^2 leaves the branch image at " +
                      std::to_string(bad.size()) + " nodes", bad);

  out.w = hodge_star(F);
  for (int c = 0; c < out.w.ncomp(); ++c) {
    auto& v = out.w.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= rho_of_psi[i];
  }
  out.max_q = max_abs(qnorm(out.w));

  // rho(Q) w, re-assembled from the output, and its co-differential
  DiscreteForm rw = out.w;
  for (int c = 0; c < rw.ncomp(); ++c) {
    auto& v = rw.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= rho_of_psi[i];
  }
  const int k = n - F.degree();
  if (k >= 1) out.report.codiff = norms2(codifferential(rw));
  return out;
}

/// The two Born-Infeld families in four dimensions:
/// w(+/-) = *df / sqrt(|df|^2 +/- 1) for a stream 1-form f. The minus
/// family needs |df| > 1 everywhere and degenerates (unbounded members)
/// where |df| -> 1.
inline StreamResult born_infeld_family(const DiscreteForm& f, int sign) {
  const Grid& g = f.grid();
  if (g.dim() != 4 || f.degree() != 1)
    throw precondition_error("born_infeld_family: needs a 1-form on a 4-d grid");
  if (sign != 1 && sign != -1)
    throw precondition_error("born_infeld_family: sign must be +1 or -1");

  const DiscreteForm F = exterior_d(f);
  const ScalarField qF = qnorm(F);

  StreamResult out;
  out.report.h_max = g.h_max();
  if (sign < 0) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(qF[i] > 1.0)) bad.push_back(i);
    if (!bad.empty())
      throw range_error("born_infeld_family: sign '-' requires |df| > 1, "
                        "violated at " + std::to_string(bad.size()) + " nodes",
                        bad);
  }
  // degeneracy flags: the minus family blows up as |df| -> 1; the plus
  // family approaches the sonic bound Q = 1 only as |df| -> infinity
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (sign < 0 && std::abs(qF[i] - 1.0) <= 1e-6) ++out.report.sonic_nodes;
    if (sign > 0 && qF[i] / (qF[i] + 1.0) >= 1.0 - 1e-6) ++out.report.sonic_nodes;
  }

  out.w = hodge_star(F);
  for (int c = 0; c < out.w.ncomp(); ++c) {
    auto& v = out.w.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] /= std::sqrt(qF[i] + sign);
  }
  out.max_q = max_abs(qnorm(out.w));

  DiscreteForm rw = out.w;
  for (int c = 0; c < rw.ncomp(); ++c) {
    auto& v = rw.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= std::sqrt(qF[i] + sign);
  }
  out.report.codiff = norms2(codifferential(rw));
  return out;
}

// ---------------------------------------------------------------------------
// System verification.
// ---------------------------------------------------------------------------

/// Residuals of the quasilinear system for w with density rho:
///   without Sigma:  delta(rho(Q) w)
///   with Sigma:     d*(rho(Q) w) - Sigma ^ *(rho(Q) w)
/// plus the Frobenius defect d w - Gamma ^ w when Gamma is given and the
/// weak defect w ^ d w when the degrees allow it.
inline ResidualReport verify_system(const DiscreteForm& w, const Density& rho,
                                    const std::optional<DiscreteForm>& Gamma = {},
                                    const std::optional<DiscreteForm>& Sigma = {},
                                    const std::optional<MonotoneBranch>& branch = {}) {
  const Grid& g = w.grid();
  const int n = g.dim(), k = w.degree();
  ResidualReport rep;
  rep.h_max = g.h_max();

  const DiscreteForm rw = apply_A(rho, w);
  if (Sigma) {
    const DiscreteForm srw = hodge_star(rw);
    rep.codiff = norms2(exterior_d(srw) - wedge(*Sigma, srw));
  } else if (k >= 1) {
    rep.codiff = norms2(codifferential(rw));
  }

  if (k < n) {
    const DiscreteForm dw = exterior_d(w);
    if (Gamma) rep.frobenius = norms2(dw - wedge(*Gamma, w));
    if (2 * k + 1 <= n) rep.weak_frobenius = norms2(wedge(w, dw));
  }

  if (branch) {
    const ScalarField q = qnorm(w);
    const double margin = 1e-6 * (branch->t2 - branch->t1);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::min(std::abs(q[i] - branch->t1), std::abs(branch->t2 - q[i])) <
          margin)
        ++rep.sonic_nodes;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Frobenius coefficient recovery: pointwise minimal-norm least squares for
// Gamma in  d w = Gamma ^ w,  for forms of degree 1 or n-1 (the cases in
// which an exact coefficient always exists).
// ---------------------------------------------------------------------------

struct GammaFit {
  DiscreteForm gamma;            // recovered 1-form
  Norms2 fit;                    // norms of d w - Gamma ^ w over included nodes
  std::vector<std::size_t> excluded;  // nodes with |w| below the threshold
};

inline GammaFit gamma_recover(const DiscreteForm& w, double min_norm = 1e-8) {
  const Grid& g = w.grid();
  const int n = g.dim(), k = w.degree();
  if (k != 1 && k != n - 1)
    throw precondition_error("gamma_recover: degree must be 1 or n-1");

  const DiscreteForm dw = exterior_d(w);
  const FormBasis b1(n, 1);
  const auto& bout = dw.basis();

  GammaFit out{DiscreteForm(g, 1), {}, {}};
  const ScalarField q = qnorm(w);
  const int rows = dw.ncomp();

  double fit_sq = 0.0;
  double fit_max = 0.0;
  Eigen::MatrixXd M(rows, n);
  Eigen::VectorXd rhs(rows);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::sqrt(q[i]) < min_norm) {
      out.excluded.push_back(i);
      continue;
    }
    M.setZero();
    for (int j = 0; j < n; ++j) {
      const unsigned mj = b1.mask(j);
      for (int c = 0; c < w.ncomp(); ++c) {
        const unsigned mw = w.basis().mask(c);
        if (mj & mw) continue;
        M(bout.position(mj | mw), j) += merge_sign(mj, mw) * w.at(c, i);
      }
    }
    for (int r = 0; r < rows; ++r) rhs(r) = dw.at(r, i);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    const Eigen::VectorXd gamma = svd.solve(rhs);
    for (int j = 0; j < n; ++j) out.gamma.at(j, i) = gamma(j);
    const double res = (M * gamma - rhs).norm();
    fit_max = std::max(fit_max, res);
    fit_sq += res * res * g.quad_weight(g.unflatten(i));
  }
  out.fit = {std::sqrt(fit_sq), fit_max};
  return out;
}

// ---------------------------------------------------------------------------
// Conjugate-pair check: for wt = A(du), report |A(du) - delta v| (when v is
// given), |delta wt|, the nonlinear Frobenius defect with
// Gamma = d ln rho(|B(wt)|^2), and |d B(wt)|.
// ---------------------------------------------------------------------------

struct AharmonicReport {
  std::optional<Norms2> conjugacy;  // A(du) - delta v
  Norms2 codiff;                    // delta wt
  Norms2 frobenius;                 // d wt - d[ln rho(|B wt|^2)] ^ wt
  Norms2 d_of_B;                    // d B(wt)
  // the same defects away from the boundary stencil band, where composed
  // difference operators keep second order
  Norms2 codiff_interior;
  Norms2 frobenius_interior;
  Norms2 d_of_B_interior;
  double h_max = 0.0;
};

inline AharmonicReport aharmonic_check(const DiscreteForm& u,
                                       const std::optional<DiscreteForm>& v,
                                       const Density& rho,
                                       const MonotoneBranch& branch) {
  const Grid& g = u.grid();
  AharmonicReport rep;
  rep.h_max = g.h_max();

  const DiscreteForm du = exterior_d(u);
  const DiscreteForm wt = apply_A(rho, du);
  if (v) rep.conjugacy = norms2(wt - codifferential(*v));
  const DiscreteForm dwt = codifferential(wt);
  rep.codiff = norms2(dwt);
  rep.codiff_interior = norms2_interior(dwt);

  const DiscreteForm bw = apply_B(branch, wt);
  const ScalarField qb = qnorm(bw);
  ScalarField lnrho(g);
  for (std::size_t i = 0; i < g.size(); ++i)
    lnrho[i] = std::log(rho.rho(g.coord(i), qb[i]));
  const DiscreteForm Gamma = exterior_d(to_form(lnrho));
  const DiscreteForm frob = exterior_d(wt) - wedge(Gamma, wt);
  rep.frobenius = norms2(frob);
  rep.frobenius_interior = norms2_interior(frob);
  const DiscreteForm dbw = exterior_d(bw);
  rep.d_of_B = norms2(dbw);
  rep.d_of_B_interior = norms2_interior(dbw);
  return rep;
}

// ---------------------------------------------------------------------------
// Nonlinear Hodge energy E = 1/2 int_M int_0^Q rho(x,s) ds dM and its
// variational consistency check.
// ---------------------------------------------------------------------------

inline double energy(const DiscreteForm& w, const Density& rho,
                     double quad_tol = 1e-12) {
  const Grid& g = w.grid();
  const ScalarField q = qnorm(w);
  // Lower integration limit, pushed inside open or singular domain ends.
  // The prescribed families are integrable there, so the clipped sliver is
  // at the guard scale.
  const double lo = rho.guard_above(std::max(0.0, rho.domain_lo()));
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Point x = g.coord(i);
    if (q[i] > 0.0 && !rho.in_domain(q[i]))
      throw domain_error("energy: |w|^2 leaves the density domain", {i});
    if (q[i] <= lo) continue;
    // integration segments between lo and q, stepping over singular points
    auto f = [&](double s) { return rho.rho(x, s); };
    const double tol = quad_tol * std::max(1.0, q[i]);
    double a = lo;
    double inner = 0.0;
    for (double s : rho.singular_points()) {
      if (s <= a || s >= q[i]) continue;
      inner += adaptive_simpson(f, a, rho.guard_below(s), tol);
      a = rho.guard_above(s);
    }
    inner += adaptive_simpson(f, a, q[i], tol);
    acc += inner * g.quad_weight(g.unflatten(i));
  }
  return 0.5 * acc;
}

struct EnergyCheck {
  double energy_value = 0.0;
  double fd_derivative = 0.0;   // central difference of E along d phi
  double pairing = 0.0;         // <rho(Q) w, d phi>
  double rel_defect = 0.0;
  std::optional<Norms2> euler_lagrange;  // residual of the inhomogeneous
                                         // Euler-Lagrange equation, if Gamma
};

/// First-variation check of the energy: (E(w + e d phi) - E(w - e d phi))/2e
/// against <rho(Q) w, d phi>. With Gamma supplied, also evaluates the
/// Euler-Lagrange residual delta[rho(Q) w] - (-1)^{n(k+1)} *(Gamma ^ * rho w).
inline EnergyCheck energy_gradient_check(const DiscreteForm& w, const Density& rho,
                                         const DiscreteForm& phi,
                                         const std::optional<DiscreteForm>& Gamma = {},
                                         double eps = 1e-5) {
  if (phi.degree() + 1 != w.degree())
    throw precondition_error("energy_gradient_check: phi must have degree k-1");
  EnergyCheck out;
  const DiscreteForm dphi = exterior_d(phi);
  out.energy_value = energy(w, rho);
  const double ep = energy(w + eps * dphi, rho);
  const double em = energy(w - eps * dphi, rho);
  out.fd_derivative = (ep - em) / (2.0 * eps);
  const DiscreteForm rw = apply_A(rho, w);
  out.pairing = l2_inner(rw, dphi);
  out.rel_defect =
      std::abs(out.fd_derivative - out.pairing) / std::max(1.0, std::abs(out.pairing));
  if (Gamma) {
    const int n = w.grid().dim(), k = w.degree();
    const double sgn = (n * (k + 1)) % 2 == 0 ? 1.0 : -1.0;
    const DiscreteForm el =
        codifferential(rw) - sgn * hodge_star(wedge(*Gamma, hodge_star(rw)));
    out.euler_lagrange = norms2(el);
  }
  return out;
}

}  // namespace nlhodge

#endif  // NLHODGE_CONSTRUCT_HPP
