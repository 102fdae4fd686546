// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Subsonic Dirichlet and Neumann solves on 2-d rectangles for
// gradient-recursive 1-forms. The admissible triple (rho, zeta, eta) is
// reduced to the transformed scalar problem
//
//     div( rho0(x, |grad u|^2) grad u ) = div s,
//
// solved by a Kacanov fixed point (freeze the coefficient, solve the linear
// diffusion problem) with an optional Newton refinement, on a node-centered
// finite-volume mesh (half cells at the boundary). The solution is pulled
// back through the conformal correspondence, and a sonic guard aborts any
// iterate whose squared gradient approaches the admissible bound.

#ifndef NLHODGE_BVP_HPP
#define NLHODGE_BVP_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "nlhodge/backlund.hpp"
#include "nlhodge/construct.hpp"
#include "nlhodge/density.hpp"
#include "nlhodge/forms.hpp"

namespace nlhodge {

enum class BoundaryKind { dirichlet, neumann };

struct BoundaryData {
  BoundaryKind kind = BoundaryKind::dirichlet;
  SpaceFn g;                                    // Dirichlet boundary potential
  SpaceFn nu;                                   // Neumann normal flux
  std::optional<std::array<SpaceFn, 2>> sigma;  // source 1-form components

  BoundaryData scaled(double tau) const {
    BoundaryData out;
    out.kind = kind;
    if (g) out.g = [tau, f = g](const Point& p) { return tau * f(p); };
    if (nu) out.nu = [tau, f = nu](const Point& p) { return tau * f(p); };
    if (sigma) {
      out.sigma = std::array<SpaceFn, 2>{
          [tau, f = (*sigma)[0]](const Point& p) { return tau * f(p); },
          [tau, f = (*sigma)[1]](const Point& p) { return tau * f(p); }};
    }
    return out;
  }
};

struct SolveConfig {
  double tol = 1e-10;            // nonlinear residual target (PDE units)
  int max_iters = 200;
  double sonic_margin = 0.02;    // trip at Q >= Q_s (1 - margin)
  bool newton = true;
  double newton_threshold = 1e-3;  // switch once the step norm drops below
  int direct_max_res = 257;      // sparse LU up to this many nodes per axis
  double krylov_tol = 1e-13;
  int krylov_max_iters = 20000;
};

struct ContinuationEntry {
  double tau = 0.0;
  double max_q = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool tripped = false;
  double step_diff = 0.0;  // ||u(tau_i) - u(tau_{i-1})||_2
};

struct SolveReport {
  int iterations = 0;
  double residual = 0.0;
  double max_q = 0.0;   // max |w|^2 in the untransformed variable
  bool subsonic = false;
  bool sonic_tripped = false;
  std::string method = "kacanov";
  std::vector<double> energy_history;
  bool energy_monotone = true;
  std::vector<ContinuationEntry> path;
  std::optional<double> tau_s;
};

struct BvpSolution {
  Grid grid;
  ScalarField u;
  DiscreteForm w0;  // du
  DiscreteForm w;   // exp(eta(g(|w0|^2))) w0
  SolveReport report;
};

// ---------------------------------------------------------------------------
// Solver internals.
// ---------------------------------------------------------------------------

namespace bvpdetail {

inline double rho0_eval(const AdmissibleSystem& sys, const Point& x, double th) {
  const double t = sys.map.g(th);
  return std::exp(sys.eta(t) - sys.zeta(x, t)) * sys.rho.rho(x, t);
}

inline double rho0_deriv(const AdmissibleSystem& sys, const Point& x, double th) {
  const double h = fd_step(th);
  const double lo = std::max(sys.map.g.range_lo(), th - h);
  const double hi = std::min(sys.map.g.range_hi(), th + h);
  return (rho0_eval(sys, x, hi) - rho0_eval(sys, x, lo)) / (hi - lo);
}

/// Hand-rolled Jacobi-preconditioned conjugate gradient. `rank_one` adds
/// alpha (a.x) a to the operator, which regularizes the Neumann null space
/// without destroying sparsity or symmetry.
inline Eigen::VectorXd pcg(const Eigen::SparseMatrix<double>& A,
                           const Eigen::VectorXd& b,
                           const Eigen::VectorXd& diag_precond,
                           const std::optional<Eigen::VectorXd>& rank_one,
                           double alpha, double tol, int max_iters) {
  auto apply = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd y = A * x;
    if (rank_one) y += alpha * rank_one->dot(x) * (*rank_one);
    return y;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = r.cwiseQuotient(diag_precond);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  const double b_norm = std::max(b.norm(), 1e-300);
  for (int it = 0; it < max_iters; ++it) {
    if (r.norm() <= tol * b_norm) break;
    const Eigen::VectorXd Ap = apply(p);
    const double a = rz / p.dot(Ap);
    x += a * p;
    r -= a * Ap;
    z = r.cwiseQuotient(diag_precond);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (r.norm() > tol * b_norm * 10.0)
    throw convergence_error("bvp: conjugate gradient stalled");
  return x;
}

/// One 2-d scalar quasilinear problem on a grid: bilinear (Q1) elements
/// with 2x2 Gauss quadrature. The Kacanov phase freezes the coefficient at
/// the quadrature points of the previous iterate and solves the resulting
/// linear diffusion problem; since that quadratic functional majorizes the
/// discrete energy for non-increasing rho0, the monitored energy is
/// genuinely non-increasing across iterations in that regime. Neumann data
/// enters through edge quadrature, Dirichlet data through identity rows.
class ScalarProblem {
 public:
  ScalarProblem(const AdmissibleSystem& sys, const BoundaryData& data,
                const Grid& grid, const SolveConfig& cfg)
      : sys_(sys), data_(data), g_(grid), cfg_(cfg) {
    if (g_.dim() != 2) throw precondition_error("bvp: grid must be 2-d");
    n1_ = g_.res(0);
    n2_ = g_.res(1);
    h1_ = g_.spacing(0);
    h2_ = g_.spacing(1);
    N_ = g_.size();
    coords_.resize(N_);
    for (std::size_t i = 0; i < N_; ++i) coords_[i] = g_.coord(i);
    // reference 2x2 Gauss points and Q1 basis data
    const double q = 1.0 / std::sqrt(3.0);
    const double xi[4] = {-q, q, -q, q};
    const double et[4] = {-q, -q, q, q};
    // corner order: (0,0), (1,0), (0,1), (1,1); signs per corner
    const double sx[4] = {-1.0, 1.0, -1.0, 1.0};
    const double sy[4] = {-1.0, -1.0, 1.0, 1.0};
    for (int p = 0; p < 4; ++p) {
      for (int a = 0; a < 4; ++a) {
        phi_[p][a] = 0.25 * (1.0 + sx[a] * xi[p]) * (1.0 + sy[a] * et[p]);
        gphi_[p][a][0] = 0.5 * sx[a] * (1.0 + sy[a] * et[p]) / h1_;
        gphi_[p][a][1] = 0.5 * sy[a] * (1.0 + sx[a] * xi[p]) / h2_;
      }
      qp_off_[p][0] = 0.5 * h1_ * (1.0 + xi[p]);
      qp_off_[p][1] = 0.5 * h2_ * (1.0 + et[p]);
    }
    qw_ = 0.25 * h1_ * h2_;
  }

  std::size_t size() const { return N_; }
  const Grid& grid() const { return g_; }

  bool is_boundary(std::size_t idx) const {
    const auto id = g_.unflatten(idx);
    return id[0] == 0 || id[0] == n1_ - 1 || id[1] == 0 || id[1] == n2_ - 1;
  }

  double cell_area(const std::array<int, 4>& id) const {
    const double d1 = (id[0] == 0 || id[0] == n1_ - 1) ? 0.5 * h1_ : h1_;
    const double d2 = (id[1] == 0 || id[1] == n2_ - 1) ? 0.5 * h2_ : h2_;
    return d1 * d2;
  }

  /// Nodal squared gradient of u (central interior, one-sided boundary).
  std::vector<double> squared_gradient(const std::vector<double>& u) const {
    std::vector<double> d1, d2, t(N_);
    axis_derivative(g_, u, 0, d1);
    axis_derivative(g_, u, 1, d2);
    for (std::size_t i = 0; i < N_; ++i) t[i] = d1[i] * d1[i] + d2[i] * d2[i];
    return t;
  }

  std::size_t gauge_node() const { return 0; }  // low corner

  /// Visits every cell x quadrature point: fn(nodes[4], x_qp, grad_u, t).
  template <class Fn>
  void for_each_qp(const std::vector<double>& u, Fn&& fn) const {
    for (int j = 0; j + 1 < n2_; ++j) {
      for (int i = 0; i + 1 < n1_; ++i) {
        const std::size_t base = g_.flatten({i, j, 0, 0});
        const std::size_t nodes[4] = {base, base + 1, base + g_.stride(1),
                                      base + g_.stride(1) + 1};
        const Point corner = coords_[base];
        for (int p = 0; p < 4; ++p) {
          Point x = corner;
          x[0] += qp_off_[p][0];
          x[1] += qp_off_[p][1];
          double gx = 0.0, gy = 0.0;
          for (int a = 0; a < 4; ++a) {
            gx += u[nodes[a]] * gphi_[p][a][0];
            gy += u[nodes[a]] * gphi_[p][a][1];
          }
          fn(p, nodes, x, gx, gy, gx * gx + gy * gy);
        }
      }
    }
  }

  /// Largest squared gradient over the quadrature points (the value the
  /// assembly actually feeds to the density).
  double max_qp_t(const std::vector<double>& u) const {
    double m = 0.0;
    for_each_qp(u, [&](int, const std::size_t*, const Point&, double, double,
                       double t) { m = std::max(m, t); });
    return m;
  }

  /// Visits boundary-edge Gauss points: fn(node_a, node_b, phi_a, phi_b,
  /// x_qp, normal, weight).
  template <class Fn>
  void for_each_edge_qp(Fn&& fn) const {
    const double q = 1.0 / std::sqrt(3.0);
    auto run_side = [&](int axis, bool high) {
      const int n_run = axis == 0 ? n1_ : n2_;
      const double h_run = axis == 0 ? h1_ : h2_;
      const int perp = 1 - axis;
      const int fixed = high ? (perp == 0 ? n1_ - 1 : n2_ - 1) : 0;
      std::array<double, 2> nrm{0.0, 0.0};
      nrm[perp] = high ? 1.0 : -1.0;
      for (int k = 0; k + 1 < n_run; ++k) {
        std::array<int, 4> ida{0, 0, 0, 0}, idb{0, 0, 0, 0};
        ida[axis] = k;
        ida[perp] = fixed;
        idb[axis] = k + 1;
        idb[perp] = fixed;
        const std::size_t a = g_.flatten(ida);
        const std::size_t b = g_.flatten(idb);
        const double mid = coords_[a][axis] + 0.5 * h_run;
        for (int p = 0; p < 2; ++p) {
          const double s = p == 0 ? -q : q;       // reference coordinate
          const double phib = 0.5 * (1.0 + s);    // hat value at node b
          Point x = coords_[a];
          x[axis] = mid + 0.5 * h_run * s;
          fn(a, b, 1.0 - phib, phib, x, nrm, 0.5 * h_run);
        }
      }
    };
    run_side(0, false);  // bottom (runs along axis 0)
    run_side(0, true);   // top
    run_side(1, false);  // left (runs along axis 1)
    run_side(1, true);   // right
  }

  /// Neumann boundary integrand (nu - s.n), the natural datum of the weak
  /// form, with the compatibility shift folded in.
  double edge_datum(const Point& x, const std::array<double, 2>& nrm) const {
    double v = (data_.nu ? data_.nu(x) : 0.0) - nu_shift_;
    if (data_.sigma)
      v -= (*data_.sigma)[0](x) * nrm[0] + (*data_.sigma)[1](x) * nrm[1];
    return v;
  }

  /// Assembles the linear system with the diffusion coefficient frozen at
  /// the gradients of u_prev.
  void assemble(const std::vector<double>& u_prev, Eigen::SparseMatrix<double>& A,
                Eigen::VectorXd& b) const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(16 * N_);
    b.setZero(static_cast<Eigen::Index>(N_));
    const bool dirichlet = data_.kind == BoundaryKind::dirichlet;

    for (int j = 0; j + 1 < n2_; ++j) {
      for (int i = 0; i + 1 < n1_; ++i) {
        const std::size_t base = g_.flatten({i, j, 0, 0});
        const std::size_t nodes[4] = {base, base + 1, base + g_.stride(1),
                                      base + g_.stride(1) + 1};
        const Point corner = coords_[base];
        for (int p = 0; p < 4; ++p) {
          Point x = corner;
          x[0] += qp_off_[p][0];
          x[1] += qp_off_[p][1];
          double gx = 0.0, gy = 0.0;
          for (int a = 0; a < 4; ++a) {
            gx += u_prev[nodes[a]] * gphi_[p][a][0];
            gy += u_prev[nodes[a]] * gphi_[p][a][1];
          }
          const double t = gx * gx + gy * gy;
          const double r = rho0_eval(sys_, x, t);
          double s0 = 0.0, s1 = 0.0;
          if (data_.sigma) {
            s0 = (*data_.sigma)[0](x);
            s1 = (*data_.sigma)[1](x);
          }
          for (int a = 0; a < 4; ++a) {
            if (dirichlet && is_boundary(nodes[a])) continue;
            b(nodes[a]) += qw_ * (s0 * gphi_[p][a][0] + s1 * gphi_[p][a][1]);
            for (int c = 0; c < 4; ++c) {
              const double k = qw_ * r *
                               (gphi_[p][a][0] * gphi_[p][c][0] +
                                gphi_[p][a][1] * gphi_[p][c][1]);
              trip.emplace_back(nodes[a], nodes[c], k);
            }
          }
        }
      }
    }

    if (dirichlet) {
      for (std::size_t P = 0; P < N_; ++P)
        if (is_boundary(P)) {
          trip.emplace_back(P, P, 1.0);
          b(P) = data_.g ? data_.g(coords_[P]) : 0.0;
        }
    } else {
      for_each_edge_qp([&](std::size_t a, std::size_t b_node, double pa,
                           double pb, const Point& x,
                           const std::array<double, 2>& nrm, double w) {
        const double v = edge_datum(x, nrm);
        b(a) += v * pa * w;
        b(b_node) += v * pb * w;
      });
    }

    A.resize(static_cast<Eigen::Index>(N_), static_cast<Eigen::Index>(N_));
    A.setFromTriplets(trip.begin(), trip.end());
  }

  /// Nonlinear residual F(u) = A(u) u - b in PDE units (per unit area),
  /// skipping Dirichlet rows and the Neumann gauge row.
  double residual_norm(const std::vector<double>& u) const {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b;
    assemble(u, A, b);
    Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
    Eigen::VectorXd r = A * uv - b;
    const bool dirichlet = data_.kind == BoundaryKind::dirichlet;
    double acc = 0.0;
    for (std::size_t i = 0; i < N_; ++i) {
      if (dirichlet && is_boundary(i)) continue;
      if (!dirichlet && i == gauge_node()) continue;
      const double area = cell_area(g_.unflatten(i));
      const double ri = r(i) / area;
      acc += ri * ri * area;
    }
    return std::sqrt(acc);
  }

  /// Compatibility defect: the weak form at v = 1, i.e. the quadrature of
  /// (nu - s.n) over the boundary.
  double compatibility_defect() const {
    double acc = 0.0;
    for_each_edge_qp([&](std::size_t, std::size_t, double, double, const Point& x,
                         const std::array<double, 2>& nrm, double w) {
      double v = (data_.nu ? data_.nu(x) : 0.0);
      if (data_.sigma)
        v -= (*data_.sigma)[0](x) * nrm[0] + (*data_.sigma)[1](x) * nrm[1];
      acc += v * w;
    });
    return acc;
  }

  double nu_scale() const {
    double m = 0.0;
    if (!data_.nu) return m;
    for_each_edge_qp([&](std::size_t, std::size_t, double, double, const Point& x,
                         const std::array<double, 2>&, double) {
      m = std::max(m, std::abs(data_.nu(x)));
    });
    return m;
  }

  double perimeter() const {
    return 2.0 * (g_.bounds(0).length() + g_.bounds(1).length());
  }

  /// Distributes a (quadrature-level) compatibility defect uniformly over the
  /// boundary so the singular Neumann system is consistent.
  void set_flux_projection(double shift_per_length) { nu_shift_ = shift_per_length; }

  std::vector<double> solve_linear(const Eigen::SparseMatrix<double>& A_in,
                                   const Eigen::VectorXd& b_in) const {
    Eigen::SparseMatrix<double> A = A_in;
    Eigen::VectorXd b = b_in;
    const bool neumann = data_.kind == BoundaryKind::neumann;
    const bool direct = std::max(n1_, n2_) <= cfg_.direct_max_res;

    if (neumann && direct) {
      // pin the gauge node
      const std::size_t p = gauge_node();
      for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
          if (static_cast<std::size_t>(it.row()) == p)
            it.valueRef() = (static_cast<std::size_t>(it.col()) == p) ? 1.0 : 0.0;
      b(p) = 0.0;
    }

    Eigen::VectorXd x;
    if (direct) {
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
      lu.compute(A);
      if (lu.info() != Eigen::Success)
        throw convergence_error("bvp: sparse factorization failed");
      x = lu.solve(b);
    } else if (neumann) {
      Eigen::VectorXd diag = A.diagonal();
      for (Eigen::Index i = 0; i < diag.size(); ++i)
        if (diag(i) <= 0.0) diag(i) = 1.0;
      // deflate the constant null vector, weighted by cell areas
      Eigen::VectorXd a(static_cast<Eigen::Index>(N_));
      for (std::size_t i = 0; i < N_; ++i) a(i) = cell_area(g_.unflatten(i));
      x = pcg(A, b, diag, a, 1.0 / a.sum(), cfg_.krylov_tol, cfg_.krylov_max_iters);
    } else {
      // eliminate the Dirichlet rows; the reduced system is SPD
      std::vector<Eigen::Index> to_red(N_, -1);
      std::vector<std::size_t> to_full;
      for (std::size_t i = 0; i < N_; ++i)
        if (!is_boundary(i)) {
          to_red[i] = static_cast<Eigen::Index>(to_full.size());
          to_full.push_back(i);
        }
      const Eigen::Index M = static_cast<Eigen::Index>(to_full.size());
      Eigen::VectorXd br(M);
      for (Eigen::Index r = 0; r < M; ++r) br(r) = b(to_full[r]);
      std::vector<Eigen::Triplet<double>> trip;
      for (int k = 0; k < A.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it) {
          const Eigen::Index rr = to_red[it.row()];
          if (rr < 0) continue;
          const Eigen::Index rc = to_red[it.col()];
          if (rc >= 0)
            trip.emplace_back(rr, rc, it.value());
          else
            br(rr) -= it.value() * b(it.col());  // boundary value = b entry
        }
      Eigen::SparseMatrix<double> Ar(M, M);
      Ar.setFromTriplets(trip.begin(), trip.end());
      Eigen::VectorXd diag = Ar.diagonal();
      for (Eigen::Index i = 0; i < diag.size(); ++i)
        if (diag(i) <= 0.0) diag(i) = 1.0;
      const Eigen::VectorXd xr = pcg(Ar, br, diag, std::nullopt, 0.0,
                                     cfg_.krylov_tol, cfg_.krylov_max_iters);
      x.resize(static_cast<Eigen::Index>(N_));
      for (std::size_t i = 0; i < N_; ++i)
        x(i) = to_red[i] >= 0 ? xr(to_red[i]) : b(i);
    }

    std::vector<double> u(N_);
    if (neumann) {
      const double shift = x(gauge_node());
      for (std::size_t i = 0; i < N_; ++i) u[i] = x(i) - shift;
    } else {
      for (std::size_t i = 0; i < N_; ++i) u[i] = x(i);
    }
    return u;
  }

  /// Newton step with the consistent tangent: per quadrature point the
  /// contribution rho grad(phi_a).grad(phi_c) + 2 rho' (grad u.grad phi_a)
  /// (grad u.grad phi_c); symmetric, factored directly.
  std::vector<double> newton_step(const std::vector<double>& u) const {
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd b;
    assemble(u, A, b);
    Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
    Eigen::VectorXd F = A * uv - b;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(16 * N_);
    const bool dirichlet = data_.kind == BoundaryKind::dirichlet;
    for_each_qp(u, [&](int p, const std::size_t* nodes, const Point& x, double gx,
                       double gy, double t) {
      const double r = rho0_eval(sys_, x, t);
      const double rp = rho0_deriv(sys_, x, t);
      for (int a = 0; a < 4; ++a) {
        if (dirichlet && is_boundary(nodes[a])) continue;
        const double ga = gx * gphi_[p][a][0] + gy * gphi_[p][a][1];
        for (int c = 0; c < 4; ++c) {
          const double gc = gx * gphi_[p][c][0] + gy * gphi_[p][c][1];
          const double k = qw_ * (r * (gphi_[p][a][0] * gphi_[p][c][0] +
                                       gphi_[p][a][1] * gphi_[p][c][1]) +
                                  2.0 * rp * ga * gc);
          trip.emplace_back(nodes[a], nodes[c], k);
        }
      }
    });
    if (dirichlet) {
      for (std::size_t P = 0; P < N_; ++P)
        if (is_boundary(P)) {
          trip.emplace_back(P, P, 1.0);
          F(P) = uv(P) - b(P);
        }
    }
    Eigen::SparseMatrix<double> J(static_cast<Eigen::Index>(N_),
                                  static_cast<Eigen::Index>(N_));
    J.setFromTriplets(trip.begin(), trip.end());

    Eigen::VectorXd rhs = -F;
    if (data_.kind == BoundaryKind::neumann) {
      const std::size_t p = gauge_node();
      for (int k = 0; k < J.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(J, k); it; ++it)
          if (static_cast<std::size_t>(it.row()) == p)
            it.valueRef() = (static_cast<std::size_t>(it.col()) == p) ? 1.0 : 0.0;
      rhs(p) = 0.0;
    }
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success)
      throw convergence_error("bvp: Newton factorization failed");
    Eigen::VectorXd delta = lu.solve(rhs);
    std::vector<double> out(N_);
    for (std::size_t i = 0; i < N_; ++i) out[i] = u[i] + delta(i);
    if (data_.kind == BoundaryKind::neumann) {
      const double shift = out[gauge_node()];
      for (auto& v : out) v -= shift;
    }
    return out;
  }

  /// Discrete energy of the transformed functional, evaluated with the same
  /// quadrature as the assembly: 1/2 sum_qp R(t_qp) - sum_qp <s, grad u>
  /// - sum_edge (nu - s.n) u.
  double energy_value(const std::vector<double>& u) const {
    double acc = 0.0;
    for_each_qp(u, [&](int, const std::size_t*, const Point& x, double gx,
                       double gy, double t) {
      double R = 0.0;
      if (t > 0.0) {
        auto f = [&](double s) { return rho0_eval(sys_, x, s); };
        R = adaptive_simpson(f, 0.0, t, 1e-9 * std::max(1.0, t));
      }
      double sdotg = 0.0;
      if (data_.sigma)
        sdotg = (*data_.sigma)[0](x) * gx + (*data_.sigma)[1](x) * gy;
      acc += (0.5 * R - sdotg) * qw_;
    });
    if (data_.kind == BoundaryKind::neumann) {
      for_each_edge_qp([&](std::size_t a, std::size_t b_node, double pa, double pb,
                           const Point& x, const std::array<double, 2>& nrm,
                           double w) {
        acc -= edge_datum(x, nrm) * (pa * u[a] + pb * u[b_node]) * w;
      });
    }
    return acc;
  }

 private:
  const AdmissibleSystem& sys_;
  const BoundaryData& data_;
  Grid g_;
  SolveConfig cfg_;
  int n1_ = 0, n2_ = 0;
  double h1_ = 0.0, h2_ = 0.0;
  std::size_t N_ = 0;
  std::vector<Point> coords_;
  double nu_shift_ = 0.0;
  // reference-element tables: phi_[qp][corner], gphi_[qp][corner][axis]
  double phi_[4][4] = {};
  double gphi_[4][4][2] = {};
  double qp_off_[4][2] = {};
  double qw_ = 0.0;
};


}  // namespace bvpdetail

// ---------------------------------------------------------------------------
// Public solves.
// ---------------------------------------------------------------------------

inline BvpSolution solve_bvp(const AdmissibleSystem& sys, const BoundaryData& data,
                             const Grid& grid, const SolveConfig& cfg = {},
                             const std::vector<double>* warm_start = nullptr) {
  using bvpdetail::ScalarProblem;
  ScalarProblem prob(sys, data, grid, cfg);
  const std::size_t N = prob.size();

  if (data.kind == BoundaryKind::neumann) {
    const double defect = prob.compatibility_defect();
    // exactly compatible data must sit at quadrature roundoff; manufactured
    // fluxes carry an O(h^2) trapezoid defect, which is projected out below
    const double tol = std::max(
        1e-10, 25.0 * grid.h_max() * grid.h_max() * (1.0 + prob.nu_scale()));
    if (std::abs(defect) > tol)
      throw precondition_error(
          "bvp: Neumann data incompatible with the source (defect = " +
          fmt17(defect) + ")");
    prob.set_flux_projection(defect / prob.perimeter());
  }

  // sonic guard threshold in the transformed variable
  const double q_limit = sys.Q_s * (1.0 - cfg.sonic_margin);
  const double th_limit = sys.map.f(std::min(q_limit, sys.map.hi));

  SolveReport rep;
  std::vector<double> u = warm_start && warm_start->size() == N
                              ? *warm_start
                              : std::vector<double>(N, 0.0);

  auto check_sonic = [&](const std::vector<double>& uvec) {
    double th_max = prob.max_qp_t(uvec);
    for (double v : prob.squared_gradient(uvec)) th_max = std::max(th_max, v);
    if (th_max >= th_limit)
      throw sonic_error("bvp: sonic guard tripped (max |grad u|^2 = " +
                            fmt17(th_max) + ")",
                        th_max, th_limit);
    return th_max;
  };

  double prev_energy = std::numeric_limits<double>::infinity();
  double step_norm = std::numeric_limits<double>::infinity();
  bool newton_phase = false;
  double res = std::numeric_limits<double>::infinity();
  double th_max = 0.0;

  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    th_max = check_sonic(u);

    std::vector<double> u_next;
    if (newton_phase) {
      u_next = prob.newton_step(u);
    } else {
      Eigen::SparseMatrix<double> A;
      Eigen::VectorXd b;
      prob.assemble(u, A, b);
      u_next = prob.solve_linear(A, b);
    }

    step_norm = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      step_norm = std::max(step_norm, std::abs(u_next[i] - u[i]));
    u = std::move(u_next);

    th_max = check_sonic(u);
    res = prob.residual_norm(u);

    // slack above the energy quadrature tolerance, to avoid flagging noise
    const double e = prob.energy_value(u);
    if (!rep.energy_history.empty() &&
        e > prev_energy + 1e-8 * std::max(1.0, std::abs(prev_energy)))
      rep.energy_monotone = false;
    rep.energy_history.push_back(e);
    prev_energy = e;

    if (res <= cfg.tol) {
      ++it;
      break;
    }
    if (cfg.newton && !newton_phase && step_norm < cfg.newton_threshold &&
        std::max(grid.res(0), grid.res(1)) <= cfg.direct_max_res) {
      newton_phase = true;
      rep.method = "kacanov+newton";
    }
  }
  if (res > cfg.tol)
    throw convergence_error("bvp: nonlinear iteration did not converge (residual " +
                            fmt17(res) + " after " + std::to_string(it) +
                            " iterations)");

  rep.iterations = it;
  rep.residual = res;
  rep.max_q = sys.map.g(std::min(th_max, sys.map.g.range_hi()));
  rep.subsonic = rep.max_q < sys.Q_s * (1.0 - cfg.sonic_margin);

  BvpSolution sol;
  sol.grid = grid;
  sol.u = ScalarField(grid, u);
  sol.w0 = exterior_d(to_form(sol.u));
  sol.w = conformal_inverse_t(sol.w0, sys.map);
  sol.report = std::move(rep);
  return sol;
}

inline BvpSolution solve_dirichlet(const AdmissibleSystem& sys,
                                   const BoundaryData& data, const Grid& grid,
                                   const SolveConfig& cfg = {}) {
  if (data.kind != BoundaryKind::dirichlet)
    throw precondition_error("solve_dirichlet: data kind mismatch");
  return solve_bvp(sys, data, grid, cfg);
}

inline BvpSolution solve_neumann(const AdmissibleSystem& sys,
                                 const BoundaryData& data, const Grid& grid,
                                 const SolveConfig& cfg = {}) {
  if (data.kind != BoundaryKind::neumann)
    throw precondition_error("solve_neumann: data kind mismatch");
  return solve_bvp(sys, data, grid, cfg);
}

// ---------------------------------------------------------------------------
// Amplitude continuation with sonic bracketing.
// ---------------------------------------------------------------------------

struct ContinuationResult {
  SolveReport report;                 // aggregated path diagnostics
  std::optional<BvpSolution> last_subsonic;
};

/// Warm-started solves along tau -> tau * data. Stops at the first sonic
/// trip and brackets the critical amplitude by bisection to a relative
/// tolerance of 1e-3.
inline ContinuationResult continuation(const AdmissibleSystem& sys,
                                       const BoundaryData& data,
                                       const std::vector<double>& taus,
                                       const Grid& grid,
                                       const SolveConfig& cfg = {}) {
  if (taus.empty()) throw precondition_error("continuation: empty tau grid");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (!(taus[i] > taus[i - 1]))
      throw precondition_error("continuation: tau grid must increase");

  ContinuationResult out;
  std::vector<double> warm;
  std::vector<double> prev_u;
  double prev_tau = 0.0;

  auto attempt = [&](double tau, const std::vector<double>* start,
                     BvpSolution* sol_out) -> bool {
    try {
      BvpSolution sol = solve_bvp(sys, data.scaled(tau), grid, cfg, start);
      if (sol_out) *sol_out = std::move(sol);
      return true;
    } catch (const sonic_error&) {
      return false;
    }
  };

  for (double tau : taus) {
    std::vector<double> start = warm;
    if (!start.empty() && prev_tau > 0.0)
      for (auto& v : start) v *= tau / prev_tau;

    BvpSolution sol;
    const bool ok = attempt(tau, start.empty() ? nullptr : &start, &sol);
    ContinuationEntry entry;
    entry.tau = tau;
    entry.tripped = !ok;
    if (ok) {
      entry.max_q = sol.report.max_q;
      entry.residual = sol.report.residual;
      entry.iterations = sol.report.iterations;
      if (!prev_u.empty()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < prev_u.size(); ++i) {
          const double d = sol.u[i] - prev_u[i];
          acc += d * d * grid.quad_weight(grid.unflatten(i));
        }
        entry.step_diff = std::sqrt(acc);
      }
      prev_u = sol.u.values();
      warm = sol.u.values();
      out.last_subsonic = std::move(sol);
      prev_tau = tau;
    }
    out.report.path.push_back(entry);
    if (!ok) {
      out.report.sonic_tripped = true;
      // bracket tau_s between the last subsonic amplitude and this one
      double lo = prev_tau > 0.0 ? prev_tau : 0.0;
      double hi = tau;
      while (hi - lo > 1e-3 * hi) {
        const double mid = 0.5 * (lo + hi);
        std::vector<double> start_mid = warm;
        if (!start_mid.empty() && prev_tau > 0.0)
          for (auto& v : start_mid) v *= mid / prev_tau;
        if (attempt(mid, start_mid.empty() ? nullptr : &start_mid, nullptr))
          lo = mid;
        else
          hi = mid;
      }
      out.report.tau_s = 0.5 * (lo + hi);
      // resolve at the subsonic bracket edge so the path records the
      // approach to the sonic bound
      BvpSolution edge;
      std::vector<double> start_edge = warm;
      if (!start_edge.empty() && prev_tau > 0.0)
        for (auto& v : start_edge) v *= lo / prev_tau;
      if (lo > 0.0 &&
          attempt(lo, start_edge.empty() ? nullptr : &start_edge, &edge)) {
        ContinuationEntry e2;
        e2.tau = lo;
        e2.max_q = edge.report.max_q;
        e2.residual = edge.report.residual;
        e2.iterations = edge.report.iterations;
        out.report.path.push_back(e2);
        out.last_subsonic = std::move(edge);
      }
      break;
    }
  }

  if (out.last_subsonic) {
    out.report.iterations = out.last_subsonic->report.iterations;
    out.report.residual = out.last_subsonic->report.residual;
    out.report.max_q = out.last_subsonic->report.max_q;
    out.report.subsonic = !out.report.sonic_tripped;
    out.report.method = out.last_subsonic->report.method;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Verification of the solved system in its untransformed variables.
// ---------------------------------------------------------------------------

struct BvpResiduals {
  Norms2 codiff;           // d*(rho w) - d zeta ^ *(rho w) - d*sigma
  Norms2 codiff_interior;
  Norms2 frobenius;        // d w - d eta ^ w
  Norms2 frobenius_interior;
  double trace_defect = 0.0;     // Dirichlet: tangential trace mismatch
  double flux_defect = 0.0;      // Neumann: normal flux mismatch
  double pullback_defect = 0.0;  // exp(-eta(|w|^2)) w - w0
};

inline BvpResiduals verify_bvp(const BvpSolution& sol, const AdmissibleSystem& sys,
                               const BoundaryData& data) {
  const Grid& g = sol.grid;
  const DiscreteForm& w = sol.w;
  const ScalarField q = qnorm(w);
  BvpResiduals out;

  // rho(x,Q) w and the inhomogeneous co-differential residual
  DiscreteForm rw = w;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double r = sys.rho.rho(g.coord(i), q[i]);
    rw.at(0, i) *= r;
    rw.at(1, i) *= r;
  }
  const DiscreteForm srw = hodge_star(rw);
  ScalarField zfield(g), efield(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    zfield[i] = sys.zeta(g.coord(i), q[i]);
    efield[i] = sys.eta(q[i]);
  }
  DiscreteForm R1 = exterior_d(srw) - wedge(exterior_d(to_form(zfield)), srw);
  if (data.sigma) {
    DiscreteForm s(g, 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      s.at(0, i) = (*data.sigma)[0](g.coord(i));
      s.at(1, i) = (*data.sigma)[1](g.coord(i));
    }
    R1 -= exterior_d(hodge_star(s));
  }
  out.codiff = norms2(R1);
  out.codiff_interior = norms2_interior(R1);

  const DiscreteForm R2 = exterior_d(w) - wedge(exterior_d(to_form(efield)), w);
  out.frobenius = norms2(R2);
  out.frobenius_interior = norms2_interior(R2);

  // pull-back consistency: exp(-eta(|w|^2)) w = w0
  DiscreteForm back = w;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double s = std::exp(-efield[i]);
    back.at(0, i) *= s;
    back.at(1, i) *= s;
  }
  out.pullback_defect = max_abs(back - sol.w0);

  if (data.kind == BoundaryKind::dirichlet && data.g) {
    // tangential component of exp(-eta) w against the data gradient
    const DiscreteForm dg = exterior_d(to_form(sample_scalar(g, data.g)));
    double defect = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto id = g.unflatten(i);
      if (id[1] == 0 || id[1] == g.res(1) - 1)  // horizontal edges: dx1 part
        defect = std::max(defect, std::abs(back.at(0, i) - dg.at(0, i)));
      if (id[0] == 0 || id[0] == g.res(0) - 1)  // vertical edges: dx2 part
        defect = std::max(defect, std::abs(back.at(1, i) - dg.at(1, i)));
    }
    out.trace_defect = defect;
  }
  if (data.kind == BoundaryKind::neumann && data.nu) {
    // N(rho e^{-zeta} w) against nu
    double defect = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto id = g.unflatten(i);
      if (!g.on_boundary(id)) continue;
      const Point x = g.coord(i);
      const double scale = std::exp(-zfield[i]) * sys.rho.rho(x, q[i]);
      double normal = 0.0;
      bool corner_skip = false;
      int sides = 0;
      if (id[0] == 0) {
        normal = -scale * w.at(0, i);
        ++sides;
      }
      if (id[0] == g.res(0) - 1) {
        normal = scale * w.at(0, i);
        ++sides;
      }
      if (id[1] == 0) {
        normal = -scale * w.at(1, i);
        ++sides;
      }
      if (id[1] == g.res(1) - 1) {
        normal = scale * w.at(1, i);
        ++sides;
      }
      corner_skip = sides > 1;  // normal direction ambiguous at corners
      if (!corner_skip)
        defect = std::max(defect, std::abs(normal - data.nu(x)));
    }
    out.flux_defect = defect;
  }
  return out;
}

}  // namespace nlhodge

#endif  // NLHODGE_BVP_HPP
