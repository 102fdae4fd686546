// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Discrete exterior calculus on uniform tensor-product grids. Forms are
// stored componentwise against the coordinate coframe dx^I (one scalar field
// per increasing multi-index); all metric operations use the Euclidean
// metric and the standard orientation dx^1^...^dx^n.
//
// Differencing: second-order central stencils at interior nodes, second-order
// one-sided stencils at boundary nodes. Since every axis stencil depends only
// on the position along its own axis, the per-axis difference operators
// commute and d(d a) vanishes identically (not just asymptotically).

#ifndef NLHODGE_FORMS_HPP
#define NLHODGE_FORMS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "nlhodge/core.hpp"
#include "nlhodge/grid.hpp"

namespace nlhodge {

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid_(g), v_(g.size(), 0.0) {}
  ScalarField(const Grid& g, std::vector<double> values)
      : grid_(g), v_(std::move(values)) {
    if (v_.size() != grid_.size())
      throw precondition_error("ScalarField: value count does not match grid");
  }

  const Grid& grid() const { return grid_; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  std::size_t size() const { return v_.size(); }
  const std::vector<double>& values() const { return v_; }
  std::vector<double>& values() { return v_; }

 private:
  Grid grid_;
  std::vector<double> v_;
};

class DiscreteForm {
 public:
  DiscreteForm() = default;

  DiscreteForm(const Grid& g, int k) : grid_(g), k_(k), basis_(g.dim(), k) {
    comps_.assign(static_cast<std::size_t>(basis_.count()),
                  std::vector<double>(g.size(), 0.0));
  }

  const Grid& grid() const { return grid_; }
  int degree() const { return k_; }
  const FormBasis& basis() const { return basis_; }
  int ncomp() const { return basis_.count(); }

  std::vector<double>& comp(int i) { return comps_[static_cast<std::size_t>(i)]; }
  const std::vector<double>& comp(int i) const {
    return comps_[static_cast<std::size_t>(i)];
  }

  double& at(int c, std::size_t node) { return comps_[static_cast<std::size_t>(c)][node]; }
  double at(int c, std::size_t node) const {
    return comps_[static_cast<std::size_t>(c)][node];
  }

  DiscreteForm& operator+=(const DiscreteForm& o) {
    require_match(o);
    for (int c = 0; c < ncomp(); ++c)
      for (std::size_t i = 0; i < grid_.size(); ++i) comp(c)[i] += o.comp(c)[i];
    return *this;
  }
  DiscreteForm& operator-=(const DiscreteForm& o) {
    require_match(o);
    for (int c = 0; c < ncomp(); ++c)
      for (std::size_t i = 0; i < grid_.size(); ++i) comp(c)[i] -= o.comp(c)[i];
    return *this;
  }
  DiscreteForm& operator*=(double s) {
    for (int c = 0; c < ncomp(); ++c)
      for (auto& v : comp(c)) v *= s;
    return *this;
  }

  friend DiscreteForm operator+(DiscreteForm a, const DiscreteForm& b) { return a += b; }
  friend DiscreteForm operator-(DiscreteForm a, const DiscreteForm& b) { return a -= b; }
  friend DiscreteForm operator*(double s, DiscreteForm a) { return a *= s; }

  void require_match(const DiscreteForm& o) const {
    if (!(grid_ == o.grid_) || k_ != o.k_)
      throw precondition_error("forms do not share grid and degree");
  }

 private:
  Grid grid_;
  int k_ = 0;
  FormBasis basis_{2, 0};
  std::vector<std::vector<double>> comps_;
};

// ---------------------------------------------------------------------------
// Sampling helpers.
// ---------------------------------------------------------------------------

/// Coefficient sampler: value of the dx^I coefficient (I given as a bitmask)
/// at a point.
using FormSampler = std::function<double(unsigned mask, const Point&)>;

inline DiscreteForm sample_form(const Grid& g, int k, const FormSampler& fn) {
  DiscreteForm w(g, k);
  const auto& basis = w.basis();
  for (int c = 0; c < w.ncomp(); ++c) {
    const unsigned m = basis.mask(c);
    auto& vals = w.comp(c);
    for (std::size_t i = 0; i < g.size(); ++i) vals[i] = fn(m, g.coord(i));
  }
  return w;
}

inline ScalarField sample_scalar(const Grid& g, const SpaceFn& fn) {
  ScalarField s(g);
  for (std::size_t i = 0; i < g.size(); ++i) s[i] = fn(g.coord(i));
  return s;
}

inline DiscreteForm to_form(const ScalarField& s) {
  DiscreteForm w(s.grid(), 0);
  w.comp(0) = s.values();
  return w;
}

inline ScalarField to_scalar(const DiscreteForm& w) {
  if (w.degree() != 0) throw precondition_error("to_scalar: degree must be 0");
  return ScalarField(w.grid(), w.comp(0));
}

// ---------------------------------------------------------------------------
// Differencing core.
// ---------------------------------------------------------------------------

/// d/dx_axis of a nodal field: central in the interior, one-sided
/// three-point stencils on the two boundary layers of that axis.
inline void axis_derivative(const Grid& g, const std::vector<double>& in, int axis,
                            std::vector<double>& out) {
  const std::size_t s = g.stride(axis);
  const int n_axis = g.res(axis);
  const double inv2h = 1.0 / (2.0 * g.spacing(axis));
  out.resize(g.size());
  // boundary stencils grouped as differences so constant fibers come out
  // exactly zero
  parallel_for(g.size(), [&](std::size_t idx) {
    const int i = static_cast<int>((idx / s) % static_cast<std::size_t>(n_axis));
    if (i == 0)
      out[idx] = (3.0 * (in[idx + s] - in[idx]) + (in[idx + s] - in[idx + 2 * s])) *
                 inv2h;
    else if (i == n_axis - 1)
      out[idx] = (3.0 * (in[idx] - in[idx - s]) - (in[idx - s] - in[idx - 2 * s])) *
                 inv2h;
    else
      out[idx] = (in[idx + s] - in[idx - s]) * inv2h;
  });
}

// ---------------------------------------------------------------------------
// Exterior algebra and calculus.
// ---------------------------------------------------------------------------

inline DiscreteForm wedge(const DiscreteForm& a, const DiscreteForm& b) {
  if (!(a.grid() == b.grid())) throw precondition_error("wedge: grid mismatch");
  const int k = a.degree(), l = b.degree(), n = a.grid().dim();
  if (k + l > n) throw precondition_error("wedge: degree overflow");
  DiscreteForm out(a.grid(), k + l);
  const auto& ba = a.basis();
  const auto& bb = b.basis();
  const auto& bo = out.basis();
  for (int ca = 0; ca < a.ncomp(); ++ca) {
    const unsigned ma = ba.mask(ca);
    for (int cb = 0; cb < b.ncomp(); ++cb) {
      const unsigned mb = bb.mask(cb);
      if (ma & mb) continue;
      const double sgn = merge_sign(ma, mb);
      const int co = bo.position(ma | mb);
      const auto& va = a.comp(ca);
      const auto& vb = b.comp(cb);
      auto& vo = out.comp(co);
      for (std::size_t i = 0; i < vo.size(); ++i) vo[i] += sgn * va[i] * vb[i];
    }
  }
  return out;
}

inline DiscreteForm hodge_star(const DiscreteForm& a) {
  const int n = a.grid().dim(), k = a.degree();
  DiscreteForm out(a.grid(), n - k);
  const unsigned full = (1u << n) - 1u;
  for (int c = 0; c < a.ncomp(); ++c) {
    const unsigned m = a.basis().mask(c);
    const double sgn = hodge_sign(m, n);
    const int co = out.basis().position(full & ~m);
    const auto& va = a.comp(c);
    auto& vo = out.comp(co);
    for (std::size_t i = 0; i < vo.size(); ++i) vo[i] = sgn * va[i];
  }
  return out;
}

inline DiscreteForm exterior_d(const DiscreteForm& a) {
  const int n = a.grid().dim(), k = a.degree();
  if (k >= n) throw precondition_error("exterior_d: degree n form has no d");
  DiscreteForm out(a.grid(), k + 1);
  std::vector<double> deriv;
  for (int c = 0; c < a.ncomp(); ++c) {
    const unsigned m = a.basis().mask(c);
    for (int j = 0; j < n; ++j) {
      const unsigned bit = 1u << j;
      if (m & bit) continue;
      axis_derivative(a.grid(), a.comp(c), j, deriv);
      // dx^j slots in front of dx^I; sort it past the smaller indices of I.
      const double sgn = (popcount4(m & (bit - 1u)) % 2 == 0) ? 1.0 : -1.0;
      const int co = out.basis().position(m | bit);
      auto& vo = out.comp(co);
      for (std::size_t i = 0; i < vo.size(); ++i) vo[i] += sgn * deriv[i];
    }
  }
  return out;
}

/// Codifferential delta = (-1)^{n(k+1)+1} * d * on k-forms (Euclidean
/// convention; the sign is pinned by the discrete adjointness tests).
inline DiscreteForm codifferential(const DiscreteForm& a) {
  const int n = a.grid().dim(), k = a.degree();
  if (k < 1) throw precondition_error("codifferential: degree must be >= 1");
  const int e = n * (k + 1) + 1;
  const double sgn = (e % 2 == 0) ? 1.0 : -1.0;
  DiscreteForm out = hodge_star(exterior_d(hodge_star(a)));
  out *= sgn;
  return out;
}

inline ScalarField qnorm(const DiscreteForm& a) {
  ScalarField q(a.grid());
  for (int c = 0; c < a.ncomp(); ++c) {
    const auto& v = a.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) q[i] += v[i] * v[i];
  }
  return q;
}

// ---------------------------------------------------------------------------
// Inner products and norms (trapezoidal quadrature over the box).
// ---------------------------------------------------------------------------

inline double l2_inner(const DiscreteForm& a, const DiscreteForm& b) {
  a.require_match(b);
  const Grid& g = a.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double dot = 0.0;
    for (int c = 0; c < a.ncomp(); ++c) dot += a.comp(c)[i] * b.comp(c)[i];
    acc += dot * g.quad_weight(g.unflatten(i));
  }
  return acc;
}

inline double l2_norm(const DiscreteForm& a) { return std::sqrt(l2_inner(a, a)); }

inline double l2_norm(const ScalarField& s) {
  const Grid& g = s.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    acc += s[i] * s[i] * g.quad_weight(g.unflatten(i));
  return std::sqrt(acc);
}

/// Largest absolute coefficient over all nodes and components.
inline double max_abs(const DiscreteForm& a) {
  double m = 0.0;
  for (int c = 0; c < a.ncomp(); ++c)
    for (double v : a.comp(c)) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs(const ScalarField& s) {
  double m = 0.0;
  for (double v : s.values()) m = std::max(m, std::abs(v));
  return m;
}

struct Norms2 {
  double l2 = 0.0;
  double max = 0.0;
};

inline Norms2 norms2(const DiscreteForm& a) { return {l2_norm(a), max_abs(a)}; }

/// Norms restricted to nodes at least `margin` layers from the boundary.
/// Compositions of difference operators keep their full interior order
/// there, away from the one-sided/central stencil transition.
inline Norms2 norms2_interior(const DiscreteForm& a, int margin = 2) {
  const Grid& g = a.grid();
  double acc = 0.0, mx = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto id = g.unflatten(i);
    bool inside = true;
    for (int ax = 0; ax < g.dim(); ++ax)
      if (id[ax] < margin || id[ax] > g.res(ax) - 1 - margin) inside = false;
    if (!inside) continue;
    double dot = 0.0;
    for (int c = 0; c < a.ncomp(); ++c) {
      const double v = a.comp(c)[i];
      dot += v * v;
      mx = std::max(mx, std::abs(v));
    }
    acc += dot * g.quad_weight(id);
  }
  return {std::sqrt(acc), mx};
}

/// Pointwise rescale of every component by a scalar field.
inline DiscreteForm scale_pointwise(const DiscreteForm& a, const ScalarField& s) {
  if (!(a.grid() == s.grid()))
    throw precondition_error("scale_pointwise: grid mismatch");
  DiscreteForm out = a;
  for (int c = 0; c < out.ncomp(); ++c) {
    auto& v = out.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s[i];
  }
  return out;
}

}  // namespace nlhodge

#endif  // NLHODGE_FORMS_HPP
