// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef NLHODGE_GRID_HPP
#define NLHODGE_GRID_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nlhodge/core.hpp"

namespace nlhodge {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
};

inline bool operator==(const Interval& a, const Interval& b) {
  return a.lo == b.lo && a.hi == b.hi;
}

// ---------------------------------------------------------------------------
// Uniform tensor-product grid on a box in R^n, 2 <= n <= 4. Node-based
// storage: res[i] nodes per axis including both endpoints. Flat indices are
// row-major with axis 1 fastest.
// ---------------------------------------------------------------------------

class Grid {
 public:
  Grid() = default;

  Grid(int n, const std::vector<Interval>& bounds, const std::vector<int>& res) {
    if (n < 2 || n > 4) throw precondition_error("Grid: dimension must be 2..4");
    if (static_cast<int>(bounds.size()) != n || static_cast<int>(res.size()) != n)
      throw precondition_error("Grid: bounds/res size must match dimension");
    n_ = n;
    total_ = 1;
    for (int i = 0; i < n; ++i) {
      if (res[i] < 3) throw precondition_error("Grid: need at least 3 nodes per axis");
      if (!(bounds[i].hi > bounds[i].lo))
        throw precondition_error("Grid: empty axis interval");
      bounds_[i] = bounds[i];
      res_[i] = res[i];
      h_[i] = (bounds[i].hi - bounds[i].lo) / (res[i] - 1);
      stride_[i] = total_;
      total_ *= static_cast<std::size_t>(res[i]);
    }
  }

  int dim() const { return n_; }
  std::size_t size() const { return total_; }
  const Interval& bounds(int axis) const { return bounds_[axis]; }
  int res(int axis) const { return res_[axis]; }
  double spacing(int axis) const { return h_[axis]; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  double h_max() const {
    double h = 0.0;
    for (int i = 0; i < n_; ++i) h = std::max(h, h_[i]);
    return h;
  }

  double volume() const {
    double v = 1.0;
    for (int i = 0; i < n_; ++i) v *= bounds_[i].length();
    return v;
  }

  std::array<int, 4> unflatten(std::size_t idx) const {
    std::array<int, 4> out{0, 0, 0, 0};
    for (int i = 0; i < n_; ++i) {
      out[i] = static_cast<int>(idx % static_cast<std::size_t>(res_[i]));
      idx /= static_cast<std::size_t>(res_[i]);
    }
    return out;
  }

  std::size_t flatten(const std::array<int, 4>& id) const {
    std::size_t idx = 0;
    for (int i = n_ - 1; i >= 0; --i)
      idx = idx * static_cast<std::size_t>(res_[i]) + static_cast<std::size_t>(id[i]);
    return idx;
  }

  Point coord(const std::array<int, 4>& id) const {
    Point p{0, 0, 0, 0};
    for (int i = 0; i < n_; ++i) p[i] = bounds_[i].lo + h_[i] * id[i];
    return p;
  }

  Point coord(std::size_t idx) const { return coord(unflatten(idx)); }

  bool on_boundary(const std::array<int, 4>& id) const {
    for (int i = 0; i < n_; ++i)
      if (id[i] == 0 || id[i] == res_[i] - 1) return true;
    return false;
  }

  /// Trapezoidal quadrature weight of a node (half weight per boundary axis).
  double quad_weight(const std::array<int, 4>& id) const {
    double w = 1.0;
    for (int i = 0; i < n_; ++i) {
      w *= h_[i];
      if (id[i] == 0 || id[i] == res_[i] - 1) w *= 0.5;
    }
    return w;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    if (a.n_ != b.n_) return false;
    for (int i = 0; i < a.n_; ++i)
      if (a.res_[i] != b.res_[i] || !(a.bounds_[i] == b.bounds_[i])) return false;
    return true;
  }

 private:
  int n_ = 0;
  std::array<Interval, 4> bounds_{};
  std::array<int, 4> res_{};
  std::array<double, 4> h_{};
  std::array<std::size_t, 4> stride_{};
  std::size_t total_ = 0;
};

/// Unit box [0,1]^n with the same resolution on every axis.
inline Grid unit_grid(int n, int res) {
  std::vector<Interval> b(n, Interval{0.0, 1.0});
  std::vector<int> r(n, res);
  return Grid(n, b, r);
}

// ---------------------------------------------------------------------------
// Basis bookkeeping for k-forms. A strictly increasing multi-index over
// {1..n} is stored as a bitmask (bit j-1 set iff axis j participates);
// components are ordered lexicographically by index tuple.
// ---------------------------------------------------------------------------

inline int binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  int r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

inline int popcount4(unsigned m) {
  int c = 0;
  while (m) {
    c += static_cast<int>(m & 1u);
    m >>= 1;
  }
  return c;
}

/// Parity sign of merging two disjoint increasing tuples a, b (a first)
/// into one increasing tuple: (-1)^inversions.
inline int merge_sign(unsigned a, unsigned b) {
  int inv = 0;
  for (int j = 0; j < 4; ++j)
    if (b & (1u << j)) inv += popcount4(a >> (j + 1));
  return (inv % 2 == 0) ? 1 : -1;
}

/// Parity sign of the permutation (I, I^c) of (1..n).
inline int hodge_sign(unsigned mask, int n) {
  const unsigned comp = (~mask) & ((1u << n) - 1u);
  return merge_sign(mask, comp);
}

class FormBasis {
 public:
  FormBasis(int n, int k) : n_(n), k_(k) {
    if (k < 0 || k > n) throw precondition_error("FormBasis: degree out of range");
    pos_.fill(-1);
    std::array<int, 4> idx{};
    enumerate(idx, 0, 1);
  }

  int dim() const { return n_; }
  int degree() const { return k_; }
  int count() const { return static_cast<int>(masks_.size()); }
  unsigned mask(int i) const { return masks_[static_cast<std::size_t>(i)]; }
  int position(unsigned m) const { return pos_[m]; }

  /// "12" for dx1^dx2; empty string for the 0-form component.
  static std::string label(unsigned m) {
    std::string s;
    for (int j = 0; j < 4; ++j)
      if (m & (1u << j)) s += static_cast<char>('1' + j);
    return s;
  }

  static unsigned mask_from_axes(const std::vector<int>& axes) {
    unsigned m = 0;
    for (int a : axes) m |= 1u << (a - 1);
    return m;
  }

 private:
  void enumerate(std::array<int, 4>& idx, int depth, int from) {
    if (depth == k_) {
      unsigned m = 0;
      for (int i = 0; i < k_; ++i) m |= 1u << (idx[i] - 1);
      pos_[m] = static_cast<int>(masks_.size());
      masks_.push_back(m);
      return;
    }
    for (int v = from; v <= n_; ++v) {
      idx[depth] = v;
      enumerate(idx, depth + 1, v + 1);
    }
  }

  int n_, k_;
  std::vector<unsigned> masks_;
  std::array<int, 16> pos_{};
};

}  // namespace nlhodge

#endif  // NLHODGE_GRID_HPP
