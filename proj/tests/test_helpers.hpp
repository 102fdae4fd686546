// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef NLHODGE_TEST_HELPERS_HPP
#define NLHODGE_TEST_HELPERS_HPP

#include <cmath>
#include <random>
#include <vector>

#include "nlhodge/forms.hpp"
#include "nlhodge/grid.hpp"

namespace nlhodge::testing {

inline DiscreteForm random_form(const Grid& g, int k, std::mt19937& rng,
                                double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  DiscreteForm w(g, k);
  for (int c = 0; c < w.ncomp(); ++c)
    for (auto& v : w.comp(c)) v = dist(rng);
  return w;
}

/// Random form rescaled pointwise so that qnorm lands in [q_lo, q_hi].
inline DiscreteForm random_form_in_range(const Grid& g, int k, std::mt19937& rng,
                                         double q_lo, double q_hi) {
  DiscreteForm w = random_form(g, k, rng, 0.2, 1.0);
  std::uniform_real_distribution<double> qdist(q_lo, q_hi);
  ScalarField q = qnorm(w);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double target = qdist(rng);
    const double s = std::sqrt(target / q[i]);
    for (int c = 0; c < w.ncomp(); ++c) w.comp(c)[i] *= s;
  }
  return w;
}

inline double max_diff(const DiscreteForm& a, const DiscreteForm& b) {
  return max_abs(a - b);
}

/// Least-squares slope of log(err) against log(h): the observed order.
inline double fit_order(const std::vector<double>& hs,
                        const std::vector<double>& errs) {
  const std::size_t n = hs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(hs[i]);
    const double y = std::log(errs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace nlhodge::testing

#endif  // NLHODGE_TEST_HELPERS_HPP
