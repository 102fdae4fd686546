// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Density algebra for quasilinear Hodge systems. A density rho(x,t) > 0
// weights a field by its squared pointwise norm t = Q. The map
// phi(t) = t rho^2(t) controls everything: where phi is strictly monotone
// the scaling A(w) = rho(Q) w inverts (B), the regime is elliptic or
// hyperbolic by the sign of phi', and the dual density 1/rho(psi(.)) lives
// on the image interval.

#ifndef NLHODGE_DENSITY_HPP
#define NLHODGE_DENSITY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nlhodge/core.hpp"
#include "nlhodge/forms.hpp"
#include "nlhodge/grid.hpp"

namespace nlhodge {

enum class DensityFamily {
  constant,
  p_power,
  minimal,
  maximal,
  born_infeld,
  extremal,
  table,
  custom,
};

enum class Regime { elliptic, hyperbolic };

inline const char* to_string(Regime r) {
  return r == Regime::elliptic ? "elliptic" : "hyperbolic";
}

/// Evaluation guard distance around density singularities.
inline constexpr double kSingularGuard = 1e-8;

class Density {
 public:
  using Eval = std::function<double(const Point&, double)>;

  Density() = default;

  // -- prescribed families ---------------------------------------------

  static Density constant(double c = 1.0) {
    if (!(c > 0.0)) throw precondition_error("constant density must be positive");
    Density d;
    d.family_ = DensityFamily::constant;
    d.label_ = "constant";
    d.param_ = c;
    d.eval_ = [c](const Point&, double) { return c; };
    d.deval_ = [](const Point&, double) { return 0.0; };
    return d;
  }

  /// rho(t) = t^{p/2}; singular at t = 0 when p < 0, vanishing when p > 0,
  /// so the domain is open at zero either way.
  static Density p_power(double p) {
    Density d;
    d.family_ = DensityFamily::p_power;
    d.label_ = "p_power";
    d.param_ = p;
    d.lo_open_ = true;
    if (p < 0.0) d.singular_ = {0.0};
    d.eval_ = [p](const Point&, double t) { return std::pow(t, 0.5 * p); };
    d.deval_ = [p](const Point&, double t) {
      return 0.5 * p * std::pow(t, 0.5 * p - 1.0);
    };
    return d;
  }

  /// rho(t) = 1/sqrt(1+t): minimal-surface density.
  static Density minimal() {
    Density d;
    d.family_ = DensityFamily::minimal;
    d.label_ = "minimal";
    d.eval_ = [](const Point&, double t) { return 1.0 / std::sqrt(1.0 + t); };
    d.deval_ = [](const Point&, double t) {
      return -0.5 * std::pow(1.0 + t, -1.5);
    };
    return d;
  }

  /// rho(t) = 1/sqrt(1-t), t < 1: maximal-surface density.
  static Density maximal() {
    Density d;
    d.family_ = DensityFamily::maximal;
    d.label_ = "maximal";
    d.hi_ = 1.0;
    d.hi_open_ = true;
    d.singular_ = {1.0};
    d.eval_ = [](const Point&, double t) { return 1.0 / std::sqrt(1.0 - t); };
    d.deval_ = [](const Point&, double t) {
      return 0.5 * std::pow(1.0 - t, -1.5);
    };
    return d;
  }

  /// rho(t) = |t-1|^{-1/2}, t != 1.
  static Density born_infeld() {
    Density d;
    d.family_ = DensityFamily::born_infeld;
    d.label_ = "born_infeld";
    d.singular_ = {1.0};
    d.eval_ = [](const Point&, double t) {
      return 1.0 / std::sqrt(std::abs(t - 1.0));
    };
    d.deval_ = [](const Point&, double t) {
      const double s = std::abs(t - 1.0);
      const double sign = t > 1.0 ? -1.0 : 1.0;
      return 0.5 * sign * std::pow(s, -1.5);
    };
    return d;
  }

  /// rho(t) = 1/sqrt(t-1), t > 1: extremal-surface density.
  static Density extremal() {
    Density d;
    d.family_ = DensityFamily::extremal;
    d.label_ = "extremal";
    d.lo_ = 1.0;
    d.lo_open_ = true;
    d.singular_ = {1.0};
    d.eval_ = [](const Point&, double t) { return 1.0 / std::sqrt(t - 1.0); };
    d.deval_ = [](const Point&, double t) {
      return -0.5 * std::pow(t - 1.0, -1.5);
    };
    return d;
  }

  /// Monotone-cubic interpolation of (t, rho) samples.
  static Density from_table(std::vector<double> ts, std::vector<double> rhos) {
    for (double r : rhos)
      if (!(r > 0.0)) throw precondition_error("table density must be positive");
    MonotoneCubic interp(std::move(ts), std::move(rhos));
    Density d;
    d.family_ = DensityFamily::table;
    d.label_ = "table";
    d.lo_ = interp.lo();
    d.hi_ = interp.hi();
    d.eval_ = [interp](const Point&, double t) { return interp.eval(t); };
    d.deval_ = [interp](const Point&, double t) { return interp.deriv(t); };
    return d;
  }

  /// User density. deval may be empty; it then falls back to a central
  /// difference of eval.
  static Density custom(std::string label, Eval eval, Eval deval = nullptr,
                        double lo = 0.0,
                        double hi = std::numeric_limits<double>::infinity(),
                        std::vector<double> singular = {},
                        bool x_dependent = false, bool lo_open = false,
                        bool hi_open = false) {
    Density d;
    d.family_ = DensityFamily::custom;
    d.label_ = std::move(label);
    d.eval_ = std::move(eval);
    d.deval_ = std::move(deval);
    d.lo_ = lo;
    d.hi_ = hi;
    d.singular_ = std::move(singular);
    d.x_dependent_ = x_dependent;
    d.lo_open_ = lo_open;
    d.hi_open_ = hi_open;
    return d;
  }

  // -- evaluation --------------------------------------------------------

  DensityFamily family() const { return family_; }
  const std::string& label() const { return label_; }
  double param() const { return param_; }
  bool x_dependent() const { return x_dependent_; }
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }
  const std::vector<double>& singular_points() const { return singular_; }

  bool in_domain(double t) const {
    if (t < lo_ || t > hi_) return false;
    if (lo_open_ && t <= lo_) return false;
    if (hi_open_ && t >= hi_) return false;
    for (double s : singular_)
      if (std::abs(t - s) < kSingularGuard) return false;
    return true;
  }

  void check_domain(double t) const {
    if (!in_domain(t))
      throw domain_error("density '" + label_ + "' evaluated outside its domain at t=" +
                         fmt17(t));
  }

  double rho(const Point& x, double t) const {
    check_domain(t);
    return eval_(x, t);
  }

  double drho_dt(const Point& x, double t) const {
    check_domain(t);
    if (deval_) return deval_(x, t);
    const double h = fd_step(t);
    return (eval_(x, t + h) - eval_(x, t - h)) / (2.0 * h);
  }

  /// phi(x,t) = t rho^2(x,t).
  double phi(const Point& x, double t) const {
    const double r = rho(x, t);
    return t * r * r;
  }

  /// d phi/dt = rho^2 + 2 t rho rho'.
  double dphi_dt(const Point& x, double t) const {
    const double r = rho(x, t);
    return r * r + 2.0 * t * r * drho_dt(x, t);
  }

  /// Largest t usable as an evaluation point at or below `t`, respecting
  /// the singular guard.
  double guard_below(double t) const {
    double g = std::min(t, hi_open_ ? hi_ - 2.0 * kSingularGuard : hi_);
    for (double s : singular_)
      if (std::abs(g - s) < 2.0 * kSingularGuard && g <= s + 2.0 * kSingularGuard)
        g = s - 2.0 * kSingularGuard;
    return g;
  }

  double guard_above(double t) const {
    double g = std::max(t, lo_open_ ? lo_ + 2.0 * kSingularGuard : lo_);
    for (double s : singular_)
      if (std::abs(g - s) < 2.0 * kSingularGuard && g >= s - 2.0 * kSingularGuard)
        g = s + 2.0 * kSingularGuard;
    return g;
  }

 private:
  DensityFamily family_ = DensityFamily::constant;
  std::string label_ = "constant";
  double param_ = 1.0;
  Eval eval_ = [](const Point&, double) { return 1.0; };
  Eval deval_ = [](const Point&, double) { return 0.0; };
  double lo_ = 0.0;
  double hi_ = std::numeric_limits<double>::infinity();
  bool lo_open_ = false;
  bool hi_open_ = false;
  std::vector<double> singular_;
  bool x_dependent_ = false;
};

// ---------------------------------------------------------------------------
// Monotone branches of phi and the regime report.
// ---------------------------------------------------------------------------

struct MonotoneBranch {
  Density rho;
  double t1 = 0.0, t2 = 0.0;  // branch interval
  double r1 = 0.0, r2 = 0.0;  // ordered image {phi(t1), phi(t2)}
  bool increasing = true;
  Regime regime = Regime::elliptic;
  Point x{0, 0, 0, 0};  // evaluation point for x-dependent densities

  double t_eval_lo() const { return rho.guard_above(t1); }
  double t_eval_hi() const { return rho.guard_below(t2); }

  bool contains_r(double r) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(r));
    return r >= r1 - slack && r <= r2 + slack;
  }
};

/// Builds a branch over (t1, t2), validating one-signed d phi/dt by
/// midpoint sampling.
inline MonotoneBranch make_branch(const Density& rho, double t1, double t2,
                                  const Point& x = {0, 0, 0, 0},
                                  int samples = 129) {
  if (!(t1 < t2)) throw precondition_error("make_branch: empty interval");
  const double a = rho.guard_above(t1);
  const double b = rho.guard_below(t2);
  if (!(a < b)) throw precondition_error("make_branch: interval inside singular guard");
  int dir = 0;
  for (int i = 0; i < samples; ++i) {
    const double t = a + (b - a) * (i + 0.5) / samples;
    const double d = rho.dphi_dt(x, t);
    const int s = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if (s == 0 || (dir != 0 && s != dir))
      throw precondition_error("make_branch: phi is not strictly monotone on the interval");
    dir = s;
  }
  MonotoneBranch br;
  br.rho = rho;
  br.t1 = t1;
  br.t2 = t2;
  br.x = x;
  br.increasing = dir > 0;
  br.regime = dir > 0 ? Regime::elliptic : Regime::hyperbolic;
  const double ra = rho.phi(x, a);
  const double rb = rho.phi(x, b);
  br.r1 = std::min(ra, rb);
  br.r2 = std::max(ra, rb);
  return br;
}

struct RegimeReport {
  std::vector<MonotoneBranch> branches;
  std::vector<double> sonic_points;  // sign changes of phi' and singularities
  bool low_confidence = false;
};

/// Partitions [t_lo, t_hi] into maximal sampled monotone branches. Sign
/// changes of phi' are located by scan plus bisection; density singular
/// points split branches as well.
inline RegimeReport classify(const Density& rho, double t_lo, double t_hi,
                             int n_samples = 256, const Point& x = {0, 0, 0, 0}) {
  if (n_samples < 16) throw precondition_error("classify: need at least 16 samples");
  if (!(t_lo < t_hi)) throw precondition_error("classify: empty interval");

  RegimeReport report;

  // cut the interval at interior singular points
  std::vector<double> cuts{t_lo};
  for (double s : rho.singular_points())
    if (s > t_lo && s < t_hi) {
      cuts.push_back(s);
      report.sonic_points.push_back(s);
    }
  cuts.push_back(t_hi);

  auto dphi = [&](double t) { return rho.dphi_dt(x, t); };

  auto push_branch = [&](double ta, double tb) {
    try {
      report.branches.push_back(make_branch(rho, ta, tb, x, 33));
    } catch (const precondition_error&) {
      // oscillation finer than the sampling resolution
      report.low_confidence = true;
    }
  };

  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const double a = rho.guard_above(cuts[c]);
    const double b = rho.guard_below(cuts[c + 1]);
    if (!(a < b)) continue;
    const double step = (b - a) / n_samples;
    double seg_start = cuts[c];
    double prev_t = a + 0.5 * step;
    int prev_sign = dphi(prev_t) > 0 ? 1 : -1;
    double prev_sonic = -std::numeric_limits<double>::infinity();
    for (int i = 1; i < n_samples; ++i) {
      const double t = a + (i + 0.5) * step;
      const int sign = dphi(t) > 0 ? 1 : -1;
      if (sign != prev_sign) {
        double lo = prev_t, hi = t;
        while (hi - lo > 1e-10) {
          const double mid = 0.5 * (lo + hi);
          if ((dphi(mid) > 0 ? 1 : -1) == prev_sign)
            lo = mid;
          else
            hi = mid;
        }
        const double sonic = 0.5 * (lo + hi);
        if (sonic - prev_sonic < 2.0 * step) report.low_confidence = true;
        report.sonic_points.push_back(sonic);
        push_branch(seg_start, sonic);
        seg_start = sonic;
        prev_sonic = sonic;
      }
      prev_t = t;
      prev_sign = sign;
    }
    push_branch(seg_start, cuts[c + 1]);
  }
  std::sort(report.sonic_points.begin(), report.sonic_points.end());
  return report;
}

// ---------------------------------------------------------------------------
// psi, A and B.
// ---------------------------------------------------------------------------

/// Inverse of phi restricted to the branch, evaluated at x. Returns nullopt
/// when r lies outside the image of the branch at this x.
inline std::optional<double> try_psi_invert(const MonotoneBranch& br,
                                            const Point& x, double r) {
  const double a = br.t_eval_lo();
  const double b = br.t_eval_hi();
  const double fa = br.rho.phi(x, a);
  const double fb = br.rho.phi(x, b);
  const double lo = std::min(fa, fb), hi = std::max(fa, fb);
  const double slack = 1e-12 * std::max(1.0, std::abs(r));
  if (r < lo - slack || r > hi + slack) return std::nullopt;
  r = std::clamp(r, lo, hi);
  auto f = [&](double t) { return br.rho.phi(x, t) - r; };
  auto df = [&](double t) { return br.rho.dphi_dt(x, t); };
  // polish essentially to machine precision: downstream identities divide
  // by phi', so a loose tolerance here would inflate where phi is flat
  const double tol = 8.0 * std::numeric_limits<double>::epsilon() *
                     std::max(1.0, std::abs(r));
  return find_root(f, df, a, b, tol).x;
}

/// Returns t with |phi(t) - r| below 1e-12 max(1,|r|) (in practice to
/// machine precision; the bracketed search cannot diverge on a valid
/// branch). Throws range_error when r is outside the branch image.
inline double psi_invert(const MonotoneBranch& br, const Point& x, double r) {
  const auto t = try_psi_invert(br, x, r);
  if (!t) throw range_error("psi_invert: value outside the branch image");
  return *t;
}

inline double psi_invert(const MonotoneBranch& br, double r) {
  return psi_invert(br, br.x, r);
}

/// A(w) = rho(Q) w, pointwise. Nodes whose Q leaves the density domain are
/// collected and reported.
inline DiscreteForm apply_A(const Density& rho, const DiscreteForm& w) {
  const Grid& g = w.grid();
  const ScalarField q = qnorm(w);
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!rho.in_domain(q[i])) bad.push_back(i);
  if (!bad.empty())
    throw domain_error("apply_A: |w|^2 hits a density singularity or leaves "
                       "the domain at " + std::to_string(bad.size()) + " nodes",
                       bad);
  DiscreteForm out = w;
  std::vector<double> scale(g.size());
  parallel_for(g.size(), [&](std::size_t i) {
    scale[i] = rho.rho(g.coord(i), q[i]);
  });
  for (int c = 0; c < out.ncomp(); ++c) {
    auto& v = out.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= scale[i];
  }
  return out;
}

/// B(wt) = wt / rho(psi(|wt|^2)): inverse of A on the branch.
inline DiscreteForm apply_B(const MonotoneBranch& br, const DiscreteForm& wt) {
  const Grid& g = wt.grid();
  const ScalarField q = qnorm(wt);
  std::vector<double> scale(g.size());
  parallel_for(g.size(), [&](std::size_t i) {
    const Point x = g.coord(i);
    const auto t = try_psi_invert(br, x, q[i]);
    scale[i] = t ? 1.0 / br.rho.rho(x, *t)
                 : std::numeric_limits<double>::quiet_NaN();
  });
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::isnan(scale[i])) bad.push_back(i);
  if (!bad.empty())
    throw range_error("apply_B: |wt|^2 leaves the branch image at " +
                      std::to_string(bad.size()) + " nodes", bad);
  DiscreteForm out = wt;
  for (int c = 0; c < out.ncomp(); ++c) {
    auto& v = out.comp(c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= scale[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dual pairs: rho(t) rhohat(t rho^2(t)) = 1.
// ---------------------------------------------------------------------------

struct DualPair {
  Density rho;
  Density rho_hat;
  MonotoneBranch branch;      // branch of rho the pair was built on
  MonotoneBranch branch_hat;  // matching branch of rho_hat on the image
};

inline DualPair dual_density(const Density& rho, const MonotoneBranch& branch) {
  const MonotoneBranch br = branch;
  auto eval = [br](const Point& x, double th) {
    return 1.0 / br.rho.rho(x, psi_invert(br, x, th));
  };
  // d/dth 1/rho(psi(th)) = -rho'(psi) psi' / rho(psi)^2, psi' = 1/phi'(psi)
  auto deval = [br](const Point& x, double th) {
    const double t = psi_invert(br, x, th);
    const double r = br.rho.rho(x, t);
    return -br.rho.drho_dt(x, t) / (r * r * br.rho.dphi_dt(x, t));
  };
  // image endpoints are attainable exactly when the source endpoints are
  // evaluable without a singular guard shift
  const bool t1_closed = branch.t_eval_lo() == branch.t1;
  const bool t2_closed = branch.t_eval_hi() == branch.t2;
  const bool r_lo_open = branch.increasing ? !t1_closed : !t2_closed;
  const bool r_hi_open = branch.increasing ? !t2_closed : !t1_closed;
  Density hat = Density::custom("dual(" + rho.label() + ")", eval, deval,
                                branch.r1, branch.r2, {}, rho.x_dependent(),
                                r_lo_open, r_hi_open);
  DualPair pair;
  pair.rho = rho;
  pair.rho_hat = hat;
  pair.branch = branch;
  pair.branch_hat = make_branch(hat, branch.r1, branch.r2, branch.x, 65);
  return pair;
}

// ---------------------------------------------------------------------------
// Densities generated from a prescribed eta, and the conformal transforms
// between density functions.
// ---------------------------------------------------------------------------

/// The auxiliary map f_eta(t) = t exp(-2 eta(t)) with its numerical inverse
/// g_eta on a named interval.
struct EtaMap {
  ScalarFn eta;
  double lo = 0.0, hi = 1.0;
  InverseFn g;

  double f(double t) const { return t * std::exp(-2.0 * eta(t)); }
  double fprime(double t) const {
    return (1.0 - 2.0 * t * eta.deriv(t)) * std::exp(-2.0 * eta(t));
  }

  static EtaMap build(ScalarFn eta_fn, double lo, double hi, int samples = 129) {
    EtaMap m;
    m.eta = std::move(eta_fn);
    m.lo = lo;
    m.hi = hi;
    const ScalarFn eta_copy = m.eta;
    ScalarFn f{[eta_copy](double t) { return t * std::exp(-2.0 * eta_copy(t)); },
               [eta_copy](double t) {
                 return (1.0 - 2.0 * t * eta_copy.deriv(t)) *
                        std::exp(-2.0 * eta_copy(t));
               }};
    m.g = InverseFn::build(f, lo, hi, samples);
    return m;
  }
};

/// Density prescribed through eta_tilde: rho(t) = exp(eta_tilde(s)) with
/// s the inverse of s -> s exp(-2 eta_tilde(s)) on the named interval.
inline Density density_from_eta(const ScalarFn& eta_tilde, double lo, double hi,
                                int samples = 129) {
  EtaMap map = EtaMap::build(eta_tilde, lo, hi, samples);
  const InverseFn inv = map.g;
  const ScalarFn eta = map.eta;
  auto eval = [inv, eta](const Point&, double t) { return std::exp(eta(inv(t))); };
  auto deval = [inv, eta](const Point&, double t) {
    const double s = inv(t);
    const double fp = (1.0 - 2.0 * s * eta.deriv(s)) * std::exp(-2.0 * eta(s));
    return std::exp(eta(s)) * eta.deriv(s) / fp;
  };
  return Density::custom("from_eta", eval, deval, inv.range_lo(), inv.range_hi(),
                         {}, false);
}

/// rho0(x, th) = exp[eta(g(th)) - zeta(g(th))] rho1(x, g(th)).
inline Density transform_density_t(const Density& rho1, const ScalarFn& eta,
                                   const ScalarFn& zeta, const EtaMap& map) {
  const InverseFn g = map.g;
  auto eval = [rho1, eta, zeta, g](const Point& x, double th) {
    const double t = g(th);
    return std::exp(eta(t) - zeta(t)) * rho1.rho(x, t);
  };
  auto deval = [rho1, eta, zeta, g](const Point& x, double th) {
    const double t = g(th);
    const double e = std::exp(eta(t) - zeta(t));
    const double inner =
        e * ((eta.deriv(t) - zeta.deriv(t)) * rho1.rho(x, t) + rho1.drho_dt(x, t));
    return inner * g.deriv(th);
  };
  return Density::custom("conformal_t(" + rho1.label() + ")", eval, deval,
                         g.range_lo(), g.range_hi(), {}, rho1.x_dependent(),
                         /*lo_open=*/false, /*hi_open=*/false);
}

/// Inverse direction: rho1(x, t) = exp[zeta(t) - eta(t)] rho0(x, f_eta(t)).
inline Density transform_density_t_inverse(const Density& rho0, const ScalarFn& eta,
                                           const ScalarFn& zeta, const EtaMap& map) {
  auto eval = [rho0, eta, zeta, map](const Point& x, double t) {
    return std::exp(zeta(t) - eta(t)) * rho0.rho(x, map.f(t));
  };
  auto deval = [rho0, eta, zeta, map](const Point& x, double t) {
    const double e = std::exp(zeta(t) - eta(t));
    const double th = map.f(t);
    return e * ((zeta.deriv(t) - eta.deriv(t)) * rho0.rho(x, th) +
                rho0.drho_dt(x, th) * map.fprime(t));
  };
  return Density::custom("conformal_t_inv(" + rho0.label() + ")", eval, deval,
                         map.lo, map.hi, {}, rho0.x_dependent());
}

/// rho0(x, t) = exp[eta(x) - zeta(x)] rho1(x, exp(2 eta(x)) t); the inverse
/// direction swaps the sign of eta and zeta in both factors.
inline Density transform_density_x(const Density& rho1, const SpaceFn& eta,
                                   const SpaceFn& zeta, bool forward = true) {
  const double s = forward ? 1.0 : -1.0;
  auto eval = [rho1, eta, zeta, s](const Point& x, double t) {
    const double e = eta(x), z = zeta(x);
    return std::exp(s * (e - z)) * rho1.rho(x, std::exp(2.0 * s * e) * t);
  };
  auto deval = [rho1, eta, zeta, s](const Point& x, double t) {
    const double e = eta(x), z = zeta(x);
    const double scale = std::exp(2.0 * s * e);
    return std::exp(s * (e - z)) * scale * rho1.drho_dt(x, scale * t);
  };
  return Density::custom(std::string(forward ? "conformal_x(" : "conformal_x_inv(") +
                             rho1.label() + ")",
                         eval, deval, 0.0,
                         std::numeric_limits<double>::infinity(), {}, true);
}

// ---------------------------------------------------------------------------
// Admissible systems (rho, zeta, eta) and the sonic speed.
// ---------------------------------------------------------------------------

struct AdmissibleSystem {
  Density rho;
  SpaceTimeFn zeta;  // zeta(x, t)
  ScalarFn eta;      // eta(t)
  EtaMap map;        // f_eta / g_eta on the probe interval
  double bound_k = 1.0;
  double Q_s = 0.0;

  double rho0(const Point& x, double t) const {
    return rho.rho(x, t) * std::exp(eta(t) - zeta(x, t));
  }
};

struct AdmissibilityFailure {
  char condition = '?';  // 'a', 'b', or 'c'
  Point x{0, 0, 0, 0};
  double t = 0.0;
  std::string message;
};

struct AdmissibilityProbe {
  std::vector<Point> points{Point{0, 0, 0, 0}};
  double t_lo = 0.0;
  double t_hi = 1.0;
  int t_samples = 128;
  double bound_k = 0.0;  // 0: derive the best k from the probes
};

struct AdmissibilityResult {
  bool ok = false;
  AdmissibleSystem system;
  AdmissibilityFailure failure;
  double best_k = 0.0;
};

/// Verifies conditions (a) f_eta injective on the probe range, (b)
/// rho exp(eta - zeta) within [k, 1/k], (c) the transported ellipticity
/// sign condition -- and estimates the sonic speed Q_s as the largest
/// probed T below which (b) and (c) hold, refined by bisection.
inline AdmissibilityResult check_admissible(const Density& rho, SpaceTimeFn zeta,
                                            ScalarFn eta,
                                            const AdmissibilityProbe& probe) {
  if (probe.points.empty() || probe.t_samples < 2)
    throw precondition_error("check_admissible: empty probe grid");
  AdmissibilityResult res;
  if (!zeta) zeta = [](const Point&, double) { return 0.0; };
  if (!eta) eta = ScalarFn::zero();

  const double t_lo = std::max(probe.t_lo, 0.0);
  double t_hi = std::min(probe.t_hi, rho.guard_below(probe.t_hi));
  if (!(t_lo < t_hi))
    throw precondition_error("check_admissible: empty probe interval");

  // a) f_eta strictly monotone (checked by sampling inside EtaMap::build)
  EtaMap map;
  try {
    map = EtaMap::build(eta, t_lo, t_hi);
  } catch (const precondition_error& e) {
    res.failure = {'a', probe.points.front(), t_lo,
                   std::string("f_eta is not injective on the probe range: ") +
                       e.what()};
    return res;
  }
  // round-trip sanity of the numerical inverse
  for (int i = 0; i <= 16; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / 16.0;
    if (std::abs(map.g(map.f(t)) - t) > 1e-10 * std::max(1.0, std::abs(t))) {
      res.failure = {'a', probe.points.front(), t,
                     "g_eta . f_eta deviates from the identity"};
      return res;
    }
  }

  const double k_given = probe.bound_k;
  auto rho0 = [&](const Point& x, double t) {
    return rho.rho(x, t) * std::exp(eta(t) - zeta(x, t));
  };
  auto phi_rz = [&](const Point& x, double t) {
    const double v = rho.rho(x, t) * std::exp(-zeta(x, t));
    return t * v * v;
  };
  auto cond_ok = [&](double t, AdmissibilityFailure* why) {
    for (const Point& x : probe.points) {
      const double r0 = rho0(x, t);
      if (k_given > 0.0 && (r0 < k_given || r0 > 1.0 / k_given)) {
        if (why)
          *why = {'b', x, t,
                  "rho exp(eta-zeta) = " + fmt17(r0) + " leaves [k, 1/k]"};
        return false;
      }
      const double h = fd_step(t);
      const double a = std::max(t - h, rho.guard_above(t - h));
      const double b = std::min(t + h, rho.guard_below(t + h));
      const double dphi = (phi_rz(x, b) - phi_rz(x, a)) / (b - a);
      const double prod = dphi * map.fprime(t);
      if (!(prod > 0.0)) {
        if (why)
          *why = {'c', x, t,
                  "sign(d phi_{rho e^-zeta}/dt) sign(g_eta') = " + fmt17(prod)};
        return false;
      }
    }
    return true;
  };

  double last_good = 0.0;
  double first_bad = -1.0;
  AdmissibilityFailure first_failure;
  for (int i = 1; i <= probe.t_samples; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / probe.t_samples;
    if (!rho.in_domain(t)) {
      first_bad = t;
      first_failure = {'b', probe.points.front(), t, "t leaves the density domain"};
      break;
    }
    AdmissibilityFailure why;
    if (!cond_ok(t, &why)) {
      first_bad = t;
      first_failure = why;
      break;
    }
    last_good = t;
  }

  if (last_good == 0.0) {
    res.failure = first_failure;
    return res;
  }

  double qs = last_good;
  if (first_bad > 0.0) {
    double lo = last_good, hi = first_bad;
    while (hi - lo > 1e-9 * std::max(1.0, std::abs(hi))) {
      const double mid = 0.5 * (lo + hi);
      if (rho.in_domain(mid) && cond_ok(mid, nullptr))
        lo = mid;
      else
        hi = mid;
    }
    qs = 0.5 * (lo + hi);
  } else {
    qs = t_hi;  // conditions held over the whole probe range
  }

  // best k over the validated range
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (int i = 0; i <= probe.t_samples; ++i) {
    const double t = t_lo + (qs - t_lo) * i / probe.t_samples;
    if (!rho.in_domain(t)) continue;
    for (const Point& x : probe.points) {
      const double r0 = rho0(x, t);
      rmin = std::min(rmin, r0);
      rmax = std::max(rmax, r0);
    }
  }
  res.best_k = std::min(1.0, std::min(rmin, 1.0 / rmax));

  res.ok = true;
  res.system.rho = rho;
  res.system.zeta = std::move(zeta);
  res.system.eta = eta;
  res.system.map = map;
  res.system.bound_k = k_given > 0.0 ? k_given : res.best_k;
  res.system.Q_s = qs;
  return res;
}

}  // namespace nlhodge

#endif  // NLHODGE_DENSITY_HPP
