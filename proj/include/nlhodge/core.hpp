// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0

#ifndef NLHODGE_CORE_HPP
#define NLHODGE_CORE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace nlhodge {

/// Node coordinate; entries past the grid dimension are zero.
using Point = std::array<double, 4>;

// ---------------------------------------------------------------------------
// Error taxonomy. Exceptions that refer to grid data carry the offending
// node indices so callers can report them.
// ---------------------------------------------------------------------------

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct domain_error : error {
  std::vector<std::size_t> nodes;
  explicit domain_error(const std::string& msg) : error(msg) {}
  domain_error(const std::string& msg, std::vector<std::size_t> offending)
      : error(msg), nodes(std::move(offending)) {}
};

struct range_error : error {
  std::vector<std::size_t> nodes;
  explicit range_error(const std::string& msg) : error(msg) {}
  range_error(const std::string& msg, std::vector<std::size_t> offending)
      : error(msg), nodes(std::move(offending)) {}
};

struct precondition_error : error {
  using error::error;
};

struct convergence_error : error {
  using error::error;
};

struct sonic_error : error {
  double max_q = 0.0;
  double limit = 0.0;
  sonic_error(const std::string& msg, double q, double lim)
      : error(msg), max_q(q), limit(lim) {}
};

struct config_error : error {
  using error::error;
};

// ---------------------------------------------------------------------------
// Formatting and parallel helpers.
// ---------------------------------------------------------------------------

/// 17 significant digits: round-trips IEEE doubles exactly.
inline std::string fmt17(double v) {
  if (v == 0.0) return "0";  // no negative zero in the output
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Thread cap from HF_THREADS (default 1, i.e. fully serial).
inline unsigned max_threads() {
  static const unsigned cap = [] {
    if (const char* env = std::getenv("HF_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 64));
    }
    return 1u;
  }();
  return cap;
}

/// Data-parallel index loop. Deterministic: the body must not share
/// mutable state across indices.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t nt =
      std::min<std::size_t>(max_threads(), std::max<std::size_t>(count / 4096, 1));
  if (nt <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const std::size_t chunk = (count + nt - 1) / nt;
  for (std::size_t t = 0; t < nt; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] {
      for (std::size_t i = b; i < e; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Scalar functions of one variable, with an optional analytic derivative.
// Without one, deriv() falls back to a central difference with a
// cube-root-of-epsilon step.
// ---------------------------------------------------------------------------

inline double fd_step(double t) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(t));
}

struct ScalarFn {
  std::function<double(double)> f;
  std::function<double(double)> df;

  ScalarFn() = default;
  ScalarFn(std::function<double(double)> fn) : f(std::move(fn)) {}
  ScalarFn(std::function<double(double)> fn, std::function<double(double)> dfn)
      : f(std::move(fn)), df(std::move(dfn)) {}

  double operator()(double t) const { return f(t); }

  double deriv(double t) const {
    if (df) return df(t);
    const double h = fd_step(t);
    return (f(t + h) - f(t - h)) / (2.0 * h);
  }

  explicit operator bool() const { return static_cast<bool>(f); }

  static ScalarFn constant(double c) {
    return {[c](double) { return c; }, [](double) { return 0.0; }};
  }
  static ScalarFn zero() { return constant(0.0); }
};

using SpaceFn = std::function<double(const Point&)>;
using SpaceTimeFn = std::function<double(const Point&, double)>;

// ---------------------------------------------------------------------------
// Root finding: bracketed Newton with bisection safeguard.
// ---------------------------------------------------------------------------

struct RootResult {
  double x = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Finds x in [lo, hi] with |f(x)| <= f_tol. Requires a sign change on the
/// bracket. Newton steps that leave the bracket (or stall) degrade to
/// bisection, so the search cannot escape or diverge.
inline RootResult find_root(const std::function<double(double)>& f,
                            const std::function<double(double)>& df, double lo,
                            double hi, double f_tol, int max_iter = 200) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double fl = f(lo), fh = f(hi);
  if (fl == 0.0) return {lo, 0, true};
  if (fh == 0.0) return {hi, 0, true};
  if ((fl > 0.0) == (fh > 0.0))
    throw range_error("find_root: root not bracketed");

  // xl always has f < 0.
  double xl = lo, xh = hi;
  if (fl > 0.0) std::swap(xl, xh);

  auto dfval = [&](double x) {
    if (df) return df(x);
    const double h = fd_step(x);
    return (f(x + h) - f(x - h)) / (2.0 * h);
  };

  double x = 0.5 * (lo + hi);
  double dxold = std::abs(hi - lo);
  double dx = dxold;
  double fx = f(x);
  double dfx = dfval(x);

  for (int it = 1; it <= max_iter; ++it) {
    if (std::abs(fx) <= f_tol) return {x, it, true};
    const bool newton_bad =
        (((x - xh) * dfx - fx) * ((x - xl) * dfx - fx) > 0.0) ||
        (std::abs(2.0 * fx) > std::abs(dxold * dfx));
    if (newton_bad) {
      dxold = dx;
      dx = 0.5 * (xh - xl);
      x = xl + dx;
    } else {
      dxold = dx;
      dx = fx / dfx;
      x -= dx;
    }
    // bracket collapsed to machine width: x is as good as it gets
    if (std::abs(dx) < 2.0 * eps * std::max(1.0, std::abs(x))) return {x, it, true};
    fx = f(x);
    dfx = dfval(x);
    if (fx < 0.0)
      xl = x;
    else
      xh = x;
  }
  return {x, max_iter, std::abs(fx) <= f_tol};
}

// ---------------------------------------------------------------------------
// Numerical inverse of a strictly monotone scalar function on an interval.
// Monotonicity is validated by sampling at construction.
// ---------------------------------------------------------------------------

class InverseFn {
 public:
  InverseFn() = default;

  static InverseFn build(ScalarFn fn, double lo, double hi, int samples = 129) {
    if (!(lo < hi)) throw precondition_error("InverseFn: empty interval");
    if (samples < 3) samples = 3;
    InverseFn inv;
    inv.fn_ = std::move(fn);
    inv.lo_ = lo;
    inv.hi_ = hi;
    double prev = inv.fn_(lo);
    inv.flo_ = prev;
    int dir = 0;
    bool identity = std::abs(prev - lo) <= 4e-16 * std::max(1.0, std::abs(lo));
    for (int i = 1; i < samples; ++i) {
      const double t = lo + (hi - lo) * static_cast<double>(i) / (samples - 1);
      const double v = inv.fn_(t);
      identity = identity && std::abs(v - t) <= 4e-16 * std::max(1.0, std::abs(t));
      const int d = (v > prev) ? 1 : (v < prev ? -1 : 0);
      if (d == 0 || (dir != 0 && d != dir))
        throw precondition_error(
            "InverseFn: function is not strictly monotone on the interval");
      dir = d;
      prev = v;
    }
    inv.fhi_ = prev;
    inv.increasing_ = dir > 0;
    inv.identity_ = identity;  // skip root finds for trivial transforms
    return inv;
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  bool increasing() const { return increasing_; }
  double range_lo() const { return std::min(flo_, fhi_); }
  double range_hi() const { return std::max(flo_, fhi_); }
  double forward(double t) const { return fn_(t); }

  double operator()(double r) const {
    const double slack = 1e-12 * std::max(1.0, std::abs(r));
    if (r < range_lo() - slack || r > range_hi() + slack)
      throw range_error("InverseFn: value outside the image of the interval");
    r = std::clamp(r, range_lo(), range_hi());
    if (identity_) return r;
    const double tol = 1e-13 * std::max(1.0, std::abs(r));
    auto g = [&](double t) { return fn_(t) - r; };
    std::function<double(double)> dg;
    if (fn_.df) dg = [this](double t) { return fn_.df(t); };
    const RootResult res = find_root(g, dg, lo_, hi_, tol);
    return res.x;
  }

  double deriv(double r) const {
    if (identity_) return 1.0;
    const double t = (*this)(r);
    const double d = fn_.deriv(t);
    if (d == 0.0) throw domain_error("InverseFn: derivative vanishes");
    return 1.0 / d;
  }

 private:
  ScalarFn fn_;
  double lo_ = 0.0, hi_ = 0.0, flo_ = 0.0, fhi_ = 0.0;
  bool increasing_ = true;
  bool identity_ = false;
};

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature.
// ---------------------------------------------------------------------------

namespace detail {
inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb,
                          double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double err = left + right - whole;
  if (std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
  if (depth <= 0)
    throw convergence_error("adaptive_simpson: recursion depth exhausted");
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double tol, int max_depth = 48) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// ---------------------------------------------------------------------------
// Monotone (Fritsch-Carlson) cubic interpolation of tabulated samples.
// Preserves monotone runs of the data, so interpolated densities stay
// positive between positive samples.
// ---------------------------------------------------------------------------

class MonotoneCubic {
 public:
  MonotoneCubic() = default;

  MonotoneCubic(std::vector<double> xs, std::vector<double> ys)
      : x_(std::move(xs)), y_(std::move(ys)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n)
      throw precondition_error("MonotoneCubic: need at least two samples");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1]))
        throw precondition_error("MonotoneCubic: abscissae must increase");
    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i)
      d[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    m_.assign(n, 0.0);
    m_[0] = d[0];
    m_[n - 1] = d[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i)
      m_[i] = (d[i - 1] * d[i] <= 0.0) ? 0.0 : 0.5 * (d[i - 1] + d[i]);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (d[i] == 0.0) {
        m_[i] = m_[i + 1] = 0.0;
        continue;
      }
      const double a = m_[i] / d[i], b = m_[i + 1] / d[i];
      const double s = a * a + b * b;
      if (s > 9.0) {
        const double tau = 3.0 / std::sqrt(s);
        m_[i] = tau * a * d[i];
        m_[i + 1] = tau * b * d[i];
      }
    }
  }

  double lo() const { return x_.front(); }
  double hi() const { return x_.back(); }

  double eval(double t) const {
    const auto [i, u, h] = locate(t);
    const double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
    const double h10 = u * (1 - u) * (1 - u);
    const double h01 = u * u * (3 - 2 * u);
    const double h11 = u * u * (u - 1);
    return h00 * y_[i] + h * h10 * m_[i] + h01 * y_[i + 1] + h * h11 * m_[i + 1];
  }

  double deriv(double t) const {
    const auto [i, u, h] = locate(t);
    const double d00 = 6 * u * (u - 1) / h;
    const double d10 = (1 - u) * (1 - 3 * u);
    const double d01 = -d00;
    const double d11 = u * (3 * u - 2);
    return d00 * y_[i] + d10 * m_[i] + d01 * y_[i + 1] + d11 * m_[i + 1];
  }

 private:
  std::tuple<std::size_t, double, double> locate(double t) const {
    if (t < x_.front() || t > x_.back())
      throw domain_error("MonotoneCubic: argument outside table");
    std::size_t i =
        std::upper_bound(x_.begin(), x_.end(), t) - x_.begin();
    i = std::clamp<std::size_t>(i, 1, x_.size() - 1) - 1;
    const double h = x_[i + 1] - x_[i];
    return {i, (t - x_[i]) / h, h};
  }

  std::vector<double> x_, y_, m_;
};

}  // namespace nlhodge

#endif  // NLHODGE_CORE_HPP
