// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Small arithmetic expression language over x1..x4 and t:
//   reals, + - * / ^, parentheses, sin cos exp log sqrt abs.
// Form expressions add basis covector tokens (dx1, dx34, ...) so a 1-form
// reads like "sin(x3)*dx4 - 2*dx1".

#ifndef NLHODGE_EXPR_HPP
#define NLHODGE_EXPR_HPP

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "nlhodge/core.hpp"
#include "nlhodge/forms.hpp"
#include "nlhodge/grid.hpp"

namespace nlhodge::expr {

struct ParseError : config_error {
  std::size_t position;
  std::string expected;
  ParseError(const std::string& src, std::size_t pos, const std::string& what_expected)
      : config_error("parse error at position " + std::to_string(pos) + " in '" +
                     src + "': expected " + what_expected),
        position(pos),
        expected(what_expected) {}
};

class Expr {
 public:
  Expr() = default;

  static Expr parse(const std::string& src) {
    Parser p{src, 0};
    Expr e;
    e.src_ = src;
    e.root_ = e.parse_sum(p);
    p.skip_ws();
    if (p.pos != src.size()) throw ParseError(src, p.pos, "end of expression");
    return e;
  }

  double operator()(const Point& x, double t = 0.0) const {
    return eval_node(root_, x, t);
  }

  bool uses_t() const { return uses_t_; }
  bool uses_x() const { return uses_x_; }
  const std::string& source() const { return src_; }
  explicit operator bool() const { return !nodes_.empty(); }

 private:
  enum class Op : std::uint8_t {
    number, var_x, var_t, add, sub, mul, div, pow, neg,
    fn_sin, fn_cos, fn_exp, fn_log, fn_sqrt, fn_abs,
  };
  struct Node {
    Op op = Op::number;
    double value = 0.0;
    int a = -1, b = -1;
  };

  struct Parser {
    const std::string& src;
    std::size_t pos;
    void skip_ws() {
      while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos])))
        ++pos;
    }
    bool accept(char c) {
      skip_ws();
      if (pos < src.size() && src[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    char peek() {
      skip_ws();
      return pos < src.size() ? src[pos] : '\0';
    }
  };

  int add_node(Node n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }

  int parse_sum(Parser& p) {
    int lhs = parse_product(p);
    for (;;) {
      if (p.accept('+'))
        lhs = add_node({Op::add, 0.0, lhs, parse_product(p)});
      else if (p.accept('-'))
        lhs = add_node({Op::sub, 0.0, lhs, parse_product(p)});
      else
        return lhs;
    }
  }

  int parse_product(Parser& p) {
    int lhs = parse_unary(p);
    for (;;) {
      if (p.accept('*'))
        lhs = add_node({Op::mul, 0.0, lhs, parse_unary(p)});
      else if (p.accept('/'))
        lhs = add_node({Op::div, 0.0, lhs, parse_unary(p)});
      else
        return lhs;
    }
  }

  int parse_unary(Parser& p) {
    if (p.accept('-')) return add_node({Op::neg, 0.0, parse_unary(p), -1});
    if (p.accept('+')) return parse_unary(p);
    return parse_power(p);
  }

  int parse_power(Parser& p) {
    const int base = parse_primary(p);
    if (p.accept('^'))
      return add_node({Op::pow, 0.0, base, parse_unary(p)});  // right assoc
    return base;
  }

  int parse_primary(Parser& p) {
    p.skip_ws();
    if (p.pos >= p.src.size())
      throw ParseError(p.src, p.pos, "a number, variable, or '('");
    const char c = p.src[p.pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = p.src.c_str() + p.pos;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) throw ParseError(p.src, p.pos, "a number");
      p.pos += static_cast<std::size_t>(end - begin);
      return add_node({Op::number, v, -1, -1});
    }
    if (c == '(') {
      ++p.pos;
      const int inner = parse_sum(p);
      if (!p.accept(')')) throw ParseError(p.src, p.pos, "')'");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = p.pos;
      while (p.pos < p.src.size() &&
             (std::isalnum(static_cast<unsigned char>(p.src[p.pos])) ||
              p.src[p.pos] == '_'))
        ++p.pos;
      const std::string name = p.src.substr(start, p.pos - start);
      if (name == "t") {
        uses_t_ = true;
        return add_node({Op::var_t, 0.0, -1, -1});
      }
      if (name.size() == 2 && name[0] == 'x' && name[1] >= '1' && name[1] <= '4') {
        uses_x_ = true;
        return add_node({Op::var_x, static_cast<double>(name[1] - '1'), -1, -1});
      }
      Op fn;
      if (name == "sin") fn = Op::fn_sin;
      else if (name == "cos") fn = Op::fn_cos;
      else if (name == "exp") fn = Op::fn_exp;
      else if (name == "log") fn = Op::fn_log;
      else if (name == "sqrt") fn = Op::fn_sqrt;
      else if (name == "abs") fn = Op::fn_abs;
      else
        throw ParseError(p.src, start,
                         "a variable (x1..x4, t) or function "
                         "(sin, cos, exp, log, sqrt, abs)");
      if (!p.accept('(')) throw ParseError(p.src, p.pos, "'(' after " + name);
      const int arg = parse_sum(p);
      if (!p.accept(')')) throw ParseError(p.src, p.pos, "')'");
      return add_node({fn, 0.0, arg, -1});
    }
    throw ParseError(p.src, p.pos, "a number, variable, or '('");
  }

  double eval_node(int idx, const Point& x, double t) const {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    switch (n.op) {
      case Op::number: return n.value;
      case Op::var_x: return x[static_cast<int>(n.value)];
      case Op::var_t: return t;
      case Op::add: return eval_node(n.a, x, t) + eval_node(n.b, x, t);
      case Op::sub: return eval_node(n.a, x, t) - eval_node(n.b, x, t);
      case Op::mul: return eval_node(n.a, x, t) * eval_node(n.b, x, t);
      case Op::div: return eval_node(n.a, x, t) / eval_node(n.b, x, t);
      case Op::pow: return std::pow(eval_node(n.a, x, t), eval_node(n.b, x, t));
      case Op::neg: return -eval_node(n.a, x, t);
      case Op::fn_sin: return std::sin(eval_node(n.a, x, t));
      case Op::fn_cos: return std::cos(eval_node(n.a, x, t));
      case Op::fn_exp: return std::exp(eval_node(n.a, x, t));
      case Op::fn_log: return std::log(eval_node(n.a, x, t));
      case Op::fn_sqrt: return std::sqrt(eval_node(n.a, x, t));
      case Op::fn_abs: return std::abs(eval_node(n.a, x, t));
    }
    return 0.0;
  }

  std::vector<Node> nodes_;
  int root_ = -1;
  bool uses_t_ = false;
  bool uses_x_ = false;
  std::string src_;
};

/// Converts an expression of t into a ScalarFn (derivative by central
/// difference) and an expression of x into a SpaceFn.
inline ScalarFn scalar_fn_of_t(const Expr& e) {
  if (e.uses_x())
    throw config_error("expression '" + e.source() + "' must depend on t only");
  return ScalarFn([e](double t) { return e(Point{0, 0, 0, 0}, t); });
}

inline SpaceFn space_fn(const Expr& e) {
  if (e.uses_t())
    throw config_error("expression '" + e.source() + "' must not depend on t");
  return [e](const Point& x) { return e(x, 0.0); };
}

inline SpaceTimeFn space_time_fn(const Expr& e) {
  return [e](const Point& x, double t) { return e(x, t); };
}

// ---------------------------------------------------------------------------
// Form expressions: sums of  [coefficient *] dx<digits>  terms; a term with
// no covector token is a 0-form contribution.
// ---------------------------------------------------------------------------

struct FormTerm {
  unsigned mask = 0;
  Expr coeff;        // empty means the constant 1
  bool negate = false;
};

class FormExpr {
 public:
  static FormExpr parse(const std::string& src, int n) {
    FormExpr out;
    out.src_ = src;
    // split into top-level +/- terms
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end)
    std::vector<bool> negs;
    int depth = 0;
    std::size_t begin = 0;
    bool neg = false;
    bool at_term_start = true;
    for (std::size_t i = 0; i <= src.size(); ++i) {
      const char c = i < src.size() ? src[i] : '\0';
      if (c == '(') ++depth;
      if (c == ')') --depth;
      const bool splitter =
          (i == src.size()) || (depth == 0 && (c == '+' || c == '-') && !at_term_start);
      if (splitter) {
        spans.emplace_back(begin, i);
        negs.push_back(neg);
        neg = (c == '-');
        begin = i + 1;
        at_term_start = true;
        continue;
      }
      if (!std::isspace(static_cast<unsigned char>(c))) {
        if (at_term_start && c == '-') {
          neg = !neg;
          begin = i + 1;
        } else if (at_term_start && c == '+') {
          begin = i + 1;
        } else {
          at_term_start = false;
        }
      }
    }

    int degree = -1;
    for (std::size_t k = 0; k < spans.size(); ++k) {
      std::string term = src.substr(spans[k].first, spans[k].second - spans[k].first);
      FormTerm ft;
      ft.negate = negs[k];
      // find a top-level covector token "dx<digits>"
      int d2 = 0;
      std::size_t dx_pos = std::string::npos, dx_end = 0;
      for (std::size_t i = 0; i + 2 < term.size() + 1; ++i) {
        const char c = term[i];
        if (c == '(') ++d2;
        if (c == ')') --d2;
        if (d2 != 0 || c != 'd') continue;
        if (i + 1 >= term.size() || term[i + 1] != 'x') continue;
        const bool prev_ok =
            i == 0 || !(std::isalnum(static_cast<unsigned char>(term[i - 1])) ||
                        term[i - 1] == '_');
        if (!prev_ok) continue;
        std::size_t j = i + 2;
        while (j < term.size() && std::isdigit(static_cast<unsigned char>(term[j])))
          ++j;
        if (j == i + 2) continue;  // "dx" with no digits
        dx_pos = i;
        dx_end = j;
        break;
      }
      std::string coeff_src;
      if (dx_pos == std::string::npos) {
        ft.mask = 0;  // scalar term: a 0-form contribution
        coeff_src = term;
      } else {
        int prev_axis = 0;
        for (std::size_t j = dx_pos + 2; j < dx_end; ++j) {
          const int axis = term[j] - '0';
          if (axis < 1 || axis > n)
            throw ParseError(src, spans[k].first + j,
                             "axis index between 1 and " + std::to_string(n));
          if (axis <= prev_axis)
            throw ParseError(src, spans[k].first + j,
                             "strictly increasing axis indices");
          prev_axis = axis;
          ft.mask |= 1u << (axis - 1);
        }
        if (dx_end < term.size() &&
            term.find_first_not_of(" \t", dx_end) != std::string::npos)
          throw ParseError(src, spans[k].first + dx_end,
                           "end of term after the covector token");
        coeff_src = term.substr(0, dx_pos);
        // strip a trailing '*'
        const std::size_t star = coeff_src.find_last_not_of(" \t");
        if (star != std::string::npos && coeff_src[star] == '*')
          coeff_src = coeff_src.substr(0, star);
        else if (star != std::string::npos)
          throw ParseError(src, spans[k].first + star,
                           "'*' between coefficient and covector");
      }
      const std::size_t nonblank = coeff_src.find_first_not_of(" \t");
      if (nonblank != std::string::npos)
        ft.coeff = Expr::parse(coeff_src);
      const int deg = popcount4(ft.mask);
      if (degree >= 0 && deg != degree)
        throw ParseError(src, spans[k].first, "terms of equal form degree");
      degree = deg;
      out.terms_.push_back(std::move(ft));
    }
    if (degree < 0) throw ParseError(src, 0, "at least one term");
    out.degree_ = degree;
    return out;
  }

  int degree() const { return degree_; }
  const std::string& source() const { return src_; }

  DiscreteForm sample(const Grid& g) const {
    DiscreteForm w(g, degree_);
    for (const FormTerm& ft : terms_) {
      const int c = w.basis().position(ft.mask);
      if (c < 0)
        throw config_error("form '" + src_ + "' does not fit a " +
                           std::to_string(g.dim()) + "-d grid");
      auto& vals = w.comp(c);
      const double sgn = ft.negate ? -1.0 : 1.0;
      for (std::size_t i = 0; i < g.size(); ++i)
        vals[i] += sgn * (ft.coeff ? ft.coeff(g.coord(i), 0.0) : 1.0);
    }
    return w;
  }

 private:
  std::vector<FormTerm> terms_;
  int degree_ = -1;
  std::string src_;
};

}  // namespace nlhodge::expr

#endif  // NLHODGE_EXPR_HPP
