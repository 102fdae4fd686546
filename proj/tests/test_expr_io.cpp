// Copyright (c) the nlhodge contributors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "nlhodge/density.hpp"
#include "nlhodge/expr.hpp"
#include "nlhodge/io.hpp"
#include "test_helpers.hpp"

using namespace nlhodge;
using nlhodge::expr::Expr;
using nlhodge::expr::FormExpr;
using nlhodge::expr::ParseError;

TEST_CASE("expression evaluation") {
  SECTION("density expressions in t") {
    auto e = Expr::parse("1/sqrt(1+t)");
    REQUIRE(e.uses_t());
    REQUIRE_FALSE(e.uses_x());
    for (double t : {0.0, 0.5, 3.0})
      REQUIRE(e(Point{0, 0, 0, 0}, t) == Catch::Approx(1.0 / std::sqrt(1.0 + t)));
  }
  SECTION("Scherk potential in x") {
    auto e = Expr::parse("log(cos(x1)/cos(x2))");
    const Point p{0.3, -0.4, 0, 0};
    REQUIRE(e(p) == Catch::Approx(std::log(std::cos(0.3) / std::cos(-0.4))));
  }
  SECTION("power is right-associative; unary minus binds below it") {
    REQUIRE(Expr::parse("2^3^2")(Point{0, 0, 0, 0}) == 512.0);
    REQUIRE(Expr::parse("-x1^2")(Point{3, 0, 0, 0}) == -9.0);
    REQUIRE(Expr::parse("2*-3")(Point{0, 0, 0, 0}) == -6.0);
  }
  SECTION("parse errors carry position and expectation") {
    try {
      Expr::parse("1 + ");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      REQUIRE(e.position == 4);
      REQUIRE_FALSE(e.expected.empty());
    }
    REQUIRE_THROWS_AS(Expr::parse("x5 + 1"), ParseError);
    REQUIRE_THROWS_AS(Expr::parse("sin(x1"), ParseError);
    REQUIRE_THROWS_AS(Expr::parse("foo(2)"), ParseError);
    REQUIRE_THROWS_AS(Expr::parse("(1+2"), ParseError);
  }
}

TEST_CASE("form expressions") {
  SECTION("single-component stream form") {
    Grid g = unit_grid(4, 3);
    auto fe = FormExpr::parse("x3*dx4", 4);
    REQUIRE(fe.degree() == 1);
    auto w = fe.sample(g);
    const int c4 = w.basis().position(0b1000);
    for (std::size_t i = 0; i < g.size(); ++i)
      REQUIRE(w.comp(c4)[i] == g.coord(i)[2]);
  }
  SECTION("signs and multiple terms") {
    Grid g = unit_grid(2, 3);
    auto w = FormExpr::parse("sin(x1)*dx2 - dx1", 2).sample(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      REQUIRE(w.comp(0)[i] == -1.0);
      REQUIRE(w.comp(1)[i] == Catch::Approx(std::sin(g.coord(i)[0])));
    }
  }
  SECTION("higher-degree basis tokens") {
    Grid g = unit_grid(4, 3);
    auto w = FormExpr::parse("x1*dx12 + 2*dx34", 4).sample(g);
    REQUIRE(w.degree() == 2);
    REQUIRE(w.comp(w.basis().position(0b1100))[0] == 2.0);
  }
  SECTION("plain scalars are 0-forms") {
    auto fe = FormExpr::parse("x1*x2", 2);
    REQUIRE(fe.degree() == 0);
  }
  SECTION("rejects mixed degrees and bad axis tuples") {
    REQUIRE_THROWS_AS(FormExpr::parse("dx1 + dx12", 2), ParseError);
    REQUIRE_THROWS_AS(FormExpr::parse("dx21", 2), ParseError);
    REQUIRE_THROWS_AS(FormExpr::parse("dx3", 2), ParseError);
  }
}

TEST_CASE("CSV round trip is bit-exact") {
  std::mt19937 rng(71);
  Grid g(3, {{0.0, 1.0}, {-0.5, 0.5}, {0.0, 2.0}}, {4, 3, 5});
  auto w = nlhodge::testing::random_form(g, 2, rng);

  std::vector<FieldColumn> cols;
  append_form_columns(w, "w", cols);
  cols.push_back({"Q", qnorm(w).values()});
  const std::string path = "/tmp/nlhodge_test_roundtrip.csv";
  write_field_csv(path, g, cols);

  const FieldTable table = read_field_csv(path);
  REQUIRE(table.grid == g);
  auto w2 = table.extract_form("w");
  REQUIRE(w2.degree() == 2);
  for (int c = 0; c < w.ncomp(); ++c)
    for (std::size_t i = 0; i < g.size(); ++i)
      REQUIRE(w.comp(c)[i] == w2.comp(c)[i]);
  std::remove(path.c_str());
}

TEST_CASE("report document is ordered and deterministic") {
  ReportDoc doc;
  doc.set("alpha", 1.5);
  doc.set("beta", std::string("x"));
  doc.set("gamma", true);
  REQUIRE(doc.str() == "alpha = 1.5\nbeta = x\ngamma = true\n");
  REQUIRE(doc.get("beta") == "x");
}

TEST_CASE("density table reader feeds the table family") {
  const std::string path = "/tmp/nlhodge_test_table.csv";
  {
    std::ofstream f(path);
    f << "t,rho\n";
    for (int i = 0; i <= 40; ++i) {
      const double t = 0.1 * i;
      f << fmt17(t) << ',' << fmt17(1.0 / std::sqrt(1.0 + t)) << '\n';
    }
  }
  auto [ts, rs] = read_density_table(path);
  REQUIRE(ts.size() == 41);
  auto rho = Density::from_table(ts, rs);
  // interpolation error of a smooth density at this spacing
  REQUIRE(rho.rho(Point{0, 0, 0, 0}, 1.23) ==
          Catch::Approx(1.0 / std::sqrt(2.23)).margin(1e-5));
  std::remove(path.c_str());
}
