#include "doctest.h"

#include "semgen/formula.hpp"
#include "test_support.hpp"

using namespace semgen;

TEST_CASE("parse_dsl basic shapes") {
  const Formula f = parse_dsl("x & !y");
  CHECK(f.variable_count() == 2);
  CHECK(f.variable_names()[0] == "x");
  CHECK(f.variable_names()[1] == "y");
  const Formula::Node& root = f.node(f.root());
  CHECK(root.kind == ExprKind::And);
  REQUIRE(root.kids.size() == 2);
  CHECK(f.node(root.kids[0]).kind == ExprKind::Var);
  CHECK(f.node(root.kids[1]).kind == ExprKind::Not);
}

TEST_CASE("parse_dsl cnf xor") {
  const Formula f = parse_dsl("(x | y) & (!x | !y)");
  CHECK(f.variable_count() == 2);
  // semantics equal XOR
  CHECK(f.evaluate({1, 0}));
  CHECK(f.evaluate({0, 1}));
  CHECK_FALSE(f.evaluate({0, 0}));
  CHECK_FALSE(f.evaluate({1, 1}));
}

TEST_CASE("parse_dsl reports syntax errors with position") {
  try {
    parse_dsl("x &");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 4);
  }
  CHECK_THROWS_AS(parse_dsl(""), ParseError);
  CHECK_THROWS_AS(parse_dsl("# only a comment\n"), ParseError);
  CHECK_THROWS_AS(parse_dsl("(x | y"), ParseError);
  CHECK_THROWS_AS(parse_dsl("x <- y"), ParseError);
  CHECK_THROWS_AS(parse_dsl("x y"), ParseError);
}

TEST_CASE("parse_dsl precedence and comments") {
  // ! > & > | > ^ > -> > <->
  const Formula f = parse_dsl("a <-> b -> c ^ d | e & !f  # trailing comment");
  CHECK(f.node(f.root()).kind == ExprKind::Iff);
  const Formula g = parse_dsl("(a <-> (b -> (c ^ (d | (e & (!f))))))");
  CHECK(f.structurally_equal(g));
}

TEST_CASE("implication is right-associative") {
  const Formula f = parse_dsl("a -> b -> c");
  const Formula g = parse_dsl("a -> (b -> c)");
  CHECK(f.structurally_equal(g));
}

TEST_CASE("evaluate truth tables") {
  const Formula xor_f = parse_dsl("x ^ y");
  CHECK(xor_f.evaluate({1, 0}));
  CHECK_FALSE(xor_f.evaluate({1, 1}));
  const Formula t = parse_dsl("true");
  CHECK(t.variable_count() == 0);
  CHECK(t.evaluate({}));
  CHECK_THROWS_AS(xor_f.evaluate({1}), std::invalid_argument);
}

TEST_CASE("enumerate_models lexicographic order") {
  const Formula xor_f = parse_dsl("x ^ y");
  const auto models = xor_f.enumerate_models();
  REQUIRE(models.size() == 2);
  CHECK(models[0] == Assignment{0, 1});
  CHECK(models[1] == Assignment{1, 0});

  const Formula unsat = parse_dsl("false");
  CHECK(unsat.enumerate_models().empty());

  const Formula clause = parse_dimacs("p cnf 2 1\n1 2 0\n");
  const auto clause_models = clause.enumerate_models();
  REQUIRE(clause_models.size() == 3);
  CHECK(clause_models[0] == Assignment{0, 1});
  CHECK(clause_models[1] == Assignment{1, 0});
  CHECK(clause_models[2] == Assignment{1, 1});
}

TEST_CASE("enumerate_models guard") {
  FormulaBuilder fb;
  std::vector<int> vars;
  for (int i = 0; i < 25; ++i) vars.push_back(fb.var("x" + std::to_string(i)));
  const int root = fb.conjunction(std::move(vars));
  const Formula f = std::move(fb).build(root);
  CHECK_THROWS_AS(f.enumerate_models(), std::domain_error);
}

TEST_CASE("parse_dimacs") {
  const Formula f = parse_dimacs("p cnf 2 2\n1 2 0\n-1 -2 0\n");
  CHECK(f.variable_count() == 2);
  CHECK(f.variable_names()[0] == "v1");
  // equivalent to XOR
  const auto models = f.enumerate_models();
  REQUIRE(models.size() == 2);
  CHECK(models[0] == Assignment{0, 1});

  const Formula unit = parse_dimacs("p cnf 1 1\n1 0\n");
  CHECK(unit.variable_count() == 1);
  CHECK(unit.evaluate({1}));
  CHECK_FALSE(unit.evaluate({0}));
}

TEST_CASE("parse_dimacs error paths") {
  CHECK_THROWS_AS(parse_dimacs("p cnf 2 1\n1 3 0\n"), ParseError);     // literal > V
  CHECK_THROWS_AS(parse_dimacs("p cnf 2 2\n1 2 0\n"), ParseError);     // clause count mismatch
  CHECK_THROWS_AS(parse_dimacs("p cnf 2 1\n0\n"), ParseError);         // empty clause
  CHECK_THROWS_AS(parse_dimacs("1 2 0\n"), ParseError);                // clause before header
  CHECK_THROWS_AS(parse_dimacs("p cnf 2 1\n1 2\n"), ParseError);       // unterminated clause
  CHECK_THROWS_AS(parse_dimacs("p dnf 2 1\n1 2 0\n"), ParseError);     // bad header
}

TEST_CASE("pretty print round trip") {
  Rng rng(20240801);
  for (int trial = 0; trial < 200; ++trial) {
    const Formula f = testing::random_formula(rng, 1 + rng.uniform_int(6), 1 + rng.uniform_int(12));
    const Formula reparsed = parse_dsl(f.pretty_print());
    CAPTURE(f.pretty_print());
    CHECK(f.structurally_equal(reparsed));
  }
}

TEST_CASE("evaluate agrees with enumerate_models membership") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const int b = 1 + rng.uniform_int(6);
    const Formula f = testing::random_formula(rng, b, 1 + rng.uniform_int(10));
    const auto models = f.enumerate_models();
    std::size_t seen = 0;
    const std::uint64_t total = std::uint64_t{1} << f.variable_count();
    Assignment a(f.variable_count());
    for (std::uint64_t code = 0; code < total; ++code) {
      for (int i = 0; i < f.variable_count(); ++i)
        a[i] = (code >> (f.variable_count() - 1 - i)) & 1u;
      const bool sat = f.evaluate(a);
      const bool member = std::find(models.begin(), models.end(), a) != models.end();
      CHECK(sat == member);
      if (sat) ++seen;
    }
    CHECK(seen == models.size());
  }
}

TEST_CASE("logically equivalent encodings enumerate identically") {
  const Formula cnf = parse_dsl("(x | y) & (!x | !y)");
  const Formula xr = parse_dsl("x ^ y");
  CHECK(cnf.enumerate_models() == xr.enumerate_models());
}

TEST_CASE("desugar preserves semantics and uses only and/or/not") {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const Formula f = testing::random_formula(rng, 1 + rng.uniform_int(5), 1 + rng.uniform_int(8));
    for (DesugarStyle style : {DesugarStyle::Cnf, DesugarStyle::Dnf}) {
      const Formula d = f.desugar(style);
      CHECK(d.enumerate_models() == f.enumerate_models());
      for (std::size_t i = 0; i < d.node_count(); ++i) {
        const ExprKind k = d.node(static_cast<int>(i)).kind;
        CHECK(k != ExprKind::Implies);
        CHECK(k != ExprKind::Iff);
        CHECK(k != ExprKind::Xor);
      }
    }
  }
}
