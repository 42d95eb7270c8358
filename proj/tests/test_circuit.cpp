#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>
#include <sstream>
#include <tuple>

#include "doctest.h"

#include "semgen/circuit.hpp"
#include "test_support.hpp"

using namespace semgen;
using namespace semgen::testing;

TEST_CASE("compile constants and tiny formulas") {
  const Circuit t = compile(parse_dsl("true"));
  CHECK(t.node_count() == 0);
  CHECK(t.root() == Circuit::kTrue);
  CHECK(t.model_count() == 1);

  const Circuit f = compile(parse_dsl("false"));
  CHECK(f.root() == Circuit::kFalse);
  CHECK(f.model_count() == 0);

  // And(v1, v2): one node per variable under the natural order
  const Circuit andc = compile(parse_dsl("v1 & v2"));
  CHECK(andc.node_count() == 2);
  CHECK(andc.model_count() == 1);

  // XOR needs one node for the first variable, two for the second
  const Circuit xorc = compile(parse_dsl("v1 ^ v2"));
  CHECK(xorc.node_count() == 3);
  CHECK(xorc.model_count() == 2);

  const Circuit clause = compile(parse_dsl("v1 | v2"));
  CHECK(clause.model_count() == 3);
}

TEST_CASE("ordered and reduced structure") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Formula f = random_formula(rng, 1 + rng.uniform_int(8), 1 + rng.uniform_int(14));
    const Circuit c = compile(f);
    for (std::uint32_t id = 2; id < c.node_count() + 2; ++id) {
      const Circuit::Node& n = c.node(id);
      CHECK(n.lo != n.hi);  // reduced
      // ordered: children sit at strictly later order positions
      const auto pos = [&](std::uint32_t x) {
        return x < 2 ? c.variable_count() : std::distance(
            c.order().begin(), std::find(c.order().begin(), c.order().end(), c.node(x).var));
      };
      CHECK(pos(n.lo) > pos(id));
      CHECK(pos(n.hi) > pos(id));
    }
    // no duplicate (var, lo, hi)
    std::set<std::tuple<int, std::uint32_t, std::uint32_t>> seen;
    for (std::uint32_t id = 2; id < c.node_count() + 2; ++id) {
      const Circuit::Node& n = c.node(id);
      CHECK(seen.insert({n.var, n.lo, n.hi}).second);
    }
  }
}

TEST_CASE("compile equivalence against enumeration") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 1 + rng.uniform_int(8);
    const Formula f = random_formula(rng, b, 1 + rng.uniform_int(16));
    const Circuit c = compile(f);
    const auto models = f.enumerate_models();
    CHECK(c.model_count() == BigInt(models.size()));
    // spot-check validity walks on every assignment
    const std::uint64_t total = std::uint64_t{1} << f.variable_count();
    Assignment a(f.variable_count());
    for (std::uint64_t code = 0; code < total; ++code) {
      for (int i = 0; i < f.variable_count(); ++i)
        a[i] = (code >> (f.variable_count() - 1 - i)) & 1u;
      CHECK(c.check_validity(a) == f.evaluate(a));
    }
  }
}

TEST_CASE("canonicity: equivalent syntax compiles to identical circuits") {
  const Circuit a = compile(parse_dsl("(x | y) & (!x | !y)"));
  const Circuit b = compile(parse_dsl("x ^ y"));
  CHECK(a == b);

  // random formula vs a double-negated rewrite of the same text; parsing both
  // fixes a shared first-occurrence variable order
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::string text =
        random_formula(rng, 1 + rng.uniform_int(6), 1 + rng.uniform_int(10)).pretty_print();
    const Formula f = parse_dsl(text);
    const Formula g = parse_dsl("!!(" + text + ")");
    const Circuit cf = compile(f);
    const Circuit cg = compile(g);
    REQUIRE(f.variable_count() == g.variable_count());
    CHECK(cf == cg);
  }
}

TEST_CASE("wmc matches brute force") {
  const Formula xor_f = parse_dsl("x ^ y");
  const Circuit c = compile(xor_f);
  CHECK(c.wmc(std::vector<double>{0.5, 0.5}) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(c.wmc(std::vector<double>{0.3, 0.8}) == doctest::Approx(0.62).epsilon(1e-14));

  const Circuit t = compile(parse_dsl("true"));
  CHECK(t.wmc(std::vector<double>{}) == 1.0);

  Rng rng(2024);
  for (int trial = 0; trial < 150; ++trial) {
    const int b = 1 + rng.uniform_int(8);
    const Formula f = random_formula(rng, b, 1 + rng.uniform_int(14));
    const Circuit c2 = compile(f);
    for (int k = 0; k < 5; ++k) {
      const auto theta = random_theta(rng, f.variable_count(), 0.0, 1.0);
      const double expect = brute_force_wmc(f, theta);
      CHECK(c2.wmc(theta) == doctest::Approx(expect).epsilon(1e-12));
      CHECK(c2.wmc(theta) >= 0.0);
      CHECK(c2.wmc(theta) <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("wmc gradient: conditioning identity and brute force") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const int b = 1 + rng.uniform_int(7);
    const Formula f = random_formula(rng, b, 1 + rng.uniform_int(12));
    const Circuit c = compile(f);
    const auto theta = random_theta(rng, f.variable_count());
    const WmcGradient wg = c.wmc_with_gradient(theta);
    CHECK(wg.value == doctest::Approx(brute_force_wmc(f, theta)).epsilon(1e-12));
    for (int v = 0; v < f.variable_count(); ++v) {
      const double hi = c.condition(v, true).wmc(theta);
      const double lo = c.condition(v, false).wmc(theta);
      CHECK(wg.gradient[v] == doctest::Approx(hi - lo).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient examples") {
  const Circuit xorc = compile(parse_dsl("v1 ^ v2"));
  const auto wg = xorc.wmc_with_gradient(std::vector<double>{0.3, 0.8});
  CHECK(wg.gradient[0] == doctest::Approx(-0.6).epsilon(1e-14));

  const Circuit t = compile(parse_dsl("true"));
  const auto tg = t.wmc_with_gradient(std::vector<double>{});
  CHECK(tg.gradient.empty());

  const Circuit andc = compile(parse_dsl("v1 & v2"));
  const auto ag = andc.wmc_with_gradient(std::vector<double>{0.5, 0.5});
  CHECK(ag.gradient[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(ag.gradient[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("condition") {
  const Circuit xorc = compile(parse_dsl("v1 ^ v2"));
  const Circuit not2 = xorc.condition(0, true);  // == !v2
  CHECK(not2.wmc(std::vector<double>{0.9, 0.8}) == doctest::Approx(0.2).epsilon(1e-14));

  const Circuit t = compile(parse_dsl("x | !x"));  // constant true over one variable
  CHECK(t.root() == Circuit::kTrue);
  CHECK(t.condition(0, true).root() == Circuit::kTrue);
  CHECK_THROWS_AS(t.condition(1, true), std::out_of_range);

  const Circuit andc = compile(parse_dsl("v1 & v2"));
  CHECK(andc.condition(0, false).root() == Circuit::kFalse);
}

TEST_CASE("condition(true) on a formula with no variables keeps b") {
  // conditioning must not shrink the variable universe
  const Circuit xorc = compile(parse_dsl("v1 ^ v2"));
  const Circuit cond = xorc.condition(0, true);
  CHECK(cond.variable_count() == 2);
}

TEST_CASE("check_validity matches evaluate") {
  const Circuit xorc = compile(parse_dsl("v1 ^ v2"));
  CHECK(xorc.check_validity(Assignment{1, 0}));
  CHECK_FALSE(xorc.check_validity(Assignment{1, 1}));
  const Circuit f = compile(parse_dsl("false"));
  CHECK_FALSE(f.check_validity(Assignment{}));
}

TEST_CASE("one traversal per node") {
  Rng rng(31);
  const Formula f = random_formula(rng, 6, 12);
  const Circuit c = compile(f);
  const auto theta = random_theta(rng, 6);
  TraversalStats stats;
  c.wmc(theta, &stats);
  CHECK(stats.node_visits == c.node_count());
  TraversalStats gstats;
  c.wmc_with_gradient(theta, &gstats);
  CHECK(gstats.node_visits == 2 * c.node_count());  // one forward + one reverse sweep
}

TEST_CASE("eval_count instrumentation") {
  const Circuit c = compile(parse_dsl("v1 & v2"));
  const auto before = c.eval_count();
  c.wmc(std::vector<double>{0.5, 0.5});
  c.check_validity(Assignment{1, 1});
  CHECK(c.eval_count() == before + 2);
}

TEST_CASE("node budget blows up loudly") {
  // a formula whose diagram is exponential under the natural interleaved
  // order: sum_{i} x_i * y_i expressed pairwise with x's before y's
  FormulaBuilder fb;
  const int n = 12;
  std::vector<int> xs, ys;
  for (int i = 0; i < n; ++i) xs.push_back(fb.var("x" + std::to_string(i)));
  for (int i = 0; i < n; ++i) ys.push_back(fb.var("y" + std::to_string(i)));
  std::vector<int> terms;
  for (int i = 0; i < n; ++i) terms.push_back(fb.conjunction({xs[i], ys[i]}));
  const int root = fb.disjunction(std::move(terms));
  const Formula f = std::move(fb).build(root);
  CompileOptions opts;
  opts.node_budget = 200;
  try {
    compile(f, opts);
    FAIL("expected CompileBudgetError");
  } catch (const CompileBudgetError& e) {
    CHECK(e.budget() == 200);
    CHECK(std::string(e.what()).find("200") != std::string::npos);
  }
}

TEST_CASE("explicit variable order changes structure not semantics") {
  const Formula f = parse_dsl("(x0 & y0) | (x1 & y1)");
  CompileOptions good;
  good.order = {0, 1, 2, 3};  // x0 y0 x1 y1 as parsed
  CompileOptions interleaved;
  interleaved.order = {0, 2, 1, 3};
  const Circuit a = compile(f, good);
  const Circuit b = compile(f, interleaved);
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const auto theta = random_theta(rng, 4);
    CHECK(a.wmc(theta) == doctest::Approx(b.wmc(theta)).epsilon(1e-12));
  }
  CHECK(a.model_count() == b.model_count());
}

TEST_CASE("log-space wmc survives linear underflow") {
  // conjunction of 600 variables at theta=0.1: linear value 1e-600 underflows
  FormulaBuilder fb;
  std::vector<int> vars;
  const int n = 600;
  for (int i = 0; i < n; ++i) vars.push_back(fb.var("x" + std::to_string(i)));
  const int root = fb.conjunction(std::move(vars));
  const Formula f = std::move(fb).build(root);
  const Circuit c = compile(f);
  const std::vector<double> theta(n, 0.1);
  CHECK(c.wmc(theta) == 0.0);  // underflow in linear space
  CHECK(c.log_wmc(theta) == doctest::Approx(n * std::log(0.1)).epsilon(1e-9));
  const auto lg = c.log_wmc_with_gradient(theta);
  CHECK(lg.value == doctest::Approx(n * std::log(0.1)).epsilon(1e-9));
  // d log wmc / d theta_i = 1/theta_i for a bare conjunction
  CHECK(lg.gradient[0] == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(lg.gradient[n - 1] == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("log-space gradient agrees with linear gradient when both work") {
  Rng rng(55);
  for (int trial = 0; trial < 40; ++trial) {
    const Formula f = random_formula(rng, 1 + rng.uniform_int(6), 1 + rng.uniform_int(10));
    const Circuit c = compile(f);
    const auto theta = random_theta(rng, f.variable_count());
    const auto lin = c.wmc_with_gradient(theta);
    if (lin.value <= 0.0) continue;
    const auto lg = c.log_wmc_with_gradient(theta);
    CHECK(lg.value == doctest::Approx(std::log(lin.value)).epsilon(1e-10));
    for (int v = 0; v < f.variable_count(); ++v)
      CHECK(lg.gradient[v] == doctest::Approx(lin.gradient[v] / lin.value).epsilon(1e-8));
  }
}

TEST_CASE("dump/load round trip") {
  Rng rng(808);
  const Formula f = random_formula(rng, 6, 14);
  const Circuit c = compile(f);
  std::stringstream buf;
  c.dump(buf);
  const Circuit back = Circuit::load(buf);
  CHECK(c == back);
  const auto theta = random_theta(rng, 6);
  CHECK(c.wmc(theta) == back.wmc(theta));

  std::stringstream bad("not-a-circuit v9");
  CHECK_THROWS(Circuit::load(bad));
}

TEST_CASE("load validates node lines") {
  std::stringstream bad(
      "semgen-circuit v1\nvars 2\norder 0 1\nroot 2\nnodes 1\n2 5 0 1\n");  // var out of range
  CHECK_THROWS(Circuit::load(bad));
}
