#include <sstream>

#include "doctest.h"

#include "semgen/gridworld.hpp"
#include "semgen/semloss.hpp"

using namespace semgen;

namespace {

// 6x8 fixture: flat ground of height 1 with a two-body pipe on columns 2-3
GridLevel pipe_level() {
  GridLevel level(6, 8);
  for (int c = 0; c < 8; ++c) level.set(5, c, Tile::Solid);
  level.set(2, 2, Tile::TopLeft);
  level.set(2, 3, Tile::TopRight);
  level.set(3, 2, Tile::BodyLeft);
  level.set(3, 3, Tile::BodyRight);
  level.set(4, 2, Tile::BodyLeft);
  level.set(4, 3, Tile::BodyRight);
  return level;
}

}  // namespace

TEST_CASE("encode/decode round trip and exactly-one") {
  const GridLevel level = pipe_level();
  const Assignment bits = level.encode();
  CHECK(bits.size() == 6u * 8u * kTileCount);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 8; ++c) {
      int count = 0;
      for (int t = 0; t < kTileCount; ++t)
        count += bits[tile_var(8, r, c, static_cast<Tile>(t))];
      CHECK(count == 1);
    }
  CHECK(GridLevel::decode(6, 8, bits) == level);
}

TEST_CASE("render uses the fixed alphabet") {
  GridLevel level(2, 3);
  level.set(1, 0, Tile::Solid);
  level.set(0, 1, Tile::TopLeft);
  level.set(0, 2, Tile::TopRight);
  CHECK(level.render() == ".LR\n#..\n");
  CHECK(tile_from_char('[') == Tile::BodyLeft);
  CHECK_THROWS_AS(tile_from_char('x'), std::invalid_argument);
}

TEST_CASE("pipe constraint accepts and rejects the right levels") {
  const Formula psi = build_pipe_constraint(6, 8);
  CHECK(psi.variable_count() == 6 * 8 * kTileCount);

  SUBCASE("all empty is vacuously fine") {
    const GridLevel empty(6, 8);
    CHECK(psi.evaluate(empty.encode()));
  }
  SUBCASE("well-formed pipe on ground") {
    CHECK(psi.evaluate(pipe_level().encode()));
  }
  SUBCASE("top-left with empty right neighbor violates") {
    GridLevel bad = pipe_level();
    bad.set(2, 3, Tile::Empty);
    CHECK_FALSE(psi.evaluate(bad.encode()));
  }
  SUBCASE("floating body violates") {
    GridLevel bad(6, 8);
    for (int c = 0; c < 8; ++c) bad.set(5, c, Tile::Solid);
    bad.set(2, 2, Tile::BodyLeft);  // nothing above, nothing below
    bad.set(2, 3, Tile::BodyRight);
    CHECK_FALSE(psi.evaluate(bad.encode()));
  }
  SUBCASE("top pair in the last row violates") {
    GridLevel bad(6, 8);
    bad.set(5, 2, Tile::TopLeft);
    bad.set(5, 3, Tile::TopRight);
    CHECK_FALSE(psi.evaluate(bad.encode()));
  }
  SUBCASE("half pipe into the border violates") {
    GridLevel bad(6, 8);
    bad.set(2, 7, Tile::TopLeft);  // no room for the right half
    bad.set(3, 7, Tile::BodyLeft);
    CHECK_FALSE(psi.evaluate(bad.encode()));
  }
  SUBCASE("grid too small") {
    CHECK_THROWS_AS(build_pipe_constraint(1, 8), std::invalid_argument);
  }
}

TEST_CASE("pipe constraint compiles to a modest circuit") {
  const Formula psi = build_pipe_constraint(6, 6);
  const Circuit c = compile(psi);
  CHECK(c.node_count() > 0);
  CHECK(c.node_count() < 2'000'000);
  // the all-empty level and the fixture shifted into 6x6 must pass the circuit
  GridLevel empty(6, 6);
  CHECK(c.check_validity(empty.encode()));
  CHECK(c.model_count() > 0);
}

TEST_CASE("reachability oracle") {
  SUBCASE("flat ground reaches the whole walkway") {
    GridLevel level(4, 6);
    for (int c = 0; c < 6; ++c) level.set(3, c, Tile::Solid);
    const ReachResult reach = reachable_tiles(level);
    REQUIRE(reach.has_start);
    for (int c = 0; c < 6; ++c) CHECK(reach.at(2, c));
    CHECK(is_playable(level));
  }
  SUBCASE("start cell is always reachable") {
    GridLevel level(4, 6);
    level.set(3, 0, Tile::Solid);
    const ReachResult reach = reachable_tiles(level);
    REQUIRE(reach.has_start);
    CHECK(reach.at(2, 0));
  }
  SUBCASE("wide gap with no landing blocks the right side") {
    GridLevel level(4, 8);
    for (int c = 0; c < 3; ++c) level.set(3, c, Tile::Solid);
    for (int c = 5; c < 8; ++c) level.set(3, c, Tile::Solid);  // gap columns 3,4
    const ReachResult reach = reachable_tiles(level);
    REQUIRE(reach.has_start);
    for (int c = 5; c < 8; ++c)
      for (int r = 0; r < 4; ++r) CHECK_FALSE(reach.at(r, c));
    CHECK_FALSE(is_playable(level));
  }
  SUBCASE("single-column gap is jumpable") {
    GridLevel level(4, 8);
    for (int c = 0; c < 3; ++c) level.set(3, c, Tile::Solid);
    for (int c = 4; c < 8; ++c) level.set(3, c, Tile::Solid);  // gap column 3
    CHECK(is_playable(level));
  }
  SUBCASE("jump up two rows but not three") {
    GridLevel two(6, 4);
    for (int c = 0; c < 4; ++c) two.set(5, c, Tile::Solid);
    // column 2 ledge two rows higher than the walkway at row 4
    two.set(4, 2, Tile::Solid);
    two.set(3, 2, Tile::Solid);
    const ReachResult r2 = reachable_tiles(two);
    CHECK(r2.at(2, 2));
    CHECK(is_playable(two));

    GridLevel three(6, 4);
    for (int c = 0; c < 4; ++c) three.set(5, c, Tile::Solid);
    for (int c = 2; c < 4; ++c) {
      three.set(4, c, Tile::Solid);
      three.set(3, c, Tile::Solid);
      three.set(2, c, Tile::Solid);
    }
    const ReachResult r3 = reachable_tiles(three);
    CHECK_FALSE(r3.at(1, 2));  // top of the 3-high wall
    CHECK_FALSE(is_playable(three));
  }
  SUBCASE("no start position") {
    const GridLevel empty(4, 4);
    const ReachResult reach = reachable_tiles(empty);
    CHECK_FALSE(reach.has_start);
    for (std::uint8_t v : reach.reachable) CHECK(v == 0);
    CHECK_FALSE(is_playable(empty));
  }
}

TEST_CASE("reachability is monotone in added support") {
  Rng rng(909);
  const Dataset data = synth_dataset(30, 6, 8, "gaps", 11);
  for (const GridLevel& level : data.levels) {
    const ReachResult base = reachable_tiles(level);
    // add one solid support cell under a random empty cell
    GridLevel more = level;
    std::vector<std::pair<int, int>> spots;
    for (int r = 1; r < level.height(); ++r)
      for (int c = 0; c < level.width(); ++c)
        if (level.at(r, c) == Tile::Empty && level.at(r - 1, c) == Tile::Empty)
          spots.emplace_back(r, c);
    if (spots.empty()) continue;
    const auto [r, c] = spots[rng.uniform_int(spots.size())];
    more.set(r, c, Tile::Solid);
    const ReachResult grown = reachable_tiles(more);
    if (!base.has_start) continue;
    for (int rr = 0; rr < level.height(); ++rr)
      for (int cc = 0; cc < level.width(); ++cc)
        if (base.at(rr, cc) && !(rr == r && cc == c))  // the filled cell itself may flip
          CHECK(grown.at(rr, cc));
  }
}

TEST_CASE("synth_dataset properties") {
  const Formula psi = build_pipe_constraint(6, 8);
  SUBCASE("every level valid, deterministic by seed") {
    const Dataset a = synth_dataset(50, 6, 8, "pipes", 42);
    CHECK(a.levels.size() == 50);
    for (const GridLevel& level : a.levels) CHECK(psi.evaluate(level.encode()));
    const Dataset b = synth_dataset(50, 6, 8, "pipes", 42);
    CHECK(a.levels == b.levels);
    const Dataset c = synth_dataset(50, 6, 8, "pipes", 43);
    CHECK(a.levels != c.levels);
  }
  SUBCASE("no-pipes style has zero pipe tiles") {
    const Dataset d = synth_dataset(30, 6, 8, "no-pipes", 7);
    for (const GridLevel& level : d.levels) CHECK(level.pipe_tile_count() == 0);
  }
  SUBCASE("pipes style always has a pipe") {
    const Dataset d = synth_dataset(30, 6, 8, "pipes", 7);
    for (const GridLevel& level : d.levels) CHECK(level.pipe_tile_count() >= 4);
  }
  SUBCASE("unknown style") {
    CHECK_THROWS_AS(synth_dataset(1, 6, 8, "nope", 1), std::invalid_argument);
  }
}

TEST_CASE("corrupt_dataset") {
  const Formula psi = build_pipe_constraint(6, 8);
  const Dataset clean = synth_dataset(40, 6, 8, "pipes", 5);
  SUBCASE("rate zero leaves the data alone") {
    const Dataset same = corrupt_dataset(clean, 0.0, 9);
    CHECK(same.levels == clean.levels);
  }
  SUBCASE("rate one breaks every level") {
    const Dataset broken = corrupt_dataset(clean, 1.0, 9);
    for (const GridLevel& level : broken.levels) CHECK_FALSE(psi.evaluate(level.encode()));
  }
  SUBCASE("exact count, not binomial") {
    const Dataset mixed = corrupt_dataset(clean, 0.1, 9);
    int bad = 0;
    for (const GridLevel& level : mixed.levels) bad += !psi.evaluate(level.encode());
    CHECK(bad == 4);  // 0.1 * 40 exactly
  }
}

TEST_CASE("level and dataset io round trip") {
  const Dataset data = synth_dataset(5, 6, 8, "pipes", 77);
  std::stringstream buf;
  save_dataset(data, buf);
  const Dataset back = load_dataset(buf);
  CHECK(back.levels == data.levels);

  std::stringstream one;
  save_level(data.levels[0], one);
  CHECK(load_level(one) == data.levels[0]);

  std::stringstream bad("3 3\n..\n");
  CHECK_THROWS(load_level(bad));
}

TEST_CASE("reachability constraint shape") {
  const Formula f = build_reachability_constraint(3);
  CHECK(f.variable_count() == 3);
  CHECK(f.enumerate_models().size() == 7);  // all but the all-zero assignment
  const Circuit c = compile(f);
  CHECK(c.node_count() == 3);

  // circuit grows linearly with H
  for (int h = 2; h <= 16; ++h)
    CHECK(compile(build_reachability_constraint(h)).node_count() == std::size_t(h));

  const auto map = reachability_theta_map(3, 4);
  CHECK(map.size() == 12);
  CHECK(map[3] == 0);   // (0, 3) -> r0
  CHECK(map[7] == 1);
  CHECK(map[11] == 2);
  CHECK(map[0] == -1);
}

TEST_CASE("metrics definitions") {
  const Dataset data = synth_dataset(10, 6, 8, "pipes", 3);
  const Circuit constraint = compile(build_pipe_constraint(6, 8));

  SUBCASE("all valid distinct novel") {
    // fresh levels not in the dataset
    const Dataset other = synth_dataset(8, 6, 8, "pipes", 999);
    std::vector<GridLevel> samples(other.levels.begin(), other.levels.end());
    bool overlap = false;
    for (const GridLevel& s : samples)
      for (const GridLevel& d : data.levels) overlap |= s == d;
    REQUIRE_FALSE(overlap);
    const Metrics m = compute_metrics(samples, data, constraint);
    CHECK(m.validity == doctest::Approx(1.0));
    CHECK(m.novelty == doctest::Approx(1.0));
    CHECK(m.uniqueness <= 1.0);
    CHECK(m.pipe_tiles >= 4.0);
    CHECK(m.novelty_defined);
  }
  SUBCASE("identical valid samples collapse uniqueness") {
    std::vector<GridLevel> samples(6, data.levels[0]);
    const Metrics m = compute_metrics(samples, data, constraint);
    CHECK(m.validity == doctest::Approx(1.0));
    CHECK(m.uniqueness == doctest::Approx(1.0 / 6.0));
    CHECK(m.diversity == doctest::Approx(0.0));
    CHECK(m.novelty == doctest::Approx(0.0));  // copies of a dataset item
  }
  SUBCASE("no valid samples flags novelty") {
    GridLevel bad(6, 8);
    bad.set(0, 0, Tile::TopRight);  // top-right against the left border
    std::vector<GridLevel> samples{bad, bad};
    const Metrics m = compute_metrics(samples, data, constraint);
    CHECK(m.validity == 0.0);
    CHECK_FALSE(m.novelty_defined);
    CHECK(m.novelty == 0.0);
    CHECK(m.uniqueness == 0.0);
  }
  SUBCASE("uniqueness never exceeds validity") {
    const Dataset probe = synth_dataset(12, 6, 8, "pipes", 31);
    std::vector<GridLevel> samples = probe.levels;
    samples.push_back(samples[0]);
    GridLevel bad(6, 8);
    bad.set(3, 0, Tile::BodyRight);
    samples.push_back(bad);
    const Metrics m = compute_metrics(samples, data, constraint);
    CHECK(m.uniqueness <= m.validity);
  }
  SUBCASE("empty sample list rejected") {
    CHECK_THROWS_AS(compute_metrics({}, data, constraint), std::invalid_argument);
  }
}

TEST_CASE("phi training reaches high held-out accuracy") {
  const Dataset data = synth_dataset(600, 6, 8, "gaps", 21);
  std::vector<ReachResult> labels;
  labels.reserve(data.levels.size());
  for (const GridLevel& level : data.levels) labels.push_back(reachable_tiles(level));

  PhiConfig cfg;
  cfg.hidden = {96};
  cfg.epochs = 25;
  cfg.seed = 2;
  const PhiResult phi = train_phi(data, labels, cfg);
  CHECK(phi.heldout_accuracy >= 0.95);
  CHECK(phi.majority_rate < 1.0);

  // untrained network is no better than the majority baseline
  PhiConfig zero = cfg;
  zero.epochs = 0;
  const PhiResult raw = train_phi(data, labels, zero);
  CHECK(raw.heldout_accuracy <= raw.majority_rate + 0.05);

  // thresholded phi matches the oracle on nearly all tiles of a training level
  const Array pred = phi.net.forward(Array::row(data.levels[0].encode_real()));
  const ReachResult& oracle = labels[0];
  int agree = 0;
  for (int j = 0; j < 48; ++j) agree += (pred.at(0, j) > 0.5) == (oracle.reachable[j] != 0);
  CHECK(agree >= 45);  // >= 95% of 48 tiles

  // degenerate labels flagged
  std::vector<ReachResult> flat(labels.size());
  for (auto& m : flat) {
    m.height = 6;
    m.width = 8;
    m.reachable.assign(48, 0);
  }
  CHECK_THROWS_AS(train_phi(data, flat, cfg), std::invalid_argument);
}

TEST_CASE("phi-composed semantic loss has finite gradients") {
  const Dataset data = synth_dataset(200, 6, 8, "gaps", 22);
  std::vector<ReachResult> labels;
  for (const GridLevel& level : data.levels) labels.push_back(reachable_tiles(level));
  PhiConfig cfg;
  cfg.hidden = {64};
  cfg.epochs = 6;
  cfg.seed = 3;
  const PhiResult phi = train_phi(data, labels, cfg);

  const Circuit reach = compile(build_reachability_constraint(6));
  Rng rng(17);
  Graph g;
  const int raw = g.param(Array::glorot(2, 6 * 8 * kTileCount, rng));
  const int theta = g.group_softmax(raw, kTileCount);
  std::vector<int> phi_params;
  const int phi_out = phi.net.build(g, theta, &phi_params);
  Graph::SlOptions opts;
  opts.circuit = &reach;
  opts.theta_map = reachability_theta_map(6, 8);
  const int sl = g.semantic_loss_op(phi_out, opts);
  const int out = g.mean(sl);
  g.backward(out);
  CHECK(std::isfinite(g.value(out).at(0, 0)));
  for (std::size_t i = 0; i < g.grad(raw).size(); ++i) CHECK(std::isfinite(g.grad(raw)[i]));

  const std::vector<int> params{raw};
  CHECK(g.gradient_check(out, params, 1e-6) <= 1e-4);
}
