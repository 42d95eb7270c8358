#include "semgen/experiment.hpp"

#include <cmath>
#include <cstdarg>
#include <sstream>

namespace semgen {

// ---------------------------------------------------------------------------
// xor-toy

Formula xor_toy_constraint() {
  FormulaBuilder fb;
  const int c0f = fb.var("cell0_F");
  const int c0t = fb.var("cell0_T");
  const int c1f = fb.var("cell1_F");
  const int c1t = fb.var("cell1_T");
  const int root = fb.conjunction({
      fb.disjunction({c0f, c0t}),
      fb.negation(fb.conjunction({c0f, c0t})),
      fb.disjunction({c1f, c1t}),
      fb.negation(fb.conjunction({c1f, c1t})),
      fb.exclusive_or(c0t, c1t),
  });
  return std::move(fb).build(root);
}

std::vector<Assignment> xor_toy_data(int n, double corruption, std::uint64_t seed) {
  static const Assignment valid_a{0, 1, 1, 0};
  static const Assignment valid_b{1, 0, 0, 1};
  static const Assignment bad_a{0, 1, 0, 1};
  static const Assignment bad_b{1, 0, 1, 0};
  Rng rng(seed);
  const int bad = static_cast<int>(std::llround(corruption * n));
  std::vector<Assignment> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (i < bad) rows.push_back(rng.uniform() < 0.5 ? bad_a : bad_b);
    else rows.push_back(rng.uniform() < 0.5 ? valid_a : valid_b);
  }
  return rows;
}

namespace {

// post-training validity on a fresh, larger sample than the per-epoch probe
double sampled_validity(const Mlp& generator, const GeneratorSpec& spec, const Circuit& circuit,
                        int n, std::uint64_t seed) {
  Rng rng(seed);
  const auto rows = sample(generator, spec, n, std::nullopt, rng);
  int valid = 0;
  for (const Assignment& row : rows) valid += circuit.check_validity(row);
  return static_cast<double>(valid) / static_cast<double>(n);
}

TrainConfig xor_toy_config(std::uint64_t seed, const XorToyOptions& o, double lambda_max) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.bootstrap_epochs = o.bootstrap;
  cfg.lambda_ramp = o.ramp;
  cfg.lambda_max = lambda_max;
  cfg.batch = o.batch;
  cfg.probe_size = o.probe_size;
  cfg.seed = seed;
  cfg.d_steps = 2;  // a stronger critic keeps the corrupted modes represented
  cfg.gen.latent_dim = 4;
  cfg.gen.hidden = {16};
  cfg.gen.groups = 2;
  cfg.gen.group_size = 2;
  cfg.disc_hidden = {16};
  return cfg;
}

}  // namespace

XorToyOutcome run_xor_toy(std::uint64_t seed, const XorToyOptions& options) {
  const Circuit circuit = compile(xor_toy_constraint());
  const std::vector<Assignment> data =
      xor_toy_data(options.data_size, options.corruption, seed * 977 + 13);
  ConstraintBinding binding;
  binding.circuit = &circuit;

  XorToyOutcome out;
  const TrainConfig gan_cfg = xor_toy_config(seed, options, 0.0);
  const TrainResult gan = train(gan_cfg, data, binding);
  const TrainResult can = train(xor_toy_config(seed, options, options.lambda_max), data, binding);
  out.gan_validity = sampled_validity(gan.generator, gan_cfg.gen, circuit, 2048, seed ^ 0xeeee1ull);
  out.can_validity = sampled_validity(can.generator, gan_cfg.gen, circuit, 2048, seed ^ 0xeeee2ull);
  out.gan_report = gan.report;
  out.can_report = can.report;
  return out;
}

// ---------------------------------------------------------------------------
// pipes

namespace {

TrainConfig pipes_config(std::uint64_t seed, const PipesOptions& o, double lambda_max) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.bootstrap_epochs = o.bootstrap;
  cfg.lambda_ramp = o.ramp;
  cfg.lambda_max = lambda_max;
  cfg.batch = o.batch;
  cfg.probe_size = o.probe_size;
  cfg.seed = seed;
  cfg.gen.latent_dim = o.latent_dim;
  cfg.gen.hidden = o.gen_hidden;
  cfg.gen.groups = o.height * o.width;
  cfg.gen.group_size = kTileCount;
  cfg.disc_hidden = o.disc_hidden;
  return cfg;
}

std::vector<GridLevel> decode_samples(const std::vector<Assignment>& rows, int height,
                                      int width) {
  std::vector<GridLevel> levels;
  levels.reserve(rows.size());
  for (const Assignment& row : rows) levels.push_back(GridLevel::decode(height, width, row));
  return levels;
}

}  // namespace

PipesOutcome run_pipes(std::uint64_t seed, const PipesOptions& options, const Circuit& circuit,
                       const Dataset& data) {
  std::vector<Assignment> rows;
  rows.reserve(data.levels.size());
  for (const GridLevel& level : data.levels) rows.push_back(level.encode());

  ConstraintBinding binding;
  binding.circuit = &circuit;

  PipesOutcome out;
  const TrainResult gan = train(pipes_config(seed, options, 0.0), rows, binding);
  const TrainResult can =
      train(pipes_config(seed, options, options.lambda_max), rows, binding);
  out.gan_report = gan.report;
  out.can_report = can.report;

  const GeneratorSpec spec = pipes_config(seed, options, 0.0).gen;
  Rng gan_rng(seed ^ 0xabcdef12345ull);
  Rng can_rng(seed ^ 0xabcdef12345ull);
  const auto gan_rows = sample(gan.generator, spec, options.eval_samples, std::nullopt, gan_rng);
  const auto can_rows = sample(can.generator, spec, options.eval_samples, std::nullopt, can_rng);
  const auto gan_levels = decode_samples(gan_rows, options.height, options.width);
  const auto can_levels = decode_samples(can_rows, options.height, options.width);
  out.gan = compute_metrics(gan_levels, data, circuit);
  out.can = compute_metrics(can_levels, data, circuit);
  out.gan_samples.assign(gan_levels.begin(), gan_levels.begin() + std::min<std::size_t>(8, gan_levels.size()));
  out.can_samples.assign(can_levels.begin(), can_levels.begin() + std::min<std::size_t>(8, can_levels.size()));
  return out;
}

// ---------------------------------------------------------------------------
// reachability

ReachabilityOutcome run_reachability(std::uint64_t seed, const ReachabilityOptions& options) {
  const int h = options.height;
  const int w = options.width;

  // phi is trained once on its own corpus against the BFS oracle
  const Dataset phi_data = synth_dataset(options.phi_data_size, h, w, "gaps", 4242);
  std::vector<ReachResult> labels;
  labels.reserve(phi_data.levels.size());
  for (const GridLevel& level : phi_data.levels) labels.push_back(reachable_tiles(level));
  const PhiResult phi = train_phi(phi_data, labels, options.phi);

  const Circuit reach_circuit = compile(build_reachability_constraint(h));

  const Dataset data = synth_dataset(options.data_size, h, w, "gaps", seed * 31 + 7);
  std::vector<Assignment> rows;
  rows.reserve(data.levels.size());
  for (const GridLevel& level : data.levels) rows.push_back(level.encode());

  ConstraintBinding binding;
  binding.circuit = &reach_circuit;
  binding.embedding = &phi.net;
  binding.embedding_theta_map = reachability_theta_map(h, w);

  TrainConfig base;
  base.epochs = options.epochs;
  base.bootstrap_epochs = options.bootstrap;
  base.lambda_ramp = options.ramp;
  base.batch = options.batch;
  base.probe_size = 32;  // probe validity is NaN here; the oracle scores below
  base.seed = seed;
  base.gen.latent_dim = options.latent_dim;
  base.gen.hidden = options.gen_hidden;
  base.gen.groups = h * w;
  base.gen.group_size = kTileCount;
  base.disc_hidden = options.disc_hidden;

  TrainConfig gan_cfg = base;
  gan_cfg.lambda_max = 0.0;
  TrainConfig can_cfg = base;
  can_cfg.lambda_max = options.lambda_max;

  ReachabilityOutcome out;
  out.phi_accuracy = phi.heldout_accuracy;
  const TrainResult gan = train(gan_cfg, rows, binding);
  const TrainResult can = train(can_cfg, rows, binding);
  out.gan_report = gan.report;
  out.can_report = can.report;

  Rng gan_rng(seed ^ 0x7777777ull);
  Rng can_rng(seed ^ 0x7777777ull);
  const auto gan_rows = sample(gan.generator, base.gen, options.eval_samples, std::nullopt, gan_rng);
  const auto can_rows = sample(can.generator, base.gen, options.eval_samples, std::nullopt, can_rng);
  int gan_playable = 0, can_playable = 0;
  for (const Assignment& row : gan_rows)
    gan_playable += is_playable(GridLevel::decode(h, w, row));
  for (const Assignment& row : can_rows)
    can_playable += is_playable(GridLevel::decode(h, w, row));
  out.gan_playability = static_cast<double>(gan_playable) / options.eval_samples;
  out.can_playability = static_cast<double>(can_playable) / options.eval_samples;
  const auto gan_levels = decode_samples(gan_rows, h, w);
  const auto can_levels = decode_samples(can_rows, h, w);
  out.gan_samples.assign(gan_levels.begin(), gan_levels.begin() + std::min<std::size_t>(8, gan_levels.size()));
  out.can_samples.assign(can_levels.begin(), can_levels.begin() + std::min<std::size_t>(8, can_levels.size()));
  return out;
}

// ---------------------------------------------------------------------------
// conditional

Formula conditional_property(int height, int width, int which) {
  if (which < 0 || which > 1) throw std::invalid_argument("property index must be 0 or 1");
  FormulaBuilder fb;
  // register the full grid variable table so indices line up with encodings
  std::vector<int> lits(std::size_t(height) * width * kTileCount);
  for (int r = 0; r < height; ++r)
    for (int c = 0; c < width; ++c)
      for (int t = 0; t < kTileCount; ++t)
        lits[tile_var(width, r, c, static_cast<Tile>(t))] =
            fb.var(tile_var_name(r, c, static_cast<Tile>(t)));
  const int lo = which == 0 ? 0 : width / 2;
  const int hi = which == 0 ? width / 2 : width;
  std::vector<int> tops;
  for (int r = 0; r < height; ++r)
    for (int c = lo; c < hi; ++c) tops.push_back(lits[tile_var(width, r, c, Tile::TopLeft)]);
  const int root = fb.disjunction(std::move(tops));
  return std::move(fb).build(root);
}

namespace {

bool property_holds(const GridLevel& level, int which) {
  const int lo = which == 0 ? 0 : level.width() / 2;
  const int hi = which == 0 ? level.width() / 2 : level.width();
  for (int r = 0; r < level.height(); ++r)
    for (int c = lo; c < hi; ++c)
      if (level.at(r, c) == Tile::TopLeft) return true;
  return false;
}

}  // namespace

ConditionalOutcome run_conditional(std::uint64_t seed, const ConditionalOptions& options) {
  const int h = options.height;
  const int w = options.width;
  const int b_structure = h * w * kTileCount;

  // full constraint: pipe well-formedness AND (c_i <-> psi_i) for both codes
  ConditionalSpec spec;
  spec.entries.push_back({"code_left", conditional_property(h, w, 0)});
  spec.entries.push_back({"code_right", conditional_property(h, w, 1)});
  const Formula switchable = build_conditional(spec);

  // conjoin with the base pipe constraint inside one builder so the variable
  // table stays in encoding order with the two codes at the end
  FormulaBuilder fb;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int t = 0; t < kTileCount; ++t) fb.var(tile_var_name(r, c, static_cast<Tile>(t)));
  struct Copier {
    FormulaBuilder& fb;
    const Formula& src;
    int go(int id) {
      const Formula::Node& n = src.node(id);
      switch (n.kind) {
        case ExprKind::Var: return fb.var(src.variable_names()[n.var]);
        case ExprKind::Const: return fb.constant(n.value);
        case ExprKind::Not: return fb.negation(go(n.kids[0]));
        case ExprKind::And: {
          std::vector<int> kids;
          for (int k : n.kids) kids.push_back(go(k));
          return fb.conjunction(std::move(kids));
        }
        case ExprKind::Or: {
          std::vector<int> kids;
          for (int k : n.kids) kids.push_back(go(k));
          return fb.disjunction(std::move(kids));
        }
        case ExprKind::Implies: return fb.implies(go(n.kids[0]), go(n.kids[1]));
        case ExprKind::Iff: return fb.iff(go(n.kids[0]), go(n.kids[1]));
        case ExprKind::Xor: return fb.exclusive_or(go(n.kids[0]), go(n.kids[1]));
      }
      return -1;
    }
  };
  const Formula pipe = build_pipe_constraint(h, w);
  Copier pipe_copier{fb, pipe};
  const int pipe_root = pipe_copier.go(pipe.root());
  Copier cond_copier{fb, switchable};
  const int cond_root = cond_copier.go(switchable.root());
  const int root = fb.conjunction({pipe_root, cond_root});
  const Formula full = std::move(fb).build(root);
  const Circuit circuit = compile(full);

  const Dataset data = synth_dataset(options.data_size, h, w, "pipes", seed * 131 + 3);
  std::vector<Assignment> rows;
  std::vector<std::vector<std::uint8_t>> observed_codes;
  rows.reserve(data.levels.size());
  for (const GridLevel& level : data.levels) {
    rows.push_back(level.encode());
    observed_codes.push_back({static_cast<std::uint8_t>(property_holds(level, 0)),
                              static_cast<std::uint8_t>(property_holds(level, 1))});
  }

  TrainConfig cfg;
  cfg.epochs = options.epochs;
  cfg.bootstrap_epochs = options.bootstrap;
  cfg.lambda_ramp = options.ramp;
  cfg.lambda_max = options.lambda_max;
  cfg.batch = options.batch;
  cfg.probe_size = options.probe_size;
  cfg.seed = seed;
  cfg.gen.latent_dim = options.latent_dim;
  cfg.gen.code_dim = 2;
  cfg.gen.hidden = options.gen_hidden;
  cfg.gen.groups = h * w;
  cfg.gen.group_size = kTileCount;
  cfg.disc_hidden = options.disc_hidden;
  cfg.code_prior = estimate_code_prior(observed_codes);

  ConstraintBinding binding;
  binding.circuit = &circuit;
  binding.code_vars = {b_structure, b_structure + 1};

  ConditionalOutcome out;
  const TrainResult can = train(cfg, rows, binding);
  out.can_report = can.report;

  const Circuit base_circuit = compile(pipe);
  out.on_rate.assign(2, 0.0);
  out.off_rate.assign(2, 0.0);
  std::vector<int> on_valid(2, 0), on_hit(2, 0), off_valid(2, 0), off_hit(2, 0);
  std::size_t valid_total = 0, total = 0;
  for (std::uint8_t c0 : {0, 1})
    for (std::uint8_t c1 : {0, 1}) {
      Rng rng(seed ^ (0x51ull + c0 * 2 + c1));
      const std::vector<std::uint8_t> code{c0, c1};
      const auto sampled = sample(can.generator, cfg.gen, options.eval_samples, code, rng);
      for (const Assignment& row : sampled) {
        ++total;
        if (!base_circuit.check_validity(row)) continue;
        ++valid_total;
        const GridLevel level = GridLevel::decode(h, w, row);
        const bool p0 = property_holds(level, 0);
        const bool p1 = property_holds(level, 1);
        if (c0) { ++on_valid[0]; on_hit[0] += p0; } else { ++off_valid[0]; off_hit[0] += !p0; }
        if (c1) { ++on_valid[1]; on_hit[1] += p1; } else { ++off_valid[1]; off_hit[1] += !p1; }
      }
    }
  for (int i = 0; i < 2; ++i) {
    out.on_rate[i] = on_valid[i] ? static_cast<double>(on_hit[i]) / on_valid[i] : 0.0;
    out.off_rate[i] = off_valid[i] ? static_cast<double>(off_hit[i]) / off_valid[i] : 0.0;
  }
  out.validity = total ? static_cast<double>(valid_total) / static_cast<double>(total) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// comparison CSVs

namespace {

std::string format_row(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

std::string xor_toy_csv(const std::vector<XorToyOutcome>& outcomes,
                        const std::vector<std::uint64_t>& seeds) {
  std::string csv = "seed,gan_validity,can_validity\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    csv += format_row("%llu,%.6f,%.6f\n", static_cast<unsigned long long>(seeds[i]),
                      outcomes[i].gan_validity, outcomes[i].can_validity);
  return csv;
}

std::string pipes_csv(const std::vector<PipesOutcome>& outcomes,
                      const std::vector<std::uint64_t>& seeds) {
  std::string csv = "seed,arm," + metrics_csv_header() + "\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    csv += format_row("%llu,gan,", static_cast<unsigned long long>(seeds[i])) +
           metrics_csv_row(outcomes[i].gan) + "\n";
    csv += format_row("%llu,can,", static_cast<unsigned long long>(seeds[i])) +
           metrics_csv_row(outcomes[i].can) + "\n";
  }
  return csv;
}

std::string reachability_csv(const std::vector<ReachabilityOutcome>& outcomes,
                             const std::vector<std::uint64_t>& seeds) {
  std::string csv = "seed,phi_accuracy,gan_playability,can_playability\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    csv += format_row("%llu,%.6f,%.6f,%.6f\n", static_cast<unsigned long long>(seeds[i]),
                      outcomes[i].phi_accuracy, outcomes[i].gan_playability,
                      outcomes[i].can_playability);
  return csv;
}

std::string conditional_csv(const ConditionalOutcome& outcome, std::uint64_t seed) {
  std::string csv = "seed,property,on_rate,off_rate,validity\n";
  for (int i = 0; i < 2; ++i)
    csv += format_row("%llu,%d,%.6f,%.6f,%.6f\n", static_cast<unsigned long long>(seed), i,
                      outcome.on_rate[i], outcome.off_rate[i], outcome.validity);
  return csv;
}

}  // namespace semgen
