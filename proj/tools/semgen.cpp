// semgen: compile constraints, evaluate losses, train, sample, and run the
// paired GAN/CAN experiments from one binary.
//
// exit codes: 0 success, 1 user/input error, 2 resource-budget error,
// 3 internal invariant failure

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "semgen/experiment.hpp"
#include "semgen/gridworld.hpp"
#include "semgen/semloss.hpp"
#include "semgen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semgen;

namespace {

constexpr const char* kVersion = "semgen 0.1.0";

struct UserError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write '" + path + "'");
  out << text;
}

Formula load_constraint(const std::string& path, bool dimacs) {
  const std::string text = read_file(path);
  if (dimacs || path.ends_with(".cnf") || path.ends_with(".dimacs"))
    return parse_dimacs(text);
  return parse_dsl(text);
}

std::vector<double> load_theta(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<double> theta;
  double v;
  while (in >> v) theta.push_back(v);
  if (theta.empty()) throw UserError("theta file '" + path + "' holds no values");
  return theta;
}

// Run manifest: written into the run directory before any computation; every
// artifact the command intends to produce is listed up front.
void write_manifest(const fs::path& dir, const std::string& command, const json& config,
                    std::uint64_t seed, const std::vector<std::string>& outputs) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["version"] = kVersion;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  manifest["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(now).count();
  manifest["outputs"] = outputs;
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

// --- compile ---------------------------------------------------------------

int cmd_compile(const std::string& constraint_path, bool dimacs, const std::string& order_flag,
                const std::string& out_path, std::size_t budget) {
  const Formula f = load_constraint(constraint_path, dimacs);
  CompileOptions opts;
  opts.node_budget = budget;
  if (order_flag == "reverse") {
    opts.order.resize(f.variable_count());
    for (int i = 0; i < f.variable_count(); ++i)
      opts.order[i] = f.variable_count() - 1 - i;
  } else if (order_flag != "natural" && !order_flag.empty()) {
    throw UserError("unknown order '" + order_flag + "' (use natural or reverse)");
  }
  const Circuit c = compile(f, opts);
  std::cout << "variables " << c.variable_count() << "\n";
  std::cout << "nodes " << c.node_count() << "\n";
  std::cout << "depth " << c.depth() << "\n";
  std::cout << "models " << c.model_count() << "\n";
  if (c.model_count() == 0) std::cout << "warning: constraint is unsatisfiable\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw UserError("cannot write '" + out_path + "'");
    c.dump(out);
  }
  return 0;
}

// --- wmc / sl ----------------------------------------------------------------

Circuit load_or_compile_circuit(const std::string& path, bool dimacs) {
  if (path.ends_with(".circuit")) {
    std::ifstream in(path);
    if (!in) throw UserError("cannot open '" + path + "'");
    return Circuit::load(in);
  }
  return compile(load_constraint(path, dimacs));
}

int cmd_wmc(const std::string& path, bool dimacs, const std::string& theta_path) {
  const Circuit c = load_or_compile_circuit(path, dimacs);
  const std::vector<double> theta = load_theta(theta_path);
  if (static_cast<int>(theta.size()) != c.variable_count())
    throw UserError("theta length does not match the variable count");
  std::printf("wmc %.17g\n", c.wmc(theta));
  return 0;
}

int cmd_sl(const std::string& path, bool dimacs, const std::string& theta_path,
           const std::string& fuzzy) {
  const std::vector<double> theta = load_theta(theta_path);
  if (!fuzzy.empty()) {
    if (fuzzy != "cnf" && fuzzy != "dnf") throw UserError("--fuzzy takes cnf or dnf");
    const DesugarStyle style = fuzzy == "cnf" ? DesugarStyle::Cnf : DesugarStyle::Dnf;
    const Formula f = load_constraint(path, dimacs).desugar(style);
    if (static_cast<int>(theta.size()) != f.variable_count())
      throw UserError("theta length does not match the variable count");
    std::printf("truth %.17g\n", fuzzy_truth(f, theta));
    std::printf("loss %.17g\n", fuzzy_loss_clamped(f, theta));
    return 0;
  }
  const Circuit c = load_or_compile_circuit(path, dimacs);
  if (static_cast<int>(theta.size()) != c.variable_count())
    throw UserError("theta length does not match the variable count");
  const LossValue lv = semantic_loss_clamped(c, theta);
  std::printf("loss %.17g\n", lv.value);
  std::printf("gradient");
  for (double g : lv.gradient) std::printf(" %.17g", g);
  std::printf("\n");
  return 0;
}

// --- train -------------------------------------------------------------------

struct GridTask {
  Dataset data;
  Circuit circuit;
  TrainConfig cfg;
};

GridTask prepare_grid_task(const KeyValueConfig& kv, std::uint64_t seed_override,
                           bool has_seed_override) {
  GridTask task;
  const std::string dataset_path = kv.get("dataset");
  if (dataset_path.empty()) throw UserError("config is missing dataset=<level file>");
  std::ifstream in(dataset_path);
  if (!in) throw UserError("cannot open dataset '" + dataset_path + "'");
  task.data = load_dataset(in);

  const std::string constraint = kv.get("constraint", "pipes");
  if (constraint == "pipes") {
    task.circuit = compile(build_pipe_constraint(task.data.height, task.data.width));
  } else {
    task.circuit = load_or_compile_circuit(constraint, false);
  }

  task.cfg = train_config_from_kv(kv);
  if (has_seed_override) task.cfg.seed = seed_override;
  if (task.cfg.gen.groups == 0) {
    task.cfg.gen.groups = task.data.height * task.data.width;
    task.cfg.gen.group_size = kTileCount;
  }
  return task;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::uint64_t seed_override, bool has_seed_override) {
  std::ifstream cfg_in(config_path);
  if (!cfg_in) throw UserError("cannot open config '" + config_path + "'");
  const KeyValueConfig kv = KeyValueConfig::parse(cfg_in);
  GridTask task = prepare_grid_task(kv, seed_override, has_seed_override);

  const fs::path dir(out_dir.empty() ? "run" : out_dir);
  fs::create_directories(dir);
  write_manifest(dir, "train", json{{"config_file", config_path}}, task.cfg.seed,
                 {"config.txt", "generator.weights", "discriminator.weights", "report.csv",
                  "samples.txt"});
  {
    std::ofstream out(dir / "config.txt");
    write_train_config(task.cfg, out);
    out << "dataset=" << kv.get("dataset") << "\n";
    out << "constraint=" << kv.get("constraint", "pipes") << "\n";
    out << "height=" << task.data.height << "\n";
    out << "width=" << task.data.width << "\n";
  }

  std::vector<Assignment> rows;
  rows.reserve(task.data.levels.size());
  for (const GridLevel& level : task.data.levels) rows.push_back(level.encode());

  ConstraintBinding binding;
  binding.circuit = &task.circuit;
  const TrainResult result = train(task.cfg, rows, binding);

  {
    std::ofstream out(dir / "generator.weights", std::ios::binary);
    result.generator.save(out, task.cfg.seed);
    std::ofstream dout(dir / "discriminator.weights", std::ios::binary);
    result.discriminator.save(dout, task.cfg.seed);
    std::ofstream rout(dir / "report.csv");
    result.report.write_csv(rout);
  }
  {
    Rng rng(task.cfg.seed ^ 0xfeedULL);
    const auto sampled = sample(result.generator, task.cfg.gen, 4, std::nullopt, rng);
    std::ofstream out(dir / "samples.txt");
    for (const Assignment& row : sampled) {
      save_level(GridLevel::decode(task.data.height, task.data.width, row), out);
      out << "\n";
    }
  }
  std::cout << "run written to " << dir.string() << "\n";
  if (!result.report.epochs.empty())
    std::cout << "final probe validity " << result.report.epochs.back().probe_validity << "\n";
  return 0;
}

// --- sample / render ---------------------------------------------------------

Mlp load_generator(const fs::path& run_dir) {
  std::ifstream in(run_dir / "generator.weights", std::ios::binary);
  if (!in) throw UserError("cannot open generator weights under '" + run_dir.string() + "'");
  return Mlp::load(in);
}

int cmd_sample(const std::string& run_dir_s, int n, const std::string& code_bits, bool reject,
               std::uint64_t seed) {
  const fs::path run_dir(run_dir_s);
  std::ifstream cfg_in(run_dir / "config.txt");
  if (!cfg_in) throw UserError("run directory has no config.txt");
  const KeyValueConfig kv = KeyValueConfig::parse(cfg_in);
  const GeneratorSpec spec = train_config_from_kv(kv).gen;
  const Mlp gen = load_generator(run_dir);
  const int height = static_cast<int>(kv.get_int("height", 0));
  const int width = static_cast<int>(kv.get_int("width", 0));

  std::optional<std::vector<std::uint8_t>> code;
  if (!code_bits.empty()) {
    std::vector<std::uint8_t> bits;
    for (char c : code_bits) {
      if (c != '0' && c != '1') throw UserError("--code must be a 0/1 string");
      bits.push_back(c == '1');
    }
    code = std::move(bits);
  }

  Rng rng(seed);
  std::vector<Assignment> rows;
  if (reject) {
    const std::string constraint = kv.get("constraint", "pipes");
    Circuit circuit = constraint == "pipes"
                          ? compile(build_pipe_constraint(height, width))
                          : load_or_compile_circuit(constraint, false);
    const RejectionResult r = rejection_sample(gen, spec, circuit, n,
                                               static_cast<std::uint64_t>(n) * 1000, rng);
    std::cerr << "attempts " << r.attempts << (r.exhausted ? " (exhausted)" : "") << "\n";
    rows = r.accepted;
  } else {
    rows = sample(gen, spec, n, code, rng);
  }
  for (const Assignment& row : rows) {
    if (height > 0 && width > 0 &&
        static_cast<int>(row.size()) == height * width * kTileCount) {
      save_level(GridLevel::decode(height, width, row), std::cout);
    } else {
      for (std::uint8_t b : row) std::cout << int(b);
      std::cout << "\n";
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_render(const std::string& level_path, bool annotate_reach) {
  std::ifstream in(level_path);
  if (!in) throw UserError("cannot open '" + level_path + "'");
  const Dataset data = load_dataset(in);
  for (const GridLevel& level : data.levels) {
    if (annotate_reach) {
      const ReachResult reach = reachable_tiles(level);
      for (int r = 0; r < level.height(); ++r) {
        for (int c = 0; c < level.width(); ++c) {
          const char base = tile_char(level.at(r, c));
          std::cout << (reach.at(r, c) && base == '.' ? '*' : base);
        }
        std::cout << "\n";
      }
      std::cout << (is_playable(level) ? "playable" : "not playable") << "\n\n";
    } else {
      std::cout << level.render() << "\n";
    }
  }
  return 0;
}

// --- experiment --------------------------------------------------------------

int cmd_experiment(const std::string& name, std::uint64_t seed, int seed_count,
                   const std::string& out_dir, const std::string& config_path) {
  KeyValueConfig kv;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UserError("cannot open config '" + config_path + "'");
    kv = KeyValueConfig::parse(in);
  }
  const fs::path dir(out_dir.empty() ? ("experiment-" + name) : out_dir);
  fs::create_directories(dir);

  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seed_count; ++i) seeds.push_back(seed + i);

  if (name == "xor-toy") {
    XorToyOptions opts;
    opts.epochs = static_cast<int>(kv.get_int("epochs", opts.epochs));
    opts.data_size = static_cast<int>(kv.get_int("data_size", opts.data_size));
    opts.corruption = kv.get_real("corruption", opts.corruption);
    opts.lambda_max = kv.get_real("lambda_max", opts.lambda_max);
    write_manifest(dir, "experiment xor-toy", json{{"seeds", seeds}}, seed, {"comparison.csv"});
    std::vector<XorToyOutcome> outcomes;
    for (std::uint64_t s : seeds) outcomes.push_back(run_xor_toy(s, opts));
    write_file((dir / "comparison.csv").string(), xor_toy_csv(outcomes, seeds));
    double gan = 0, can = 0;
    for (const auto& o : outcomes) {
      gan += o.gan_validity;
      can += o.can_validity;
    }
    std::printf("gan validity %.4f  can validity %.4f (mean over %zu seeds)\n",
                gan / outcomes.size(), can / outcomes.size(), outcomes.size());
    return 0;
  }
  if (name == "pipes") {
    PipesOptions opts;
    opts.epochs = static_cast<int>(kv.get_int("epochs", opts.epochs));
    opts.height = static_cast<int>(kv.get_int("height", opts.height));
    opts.width = static_cast<int>(kv.get_int("width", opts.width));
    opts.data_size = static_cast<int>(kv.get_int("data_size", opts.data_size));
    opts.lambda_max = kv.get_real("lambda_max", opts.lambda_max);
    write_manifest(dir, "experiment pipes", json{{"seeds", seeds}}, seed,
                   {"comparison.csv", "samples_gan.txt", "samples_can.txt"});
    const Circuit circuit = compile(build_pipe_constraint(opts.height, opts.width));
    const Dataset data = synth_dataset(opts.data_size, opts.height, opts.width, "pipes", 606060);
    std::vector<PipesOutcome> outcomes;
    for (std::uint64_t s : seeds) outcomes.push_back(run_pipes(s, opts, circuit, data));
    write_file((dir / "comparison.csv").string(), pipes_csv(outcomes, seeds));
    std::ostringstream gan_sheet, can_sheet;
    for (const GridLevel& level : outcomes.front().gan_samples) {
      save_level(level, gan_sheet);
      gan_sheet << "\n";
    }
    for (const GridLevel& level : outcomes.front().can_samples) {
      save_level(level, can_sheet);
      can_sheet << "\n";
    }
    write_file((dir / "samples_gan.txt").string(), gan_sheet.str());
    write_file((dir / "samples_can.txt").string(), can_sheet.str());
    double gan = 0, can = 0;
    for (const auto& o : outcomes) {
      gan += o.gan.validity;
      can += o.can.validity;
    }
    std::printf("gan validity %.4f  can validity %.4f (mean over %zu seeds)\n",
                gan / outcomes.size(), can / outcomes.size(), outcomes.size());
    return 0;
  }
  if (name == "reachability") {
    ReachabilityOptions opts;
    opts.epochs = static_cast<int>(kv.get_int("epochs", opts.epochs));
    opts.lambda_max = kv.get_real("lambda_max", opts.lambda_max);
    write_manifest(dir, "experiment reachability", json{{"seeds", seeds}}, seed,
                   {"comparison.csv"});
    std::vector<ReachabilityOutcome> outcomes;
    for (std::uint64_t s : seeds) outcomes.push_back(run_reachability(s, opts));
    write_file((dir / "comparison.csv").string(), reachability_csv(outcomes, seeds));
    double gan = 0, can = 0;
    for (const auto& o : outcomes) {
      gan += o.gan_playability;
      can += o.can_playability;
    }
    std::printf("phi accuracy %.4f  gan playability %.4f  can playability %.4f\n",
                outcomes.front().phi_accuracy, gan / outcomes.size(), can / outcomes.size());
    return 0;
  }
  if (name == "conditional") {
    ConditionalOptions opts;
    opts.epochs = static_cast<int>(kv.get_int("epochs", opts.epochs));
    opts.lambda_max = kv.get_real("lambda_max", opts.lambda_max);
    write_manifest(dir, "experiment conditional", json{{"seed", seed}}, seed,
                   {"comparison.csv"});
    const ConditionalOutcome outcome = run_conditional(seed, opts);
    write_file((dir / "comparison.csv").string(), conditional_csv(outcome, seed));
    std::printf("validity %.4f  on rates %.4f/%.4f  off rates %.4f/%.4f\n", outcome.validity,
                outcome.on_rate[0], outcome.on_rate[1], outcome.off_rate[0],
                outcome.off_rate[1]);
    return 0;
  }
  throw UserError("unknown experiment '" + name + "'");
}

int cmd_report(const std::string& run_dir_s) {
  const fs::path run_dir(run_dir_s);
  const fs::path report = run_dir / "report.csv";
  const fs::path comparison = run_dir / "comparison.csv";
  if (fs::exists(report)) {
    std::ifstream in(report);
    TrainReport r = TrainReport::read_csv(in);
    if (r.epochs.empty()) {
      std::cout << "empty report\n";
      return 0;
    }
    const EpochRecord& last = r.epochs.back();
    std::printf("epochs %zu\n", r.epochs.size());
    std::printf("final d_loss %.6f g_loss %.6f sl %.6f validity %.6f lambda %.3f\n",
                last.d_loss, last.g_loss, last.sl_value, last.probe_validity, last.lambda);
    return 0;
  }
  if (fs::exists(comparison)) {
    std::cout << read_file(comparison.string());
    return 0;
  }
  throw UserError("no report.csv or comparison.csv under '" + run_dir_s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained adversarial structure generation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  app.add_option("--seed", seed, "global random seed")->capture_default_str();

  // compile
  auto* compile_cmd = app.add_subcommand("compile", "compile a constraint into a circuit");
  std::string constraint_path, out_path, order_flag = "natural";
  bool dimacs = false;
  std::size_t budget = 50'000'000;
  compile_cmd->add_option("constraint", constraint_path)->required();
  compile_cmd->add_flag("--dimacs", dimacs, "input is DIMACS CNF");
  compile_cmd->add_option("--order", order_flag, "variable order: natural|reverse");
  compile_cmd->add_option("-o,--out", out_path, "write the circuit dump here");
  compile_cmd->add_option("--node-budget", budget);

  // wmc
  auto* wmc_cmd = app.add_subcommand("wmc", "weighted model count under theta");
  std::string wmc_path, wmc_theta;
  bool wmc_dimacs = false;
  wmc_cmd->add_option("constraint", wmc_path)->required();
  wmc_cmd->add_option("--theta", wmc_theta, "file with one probability per line")->required();
  wmc_cmd->add_flag("--dimacs", wmc_dimacs);

  // sl
  auto* sl_cmd = app.add_subcommand("sl", "semantic loss value and gradient");
  std::string sl_path, sl_theta, sl_fuzzy;
  bool sl_dimacs = false;
  sl_cmd->add_option("constraint", sl_path)->required();
  sl_cmd->add_option("--theta", sl_theta)->required();
  sl_cmd->add_option("--fuzzy", sl_fuzzy, "Lukasiewicz baseline: cnf|dnf");
  sl_cmd->add_flag("--dimacs", sl_dimacs);

  // train
  auto* train_cmd = app.add_subcommand("train", "adversarial training from a config file");
  std::string train_config, train_out;
  train_cmd->add_option("--config", train_config)->required();
  train_cmd->add_option("--out", train_out, "run directory");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "draw structures from trained weights");
  std::string sample_run, sample_code;
  int sample_n = 1;
  bool sample_reject = false;
  sample_cmd->add_option("--run", sample_run, "training run directory")->required();
  sample_cmd->add_option("-n", sample_n);
  sample_cmd->add_option("--code", sample_code, "conditional code bits, e.g. 10");
  sample_cmd->add_flag("--reject", sample_reject, "rejection-sample valid structures");

  // render
  auto* render_cmd = app.add_subcommand("render", "print levels from a level file");
  std::string render_path;
  bool annotate = false;
  render_cmd->add_option("file", render_path)->required();
  render_cmd->add_flag("--annotate-reach", annotate, "overlay the reachability oracle");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "paired GAN/CAN comparison runs");
  std::string exp_name, exp_out, exp_config;
  int exp_seeds = 1;
  exp_cmd->add_option("name", exp_name, "xor-toy|pipes|reachability|conditional")->required();
  exp_cmd->add_option("--seeds", exp_seeds, "number of paired seeds");
  exp_cmd->add_option("--out", exp_out, "output directory");
  exp_cmd->add_option("--config", exp_config, "key=value overrides");

  // report
  auto* report_cmd = app.add_subcommand("report", "summarize a run directory");
  std::string report_run;
  report_cmd->add_option("--run", report_run)->required();

  try {
    app.parse(argc, argv);
    if (compile_cmd->parsed())
      return cmd_compile(constraint_path, dimacs, order_flag, out_path, budget);
    if (wmc_cmd->parsed()) return cmd_wmc(wmc_path, wmc_dimacs, wmc_theta);
    if (sl_cmd->parsed()) return cmd_sl(sl_path, sl_dimacs, sl_theta, sl_fuzzy);
    if (train_cmd->parsed())
      return cmd_train(train_config, train_out, seed, app.count("--seed") > 0);
    if (sample_cmd->parsed())
      return cmd_sample(sample_run, sample_n, sample_code, sample_reject, seed);
    if (render_cmd->parsed()) return cmd_render(render_path, annotate);
    if (exp_cmd->parsed()) return cmd_experiment(exp_name, seed, exp_seeds, exp_out, exp_config);
    if (report_cmd->parsed()) return cmd_report(report_run);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << " (line " << e.line() << ", column " << e.column()
              << ")\n";
    return 1;
  } catch (const CompileBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
