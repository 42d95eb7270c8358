#include "semgen/trainer.hpp"

#include <algorithm>
#include <cassert>
#include <cstring>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace semgen {

namespace {
constexpr double kProbClamp = 1e-7;

double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}
}  // namespace

double gan_value(std::span<const double> d_real, std::span<const double> d_fake) {
  if (d_real.empty() || d_fake.empty())
    throw std::invalid_argument("gan_value needs non-empty probability vectors");
  for (double p : d_real)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("d_real entry outside [0,1]");
  for (double p : d_fake)
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("d_fake entry outside [0,1]");
  double real_term = 0.0;
  for (double p : d_real) real_term += std::log(clamp_prob(p));
  double fake_term = 0.0;
  for (double p : d_fake) fake_term += std::log1p(-clamp_prob(p));
  return real_term / static_cast<double>(d_real.size()) +
         fake_term / static_cast<double>(d_fake.size());
}

double can_objective(double gan_term, double sl_term, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  return gan_term + lambda * sl_term;
}

double lambda_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.bootstrap_epochs) return 0.0;
  if (cfg.lambda_ramp <= 0) return cfg.lambda_max;
  const double ramp =
      static_cast<double>(epoch - cfg.bootstrap_epochs) / static_cast<double>(cfg.lambda_ramp);
  return cfg.lambda_max * std::min(1.0, ramp);
}

// ---------------------------------------------------------------------------
// report io

bool EpochRecord::operator==(const EpochRecord& o) const {
  auto bits = [](double x) {
    std::uint64_t u;
    std::memcpy(&u, &x, sizeof u);
    return u;
  };
  return epoch == o.epoch && bits(d_loss) == bits(o.d_loss) && bits(g_loss) == bits(o.g_loss) &&
         bits(sl_value) == bits(o.sl_value) && bits(probe_validity) == bits(o.probe_validity) &&
         bits(lambda) == bits(o.lambda);
}

void TrainReport::write_csv(std::ostream& out) const {
  out << "epoch,d_loss,g_loss,sl_value,probe_validity,lambda\n";
  char buf[256];
  for (const EpochRecord& r : epochs) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.d_loss,
                  r.g_loss, r.sl_value, r.probe_validity, r.lambda);
    out << buf;
  }
}

TrainReport TrainReport::read_csv(std::istream& in) {
  TrainReport report;
  std::string line;
  if (!std::getline(in, line) || line != "epoch,d_loss,g_loss,sl_value,probe_validity,lambda")
    throw std::runtime_error("not a train-report CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    if (!(ls >> r.epoch >> r.d_loss >> r.g_loss >> r.sl_value >> r.probe_validity >> r.lambda))
      throw std::runtime_error("bad train-report row: " + line);
    report.epochs.push_back(r);
  }
  return report;
}

// ---------------------------------------------------------------------------
// sampling

namespace {

Array latent_batch(const GeneratorSpec& spec, int n,
                   const std::optional<std::vector<std::uint8_t>>& code,
                   const std::vector<std::vector<std::uint8_t>>* per_row_codes, Rng& rng) {
  Array z(n, spec.input_dim());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < spec.latent_dim; ++j) z.at(i, j) = rng.normal();
    const std::vector<std::uint8_t>* bits = nullptr;
    if (per_row_codes) bits = &(*per_row_codes)[i];
    else if (code) bits = &*code;
    if (spec.code_dim > 0) {
      if (!bits || static_cast<int>(bits->size()) != spec.code_dim)
        throw std::invalid_argument("code length does not match the generator's code dimension");
      for (int j = 0; j < spec.code_dim; ++j)
        z.at(i, spec.latent_dim + j) = (*bits)[j] ? 1.0 : 0.0;
    } else if (bits && !bits->empty()) {
      throw std::invalid_argument("code given to an unconditional generator");
    }
  }
  return z;
}

Assignment sample_row(const Array& thetas, int row, const GeneratorSpec& spec, Rng& rng) {
  Assignment bits(spec.output_dim(), 0);
  std::vector<double> weights(spec.group_size);
  for (int g = 0; g < spec.groups; ++g) {
    for (int j = 0; j < spec.group_size; ++j)
      weights[j] = thetas.at(row, g * spec.group_size + j);
    const int pick = rng.categorical(weights);
    bits[g * spec.group_size + pick] = 1;
  }
  return bits;
}

std::vector<std::uint8_t> draw_code(
    const std::vector<std::pair<std::vector<std::uint8_t>, double>>& prior, Rng& rng) {
  std::vector<double> weights;
  weights.reserve(prior.size());
  for (const auto& [code, p] : prior) weights.push_back(p);
  return prior[rng.categorical(weights)].first;
}

}  // namespace

Array sample_thetas(const Mlp& generator, const GeneratorSpec& spec, int n,
                    std::optional<std::vector<std::uint8_t>> code, Rng& rng) {
  const Array z = latent_batch(spec, n, code, nullptr, rng);
  return generator.forward(z);
}

std::vector<Assignment> sample(const Mlp& generator, const GeneratorSpec& spec, int n,
                               std::optional<std::vector<std::uint8_t>> code, Rng& rng) {
  std::vector<Assignment> out;
  if (n <= 0) return out;
  const Array thetas = sample_thetas(generator, spec, n, std::move(code), rng);
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample_row(thetas, i, spec, rng));
  return out;
}

RejectionResult rejection_sample(const Mlp& generator, const GeneratorSpec& spec,
                                 const Circuit& circuit, int n, std::uint64_t max_attempts,
                                 Rng& rng) {
  if (max_attempts < static_cast<std::uint64_t>(n))
    throw std::invalid_argument("max_attempts must be at least n");
  RejectionResult result;
  while (static_cast<int>(result.accepted.size()) < n && result.attempts < max_attempts) {
    const Array theta = sample_thetas(generator, spec, 1, std::nullopt, rng);
    Assignment bits = sample_row(theta, 0, spec, rng);
    ++result.attempts;
    if (circuit.check_validity(bits)) result.accepted.push_back(std::move(bits));
  }
  result.exhausted = static_cast<int>(result.accepted.size()) < n;
  return result;
}

// ---------------------------------------------------------------------------
// training

namespace {

// structure bits (+ code bits) -> full circuit assignment
Assignment assemble_assignment(const Assignment& structure, const ConstraintBinding& binding,
                               std::span<const std::uint8_t> code) {
  const int b = binding.circuit->variable_count();
  Assignment full(b, 0);
  if (binding.theta_map.empty()) {
    for (std::size_t j = 0; j < structure.size(); ++j) full[j] = structure[j];
  } else {
    for (std::size_t j = 0; j < structure.size(); ++j)
      if (binding.theta_map[j] >= 0) full[binding.theta_map[j]] = structure[j];
  }
  for (std::size_t k = 0; k < binding.code_vars.size(); ++k)
    full[binding.code_vars[k]] = code[k];
  return full;
}

struct ProbeStats {
  double validity = 0.0;
};

ProbeStats run_probe(const Mlp& generator, const TrainConfig& cfg,
                     const ConstraintBinding& binding, int epoch) {
  ProbeStats stats;
  if (binding.embedding != nullptr || binding.circuit == nullptr) {
    // embedded constraints are scored by the caller's oracle, not the circuit
    stats.validity = std::numeric_limits<double>::quiet_NaN();
    return stats;
  }
  // probe draws come from their own stream so probe_size cannot perturb the
  // training trajectory
  Rng rng(cfg.seed ^ (0x5eed5eed12345ull + static_cast<std::uint64_t>(epoch) * 0x9e3779b9ull));
  const bool conditional = cfg.gen.code_dim > 0;
  int valid = 0;
  for (int i = 0; i < cfg.probe_size; ++i) {
    std::vector<std::uint8_t> code;
    std::optional<std::vector<std::uint8_t>> code_opt;
    if (conditional) {
      code = draw_code(cfg.code_prior, rng);
      code_opt = code;
    }
    const Array theta = sample_thetas(generator, cfg.gen, 1, code_opt, rng);
    const Assignment bits = sample_row(theta, 0, cfg.gen, rng);
    valid += binding.circuit->check_validity(assemble_assignment(bits, binding, code));
  }
  stats.validity = static_cast<double>(valid) / static_cast<double>(cfg.probe_size);
  return stats;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const std::vector<Assignment>& data,
                  const ConstraintBinding& binding) {
  if (data.empty()) throw std::invalid_argument("training data is empty");
  if (cfg.batch < 2) throw std::invalid_argument("batch size must be at least 2");
  if (cfg.lambda_max < 0.0) throw std::invalid_argument("lambda_max must be non-negative");
  if (cfg.epochs > 0 && cfg.lambda_max > 0.0 &&
      cfg.bootstrap_epochs + cfg.lambda_ramp > cfg.epochs)
    throw std::invalid_argument("bootstrap plus ramp exceeds the epoch budget");
  if (cfg.lambda_max > 0.0 && binding.circuit == nullptr)
    throw std::invalid_argument("a constraint circuit is required when lambda_max > 0");
  const int out_dim = cfg.gen.output_dim();
  if (out_dim <= 0 || cfg.gen.group_size <= 0)
    throw std::invalid_argument("generator output groups are not configured");
  for (const Assignment& row : data)
    if (static_cast<int>(row.size()) != out_dim)
      throw std::invalid_argument("data row width does not match the generator output");
  const bool conditional = cfg.gen.code_dim > 0;
  if (conditional && cfg.code_prior.empty())
    throw std::invalid_argument("conditional training needs a code prior");
  if (conditional &&
      binding.code_vars.size() != static_cast<std::size_t>(cfg.gen.code_dim))
    throw std::invalid_argument("binding code_vars must match the code dimension");

  Rng rng(cfg.seed);

  MlpSpec gen_spec;
  gen_spec.sizes.push_back(cfg.gen.input_dim());
  for (int h : cfg.gen.hidden) gen_spec.sizes.push_back(h);
  gen_spec.sizes.push_back(out_dim);
  gen_spec.acts.assign(gen_spec.sizes.size() - 1, Activation::Tanh);
  gen_spec.acts.back() = Activation::GroupSoftmax;
  gen_spec.softmax_group = cfg.gen.group_size;
  gen_spec.logit_scale = cfg.gen.logit_scale;

  MlpSpec disc_spec;
  disc_spec.sizes.push_back(out_dim);
  for (int h : cfg.disc_hidden) disc_spec.sizes.push_back(h);
  disc_spec.sizes.push_back(1);
  disc_spec.acts.assign(disc_spec.sizes.size() - 1, Activation::Tanh);
  disc_spec.acts.back() = Activation::Sigmoid;

  TrainResult result;
  result.generator = Mlp::init(gen_spec, rng);
  result.discriminator = Mlp::init(disc_spec, rng);
  if (cfg.epochs == 0) return result;

  Adam adam_g(cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2);
  Adam adam_d(cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2);

  auto real_batch = [&](int n) {
    Array x(n, out_dim);
    for (int i = 0; i < n; ++i) {
      const Assignment& row = data[rng.uniform_int(data.size())];
      for (int j = 0; j < out_dim; ++j) x.at(i, j) = row[j];
    }
    return x;
  };

  auto code_batch = [&](int n) {
    std::vector<std::vector<std::uint8_t>> codes(n);
    for (auto& c : codes) c = draw_code(cfg.code_prior, rng);
    return codes;
  };

  auto codes_to_array = [&](const std::vector<std::vector<std::uint8_t>>& codes) {
    Array a(static_cast<int>(codes.size()), cfg.gen.code_dim);
    for (std::size_t i = 0; i < codes.size(); ++i)
      for (int j = 0; j < cfg.gen.code_dim; ++j)
        a.at(static_cast<int>(i), j) = codes[i][j] ? 1.0 : 0.0;
    return a;
  };

  result.report.epochs.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lambda = lambda_schedule(epoch, cfg);

    // discriminator ascent on Eq.-1: real rows up, detached theta(z) down
    double d_loss = 0.0;
    for (int step = 0; step < cfg.d_steps; ++step) {
      std::vector<std::vector<std::uint8_t>> codes;
      const std::vector<std::vector<std::uint8_t>>* code_rows = nullptr;
      if (conditional) {
        codes = code_batch(cfg.batch);
        code_rows = &codes;
      }
      const Array z = latent_batch(cfg.gen, cfg.batch, std::nullopt, code_rows, rng);
      const Array fake_theta = result.generator.forward(z);

      Graph g;
      std::vector<int> d_params;
      const int real_in = g.input(real_batch(cfg.batch));
      const int fake_in = g.input(fake_theta);
      const int d_real = result.discriminator.build(g, real_in, &d_params);
      std::vector<int> d_params_fake;
      const int d_fake = result.discriminator.build(g, fake_in, &d_params_fake);
      const int real_term = g.mean(g.log_op(g.clamp(d_real, kProbClamp, 1.0 - kProbClamp)));
      const int fake_term = g.mean(g.log_op(
          g.clamp(g.scale_shift(-1.0, d_fake, 1.0), kProbClamp, 1.0 - kProbClamp)));
      const int loss = g.affine(-1.0, real_term, -1.0, fake_term);
      g.backward(loss);
      d_loss = g.value(loss).at(0, 0);

      // the two discriminator copies share parameters: fold both gradients
      std::vector<Array> combined(d_params.size());
      for (std::size_t p = 0; p < d_params.size(); ++p) {
        combined[p] = g.grad(d_params[p]);
        const Array& other = g.grad(d_params_fake[p]);
        for (std::size_t i = 0; i < combined[p].size(); ++i) combined[p][i] += other[i];
      }
      std::vector<const Array*> grads;
      grads.reserve(combined.size());
      for (const Array& a : combined) grads.push_back(&a);
      adam_d.step(result.discriminator.parameters(), grads);
    }

    // generator descent: non-saturating GAN term plus lambda * SL
    double g_loss = 0.0;
    double sl_value = std::numeric_limits<double>::quiet_NaN();
    for (int step = 0; step < cfg.g_steps; ++step) {
      std::vector<std::vector<std::uint8_t>> codes;
      const std::vector<std::vector<std::uint8_t>>* code_rows = nullptr;
      if (conditional) {
        codes = code_batch(cfg.batch);
        code_rows = &codes;
      }
      const Array z = latent_batch(cfg.gen, cfg.batch, std::nullopt, code_rows, rng);

      Graph g;
      const int z_in = g.input(z);
      std::vector<int> g_params;
      const int theta = result.generator.build(g, z_in, &g_params);
      std::vector<int> d_params;
      const int d_fake = result.discriminator.build(g, theta, &d_params);
      const int gan_term = g.scale_shift(
          -1.0, g.mean(g.log_op(g.clamp(d_fake, kProbClamp, 1.0 - kProbClamp))), 0.0);

      int loss = gan_term;
      if (lambda > 0.0) {
        int sl_input = theta;
        Graph::SlOptions sl_opts;
        sl_opts.circuit = binding.circuit;
        if (binding.embedding != nullptr) {
          sl_input = binding.embedding->build(g, theta, nullptr);
          sl_opts.theta_map = binding.embedding_theta_map;
        } else {
          sl_opts.theta_map = binding.theta_map;
        }
        if (conditional) {
          sl_opts.code_vars = binding.code_vars;
          sl_opts.code_node = g.input(codes_to_array(codes));
        }
        const int sl_mean = g.mean(g.semantic_loss_op(sl_input, sl_opts));
        sl_value = g.value(sl_mean).at(0, 0);
        loss = g.affine(1.0, gan_term, lambda, sl_mean);
      }
      g.backward(loss);
      g_loss = g.value(loss).at(0, 0);

      std::vector<const Array*> grads;
      grads.reserve(g_params.size());
      for (int p : g_params) grads.push_back(&g.grad(p));
      adam_g.step(result.generator.parameters(), grads);
    }

    if (!std::isfinite(d_loss) || !std::isfinite(g_loss))
      throw DivergenceError(epoch, "non-finite loss");

    const ProbeStats probe = run_probe(result.generator, cfg, binding, epoch);

    EpochRecord record;
    record.epoch = epoch;
    record.d_loss = d_loss;
    record.g_loss = g_loss;
    record.sl_value = sl_value;
    record.probe_validity = probe.validity;
    record.lambda = lambda;
    result.report.epochs.push_back(record);
  }
  return result;
}

// ---------------------------------------------------------------------------
// key=value config

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv.entries.emplace_back(key, value);
  }
  return kv;
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  return fallback;
}

bool KeyValueConfig::has(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return true;
  return false;
}

long KeyValueConfig::get_int(const std::string& key, long fallback) const {
  const std::string v = get(key);
  return v.empty() ? fallback : std::stol(v);
}

double KeyValueConfig::get_real(const std::string& key, double fallback) const {
  const std::string v = get(key);
  return v.empty() ? fallback : std::stod(v);
}

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

std::string int_list_to_string(const std::vector<int>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace

TrainConfig train_config_from_kv(const KeyValueConfig& kv) {
  TrainConfig cfg;
  cfg.epochs = static_cast<int>(kv.get_int("epochs", cfg.epochs));
  cfg.bootstrap_epochs = static_cast<int>(kv.get_int("bootstrap_epochs", cfg.bootstrap_epochs));
  cfg.lambda_ramp = static_cast<int>(kv.get_int("lambda_ramp", cfg.lambda_ramp));
  cfg.lambda_max = kv.get_real("lambda_max", cfg.lambda_max);
  cfg.batch = static_cast<int>(kv.get_int("batch", cfg.batch));
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(cfg.seed)));
  cfg.d_steps = static_cast<int>(kv.get_int("d_steps", cfg.d_steps));
  cfg.g_steps = static_cast<int>(kv.get_int("g_steps", cfg.g_steps));
  cfg.probe_size = static_cast<int>(kv.get_int("probe_size", cfg.probe_size));
  cfg.lr_g = kv.get_real("lr_g", cfg.lr_g);
  cfg.lr_d = kv.get_real("lr_d", cfg.lr_d);
  cfg.adam_beta1 = kv.get_real("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = kv.get_real("adam_beta2", cfg.adam_beta2);
  if (kv.has("disc_hidden")) cfg.disc_hidden = parse_int_list(kv.get("disc_hidden"));
  cfg.gen.latent_dim = static_cast<int>(kv.get_int("latent_dim", cfg.gen.latent_dim));
  cfg.gen.code_dim = static_cast<int>(kv.get_int("code_dim", cfg.gen.code_dim));
  if (kv.has("gen_hidden")) cfg.gen.hidden = parse_int_list(kv.get("gen_hidden"));
  cfg.gen.groups = static_cast<int>(kv.get_int("groups", cfg.gen.groups));
  cfg.gen.group_size = static_cast<int>(kv.get_int("group_size", cfg.gen.group_size));
  cfg.gen.logit_scale = kv.get_real("logit_scale", cfg.gen.logit_scale);
  return cfg;
}

void write_train_config(const TrainConfig& cfg, std::ostream& out) {
  out << "epochs=" << cfg.epochs << "\n";
  out << "bootstrap_epochs=" << cfg.bootstrap_epochs << "\n";
  out << "lambda_ramp=" << cfg.lambda_ramp << "\n";
  out << "lambda_max=" << cfg.lambda_max << "\n";
  out << "batch=" << cfg.batch << "\n";
  out << "seed=" << cfg.seed << "\n";
  out << "d_steps=" << cfg.d_steps << "\n";
  out << "g_steps=" << cfg.g_steps << "\n";
  out << "probe_size=" << cfg.probe_size << "\n";
  out << "lr_g=" << cfg.lr_g << "\n";
  out << "lr_d=" << cfg.lr_d << "\n";
  out << "adam_beta1=" << cfg.adam_beta1 << "\n";
  out << "adam_beta2=" << cfg.adam_beta2 << "\n";
  out << "disc_hidden=" << int_list_to_string(cfg.disc_hidden) << "\n";
  out << "latent_dim=" << cfg.gen.latent_dim << "\n";
  out << "code_dim=" << cfg.gen.code_dim << "\n";
  out << "gen_hidden=" << int_list_to_string(cfg.gen.hidden) << "\n";
  out << "groups=" << cfg.gen.groups << "\n";
  out << "group_size=" << cfg.gen.group_size << "\n";
}

}  // namespace semgen
