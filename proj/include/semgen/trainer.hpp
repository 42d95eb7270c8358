#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semgen/autodiff.hpp"
#include "semgen/circuit.hpp"
#include "semgen/rng.hpp"
#include "semgen/semloss.hpp"

namespace semgen {

// Stochastic categorical generator: z (plus optional code bits) -> one softmax
// group of size group_size per output cell.
struct GeneratorSpec {
  int latent_dim = 8;
  int code_dim = 0;               // 0 = unconditional
  std::vector<int> hidden{64};
  int groups = 0;                 // output cells
  int group_size = 0;             // tiles per cell
  double logit_scale = 1.0;       // sharpens the output categoricals

  int output_dim() const { return groups * group_size; }
  int input_dim() const { return latent_dim + code_dim; }
};

// Binding between generator outputs and a constraint circuit. theta_map (when
// non-empty) routes generator output column j to circuit variable
// theta_map[j]; code_vars are the circuit positions of the conditional code
// bits. An optional frozen embedding network is applied to theta before the
// loss (the reachability composition).
struct ConstraintBinding {
  const Circuit* circuit = nullptr;
  std::vector<int> theta_map;
  std::vector<int> code_vars;
  const Mlp* embedding = nullptr;            // phi, frozen during training
  std::vector<int> embedding_theta_map;      // map on phi outputs
};

struct TrainConfig {
  int epochs = 200;
  int bootstrap_epochs = 100;   // SL weight is zero before this epoch
  int lambda_ramp = 100;        // epochs of linear growth after the bootstrap
  double lambda_max = 0.2;
  int batch = 64;
  std::uint64_t seed = 1;
  int d_steps = 1;
  int g_steps = 1;
  int probe_size = 256;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::vector<int> disc_hidden{64};
  GeneratorSpec gen;
  // prior over conditional codes, sampled during training (frequency table)
  std::vector<std::pair<std::vector<std::uint8_t>, double>> code_prior;
};

struct EpochRecord {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double sl_value = 0.0;  // NaN on epochs where the SL term was not active
  double probe_validity = 0.0;
  double lambda = 0.0;

  // bit-level comparison: the determinism contract is bit-identical reports,
  // and sl_value can legitimately be NaN
  bool operator==(const EpochRecord& o) const;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  void write_csv(std::ostream& out) const;
  static TrainReport read_csv(std::istream& in);
  bool operator==(const TrainReport&) const = default;
};

struct TrainResult {
  Mlp generator;
  Mlp discriminator;
  TrainReport report;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Eq.-1 value function on clamped discriminator outputs:
// mean log d_real + mean log(1 - d_fake).
double gan_value(std::span<const double> d_real, std::span<const double> d_fake);

// gan_term + lambda * sl_term
double can_objective(double gan_term, double sl_term, double lambda);

// 0 during the bootstrap, then linear from 0 to lambda_max over the ramp,
// then flat at lambda_max
double lambda_schedule(int epoch, const TrainConfig& cfg);

// Alternating adversarial training on rows of `data` (each row a Boolean
// structure encoding). The discriminator sees real rows and the generator's
// soft theta; the generator minimizes the non-saturating loss plus
// lambda * SL. Deterministic for a fixed config.
TrainResult train(const TrainConfig& cfg, const std::vector<Assignment>& data,
                  const ConstraintBinding& binding);

// One discrete structure per row: z ~ N(0, I), optional code bits appended,
// forward pass, then an independent categorical draw per softmax group. The
// constraint circuit plays no part here.
std::vector<Assignment> sample(const Mlp& generator, const GeneratorSpec& spec, int n,
                               std::optional<std::vector<std::uint8_t>> code, Rng& rng);

// generator marginals theta(z) for a batch of fresh latents
Array sample_thetas(const Mlp& generator, const GeneratorSpec& spec, int n,
                    std::optional<std::vector<std::uint8_t>> code, Rng& rng);

struct RejectionResult {
  std::vector<Assignment> accepted;
  std::uint64_t attempts = 0;
  bool exhausted = false;
};

// Draws until n samples pass check_validity or max_attempts is spent.
RejectionResult rejection_sample(const Mlp& generator, const GeneratorSpec& spec,
                                 const Circuit& circuit, int n, std::uint64_t max_attempts,
                                 Rng& rng);

// flat key=value config file (one pair per line, '#' comments)
struct KeyValueConfig {
  std::vector<std::pair<std::string, std::string>> entries;

  static KeyValueConfig parse(std::istream& in);
  std::string get(const std::string& key, const std::string& fallback = "") const;
  bool has(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  double get_real(const std::string& key, double fallback) const;
};

TrainConfig train_config_from_kv(const KeyValueConfig& kv);
void write_train_config(const TrainConfig& cfg, std::ostream& out);

}  // namespace semgen
