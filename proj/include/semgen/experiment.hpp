#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "semgen/gridworld.hpp"
#include "semgen/semloss.hpp"
#include "semgen/trainer.hpp"

namespace semgen {

// Every experiment trains a GAN (lambda = 0) and a CAN (lambda = lambda_max)
// on the same data with the same seed, then scores both the same way.

// --- xor-toy: two one-hot cells that must differ ---------------------------

Formula xor_toy_constraint();
std::vector<Assignment> xor_toy_data(int n, double corruption, std::uint64_t seed);

struct XorToyOptions {
  int data_size = 2000;
  double corruption = 0.10;
  int epochs = 1400;
  int bootstrap = 50;
  int ramp = 50;
  double lambda_max = 1.0;
  int batch = 64;
  int probe_size = 256;
};

struct XorToyOutcome {
  double gan_validity = 0.0;
  double can_validity = 0.0;
  TrainReport gan_report;
  TrainReport can_report;
};

XorToyOutcome run_xor_toy(std::uint64_t seed, const XorToyOptions& options);

// --- pipes: grid levels under the local pipe constraint --------------------

struct PipesOptions {
  int height = 8;
  int width = 8;
  int data_size = 1000;
  int epochs = 420;
  int bootstrap = 120;
  int ramp = 120;
  double lambda_max = 0.2;
  int batch = 64;
  int probe_size = 128;
  int eval_samples = 256;
  int latent_dim = 16;
  std::vector<int> gen_hidden{128};
  std::vector<int> disc_hidden{128};
};

struct PipesOutcome {
  Metrics gan;
  Metrics can;
  TrainReport gan_report;
  TrainReport can_report;
  std::vector<GridLevel> gan_samples;  // small sheet for rendering
  std::vector<GridLevel> can_samples;
};

// circuit and data are shared across seeds; compile/synthesize them once
PipesOutcome run_pipes(std::uint64_t seed, const PipesOptions& options, const Circuit& circuit,
                       const Dataset& data);

// --- reachability: playability through the frozen embedding phi ------------

struct ReachabilityOptions {
  int height = 8;
  int width = 8;
  int data_size = 900;
  int phi_data_size = 1500;
  PhiConfig phi;
  int epochs = 420;
  int bootstrap = 120;
  int ramp = 120;
  double lambda_max = 0.25;
  int batch = 64;
  int eval_samples = 256;
  int latent_dim = 16;
  std::vector<int> gen_hidden{128};
  std::vector<int> disc_hidden{128};
};

struct ReachabilityOutcome {
  double phi_accuracy = 0.0;
  double gan_playability = 0.0;  // oracle-checked on sampled levels
  double can_playability = 0.0;
  TrainReport gan_report;
  TrainReport can_report;
  std::vector<GridLevel> gan_samples;
  std::vector<GridLevel> can_samples;
};

ReachabilityOutcome run_reachability(std::uint64_t seed, const ReachabilityOptions& options);

// --- conditional: switchable pipe-placement properties ---------------------

struct ConditionalOptions {
  int height = 8;
  int width = 8;
  int data_size = 1200;
  int epochs = 480;
  int bootstrap = 100;
  int ramp = 100;
  double lambda_max = 0.4;
  int batch = 64;
  int probe_size = 128;
  int eval_samples = 200;  // per code combination
  int latent_dim = 16;
  std::vector<int> gen_hidden{128};
  std::vector<int> disc_hidden{128};
};

struct ConditionalOutcome {
  // per property i: share of valid samples with psi_i true when c_i = 1, and
  // psi_i false when c_i = 0
  std::vector<double> on_rate;
  std::vector<double> off_rate;
  double validity = 0.0;  // base-constraint validity over all samples
  TrainReport can_report;
};

// property i: "some pipe top in the left/right half of the grid"
Formula conditional_property(int height, int width, int which);

ConditionalOutcome run_conditional(std::uint64_t seed, const ConditionalOptions& options);

// --- comparison CSVs --------------------------------------------------------

std::string xor_toy_csv(const std::vector<XorToyOutcome>& outcomes,
                        const std::vector<std::uint64_t>& seeds);
std::string pipes_csv(const std::vector<PipesOutcome>& outcomes,
                      const std::vector<std::uint64_t>& seeds);
std::string reachability_csv(const std::vector<ReachabilityOutcome>& outcomes,
                             const std::vector<std::uint64_t>& seeds);
std::string conditional_csv(const ConditionalOutcome& outcome, std::uint64_t seed);

}  // namespace semgen
