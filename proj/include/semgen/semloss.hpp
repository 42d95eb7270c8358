#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semgen/circuit.hpp"
#include "semgen/formula.hpp"

namespace semgen {

// Raised when a loss is exactly +infinity: all probability mass sits on
// infeasible configurations. Training code avoids it by clamping; analysis
// code is expected to catch it.
class InfiniteLossError : public std::runtime_error {
 public:
  InfiniteLossError() : std::runtime_error("all mass on infeasible configurations") {}
};

struct LossValue {
  double value = 0.0;              // -ln(wmc), in nats, >= 0
  std::vector<double> gradient;    // d loss / d theta_i, length b
};

// Exact semantic loss -ln(WMC(theta)) and its gradient. Throws
// InfiniteLossError when the WMC is exactly zero. Falls back to the log-space
// evaluation when the linear pass underflows (wmc < 1e-300).
LossValue semantic_loss(const Circuit& c, std::span<const double> theta);

// Training variant: wmc is clamped to at least `floor` before the log, so the
// value stays finite; the gradient is zero in the clamped regime.
LossValue semantic_loss_clamped(const Circuit& c, std::span<const double> theta,
                                double floor = 1e-30);

// Lukasiewicz truth value computed compositionally over an And/Or/Not tree:
//   T(a,b) = max(0, a+b-1),  S(a,b) = min(1, a+b),  N(a) = 1-a.
// The result depends on the syntactic encoding; that sensitivity is the point
// of the comparison with the semantic loss. Throws std::invalid_argument on
// Implies/Iff/Xor nodes (desugar first).
double fuzzy_truth(const Formula& f, std::span<const double> theta);

// -ln of the fuzzy truth value; throws InfiniteLossError at truth 0.
double fuzzy_loss(const Formula& f, std::span<const double> theta);
double fuzzy_loss_clamped(const Formula& f, std::span<const double> theta,
                          double floor = 1e-30);

// One switchable property: a fresh code variable logically bound to a
// sub-constraint.
struct ConditionalSpec {
  struct Entry {
    std::string code_name;
    Formula constraint;
  };
  std::vector<Entry> entries;
  // empirical prior over code vectors (frequency table); rows are code bit
  // patterns, weights sum to 1
  std::vector<std::pair<std::vector<std::uint8_t>, double>> prior;
};

// Builds the conjunction of (c_i <-> psi_i) over the union variable set.
// Structure variables keep their first-occurrence order across the psi_i;
// code variables are appended after them. Throws std::invalid_argument if a
// code name collides with a constraint variable or another code.
Formula build_conditional(const ConditionalSpec& spec);

// Semantic loss with the code variables clamped to the given bits. The
// returned gradient has length b with zeros at the code positions.
LossValue conditional_semantic_loss(const Circuit& c, std::span<const double> theta,
                                    std::span<const int> code_vars,
                                    std::span<const std::uint8_t> code);

// Empirical frequency table over code vectors observed in a dataset.
std::vector<std::pair<std::vector<std::uint8_t>, double>> estimate_code_prior(
    const std::vector<std::vector<std::uint8_t>>& observed_codes);

}  // namespace semgen
