#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "semgen/formula.hpp"

namespace semgen {

using BigInt = boost::multiprecision::cpp_int;

// Thrown when compilation exceeds the configured node budget.
class CompileBudgetError : public std::runtime_error {
 public:
  explicit CompileBudgetError(std::size_t budget)
      : std::runtime_error("compilation blew the node budget of " + std::to_string(budget) +
                           " nodes"),
        budget_(budget) {}
  std::size_t budget() const { return budget_; }

 private:
  std::size_t budget_;
};

struct CompileOptions {
  // permutation of 0..b-1; empty means the formula's own first-occurrence order
  std::vector<int> order;
  std::size_t node_budget = 50'000'000;
};

// Counters filled by the evaluation passes; used by tests to pin down the
// one-visit-per-node traversal contract.
struct TraversalStats {
  std::uint64_t node_visits = 0;
};

struct WmcGradient {
  double value = 0.0;
  std::vector<double> gradient;  // d wmc / d theta_i, length b
};

// Reduced ordered decision diagram over b variables, canonical under a fixed
// variable order. Node ids 0 and 1 are the false/true terminals; decision
// nodes follow in topological order (children before parents), numbered by a
// deterministic depth-first walk so logically equivalent formulas compile to
// bit-identical circuits. Immutable after compile; all queries are pure.
class Circuit {
 public:
  static constexpr std::uint32_t kFalse = 0;
  static constexpr std::uint32_t kTrue = 1;

  struct Node {
    std::int32_t var;
    std::uint32_t lo;
    std::uint32_t hi;
  };

  int variable_count() const { return var_count_; }
  const std::vector<int>& order() const { return order_; }
  std::uint32_t root() const { return root_; }

  // decision nodes only (terminals excluded)
  std::size_t node_count() const { return nodes_.size() - 2; }
  const Node& node(std::uint32_t id) const { return nodes_[id]; }

  // longest root-to-terminal path, in decision nodes
  int depth() const;

  // number of satisfying assignments over all b variables
  BigInt model_count() const;

  // Eq-style sum over models: one bottom-up pass, each decision node visited
  // exactly once; variables skipped along an edge sum out (factor 1).
  double wmc(std::span<const double> theta, TraversalStats* stats = nullptr) const;

  // natural log of the WMC, usable when the linear-space value underflows
  double log_wmc(std::span<const double> theta) const;

  // exact dWMC/dtheta in one forward + one reverse pass
  WmcGradient wmc_with_gradient(std::span<const double> theta,
                                TraversalStats* stats = nullptr) const;

  // log-space twin: returns log(wmc) and gradient/wmc (= d log wmc / d theta)
  WmcGradient log_wmc_with_gradient(std::span<const double> theta) const;

  Circuit condition(int var, bool value) const;

  bool check_validity(std::span<const std::uint8_t> assignment) const;

  // total number of wmc / gradient / validity evaluations ever run on this
  // circuit; lets callers prove a code path never consulted the circuit
  std::uint64_t eval_count() const { return eval_calls_.load(std::memory_order_relaxed); }

  void dump(std::ostream& out) const;
  static Circuit load(std::istream& in);

  bool operator==(const Circuit& other) const;

  Circuit();  // constant-false circuit over zero variables
  Circuit(const Circuit& other);
  Circuit& operator=(const Circuit& other);
  Circuit(Circuit&& other) noexcept;
  Circuit& operator=(Circuit&& other) noexcept;
  ~Circuit() = default;

 private:
  friend class BddBuilder;

  int position(std::uint32_t id) const {
    return id < 2 ? var_count_ : pos_[nodes_[id].var];
  }

  std::vector<Node> nodes_;      // [0]=false terminal, [1]=true terminal
  std::uint32_t root_ = kFalse;
  int var_count_ = 0;
  std::vector<int> order_;  // order_[k] = variable at position k
  std::vector<int> pos_;    // pos_[v] = position of variable v
  mutable std::atomic<std::uint64_t> eval_calls_{0};
};

Circuit compile(const Formula& f, const CompileOptions& options = {});

}  // namespace semgen
