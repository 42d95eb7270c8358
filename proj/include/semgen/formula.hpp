#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace semgen {

// Total truth assignment, indexed by a formula's variable table.
using Assignment = std::vector<std::uint8_t>;

enum class ExprKind : std::uint8_t { Var, Const, Not, And, Or, Implies, Iff, Xor };

// Controls how Implies/Iff/Xor are rewritten into And/Or/Not.
// The two styles are logically equivalent but syntactically different,
// which is exactly what the fuzzy-logic baseline is sensitive to.
enum class DesugarStyle { Cnf, Dnf };

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, int line, int column)
      : std::runtime_error(std::move(message)), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// Immutable propositional formula: an expression tree stored in an arena,
// plus an ordered variable table (first-occurrence order). Shareable across
// threads once built.
class Formula {
 public:
  struct Node {
    ExprKind kind;
    int var = -1;               // Var
    bool value = false;         // Const
    std::vector<int> kids;      // Not: 1, Implies/Iff/Xor: 2, And/Or: >= 1
  };

  int variable_count() const { return static_cast<int>(var_names_.size()); }
  const std::vector<std::string>& variable_names() const { return var_names_; }
  int variable_index(const std::string& name) const;  // -1 if absent

  int root() const { return root_; }
  const Node& node(int id) const { return nodes_[id]; }
  std::size_t node_count() const { return nodes_.size(); }

  bool evaluate(const Assignment& a) const;

  // All satisfying assignments in lexicographic order (variable 0 is the most
  // significant position). Ground-truth oracle; guarded at 24 variables.
  std::vector<Assignment> enumerate_models() const;

  std::string pretty_print() const;

  Formula desugar(DesugarStyle style) const;

  bool structurally_equal(const Formula& other) const;

 private:
  friend class FormulaBuilder;
  std::vector<Node> nodes_;
  int root_ = -1;
  std::vector<std::string> var_names_;
  std::unordered_map<std::string, int> var_index_;

  bool eval_node(int id, const Assignment& a) const;
  void print_node(int id, std::string& out) const;
};

// Grows an arena of expression nodes; variables are indexed in first-creation
// order. and_/or_ with a single child collapse to the child so parser output
// and pretty-printed round trips stay structurally stable.
class FormulaBuilder {
 public:
  int var(const std::string& name);
  int constant(bool value);
  int negation(int a);
  int conjunction(std::vector<int> kids);  // empty -> constant true
  int disjunction(std::vector<int> kids);  // empty -> constant false
  int implies(int a, int b);
  int iff(int a, int b);
  int exclusive_or(int a, int b);

  // implication "if a then one of alternatives" used all over the grid module
  int implies_any(int a, std::vector<int> alternatives);

  Formula build(int root) &&;

 private:
  std::vector<Formula::Node> nodes_;
  std::vector<std::string> var_names_;
  std::unordered_map<std::string, int> var_index_;

  int push(Formula::Node n);
};

// Constraint DSL front end. Grammar (tightest first):
//   `!` not, `&` and, `|` or, `^` xor, `->` implies, `<->` iff,
//   parentheses, literals `true`/`false`, identifiers [A-Za-z_][A-Za-z0-9_]*,
//   `#` starts a line comment.
Formula parse_dsl(const std::string& text);

// DIMACS CNF: "p cnf V C" header, clauses terminated by 0.
// Variable i is named "v<i>" and indexed i-1 (all declared variables are part
// of the formula's universe, appearing or not).
Formula parse_dimacs(const std::string& text);

}  // namespace semgen
