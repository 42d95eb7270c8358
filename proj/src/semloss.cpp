#include "semgen/semloss.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace semgen {

namespace {
constexpr double kUnderflow = 1e-300;
}

LossValue semantic_loss(const Circuit& c, std::span<const double> theta) {
  WmcGradient wg = c.wmc_with_gradient(theta);
  if (!(wg.value > kUnderflow)) {
    // linear pass underflowed (or the mass really is zero): decide in log space
    WmcGradient lg = c.log_wmc_with_gradient(theta);
    if (lg.value == -std::numeric_limits<double>::infinity()) throw InfiniteLossError();
    LossValue out;
    out.value = -lg.value;
    out.gradient.resize(lg.gradient.size());
    for (std::size_t i = 0; i < lg.gradient.size(); ++i) out.gradient[i] = -lg.gradient[i];
    return out;
  }
  LossValue out;
  out.value = -std::log(wg.value);
  out.gradient.resize(wg.gradient.size());
  for (std::size_t i = 0; i < wg.gradient.size(); ++i)
    out.gradient[i] = -wg.gradient[i] / wg.value;
  return out;
}

LossValue semantic_loss_clamped(const Circuit& c, std::span<const double> theta, double floor) {
  try {
    return semantic_loss(c, theta);
  } catch (const InfiniteLossError&) {
    LossValue out;
    out.value = -std::log(floor);
    out.gradient.assign(theta.size(), 0.0);
    return out;
  }
}

namespace {

double fuzzy_node(const Formula& f, int id, std::span<const double> theta) {
  const Formula::Node& n = f.node(id);
  switch (n.kind) {
    case ExprKind::Var:
      return theta[n.var];
    case ExprKind::Const:
      return n.value ? 1.0 : 0.0;
    case ExprKind::Not:
      return 1.0 - fuzzy_node(f, n.kids[0], theta);
    case ExprKind::And: {
      // n-ary Lukasiewicz T-norm: max(0, sum - (k-1))
      double acc = 1.0;
      for (int k : n.kids) acc = std::max(0.0, acc + fuzzy_node(f, k, theta) - 1.0);
      return acc;
    }
    case ExprKind::Or: {
      double acc = 0.0;
      for (int k : n.kids) acc = std::min(1.0, acc + fuzzy_node(f, k, theta));
      return acc;
    }
    default:
      throw std::invalid_argument(
          "fuzzy evaluation requires an And/Or/Not formula; desugar Implies/Iff/Xor first");
  }
}

}  // namespace

double fuzzy_truth(const Formula& f, std::span<const double> theta) {
  if (static_cast<int>(theta.size()) != f.variable_count())
    throw std::invalid_argument("theta length does not match variable count");
  return fuzzy_node(f, f.root(), theta);
}

double fuzzy_loss(const Formula& f, std::span<const double> theta) {
  const double truth = fuzzy_truth(f, theta);
  if (truth <= 0.0) throw InfiniteLossError();
  return -std::log(truth);
}

double fuzzy_loss_clamped(const Formula& f, std::span<const double> theta, double floor) {
  const double truth = fuzzy_truth(f, theta);
  return -std::log(std::max(truth, floor));
}

Formula build_conditional(const ConditionalSpec& spec) {
  FormulaBuilder fb;
  // register structure variables first, in first-occurrence order across psis
  std::set<std::string> structure_names;
  for (const auto& entry : spec.entries)
    for (const auto& name : entry.constraint.variable_names()) {
      fb.var(name);
      structure_names.insert(name);
    }
  std::set<std::string> code_names;
  for (const auto& entry : spec.entries) {
    if (structure_names.count(entry.code_name))
      throw std::invalid_argument("code variable '" + entry.code_name +
                                  "' collides with a constraint variable");
    if (!code_names.insert(entry.code_name).second)
      throw std::invalid_argument("duplicate code variable '" + entry.code_name + "'");
  }

  // rebuild each psi inside the shared builder
  struct Copier {
    FormulaBuilder& fb;
    const Formula& src;
    int go(int id) {
      const Formula::Node& n = src.node(id);
      switch (n.kind) {
        case ExprKind::Var:
          return fb.var(src.variable_names()[n.var]);
        case ExprKind::Const:
          return fb.constant(n.value);
        case ExprKind::Not:
          return fb.negation(go(n.kids[0]));
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
        case ExprKind::Implies:
          return fb.implies(go(n.kids[0]), go(n.kids[1]));
        case ExprKind::Iff:
          return fb.iff(go(n.kids[0]), go(n.kids[1]));
        case ExprKind::Xor:
          return fb.exclusive_or(go(n.kids[0]), go(n.kids[1]));
      }
      return -1;
    }
  };

  std::vector<int> bindings;
  for (const auto& entry : spec.entries) {
    Copier copier{fb, entry.constraint};
    const int psi = copier.go(entry.constraint.root());
    const int code = fb.var(entry.code_name);
    bindings.push_back(fb.iff(code, psi));
  }
  const int root = fb.conjunction(std::move(bindings));
  return std::move(fb).build(root);
}

LossValue conditional_semantic_loss(const Circuit& c, std::span<const double> theta,
                                    std::span<const int> code_vars,
                                    std::span<const std::uint8_t> code) {
  if (code_vars.size() != code.size())
    throw std::invalid_argument("code length does not match code variable count");
  std::vector<double> clamped(theta.begin(), theta.end());
  for (std::size_t i = 0; i < code_vars.size(); ++i) {
    const int v = code_vars[i];
    if (v < 0 || v >= c.variable_count())
      throw std::out_of_range("code variable index out of range");
    clamped[v] = code[i] ? 1.0 : 0.0;
  }
  LossValue out = semantic_loss(c, clamped);
  for (int v : code_vars) out.gradient[v] = 0.0;
  return out;
}

std::vector<std::pair<std::vector<std::uint8_t>, double>> estimate_code_prior(
    const std::vector<std::vector<std::uint8_t>>& observed_codes) {
  if (observed_codes.empty()) throw std::invalid_argument("no observed codes");
  std::map<std::vector<std::uint8_t>, std::size_t> counts;
  for (const auto& code : observed_codes) ++counts[code];
  std::vector<std::pair<std::vector<std::uint8_t>, double>> prior;
  const double n = static_cast<double>(observed_codes.size());
  for (const auto& [code, count] : counts)
    prior.emplace_back(code, static_cast<double>(count) / n);
  return prior;
}

}  // namespace semgen
