#include "semgen/circuit.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

namespace semgen {

namespace {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

struct TripleKey {
  std::int32_t var;
  std::uint32_t lo;
  std::uint32_t hi;
  bool operator==(const TripleKey&) const = default;
};

struct TripleHash {
  std::size_t operator()(const TripleKey& k) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    h = mix(h, static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.var)));
    h = mix(h, k.lo);
    h = mix(h, k.hi);
    return static_cast<std::size_t>(h);
  }
};

struct PairKey {
  std::uint32_t a;
  std::uint32_t b;
  bool operator==(const PairKey&) const = default;
};

struct PairHash {
  std::size_t operator()(const PairKey& k) const {
    std::uint64_t h = 0x100000001b3ull;
    h = mix(h, k.a);
    h = mix(h, k.b);
    return static_cast<std::size_t>(h);
  }
};

enum class BoolOp { And, Or, Xor };

}  // namespace

// Hash-consing builder. Shared by compile() and Circuit::condition(); never
// exposed, so a finished Circuit has no mutable machinery attached.
class BddBuilder {
 public:
  BddBuilder(int var_count, std::vector<int> order, std::size_t node_budget)
      : var_count_(var_count), order_(std::move(order)), budget_(node_budget) {
    pos_.assign(var_count_, -1);
    for (int k = 0; k < var_count_; ++k) pos_[order_[k]] = k;
    for (int v = 0; v < var_count_; ++v)
      if (pos_[v] < 0) throw std::invalid_argument("variable order is not a permutation");
    nodes_.push_back({-1, Circuit::kFalse, Circuit::kFalse});  // terminal 0
    nodes_.push_back({-1, Circuit::kTrue, Circuit::kTrue});    // terminal 1
  }

  std::uint32_t mk(std::int32_t var, std::uint32_t lo, std::uint32_t hi) {
    if (lo == hi) return lo;
    const TripleKey key{var, lo, hi};
    auto it = unique_.find(key);
    if (it != unique_.end()) return it->second;
    if (nodes_.size() - 2 >= budget_) throw CompileBudgetError(budget_);
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({var, lo, hi});
    unique_.emplace(key, id);
    return id;
  }

  int position(std::uint32_t id) const {
    return id < 2 ? var_count_ : pos_[nodes_[id].var];
  }

  std::uint32_t literal(int var) {
    return mk(var, Circuit::kFalse, Circuit::kTrue);
  }

  std::uint32_t negate(std::uint32_t a) {
    if (a < 2) return a ^ 1u;
    auto it = not_memo_.find(a);
    if (it != not_memo_.end()) return it->second;
    const Circuit::Node n = nodes_[a];
    const std::uint32_t r = mk(n.var, negate(n.lo), negate(n.hi));
    not_memo_.emplace(a, r);
    return r;
  }

  std::uint32_t apply(BoolOp op, std::uint32_t a, std::uint32_t b) {
    switch (op) {
      case BoolOp::And:
        if (a == Circuit::kFalse || b == Circuit::kFalse) return Circuit::kFalse;
        if (a == Circuit::kTrue) return b;
        if (b == Circuit::kTrue) return a;
        if (a == b) return a;
        break;
      case BoolOp::Or:
        if (a == Circuit::kTrue || b == Circuit::kTrue) return Circuit::kTrue;
        if (a == Circuit::kFalse) return b;
        if (b == Circuit::kFalse) return a;
        if (a == b) return a;
        break;
      case BoolOp::Xor:
        if (a == Circuit::kFalse) return b;
        if (b == Circuit::kFalse) return a;
        if (a == Circuit::kTrue) return negate(b);
        if (b == Circuit::kTrue) return negate(a);
        if (a == b) return Circuit::kFalse;
        break;
    }
    if (a > b) std::swap(a, b);  // all three ops are commutative
    auto& memo = op == BoolOp::And ? and_memo_ : op == BoolOp::Or ? or_memo_ : xor_memo_;
    const PairKey key{a, b};
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;

    const int pa = position(a);
    const int pb = position(b);
    const int p = std::min(pa, pb);
    const std::uint32_t a_lo = pa == p ? nodes_[a].lo : a;
    const std::uint32_t a_hi = pa == p ? nodes_[a].hi : a;
    const std::uint32_t b_lo = pb == p ? nodes_[b].lo : b;
    const std::uint32_t b_hi = pb == p ? nodes_[b].hi : b;
    const std::int32_t var = pa == p ? nodes_[a].var : nodes_[b].var;

    const std::uint32_t r =
        mk(var, apply(op, a_lo, b_lo), apply(op, a_hi, b_hi));
    memo.emplace(key, r);
    return r;
  }

  std::uint32_t build_formula(const Formula& f) { return build_node(f, f.root()); }

  // new circuit from an existing one with a variable pinned
  std::uint32_t import_restricted(const Circuit& c, std::uint32_t id, int var, bool value) {
    if (id < 2) return id;
    auto it = import_memo_.find(id);
    if (it != import_memo_.end()) return it->second;
    const Circuit::Node& n = c.node(id);
    std::uint32_t r;
    if (n.var == var) {
      r = import_restricted(c, value ? n.hi : n.lo, var, value);
    } else {
      const std::uint32_t lo = import_restricted(c, n.lo, var, value);
      const std::uint32_t hi = import_restricted(c, n.hi, var, value);
      r = mk(n.var, lo, hi);
    }
    import_memo_.emplace(id, r);
    return r;
  }

  // Compacts the reachable sub-DAG into a canonical Circuit: node ids are
  // assigned by a post-order walk (lo before hi), so equivalent functions
  // yield identical node arrays under the same order.
  Circuit finish(std::uint32_t root) const {
    Circuit c;  // terminals are already in place
    c.var_count_ = var_count_;
    c.order_ = order_;
    c.pos_ = pos_;
    if (root < 2) {
      c.root_ = root;
      return c;
    }
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    remap.reserve(nodes_.size() / 4 + 16);
    // iterative post-order: children before parents, lo before hi
    std::vector<std::pair<std::uint32_t, bool>> stack{{root, false}};
    while (!stack.empty()) {
      auto [id, expanded] = stack.back();
      stack.pop_back();
      if (id < 2 || remap.count(id)) continue;
      if (expanded) {
        const Circuit::Node& n = nodes_[id];
        const auto new_id = static_cast<std::uint32_t>(c.nodes_.size());
        c.nodes_.push_back({n.var, n.lo < 2 ? n.lo : remap.at(n.lo),
                            n.hi < 2 ? n.hi : remap.at(n.hi)});
        remap.emplace(id, new_id);
      } else {
        stack.push_back({id, true});
        stack.push_back({nodes_[id].hi, false});
        stack.push_back({nodes_[id].lo, false});
      }
    }
    c.root_ = remap.at(root);
    return c;
  }

 private:
  // Combining deepest-rooted children first keeps every later apply() from
  // re-walking the part of the accumulated diagram that sits above the new
  // operand; on wide conjunctions of local clauses this is the difference
  // between linear and quadratic compile times.
  std::uint32_t fold_children(const Formula& f, const std::vector<int>& kids, BoolOp op) {
    std::vector<std::uint32_t> built;
    built.reserve(kids.size());
    for (int k : kids) built.push_back(build_node(f, k));
    std::stable_sort(built.begin(), built.end(), [&](std::uint32_t a, std::uint32_t b) {
      return position(a) > position(b);
    });
    std::uint32_t r = op == BoolOp::And ? Circuit::kTrue : Circuit::kFalse;
    for (std::uint32_t b : built) r = apply(op, r, b);
    return r;
  }

  std::uint32_t build_node(const Formula& f, int id) {
    auto it = ast_memo_.find(id);
    if (it != ast_memo_.end()) return it->second;
    const Formula::Node& n = f.node(id);
    std::uint32_t r = Circuit::kFalse;
    switch (n.kind) {
      case ExprKind::Var:
        r = literal(n.var);
        break;
      case ExprKind::Const:
        r = n.value ? Circuit::kTrue : Circuit::kFalse;
        break;
      case ExprKind::Not:
        r = negate(build_node(f, n.kids[0]));
        break;
      case ExprKind::And:
        r = fold_children(f, n.kids, BoolOp::And);
        break;
      case ExprKind::Or:
        r = fold_children(f, n.kids, BoolOp::Or);
        break;
      case ExprKind::Implies:
        r = apply(BoolOp::Or, negate(build_node(f, n.kids[0])), build_node(f, n.kids[1]));
        break;
      case ExprKind::Iff:
        r = negate(apply(BoolOp::Xor, build_node(f, n.kids[0]), build_node(f, n.kids[1])));
        break;
      case ExprKind::Xor:
        r = apply(BoolOp::Xor, build_node(f, n.kids[0]), build_node(f, n.kids[1]));
        break;
    }
    ast_memo_.emplace(id, r);
    return r;
  }

  int var_count_;
  std::vector<int> order_;
  std::vector<int> pos_;
  std::size_t budget_;
  std::vector<Circuit::Node> nodes_;
  std::unordered_map<TripleKey, std::uint32_t, TripleHash> unique_;
  std::unordered_map<PairKey, std::uint32_t, PairHash> and_memo_, or_memo_, xor_memo_;
  std::unordered_map<std::uint32_t, std::uint32_t> not_memo_;
  std::unordered_map<int, std::uint32_t> ast_memo_;
  std::unordered_map<std::uint32_t, std::uint32_t> import_memo_;
};

Circuit compile(const Formula& f, const CompileOptions& options) {
  const int b = f.variable_count();
  std::vector<int> order = options.order;
  if (order.empty()) {
    order.resize(b);
    for (int i = 0; i < b; ++i) order[i] = i;
  }
  if (static_cast<int>(order.size()) != b)
    throw std::invalid_argument("variable order length does not match variable count");
  BddBuilder builder(b, std::move(order), options.node_budget);
  const std::uint32_t root = builder.build_formula(f);
  return builder.finish(root);
}

// ---------------------------------------------------------------------------
// Circuit

Circuit::Circuit() {
  nodes_.push_back({-1, kFalse, kFalse});
  nodes_.push_back({-1, kTrue, kTrue});
}

Circuit::Circuit(const Circuit& other)
    : nodes_(other.nodes_),
      root_(other.root_),
      var_count_(other.var_count_),
      order_(other.order_),
      pos_(other.pos_),
      eval_calls_(other.eval_calls_.load(std::memory_order_relaxed)) {}

Circuit& Circuit::operator=(const Circuit& other) {
  if (this != &other) {
    nodes_ = other.nodes_;
    root_ = other.root_;
    var_count_ = other.var_count_;
    order_ = other.order_;
    pos_ = other.pos_;
    eval_calls_.store(other.eval_calls_.load(std::memory_order_relaxed),
                      std::memory_order_relaxed);
  }
  return *this;
}

Circuit::Circuit(Circuit&& other) noexcept
    : nodes_(std::move(other.nodes_)),
      root_(other.root_),
      var_count_(other.var_count_),
      order_(std::move(other.order_)),
      pos_(std::move(other.pos_)),
      eval_calls_(other.eval_calls_.load(std::memory_order_relaxed)) {}

Circuit& Circuit::operator=(Circuit&& other) noexcept {
  if (this != &other) {
    nodes_ = std::move(other.nodes_);
    root_ = other.root_;
    var_count_ = other.var_count_;
    order_ = std::move(other.order_);
    pos_ = std::move(other.pos_);
    eval_calls_.store(other.eval_calls_.load(std::memory_order_relaxed),
                      std::memory_order_relaxed);
  }
  return *this;
}

bool Circuit::operator==(const Circuit& other) const {
  if (var_count_ != other.var_count_ || order_ != other.order_ || root_ != other.root_ ||
      nodes_.size() != other.nodes_.size())
    return false;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[i];
    if (a.var != b.var || a.lo != b.lo || a.hi != b.hi) return false;
  }
  return true;
}

int Circuit::depth() const {
  std::vector<int> d(nodes_.size(), 0);
  for (std::size_t i = 2; i < nodes_.size(); ++i)
    d[i] = 1 + std::max(d[nodes_[i].lo], d[nodes_[i].hi]);
  return d[root_];
}

BigInt Circuit::model_count() const {
  if (root_ == kFalse) return 0;
  // weight skipped levels by 2 per level; terminals sit at position b
  std::vector<BigInt> count(nodes_.size());
  count[kFalse] = 0;
  count[kTrue] = 1;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const int p = pos_[n.var];
    const BigInt lo = count[n.lo] << (position(n.lo) - p - 1);
    const BigInt hi = count[n.hi] << (position(n.hi) - p - 1);
    count[i] = lo + hi;
  }
  return count[root_] << position(root_);
}

double Circuit::wmc(std::span<const double> theta, TraversalStats* stats) const {
  if (static_cast<int>(theta.size()) != var_count_)
    throw std::invalid_argument("theta length does not match variable count");
  eval_calls_.fetch_add(1, std::memory_order_relaxed);
  std::vector<double> val(nodes_.size());
  val[kFalse] = 0.0;
  val[kTrue] = 1.0;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double t = theta[n.var];
    val[i] = t * val[n.hi] + (1.0 - t) * val[n.lo];
  }
  if (stats) stats->node_visits += nodes_.size() - 2;
  return val[root_];
}

double Circuit::log_wmc(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != var_count_)
    throw std::invalid_argument("theta length does not match variable count");
  eval_calls_.fetch_add(1, std::memory_order_relaxed);
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  auto log_add = [](double a, double b) {
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
  };
  std::vector<double> lval(nodes_.size());
  lval[kFalse] = neg_inf;
  lval[kTrue] = 0.0;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double t = theta[n.var];
    const double hi = t > 0.0 ? std::log(t) + lval[n.hi] : neg_inf;
    const double lo = t < 1.0 ? std::log1p(-t) + lval[n.lo] : neg_inf;
    lval[i] = log_add(hi, lo);
  }
  return lval[root_];
}

WmcGradient Circuit::wmc_with_gradient(std::span<const double> theta,
                                       TraversalStats* stats) const {
  if (static_cast<int>(theta.size()) != var_count_)
    throw std::invalid_argument("theta length does not match variable count");
  eval_calls_.fetch_add(1, std::memory_order_relaxed);
  WmcGradient out;
  out.gradient.assign(var_count_, 0.0);

  std::vector<double> val(nodes_.size());
  val[kFalse] = 0.0;
  val[kTrue] = 1.0;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double t = theta[n.var];
    val[i] = t * val[n.hi] + (1.0 - t) * val[n.lo];
  }
  out.value = val[root_];

  if (root_ >= 2) {
    // reverse sweep: down[i] = d wmc / d val[i]
    std::vector<double> down(nodes_.size(), 0.0);
    down[root_] = 1.0;
    for (std::size_t i = nodes_.size() - 1; i >= 2; --i) {
      const Node& n = nodes_[i];
      const double d = down[i];
      if (d == 0.0) continue;
      const double t = theta[n.var];
      out.gradient[n.var] += d * (val[n.hi] - val[n.lo]);
      down[n.hi] += d * t;
      down[n.lo] += d * (1.0 - t);
    }
  }
  if (stats) stats->node_visits += 2 * (nodes_.size() - 2);
  return out;
}

WmcGradient Circuit::log_wmc_with_gradient(std::span<const double> theta) const {
  if (static_cast<int>(theta.size()) != var_count_)
    throw std::invalid_argument("theta length does not match variable count");
  eval_calls_.fetch_add(1, std::memory_order_relaxed);
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  auto log_add = [](double a, double b) {
    if (a == neg_inf) return b;
    if (b == neg_inf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
  };

  WmcGradient out;
  out.gradient.assign(var_count_, 0.0);

  std::vector<double> lval(nodes_.size());
  lval[kFalse] = neg_inf;
  lval[kTrue] = 0.0;
  for (std::size_t i = 2; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double t = theta[n.var];
    const double hi = t > 0.0 ? std::log(t) + lval[n.hi] : neg_inf;
    const double lo = t < 1.0 ? std::log1p(-t) + lval[n.lo] : neg_inf;
    lval[i] = log_add(hi, lo);
  }
  const double log_total = lval[root_];
  out.value = log_total;
  if (root_ < 2 || log_total == neg_inf) return out;

  // ldown[i] = log of (d wmc / d val[i]); path products are non-negative
  std::vector<double> ldown(nodes_.size(), neg_inf);
  ldown[root_] = 0.0;
  for (std::size_t i = nodes_.size() - 1; i >= 2; --i) {
    const Node& n = nodes_[i];
    const double d = ldown[i];
    if (d == neg_inf) continue;
    const double t = theta[n.var];
    // gradient entry normalized by the total: exp may safely hit 0
    const double up_hi = lval[n.hi] == neg_inf ? 0.0 : std::exp(d + lval[n.hi] - log_total);
    const double up_lo = lval[n.lo] == neg_inf ? 0.0 : std::exp(d + lval[n.lo] - log_total);
    out.gradient[n.var] += up_hi - up_lo;
    if (t > 0.0) ldown[n.hi] = log_add(ldown[n.hi], d + std::log(t));
    if (t < 1.0) ldown[n.lo] = log_add(ldown[n.lo], d + std::log1p(-t));
  }
  return out;
}

Circuit Circuit::condition(int var, bool value) const {
  if (var < 0 || var >= var_count_)
    throw std::out_of_range("condition: variable index out of range");
  BddBuilder builder(var_count_, order_, std::numeric_limits<std::size_t>::max());
  const std::uint32_t root = builder.import_restricted(*this, root_, var, value);
  return builder.finish(root);
}

bool Circuit::check_validity(std::span<const std::uint8_t> assignment) const {
  if (static_cast<int>(assignment.size()) != var_count_)
    throw std::invalid_argument("assignment length does not match variable count");
  eval_calls_.fetch_add(1, std::memory_order_relaxed);
  std::uint32_t id = root_;
  while (id >= 2) {
    const Node& n = nodes_[id];
    id = assignment[n.var] ? n.hi : n.lo;
  }
  return id == kTrue;
}

void Circuit::dump(std::ostream& out) const {
  out << "semgen-circuit v1\n";
  out << "vars " << var_count_ << "\n";
  out << "order";
  for (int v : order_) out << ' ' << v;
  out << "\nroot " << root_ << "\n";
  out << "nodes " << node_count() << "\n";
  for (std::size_t i = 2; i < nodes_.size(); ++i)
    out << i << ' ' << nodes_[i].var << ' ' << nodes_[i].lo << ' ' << nodes_[i].hi << "\n";
}

Circuit Circuit::load(std::istream& in) {
  std::string magic, version;
  in >> magic >> version;
  if (magic != "semgen-circuit" || version != "v1")
    throw std::runtime_error("not a semgen circuit file");
  std::string tag;
  Circuit c;
  in >> tag >> c.var_count_;
  if (tag != "vars" || c.var_count_ < 0) throw std::runtime_error("bad circuit header: vars");
  in >> tag;
  if (tag != "order") throw std::runtime_error("bad circuit header: order");
  c.order_.resize(c.var_count_);
  c.pos_.assign(c.var_count_, -1);
  for (int k = 0; k < c.var_count_; ++k) {
    in >> c.order_[k];
    if (!in || c.order_[k] < 0 || c.order_[k] >= c.var_count_)
      throw std::runtime_error("bad circuit header: order entry");
    c.pos_[c.order_[k]] = k;
  }
  std::size_t node_count = 0;
  in >> tag >> c.root_;
  if (tag != "root") throw std::runtime_error("bad circuit header: root");
  in >> tag >> node_count;
  if (tag != "nodes") throw std::runtime_error("bad circuit header: nodes");
  for (std::size_t i = 0; i < node_count; ++i) {
    std::size_t id;
    Node n;
    in >> id >> n.var >> n.lo >> n.hi;
    if (!in || id != i + 2 || n.var < 0 || n.var >= c.var_count_ || n.lo >= id || n.hi >= id)
      throw std::runtime_error("bad circuit node line " + std::to_string(i));
    c.nodes_.push_back(n);
  }
  if (c.root_ >= c.nodes_.size()) throw std::runtime_error("bad circuit root id");
  return c;
}

}  // namespace semgen
