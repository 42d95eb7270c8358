#include "semgen/formula.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <sstream>

namespace semgen {

namespace {
constexpr int kEnumerationGuard = 24;
}

int Formula::variable_index(const std::string& name) const {
  auto it = var_index_.find(name);
  return it == var_index_.end() ? -1 : it->second;
}

bool Formula::evaluate(const Assignment& a) const {
  if (static_cast<int>(a.size()) != variable_count()) {
    throw std::invalid_argument("assignment length " + std::to_string(a.size()) +
                                " does not match variable count " +
                                std::to_string(variable_count()));
  }
  return eval_node(root_, a);
}

bool Formula::eval_node(int id, const Assignment& a) const {
  const Node& n = nodes_[id];
  switch (n.kind) {
    case ExprKind::Var:
      return a[n.var] != 0;
    case ExprKind::Const:
      return n.value;
    case ExprKind::Not:
      return !eval_node(n.kids[0], a);
    case ExprKind::And:
      for (int k : n.kids)
        if (!eval_node(k, a)) return false;
      return true;
    case ExprKind::Or:
      for (int k : n.kids)
        if (eval_node(k, a)) return true;
      return false;
    case ExprKind::Implies:
      return !eval_node(n.kids[0], a) || eval_node(n.kids[1], a);
    case ExprKind::Iff:
      return eval_node(n.kids[0], a) == eval_node(n.kids[1], a);
    case ExprKind::Xor:
      return eval_node(n.kids[0], a) != eval_node(n.kids[1], a);
  }
  return false;
}

std::vector<Assignment> Formula::enumerate_models() const {
  const int b = variable_count();
  if (b > kEnumerationGuard) {
    throw std::domain_error("enumerate_models: " + std::to_string(b) +
                            " variables exceeds the guard of " +
                            std::to_string(kEnumerationGuard));
  }
  std::vector<Assignment> models;
  const std::uint64_t total = std::uint64_t{1} << b;
  Assignment a(static_cast<std::size_t>(b), 0);
  for (std::uint64_t code = 0; code < total; ++code) {
    // variable 0 is the most significant bit => lexicographic output order
    for (int i = 0; i < b; ++i) a[i] = (code >> (b - 1 - i)) & 1u;
    if (evaluate(a)) models.push_back(a);
  }
  return models;
}

void Formula::print_node(int id, std::string& out) const {
  const Node& n = nodes_[id];
  switch (n.kind) {
    case ExprKind::Var:
      out += var_names_[n.var];
      break;
    case ExprKind::Const:
      out += n.value ? "true" : "false";
      break;
    case ExprKind::Not: {
      out += '!';
      const Node& k = nodes_[n.kids[0]];
      const bool atom = k.kind == ExprKind::Var || k.kind == ExprKind::Const ||
                        k.kind == ExprKind::Not;
      if (atom) {
        print_node(n.kids[0], out);
      } else {
        out += '(';
        print_node(n.kids[0], out);
        out += ')';
      }
      break;
    }
    case ExprKind::And:
    case ExprKind::Or:
    case ExprKind::Implies:
    case ExprKind::Iff:
    case ExprKind::Xor: {
      const char* sep = n.kind == ExprKind::And       ? " & "
                        : n.kind == ExprKind::Or      ? " | "
                        : n.kind == ExprKind::Implies ? " -> "
                        : n.kind == ExprKind::Iff     ? " <-> "
                                                      : " ^ ";
      out += '(';
      for (std::size_t i = 0; i < n.kids.size(); ++i) {
        if (i) out += sep;
        print_node(n.kids[i], out);
      }
      out += ')';
      break;
    }
  }
}

std::string Formula::pretty_print() const {
  std::string out;
  print_node(root_, out);
  return out;
}

bool Formula::structurally_equal(const Formula& other) const {
  // same tree shape with the same operators and variable names; variable
  // table order is an indexing concern, not a structural one
  struct Walker {
    const Formula& a;
    const Formula& b;
    bool eq(int ia, int ib) const {
      const Node& na = a.nodes_[ia];
      const Node& nb = b.nodes_[ib];
      if (na.kind != nb.kind || na.value != nb.value || na.kids.size() != nb.kids.size())
        return false;
      if (na.kind == ExprKind::Var && a.var_names_[na.var] != b.var_names_[nb.var])
        return false;
      for (std::size_t i = 0; i < na.kids.size(); ++i)
        if (!eq(na.kids[i], nb.kids[i])) return false;
      return true;
    }
  };
  return Walker{*this, other}.eq(root_, other.root_);
}

Formula Formula::desugar(DesugarStyle style) const {
  FormulaBuilder fb;
  // keep the variable table (and hence indices) identical
  for (const auto& name : var_names_) fb.var(name);

  struct Rec {
    const Formula& f;
    FormulaBuilder& fb;
    DesugarStyle style;
    int go(int id) {
      const Node& n = f.nodes_[id];
      switch (n.kind) {
        case ExprKind::Var:
          return fb.var(f.var_names_[n.var]);
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
        case ExprKind::Implies: {
          const int a = go(n.kids[0]);
          const int b = go(n.kids[1]);
          return fb.disjunction({fb.negation(a), b});
        }
        case ExprKind::Iff: {
          const int a = go(n.kids[0]);
          const int b = go(n.kids[1]);
          if (style == DesugarStyle::Cnf)
            return fb.conjunction({fb.disjunction({fb.negation(a), b}),
                                   fb.disjunction({a, fb.negation(b)})});
          return fb.disjunction({fb.conjunction({a, b}),
                                 fb.conjunction({fb.negation(a), fb.negation(b)})});
        }
        case ExprKind::Xor: {
          const int a = go(n.kids[0]);
          const int b = go(n.kids[1]);
          if (style == DesugarStyle::Cnf)
            return fb.conjunction({fb.disjunction({a, b}),
                                   fb.disjunction({fb.negation(a), fb.negation(b)})});
          return fb.disjunction({fb.conjunction({a, fb.negation(b)}),
                                 fb.conjunction({fb.negation(a), b})});
        }
      }
      return -1;
    }
  };
  Rec rec{*this, fb, style};
  const int root = rec.go(root_);
  return std::move(fb).build(root);
}

// ---------------------------------------------------------------------------
// FormulaBuilder

int FormulaBuilder::push(Formula::Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int FormulaBuilder::var(const std::string& name) {
  auto it = var_index_.find(name);
  int idx;
  if (it == var_index_.end()) {
    idx = static_cast<int>(var_names_.size());
    var_names_.push_back(name);
    var_index_.emplace(name, idx);
  } else {
    idx = it->second;
  }
  Formula::Node n;
  n.kind = ExprKind::Var;
  n.var = idx;
  return push(std::move(n));
}

int FormulaBuilder::constant(bool value) {
  Formula::Node n;
  n.kind = ExprKind::Const;
  n.value = value;
  return push(std::move(n));
}

int FormulaBuilder::negation(int a) {
  Formula::Node n;
  n.kind = ExprKind::Not;
  n.kids = {a};
  return push(std::move(n));
}

int FormulaBuilder::conjunction(std::vector<int> kids) {
  if (kids.empty()) return constant(true);
  if (kids.size() == 1) return kids[0];
  Formula::Node n;
  n.kind = ExprKind::And;
  n.kids = std::move(kids);
  return push(std::move(n));
}

int FormulaBuilder::disjunction(std::vector<int> kids) {
  if (kids.empty()) return constant(false);
  if (kids.size() == 1) return kids[0];
  Formula::Node n;
  n.kind = ExprKind::Or;
  n.kids = std::move(kids);
  return push(std::move(n));
}

int FormulaBuilder::implies(int a, int b) {
  Formula::Node n;
  n.kind = ExprKind::Implies;
  n.kids = {a, b};
  return push(std::move(n));
}

int FormulaBuilder::iff(int a, int b) {
  Formula::Node n;
  n.kind = ExprKind::Iff;
  n.kids = {a, b};
  return push(std::move(n));
}

int FormulaBuilder::exclusive_or(int a, int b) {
  Formula::Node n;
  n.kind = ExprKind::Xor;
  n.kids = {a, b};
  return push(std::move(n));
}

int FormulaBuilder::implies_any(int a, std::vector<int> alternatives) {
  return implies(a, disjunction(std::move(alternatives)));
}

Formula FormulaBuilder::build(int root) && {
  assert(root >= 0 && root < static_cast<int>(nodes_.size()));
  Formula f;
  f.nodes_ = std::move(nodes_);
  f.root_ = root;
  f.var_names_ = std::move(var_names_);
  f.var_index_ = std::move(var_index_);
  return f;
}

// ---------------------------------------------------------------------------
// DSL parser: recursive descent, one token of lookahead.

namespace {

enum class Tok { Ident, True, False, Not, And, Or, Xor, Implies, Iff, LParen, RParen, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return current_; }

  Token take() {
    Token t = current_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_space_and_comments();
    current_.line = line_;
    current_.column = column_;
    if (pos_ >= text_.size()) {
      current_.kind = Tok::End;
      current_.text = "<end of input>";
      return;
    }
    const char c = text_[pos_];
    if (c == '(') return single(Tok::LParen, "(");
    if (c == ')') return single(Tok::RParen, ")");
    if (c == '!') return single(Tok::Not, "!");
    if (c == '&') return single(Tok::And, "&");
    if (c == '|') return single(Tok::Or, "|");
    if (c == '^') return single(Tok::Xor, "^");
    if (c == '-') {
      if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '>') {
        current_.kind = Tok::Implies;
        current_.text = "->";
        consume(2);
        return;
      }
      throw ParseError("expected '->'", line_, column_);
    }
    if (c == '<') {
      if (pos_ + 2 < text_.size() && text_[pos_ + 1] == '-' && text_[pos_ + 2] == '>') {
        current_.kind = Tok::Iff;
        current_.text = "<->";
        consume(3);
        return;
      }
      throw ParseError("expected '<->'", line_, column_);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
        consume(1);
      current_.text = text_.substr(start, pos_ - start);
      current_.kind = current_.text == "true"    ? Tok::True
                      : current_.text == "false" ? Tok::False
                                                 : Tok::Ident;
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, column_);
  }

  void single(Tok kind, const char* text) {
    current_.kind = kind;
    current_.text = text;
    consume(1);
  }

  void consume(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (text_[pos_] == '\n') {
        ++line_;
        column_ = 1;
      } else {
        ++column_;
      }
      ++pos_;
    }
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') consume(1);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        consume(1);
      } else {
        break;
      }
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
  Token current_;
};

// precedence: ! > & > | > ^ > -> > <->
class DslParser {
 public:
  DslParser(const std::string& text) : lex_(text) {}

  Formula run() {
    if (lex_.peek().kind == Tok::End)
      throw ParseError("empty input", lex_.peek().line, lex_.peek().column);
    const int root = parse_iff();
    const Token& t = lex_.peek();
    if (t.kind != Tok::End)
      throw ParseError("unexpected '" + t.text + "'", t.line, t.column);
    return std::move(fb_).build(root);
  }

 private:
  int parse_iff() {
    int left = parse_implies();
    while (lex_.peek().kind == Tok::Iff) {
      lex_.take();
      left = fb_.iff(left, parse_implies());
    }
    return left;
  }

  int parse_implies() {  // right-associative
    const int left = parse_xor();
    if (lex_.peek().kind == Tok::Implies) {
      lex_.take();
      return fb_.implies(left, parse_implies());
    }
    return left;
  }

  int parse_xor() {
    int left = parse_or();
    while (lex_.peek().kind == Tok::Xor) {
      lex_.take();
      left = fb_.exclusive_or(left, parse_or());
    }
    return left;
  }

  int parse_or() {
    std::vector<int> kids{parse_and()};
    while (lex_.peek().kind == Tok::Or) {
      lex_.take();
      kids.push_back(parse_and());
    }
    return fb_.disjunction(std::move(kids));
  }

  int parse_and() {
    std::vector<int> kids{parse_unary()};
    while (lex_.peek().kind == Tok::And) {
      lex_.take();
      kids.push_back(parse_unary());
    }
    return fb_.conjunction(std::move(kids));
  }

  int parse_unary() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Not:
        lex_.take();
        return fb_.negation(parse_unary());
      case Tok::LParen: {
        lex_.take();
        const int inner = parse_iff();
        const Token& close = lex_.peek();
        if (close.kind != Tok::RParen)
          throw ParseError("expected ')' but found '" + close.text + "'", close.line,
                           close.column);
        lex_.take();
        return inner;
      }
      case Tok::True:
        lex_.take();
        return fb_.constant(true);
      case Tok::False:
        lex_.take();
        return fb_.constant(false);
      case Tok::Ident: {
        Token ident = lex_.take();
        return fb_.var(ident.text);
      }
      default:
        throw ParseError("expected a variable, literal, '!' or '(' but found '" + t.text + "'",
                         t.line, t.column);
    }
  }

  Lexer lex_;
  FormulaBuilder fb_;
};

}  // namespace

Formula parse_dsl(const std::string& text) { return DslParser(text).run(); }

// ---------------------------------------------------------------------------
// DIMACS CNF parser

Formula parse_dimacs(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int declared_vars = -1;
  int declared_clauses = -1;
  int line_no = 0;

  FormulaBuilder fb;
  std::vector<int> clause_nodes;
  std::vector<int> current;  // literal nodes of the clause in progress
  bool clause_open = false;

  auto literal_node = [&](int lit) {
    const int v = fb.var("v" + std::to_string(std::abs(lit)));
    return lit > 0 ? v : fb.negation(v);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == 'c') continue;
    if (line[0] == 'p') {
      std::istringstream hs(line);
      std::string p, cnf;
      if (!(hs >> p >> cnf >> declared_vars >> declared_clauses) || cnf != "cnf" ||
          declared_vars < 0 || declared_clauses < 0)
        throw ParseError("malformed DIMACS header", line_no, 1);
      // fix the variable table to v1..vV regardless of clause order
      for (int i = 1; i <= declared_vars; ++i) fb.var("v" + std::to_string(i));
      continue;
    }
    if (declared_vars < 0) throw ParseError("clause before 'p cnf' header", line_no, 1);
    std::istringstream ls(line);
    int lit;
    while (ls >> lit) {
      if (lit == 0) {
        if (!clause_open)
          throw ParseError("empty clause (literal 0 with no preceding literals)", line_no, 1);
        clause_nodes.push_back(fb.disjunction(std::move(current)));
        current.clear();
        clause_open = false;
        continue;
      }
      if (std::abs(lit) > declared_vars)
        throw ParseError("literal " + std::to_string(lit) + " exceeds declared variable count " +
                             std::to_string(declared_vars),
                         line_no, 1);
      current.push_back(literal_node(lit));
      clause_open = true;
    }
  }
  if (declared_vars < 0) throw ParseError("missing 'p cnf' header", line_no, 1);
  if (clause_open) throw ParseError("unterminated clause at end of input", line_no, 1);
  if (static_cast<int>(clause_nodes.size()) != declared_clauses)
    throw ParseError("header declares " + std::to_string(declared_clauses) + " clauses but " +
                         std::to_string(clause_nodes.size()) + " were found",
                     line_no, 1);
  const int root = fb.conjunction(std::move(clause_nodes));
  return std::move(fb).build(root);
}

}  // namespace semgen
