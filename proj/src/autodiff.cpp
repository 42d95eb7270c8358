#include "semgen/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

namespace semgen {

namespace {

int worker_cap() {
  static const int cap = [] {
    long n = std::thread::hardware_concurrency();
    if (n < 1) n = 1;
    if (const char* env = std::getenv("SEMGEN_THREADS")) {
      const long requested = std::strtol(env, nullptr, 10);
      if (requested >= 1) n = requested;
    }
    return static_cast<int>(n);
  }();
  return cap;
}

// runs fn(row) over [0, n); each row writes only its own slots, so the result
// is identical for any worker count
void parallel_rows(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_cap(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Array

Array::Array(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  assert(v_.size() == std::size_t(rows_) * cols_);
}

Array Array::full(int rows, int cols, double value) {
  Array a(rows, cols);
  std::fill(a.v_.begin(), a.v_.end(), value);
  return a;
}

Array Array::row(std::vector<double> values) {
  const int n = static_cast<int>(values.size());
  return Array(1, n, std::move(values));
}

Array Array::glorot(int rows, int cols, Rng& rng) {
  Array a(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (double& x : a.v_) x = (2.0 * rng.uniform() - 1.0) * bound;
  return a;
}

// ---------------------------------------------------------------------------
// Graph

int Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  forward_node(id);
  forward_current_ = true;
  return id;
}

void Graph::check_shapes(const char* op, bool ok, const std::string& detail) const {
  if (!ok) throw std::invalid_argument(std::string(op) + ": shape mismatch (" + detail + ")");
}

int Graph::input(Array value) {
  Node n;
  n.op = Op::Input;
  n.value = std::move(value);
  return push(std::move(n));
}

int Graph::param(Array value) {
  Node n;
  n.op = Op::Param;
  n.value = std::move(value);
  return push(std::move(n));
}

bool Graph::is_param(int id) const { return nodes_[id].op == Op::Param; }

void Graph::set_param(int id, Array value) {
  if (!is_param(id)) throw std::invalid_argument("set_param on a non-parameter node");
  check_shapes("set_param", nodes_[id].value.same_shape(value), "parameter shape is fixed");
  nodes_[id].value = std::move(value);
  forward_current_ = false;
}

int Graph::matmul(int a, int b) {
  check_shapes("matmul", nodes_[a].value.cols() == nodes_[b].value.rows(),
               std::to_string(nodes_[a].value.cols()) + " vs " +
                   std::to_string(nodes_[b].value.rows()));
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Graph::bias_add(int x, int bias) {
  check_shapes("bias_add",
               nodes_[bias].value.rows() == 1 &&
                   nodes_[bias].value.cols() == nodes_[x].value.cols(),
               "bias must be 1 x cols");
  Node n;
  n.op = Op::BiasAdd;
  n.a = x;
  n.b = bias;
  return push(std::move(n));
}

int Graph::tanh_op(int x) {
  Node n;
  n.op = Op::Tanh;
  n.a = x;
  return push(std::move(n));
}

int Graph::relu(int x) {
  Node n;
  n.op = Op::Relu;
  n.a = x;
  return push(std::move(n));
}

int Graph::sigmoid(int x) {
  Node n;
  n.op = Op::Sigmoid;
  n.a = x;
  return push(std::move(n));
}

int Graph::group_softmax(int x, int group_size) {
  check_shapes("group_softmax", group_size > 0 && nodes_[x].value.cols() % group_size == 0,
               "group size must divide the column count");
  Node n;
  n.op = Op::GroupSoftmax;
  n.a = x;
  n.group = group_size;
  return push(std::move(n));
}

int Graph::log_op(int x) {
  Node n;
  n.op = Op::Log;
  n.a = x;
  return push(std::move(n));
}

int Graph::clamp(int x, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = x;
  n.ca = lo;
  n.cb = hi;
  return push(std::move(n));
}

int Graph::mean(int x) {
  Node n;
  n.op = Op::Mean;
  n.a = x;
  return push(std::move(n));
}

int Graph::bce(int pred, int target) {
  check_shapes("bce", nodes_[pred].value.same_shape(nodes_[target].value),
               "prediction and target shapes differ");
  Node n;
  n.op = Op::Bce;
  n.a = pred;
  n.b = target;
  return push(std::move(n));
}

int Graph::affine(double ca, int a, double cb, int b) {
  check_shapes("affine", nodes_[a].value.same_shape(nodes_[b].value), "operand shapes differ");
  Node n;
  n.op = Op::Affine;
  n.a = a;
  n.b = b;
  n.ca = ca;
  n.cb = cb;
  return push(std::move(n));
}

int Graph::scale_shift(double s, int x, double t) {
  Node n;
  n.op = Op::ScaleShift;
  n.a = x;
  n.ca = s;
  n.cb = t;
  return push(std::move(n));
}

int Graph::gather_cols(int x, std::vector<int> columns) {
  for (int c : columns)
    check_shapes("gather_cols", c >= 0 && c < nodes_[x].value.cols(), "column out of range");
  Node n;
  n.op = Op::GatherCols;
  n.a = x;
  n.columns = std::move(columns);
  return push(std::move(n));
}

int Graph::semantic_loss_op(int theta, SlOptions options) {
  if (options.circuit == nullptr)
    throw std::invalid_argument("semantic_loss_op: missing circuit");
  const int b = options.circuit->variable_count();
  const int cols = nodes_[theta].value.cols();
  if (options.theta_map.empty()) {
    check_shapes("semantic_loss_op", cols == b, "theta width must equal variable count");
  } else {
    check_shapes("semantic_loss_op", static_cast<int>(options.theta_map.size()) == cols,
                 "theta_map length must equal theta width");
    for (int v : options.theta_map)
      check_shapes("semantic_loss_op", v >= -1 && v < b, "theta_map entry out of range");
  }
  if (options.code_node >= 0) {
    check_shapes("semantic_loss_op",
                 nodes_[options.code_node].value.rows() == nodes_[theta].value.rows() &&
                     nodes_[options.code_node].value.cols() ==
                         static_cast<int>(options.code_vars.size()),
                 "code array must be rows x |code_vars|");
  } else {
    check_shapes("semantic_loss_op", options.code_vars.empty(),
                 "code_vars given without a code node");
  }
  Node n;
  n.op = Op::SemanticLoss;
  n.a = theta;
  n.b = options.code_node;
  n.sl = std::move(options);
  return push(std::move(n));
}

void Graph::forward_node(int id) {
  Node& n = nodes_[id];
  const auto& A = [&]() -> const Array& { return nodes_[n.a].value; };
  const auto& B = [&]() -> const Array& { return nodes_[n.b].value; };
  switch (n.op) {
    case Op::Input:
    case Op::Param:
      break;
    case Op::MatMul: {
      const Array& a = A();
      const Array& b = B();
      Array out(a.rows(), b.cols());
      // ikj order keeps the inner loop contiguous
      for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
          const double aik = a.at(i, k);
          if (aik == 0.0) continue;
          for (int j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
        }
      n.value = std::move(out);
      break;
    }
    case Op::BiasAdd: {
      Array out = A();
      const Array& bias = B();
      for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bias.at(0, j);
      n.value = std::move(out);
      break;
    }
    case Op::Tanh: {
      Array out = A();
      for (double& x : out.data()) x = std::tanh(x);
      n.value = std::move(out);
      break;
    }
    case Op::Relu: {
      Array out = A();
      for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
      n.value = std::move(out);
      break;
    }
    case Op::Sigmoid: {
      Array out = A();
      for (double& x : out.data()) x = 1.0 / (1.0 + std::exp(-x));
      n.value = std::move(out);
      break;
    }
    case Op::GroupSoftmax: {
      Array out = A();
      const int g = n.group;
      for (int i = 0; i < out.rows(); ++i)
        for (int start = 0; start < out.cols(); start += g) {
          double mx = -std::numeric_limits<double>::infinity();
          for (int j = 0; j < g; ++j) mx = std::max(mx, out.at(i, start + j));
          double sum = 0.0;
          for (int j = 0; j < g; ++j) {
            double& x = out.at(i, start + j);
            x = std::exp(x - mx);
            sum += x;
          }
          for (int j = 0; j < g; ++j) out.at(i, start + j) /= sum;
        }
      n.value = std::move(out);
      break;
    }
    case Op::Log: {
      Array out = A();
      for (double& x : out.data()) x = std::log(x);
      n.value = std::move(out);
      break;
    }
    case Op::Clamp: {
      Array out = A();
      for (double& x : out.data()) x = std::min(std::max(x, n.ca), n.cb);
      n.value = std::move(out);
      break;
    }
    case Op::Mean: {
      const Array& a = A();
      double total = 0.0;
      for (double x : a.data()) total += x;
      Array out(1, 1);
      out.at(0, 0) = a.size() ? total / static_cast<double>(a.size()) : 0.0;
      n.value = std::move(out);
      break;
    }
    case Op::Bce: {
      const Array& p = A();
      const Array& t = B();
      double total = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double ph = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
        total += -(t[i] * std::log(ph) + (1.0 - t[i]) * std::log1p(-ph));
      }
      Array out(1, 1);
      out.at(0, 0) = p.size() ? total / static_cast<double>(p.size()) : 0.0;
      n.value = std::move(out);
      break;
    }
    case Op::Affine: {
      const Array& a = A();
      const Array& b = B();
      Array out(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i) out[i] = n.ca * a[i] + n.cb * b[i];
      n.value = std::move(out);
      break;
    }
    case Op::ScaleShift: {
      Array out = A();
      for (double& x : out.data()) x = n.ca * x + n.cb;
      n.value = std::move(out);
      break;
    }
    case Op::GatherCols: {
      const Array& a = A();
      Array out(a.rows(), static_cast<int>(n.columns.size()));
      for (int i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < n.columns.size(); ++j)
          out.at(i, static_cast<int>(j)) = a.at(i, n.columns[j]);
      n.value = std::move(out);
      break;
    }
    case Op::SemanticLoss: {
      const Array& theta = A();
      const Circuit& circuit = *n.sl.circuit;
      const int b = circuit.variable_count();
      const int rows = theta.rows();
      Array out(rows, 1);
      n.sl_row_grads.assign(rows, {});
      const Array* codes = n.sl.code_node >= 0 ? &nodes_[n.sl.code_node].value : nullptr;
      parallel_rows(rows, [&](int i) {
        std::vector<double> full(b, 0.5);
        if (n.sl.theta_map.empty()) {
          for (int j = 0; j < theta.cols(); ++j) full[j] = theta.at(i, j);
        } else {
          for (int j = 0; j < theta.cols(); ++j)
            if (n.sl.theta_map[j] >= 0) full[n.sl.theta_map[j]] = theta.at(i, j);
        }
        if (codes)
          for (std::size_t k = 0; k < n.sl.code_vars.size(); ++k)
            full[n.sl.code_vars[k]] = codes->at(i, static_cast<int>(k)) > 0.5 ? 1.0 : 0.0;

        WmcGradient wg = circuit.wmc_with_gradient(full);
        std::vector<double> dtheta(b, 0.0);
        double loss;
        if (wg.value > 1e-300) {
          loss = -std::log(wg.value);
          for (int v = 0; v < b; ++v) dtheta[v] = -wg.gradient[v] / wg.value;
        } else {
          // linear pass underflowed: redo the row in log space
          WmcGradient lg = circuit.log_wmc_with_gradient(full);
          const double log_floor = std::log(n.sl.floor);
          if (lg.value > log_floor) {
            loss = -lg.value;
            for (int v = 0; v < b; ++v) dtheta[v] = -lg.gradient[v];
          } else {
            loss = -log_floor;  // clamped regime: flat
          }
        }
        for (int v : n.sl.code_vars) dtheta[v] = 0.0;
        out.at(i, 0) = loss;
        n.sl_row_grads[i] = std::move(dtheta);
      });
      n.value = std::move(out);
      break;
    }
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[id];
  const Array& g = n.grad;
  switch (n.op) {
    case Op::Input:
    case Op::Param:
      break;
    case Op::MatMul: {
      const Array& a = nodes_[n.a].value;
      const Array& b = nodes_[n.b].value;
      Array& da = nodes_[n.a].grad;
      Array& db = nodes_[n.b].grad;
      // dA = g . B^T
      for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
          const double gij = g.at(i, j);
          if (gij == 0.0) continue;
          for (int k = 0; k < a.cols(); ++k) da.at(i, k) += gij * b.at(k, j);
        }
      // dB = A^T . g
      for (int i = 0; i < a.rows(); ++i)
        for (int k = 0; k < a.cols(); ++k) {
          const double aik = a.at(i, k);
          if (aik == 0.0) continue;
          for (int j = 0; j < b.cols(); ++j) db.at(k, j) += aik * g.at(i, j);
        }
      break;
    }
    case Op::BiasAdd: {
      Array& dx = nodes_[n.a].grad;
      Array& dbias = nodes_[n.b].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) {
          dx.at(i, j) += g.at(i, j);
          dbias.at(0, j) += g.at(i, j);
        }
      break;
    }
    case Op::Tanh: {
      Array& dx = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        dx[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Relu: {
      Array& dx = nodes_[n.a].grad;
      const Array& x = nodes_[n.a].value;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += x[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::Sigmoid: {
      Array& dx = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i)
        dx[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::GroupSoftmax: {
      Array& dx = nodes_[n.a].grad;
      const int gsz = n.group;
      for (int i = 0; i < g.rows(); ++i)
        for (int start = 0; start < g.cols(); start += gsz) {
          double dot = 0.0;
          for (int j = 0; j < gsz; ++j)
            dot += g.at(i, start + j) * n.value.at(i, start + j);
          for (int j = 0; j < gsz; ++j)
            dx.at(i, start + j) +=
                n.value.at(i, start + j) * (g.at(i, start + j) - dot);
        }
      break;
    }
    case Op::Log: {
      Array& dx = nodes_[n.a].grad;
      const Array& x = nodes_[n.a].value;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / x[i];
      break;
    }
    case Op::Clamp: {
      Array& dx = nodes_[n.a].grad;
      const Array& x = nodes_[n.a].value;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > n.ca && x[i] < n.cb) dx[i] += g[i];
      break;
    }
    case Op::Mean: {
      Array& dx = nodes_[n.a].grad;
      const double scale = g.at(0, 0) / static_cast<double>(std::max<std::size_t>(dx.size(), 1));
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += scale;
      break;
    }
    case Op::Bce: {
      Array& dp = nodes_[n.a].grad;
      const Array& p = nodes_[n.a].value;
      const Array& t = nodes_[n.b].value;
      const double scale = g.at(0, 0) / static_cast<double>(std::max<std::size_t>(p.size(), 1));
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 1e-7 || p[i] >= 1.0 - 1e-7) continue;  // clamped region is flat
        dp[i] += scale * (-t[i] / p[i] + (1.0 - t[i]) / (1.0 - p[i]));
      }
      break;
    }
    case Op::Affine: {
      Array& da = nodes_[n.a].grad;
      Array& db = nodes_[n.b].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        da[i] += n.ca * g[i];
        db[i] += n.cb * g[i];
      }
      break;
    }
    case Op::ScaleShift: {
      Array& dx = nodes_[n.a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += n.ca * g[i];
      break;
    }
    case Op::GatherCols: {
      Array& dx = nodes_[n.a].grad;
      for (int i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < n.columns.size(); ++j)
          dx.at(i, n.columns[j]) += g.at(i, static_cast<int>(j));
      break;
    }
    case Op::SemanticLoss: {
      Array& dtheta = nodes_[n.a].grad;
      const int cols = dtheta.cols();
      for (int i = 0; i < g.rows(); ++i) {
        const double up = g.at(i, 0);
        if (up == 0.0) continue;
        const std::vector<double>& row = n.sl_row_grads[i];
        if (n.sl.theta_map.empty()) {
          for (int j = 0; j < cols; ++j) dtheta.at(i, j) += up * row[j];
        } else {
          for (int j = 0; j < cols; ++j)
            if (n.sl.theta_map[j] >= 0) dtheta.at(i, j) += up * row[n.sl.theta_map[j]];
        }
      }
      break;
    }
  }
}

void Graph::recompute() {
  for (int id = 0; id < static_cast<int>(nodes_.size()); ++id) forward_node(id);
  forward_current_ = true;
}

void Graph::backward(int output) {
  if (!forward_current_)
    throw std::logic_error("backward before forward: call recompute() after set_param");
  const Array& out = nodes_[output].value;
  if (out.rows() != 1 || out.cols() != 1)
    throw std::invalid_argument("backward requires a scalar output node");
  for (Node& n : nodes_) n.grad = Array::zeros(n.value.rows(), n.value.cols());
  nodes_[output].grad.at(0, 0) = 1.0;
  for (int id = output; id >= 0; --id) backward_node(id);
}

double Graph::gradient_check(int output, std::span<const int> params, double h) {
  recompute();
  backward(output);
  std::vector<Array> analytic;
  analytic.reserve(params.size());
  for (int p : params) analytic.push_back(nodes_[p].grad);

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const int p = params[pi];
    Array& val = nodes_[p].value;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double keep = val[i];
      val[i] = keep + h;
      recompute();
      const double plus = nodes_[output].value.at(0, 0);
      val[i] = keep - h;
      recompute();
      const double minus = nodes_[output].value.at(0, 0);
      val[i] = keep;
      const double fd = (plus - minus) / (2.0 * h);
      const double rel =
          std::abs(fd - analytic[pi][i]) / std::max(1.0, std::max(std::abs(fd), std::abs(analytic[pi][i])));
      worst = std::max(worst, rel);
    }
  }
  recompute();
  return worst;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(std::vector<Array*> params, const std::vector<const Array*>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("Adam::step: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (Array* p : params) {
      m_.push_back(Array::zeros(p->rows(), p->cols()));
      v_.push_back(Array::zeros(p->rows(), p->cols()));
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("Adam::step: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Array& p = *params[k];
    const Array& g = *grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

// ---------------------------------------------------------------------------
// Mlp

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::GroupSoftmax: return "group_softmax";
  }
  return "identity";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "sigmoid") return Activation::Sigmoid;
  if (name == "group_softmax") return Activation::GroupSoftmax;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

Mlp Mlp::init(MlpSpec spec, Rng& rng) {
  if (spec.sizes.size() < 2 || spec.acts.size() != spec.sizes.size() - 1)
    throw std::invalid_argument("MlpSpec: need N sizes and N-1 activations");
  Mlp mlp;
  mlp.spec_ = std::move(spec);
  for (std::size_t l = 0; l + 1 < mlp.spec_.sizes.size(); ++l) {
    mlp.weights_.push_back(Array::glorot(mlp.spec_.sizes[l], mlp.spec_.sizes[l + 1], rng));
    mlp.biases_.push_back(Array::zeros(1, mlp.spec_.sizes[l + 1]));
  }
  return mlp;
}

int Mlp::build(Graph& g, int input, std::vector<int>* param_ids) const {
  int x = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const int w = g.param(weights_[l]);
    const int b = g.param(biases_[l]);
    if (param_ids) {
      param_ids->push_back(w);
      param_ids->push_back(b);
    }
    x = g.bias_add(g.matmul(x, w), b);
    if (l + 1 == weights_.size() && spec_.logit_scale != 1.0)
      x = g.scale_shift(spec_.logit_scale, x, 0.0);
    switch (spec_.acts[l]) {
      case Activation::Identity: break;
      case Activation::Tanh: x = g.tanh_op(x); break;
      case Activation::Relu: x = g.relu(x); break;
      case Activation::Sigmoid: x = g.sigmoid(x); break;
      case Activation::GroupSoftmax: x = g.group_softmax(x, spec_.softmax_group); break;
    }
  }
  return x;
}

Array Mlp::forward(const Array& input) const {
  Array x = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Array& w = weights_[l];
    Array y(x.rows(), w.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int k = 0; k < x.cols(); ++k) {
        const double xik = x.at(i, k);
        if (xik == 0.0) continue;
        for (int j = 0; j < w.cols(); ++j) y.at(i, j) += xik * w.at(k, j);
      }
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < y.cols(); ++j) y.at(i, j) += biases_[l].at(0, j);
    if (l + 1 == weights_.size() && spec_.logit_scale != 1.0)
      for (double& v : y.data()) v *= spec_.logit_scale;
    switch (spec_.acts[l]) {
      case Activation::Identity:
        break;
      case Activation::Tanh:
        for (double& v : y.data()) v = std::tanh(v);
        break;
      case Activation::Relu:
        for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::Sigmoid:
        for (double& v : y.data()) v = 1.0 / (1.0 + std::exp(-v));
        break;
      case Activation::GroupSoftmax: {
        const int gsz = spec_.softmax_group;
        for (int i = 0; i < y.rows(); ++i)
          for (int start = 0; start < y.cols(); start += gsz) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < gsz; ++j) mx = std::max(mx, y.at(i, start + j));
            double sum = 0.0;
            for (int j = 0; j < gsz; ++j) {
              double& v = y.at(i, start + j);
              v = std::exp(v - mx);
              sum += v;
            }
            for (int j = 0; j < gsz; ++j) y.at(i, start + j) /= sum;
          }
        break;
      }
    }
    x = std::move(y);
  }
  return x;
}

void Mlp::sync_from(const Graph& g, const std::vector<int>& param_ids) {
  if (param_ids.size() != 2 * weights_.size())
    throw std::invalid_argument("sync_from: parameter id list does not match layer count");
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l] = g.value(param_ids[2 * l]);
    biases_[l] = g.value(param_ids[2 * l + 1]);
  }
}

std::vector<Array*> Mlp::parameters() {
  std::vector<Array*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

namespace {

void write_f64_le(std::ostream& out, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, sizeof bits);
  unsigned char raw[8];
  for (int i = 0; i < 8; ++i) raw[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(raw), 8);
}

double read_f64_le(std::istream& in) {
  unsigned char raw[8];
  in.read(reinterpret_cast<char*>(raw), 8);
  if (!in) throw std::runtime_error("weight file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(raw[i]) << (8 * i);
  double value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace

void Mlp::save(std::ostream& out, std::uint64_t seed) const {
  out << "semgen-weights v1\n";
  out << "sizes";
  for (int s : spec_.sizes) out << ' ' << s;
  out << "\nacts";
  for (Activation a : spec_.acts) out << ' ' << activation_name(a);
  out << "\ngroup " << spec_.softmax_group << "\n";
  char scale[64];
  std::snprintf(scale, sizeof scale, "%.17g", spec_.logit_scale);
  out << "scale " << scale << "\n";
  out << "seed " << seed << "\n";
  out << "binary\n";
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (double v : weights_[l].data()) write_f64_le(out, v);
    for (double v : biases_[l].data()) write_f64_le(out, v);
  }
}

Mlp Mlp::load(std::istream& in, std::uint64_t* seed) {
  std::string line;
  if (!std::getline(in, line) || line != "semgen-weights v1")
    throw std::runtime_error("not a semgen weight file");
  MlpSpec spec;
  std::uint64_t file_seed = 0;
  while (std::getline(in, line)) {
    if (line == "binary") break;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "sizes") {
      int s;
      while (ls >> s) spec.sizes.push_back(s);
    } else if (tag == "acts") {
      std::string name;
      while (ls >> name) spec.acts.push_back(activation_from_name(name));
    } else if (tag == "group") {
      ls >> spec.softmax_group;
    } else if (tag == "scale") {
      ls >> spec.logit_scale;
    } else if (tag == "seed") {
      ls >> file_seed;
    } else {
      throw std::runtime_error("unknown weight-file field '" + tag + "'");
    }
  }
  if (spec.sizes.size() < 2 || spec.acts.size() != spec.sizes.size() - 1)
    throw std::runtime_error("weight file header incomplete");
  Mlp mlp;
  mlp.spec_ = std::move(spec);
  for (std::size_t l = 0; l + 1 < mlp.spec_.sizes.size(); ++l) {
    Array w(mlp.spec_.sizes[l], mlp.spec_.sizes[l + 1]);
    for (double& v : w.data()) v = read_f64_le(in);
    Array b(1, mlp.spec_.sizes[l + 1]);
    for (double& v : b.data()) v = read_f64_le(in);
    mlp.weights_.push_back(std::move(w));
    mlp.biases_.push_back(std::move(b));
  }
  if (seed) *seed = file_seed;
  return mlp;
}

bool Mlp::operator==(const Mlp& other) const {
  if (spec_.sizes != other.spec_.sizes || spec_.acts != other.spec_.acts ||
      spec_.softmax_group != other.spec_.softmax_group ||
      spec_.logit_scale != other.spec_.logit_scale)
    return false;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    if (weights_[l].data() != other.weights_[l].data() ||
        biases_[l].data() != other.biases_[l].data())
      return false;
  return true;
}

}  // namespace semgen
