#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "semgen/circuit.hpp"
#include "semgen/rng.hpp"

namespace semgen {

// Dense row-major array, rank <= 2 (vectors are 1 x n or n x 1).
class Array {
 public:
  Array() = default;
  Array(int rows, int cols) : rows_(rows), cols_(cols), v_(std::size_t(rows) * cols, 0.0) {}
  Array(int rows, int cols, std::vector<double> values);

  static Array zeros(int rows, int cols) { return Array(rows, cols); }
  static Array full(int rows, int cols, double value);
  static Array row(std::vector<double> values);
  // scaled-uniform init in +-sqrt(6/(fan_in+fan_out))
  static Array glorot(int rows, int cols, Rng& rng);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  double& at(int r, int c) { return v_[std::size_t(r) * cols_ + c]; }
  double at(int r, int c) const { return v_[std::size_t(r) * cols_ + c]; }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& data() const { return v_; }
  std::vector<double>& data() { return v_; }

  bool same_shape(const Array& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

// Reverse-mode tape over Arrays. Forward values are computed eagerly as nodes
// are added; backward() runs one reverse sweep from a scalar output. The tape
// can be replayed with recompute() after mutating parameter values, which is
// what the finite-difference checker does.
class Graph {
 public:
  struct SlOptions {
    const Circuit* circuit = nullptr;
    double floor = 1e-30;            // wmc clamp before the log
    std::vector<int> code_vars;      // circuit positions clamped per row
    int code_node = -1;              // n x k array of code bits, not differentiated
    std::vector<int> theta_map;      // circuit var for each input column; empty = identity
  };

  int input(Array value);
  int param(Array value);

  int matmul(int a, int b);
  int bias_add(int x, int bias);              // bias is 1 x cols
  int tanh_op(int x);
  int relu(int x);
  int sigmoid(int x);
  int group_softmax(int x, int group_size);   // softmax per disjoint column group
  int log_op(int x);
  int clamp(int x, double lo, double hi);
  int mean(int x);                            // scalar mean over all entries
  int bce(int pred, int target);              // mean binary cross-entropy; target frozen
  int affine(double ca, int a, double cb, int b);  // ca*A + cb*B, same shape
  int scale_shift(double s, int x, double t);      // s*X + t
  int gather_cols(int x, std::vector<int> columns);
  // per-row semantic loss (n x 1): -ln max(wmc(theta_row), floor)
  int semantic_loss_op(int theta, SlOptions options);

  const Array& value(int id) const { return nodes_[id].value; }
  const Array& grad(int id) const { return nodes_[id].grad; }

  bool is_param(int id) const;
  void set_param(int id, Array value);

  void recompute();       // replay every forward op in insertion order
  void backward(int output);  // output must be 1 x 1 and forward must be current

  // worst relative error between backward() gradients and central finite
  // differences over the given parameters
  double gradient_check(int output, std::span<const int> params, double h = 1e-6);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Input, Param, MatMul, BiasAdd, Tanh, Relu, Sigmoid, GroupSoftmax, Log,
    Clamp, Mean, Bce, Affine, ScaleShift, GatherCols, SemanticLoss
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Array value;
    Array grad;
    // op-specific payload
    double ca = 0.0, cb = 0.0;
    int group = 0;
    std::vector<int> columns;
    SlOptions sl;
    std::vector<std::vector<double>> sl_row_grads;  // d loss_row / d theta_row
  };

  int push(Node n);
  void forward_node(int id);
  void backward_node(int id);
  void check_shapes(const char* op, bool ok, const std::string& detail) const;

  std::vector<Node> nodes_;
  bool forward_current_ = false;
};

// Adaptive-moment optimizer over a parameter list that lives outside any
// graph; state is positional, so feed it the same parameters in the same
// order every step.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.5, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(std::vector<Array*> params, const std::vector<const Array*>& grads);

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::uint64_t t_ = 0;
  std::vector<Array> m_, v_;
};

enum class Activation : std::uint8_t { Identity, Tanh, Relu, Sigmoid, GroupSoftmax };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

struct MlpSpec {
  std::vector<int> sizes;             // input, hidden..., output
  std::vector<Activation> acts;       // one per layer transition
  int softmax_group = 0;              // used when the last act is GroupSoftmax
  double logit_scale = 1.0;           // multiplier on the final pre-activation
};

// Dense multilayer perceptron with parameters held as plain Arrays. The tape
// version (build) is used for training; forward() is the tape-free inference
// path used by sampling.
class Mlp {
 public:
  Mlp() = default;
  static Mlp init(MlpSpec spec, Rng& rng);

  // add the network to a graph; returns the output node and appends the
  // parameter node ids (weights and biases, layer by layer)
  int build(Graph& g, int input, std::vector<int>* param_ids) const;

  Array forward(const Array& input) const;

  // copy updated parameter values back from graph nodes created by build()
  void sync_from(const Graph& g, const std::vector<int>& param_ids);

  std::vector<Array*> parameters();
  const MlpSpec& spec() const { return spec_; }

  void save(std::ostream& out, std::uint64_t seed = 0) const;
  static Mlp load(std::istream& in, std::uint64_t* seed = nullptr);

  bool operator==(const Mlp& other) const;

 private:
  MlpSpec spec_;
  std::vector<Array> weights_;
  std::vector<Array> biases_;
};

}  // namespace semgen
