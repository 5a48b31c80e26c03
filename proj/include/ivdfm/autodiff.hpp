// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation on a tape of dense tensors.
//
// A Tape owns a flat list of nodes; creation order is a topological order, so
// the backward sweep is a single reverse pass that visits each node once.
// Graphs are built fresh per evaluation. Leaves bound to Param objects expose
// their gradients after backward(). Stochastic inputs (reparameterization
// noise, dropout masks) enter as constants drawn outside the graph, so a graph
// is deterministic given its inputs.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ivdfm/common.hpp"
#include "ivdfm/tensor.hpp"

namespace ivdfm {

// A named, persistent learnable tensor. Lives outside any tape; a tape binds
// it as a leaf and the optimizer reads gradients back per parameter.
struct Param {
  std::string name;
  Tensor value;
};

class Tape;

// Lightweight handle to a node on a tape.
struct Value {
  Tape* tape = nullptr;
  int index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Tensor& val() const;
  const std::vector<std::size_t>& shape() const { return val().shape(); }
};

enum class Op {
  Constant,
  Leaf,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  AddRowVec,
  MulRowVec,
  AddScalar,
  MulScalar,
  Relu,
  Tanh,
  Exp,
  Log,
  Abs,
  Square,
  SoftmaxRows,
  LayerNormRows,
  DropoutMask,
  SumAll,
  MeanAll,
  RowSum,
  LogSumExpCols,
  ConcatCols,
  ConcatRows,
  SliceCols,
  SliceRows,
};

const char* op_name(Op op);

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // --- graph construction -------------------------------------------------
  Value constant(Tensor t);
  Value constant_scalar(double x) { return constant(Tensor::scalar(x)); }
  // Binds a persistent parameter as a leaf; repeated calls return the same node.
  Value leaf(Param& p);

  Value matmul(Value a, Value b);
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value add_rowvec(Value x, Value v);   // x:{m,n} + v:{n} per row
  Value mul_rowvec(Value x, Value v);   // x:{m,n} * v:{n} per row
  Value add_scalar(Value x, double c);
  Value mul_scalar(Value x, double c);
  Value neg(Value x) { return mul_scalar(x, -1.0); }
  Value relu(Value x);
  Value tanh_(Value x);
  Value exp_(Value x);
  Value log_(Value x);
  Value abs_(Value x);
  Value square(Value x);
  Value softmax_rows(Value x, double temperature = 1.0);
  Value layer_norm_rows(Value x, double eps = 1e-5);
  // Multiplies by a fixed mask (0 or 1/keep values); the mask is not a node.
  Value dropout_mask(Value x, Tensor mask);
  Value sum_all(Value x);
  Value mean_all(Value x);
  Value row_sum(Value x);               // {m,n} -> {m,1}
  Value logsumexp_cols(Value x);        // {m,n} -> {m,1}
  Value concat_cols(const std::vector<Value>& xs);
  Value concat_rows(const std::vector<Value>& xs);
  Value slice_cols(Value x, std::size_t c0, std::size_t c1);  // [c0, c1)
  Value slice_rows(Value x, std::size_t r0, std::size_t r1);  // [r0, r1)
  Value row(Value x, std::size_t r) { return slice_rows(x, r, r + 1); }

  // --- evaluation ---------------------------------------------------------
  const Tensor& value(Value v) const { return nodes_[v.index].value; }
  double scalar(Value v) const;

  // Backward from a scalar loss. Gradients are (re)computed for every node
  // created before the loss; leaves not reachable from the loss keep zeros.
  void backward(Value loss);

  const Tensor& grad(Value v) const { return nodes_[v.index].grad; }
  // Gradient of a bound parameter (zeros if the parameter was never used).
  Tensor grad_of(const Param& p) const;

  // Throws naming the first op whose output contains a non-finite value.
  void assert_finite() const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Constant;
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    double attr = 0.0;       // temperature / scalar operand / eps
    std::size_t lo = 0, hi = 0;  // slice bounds
    Tensor aux;              // dropout mask
    Param* param = nullptr;  // bound leaf
  };

  friend struct Value;

  int push(Node n);
  Value make(Op op, Tensor value, std::vector<int> parents);
  Node& node(Value v) { return nodes_[v.index]; }
  const Node& node(Value v) const { return nodes_[v.index]; }
  void check_same_shape(const char* op, Value a, Value b) const;
  void backprop_node(int idx);

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> leaf_index_;
  bool grads_ready_ = false;
};

// --- gradient checking ------------------------------------------------------
//
// Central finite differences against the analytic gradient. `build` must be a
// deterministic function of the parameter values (fix RNG draws and dropout
// masks before calling). Checks every coordinate when probes_per_param == 0,
// otherwise a deterministic random subset per parameter. Coordinates where
// the two-step central differences disagree are treated as non-smooth sample
// points (|.| or ReLU kinks) and skipped.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_nonsmooth = 0;
  std::string worst_param;
};

GradCheckResult check_gradients(const std::function<Value(Tape&)>& build,
                                const std::vector<Param*>& params, double eps = 1e-5,
                                std::size_t probes_per_param = 0,
                                std::uint64_t probe_seed = 0x9d5c0ff5u);

// --- optimizer ----------------------------------------------------------------
//
// Adam-style adaptive moment estimation over a fixed parameter set.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.0);

  // Applies one update from the gradients recorded on `tape`.
  void step(const Tape& tape);
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  const std::vector<Param*>& params() const { return params_; }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  double weight_decay_ = 0.0;
  long t_ = 0;
};

}  // namespace ivdfm
