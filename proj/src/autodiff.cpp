// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ivdfm {

const Tensor& Value::val() const { return tape->value(*this); }

const char* op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::AddRowVec: return "add_rowvec";
    case Op::MulRowVec: return "mul_rowvec";
    case Op::AddScalar: return "add_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Square: return "square";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::LayerNormRows: return "layer_norm_rows";
    case Op::DropoutMask: return "dropout_mask";
    case Op::SumAll: return "sum_all";
    case Op::MeanAll: return "mean_all";
    case Op::RowSum: return "row_sum";
    case Op::LogSumExpCols: return "logsumexp_cols";
    case Op::ConcatCols: return "concat_cols";
    case Op::ConcatRows: return "concat_rows";
    case Op::SliceCols: return "slice_cols";
    case Op::SliceRows: return "slice_rows";
  }
  return "?";
}

int Tape::push(Node n) {
  grads_ready_ = false;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::make(Op op, Tensor value, std::vector<int> parents) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents = std::move(parents);
  return Value{this, push(std::move(n))};
}

void Tape::check_same_shape(const char* op, Value a, Value b) const {
  if (!node(a).value.same_shape(node(b).value)) {
    throw std::invalid_argument(cat(op, ": shape mismatch ", node(a).value.shape_str(), " vs ",
                                    node(b).value.shape_str()));
  }
}

Value Tape::constant(Tensor t) { return make(Op::Constant, std::move(t), {}); }

Value Tape::leaf(Param& p) {
  auto it = leaf_index_.find(&p);
  if (it != leaf_index_.end()) return Value{this, it->second};
  Node n;
  n.op = Op::Leaf;
  n.value = p.value;
  n.param = &p;
  int idx = push(std::move(n));
  leaf_index_[&p] = idx;
  return Value{this, idx};
}

Value Tape::matmul(Value a, Value b) {
  const Tensor& A = node(a).value;
  const Tensor& B = node(b).value;
  if (A.ndim() != 2 || B.ndim() != 2 || A.cols() != B.rows()) {
    throw std::invalid_argument(
        cat("matmul: shape mismatch ", A.shape_str(), " vs ", B.shape_str()));
  }
  std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor C({m, n});
  // ikj order keeps the inner loop contiguous in both B and C.
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = A.data() + i * k;
    double* crow = C.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = B.data() + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return make(Op::MatMul, std::move(C), {a.index, b.index});
}

Value Tape::add(Value a, Value b) {
  check_same_shape("add", a, b);
  Tensor out = node(a).value;
  const Tensor& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make(Op::Add, std::move(out), {a.index, b.index});
}

Value Tape::sub(Value a, Value b) {
  check_same_shape("sub", a, b);
  Tensor out = node(a).value;
  const Tensor& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make(Op::Sub, std::move(out), {a.index, b.index});
}

Value Tape::mul(Value a, Value b) {
  check_same_shape("mul", a, b);
  Tensor out = node(a).value;
  const Tensor& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make(Op::Mul, std::move(out), {a.index, b.index});
}

Value Tape::div(Value a, Value b) {
  check_same_shape("div", a, b);
  Tensor out = node(a).value;
  const Tensor& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  return make(Op::Div, std::move(out), {a.index, b.index});
}

namespace {
void check_rowvec(const char* op, const Tensor& x, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != x.cols()) {
    throw std::invalid_argument(
        cat(op, ": shape mismatch ", x.shape_str(), " vs ", v.shape_str()));
  }
}
}  // namespace

Value Tape::add_rowvec(Value x, Value v) {
  const Tensor& X = node(x).value;
  const Tensor& V = node(v).value;
  check_rowvec("add_rowvec", X, V);
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out.at(i, j) += V[j];
  return make(Op::AddRowVec, std::move(out), {x.index, v.index});
}

Value Tape::mul_rowvec(Value x, Value v) {
  const Tensor& X = node(x).value;
  const Tensor& V = node(v).value;
  check_rowvec("mul_rowvec", X, V);
  Tensor out = X;
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) out.at(i, j) *= V[j];
  return make(Op::MulRowVec, std::move(out), {x.index, v.index});
}

Value Tape::add_scalar(Value x, double c) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e += c;
  Value r = make(Op::AddScalar, std::move(out), {x.index});
  node(r).attr = c;
  return r;
}

Value Tape::mul_scalar(Value x, double c) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e *= c;
  Value r = make(Op::MulScalar, std::move(out), {x.index});
  node(r).attr = c;
  return r;
}

Value Tape::relu(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e = e > 0.0 ? e : 0.0;
  return make(Op::Relu, std::move(out), {x.index});
}

Value Tape::tanh_(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e = std::tanh(e);
  return make(Op::Tanh, std::move(out), {x.index});
}

Value Tape::exp_(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e = std::exp(e);
  return make(Op::Exp, std::move(out), {x.index});
}

Value Tape::log_(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e = std::log(e);
  return make(Op::Log, std::move(out), {x.index});
}

Value Tape::abs_(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e = std::abs(e);
  return make(Op::Abs, std::move(out), {x.index});
}

Value Tape::square(Value x) {
  Tensor out = node(x).value;
  for (double& e : out.values()) e *= e;
  return make(Op::Square, std::move(out), {x.index});
}

Value Tape::softmax_rows(Value x, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("softmax_rows: temperature must be > 0");
  const Tensor& X = node(x).value;
  Tensor out = X;
  std::size_t m = X.rows(), n = X.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, X.at(i, j) / temperature);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double e = std::exp(X.at(i, j) / temperature - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= z;
  }
  Value r = make(Op::SoftmaxRows, std::move(out), {x.index});
  node(r).attr = temperature;
  return r;
}

Value Tape::layer_norm_rows(Value x, double eps) {
  const Tensor& X = node(x).value;
  Tensor out = X;
  std::size_t m = X.rows(), n = X.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += X.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d = X.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = (X.at(i, j) - mean) * inv;
  }
  Value r = make(Op::LayerNormRows, std::move(out), {x.index});
  node(r).attr = eps;
  return r;
}

Value Tape::dropout_mask(Value x, Tensor mask) {
  const Tensor& X = node(x).value;
  if (!X.same_shape(mask)) {
    throw std::invalid_argument(
        cat("dropout_mask: shape mismatch ", X.shape_str(), " vs ", mask.shape_str()));
  }
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Value r = make(Op::DropoutMask, std::move(out), {x.index});
  node(r).aux = std::move(mask);
  return r;
}

Value Tape::sum_all(Value x) {
  double s = 0.0;
  for (double e : node(x).value.values()) s += e;
  return make(Op::SumAll, Tensor::scalar(s), {x.index});
}

Value Tape::mean_all(Value x) {
  double s = 0.0;
  const Tensor& X = node(x).value;
  for (double e : X.values()) s += e;
  return make(Op::MeanAll, Tensor::scalar(s / static_cast<double>(X.size())), {x.index});
}

Value Tape::row_sum(Value x) {
  const Tensor& X = node(x).value;
  Tensor out({X.rows(), 1});
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) s += X.at(i, j);
    out.at(i, 0) = s;
  }
  return make(Op::RowSum, std::move(out), {x.index});
}

Value Tape::logsumexp_cols(Value x) {
  const Tensor& X = node(x).value;
  Tensor out({X.rows(), 1});
  for (std::size_t i = 0; i < X.rows(); ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < X.cols(); ++j) mx = std::max(mx, X.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < X.cols(); ++j) z += std::exp(X.at(i, j) - mx);
    out.at(i, 0) = mx + std::log(z);
  }
  return make(Op::LogSumExpCols, std::move(out), {x.index});
}

Value Tape::concat_cols(const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty input");
  std::size_t m = node(xs[0]).value.rows(), n = 0;
  for (Value v : xs) {
    if (node(v).value.rows() != m) {
      throw std::invalid_argument(cat("concat_cols: shape mismatch ",
                                      node(xs[0]).value.shape_str(), " vs ",
                                      node(v).value.shape_str()));
    }
    n += node(v).value.cols();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (Value v : xs) {
    const Tensor& X = node(v).value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < X.cols(); ++j) out.at(i, off + j) = X.at(i, j);
    off += X.cols();
  }
  std::vector<int> parents;
  for (Value v : xs) parents.push_back(v.index);
  return make(Op::ConcatCols, std::move(out), std::move(parents));
}

Value Tape::concat_rows(const std::vector<Value>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  std::size_t n = node(xs[0]).value.cols(), m = 0;
  for (Value v : xs) {
    if (node(v).value.cols() != n) {
      throw std::invalid_argument(cat("concat_rows: shape mismatch ",
                                      node(xs[0]).value.shape_str(), " vs ",
                                      node(v).value.shape_str()));
    }
    m += node(v).value.rows();
  }
  Tensor out({m, n});
  std::size_t off = 0;
  for (Value v : xs) {
    const Tensor& X = node(v).value;
    std::memcpy(out.data() + off * n, X.data(), X.size() * sizeof(double));
    off += X.rows();
  }
  std::vector<int> parents;
  for (Value v : xs) parents.push_back(v.index);
  return make(Op::ConcatRows, std::move(out), std::move(parents));
}

Value Tape::slice_cols(Value x, std::size_t c0, std::size_t c1) {
  const Tensor& X = node(x).value;
  if (c0 >= c1 || c1 > X.cols()) {
    throw std::invalid_argument(
        cat("slice_cols: bounds [", c0, ", ", c1, ") invalid for ", X.shape_str()));
  }
  Tensor out({X.rows(), c1 - c0});
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) out.at(i, j - c0) = X.at(i, j);
  Value r = make(Op::SliceCols, std::move(out), {x.index});
  node(r).lo = c0;
  node(r).hi = c1;
  return r;
}

Value Tape::slice_rows(Value x, std::size_t r0, std::size_t r1) {
  const Tensor& X = node(x).value;
  if (r0 >= r1 || r1 > X.rows()) {
    throw std::invalid_argument(
        cat("slice_rows: bounds [", r0, ", ", r1, ") invalid for ", X.shape_str()));
  }
  std::size_t n = X.cols();
  Tensor out({r1 - r0, n});
  std::memcpy(out.data(), X.data() + r0 * n, (r1 - r0) * n * sizeof(double));
  Value r = make(Op::SliceRows, std::move(out), {x.index});
  node(r).lo = r0;
  node(r).hi = r1;
  return r;
}

double Tape::scalar(Value v) const {
  const Tensor& t = node(v).value;
  if (t.size() != 1) {
    throw std::invalid_argument(cat("scalar: node has shape ", t.shape_str()));
  }
  return t[0];
}

void Tape::backward(Value loss) {
  const Tensor& lv = node(loss).value;
  if (lv.size() != 1) {
    throw std::invalid_argument(
        cat("backward: loss must be scalar, got shape ", lv.shape_str()));
  }
  for (Node& n : nodes_) {
    n.grad = Tensor::zeros(n.value.shape());
  }
  nodes_[loss.index].grad[0] = 1.0;
  for (int i = loss.index; i >= 0; --i) backprop_node(i);
  grads_ready_ = true;
}

void Tape::backprop_node(int idx) {
  Node& n = nodes_[idx];
  if (n.parents.empty()) return;
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::MatMul: {
      Node& pa = nodes_[n.parents[0]];
      Node& pb = nodes_[n.parents[1]];
      const Tensor& A = pa.value;
      const Tensor& B = pb.value;
      std::size_t m = A.rows(), k = A.cols(), c = B.cols();
      // dA += G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t kk = 0; kk < k; ++kk) {
          double s = 0.0;
          const double* grow = g.data() + i * c;
          const double* brow = B.data() + kk * c;
          for (std::size_t j = 0; j < c; ++j) s += grow[j] * brow[j];
          pa.grad.at(i, kk) += s;
        }
      // dB += A^T * G
      for (std::size_t kk = 0; kk < k; ++kk) {
        double* brow = pb.grad.data() + kk * c;
        for (std::size_t i = 0; i < m; ++i) {
          double aik = A.at(i, kk);
          if (aik == 0.0) continue;
          const double* grow = g.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) brow[j] += aik * grow[j];
        }
      }
      break;
    }
    case Op::Add: {
      Node& pa = nodes_[n.parents[0]];
      Node& pb = nodes_[n.parents[1]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        pa.grad[i] += g[i];
        pb.grad[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      Node& pa = nodes_[n.parents[0]];
      Node& pb = nodes_[n.parents[1]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        pa.grad[i] += g[i];
        pb.grad[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      Node& pa = nodes_[n.parents[0]];
      Node& pb = nodes_[n.parents[1]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        pa.grad[i] += g[i] * pb.value[i];
        pb.grad[i] += g[i] * pa.value[i];
      }
      break;
    }
    case Op::Div: {
      Node& pa = nodes_[n.parents[0]];
      Node& pb = nodes_[n.parents[1]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        double b = pb.value[i];
        pa.grad[i] += g[i] / b;
        pb.grad[i] -= g[i] * pa.value[i] / (b * b);
      }
      break;
    }
    case Op::AddRowVec: {
      Node& px = nodes_[n.parents[0]];
      Node& pv = nodes_[n.parents[1]];
      std::size_t m = px.value.rows(), c = px.value.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          px.grad.at(i, j) += g.at(i, j);
          pv.grad[j] += g.at(i, j);
        }
      break;
    }
    case Op::MulRowVec: {
      Node& px = nodes_[n.parents[0]];
      Node& pv = nodes_[n.parents[1]];
      std::size_t m = px.value.rows(), c = px.value.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          px.grad.at(i, j) += g.at(i, j) * pv.value[j];
          pv.grad[j] += g.at(i, j) * px.value.at(i, j);
        }
      break;
    }
    case Op::AddScalar: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i];
      break;
    }
    case Op::MulScalar: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] * n.attr;
      break;
    }
    case Op::Relu: {
      Node& px = nodes_[n.parents[0]];
      // Subgradient at 0 is 0.
      for (std::size_t i = 0; i < g.size(); ++i)
        if (px.value[i] > 0.0) px.grad[i] += g[i];
      break;
    }
    case Op::Tanh: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Exp: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] * n.value[i];
      break;
    }
    case Op::Log: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] / px.value[i];
      break;
    }
    case Op::Abs: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) {
        double x = px.value[i];
        px.grad[i] += g[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
      }
      break;
    }
    case Op::Square: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] * 2.0 * px.value[i];
      break;
    }
    case Op::SoftmaxRows: {
      Node& px = nodes_[n.parents[0]];
      std::size_t m = n.value.rows(), c = n.value.cols();
      double inv_t = 1.0 / n.attr;
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * n.value.at(i, j);
        for (std::size_t j = 0; j < c; ++j)
          px.grad.at(i, j) += inv_t * n.value.at(i, j) * (g.at(i, j) - dot);
      }
      break;
    }
    case Op::LayerNormRows: {
      Node& px = nodes_[n.parents[0]];
      std::size_t m = n.value.rows(), c = n.value.cols();
      double eps = n.attr;
      for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += px.value.at(i, j);
        mean /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j) {
          double d = px.value.at(i, j) - mean;
          var += d * d;
        }
        var /= static_cast<double>(c);
        double inv = 1.0 / std::sqrt(var + eps);
        double gmean = 0.0, gydot = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gmean += g.at(i, j);
          gydot += g.at(i, j) * n.value.at(i, j);
        }
        gmean /= static_cast<double>(c);
        gydot /= static_cast<double>(c);
        for (std::size_t j = 0; j < c; ++j)
          px.grad.at(i, j) += inv * (g.at(i, j) - gmean - n.value.at(i, j) * gydot);
      }
      break;
    }
    case Op::DropoutMask: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < g.size(); ++i) px.grad[i] += g[i] * n.aux[i];
      break;
    }
    case Op::SumAll: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += g[0];
      break;
    }
    case Op::MeanAll: {
      Node& px = nodes_[n.parents[0]];
      double s = g[0] / static_cast<double>(px.grad.size());
      for (std::size_t i = 0; i < px.grad.size(); ++i) px.grad[i] += s;
      break;
    }
    case Op::RowSum: {
      Node& px = nodes_[n.parents[0]];
      std::size_t m = px.value.rows(), c = px.value.cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) px.grad.at(i, j) += g.at(i, 0);
      break;
    }
    case Op::LogSumExpCols: {
      Node& px = nodes_[n.parents[0]];
      std::size_t m = px.value.rows(), c = px.value.cols();
      for (std::size_t i = 0; i < m; ++i) {
        double lse = n.value.at(i, 0);
        for (std::size_t j = 0; j < c; ++j)
          px.grad.at(i, j) += g.at(i, 0) * std::exp(px.value.at(i, j) - lse);
      }
      break;
    }
    case Op::ConcatCols: {
      std::size_t off = 0;
      std::size_t m = n.value.rows();
      for (int pi : n.parents) {
        Node& p = nodes_[pi];
        std::size_t c = p.value.cols();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) p.grad.at(i, j) += g.at(i, off + j);
        off += c;
      }
      break;
    }
    case Op::ConcatRows: {
      std::size_t off = 0;
      std::size_t c = n.value.cols();
      for (int pi : n.parents) {
        Node& p = nodes_[pi];
        for (std::size_t i = 0; i < p.value.rows(); ++i)
          for (std::size_t j = 0; j < c; ++j) p.grad.at(i, j) += g.at(off + i, j);
        off += p.value.rows();
      }
      break;
    }
    case Op::SliceCols: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < n.value.rows(); ++i)
        for (std::size_t j = 0; j < n.value.cols(); ++j)
          px.grad.at(i, n.lo + j) += g.at(i, j);
      break;
    }
    case Op::SliceRows: {
      Node& px = nodes_[n.parents[0]];
      for (std::size_t i = 0; i < n.value.rows(); ++i)
        for (std::size_t j = 0; j < n.value.cols(); ++j)
          px.grad.at(n.lo + i, j) += g.at(i, j);
      break;
    }
    case Op::Constant:
    case Op::Leaf:
      break;
  }
}

Tensor Tape::grad_of(const Param& p) const {
  auto it = leaf_index_.find(&p);
  if (it == leaf_index_.end() || !grads_ready_) return Tensor::zeros(p.value.shape());
  return nodes_[it->second].grad;
}

void Tape::assert_finite() const {
  for (const Node& n : nodes_) {
    if (!n.value.all_finite()) {
      throw std::runtime_error(
          cat("non-finite value in op '", op_name(n.op), "' with shape ", n.value.shape_str()));
    }
  }
}

GradCheckResult check_gradients(const std::function<Value(Tape&)>& build,
                                const std::vector<Param*>& params, double eps,
                                std::size_t probes_per_param, std::uint64_t probe_seed) {
  GradCheckResult result;

  Tape tape;
  Value loss = build(tape);
  tape.assert_finite();
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(tape.grad_of(*p));

  auto eval = [&](double* slot, double x) {
    double saved = *slot;
    *slot = x;
    Tape t;
    double out = t.scalar(build(t));
    *slot = saved;
    return out;
  };

  Rng probe_rng(probe_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    std::size_t n = p.value.size();
    std::vector<std::size_t> coords;
    if (probes_per_param == 0 || probes_per_param >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < probes_per_param; ++i) coords.push_back(probe_rng.index(n));
    }
    for (std::size_t c : coords) {
      double x0 = p.value[c];
      double h = eps * std::max(1.0, std::abs(x0));
      double d1 = (eval(&p.value[c], x0 + h) - eval(&p.value[c], x0 - h)) / (2.0 * h);
      double d2 = (eval(&p.value[c], x0 + 2.0 * h) - eval(&p.value[c], x0 - 2.0 * h)) / (4.0 * h);
      double scale = std::max({std::abs(d1), std::abs(d2), 1e-6});
      if (std::abs(d1 - d2) > 0.25 * scale) {
        // The two central estimates disagree badly: the sample point sits on
        // or next to a non-smooth kink, where finite differences are invalid.
        ++result.skipped_nonsmooth;
        continue;
      }
      // Richardson extrapolation of the two central estimates.
      double numeric = (4.0 * d1 - d2) / 3.0;
      double rel = std::abs(analytic[pi][c] - numeric) / std::max(std::abs(numeric), 1e-8);
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
      }
    }
  }
  return result;
}

AdamOptimizer::AdamOptimizer(std::vector<Param*> params, double learning_rate, double beta1,
                             double beta2, double eps, double weight_decay)
    : params_(std::move(params)),
      lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay) {
  for (Param* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void AdamOptimizer::step(const Tape& tape) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor g = tape.grad_of(*params_[i]);
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    Tensor& x = params_[i]->value;
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double mh = m[j] / bc1;
      double vh = v[j] / bc2;
      x[j] -= lr_ * (mh / (std::sqrt(vh) + eps_) + weight_decay_ * x[j]);
    }
  }
}

}  // namespace ivdfm
