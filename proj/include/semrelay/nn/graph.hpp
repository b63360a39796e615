#pragma once

#include <Eigen/Dense>
#include <complex>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "semrelay/common.hpp"

namespace semrelay::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  // Accumulator written by Graph::backward; mutable so const models can be
  // placed on a recording graph.
  mutable Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

struct Var {
  int id = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward() walks
// them in reverse. A non-recording graph only evaluates values.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  Var param(const Parameter& p);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref ? *n.ref : n.value;
  }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  // Gradient buffer of v, allocated as zeros on first use.
  Matrix& grad(Var v);

  // Seeds d(root) = seed (root must be 1x1) and accumulates into
  // Parameter::grad of every trainable parameter reached.
  void backward(Var root, double seed = 1.0);

  // Used by op implementations: push the output value, then attach its
  // backward closure (dropped when the node needs no gradient).
  Var push(Matrix value, bool needs_grad);
  void on_backward(Var v, std::function<void()> fn);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;  // parameter leaves alias the parameter value
    Matrix grad;
    bool needs_grad = false;
    std::function<void()> backward_fn;
  };

  bool record_;
  std::deque<Node> nodes_;
};

// Elementwise / shape ops.
Var add(Graph& g, Var a, Var b);
Var add_row(Graph& g, Var a, Var row);  // row broadcast over a's rows
Var scale(Graph& g, Var a, double s);
Var matmul(Graph& g, Var a, Var b);
Var matmul_nt(Graph& g, Var a, Var b);  // a * b^T
Var rows(Graph& g, Var a, int start, int count);
Var concat_cols(Graph& g, Var a, Var b);
Var gather_rows(Graph& g, Var table, const std::vector<int>& index);

// Activations and normalization.
Var gelu(Graph& g, Var a);
Var prelu(Graph& g, Var a, Var slope);  // slope is 1x1
Var layer_norm(Graph& g, Var a, Var gain, Var shift, double eps = 1e-5);

// Multi-head scaled dot-product attention over already-projected q, k, v.
// q has Tq rows and k, v have Tk >= Tq rows; query row i sits at absolute
// position (Tk - Tq + i). With causal set, a query sees keys up to its own
// position.
Var attention(Graph& g, Var q, Var k, Var v, int heads, bool causal);

// Scales each row to mean power `power` per complex use (cols/2 uses);
// zero rows stay zero.
Var power_normalize_rows(Graph& g, Var a, double power);
// Multiplies each I/Q-interleaved row by a complex factor.
Var complex_scale_rows(Graph& g, Var a, const std::vector<std::complex<double>>& factors);

// Summed cross-entropy over rows whose target is >= 0; result is 1x1.
Var cross_entropy_sum(Graph& g, Var logits, const std::vector<int>& targets);

// Reference helpers shared with the inference path.
double gelu_value(double x);
void layer_norm_rows(const Matrix& x, const RowVector& gain, const RowVector& shift, double eps,
                     Matrix& out);

}  // namespace semrelay::nn
