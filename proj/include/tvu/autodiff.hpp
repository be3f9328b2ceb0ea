#pragma once

// Define-then-run reverse-mode differentiation over dense double matrices.
//
// A Graph records operations on Var handles. Shapes are inferred while the
// graph is built; values are produced by Graph::forward, which may be called
// repeatedly with different leaf assignments. Graph::backward returns the
// gradient of the (1x1) root with respect to every differentiable leaf.
//
// Scalars are 1x1 matrices. Binary elementwise ops broadcast a 1x1 operand;
// no other broadcasting happens implicitly.

#include <Eigen/Core>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace tvu::ad {

using Matrix = Eigen::MatrixXd;
using Assignments = std::map<std::string, Matrix>;
using GradientMap = std::map<std::string, Matrix>;

enum class OpKind {
  Leaf,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  Shift,
  MatMul,
  Transpose,
  Exp,
  Log,
  Sqrt,
  Square,
  Pow,
  Cos,
  Acos,
  Max,
  Min,
  Clamp,
  SoftmaxRow,
  LogSoftmaxRow,
  LogSumExpRow,
  LayerNormRow,
  Gelu,
  Relu,
  Sigmoid,
  Softplus,
  Tanh,
  Sum,
  Mean,
  RowSum,
  Dot,
  Block,
  HCat,
  VCat,
  AddRowBroadcast,
  MulColBroadcast,
  SelectLE,
  CausalConv,
  GatherRows,
};

const char* to_string(OpKind kind);

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int index) : graph_(graph), index_(index) {}

  Graph* graph() const { return graph_; }
  int index() const { return index_; }
  bool valid() const { return graph_ != nullptr; }

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  /// Value cached by the most recent forward pass.
  const Matrix& value() const;
  double scalar() const;

 private:
  Graph* graph_ = nullptr;
  int index_ = -1;
};

struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<int> parents;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  double p0 = 0.0;  // op-specific constants (scale factor, clamp bounds, ...)
  double p1 = 0.0;
  std::vector<Eigen::Index> ints;  // block offsets, row permutation
  Matrix value;
  Matrix aux;  // forward scratch reused by backward
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named input. Only differentiable leaves appear in the GradientMap.
  Var leaf(const std::string& name, Matrix initial, bool differentiable = true);
  Var leaf(const std::string& name, double initial, bool differentiable = true);
  Var constant(Matrix value);
  Var constant(double value);

  /// Root defaults to the most recently added node.
  void set_root(Var root);
  Var root() const;

  /// Evaluates every node. Assigned leaves keep their new values for later passes.
  const Matrix& forward(const Assignments& assignments = {});
  double forward_scalar(const Assignments& assignments = {});

  /// Gradients of the scalar root. Throws std::logic_error before any forward pass.
  GradientMap backward() const;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int index) const { return nodes_.at(index); }
  const std::map<std::string, int>& leaves() const { return leaf_index_; }
  bool is_differentiable(const std::string& leaf) const;
  const Matrix& leaf_value(const std::string& leaf) const;

  // Used by the free-function builders below.
  Var add_node(Node node);

 private:
  void evaluate(Node& node) const;

  std::vector<Node> nodes_;
  std::map<std::string, int> leaf_index_;
  std::map<std::string, bool> differentiable_;
  int root_ = -1;
  bool evaluated_ = false;
};

// Elementwise arithmetic (1x1 operands broadcast).
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
Var pow(Var a, double exponent);
Var cos(Var a);
Var acos(Var a);
Var maximum(Var a, Var b);
Var minimum(Var a, Var b);
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row-wise log-sum-exp, returns rows x 1.
Var logsumexp_rows(Var a);
/// Row-wise normalization to zero mean / unit variance (no affine part).
Var layer_norm_rows(Var a, double eps = 1e-5);
Var gelu(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var tanh(Var a);
Var sum(Var a);
Var mean(Var a);
/// rows x 1 vector of row sums.
Var row_sum(Var a);
Var dot(Var a, Var b);
Var block(Var a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols);
Var row(Var a, Eigen::Index i);
Var col(Var a, Eigen::Index j);
Var element(Var a, Eigen::Index i, Eigen::Index j);
Var hcat(const std::vector<Var>& parts);
Var vcat(const std::vector<Var>& parts);
/// m + 1 * r for a 1 x cols row vector r.
Var add_row_broadcast(Var m, Var r);
/// diag(c) * m for a rows x 1 column vector c.
Var mul_col_broadcast(Var m, Var c);
/// Elementwise: x <= threshold ? if_le : otherwise. Gradient flows to the taken branch.
Var select_le(Var x, double threshold, Var if_le, Var otherwise);
/// Column-wise causal convolution of signal (L x C) with kernel rows (C x K).
Var causal_conv(Var kernels, Var signals);
/// Output row i is input row rows[i]; indices may repeat.
Var gather_rows(Var a, const std::vector<Eigen::Index>& rows);
/// gather_rows restricted to a permutation of all rows.
Var permute_rows(Var a, const std::vector<Eigen::Index>& perm);

/// Central-difference gradient of f at x, component-wise.
Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double h);

/// Central-difference gradient of the graph root with respect to one leaf.
/// Leaves the graph's assignments as they were on entry.
Matrix finite_diff_gradient(Graph& graph, const std::string& leaf, double h);

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
double relative_error(const Matrix& a, const Matrix& b);

}  // namespace tvu::ad
