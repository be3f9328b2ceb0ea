#include "tvu/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tvu/errors.hpp"
#include "tvu/fft.hpp"

namespace tvu::ad {
namespace {

bool is_scalar(Eigen::Index r, Eigen::Index c) { return r == 1 && c == 1; }

Matrix broadcast(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return Matrix::Constant(rows, cols, m(0, 0));
}

Graph& graph_of(Var a) {
  if (!a.valid()) throw std::logic_error("autodiff: operation on an empty Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  Graph& g = graph_of(a);
  if (&graph_of(b) != &g) throw std::logic_error("autodiff: operands belong to different graphs");
  return g;
}

Var unary(OpKind kind, Var a, double p0 = 0.0, double p1 = 0.0) {
  Node n;
  n.kind = kind;
  n.parents = {a.index()};
  n.rows = a.rows();
  n.cols = a.cols();
  n.p0 = p0;
  n.p1 = p1;
  return graph_of(a).add_node(std::move(n));
}

Var binary_elementwise(OpKind kind, Var a, Var b) {
  Graph& g = graph_of(a, b);
  Node n;
  n.kind = kind;
  n.parents = {a.index(), b.index()};
  if (is_scalar(a.rows(), a.cols())) {
    n.rows = b.rows();
    n.cols = b.cols();
  } else if (is_scalar(b.rows(), b.cols()) || (a.rows() == b.rows() && a.cols() == b.cols())) {
    n.rows = a.rows();
    n.cols = a.cols();
  } else {
    throw ShapeError(std::string("autodiff: ") + to_string(kind) + " shape mismatch " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  return g.add_node(std::move(n));
}

Var reduce_to_scalar(OpKind kind, Var a) {
  Node n;
  n.kind = kind;
  n.parents = {a.index()};
  n.rows = 1;
  n.cols = 1;
  return graph_of(a).add_node(std::move(n));
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

Matrix stable_softmax_rows(const Matrix& x) {
  Matrix y = x.colwise() - x.rowwise().maxCoeff();
  y = y.array().exp().matrix();
  Eigen::VectorXd s = y.rowwise().sum();
  return s.cwiseInverse().asDiagonal() * y;
}

Eigen::VectorXd logsumexp(const Matrix& x) {
  Eigen::VectorXd m = x.rowwise().maxCoeff();
  Eigen::VectorXd s = (x.colwise() - m).array().exp().rowwise().sum().matrix();
  return m + s.array().log().matrix();
}

Matrix reverse_rows(const Matrix& m) { return m.colwise().reverse(); }

}  // namespace

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Neg: return "neg";
    case OpKind::Scale: return "scale";
    case OpKind::Shift: return "shift";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Square: return "square";
    case OpKind::Pow: return "pow";
    case OpKind::Cos: return "cos";
    case OpKind::Acos: return "acos";
    case OpKind::Max: return "max";
    case OpKind::Min: return "min";
    case OpKind::Clamp: return "clamp";
    case OpKind::SoftmaxRow: return "softmax-row";
    case OpKind::LogSoftmaxRow: return "log-softmax-row";
    case OpKind::LogSumExpRow: return "logsumexp-row";
    case OpKind::LayerNormRow: return "layer-norm";
    case OpKind::Gelu: return "gelu";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softplus: return "softplus";
    case OpKind::Tanh: return "tanh";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::RowSum: return "row-sum";
    case OpKind::Dot: return "dot";
    case OpKind::Block: return "block";
    case OpKind::HCat: return "hcat";
    case OpKind::VCat: return "vcat";
    case OpKind::AddRowBroadcast: return "add-row-broadcast";
    case OpKind::MulColBroadcast: return "mul-col-broadcast";
    case OpKind::SelectLE: return "select-le";
    case OpKind::CausalConv: return "causal-conv";
    case OpKind::GatherRows: return "gather-rows";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Var

Eigen::Index Var::rows() const { return graph_->node(index_).rows; }
Eigen::Index Var::cols() const { return graph_->node(index_).cols; }
const Matrix& Var::value() const { return graph_->node(index_).value; }

double Var::scalar() const {
  const Matrix& v = value();
  if (!is_scalar(v.rows(), v.cols())) throw ShapeError("Var::scalar on a non-scalar node");
  return v(0, 0);
}

// ---------------------------------------------------------------------------
// Graph

Var Graph::add_node(Node node) {
  nodes_.push_back(std::move(node));
  root_ = static_cast<int>(nodes_.size()) - 1;
  evaluated_ = false;
  return Var(this, root_);
}

Var Graph::leaf(const std::string& name, Matrix initial, bool differentiable) {
  if (leaf_index_.contains(name)) throw std::invalid_argument("autodiff: duplicate leaf '" + name + "'");
  Node n;
  n.kind = OpKind::Leaf;
  n.rows = initial.rows();
  n.cols = initial.cols();
  n.value = std::move(initial);
  Var v = add_node(std::move(n));
  leaf_index_[name] = v.index();
  differentiable_[name] = differentiable;
  return v;
}

Var Graph::leaf(const std::string& name, double initial, bool differentiable) {
  return leaf(name, Matrix::Constant(1, 1, initial), differentiable);
}

Var Graph::constant(Matrix value) {
  Node n;
  n.kind = OpKind::Constant;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  return add_node(std::move(n));
}

Var Graph::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

void Graph::set_root(Var root) {
  if (root.graph() != this) throw std::logic_error("autodiff: root belongs to another graph");
  root_ = root.index();
  evaluated_ = false;
}

Var Graph::root() const {
  if (root_ < 0) throw std::logic_error("autodiff: empty graph");
  return Var(const_cast<Graph*>(this), root_);
}

bool Graph::is_differentiable(const std::string& leaf) const { return differentiable_.at(leaf); }

const Matrix& Graph::leaf_value(const std::string& leaf) const { return nodes_.at(leaf_index_.at(leaf)).value; }

const Matrix& Graph::forward(const Assignments& assignments) {
  if (root_ < 0) throw std::logic_error("autodiff: forward on an empty graph");
  for (const auto& [name, value] : assignments) {
    auto it = leaf_index_.find(name);
    if (it == leaf_index_.end()) throw std::invalid_argument("autodiff: unknown leaf '" + name + "'");
    Node& n = nodes_[it->second];
    if (value.rows() != n.rows || value.cols() != n.cols) {
      throw ShapeError("autodiff: assignment to '" + name + "' has the wrong shape");
    }
    n.value = value;
  }
  for (Node& n : nodes_) evaluate(n);
  evaluated_ = true;
  return nodes_[root_].value;
}

double Graph::forward_scalar(const Assignments& assignments) {
  const Matrix& v = forward(assignments);
  if (!is_scalar(v.rows(), v.cols())) throw ShapeError("autodiff: root is not scalar");
  return v(0, 0);
}

void Graph::evaluate(Node& n) const {
  auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.parents[k]].value; };
  switch (n.kind) {
    case OpKind::Leaf:
    case OpKind::Constant:
      return;
    case OpKind::Add:
      n.value = broadcast(in(0), n.rows, n.cols) + broadcast(in(1), n.rows, n.cols);
      return;
    case OpKind::Sub:
      n.value = broadcast(in(0), n.rows, n.cols) - broadcast(in(1), n.rows, n.cols);
      return;
    case OpKind::Mul:
      n.value = broadcast(in(0), n.rows, n.cols).cwiseProduct(broadcast(in(1), n.rows, n.cols));
      return;
    case OpKind::Div:
      n.value = broadcast(in(0), n.rows, n.cols).cwiseQuotient(broadcast(in(1), n.rows, n.cols));
      return;
    case OpKind::Neg:
      n.value = -in(0);
      return;
    case OpKind::Scale:
      n.value = n.p0 * in(0);
      return;
    case OpKind::Shift:
      n.value = in(0).array() + n.p0;
      return;
    case OpKind::MatMul:
      n.value.noalias() = in(0) * in(1);
      return;
    case OpKind::Transpose:
      n.value = in(0).transpose();
      return;
    case OpKind::Exp:
      n.value = in(0).array().exp().matrix();
      return;
    case OpKind::Log:
      if ((in(0).array() <= 0.0).any()) throw DomainError("autodiff: log of a non-positive value");
      n.value = in(0).array().log().matrix();
      return;
    case OpKind::Sqrt:
      if ((in(0).array() < 0.0).any()) throw DomainError("autodiff: sqrt of a negative value");
      n.value = in(0).array().sqrt().matrix();
      return;
    case OpKind::Square:
      n.value = in(0).array().square().matrix();
      return;
    case OpKind::Pow:
      if (n.p0 != std::round(n.p0) && (in(0).array() < 0.0).any()) {
        throw DomainError("autodiff: fractional power of a negative value");
      }
      n.value = in(0).array().pow(n.p0).matrix();
      return;
    case OpKind::Cos:
      n.value = in(0).array().cos().matrix();
      return;
    case OpKind::Acos:
      if ((in(0).array().abs() > 1.0).any()) throw DomainError("autodiff: arccos argument outside [-1, 1]");
      n.value = in(0).array().acos().matrix();
      return;
    case OpKind::Max:
      n.value = broadcast(in(0), n.rows, n.cols).cwiseMax(broadcast(in(1), n.rows, n.cols));
      return;
    case OpKind::Min:
      n.value = broadcast(in(0), n.rows, n.cols).cwiseMin(broadcast(in(1), n.rows, n.cols));
      return;
    case OpKind::Clamp:
      n.value = in(0).cwiseMax(n.p0).cwiseMin(n.p1);
      return;
    case OpKind::SoftmaxRow:
      n.value = stable_softmax_rows(in(0));
      return;
    case OpKind::LogSoftmaxRow:
      n.value = in(0).colwise() - logsumexp(in(0));
      return;
    case OpKind::LogSumExpRow:
      n.value = logsumexp(in(0));
      return;
    case OpKind::LayerNormRow: {
      const Matrix& x = in(0);
      const Eigen::VectorXd mu = x.rowwise().mean();
      Matrix centered = x.colwise() - mu;
      Eigen::VectorXd var = centered.array().square().rowwise().mean().matrix();
      Eigen::VectorXd inv = (var.array() + n.p0).rsqrt().matrix();
      n.value = inv.asDiagonal() * centered;
      n.aux = inv;
      return;
    }
    case OpKind::Gelu:
      n.value = in(0).unaryExpr([](double x) { return x * normal_cdf(x); });
      return;
    case OpKind::Relu:
      n.value = in(0).cwiseMax(0.0);
      return;
    case OpKind::Sigmoid:
      n.value = in(0).unaryExpr([](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      });
      return;
    case OpKind::Softplus:
      n.value = in(0).unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
      return;
    case OpKind::Tanh:
      n.value = in(0).array().tanh().matrix();
      return;
    case OpKind::Sum:
      n.value = Matrix::Constant(1, 1, in(0).sum());
      return;
    case OpKind::Mean:
      n.value = Matrix::Constant(1, 1, in(0).mean());
      return;
    case OpKind::RowSum:
      n.value = in(0).rowwise().sum();
      return;
    case OpKind::Dot:
      n.value = Matrix::Constant(1, 1, in(0).cwiseProduct(in(1)).sum());
      return;
    case OpKind::Block:
      n.value = in(0).block(n.ints[0], n.ints[1], n.rows, n.cols);
      return;
    case OpKind::HCat: {
      n.value.resize(n.rows, n.cols);
      Eigen::Index c = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        n.value.middleCols(c, in(k).cols()) = in(k);
        c += in(k).cols();
      }
      return;
    }
    case OpKind::VCat: {
      n.value.resize(n.rows, n.cols);
      Eigen::Index r = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        n.value.middleRows(r, in(k).rows()) = in(k);
        r += in(k).rows();
      }
      return;
    }
    case OpKind::AddRowBroadcast:
      n.value = in(0).rowwise() + in(1).row(0);
      return;
    case OpKind::MulColBroadcast:
      n.value = in(1).col(0).asDiagonal() * in(0);
      return;
    case OpKind::SelectLE: {
      const Matrix& x = in(0);
      const Matrix a = broadcast(in(1), n.rows, n.cols);
      const Matrix b = broadcast(in(2), n.rows, n.cols);
      n.value = (x.array() <= n.p0).select(a, b);
      return;
    }
    case OpKind::CausalConv:
      n.value = fft_convolve_columns(in(0), in(1));
      return;
    case OpKind::GatherRows: {
      n.value.resize(n.rows, n.cols);
      for (Eigen::Index i = 0; i < n.rows; ++i) n.value.row(i) = in(0).row(n.ints[i]);
      return;
    }
  }
}

GradientMap Graph::backward() const {
  if (!evaluated_) throw std::logic_error("autodiff: backward called before forward");
  const Node& rootNode = nodes_[root_];
  if (!is_scalar(rootNode.rows, rootNode.cols)) throw ShapeError("autodiff: backward needs a scalar root");

  std::vector<Matrix> adj(nodes_.size());
  auto accumulate = [&](int idx, const Matrix& g) {
    const Node& t = nodes_[idx];
    if (t.kind == OpKind::Constant) return;
    Matrix contrib = (is_scalar(t.rows, t.cols) && !is_scalar(g.rows(), g.cols())) ? Matrix::Constant(1, 1, g.sum()) : g;
    if (adj[idx].size() == 0) {
      adj[idx] = std::move(contrib);
    } else {
      adj[idx] += contrib;
    }
  };

  adj[root_] = Matrix::Ones(1, 1);
  for (int i = root_; i >= 0; --i) {
    if (adj[i].size() == 0) continue;
    const Node& n = nodes_[i];
    const Matrix& g = adj[i];
    auto in = [&](std::size_t k) -> const Matrix& { return nodes_[n.parents[k]].value; };
    auto pid = [&](std::size_t k) { return n.parents[k]; };

    switch (n.kind) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::Add:
        accumulate(pid(0), g);
        accumulate(pid(1), g);
        break;
      case OpKind::Sub:
        accumulate(pid(0), g);
        accumulate(pid(1), -g);
        break;
      case OpKind::Mul:
        accumulate(pid(0), g.cwiseProduct(broadcast(in(1), n.rows, n.cols)));
        accumulate(pid(1), g.cwiseProduct(broadcast(in(0), n.rows, n.cols)));
        break;
      case OpKind::Div: {
        const Matrix a = broadcast(in(0), n.rows, n.cols);
        const Matrix b = broadcast(in(1), n.rows, n.cols);
        accumulate(pid(0), g.cwiseQuotient(b));
        accumulate(pid(1), -(g.cwiseProduct(a)).cwiseQuotient(b.cwiseProduct(b)));
        break;
      }
      case OpKind::Neg:
        accumulate(pid(0), -g);
        break;
      case OpKind::Scale:
        accumulate(pid(0), n.p0 * g);
        break;
      case OpKind::Shift:
        accumulate(pid(0), g);
        break;
      case OpKind::MatMul:
        accumulate(pid(0), g * in(1).transpose());
        accumulate(pid(1), in(0).transpose() * g);
        break;
      case OpKind::Transpose:
        accumulate(pid(0), g.transpose());
        break;
      case OpKind::Exp:
        accumulate(pid(0), g.cwiseProduct(n.value));
        break;
      case OpKind::Log:
        accumulate(pid(0), g.cwiseQuotient(in(0)));
        break;
      case OpKind::Sqrt:
        accumulate(pid(0), (0.5 * g.array() / n.value.array()).matrix());
        break;
      case OpKind::Square:
        accumulate(pid(0), 2.0 * g.cwiseProduct(in(0)));
        break;
      case OpKind::Pow:
        accumulate(pid(0), (n.p0 * g.array() * in(0).array().pow(n.p0 - 1.0)).matrix());
        break;
      case OpKind::Cos:
        accumulate(pid(0), (-g.array() * in(0).array().sin()).matrix());
        break;
      case OpKind::Acos:
        accumulate(pid(0), (-g.array() / (1.0 - in(0).array().square()).sqrt()).matrix());
        break;
      case OpKind::Max:
      case OpKind::Min: {
        const Matrix a = broadcast(in(0), n.rows, n.cols);
        const Matrix b = broadcast(in(1), n.rows, n.cols);
        // Ties follow the right limit in the first operand: max -> first, min -> second.
        const auto takeA = (n.kind == OpKind::Max) ? (a.array() >= b.array()).eval() : (a.array() < b.array()).eval();
        accumulate(pid(0), takeA.select(g, Matrix::Zero(n.rows, n.cols)));
        accumulate(pid(1), takeA.select(Matrix::Zero(n.rows, n.cols), g));
        break;
      }
      case OpKind::Clamp: {
        const auto pass = (in(0).array() >= n.p0) && (in(0).array() < n.p1);
        accumulate(pid(0), pass.select(g, Matrix::Zero(n.rows, n.cols)));
        break;
      }
      case OpKind::SoftmaxRow: {
        const Matrix& y = n.value;
        Eigen::VectorXd s = g.cwiseProduct(y).rowwise().sum();
        accumulate(pid(0), y.cwiseProduct(g.colwise() - s));
        break;
      }
      case OpKind::LogSoftmaxRow: {
        const Matrix p = n.value.array().exp().matrix();
        Eigen::VectorXd s = g.rowwise().sum();
        accumulate(pid(0), g - s.asDiagonal() * p);
        break;
      }
      case OpKind::LogSumExpRow: {
        const Matrix p = stable_softmax_rows(in(0));
        accumulate(pid(0), g.col(0).asDiagonal() * p);
        break;
      }
      case OpKind::LayerNormRow: {
        const Matrix& y = n.value;
        Eigen::VectorXd gm = g.rowwise().mean();
        Eigen::VectorXd gym = g.cwiseProduct(y).rowwise().mean();
        Matrix dx = (g.colwise() - gm) - gym.asDiagonal() * y;
        accumulate(pid(0), n.aux.col(0).asDiagonal() * dx);
        break;
      }
      case OpKind::Gelu:
        accumulate(pid(0), g.cwiseProduct(in(0).unaryExpr([](double x) { return normal_cdf(x) + x * normal_pdf(x); })));
        break;
      case OpKind::Relu:
        accumulate(pid(0), (in(0).array() >= 0.0).select(g, Matrix::Zero(n.rows, n.cols)));
        break;
      case OpKind::Sigmoid:
        accumulate(pid(0), (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        break;
      case OpKind::Softplus:
        accumulate(pid(0), g.cwiseProduct(in(0).unaryExpr([](double x) {
          return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        })));
        break;
      case OpKind::Tanh:
        accumulate(pid(0), (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case OpKind::Sum:
        accumulate(pid(0), Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0)));
        break;
      case OpKind::Mean:
        accumulate(pid(0), Matrix::Constant(in(0).rows(), in(0).cols(), g(0, 0) / static_cast<double>(in(0).size())));
        break;
      case OpKind::RowSum:
        accumulate(pid(0), g.col(0).replicate(1, in(0).cols()));
        break;
      case OpKind::Dot:
        accumulate(pid(0), g(0, 0) * in(1));
        accumulate(pid(1), g(0, 0) * in(0));
        break;
      case OpKind::Block: {
        Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
        d.block(n.ints[0], n.ints[1], n.rows, n.cols) = g;
        accumulate(pid(0), d);
        break;
      }
      case OpKind::HCat: {
        Eigen::Index c = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          accumulate(pid(k), g.middleCols(c, in(k).cols()));
          c += in(k).cols();
        }
        break;
      }
      case OpKind::VCat: {
        Eigen::Index r = 0;
        for (std::size_t k = 0; k < n.parents.size(); ++k) {
          accumulate(pid(k), g.middleRows(r, in(k).rows()));
          r += in(k).rows();
        }
        break;
      }
      case OpKind::AddRowBroadcast:
        accumulate(pid(0), g);
        accumulate(pid(1), g.colwise().sum());
        break;
      case OpKind::MulColBroadcast:
        accumulate(pid(0), in(1).col(0).asDiagonal() * g);
        accumulate(pid(1), g.cwiseProduct(in(0)).rowwise().sum());
        break;
      case OpKind::SelectLE: {
        const auto le = in(0).array() <= n.p0;
        accumulate(pid(1), le.select(g, Matrix::Zero(n.rows, n.cols)));
        accumulate(pid(2), le.select(Matrix::Zero(n.rows, n.cols), g));
        break;
      }
      case OpKind::CausalConv: {
        // y[t] = sum_j k[j] x[t-j]; both adjoints are correlations with g,
        // computed as convolutions against the time-reversed adjoint.
        const Matrix& kern = in(0);
        const Matrix& sig = in(1);
        const Eigen::Index len = sig.rows();
        const Matrix grev = reverse_rows(g);
        accumulate(pid(1), reverse_rows(fft_convolve_columns(kern, grev)));
        Matrix sigAsKernels = sig.transpose();
        Matrix dk_rev = fft_convolve_columns(sigAsKernels, grev);  // len x C
        Matrix dk = Matrix::Zero(kern.rows(), kern.cols());
        const Eigen::Index usable = std::min<Eigen::Index>(kern.cols(), len);
        for (Eigen::Index j = 0; j < usable; ++j) dk.col(j) = dk_rev.row(len - 1 - j).transpose();
        accumulate(pid(0), dk);
        break;
      }
      case OpKind::GatherRows: {
        Matrix d = Matrix::Zero(in(0).rows(), in(0).cols());
        for (Eigen::Index r = 0; r < n.rows; ++r) d.row(n.ints[r]) += g.row(r);
        accumulate(pid(0), d);
        break;
      }
    }
  }

  GradientMap out;
  for (const auto& [name, idx] : leaf_index_) {
    if (!differentiable_.at(name)) continue;
    const Node& n = nodes_[idx];
    out[name] = adj[idx].size() == 0 ? Matrix::Zero(n.rows, n.cols) : adj[idx];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builders

Var operator+(Var a, Var b) { return binary_elementwise(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return binary_elementwise(OpKind::Sub, a, b); }
Var operator*(Var a, Var b) { return binary_elementwise(OpKind::Mul, a, b); }
Var operator/(Var a, Var b) { return binary_elementwise(OpKind::Div, a, b); }
Var operator-(Var a) { return unary(OpKind::Neg, a); }
Var operator+(Var a, double c) { return unary(OpKind::Shift, a, c); }
Var operator+(double c, Var a) { return unary(OpKind::Shift, a, c); }
Var operator-(Var a, double c) { return unary(OpKind::Shift, a, -c); }
Var operator-(double c, Var a) { return unary(OpKind::Shift, -a, c); }
Var operator*(Var a, double c) { return unary(OpKind::Scale, a, c); }
Var operator*(double c, Var a) { return unary(OpKind::Scale, a, c); }
Var operator/(Var a, double c) { return unary(OpKind::Scale, a, 1.0 / c); }

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("autodiff: matmul " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " by " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Node n;
  n.kind = OpKind::MatMul;
  n.parents = {a.index(), b.index()};
  n.rows = a.rows();
  n.cols = b.cols();
  return g.add_node(std::move(n));
}

Var transpose(Var a) {
  Node n;
  n.kind = OpKind::Transpose;
  n.parents = {a.index()};
  n.rows = a.cols();
  n.cols = a.rows();
  return graph_of(a).add_node(std::move(n));
}

Var exp(Var a) { return unary(OpKind::Exp, a); }
Var log(Var a) { return unary(OpKind::Log, a); }
Var sqrt(Var a) { return unary(OpKind::Sqrt, a); }
Var square(Var a) { return unary(OpKind::Square, a); }
Var pow(Var a, double exponent) { return unary(OpKind::Pow, a, exponent); }
Var cos(Var a) { return unary(OpKind::Cos, a); }
Var acos(Var a) { return unary(OpKind::Acos, a); }
Var maximum(Var a, Var b) { return binary_elementwise(OpKind::Max, a, b); }
Var minimum(Var a, Var b) { return binary_elementwise(OpKind::Min, a, b); }

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw PreconditionError("autodiff: clamp with lo > hi");
  return unary(OpKind::Clamp, a, lo, hi);
}

Var softmax_rows(Var a) { return unary(OpKind::SoftmaxRow, a); }
Var log_softmax_rows(Var a) { return unary(OpKind::LogSoftmaxRow, a); }

Var logsumexp_rows(Var a) {
  Node n;
  n.kind = OpKind::LogSumExpRow;
  n.parents = {a.index()};
  n.rows = a.rows();
  n.cols = 1;
  return graph_of(a).add_node(std::move(n));
}

Var layer_norm_rows(Var a, double eps) { return unary(OpKind::LayerNormRow, a, eps); }
Var gelu(Var a) { return unary(OpKind::Gelu, a); }
Var relu(Var a) { return unary(OpKind::Relu, a); }
Var sigmoid(Var a) { return unary(OpKind::Sigmoid, a); }
Var softplus(Var a) { return unary(OpKind::Softplus, a); }
Var tanh(Var a) { return unary(OpKind::Tanh, a); }
Var sum(Var a) { return reduce_to_scalar(OpKind::Sum, a); }
Var mean(Var a) { return reduce_to_scalar(OpKind::Mean, a); }

Var row_sum(Var a) {
  Node n;
  n.kind = OpKind::RowSum;
  n.parents = {a.index()};
  n.rows = a.rows();
  n.cols = 1;
  return graph_of(a).add_node(std::move(n));
}

Var dot(Var a, Var b) {
  Graph& g = graph_of(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("autodiff: dot shape mismatch");
  Node n;
  n.kind = OpKind::Dot;
  n.parents = {a.index(), b.index()};
  n.rows = 1;
  n.cols = 1;
  return g.add_node(std::move(n));
}

Var block(Var a, Eigen::Index row, Eigen::Index col, Eigen::Index rows, Eigen::Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw ShapeError("autodiff: block out of range");
  }
  Node n;
  n.kind = OpKind::Block;
  n.parents = {a.index()};
  n.rows = rows;
  n.cols = cols;
  n.ints = {row, col};
  return graph_of(a).add_node(std::move(n));
}

Var row(Var a, Eigen::Index i) { return block(a, i, 0, 1, a.cols()); }
Var col(Var a, Eigen::Index j) { return block(a, 0, j, a.rows(), 1); }
Var element(Var a, Eigen::Index i, Eigen::Index j) { return block(a, i, j, 1, 1); }

Var hcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("autodiff: hcat of nothing");
  Graph& g = graph_of(parts.front());
  Node n;
  n.kind = OpKind::HCat;
  n.rows = parts.front().rows();
  for (const Var& p : parts) {
    if (&graph_of(p) != &g) throw std::logic_error("autodiff: operands belong to different graphs");
    if (p.rows() != n.rows) throw ShapeError("autodiff: hcat row mismatch");
    n.parents.push_back(p.index());
    n.cols += p.cols();
  }
  return g.add_node(std::move(n));
}

Var vcat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("autodiff: vcat of nothing");
  Graph& g = graph_of(parts.front());
  Node n;
  n.kind = OpKind::VCat;
  n.cols = parts.front().cols();
  for (const Var& p : parts) {
    if (&graph_of(p) != &g) throw std::logic_error("autodiff: operands belong to different graphs");
    if (p.cols() != n.cols) throw ShapeError("autodiff: vcat column mismatch");
    n.parents.push_back(p.index());
    n.rows += p.rows();
  }
  return g.add_node(std::move(n));
}

Var add_row_broadcast(Var m, Var r) {
  Graph& g = graph_of(m, r);
  if (r.rows() != 1 || r.cols() != m.cols()) throw ShapeError("autodiff: add_row_broadcast needs a 1 x cols row");
  Node n;
  n.kind = OpKind::AddRowBroadcast;
  n.parents = {m.index(), r.index()};
  n.rows = m.rows();
  n.cols = m.cols();
  return g.add_node(std::move(n));
}

Var mul_col_broadcast(Var m, Var c) {
  Graph& g = graph_of(m, c);
  if (c.cols() != 1 || c.rows() != m.rows()) throw ShapeError("autodiff: mul_col_broadcast needs a rows x 1 column");
  Node n;
  n.kind = OpKind::MulColBroadcast;
  n.parents = {m.index(), c.index()};
  n.rows = m.rows();
  n.cols = m.cols();
  return g.add_node(std::move(n));
}

Var select_le(Var x, double threshold, Var if_le, Var otherwise) {
  Graph& g = graph_of(x, if_le);
  graph_of(x, otherwise);
  auto fits = [&](Var v) { return is_scalar(v.rows(), v.cols()) || (v.rows() == x.rows() && v.cols() == x.cols()); };
  if (!fits(if_le) || !fits(otherwise)) throw ShapeError("autodiff: select_le branch shape mismatch");
  Node n;
  n.kind = OpKind::SelectLE;
  n.parents = {x.index(), if_le.index(), otherwise.index()};
  n.rows = x.rows();
  n.cols = x.cols();
  n.p0 = threshold;
  return g.add_node(std::move(n));
}

Var causal_conv(Var kernels, Var signals) {
  Graph& g = graph_of(kernels, signals);
  if (kernels.rows() != signals.cols()) throw ShapeError("autodiff: causal_conv needs one kernel row per signal column");
  Node n;
  n.kind = OpKind::CausalConv;
  n.parents = {kernels.index(), signals.index()};
  n.rows = signals.rows();
  n.cols = signals.cols();
  return g.add_node(std::move(n));
}

Var gather_rows(Var a, const std::vector<Eigen::Index>& rows) {
  for (Eigen::Index r : rows) {
    if (r < 0 || r >= a.rows()) throw ShapeError("autodiff: gathered row index out of range");
  }
  Node n;
  n.kind = OpKind::GatherRows;
  n.parents = {a.index()};
  n.rows = static_cast<Eigen::Index>(rows.size());
  n.cols = a.cols();
  n.ints = rows;
  return graph_of(a).add_node(std::move(n));
}

Var permute_rows(Var a, const std::vector<Eigen::Index>& perm) {
  if (static_cast<Eigen::Index>(perm.size()) != a.rows()) throw ShapeError("autodiff: permutation length mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (Eigen::Index p : perm) {
    if (p < 0 || p >= a.rows() || seen[p]) throw ShapeError("autodiff: not a permutation");
    seen[p] = true;
  }
  return gather_rows(a, perm);
}

// ---------------------------------------------------------------------------
// Finite differences

Eigen::VectorXd finite_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& x, double h) {
  if (!(h > 0.0)) throw PreconditionError("finite_diff_gradient: step must be positive");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

Matrix finite_diff_gradient(Graph& graph, const std::string& leaf, double h) {
  const Matrix original = graph.leaf_value(leaf);
  Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(original.data(), original.size());
  auto f = [&](const Eigen::VectorXd& v) {
    Matrix m = Eigen::Map<const Matrix>(v.data(), original.rows(), original.cols());
    return graph.forward_scalar({{leaf, m}});
  };
  Eigen::VectorXd g = finite_diff_gradient(f, flat, h);
  graph.forward({{leaf, original}});
  return Eigen::Map<const Matrix>(g.data(), original.rows(), original.cols());
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace tvu::ad
