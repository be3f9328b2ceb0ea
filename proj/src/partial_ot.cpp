#include "tvu/partial_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tvu {
namespace {

constexpr double kMassSlack = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s) {
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw ShapeError("partial OT: cost is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                     " but marginals have sizes " + std::to_string(a.size()) + ", " + std::to_string(b.size()));
  }
  if (cost.size() == 0) throw PreconditionError("partial OT: empty problem");
  if ((a.array() < 0.0).any() || (b.array() < 0.0).any()) throw PreconditionError("partial OT: negative mass");
  if (!cost.allFinite()) throw PreconditionError("partial OT: non-finite cost");
  if (!(s > 0.0)) throw PreconditionError("partial OT: transported mass must be positive");
  if (s > std::min(a.sum(), b.sum()) + kMassSlack) {
    throw PreconditionError("partial OT: infeasible mass " + std::to_string(s) + " exceeds min total mass " +
                            std::to_string(std::min(a.sum(), b.sum())));
  }
}

// p = min(target / current, 1), leaving empty rows untouched.
double clip_ratio(double target, double current) {
  if (current <= 0.0) return 1.0;
  return std::min(target / current, 1.0);
}

// Largest excess of a row or column sum over its capacity.
double overflow(const Eigen::MatrixXd& t, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double rows = (t.rowwise().sum() - a).maxCoeff();
  const double cols = (t.colwise().sum().transpose() - b).maxCoeff();
  return std::max({rows, cols, 0.0});
}

TransportPlan sinkhorn_standard(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s,
                                const SinkhornOptions& opt) {
  Eigen::MatrixXd t = (-cost.array() / opt.tau).exp().matrix();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    if (a[i] > 0.0 && t.row(i).maxCoeff() == 0.0) {
      throw NumericError("sinkhorn_partial: row " + std::to_string(i) + " of exp(-C/tau) underflows; tau too small");
    }
  }
  for (Eigen::Index j = 0; j < t.cols(); ++j) {
    if (b[j] > 0.0 && t.col(j).maxCoeff() == 0.0) {
      throw NumericError("sinkhorn_partial: column " + std::to_string(j) + " of exp(-C/tau) underflows; tau too small");
    }
  }
  t *= s / t.sum();

  TransportPlan plan;
  plan.mass = s;
  Eigen::VectorXd pa(t.rows());
  Eigen::VectorXd pb(t.cols());
  for (int it = 1; it <= opt.max_iter; ++it) {
    const Eigen::VectorXd rows = t.rowwise().sum();
    for (Eigen::Index i = 0; i < pa.size(); ++i) pa[i] = clip_ratio(a[i], rows[i]);
    Eigen::MatrixXd ta = pa.asDiagonal() * t;
    const Eigen::RowVectorXd cols = ta.colwise().sum();
    for (Eigen::Index j = 0; j < pb.size(); ++j) pb[j] = clip_ratio(b[j], cols[j]);
    Eigen::MatrixXd tb = ta * pb.asDiagonal();
    const double total = tb.sum();
    if (!(total > 0.0)) throw NumericError("sinkhorn_partial: plan mass collapsed to zero");
    tb *= s / total;
    const double delta = (tb - t).cwiseAbs().maxCoeff();
    t = std::move(tb);
    plan.iterations = it;
    // A starved row can creep up by less than tol per pass while another row is still over capacity.
    if (delta < opt.tol && overflow(t, a, b) < opt.tol) break;
  }
  plan.coupling = std::move(t);
  plan.cost = plan.coupling.cwiseProduct(cost).sum();
  return plan;
}

double logsumexp(const Eigen::Ref<const Eigen::ArrayXd>& v) {
  const double m = v.maxCoeff();
  if (m == -kInf) return -kInf;
  return m + std::log((v - m).exp().sum());
}

TransportPlan sinkhorn_log(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s,
                           const SinkhornOptions& opt) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  const double logS = std::log(s);
  Eigen::ArrayXXd lt = -cost.array() / opt.tau;
  auto total_lse = [&](const Eigen::ArrayXXd& x) {
    Eigen::ArrayXd flat = Eigen::Map<const Eigen::ArrayXd>(x.data(), x.size());
    return logsumexp(flat);
  };
  lt += logS - total_lse(lt);

  TransportPlan plan;
  plan.mass = s;
  Eigen::MatrixXd prev = lt.exp().matrix();
  // Dykstra corrections (log of the factor each clip removed last time); stay zero otherwise.
  Eigen::ArrayXd row_fix = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd col_fix = Eigen::ArrayXd::Zero(m);
  for (int it = 1; it <= opt.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      lt.row(i) += row_fix[i];
      const double r = logsumexp(lt.row(i).transpose());
      if (r == -kInf) continue;
      const double lp = a[i] > 0.0 ? std::min(std::log(a[i]) - r, 0.0) : -kInf;
      lt.row(i) += lp;
      if (opt.dykstra && a[i] > 0.0) row_fix[i] = -lp;
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      lt.col(j) += col_fix[j];
      const double c = logsumexp(lt.col(j));
      if (c == -kInf) continue;
      const double lp = b[j] > 0.0 ? std::min(std::log(b[j]) - c, 0.0) : -kInf;
      lt.col(j) += lp;
      if (opt.dykstra && b[j] > 0.0) col_fix[j] = -lp;
    }
    const double lse = total_lse(lt);
    if (lse == -kInf) throw NumericError("sinkhorn_partial: plan mass collapsed to zero");
    lt += logS - lse;
    Eigen::MatrixXd cur = lt.exp().matrix();
    const double delta = (cur - prev).cwiseAbs().maxCoeff();
    prev = std::move(cur);
    plan.iterations = it;
    if (delta < opt.tol && overflow(prev, a, b) < opt.tol) break;
  }
  plan.coupling = std::move(prev);
  plan.cost = plan.coupling.cwiseProduct(cost).sum();
  return plan;
}

}  // namespace

DiscreteDistribution DiscreteDistribution::unit(const Eigen::MatrixXd& support) {
  return {support, Eigen::VectorXd::Ones(support.rows())};
}

DiscreteDistribution DiscreteDistribution::normalized(const Eigen::MatrixXd& support) {
  return {support, Eigen::VectorXd::Constant(support.rows(), 1.0 / static_cast<double>(support.rows()))};
}

void DiscreteDistribution::validate() const {
  if (support.rows() < 1) throw PreconditionError("DiscreteDistribution: needs at least one support point");
  if (weights.size() != support.rows()) throw ShapeError("DiscreteDistribution: one weight per support row");
  if ((weights.array() < 0.0).any()) throw PreconditionError("DiscreteDistribution: negative weight");
}

TransportPlan sinkhorn_partial(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s,
                               const SinkhornOptions& options) {
  check_inputs(cost, a, b, s);
  if (!(options.tau > 0.0)) throw PreconditionError("sinkhorn_partial: tau must be positive");
  if (options.max_iter < 1) throw PreconditionError("sinkhorn_partial: need at least one iteration");
  if (options.dykstra || options.tau < options.log_domain_below) return sinkhorn_log(cost, a, b, s, options);
  return sinkhorn_standard(cost, a, b, s, options);
}

MassSweep pvla_sweep(const CostMatrix& cost, const SinkhornOptions& options, MassMode mode) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  if (n < 1 || m < 1) throw PreconditionError("pvla_sweep: empty sequence");
  const Eigen::Index steps = std::min(n, m);

  Eigen::VectorXd a = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd b = Eigen::VectorXd::Ones(m);
  double unit = 1.0;
  if (mode == MassMode::Normalized) {
    a /= static_cast<double>(n);
    b /= static_cast<double>(m);
    unit = 1.0 / static_cast<double>(steps);
  }

  MassSweep out;
  out.distance = kInf;
  for (Eigen::Index k = 1; k <= steps; ++k) {
    const double s = mode == MassMode::Unit ? static_cast<double>(k) : std::min(1.0, unit * static_cast<double>(k));
    const double c = sinkhorn_partial(cost, a, b, s, options).cost;
    out.masses.push_back(s);
    out.per_mass_cost.push_back(c);
    if (c < out.distance) {
      out.distance = c;
      out.best = out.per_mass_cost.size() - 1;
    }
  }
  return out;
}

MassSweep pvla_sweep(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, const SinkhornOptions& options,
                     MassMode mode) {
  return pvla_sweep(CostMatrix(cosine_cost(h_a, h_b)), options, mode);
}

double pvla_distance(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, const SinkhornOptions& options) {
  return pvla_sweep(h_a, h_b, options, MassMode::Unit).distance;
}

double ot_distance_tubes(const Eigen::MatrixXd& tube_i, const Eigen::MatrixXd& tube_j, const SinkhornOptions& options) {
  return pvla_sweep(tube_i, tube_j, options, MassMode::Unit).distance;
}

// ---------------------------------------------------------------------------
// Exact oracle: min-cost flow by successive shortest paths (Bellman-Ford on
// the residual graph, so negative reduced costs are fine).

namespace {

struct FlowEdge {
  int to;
  int rev;
  double cap;
  double cost;
};

class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes) : adj_(nodes) {}

  void add_edge(int from, int to, double cap, double cost) {
    adj_[from].push_back({to, static_cast<int>(adj_[to].size()), cap, cost});
    adj_[to].push_back({from, static_cast<int>(adj_[from].size()) - 1, 0.0, -cost});
  }

  // Returns {flow, cost}.
  std::pair<double, double> run(int source, int sink, double want) {
    constexpr double eps = 1e-12;
    const int n = static_cast<int>(adj_.size());
    double flow = 0.0;
    double total = 0.0;
    while (flow < want - eps) {
      std::vector<double> dist(n, kInf);
      std::vector<int> prevNode(n, -1), prevEdge(n, -1);
      dist[source] = 0.0;
      for (int round = 0; round < n; ++round) {
        bool changed = false;
        for (int u = 0; u < n; ++u) {
          if (dist[u] == kInf) continue;
          for (int e = 0; e < static_cast<int>(adj_[u].size()); ++e) {
            const FlowEdge& edge = adj_[u][e];
            if (edge.cap > eps && dist[u] + edge.cost < dist[edge.to] - 1e-15) {
              dist[edge.to] = dist[u] + edge.cost;
              prevNode[edge.to] = u;
              prevEdge[edge.to] = e;
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (dist[sink] == kInf) break;
      double push = want - flow;
      for (int v = sink; v != source; v = prevNode[v]) push = std::min(push, adj_[prevNode[v]][prevEdge[v]].cap);
      for (int v = sink; v != source; v = prevNode[v]) {
        FlowEdge& edge = adj_[prevNode[v]][prevEdge[v]];
        edge.cap -= push;
        adj_[v][edge.rev].cap += push;
      }
      flow += push;
      total += push * dist[sink];
    }
    return {flow, total};
  }

 private:
  std::vector<std::vector<FlowEdge>> adj_;
};

}  // namespace

double exact_partial_ot(const CostMatrix& cost, const Eigen::VectorXd& a, const Eigen::VectorXd& b, double s) {
  check_inputs(cost, a, b, s);
  if (cost.size() > kExactPartialOtMaxCells) {
    throw PreconditionError("exact_partial_ot: " + std::to_string(cost.size()) + " cells exceed the oracle bound of " +
                            std::to_string(kExactPartialOtMaxCells));
  }
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const double sumA = a.sum();
  const double sumB = b.sum();
  s = std::min(s, std::min(sumA, sumB));

  // Nodes: source, rows 0..n-1, slack row, cols 0..m-1, slack col, sink.
  const int source = 0;
  const int rowBase = 1;
  const int slackRow = rowBase + n;
  const int colBase = slackRow + 1;
  const int slackCol = colBase + m;
  const int sink = slackCol + 1;
  MinCostFlow flow(sink + 1);

  for (int i = 0; i < n; ++i) flow.add_edge(source, rowBase + i, a[i], 0.0);
  flow.add_edge(source, slackRow, sumB - s, 0.0);
  for (int j = 0; j < m; ++j) flow.add_edge(colBase + j, sink, b[j], 0.0);
  flow.add_edge(slackCol, sink, sumA - s, 0.0);

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) flow.add_edge(rowBase + i, colBase + j, kInf, cost(i, j));
    flow.add_edge(rowBase + i, slackCol, kInf, 0.0);
  }
  for (int j = 0; j < m; ++j) flow.add_edge(slackRow, colBase + j, kInf, 0.0);

  const double want = sumA + sumB - s;
  const auto [sent, total] = flow.run(source, sink, want);
  if (sent < want - 1e-9) throw NumericError("exact_partial_ot: balanced flow not attained");
  return total;
}

}  // namespace tvu
