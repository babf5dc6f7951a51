#include "mast/distributed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mast/solvers.hpp"

namespace mast {

namespace {
constexpr std::uint64_t kNodeTag = 0xd157;
}

Cluster::Cluster(std::vector<Node> nodes, Vec shift)
    : nodes_(std::move(nodes)), shift_(std::move(shift)) {
  if (nodes_.empty()) throw ConfigError("cluster needs at least one node");
  const int d = static_cast<int>(shift_.size());
  min_mu_d_ = std::numeric_limits<double>::infinity();
  for (const auto& node : nodes_) {
    if (!node.loss) throw ConfigError("cluster node without a loss");
    if (node.loss->dim() != d || node.dist.dim() != d) {
      throw DimensionError("cluster nodes must share dim and shift");
    }
    const SpectralConstants c = node.dist.spectral_constants();
    const double l_f = node.loss->smoothness();
    d_max_ = std::max(d_max_, l_f * l_f * c.l_d * c.l_s_max);
    max_lf_lsmax_ = std::max(max_lf_lsmax_, l_f * c.l_s_max);
    min_mu_d_ = std::min(min_mu_d_, c.mu_d);
    constants_.push_back(c);
  }
}

double Cluster::tilde_value(const Vec& x, std::uint64_t limit, Exec exec) const {
  std::vector<double> values(nodes_.size());
  parallel_for(nodes_.size(), exec, [&](std::size_t i) {
    const MastProblem p(nodes_[i].loss, nodes_[i].dist, shift_);
    values[i] = p.exact_tilde_value(x, limit, Exec::serial);
  });
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(nodes_.size());
}

Vec Cluster::tilde_gradient(const Vec& x, std::uint64_t limit, Exec exec) const {
  std::vector<Vec> grads(nodes_.size());
  parallel_for(nodes_.size(), exec, [&](std::size_t i) {
    const MastProblem p(nodes_[i].loss, nodes_[i].dist, shift_);
    grads[i] = p.exact_tilde_gradient(x, limit, Exec::serial);
  });
  Vec acc = Vec::Zero(dim());
  const double w = 1.0 / static_cast<double>(nodes_.size());
  for (const Vec& g : grads) accumulate_scaled(acc, w, g);
  return acc;
}

double Cluster::tilde_smoothness() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    acc += constants_[i].l_d * nodes_[i].loss->smoothness();
  }
  return acc / static_cast<double>(nodes_.size());
}

double Cluster::erm_value(const Vec& x) const {
  double acc = 0.0;
  for (const auto& node : nodes_) acc += node.loss->value(x);
  return acc / static_cast<double>(nodes_.size());
}

Vec Cluster::erm_gradient(const Vec& x) const {
  Vec acc = Vec::Zero(dim());
  const double w = 1.0 / static_cast<double>(nodes_.size());
  for (const auto& node : nodes_) accumulate_scaled(acc, w, node.loss->gradient(x));
  return acc;
}

std::pair<Vec, CommStats> distributed_round(const Cluster& c, const Vec& x, double gamma,
                                            std::uint64_t master_seed, long t,
                                            Exec exec) {
  const std::size_t m = c.nodes().size();
  std::vector<Vec> messages(m);
  std::vector<long> downlink(m), uplink(m);
  parallel_for(m, exec, [&](std::size_t i) {
    const Node& node = c.nodes()[i];
    RngStream rng = RngStream::derive(master_seed, kNodeTag,
                                      static_cast<std::uint64_t>(node.id),
                                      static_cast<std::uint64_t>(t));
    const SketchSample sk = node.dist.sample(rng);
    const Vec y = c.shift() + sk.apply(x - c.shift());
    const Vec g = sk.apply_transpose(node.loss->gradient(y));
    downlink[i] = sk.nnz();
    long nnz = 0;
    for (int j = 0; j < g.size(); ++j) {
      if (g[j] != 0.0) ++nnz;
    }
    uplink[i] = nnz;
    messages[i] = g;
  });
  // Ordered reduction over nodes keeps the aggregate reproducible.
  Vec sum = Vec::Zero(c.dim());
  CommStats stats;
  for (std::size_t i = 0; i < m; ++i) {
    sum += messages[i];
    stats.downlink_nnz += downlink[i];
    stats.uplink_nnz += uplink[i];
  }
  Vec x_next = x - (gamma / static_cast<double>(m)) * sum;
  const double norm = x_next.norm();
  if (!std::isfinite(norm) || norm > kDivergenceNorm) throw DivergenceError(t + 1, norm);
  return {std::move(x_next), stats};
}

double distributed_step_size(const Cluster& c, long horizon) {
  if (horizon < 1) throw ConfigError("distributed step size needs T >= 1");
  return 1.0 / std::sqrt(c.d_max() * static_cast<double>(horizon));
}

double distributed_step_size_strongly_convex(const Cluster& c) {
  return 1.0 / c.max_lf_lsmax();
}

RunResult run_distributed(const Cluster& c, const DistributedConfig& cfg,
                          const MetricsOptions& metrics, Exec exec) {
  if (cfg.iterations < 0) throw ConfigError("iteration count must be >= 0");
  if (static_cast<int>(cfg.x0.size()) != c.dim()) {
    throw DimensionError("x0 has wrong dimension");
  }
  const int cadence = std::max(1, metrics.cadence);
  MetricsOptions m = metrics;
  if (!m.erm_loss) m.erm_loss = [&](const Vec& x) { return c.erm_value(x); };
  if (!m.grad_sq_erm) {
    m.grad_sq_erm = [&](const Vec& x) { return c.erm_gradient(x).squaredNorm(); };
  }

  RunResult result;
  Vec x = cfg.x0;
  long cum_nnz = 0;
  CommStats last;
  auto log_row = [&](long t, bool has_comm) {
    RunRow row;
    row.seed = cfg.seed;
    row.t = t;
    row.erm_loss = m.erm_loss(x);
    row.grad_sq_erm = m.grad_sq_erm(x);
    if (!std::isfinite(row.erm_loss)) throw DivergenceError(t, x.norm());
    if (m.mast_loss) {
      const McEstimate est = m.mast_loss(x, t);
      row.mast_loss = est.mean;
      if (est.stderr_ > 0.0) row.mast_loss_stderr = est.stderr_;
    }
    if (m.grad_sq_mast) row.grad_sq_mast = m.grad_sq_mast(x);
    if (m.val_accuracy) row.val_acc = m.val_accuracy(x);
    if (m.test_accuracy) row.test_acc = m.test_accuracy(x);
    if (has_comm) {
      row.comm_uplink_nnz = last.uplink_nnz;
      row.comm_downlink_nnz = last.downlink_nnz;
      row.comm_cum_nnz = cum_nnz;
    }
    result.rows.push_back(std::move(row));
  };

  try {
    for (long t = 0;; ++t) {
      if (t % cadence == 0 || t == cfg.iterations) log_row(t, t > 0);
      if (t == cfg.iterations) break;
      auto [x_next, stats] = distributed_round(c, x, cfg.gamma, cfg.seed, t, exec);
      x = std::move(x_next);
      last = stats;
      cum_nnz += stats.uplink_nnz + stats.downlink_nnz;
    }
  } catch (const DivergenceError& err) {
    RunRow row;
    row.seed = cfg.seed;
    row.t = err.iteration();
    row.erm_loss = std::numeric_limits<double>::quiet_NaN();
    row.grad_sq_erm = std::numeric_limits<double>::quiet_NaN();
    row.diverged = true;
    result.rows.push_back(row);
    result.diverged = true;
    result.diverged_at = err.iteration();
  }
  result.final_x = x;
  return result;
}

}  // namespace mast
