#ifndef MAST_DISTRIBUTED_HPP
#define MAST_DISTRIBUTED_HPP

#include <utility>
#include <vector>

#include "mast/record.hpp"

namespace mast {

// One simulated client: its own loss and sketch distribution. All nodes of a
// cluster share the model dimension and shift.
struct Node {
  LossPtr loss;
  SketchDistribution dist;
  int id = 0;
};

struct CommStats {
  long downlink_nnz = 0;
  long uplink_nnz = 0;
};

// In-process, lockstep-synchronous simulation of distributed double sketched
// GD. Sketches are sampled centrally (per-node streams derived from
// (master_seed, node_id, t)), matching the server-side sampling of the
// algorithm; no latency or failure model.
class Cluster {
 public:
  Cluster(std::vector<Node> nodes, Vec shift);

  int dim() const { return static_cast<int>(shift_.size()); }
  int size() const { return static_cast<int>(nodes_.size()); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Vec& shift() const { return shift_; }
  const std::vector<SpectralConstants>& node_constants() const { return constants_; }

  // max_i L_{f_i}^2 L_{D_i} L_{S_i}^max, governing the nonconvex rate.
  double d_max() const { return d_max_; }
  // max_i L_{f_i} L_{S_i}^max, governing the strongly convex rate.
  double max_lf_lsmax() const { return max_lf_lsmax_; }
  // min_i mu_{D_i}: a valid strong-convexity modulus multiplier for the
  // average of the per-node sketched objectives.
  double min_mu_d() const { return min_mu_d_; }

  // Exact average sketched objective (per-node supports enumerated
  // independently) and its smoothness bound (1/M) sum L_{D_i} L_{f_i}.
  double tilde_value(const Vec& x, std::uint64_t limit = kDefaultSupportLimit,
                     Exec exec = Exec::parallel) const;
  Vec tilde_gradient(const Vec& x, std::uint64_t limit = kDefaultSupportLimit,
                     Exec exec = Exec::parallel) const;
  double tilde_smoothness() const;

  // (1/M) sum_i f_i(x): the unsketched average objective.
  double erm_value(const Vec& x) const;
  Vec erm_gradient(const Vec& x) const;

 private:
  std::vector<Node> nodes_;
  Vec shift_;
  std::vector<SpectralConstants> constants_;
  double d_max_ = 0.0;
  double max_lf_lsmax_ = 0.0;
  double min_mu_d_ = 1.0;
};

// One synchronous round: sample S_i^t per node, broadcast y_i = s + S_i(x-s),
// collect S_i^T grad f_i(y_i), aggregate in fixed node order and step.
std::pair<Vec, CommStats> distributed_round(const Cluster& c, const Vec& x, double gamma,
                                            std::uint64_t master_seed, long t,
                                            Exec exec = Exec::parallel);

// Theorem-driven steps: nonconvex 1/sqrt(D_max T) and the strongly convex
// 1/max_i(L_{f_i} L_{S_i}^max).
double distributed_step_size(const Cluster& c, long horizon);
double distributed_step_size_strongly_convex(const Cluster& c);

struct DistributedConfig {
  double gamma = 0.0;
  long iterations = 0;
  std::uint64_t seed = 0;
  Vec x0;
};

RunResult run_distributed(const Cluster& c, const DistributedConfig& cfg,
                          const MetricsOptions& metrics, Exec exec = Exec::parallel);

}  // namespace mast

#endif  // MAST_DISTRIBUTED_HPP
