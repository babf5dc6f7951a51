#include "mast/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mast {

namespace {

// Stream tags keep the stepping, initialization and metric randomness of a
// run on disjoint substreams.
constexpr std::uint64_t kStepTag = 0x57e9;
constexpr std::uint64_t kInitTag = 0x1217;

void check_iterate(const SolverState& st) {
  const double norm = st.x.norm();
  if (!std::isfinite(norm) || norm > kDivergenceNorm) {
    throw DivergenceError(st.t, norm);
  }
}

}  // namespace

StepSizeRule StepSizeRule::cor1(double eps, double tilde_gap, double delta0) {
  StepSizeRule r{Kind::cor1_eps_target};
  r.eps = eps;
  r.tilde_gap = tilde_gap;
  r.delta0 = delta0;
  return r;
}

StepSizeRule StepSizeRule::thm4(long t, double a, double b, double c) {
  StepSizeRule r{Kind::thm4_abc};
  r.horizon = t;
  r.abc_a = a;
  r.abc_b = b;
  r.abc_c = c;
  return r;
}

StepSizeRule StepSizeRule::spage_rule(double prob, int small_batch) {
  StepSizeRule r{Kind::spage};
  r.prob = prob;
  r.small_batch = small_batch;
  return r;
}

StepSizeRule StepSizeRule::manual_gamma(double gamma) {
  StepSizeRule r{Kind::manual};
  r.gamma = gamma;
  return r;
}

double step_size(const StepSizeRule& rule, const SpectralConstants& consts,
                 const Loss& loss) {
  const double l_f = loss.smoothness();
  double gamma = 0.0;
  switch (rule.kind) {
    case StepSizeRule::Kind::thm2_strongly_convex:
      gamma = 1.0 / (l_f * consts.l_s_max);
      break;
    case StepSizeRule::Kind::thm3_nonconvex: {
      if (rule.horizon < 1) throw ConfigError("nonconvex step size rule needs a horizon T >= 1");
      gamma = 1.0 / (l_f * std::sqrt(consts.l_d * consts.l_s_max *
                                     static_cast<double>(rule.horizon)));
      break;
    }
    case StepSizeRule::Kind::cor1_eps_target: {
      if (!rule.tilde_gap.has_value()) {
        throw ConfigError("eps-target step size needs tilde_gap (f~^inf - f^inf)");
      }
      if (!(rule.eps > 0.0)) throw ConfigError("eps-target step size needs eps > 0");
      const double d = l_f * std::sqrt(consts.l_d * consts.l_s_max);
      const double t = static_cast<double>(cor1_iterations(rule, consts, loss));
      gamma = 1.0 / (d * std::sqrt(t));
      if (*rule.tilde_gap > 0.0) {
        gamma = std::min(gamma, rule.eps * rule.eps / (2.0 * d * d * *rule.tilde_gap));
      }
      break;
    }
    case StepSizeRule::Kind::thm4_abc: {
      if (rule.horizon < 1) throw ConfigError("abc step size rule needs a horizon T >= 1");
      const double d_ab = rule.abc_a + rule.abc_b * l_f * consts.l_s_max;
      if (!(d_ab > 0.0)) throw ConfigError("abc step size needs A + B L_f L_S^max > 0");
      gamma = 1.0 / std::sqrt(l_f * consts.l_d * d_ab * static_cast<double>(rule.horizon));
      break;
    }
    case StepSizeRule::Kind::thm5_lsvrdsg:
      gamma = 1.0 / (20.0 * l_f * consts.l_s_max);
      break;
    case StepSizeRule::Kind::lsvrdsg_convex:
      gamma = 1.0 / (40.0 * l_f * consts.l_s_max);
      break;
    case StepSizeRule::Kind::spage: {
      if (!(rule.prob > 0.0) || rule.prob > 1.0) {
        throw ConfigError("spage step size needs p in (0, 1]");
      }
      if (rule.prob == 1.0) {
        // Variance term vanishes; only the descent condition on the sketched
        // objective remains.
        gamma = 1.0 / (l_f * consts.l_d);
        break;
      }
      if (rule.small_batch < 1) throw ConfigError("spage step size needs b' >= 1");
      const double ratio =
          std::sqrt((1.0 - rule.prob) / (rule.prob * static_cast<double>(rule.small_batch)));
      gamma = 1.0 / (ratio * l_f * (consts.l_d + std::sqrt(consts.l_s_max * consts.l_d)));
      break;
    }
    case StepSizeRule::Kind::manual:
      gamma = rule.gamma;
      break;
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ConfigError("step size rule produced a non-positive or non-finite gamma");
  }
  return gamma;
}

long cor1_iterations(const StepSizeRule& rule, const SpectralConstants& consts,
                     const Loss& loss) {
  if (rule.kind != StepSizeRule::Kind::cor1_eps_target) {
    throw ConfigError("iteration budget is defined for the eps-target rule only");
  }
  if (!rule.delta0.has_value()) {
    throw ConfigError("eps-target iteration budget needs delta0 (f~(x^0) - f~^inf)");
  }
  if (!rule.tilde_gap.has_value()) {
    throw ConfigError("eps-target iteration budget needs tilde_gap (f~^inf - f^inf)");
  }
  const double d = loss.smoothness() * std::sqrt(consts.l_d * consts.l_s_max);
  const double eps4 = std::pow(rule.eps, 4);
  const double t = 12.0 * *rule.delta0 * d * d *
                   std::max(3.0 * *rule.delta0, *rule.tilde_gap) / eps4;
  return std::max<long>(1, static_cast<long>(std::ceil(t)));
}

SupportSet SupportSet::from(const SketchDistribution& dist, std::uint64_t limit) {
  if (!dist.has_uniform_finite_support(limit)) {
    throw ConfigError(
        "variance-reduced solvers need a uniformly weighted finite sketch support");
  }
  SupportSet s;
  for (auto& [sk, prob] : dist.enumerate_support(limit)) {
    s.sketches.push_back(std::move(sk));
  }
  return s;
}

Vec minibatch_mean_gradient(const MastProblem& p, const SupportSet& support,
                            const std::vector<int>& idx, const Vec& x) {
  if (idx.empty()) throw ConfigError("empty sketch minibatch");
  Vec acc = Vec::Zero(p.dim());
  const double w = 1.0 / static_cast<double>(idx.size());
  for (int i : idx) {
    accumulate_scaled(acc, w, p.estimator_gradient(support.sketches[static_cast<std::size_t>(i)], x));
  }
  return acc;
}

void dsgd_step(const MastProblem& p, SolverState& st, double gamma,
               const AbcEstimator& estimator, RngStream& rng) {
  const SketchSample s = p.dist().sample(rng);
  const Vec g = estimator.estimate(p, s, st.x, rng);
  st.x -= gamma * g;
  st.t += 1;
  check_iterate(st);
}

SolverState lsvrdsg_init(const MastProblem& p, const SupportSet& support, int batch,
                         Vec x0, RngStream& rng) {
  const int n = support.size();
  if (batch < 1 || batch > n) {
    throw ConfigError("sketch minibatch size " + std::to_string(batch) +
                      " must lie in [1, " + std::to_string(n) + "]");
  }
  SolverState st;
  st.x = std::move(x0);
  st.w = st.x;
  st.h_hat = minibatch_mean_gradient(p, support, rng.subset_without_replacement(n, batch), st.w);
  return st;
}

void lsvrdsg_step(const MastProblem& p, const SupportSet& support, SolverState& st,
                  double gamma, double prob, int batch, RngStream& rng) {
  const int n = support.size();
  if (batch < 1 || batch > n) throw ConfigError("sketch minibatch out of range");
  const auto& sk = support.sketches[rng.uniform_below(static_cast<std::uint64_t>(n))];
  const Vec h = p.estimator_gradient(sk, st.x) - p.estimator_gradient(sk, st.w) + st.h_hat;
  const Vec x_prev = st.x;
  st.x -= gamma * h;
  st.t += 1;
  // Anchor refresh coin is drawn after the sketch, fixing the stream
  // consumption order.
  if (rng.bernoulli(prob)) {
    const auto idx = rng.subset_without_replacement(n, batch);
    st.w = x_prev;
    st.h_hat = minibatch_mean_gradient(p, support, idx, x_prev);
  }
  check_iterate(st);
}

SolverState spage_init(const MastProblem& p, const SupportSet& support, int batch,
                       Vec x0, RngStream& rng) {
  const int n = support.size();
  if (batch < 1 || batch > n) {
    throw ConfigError("sketch minibatch size " + std::to_string(batch) +
                      " must lie in [1, " + std::to_string(n) + "]");
  }
  SolverState st;
  st.x = std::move(x0);
  st.h = minibatch_mean_gradient(p, support, rng.subset_without_replacement(n, batch), st.x);
  return st;
}

void spage_step(const MastProblem& p, const SupportSet& support, SolverState& st,
                double gamma, double prob, int batch, int small_batch, RngStream& rng) {
  const int n = support.size();
  if (batch < 1 || batch > n) throw ConfigError("sketch minibatch out of range");
  if (small_batch < 1 || small_batch >= batch) {
    throw ConfigError("spage needs 1 <= b' < b");
  }
  const Vec x_prev = st.x;
  st.x -= gamma * st.h;
  st.t += 1;
  if (rng.bernoulli(prob)) {
    st.h = minibatch_mean_gradient(p, support, rng.subset_without_replacement(n, batch),
                                   st.x);
  } else {
    // Recursive correction: difference of sketched gradients at the two most
    // recent iterates over a small minibatch.
    const auto idx = rng.subset_without_replacement(n, small_batch);
    Vec drift = Vec::Zero(p.dim());
    const double w = 1.0 / static_cast<double>(small_batch);
    for (int i : idx) {
      const auto& sk = support.sketches[static_cast<std::size_t>(i)];
      accumulate_scaled(drift, w, p.estimator_gradient(sk, st.x));
      accumulate_scaled(drift, -w, p.estimator_gradient(sk, x_prev));
    }
    st.h += drift;
  }
  check_iterate(st);
}

RunResult run_solver(const MastProblem& p, const SolverConfig& cfg,
                     const MetricsOptions& metrics, const StateObserver& observer) {
  if (cfg.iterations < 0) throw ConfigError("iteration count must be >= 0");
  if (!(cfg.gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (static_cast<int>(cfg.x0.size()) != p.dim()) {
    throw DimensionError("x0 has wrong dimension");
  }
  const int cadence = std::max(1, metrics.cadence);

  MetricsOptions m = metrics;
  if (!m.erm_loss) m.erm_loss = [&](const Vec& x) { return p.loss().value(x); };
  if (!m.grad_sq_erm) {
    m.grad_sq_erm = [&](const Vec& x) { return p.loss().gradient(x).squaredNorm(); };
  }

  SupportSet support;
  SolverState st;
  RngStream init_rng = RngStream::derive(cfg.seed, kInitTag);
  switch (cfg.kind) {
    case SolverKind::dsgd:
      st.x = cfg.x0;
      break;
    case SolverKind::lsvrdsg:
      support = SupportSet::from(p.dist(), cfg.support_limit);
      st = lsvrdsg_init(p, support, cfg.batch, cfg.x0, init_rng);
      break;
    case SolverKind::spage:
      if (cfg.small_batch < 1 || cfg.small_batch >= cfg.batch) {
        throw ConfigError("spage needs 1 <= b' < b");
      }
      support = SupportSet::from(p.dist(), cfg.support_limit);
      st = spage_init(p, support, cfg.batch, cfg.x0, init_rng);
      break;
  }

  RunResult result;
  auto log_row = [&](long t) {
    RunRow row;
    row.seed = cfg.seed;
    row.t = t;
    row.erm_loss = m.erm_loss(st.x);
    row.grad_sq_erm = m.grad_sq_erm(st.x);
    if (!std::isfinite(row.erm_loss)) throw DivergenceError(t, st.x.norm());
    if (m.mast_loss) {
      const McEstimate est = m.mast_loss(st.x, t);
      row.mast_loss = est.mean;
      if (est.stderr_ > 0.0) row.mast_loss_stderr = est.stderr_;
    }
    if (m.grad_sq_mast) row.grad_sq_mast = m.grad_sq_mast(st.x);
    if (m.val_accuracy) row.val_acc = m.val_accuracy(st.x);
    if (m.test_accuracy) row.test_acc = m.test_accuracy(st.x);
    result.rows.push_back(std::move(row));
    if (observer) observer(st, t);
  };

  try {
    for (long t = 0;; ++t) {
      if (t % cadence == 0 || t == cfg.iterations) log_row(t);
      if (t == cfg.iterations) break;
      RngStream rng = RngStream::derive(cfg.seed, kStepTag, static_cast<std::uint64_t>(t));
      switch (cfg.kind) {
        case SolverKind::dsgd:
          dsgd_step(p, st, cfg.gamma, cfg.estimator, rng);
          break;
        case SolverKind::lsvrdsg:
          lsvrdsg_step(p, support, st, cfg.gamma, cfg.prob, cfg.batch, rng);
          break;
        case SolverKind::spage:
          spage_step(p, support, st, cfg.gamma, cfg.prob, cfg.batch, cfg.small_batch, rng);
          break;
      }
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
  result.final_x = st.x;
  return result;
}

}  // namespace mast
