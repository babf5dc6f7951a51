#ifndef MAST_SOLVERS_HPP
#define MAST_SOLVERS_HPP

#include <functional>
#include <optional>
#include <vector>

#include "mast/record.hpp"

namespace mast {

// Iterates above this norm (or non-finite values) raise DivergenceError.
inline constexpr double kDivergenceNorm = 1e12;

// Theorem-driven maximal admissible step sizes (equality case of each rule).
struct StepSizeRule {
  enum class Kind {
    thm2_strongly_convex,  // 1 / (L_f L_S^max)
    thm3_nonconvex,        // 1 / (L_f sqrt(L_D L_S^max T))
    cor1_eps_target,       // min{1/(D sqrt(T)), eps^2 / (2 D^2 gap)}
    thm4_abc,              // 1 / sqrt(L_f L_D D_AB T)
    thm5_lsvrdsg,          // 1 / (20 L_f L_S^max)
    lsvrdsg_convex,        // 1 / (40 L_f L_S^max)
    spage,                 // 1 / (sqrt((1-p)/(p b')) L_f (L_D + sqrt(L_S^max L_D)))
    manual,
  };

  Kind kind = Kind::manual;
  long horizon = 0;                 // T (thm3, thm4)
  double eps = 0.0;                 // cor1 target
  double abc_a = 0.0, abc_b = 1.0, abc_c = 0.0;  // thm4
  double prob = 0.0;                // spage refresh probability
  int small_batch = 0;              // spage b'
  double gamma = 0.0;               // manual
  std::optional<double> tilde_gap;  // f~^inf - f^inf, needed by cor1
  std::optional<double> delta0;     // f~(x^0) - f~^inf, needed by cor1 horizon

  static StepSizeRule thm2() { return {Kind::thm2_strongly_convex}; }
  static StepSizeRule thm3(long t) {
    StepSizeRule r{Kind::thm3_nonconvex};
    r.horizon = t;
    return r;
  }
  static StepSizeRule cor1(double eps, double tilde_gap, double delta0);
  static StepSizeRule thm4(long t, double a, double b, double c);
  static StepSizeRule thm5() { return {Kind::thm5_lsvrdsg}; }
  static StepSizeRule lsvrdsg_cvx() { return {Kind::lsvrdsg_convex}; }
  static StepSizeRule spage_rule(double prob, int small_batch);
  static StepSizeRule manual_gamma(double gamma);
};

double step_size(const StepSizeRule& rule, const SpectralConstants& consts,
                 const Loss& loss);

// Iteration budget from the stationarity corollary (epsilon target).
long cor1_iterations(const StepSizeRule& rule, const SpectralConstants& consts,
                     const Loss& loss);

struct SolverState {
  Vec x;
  long t = 0;
  // Variance-reduction anchors; empty unless the solver uses them.
  Vec w;      // anchor point
  Vec h_hat;  // anchor gradient estimate
  Vec h;      // recursive estimator
};

// Uniform finite sketch support materialized for the variance-reduced
// solvers. Construction rejects distributions without one.
struct SupportSet {
  std::vector<SketchSample> sketches;

  int size() const { return static_cast<int>(sketches.size()); }
  static SupportSet from(const SketchDistribution& dist,
                         std::uint64_t limit = kDefaultSupportLimit);
};

// (1/|idx|) sum over idx of grad f_{S_i}(x); idx must be sorted so the
// accumulation order is reproducible.
Vec minibatch_mean_gradient(const MastProblem& p, const SupportSet& support,
                            const std::vector<int>& idx, const Vec& x);

// One step of double sketched (S)GD: sample S^t, form the (possibly inexact)
// estimator, take the gradient-type step.
void dsgd_step(const MastProblem& p, SolverState& st, double gamma,
               const AbcEstimator& estimator, RngStream& rng);

SolverState lsvrdsg_init(const MastProblem& p, const SupportSet& support, int batch,
                         Vec x0, RngStream& rng);
void lsvrdsg_step(const MastProblem& p, const SupportSet& support, SolverState& st,
                  double gamma, double prob, int batch, RngStream& rng);

SolverState spage_init(const MastProblem& p, const SupportSet& support, int batch,
                       Vec x0, RngStream& rng);
void spage_step(const MastProblem& p, const SupportSet& support, SolverState& st,
                double gamma, double prob, int batch, int small_batch, RngStream& rng);

enum class SolverKind { dsgd, lsvrdsg, spage };

struct SolverConfig {
  SolverKind kind = SolverKind::dsgd;
  double gamma = 0.0;
  long iterations = 0;
  std::uint64_t seed = 0;
  Vec x0;
  AbcEstimator estimator = AbcEstimator::exact();  // dsgd
  double prob = 0.0;                               // lsvrdsg / spage
  int batch = 0;
  int small_batch = 0;  // spage
  std::uint64_t support_limit = kDefaultSupportLimit;
};

// Observer invoked at every logging point with the full solver state.
using StateObserver = std::function<void(const SolverState&, long)>;

// Runs T iterations with per-iteration streams derived from (seed, t), so
// identical configs produce identical records. Divergence is recorded on the
// final row instead of aborting.
RunResult run_solver(const MastProblem& p, const SolverConfig& cfg,
                     const MetricsOptions& metrics,
                     const StateObserver& observer = {});

}  // namespace mast

#endif  // MAST_SOLVERS_HPP
