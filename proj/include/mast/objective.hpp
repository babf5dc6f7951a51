#ifndef MAST_OBJECTIVE_HPP
#define MAST_OBJECTIVE_HPP

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "mast/parallel.hpp"
#include "mast/sketch.hpp"

namespace mast {

// Sparse row-major data matrix; rows hold (coordinate, value) pairs sorted
// by coordinate. Dense models, sparse data.
using SparseRow = std::vector<std::pair<int, double>>;

inline double sparse_dot(const SparseRow& row, const Vec& x) {
  double acc = 0.0;
  for (const auto& [i, v] : row) acc += v * x[i];
  return acc;
}

inline double sparse_norm_sq(const SparseRow& row) {
  double acc = 0.0;
  for (const auto& [i, v] : row) acc += v * v;
  return acc;
}

// A differentiable objective with known smoothness/convexity constants.
// Losses with finite-sum structure additionally expose per-term gradients,
// used by the data-subsampling gradient estimator.
class Loss {
 public:
  virtual ~Loss() = default;

  virtual int dim() const = 0;
  virtual double value(const Vec& x) const = 0;
  virtual Vec gradient(const Vec& x) const = 0;

  // L_f and mu_f (mu_f = 0 when only smoothness is guaranteed).
  virtual double smoothness() const = 0;
  virtual double strong_convexity() const { return 0.0; }

  // f^inf, when known or precomputed.
  virtual std::optional<double> lower_bound() const { return std::nullopt; }

  // Finite-sum structure. num_terms() == 0 means none.
  virtual int num_terms() const { return 0; }
  virtual Vec term_gradient(int /*term*/, const Vec& /*x*/) const {
    throw UnsupportedError("loss has no finite-sum structure");
  }
  // max_i L_{f_i}.
  virtual double max_term_smoothness() const {
    throw UnsupportedError("loss has no finite-sum structure");
  }
  // (1/n) sum_i f_i^inf, when the per-term infima are known.
  virtual std::optional<double> mean_term_lower_bound() const { return std::nullopt; }
};

using LossPtr = std::shared_ptr<const Loss>;

// f(x) = (x-c)^T M (x-c) / 2 + offset with M symmetric PSD (dense or
// diagonal). Test fixture for the strongly-convex results: every constant is
// exact and f^inf = offset.
class QuadraticLoss final : public Loss {
 public:
  QuadraticLoss(Vec diag_matrix, Vec center, double offset = 0.0);
  QuadraticLoss(Eigen::MatrixXd matrix, Vec center, double offset = 0.0);

  int dim() const override { return static_cast<int>(center_.size()); }
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double smoothness() const override { return l_f_; }
  double strong_convexity() const override { return mu_f_; }
  std::optional<double> lower_bound() const override { return offset_; }

  const Vec& center() const { return center_; }

 private:
  bool diagonal_ = true;
  Vec diag_;
  Eigen::MatrixXd dense_;
  Vec center_;
  double offset_ = 0.0;
  double l_f_ = 0.0;
  double mu_f_ = 0.0;
};

// l2-regularized logistic regression over sparse rows with labels in {-1,+1}:
// f(x) = (1/n) sum_i log(1 + exp(-b_i <A_i, x>)) + (lambda/2) |x|^2.
// Smoothness lambda_max(A^T A)/(4n) + lambda is computed at construction via
// power iteration (rel. tol 1e-8); mu_f = lambda.
class LogisticLoss final : public Loss {
 public:
  LogisticLoss(std::vector<SparseRow> rows, std::vector<double> labels, int dim,
               double lambda);

  int dim() const override { return dim_; }
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double smoothness() const override { return l0_ + lambda_; }
  double strong_convexity() const override { return lambda_; }

  int num_terms() const override { return static_cast<int>(rows_.size()); }
  Vec term_gradient(int term, const Vec& x) const override;
  double max_term_smoothness() const override { return max_term_l_; }
  std::optional<double> mean_term_lower_bound() const override;

  // lambda_max(A^T A)/(4n): smoothness of the unregularized part. The
  // kappa-targeting rule sets lambda = L_0/(kappa - 1).
  double unregularized_smoothness() const { return l0_; }
  double lambda() const { return lambda_; }

 private:
  std::vector<SparseRow> rows_;
  std::vector<double> labels_;
  int dim_ = 0;
  double lambda_ = 0.0;
  double l0_ = 0.0;
  double max_term_l_ = 0.0;
  std::optional<double> mean_term_inf_;
};

// Logistic data term with the nonconvex regularizer lambda sum x_i^2/(1+x_i^2):
// smooth and bounded below but not convex. Fixture for the smoothness-only
// theorems.
class NonconvexLogisticLoss final : public Loss {
 public:
  NonconvexLogisticLoss(std::vector<SparseRow> rows, std::vector<double> labels,
                        int dim, double lambda);

  int dim() const override { return dim_; }
  double value(const Vec& x) const override;
  Vec gradient(const Vec& x) const override;
  double smoothness() const override { return l0_ + 2.0 * lambda_; }

  int num_terms() const override { return static_cast<int>(rows_.size()); }
  Vec term_gradient(int term, const Vec& x) const override;
  double max_term_smoothness() const override { return max_term_l_; }

 private:
  std::vector<SparseRow> rows_;
  std::vector<double> labels_;
  int dim_ = 0;
  double lambda_ = 0.0;
  double l0_ = 0.0;
  double max_term_l_ = 0.0;
};

// lambda_max(A^T A) via power iteration with a deterministic all-ones start,
// relative tolerance 1e-8, at most 10^4 iterations.
double power_iteration_ata(const std::vector<SparseRow>& rows, int dim);

// lambda targeting a condition number: (L_0 + lambda)/lambda = kappa.
double lambda_for_kappa(double l0, double kappa);

// Monte-Carlo estimate with its standard error.
struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

// The sketched training problem: minimize E[f(s + S(x-s))] over S ~ D.
class MastProblem {
 public:
  MastProblem(LossPtr loss, SketchDistribution dist, Vec shift);

  const Loss& loss() const { return *loss_; }
  const LossPtr& loss_ptr() const { return loss_; }
  const SketchDistribution& dist() const { return dist_; }
  const Vec& shift() const { return shift_; }
  int dim() const { return static_cast<int>(shift_.size()); }
  const SpectralConstants& constants() const { return constants_; }

  // f_S(x) = f(s + S(x - s)).
  double sketched_value(const SketchSample& s, const Vec& x) const;

  // grad f_S(x) = S^T grad f(s + S(x - s)); has at most nnz(S) nonzeros.
  Vec estimator_gradient(const SketchSample& s, const Vec& x) const;

  // Exact sketched loss by support enumeration. Propagates
  // SupportTooLargeError when the support exceeds `limit`.
  double exact_tilde_value(const Vec& x, std::uint64_t limit = kDefaultSupportLimit,
                           Exec exec = Exec::parallel) const;
  Vec exact_tilde_gradient(const Vec& x, std::uint64_t limit = kDefaultSupportLimit,
                           Exec exec = Exec::parallel) const;

  // Sample mean and standard error of f_S(x) over i.i.d. sketches.
  McEstimate monte_carlo_tilde_value(const Vec& x, int n_samples, RngStream& rng,
                                     Exec exec = Exec::parallel) const;

  // Smoothness / strong convexity of the sketched objective.
  double tilde_smoothness() const { return constants_.l_d * loss_->smoothness(); }
  double tilde_strong_convexity() const {
    return constants_.mu_d * loss_->strong_convexity();
  }

 private:
  LossPtr loss_;
  SketchDistribution dist_;
  Vec shift_;
  SpectralConstants constants_;
};

// Theorem-style sandwich of f(x_D*) between f(x*) and f(x*) plus the
// spectral correction terms. Requires mu_f > 0.
struct SandwichBounds {
  double lower = 0.0;
  double upper = 0.0;
  double f_at_xd = 0.0;
};
SandwichBounds mast_sandwich_bounds(const MastProblem& p, const Vec& x_star,
                                    const Vec& x_d_star);

// Inner gradient estimator g_S with E[g_S | S] = grad f_S, under the
// second-moment condition E|g|^2 <= 2A(f_S - f_S^inf) + B|grad f_S|^2 + C.
class AbcEstimator {
 public:
  enum class Mode { exact, bounded_variance, uniform_subsample };

  static AbcEstimator exact() { return AbcEstimator(Mode::exact, 0.0, 0); }
  static AbcEstimator bounded_variance(double sigma2);
  static AbcEstimator uniform_subsample(int batch);

  Mode mode() const { return mode_; }
  double sigma2() const { return sigma2_; }
  int batch() const { return batch_; }

  Vec estimate(const MastProblem& p, const SketchSample& s, const Vec& x,
               RngStream& rng) const;

  struct Constants {
    double a = 0.0;
    double b = 1.0;
    std::optional<double> c = 0.0;  // nullopt when not computable
  };
  // `f_inf` supplies the loss lower bound when the loss itself does not know
  // it (e.g. computed by the reference solver); C stays unknown without it.
  Constants abc_constants(const Loss& loss,
                          std::optional<double> f_inf = std::nullopt) const;

 private:
  AbcEstimator(Mode mode, double sigma2, int batch)
      : mode_(mode), sigma2_(sigma2), batch_(batch) {}

  Mode mode_;
  double sigma2_;
  int batch_;
};

// acc += w * g, in one fixed expression shape. Every support or minibatch
// average in the library accumulates through this helper so that equal index
// orders give bitwise-equal sums.
inline void accumulate_scaled(Vec& acc, double w, const Vec& g) { acc += w * g; }

}  // namespace mast

#endif  // MAST_OBJECTIVE_HPP
