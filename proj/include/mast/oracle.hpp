#ifndef MAST_ORACLE_HPP
#define MAST_ORACLE_HPP

#include <functional>
#include <string>
#include <vector>

#include "mast/objective.hpp"

namespace mast {

// Brute-force and high-accuracy reference computations used by tests and the
// verification battery. Deliberately independent of the solver module: the
// reference solver below is a plain gradient-descent loop that only touches
// Loss evaluation.

// Central differences per coordinate with step h = h_scale * (1 + |x_i|).
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                         double h_scale);
Vec finite_diff_gradient(const Loss& loss, const Vec& x, double h_scale);

struct ReferenceSolution {
  Vec x;
  double value = 0.0;
  double grad_norm_sq = 0.0;
  long iterations = 0;
};

// Plain gradient descent with step 1/L until |grad|^2 <= tol_grad_sq.
// Throws when the iteration cap is reached, reporting the achieved norm.
ReferenceSolution solve_reference_gd(const std::function<double(const Vec&)>& value,
                                     const std::function<Vec(const Vec&)>& gradient,
                                     double smoothness, const Vec& x0,
                                     double tol_grad_sq, long max_iterations = 10000000);

// Minimizer and infimum of the plain loss.
ReferenceSolution solve_reference(const Loss& loss, const Vec& x0, double tol_grad_sq);

// Minimizer and infimum of the exact sketched objective (enumerated support).
ReferenceSolution solve_reference_tilde(const MastProblem& p, const Vec& x0,
                                        double tol_grad_sq,
                                        std::uint64_t support_limit = kDefaultSupportLimit);

// One row of the inequality report: the worst relative violation of an
// inequality over all probe points. For "lhs <= rhs" the relative violation
// at a point is (lhs - rhs) / max(1, |lhs|, |rhs|); negative means slack.
struct InequalityCheck {
  std::string id;
  double max_violation = 0.0;
  int at_point = -1;  // index into the probe set, -1 if unused
};

struct InequalityReport {
  std::vector<InequalityCheck> checks;

  bool all_within(double tol) const {
    for (const auto& c : checks) {
      if (!(c.max_violation <= tol)) return false;
    }
    return true;
  }
  const InequalityCheck* worst() const;
};

struct InequalitySuiteOptions {
  int n_points = 100;
  std::uint64_t support_limit = kDefaultSupportLimit;
  // Multiplies the smoothness constant fed to the checks; a deliberately
  // corrupted value (< 1) is the negative control for the suite.
  double smoothness_factor = 1.0;
  Exec exec = Exec::parallel;
  double reference_tol_grad_sq = 1e-22;
};

// Evaluates the smoothness/convexity/second-moment inequalities and the
// minima sandwich at `n_points` standard-normal points plus {0, s, x*, x_D*},
// with all sketch expectations taken exactly over the enumerated support.
InequalityReport verify_inequality_suite(const MastProblem& p, int n_points,
                                         RngStream& rng,
                                         const InequalitySuiteOptions& opts = {});

}  // namespace mast

#endif  // MAST_ORACLE_HPP
