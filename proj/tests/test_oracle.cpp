#include <doctest.h>

#include <cmath>

#include "mast/data.hpp"
#include "mast/oracle.hpp"

using namespace mast;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(static_cast<int>(v.size()));
  int i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

Vec randn(int d, std::uint64_t seed) {
  RngStream rng(seed);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("finite differences: exact on quadratics, matches logistic analytics") {
  const QuadraticLoss q(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  const Vec fd = finite_diff_gradient(q, vec({1.0, 2.0}), 1e-6);
  CHECK(std::abs(fd[0] - 1.0) <= 1e-8);
  CHECK(std::abs(fd[1] - 2.0) <= 1e-8);

  const Dataset ds = make_synthetic_dataset(20, 5, 3, 3, 0.1);
  const LogisticLoss logi(ds.rows, ds.labels, 5, 0.1);
  const Vec g = logi.gradient(Vec::Zero(5));
  const Vec fd2 = finite_diff_gradient(logi, Vec::Zero(5), 1e-6);
  CHECK((g - fd2).norm() <= 1e-5 * std::max(1.0, g.norm()));

  CHECK_THROWS_AS(finite_diff_gradient(q, vec({1.0, 2.0}), 0.0), ConfigError);
}

TEST_CASE("reference solver: quadratic minimizer, cap error") {
  const Vec c = vec({0.3, -0.7, 1.1});
  const QuadraticLoss q(vec({2.0, 1.0, 0.5}), c, 0.0);
  const ReferenceSolution sol = solve_reference(q, Vec::Zero(3), 1e-28);
  CHECK((sol.x - c).norm() <= 1e-12);
  CHECK(std::abs(sol.value) <= 1e-24);

  CHECK_THROWS_AS(solve_reference_gd([&](const Vec& x) { return q.value(x); },
                                     [&](const Vec& x) { return q.gradient(x); },
                                     q.smoothness(), Vec::Zero(3), 1e-28, 3),
                  Error);
}

TEST_CASE("reference solver on the sketched objective: shift-centered quadratic") {
  const Vec s = vec({0.4, -0.2});
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 2.0}), s, 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), s);
  const ReferenceSolution sol = solve_reference_tilde(p, Vec::Zero(2), 1e-26);
  CHECK((sol.x - s).norm() <= 1e-11);
}

TEST_CASE("logistic infimum is reproducible across starts") {
  const Dataset ds = make_synthetic_dataset(25, 5, 4, 3, 0.15);
  const LogisticLoss logi(ds.rows, ds.labels, 5, 0.2);
  const double v1 = solve_reference(logi, Vec::Zero(5), 1e-26).value;
  const double v2 = solve_reference(logi, randn(5, 9), 1e-26).value;
  CHECK(std::abs(v1 - v2) <= 1e-10);
}

TEST_CASE("inequality suite: identity sketches give equalities") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({2.0, 1.0}), vec({0.2, -0.3}), 0.1);
  const MastProblem p(quad, SketchDistribution::identity(2), Vec::Zero(2));
  RngStream rng(10);
  const InequalityReport report = verify_inequality_suite(p, 50, rng);
  CHECK(report.all_within(1e-9));
  for (const auto& c : report.checks) {
    if (c.id == "lemma1.iii.gap_upper_bound" || c.id == "lemma2.tilde_above_f" ||
        c.id == "lemma3.iii.gap_lower_bound") {
      // both sides coincide when L_D = mu_D = 1
      CHECK(std::abs(c.max_violation) <= 1e-12);
    }
  }
}

TEST_CASE("inequality suite passes on quadratic + rand-1 and reports rows") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({2.0, 1.0}), vec({0.5, 0.5}), 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), vec({0.1, -0.1}));
  RngStream rng(11);
  const InequalityReport report = verify_inequality_suite(p, 100, rng);
  CHECK(report.checks.size() == 10);  // one row per registered inequality
  CHECK(report.all_within(1e-9));
  for (const auto& c : report.checks) {
    if (c.id != "theorem1.minima_sandwich") CHECK(c.at_point >= 0);
  }
}

TEST_CASE("inequality suite negative control: corrupted smoothness fails") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({2.0, 1.0}), vec({0.5, 0.5}), 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), vec({0.1, -0.1}));
  RngStream rng(12);
  InequalitySuiteOptions opts;
  opts.smoothness_factor = 0.5;
  const InequalityReport report = verify_inequality_suite(p, 100, rng, opts);
  CHECK_FALSE(report.all_within(1e-9));
  double l1ii = 0.0;
  for (const auto& c : report.checks) {
    if (c.id == "lemma1.ii.tilde_smoothness") l1ii = c.max_violation;
  }
  CHECK(l1ii > 1e-9);
}

TEST_CASE("inequality suite requires strong convexity") {
  const Dataset ds = make_synthetic_dataset(20, 4, 13, 2, 0.2);
  const auto nc = std::make_shared<NonconvexLogisticLoss>(ds.rows, ds.labels, 4, 0.05);
  const MastProblem p(nc, SketchDistribution::identity(4), Vec::Zero(4));
  RngStream rng(14);
  CHECK_THROWS_AS(verify_inequality_suite(p, 10, rng), UnsupportedError);
}
