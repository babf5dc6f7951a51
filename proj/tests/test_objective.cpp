#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "mast/data.hpp"
#include "mast/objective.hpp"
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

std::shared_ptr<const LogisticLoss> toy_logistic(int n, int d, std::uint64_t seed,
                                                 double lambda) {
  const Dataset ds = make_synthetic_dataset(n, d, seed, std::min(4, d), 0.15);
  return std::make_shared<LogisticLoss>(ds.rows, ds.labels, d, lambda);
}

SketchSample diag_sketch(std::initializer_list<double> scales) {
  Vec c(static_cast<int>(scales.size()));
  int i = 0;
  for (double s : scales) c[i++] = s;
  return SketchSample::from_diagonal(c);
}

}  // namespace

TEST_CASE("quadratic loss value, gradient and constants") {
  const QuadraticLoss q(vec({2.0, 0.5}), vec({1.0, -1.0}), 0.25);
  CHECK(q.value(vec({1.0, -1.0})) == 0.25);
  CHECK(q.smoothness() == 2.0);
  CHECK(q.strong_convexity() == 0.5);
  CHECK(q.lower_bound().value() == 0.25);
  CHECK(q.gradient(vec({2.0, 0.0})) == vec({2.0, 0.5}));

  Eigen::MatrixXd m(2, 2);
  m << 2.0, 0.3, 0.3, 1.0;
  const QuadraticLoss dense(m, vec({0.0, 0.0}), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  CHECK(dense.smoothness() == doctest::Approx(es.eigenvalues().maxCoeff()));
  CHECK(dense.strong_convexity() == doctest::Approx(es.eigenvalues().minCoeff()));
}

TEST_CASE("logistic loss at zero is log 2") {
  const auto loss = toy_logistic(30, 6, 3, 0.1);
  CHECK(loss->value(Vec::Zero(6)) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logistic smoothness matches a dense eigensolve") {
  const Dataset ds = make_synthetic_dataset(25, 5, 4, 3, 0.1);
  const LogisticLoss loss(ds.rows, ds.labels, 5, 0.05);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(25, 5);
  for (int i = 0; i < 25; ++i) {
    for (const auto& [j, v] : ds.rows[static_cast<std::size_t>(i)]) a(i, j) = v;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.transpose() * a);
  const double want = es.eigenvalues().maxCoeff() / (4.0 * 25.0) + 0.05;
  CHECK(loss.smoothness() == doctest::Approx(want).epsilon(1e-7));
  CHECK(loss.strong_convexity() == 0.05);
}

TEST_CASE("every loss gradient matches central finite differences") {
  const auto check = [](const Loss& loss) {
    for (std::uint64_t s : {11ull, 12ull, 13ull}) {
      const Vec x = randn(loss.dim(), s);
      const Vec g = loss.gradient(x);
      const Vec fd = finite_diff_gradient(loss, x, 1e-6);
      CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
    }
  };
  check(QuadraticLoss(vec({2.0, 0.5, 1.0}), vec({0.3, -0.2, 0.1}), 0.0));
  check(*toy_logistic(30, 6, 5, 0.1));
  const Dataset ds = make_synthetic_dataset(30, 6, 6, 3, 0.2);
  check(NonconvexLogisticLoss(ds.rows, ds.labels, 6, 0.1));
}

TEST_CASE("strong convexity inequality holds at sampled pairs") {
  const auto loss = toy_logistic(30, 5, 7, 0.2);
  const double mu = loss->strong_convexity();
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vec x = randn(5, 100 + s);
    const Vec y = randn(5, 200 + s);
    const double lhs = loss->value(y);
    const double rhs = loss->value(x) + loss->gradient(x).dot(y - x) +
                       0.5 * mu * (y - x).squaredNorm();
    CHECK(lhs >= rhs - 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("nonconvex logistic is bounded below and not strongly convex") {
  const Dataset ds = make_synthetic_dataset(30, 6, 8, 3, 0.2);
  const NonconvexLogisticLoss loss(ds.rows, ds.labels, 6, 0.1);
  CHECK(loss.strong_convexity() == 0.0);
  for (std::uint64_t s = 0; s < 10; ++s) {
    CHECK(loss.value(randn(6, 300 + s) * 3.0) >= 0.0);
  }
}

TEST_CASE("kappa targeting gives the requested condition number") {
  const double l0 = 0.37;
  const double lambda = lambda_for_kappa(l0, 1000.0);
  CHECK((l0 + lambda) / lambda == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK_THROWS_AS(lambda_for_kappa(1.0, 1.0), ConfigError);
}

TEST_CASE("sketched value: identity, fixed point, and the worked example") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), Vec::Zero(2));

  // S = I
  CHECK(p.sketched_value(SketchSample::identity(2), vec({0.7, -0.3})) ==
        quad->value(vec({0.7, -0.3})));
  // x = s: the sketch argument collapses to the shift regardless of S
  const auto loss_shift =
      std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.4, 0.1}), 0.0);
  const MastProblem ps(loss_shift, SketchDistribution::rand_k(2, 1), vec({0.2, -0.2}));
  CHECK(ps.sketched_value(diag_sketch({0.0, 2.0}), vec({0.2, -0.2})) ==
        loss_shift->value(vec({0.2, -0.2})));
  // quadratic |x|^2/2, s = 0, sketch diag(2,0), x = (1,1): value 2
  CHECK(p.sketched_value(diag_sketch({2.0, 0.0}), vec({1.0, 1.0})) == 2.0);
}

TEST_CASE("estimator gradient: identity, worked example, sparsity") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), Vec::Zero(2));
  CHECK(p.estimator_gradient(SketchSample::identity(2), vec({0.7, -0.3})) ==
        quad->gradient(vec({0.7, -0.3})));
  CHECK(p.estimator_gradient(diag_sketch({2.0, 0.0}), vec({1.0, 1.0})) == vec({4.0, 0.0}));

  // rand-k estimators have at most K nonzeros
  const auto logi = toy_logistic(20, 8, 9, 0.05);
  const MastProblem pl(logi, SketchDistribution::rand_k(8, 3), randn(8, 10));
  RngStream rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const Vec g = pl.estimator_gradient(pl.dist().sample(rng), randn(8, 400 + rep));
    int nnz = 0;
    for (int i = 0; i < 8; ++i) nnz += g[i] != 0.0;
    CHECK(nnz <= 3);
  }
}

TEST_CASE("exact sketched loss: identity, worked example, matches monte carlo") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  const MastProblem ident(quad, SketchDistribution::identity(2), Vec::Zero(2));
  CHECK(ident.exact_tilde_value(vec({0.3, 0.4})) == quad->value(vec({0.3, 0.4})));

  const MastProblem p(quad, SketchDistribution::rand_k(2, 1), Vec::Zero(2));
  CHECK(p.exact_tilde_value(vec({1.0, 1.0})) == 2.0);

  const auto logi = toy_logistic(20, 6, 12, 0.05);
  const MastProblem pl(logi, SketchDistribution::rand_k(6, 2), randn(6, 13));
  const Vec x = randn(6, 14);
  const double exact = pl.exact_tilde_value(x);
  RngStream rng(15);
  const McEstimate mc = pl.monte_carlo_tilde_value(x, 20000, rng);
  CHECK(std::abs(mc.mean - exact) <= 4.0 * mc.stderr_);
}

TEST_CASE("exact sketched loss propagates oversized supports") {
  const auto quad = std::make_shared<QuadraticLoss>(Vec(Vec::Ones(30)), Vec(Vec::Zero(30)), 0.0);
  const MastProblem p(quad, SketchDistribution::rand_k(30, 15), Vec::Zero(30));
  CHECK_THROWS_AS(p.exact_tilde_value(Vec::Zero(30)), SupportTooLargeError);
}

TEST_CASE("monte carlo: zero variance under identity, stderr scales as 1/sqrt(n)") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 2.0}), vec({0.1, 0.2}), 0.0);
  const MastProblem ident(quad, SketchDistribution::identity(2), Vec::Zero(2));
  RngStream rng(16);
  const McEstimate id = ident.monte_carlo_tilde_value(vec({1.0, -1.0}), 100, rng);
  // all samples are identical; only summation rounding remains
  CHECK(id.mean == doctest::Approx(quad->value(vec({1.0, -1.0}))).epsilon(1e-15));
  CHECK(id.stderr_ <= 1e-14);

  const auto logi = toy_logistic(20, 6, 17, 0.05);
  const MastProblem p(logi, SketchDistribution::rand_k(6, 2), Vec::Zero(6));
  const Vec x = randn(6, 18);
  std::vector<double> se;
  for (int n : {1000, 10000, 100000}) {
    RngStream r2(19);
    se.push_back(p.monte_carlo_tilde_value(x, n, r2).stderr_);
  }
  CHECK(std::abs(se[0] / se[1] / std::sqrt(10.0) - 1.0) <= 0.2);
  CHECK(std::abs(se[1] / se[2] / std::sqrt(10.0) - 1.0) <= 0.2);
  CHECK_THROWS_AS(p.monte_carlo_tilde_value(x, 1, rng), ConfigError);
}

TEST_CASE("serial and parallel kernel paths agree bitwise") {
  const auto logi = toy_logistic(40, 8, 20, 0.05);
  const MastProblem p(logi, SketchDistribution::rand_k(8, 2), randn(8, 21));
  const Vec x = randn(8, 22);
  CHECK(p.exact_tilde_value(x, kDefaultSupportLimit, Exec::serial) ==
        p.exact_tilde_value(x, kDefaultSupportLimit, Exec::parallel));
  CHECK((p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial).array() ==
         p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::parallel).array())
            .all());
  RngStream r1(23), r2(23);
  const McEstimate a = p.monte_carlo_tilde_value(x, 5000, r1, Exec::serial);
  const McEstimate b = p.monte_carlo_tilde_value(x, 5000, r2, Exec::parallel);
  CHECK(a.mean == b.mean);
  CHECK(a.stderr_ == b.stderr_);
}

TEST_CASE("inner estimators reduce to the exact one in the degenerate cases") {
  const auto logi = toy_logistic(15, 6, 24, 0.1);
  const MastProblem p(logi, SketchDistribution::rand_k(6, 2), randn(6, 25));
  RngStream rng(26);
  const SketchSample sk = p.dist().sample(rng);
  const Vec x = randn(6, 27);
  const Vec exact = p.estimator_gradient(sk, x);

  RngStream r1(1);
  CHECK((AbcEstimator::exact().estimate(p, sk, x, r1).array() == exact.array()).all());
  RngStream r2(2);
  CHECK((AbcEstimator::bounded_variance(0.0).estimate(p, sk, x, r2).array() ==
         exact.array())
            .all());
  RngStream r3(3);
  const Vec full = AbcEstimator::uniform_subsample(15).estimate(p, sk, x, r3);
  CHECK((full - exact).norm() <= 1e-14 * std::max(1.0, exact.norm()));
}

TEST_CASE("subsampled estimator is unbiased conditional on the sketch") {
  const auto logi = toy_logistic(12, 5, 28, 0.1);
  const MastProblem p(logi, SketchDistribution::rand_k(5, 2), Vec::Zero(5));
  RngStream rng(29);
  const SketchSample sk = p.dist().sample(rng);
  const Vec x = randn(5, 30);
  const Vec exact = p.estimator_gradient(sk, x);
  const AbcEstimator est = AbcEstimator::uniform_subsample(1);
  const int n = 40000;
  Vec mean = Vec::Zero(5);
  Vec second = Vec::Zero(5);
  for (int i = 0; i < n; ++i) {
    RngStream ri = RngStream::derive(31, static_cast<std::uint64_t>(i));
    const Vec g = est.estimate(p, sk, x, ri);
    mean += g;
    second += g.cwiseProduct(g);
  }
  mean /= n;
  second /= n;
  for (int j = 0; j < 5; ++j) {
    const double var = std::max(second[j] - mean[j] * mean[j], 0.0);
    CHECK(std::abs(mean[j] - exact[j]) <= 4.0 * std::sqrt(var / n) + 1e-12);
  }
}

TEST_CASE("subsampling needs finite-sum structure") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  const MastProblem p(quad, SketchDistribution::identity(2), Vec::Zero(2));
  RngStream rng(32);
  CHECK_THROWS_AS(AbcEstimator::uniform_subsample(1).estimate(
                      p, SketchSample::identity(2), vec({1.0, 1.0}), rng),
                  UnsupportedError);
  CHECK_THROWS_AS(AbcEstimator::uniform_subsample(0), ConfigError);
  CHECK_THROWS_AS(AbcEstimator::bounded_variance(-1.0), ConfigError);
}

TEST_CASE("abc constants per estimator mode") {
  const auto logi = toy_logistic(15, 5, 33, 0.1);
  const auto exact = AbcEstimator::exact().abc_constants(*logi);
  CHECK(exact.a == 0.0);
  CHECK(exact.b == 1.0);
  CHECK(exact.c.value() == 0.0);

  const auto bv = AbcEstimator::bounded_variance(0.7).abc_constants(*logi);
  CHECK(bv.a == 0.0);
  CHECK(bv.b == 1.0);
  CHECK(bv.c.value() == 0.7);

  // Subsampling: A = max_i L_{f_i}; C needs f^inf (supplied externally here).
  const auto sub = AbcEstimator::uniform_subsample(1).abc_constants(*logi);
  CHECK(sub.a == logi->max_term_smoothness());
  CHECK(sub.b == 0.0);
  CHECK_FALSE(sub.c.has_value());  // logistic f^inf is not analytic
  const double f_inf = solve_reference(*logi, Vec::Zero(5), 1e-24).value;
  const auto sub2 = AbcEstimator::uniform_subsample(1).abc_constants(*logi, f_inf);
  CHECK(sub2.c.value() ==
        doctest::Approx(2.0 * sub.a * (f_inf - logi->mean_term_lower_bound().value())));
  CHECK(sub2.c.value() >= 0.0);
}

TEST_CASE("minima sandwich: degenerate cases and a logistic fixture") {
  // identity sketches: both correction terms vanish
  const auto quad = std::make_shared<QuadraticLoss>(vec({2.0, 1.0}), vec({0.3, -0.1}), 0.0);
  const MastProblem ident(quad, SketchDistribution::identity(2), Vec::Zero(2));
  const SandwichBounds ib = mast_sandwich_bounds(ident, quad->center(), quad->center());
  CHECK(ib.lower == ib.upper);
  CHECK(ib.f_at_xd == ib.lower);

  // quadratic centered at the shift: everything collapses to zero
  const Vec s = vec({0.5, -0.5});
  const auto quad_s = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), s, 0.0);
  const MastProblem p(quad_s, SketchDistribution::rand_k(2, 1), s);
  const SandwichBounds zb = mast_sandwich_bounds(p, s, s);
  CHECK(zb.lower == 0.0);
  CHECK(zb.upper == 0.0);
  CHECK(zb.f_at_xd == 0.0);

  // logistic fixture: the chain lower <= f(x_D*) <= upper with reference
  // minimizers
  const auto logi = toy_logistic(25, 5, 34, 0.15);
  const MastProblem pl(logi, SketchDistribution::rand_k(5, 2), randn(5, 35) * 0.3);
  const ReferenceSolution star = solve_reference(*logi, Vec::Zero(5), 1e-22);
  const ReferenceSolution d_star = solve_reference_tilde(pl, Vec::Zero(5), 1e-22);
  const SandwichBounds sb = mast_sandwich_bounds(pl, star.x, d_star.x);
  CHECK(sb.lower <= sb.f_at_xd + 1e-12);
  CHECK(sb.f_at_xd <= sb.upper + 1e-12);

  // requires strong convexity
  const Dataset ds = make_synthetic_dataset(20, 5, 36, 3, 0.1);
  const auto nc = std::make_shared<NonconvexLogisticLoss>(ds.rows, ds.labels, 5, 0.05);
  const MastProblem pn(nc, SketchDistribution::identity(5), Vec::Zero(5));
  CHECK_THROWS_AS(mast_sandwich_bounds(pn, Vec::Zero(5), Vec::Zero(5)), UnsupportedError);
}

TEST_CASE("dimension mismatches are rejected") {
  const auto quad = std::make_shared<QuadraticLoss>(vec({1.0, 1.0}), vec({0.0, 0.0}), 0.0);
  CHECK_THROWS_AS(MastProblem(quad, SketchDistribution::identity(3), Vec::Zero(2)),
                  DimensionError);
  CHECK_THROWS_AS(MastProblem(quad, SketchDistribution::identity(2), Vec::Zero(3)),
                  DimensionError);
  const MastProblem p(quad, SketchDistribution::identity(2), Vec::Zero(2));
  CHECK_THROWS_AS(p.sketched_value(SketchSample::identity(2), Vec::Zero(3)),
                  DimensionError);
}
