#include <doctest.h>

#include <cmath>

#include "mast/data.hpp"
#include "mast/oracle.hpp"
#include "mast/solvers.hpp"

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

LossPtr unit_quad(int d) {
  return std::make_shared<QuadraticLoss>(Vec(Vec::Ones(d)), Vec(Vec::Zero(d)), 0.0);
}

bool rows_equal(const std::vector<RunRow>& a, const std::vector<RunRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].seed != b[i].seed || a[i].t != b[i].t || a[i].erm_loss != b[i].erm_loss ||
        a[i].grad_sq_erm != b[i].grad_sq_erm || a[i].mast_loss != b[i].mast_loss ||
        a[i].diverged != b[i].diverged) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("step size rules reproduce the worked constants") {
  // L_f = 1, L_S^max = 4
  const auto loss = unit_quad(2);
  const SpectralConstants rk21 = SketchDistribution::rand_k(2, 1).spectral_constants();
  CHECK(step_size(StepSizeRule::thm2(), rk21, *loss) == 0.25);
  CHECK(step_size(StepSizeRule::thm5(), rk21, *loss) == doctest::Approx(1.0 / 80.0));
  CHECK(step_size(StepSizeRule::lsvrdsg_cvx(), rk21, *loss) == doctest::Approx(1.0 / 160.0));

  // identity sketches, T = 100
  const SpectralConstants id = SketchDistribution::identity(2).spectral_constants();
  CHECK(step_size(StepSizeRule::thm3(100), id, *loss) == doctest::Approx(0.1));

  CHECK(step_size(StepSizeRule::manual_gamma(0.33), id, *loss) == 0.33);
}

TEST_CASE("the abc step size reduces to the nonconvex one at (A,B,C) = (0,1,0)") {
  const auto loss = unit_quad(3);
  const SpectralConstants c = SketchDistribution::rand_k(3, 1).spectral_constants();
  for (long t : {10L, 100L, 1000L}) {
    CHECK(step_size(StepSizeRule::thm4(t, 0.0, 1.0, 0.0), c, *loss) ==
          doctest::Approx(step_size(StepSizeRule::thm3(t), c, *loss)).epsilon(1e-15));
  }
}

TEST_CASE("eps-target rule: budget formula and the missing-constant errors") {
  const auto loss = unit_quad(2);
  const SpectralConstants id = SketchDistribution::identity(2).spectral_constants();
  // delta0 = 1, gap = 1, eps = 0.5, D = 1: T = 12 * 3 / eps^4 = 576
  const StepSizeRule rule = StepSizeRule::cor1(0.5, 1.0, 1.0);
  CHECK(cor1_iterations(rule, id, *loss) == 576);
  CHECK(step_size(rule, id, *loss) == doctest::Approx(1.0 / 24.0));

  StepSizeRule missing{StepSizeRule::Kind::cor1_eps_target};
  missing.eps = 0.5;
  try {
    step_size(missing, id, *loss);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("tilde_gap") != std::string::npos);
  }
}

TEST_CASE("spage step size: p = 1 collapses to descent on the sketched loss") {
  const auto loss = unit_quad(4);
  const SpectralConstants c = SketchDistribution::rand_k(4, 2).spectral_constants();
  CHECK(step_size(StepSizeRule::spage_rule(1.0, 1), c, *loss) ==
        doctest::Approx(1.0 / (loss->smoothness() * c.l_d)));
  const double g = step_size(StepSizeRule::spage_rule(0.5, 2), c, *loss);
  const double want = 1.0 / (std::sqrt(0.5 / (0.5 * 2.0)) * 1.0 * (2.0 + std::sqrt(4.0 * 2.0)));
  CHECK(g == doctest::Approx(want));
}

TEST_CASE("dsgd step: worked example, gamma = 0, identity reduction") {
  // Deterministic sketch via a single-member finite set.
  SketchSample sk;
  sk.dim = 2;
  sk.entries = {{0, 2.0}};
  const MastProblem p(unit_quad(2), SketchDistribution::finite_set({sk}), Vec::Zero(2));

  SolverState st;
  st.x = vec({1.0, 1.0});
  RngStream rng(1);
  dsgd_step(p, st, 0.1, AbcEstimator::exact(), rng);
  CHECK(st.x == vec({0.6, 1.0}));
  CHECK(st.t == 1);

  SolverState frozen;
  frozen.x = vec({1.0, 1.0});
  RngStream rng2(1);
  dsgd_step(p, frozen, 0.0, AbcEstimator::exact(), rng2);
  CHECK(frozen.x == vec({1.0, 1.0}));

  // identity sketches with the exact estimator: a plain gradient step
  const MastProblem pid(unit_quad(2), SketchDistribution::identity(2), Vec::Zero(2));
  SolverState gd;
  gd.x = vec({0.5, -2.0});
  RngStream rng3(2);
  dsgd_step(pid, gd, 0.2, AbcEstimator::exact(), rng3);
  CHECK(gd.x == vec({0.5 - 0.2 * 0.5, -2.0 + 0.2 * 2.0}));
}

TEST_CASE("divergent runs raise and are recorded, not fatal") {
  const MastProblem p(unit_quad(1), SketchDistribution::identity(1), Vec::Zero(1));
  SolverState st;
  st.x = vec({1e9});
  RngStream rng(3);
  // gamma = 3 maps x to -2x: the norm doubles every step
  CHECK_THROWS_AS(
      [&] {
        for (int i = 0; i < 100; ++i) dsgd_step(p, st, 3.0, AbcEstimator::exact(), rng);
      }(),
      DivergenceError);

  SolverConfig sc;
  sc.kind = SolverKind::dsgd;
  sc.gamma = 3.0;
  sc.iterations = 100;
  sc.seed = 4;
  sc.x0 = vec({1e9});
  const RunResult run = run_solver(p, sc, MetricsOptions{});
  CHECK(run.diverged);
  CHECK(run.diverged_at > 0);
  CHECK(run.rows.back().diverged);
}

TEST_CASE("run: T = 0 logs only the initial point") {
  const MastProblem p(unit_quad(2), SketchDistribution::identity(2), Vec::Zero(2));
  SolverConfig sc;
  sc.kind = SolverKind::dsgd;
  sc.gamma = 0.1;
  sc.iterations = 0;
  sc.seed = 5;
  sc.x0 = vec({1.0, 2.0});
  const RunResult run = run_solver(p, sc, MetricsOptions{});
  REQUIRE(run.rows.size() == 1);
  CHECK(run.rows[0].t == 0);
  CHECK(run.rows[0].erm_loss == p.loss().value(sc.x0));
}

TEST_CASE("run matches the closed-form gradient-descent trajectory") {
  const double mu = 0.7, gamma = 0.1;
  const auto loss = std::make_shared<QuadraticLoss>(Vec(Vec::Constant(3, mu)),
                                                    Vec(Vec::Zero(3)), 0.0);
  const MastProblem p(loss, SketchDistribution::identity(3), Vec::Zero(3));
  SolverConfig sc;
  sc.kind = SolverKind::dsgd;
  sc.gamma = gamma;
  sc.iterations = 25;
  sc.seed = 6;
  sc.x0 = randn(3, 7);
  const RunResult run = run_solver(p, sc, MetricsOptions{});
  const Vec closed = std::pow(1.0 - gamma * mu, 25.0) * sc.x0;
  CHECK((run.final_x - closed).norm() <= 1e-12 * closed.norm());
}

TEST_CASE("fixed seed runs twice produce identical records") {
  const Dataset ds = make_synthetic_dataset(20, 6, 8, 3, 0.1);
  const auto loss = std::make_shared<LogisticLoss>(ds.rows, ds.labels, 6, 0.1);
  const MastProblem p(loss, SketchDistribution::rand_k(6, 2), randn(6, 9));
  SolverConfig sc;
  sc.kind = SolverKind::dsgd;
  sc.gamma = 0.05;
  sc.iterations = 40;
  sc.seed = 10;
  sc.x0 = randn(6, 11);
  MetricsOptions m;
  m.cadence = 5;
  m.mast_loss = [&](const Vec& x, long) -> McEstimate {
    return {p.exact_tilde_value(x, kDefaultSupportLimit, Exec::serial), 0.0};
  };
  const RunResult a = run_solver(p, sc, m);
  const RunResult b = run_solver(p, sc, m);
  CHECK(rows_equal(a.rows, b.rows));
  CHECK((a.final_x.array() == b.final_x.array()).all());
}

TEST_CASE("variance-reduced solvers need a uniform finite support") {
  const MastProblem p(unit_quad(3),
                      SketchDistribution::bernoulli_independent(Vec::Constant(3, 0.5)),
                      Vec::Zero(3));
  CHECK_THROWS_AS(SupportSet::from(p.dist()), ConfigError);

  const MastProblem pr(unit_quad(3), SketchDistribution::rand_k(3, 1), Vec::Zero(3));
  const SupportSet support = SupportSet::from(pr.dist());
  CHECK(support.size() == 3);
  RngStream rng(12);
  CHECK_THROWS_AS(lsvrdsg_init(pr, support, 4, Vec::Zero(3), rng), ConfigError);
  CHECK_THROWS_AS(lsvrdsg_init(pr, support, 0, Vec::Zero(3), rng), ConfigError);
}

TEST_CASE("lsvrdsg estimator is unbiased given a full-batch anchor") {
  const Dataset ds = make_synthetic_dataset(18, 5, 13, 3, 0.1);
  const auto loss = std::make_shared<LogisticLoss>(ds.rows, ds.labels, 5, 0.1);
  const MastProblem p(loss, SketchDistribution::rand_k(5, 2), randn(5, 14) * 0.3);
  const SupportSet support = SupportSet::from(p.dist());
  const int n = support.size();

  // run a few steps so x and w differ, with full-batch refreshes
  RngStream init = RngStream::derive(15, 0);
  SolverState st = lsvrdsg_init(p, support, n, randn(5, 16), init);
  for (long t = 0; t < 7; ++t) {
    RngStream rng = RngStream::derive(15, 1 + static_cast<std::uint64_t>(t));
    lsvrdsg_step(p, support, st, 0.02, 0.5, n, rng);
  }
  // conditional mean of h over the uniform sketch draw
  Vec mean = Vec::Zero(5);
  for (int i = 0; i < n; ++i) {
    const auto& sk = support.sketches[static_cast<std::size_t>(i)];
    accumulate_scaled(mean, 1.0 / n,
                      p.estimator_gradient(sk, st.x) - p.estimator_gradient(sk, st.w) +
                          st.h_hat);
  }
  const Vec tilde = p.exact_tilde_gradient(st.x, kDefaultSupportLimit, Exec::serial);
  CHECK((mean - tilde).norm() <= 1e-12 * std::max(1.0, tilde.norm()));
}

TEST_CASE("lsvrdsg with b = N converges linearly to the sketched optimum") {
  const int d = 6;
  Vec diag(d);
  for (int i = 0; i < d; ++i) diag[i] = 0.5 + 0.1 * i;
  const auto loss = std::make_shared<QuadraticLoss>(diag, randn(d, 17), 0.0);
  const MastProblem p(loss, SketchDistribution::rand_k(d, 1), Vec::Zero(d));
  const SupportSet support = SupportSet::from(p.dist());
  const ReferenceSolution star = solve_reference_tilde(p, Vec::Zero(d), 1e-26);

  SolverConfig sc;
  sc.kind = SolverKind::lsvrdsg;
  sc.gamma = step_size(StepSizeRule::thm5(), p.constants(), *loss);
  sc.iterations = 12000;
  sc.seed = 18;
  sc.x0 = randn(d, 19);
  sc.prob = 0.05;
  sc.batch = support.size();
  const RunResult run = run_solver(p, sc, MetricsOptions{});
  CHECK((run.final_x - star.x).squaredNorm() < 1e-10);
}

TEST_CASE("spage estimator drift telescopes on the no-refresh path") {
  const int d = 4;
  const auto loss = std::make_shared<QuadraticLoss>(vec({1.0, 0.7, 1.2, 0.9}),
                                                    randn(d, 20), 0.0);
  const MastProblem p(loss, SketchDistribution::rand_k(d, 1), Vec::Zero(d));
  const SupportSet support = SupportSet::from(p.dist());
  const int n = support.size();
  const int batch = 3, small_batch = 2;
  const double gamma = 0.05;

  RngStream init = RngStream::derive(21, 0);
  SolverState st = spage_init(p, support, batch, randn(d, 22), init);
  const Vec h0 = st.h;
  Vec expected_drift = Vec::Zero(d);
  for (long t = 0; t < 10; ++t) {
    RngStream step_rng = RngStream::derive(21, 1 + static_cast<std::uint64_t>(t));
    RngStream replay = step_rng;  // same stream state, replayed below
    const Vec x_prev = st.x;
    spage_step(p, support, st, gamma, 0.0, batch, small_batch, step_rng);
    CHECK_FALSE(replay.bernoulli(0.0));
    for (int i : replay.subset_without_replacement(n, small_batch)) {
      const auto& sk = support.sketches[static_cast<std::size_t>(i)];
      accumulate_scaled(expected_drift, 1.0 / small_batch,
                        p.estimator_gradient(sk, st.x));
      accumulate_scaled(expected_drift, -1.0 / small_batch,
                        p.estimator_gradient(sk, x_prev));
    }
  }
  CHECK((st.h - h0 - expected_drift).norm() <= 1e-12);
}

TEST_CASE("spage with p = 1 and b = N is bitwise gradient descent") {
  const Dataset ds = make_synthetic_dataset(15, 4, 23, 2, 0.1);
  const auto loss = std::make_shared<LogisticLoss>(ds.rows, ds.labels, 4, 0.1);
  const MastProblem p(loss, SketchDistribution::rand_k(4, 2), randn(4, 24) * 0.2);
  const double gamma = 1.0 / p.tilde_smoothness();

  SolverConfig sc;
  sc.kind = SolverKind::spage;
  sc.gamma = gamma;
  sc.iterations = 20;
  sc.seed = 25;
  sc.x0 = randn(4, 26);
  sc.prob = 1.0;
  sc.batch = 6;  // C(4,2)
  sc.small_batch = 1;
  std::vector<Vec> traj;
  MetricsOptions m;
  m.cadence = 1;
  run_solver(p, sc, m, [&](const SolverState& st, long) { traj.push_back(st.x); });

  Vec x = sc.x0;
  for (const Vec& logged : traj) {
    CHECK((x.array() == logged.array()).all());
    x -= gamma * p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial);
  }
}

TEST_CASE("spage configuration guards") {
  const MastProblem p(unit_quad(4), SketchDistribution::rand_k(4, 1), Vec::Zero(4));
  SolverConfig sc;
  sc.kind = SolverKind::spage;
  sc.gamma = 0.01;
  sc.iterations = 5;
  sc.seed = 1;
  sc.x0 = Vec::Zero(4);
  sc.prob = 0.5;
  sc.batch = 2;
  sc.small_batch = 2;  // must be < batch
  CHECK_THROWS_AS(run_solver(p, sc, MetricsOptions{}), ConfigError);
}
