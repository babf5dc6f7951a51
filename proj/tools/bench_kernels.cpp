// Times the OpenMP kernels against their serial reference implementations:
// exact support reductions, Monte-Carlo estimation, the robustness sampler
// and multi-seed solver runs.

#include <chrono>
#include <cstdio>

#include "mast/experiments.hpp"
#include "mast/oracle.hpp"

using namespace mast;

namespace {

double time_s(const std::function<void()>& body) {
  const auto start = std::chrono::steady_clock::now();
  body();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-34s serial %8.3fs   openmp %8.3fs   speedup %.2fx\n", name, serial_s,
              parallel_s, serial_s / parallel_s);
}

Vec random_point(int d) {
  RngStream rng(99);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", max_threads());

  const Dataset ds = make_synthetic_dataset(800, 160, 5, 12, 0.05);
  const double l0 = power_iteration_ata(ds.rows, ds.d) / (4.0 * ds.n());
  const auto loss =
      std::make_shared<LogisticLoss>(ds.rows, ds.labels, ds.d, lambda_for_kappa(l0, 100.0));
  const MastProblem problem(loss, SketchDistribution::rand_k(ds.d, 1), Vec::Zero(ds.d));
  const Vec x = random_point(ds.d);

  // exact sketched loss over the full rand-1 support
  {
    double sink = 0.0;
    const double s = time_s([&] {
      for (int rep = 0; rep < 40; ++rep) sink += problem.exact_tilde_value(x, 10000, Exec::serial);
    });
    const double p = time_s([&] {
      for (int rep = 0; rep < 40; ++rep) sink += problem.exact_tilde_value(x, 10000, Exec::parallel);
    });
    report("exact sketched loss (support 160)", s, p);
    if (sink == 12345.6789) std::printf("unreachable %f\n", sink);
  }

  // exact sketched gradient
  {
    const double s = time_s([&] {
      for (int rep = 0; rep < 40; ++rep) (void)problem.exact_tilde_gradient(x, 10000, Exec::serial);
    });
    const double p = time_s([&] {
      for (int rep = 0; rep < 40; ++rep) (void)problem.exact_tilde_gradient(x, 10000, Exec::parallel);
    });
    report("exact sketched gradient", s, p);
  }

  // Monte-Carlo sketched loss
  {
    const double s = time_s([&] {
      RngStream rng(7);
      (void)problem.monte_carlo_tilde_value(x, 60000, rng, Exec::serial);
    });
    const double p = time_s([&] {
      RngStream rng(7);
      (void)problem.monte_carlo_tilde_value(x, 60000, rng, Exec::parallel);
    });
    report("monte-carlo sketched loss (60k)", s, p);
  }

  // multi-seed training runs through the experiment driver
  {
    ExperimentConfig cfg;
    cfg.dataset_fixture = "synthetic";
    cfg.fixture_n = 800;
    cfg.fixture_d = 160;
    cfg.fixture_seed = 5;
    cfg.loss_kind = "logistic";
    cfg.kappa = 100.0;
    cfg.sketch_kind = "randk";
    cfg.sketch_k = 16;
    cfg.solver_kind = "dsgd";
    cfg.iterations = 400;
    cfg.gamma_rule = "thm2";
    cfg.seeds = {1, 2, 3, 4, 5};
    cfg.cadence = 40;
    cfg.log_mast_loss = false;
    cfg.config_hash = fnv1a64(cfg.canonical_json());
    const double s = time_s([&] { (void)cmd_run(cfg, false, Exec::serial); });
    const double p = time_s([&] { (void)cmd_run(cfg, false, Exec::parallel); });
    report("dsgd training, 5 seeds x 400 iters", s, p);
  }

  // robustness sampler
  {
    ExperimentConfig cfg;
    cfg.dataset_fixture = "synthetic";
    cfg.fixture_n = 800;
    cfg.fixture_d = 160;
    cfg.fixture_seed = 5;
    cfg.split_fractions = {0.7, 0.18, 0.12};
    cfg.loss_kind = "logistic";
    cfg.kappa = 100.0;
    cfg.sketch_kind = "randk";
    cfg.sketch_q = 0.5;
    cfg.solver_kind = "dsgd";
    cfg.iterations = 300;
    cfg.gamma_rule = "thm2";
    cfg.seeds = {1};
    cfg.cadence = 50;
    cfg.log_mast_loss = false;
    cfg.log_accuracy = true;
    cfg.config_hash = fnv1a64(cfg.canonical_json());
    const double s = time_s([&] { (void)cmd_robustness(cfg, 2000, "", false, Exec::serial); });
    const double p = time_s([&] { (void)cmd_robustness(cfg, 2000, "", false, Exec::parallel); });
    report("robustness, 2000 sketches", s, p);
  }
  return 0;
}
