#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mast/experiments.hpp"
#include "mast/verify.hpp"

using namespace mast;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.dataset_fixture = "synthetic";
  cfg.fixture_n = 60;
  cfg.fixture_d = 12;
  cfg.fixture_seed = 3;
  cfg.split_fractions = {0.7, 0.18, 0.12};
  cfg.loss_kind = "logistic";
  cfg.kappa = 20.0;
  cfg.sketch_kind = "randk";
  cfg.sketch_k = 4;
  cfg.solver_kind = "dsgd";
  cfg.iterations = 20;
  cfg.gamma_rule = "thm2";
  cfg.seeds = {1, 2, 3};
  cfg.cadence = 5;
  cfg.log_mast_loss = true;
  cfg.log_accuracy = true;
  cfg.config_hash = fnv1a64(cfg.canonical_json());
  return cfg;
}

}  // namespace

TEST_CASE("config parsing accepts a full document and hashes it") {
  const char* text = R"({
    "dataset": {"fixture": "synthetic", "n": 100, "d": 16, "seed": 5},
    "split": {"fractions": [0.75, 0.25], "seed": 2},
    "loss": {"kind": "logistic", "kappa": 50.0},
    "shift": {"kind": "zero"},
    "sketch": {"kind": "randk", "q": 0.5},
    "solver": {"kind": "dsgd", "iterations": 10,
               "gamma": {"rule": "thm2", "multiplier": 2.0}},
    "seeds": [4, 5],
    "metrics": {"cadence": 2, "mast_loss": false},
    "output": {"dir": "out/test", "svg": false}
  })";
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(text);
  CHECK(cfg.fixture_n == 100);
  CHECK(cfg.sketch_q.value() == 0.5);
  CHECK(cfg.gamma_multiplier == 2.0);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.config_hash != 0);
  CHECK(ExperimentConfig::from_json_text(text).config_hash == cfg.config_hash);
}

TEST_CASE("config parsing rejects unknown keys with their path") {
  const char* text = R"({
    "dataset": {"fixture": "synthetic"},
    "solver": {"gamma": {"rule": "thm2", "bogus": 1}}
  })";
  try {
    ExperimentConfig::from_json_text(text);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("solver.gamma.bogus") != std::string::npos);
  }
}

TEST_CASE("config parsing enforces exclusive and required fields") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"dataset": {}})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"dataset": {"fixture": "synthetic", "path": "x"}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(
          R"({"dataset": {"fixture": "synthetic"}, "loss": {"kappa": 2.0, "lambda": 0.1}})"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(
          R"({"dataset": {"fixture": "synthetic"}, "shift": {"kind": "file"}})"),
      ConfigError);
}

TEST_CASE("resolve_experiment applies kappa targeting and q mapping") {
  ExperimentConfig cfg = small_config();
  cfg.sketch_k.reset();
  cfg.sketch_q = 0.25;
  const ResolvedExperiment r = resolve_experiment(cfg);
  CHECK(r.dist.rand_k_k() == 3);  // round(0.25 * 12)
  const double kappa = r.train_loss->smoothness() / r.train_loss->strong_convexity();
  CHECK(kappa == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(r.gamma ==
        doctest::Approx(1.0 / (r.train_loss->smoothness() * r.constants.l_s_max)));
}

TEST_CASE("cmd_run: zero iterations produce one row per seed") {
  ExperimentConfig cfg = small_config();
  cfg.iterations = 0;
  const RunOutputs out = cmd_run(cfg, false);
  CHECK(out.rows.size() == cfg.seeds.size());
  for (const auto& row : out.rows) CHECK(row.t == 0);
}

TEST_CASE("summary means equal the arithmetic mean of the runs") {
  const RunOutputs out = cmd_run(small_config(), false);
  const auto summary = summarize(out.rows);
  REQUIRE(!summary.empty());
  for (const auto& srow : summary) {
    double mean = 0.0;
    int count = 0;
    for (const auto& row : out.rows) {
      if (row.t == srow.t && !row.diverged) {
        mean += row.erm_loss;
        ++count;
      }
    }
    mean /= count;
    CHECK(srow.n_seeds == count);
    CHECK(std::abs(srow.erm_loss_mean - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("cmd_run writes the declared artifacts with embedded hashes") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mast_test_run";
  fs::remove_all(dir);
  ExperimentConfig cfg = small_config();
  cfg.output_dir = dir.string();
  cfg.write_svg = true;
  cfg.config_hash = fnv1a64(cfg.canonical_json());
  const RunOutputs out = cmd_run(cfg, true);
  CHECK(out.files.size() >= 4);
  std::ifstream runs((dir / "runs.csv").string());
  REQUIRE(runs.good());
  std::string line1, line2;
  std::getline(runs, line1);
  std::getline(runs, line2);
  CHECK(line1.find("library_version") != std::string::npos);
  CHECK(line2.find(std::to_string(cfg.config_hash)) != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("sweep validates its axis and value list") {
  const ExperimentConfig cfg = small_config();
  CHECK_THROWS_AS(cmd_sweep(cfg, "nonsense", {1.0}, false), ConfigError);
  CHECK_THROWS_AS(cmd_sweep(cfg, "q", {}, false), ConfigError);
  const SweepOutputs out = cmd_sweep(cfg, "q", {0.25, 0.75}, false);
  CHECK(out.cells.size() == 2);
  CHECK(out.cells[0].axis_value == 0.25);
  CHECK(!out.cells[0].rows.empty());
}

TEST_CASE("robustness with identity sketches reproduces the unsketched accuracy") {
  ExperimentConfig cfg = small_config();
  cfg.sketch_kind = "identity";
  cfg.sketch_k.reset();
  cfg.config_hash = fnv1a64(cfg.canonical_json());
  const RobustnessOutputs out = cmd_robustness(cfg, 1, "", false);
  CHECK(out.mast.median == out.mast.unsketched);
  CHECK(out.erm.median == out.erm.unsketched);
  CHECK(out.mast.min == out.mast.max);
}

TEST_CASE("robustness requires a test split and an existing model file") {
  ExperimentConfig cfg = small_config();
  cfg.split_fractions.clear();
  CHECK_THROWS_AS(cmd_robustness(cfg, 5, "", false), ConfigError);
  ExperimentConfig ok = small_config();
  CHECK_THROWS_AS(cmd_robustness(ok, 5, "/nonexistent/model.txt", false), IoError);
}

TEST_CASE("model save/load round trip") {
  namespace fs = std::filesystem;
  const auto path = (fs::temp_directory_path() / "mast_test_model.txt").string();
  Vec x(4);
  x << 0.25, -1.5, 3.0000000001, 0.0;
  save_model(path, x);
  const Vec back = load_model(path);
  CHECK((back.array() == x.array()).all());
  fs::remove(path);
}

TEST_CASE("quantile is linear interpolation on the sorted sample") {
  CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
  CHECK(quantile({0.0, 1.0, 2.0, 3.0}, 0.25) == doctest::Approx(0.75));
  CHECK(quantile({5.0}, 0.0) == 5.0);
  CHECK(quantile({5.0}, 1.0) == 5.0);
}

TEST_CASE("output root env var prefixes relative dirs") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "mast_test_root";
  setenv("MAST_OUT_ROOT", root.string().c_str(), 1);
  const std::string resolved = resolve_output_dir("sub/dir");
  unsetenv("MAST_OUT_ROOT");
  CHECK(resolved.find(root.string()) == 0);
  CHECK(fs::exists(resolved));
  fs::remove_all(root);
}

TEST_CASE("verification registry exposes the ten criteria") {
  const auto ids = registered_check_ids();
  CHECK(ids.size() == 10);
  CHECK(ids.front().find("sketch-moments") != std::string::npos);
  CHECK(ids.back().find("determinism") != std::string::npos);
}

TEST_CASE("fault injection makes the lemma suite fail") {
  const auto failing = run_lemma_suite_with_fault();
  CHECK(!failing.empty());
  bool names_l1ii = false;
  for (const auto& id : failing) {
    names_l1ii = names_l1ii || id == "lemma1.ii.tilde_smoothness";
  }
  CHECK(names_l1ii);
}
