#ifndef MAST_CONFIG_HPP
#define MAST_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mast/data.hpp"
#include "mast/solvers.hpp"

namespace mast {

inline constexpr const char* kLibraryVersion = "0.1.0";

// Experiment description parsed from a JSON config file. The schema is
// strict: unknown keys are rejected with their full field path.
struct ExperimentConfig {
  // dataset
  std::string dataset_path;       // exclusive with fixture
  std::string dataset_fixture;    // "synthetic"
  int fixture_n = 500;
  int fixture_d = 100;
  std::uint64_t fixture_seed = 13;
  bool intercept = false;

  // split (empty fractions = use the whole dataset for training)
  std::vector<double> split_fractions;
  std::uint64_t split_seed = 1;

  // loss
  std::string loss_kind = "logistic";  // logistic | logistic-nonconvex | quadratic
  std::optional<double> kappa;         // targets lambda = L_0 / (kappa - 1)
  std::optional<double> lambda;

  // shift
  std::string shift_kind = "zero";  // zero | file | reference
  std::string shift_path;

  // sketch
  std::string sketch_kind = "randk";  // randk | bernoulli | identity
  std::optional<int> sketch_k;
  std::optional<double> sketch_q;  // K = max(1, round(q d)); exclusive with k
  double sketch_p = 0.5;

  // solver
  std::string solver_kind = "dsgd";  // dsgd | lsvrdsg | spage
  long iterations = 1000;
  std::string gamma_rule = "thm2";  // thm2 | thm3 | thm5 | lsvrdsg-convex | spage | manual
  double gamma_value = 0.0;         // manual rule
  double gamma_multiplier = 1.0;
  std::string estimator_kind = "exact";  // exact | bounded-variance | subsample
  double estimator_sigma2 = 0.0;
  int estimator_batch = 1;
  double solver_prob = 0.5;
  int solver_batch = 1;
  int solver_small_batch = 1;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::uint64_t x0_seed = 101;  // standard Gaussian initialization stream

  // metrics
  int cadence = 10;
  bool log_mast_loss = true;
  std::uint64_t support_limit = kDefaultSupportLimit;
  int mc_samples = 1000;
  bool log_accuracy = false;
  int checkpoint_cadence = 50;

  // output
  std::string output_dir = "out";
  bool write_svg = false;

  std::uint64_t config_hash = 0;  // FNV-1a of the canonical JSON dump

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  std::string canonical_json() const;
};

// Materialized experiment pieces shared by the CLI commands.
struct ResolvedExperiment {
  Dataset dataset;
  Split split;  // parts always populated (single part when no split requested)
  LossPtr train_loss;
  std::uint64_t train_hash = 0;  // content hash of the training subset
  SketchDistribution dist;
  Vec shift;
  double gamma = 0.0;
  SpectralConstants constants;
  std::vector<int> train_idx, val_idx, test_idx;  // val/test may be empty
};

// Squared-gradient target for high-accuracy reference solutions in the
// experiment protocol.
inline constexpr double kReferenceTolGradSq = 1e-30;

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg);

// Output directory resolution: relative dirs are placed under the
// MAST_OUT_ROOT environment variable when it is set.
std::string resolve_output_dir(const std::string& dir);

void save_model(const std::string& path, const Vec& x);
Vec load_model(const std::string& path);

}  // namespace mast

#endif  // MAST_CONFIG_HPP
