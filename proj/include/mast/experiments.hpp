#ifndef MAST_EXPERIMENTS_HPP
#define MAST_EXPERIMENTS_HPP

#include <map>
#include <string>
#include <vector>

#include "mast/config.hpp"
#include "mast/record.hpp"

namespace mast {

// Command backends for the CLI. Every command is deterministic per config:
// identical configs produce byte-identical output files.

struct RunOutputs {
  std::vector<std::string> files;
  std::vector<RunRow> rows;          // all seeds, in seed order
  Vec final_model;                   // final iterate of the first seed
  Vec best_val_model;                // peak-validation checkpoint (first seed)
  double best_val_acc = -1.0;        // -1 when no validation part
  double gamma = 0.0;
  bool any_diverged = false;
};

RunOutputs cmd_run(const ExperimentConfig& cfg, bool write_files = true,
                   Exec exec = Exec::parallel);

inline const std::vector<std::string> kSweepAxes = {"gamma_multiplier", "q", "kappa",
                                                    "p", "b"};

struct SweepCell {
  double axis_value = 0.0;
  std::vector<RunRow> rows;
  bool any_diverged = false;
};

struct SweepOutputs {
  std::vector<std::string> files;
  std::vector<SweepCell> cells;
};

SweepOutputs cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                       const std::vector<double>& values, bool write_files = true,
                       Exec exec = Exec::parallel);

struct RobustnessQuantiles {
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
  double unsketched = 0.0;
};

struct RobustnessOutputs {
  std::vector<std::string> files;
  RobustnessQuantiles mast;
  RobustnessQuantiles erm;
  std::vector<double> mast_accs;
  std::vector<double> erm_accs;
};

RobustnessOutputs cmd_robustness(const ExperimentConfig& cfg, int n_sketches,
                                 const std::string& model_path = "",
                                 bool write_files = true, Exec exec = Exec::parallel);

// Linear-interpolation quantile of a sample (q in [0,1]).
double quantile(std::vector<double> values, double q);

}  // namespace mast

#endif  // MAST_EXPERIMENTS_HPP
