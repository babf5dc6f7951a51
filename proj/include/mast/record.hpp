#ifndef MAST_RECORD_HPP
#define MAST_RECORD_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mast/objective.hpp"

namespace mast {

// One logged iteration of a run. Optional metrics stay empty when not
// requested; the CSV writer prints empty cells for them.
struct RunRow {
  std::uint64_t seed = 0;
  long t = 0;
  double erm_loss = 0.0;
  double grad_sq_erm = 0.0;
  std::optional<double> mast_loss;
  std::optional<double> mast_loss_stderr;
  std::optional<double> grad_sq_mast;
  std::optional<double> val_acc;
  std::optional<double> test_acc;
  std::optional<long> comm_uplink_nnz;
  std::optional<long> comm_downlink_nnz;
  std::optional<long> comm_cum_nnz;
  bool diverged = false;
};

// Metric evaluation hooks; the run drivers call them at the logging cadence.
// All hooks must be pure given (x, t) so runs are reproducible.
struct MetricsOptions {
  int cadence = 1;
  std::function<double(const Vec&)> erm_loss;
  std::function<double(const Vec&)> grad_sq_erm;
  // Sketched loss estimate; receives t so Monte-Carlo hooks can derive a
  // per-iteration stream.
  std::function<McEstimate(const Vec&, long)> mast_loss;
  std::function<double(const Vec&)> grad_sq_mast;
  std::function<double(const Vec&)> val_accuracy;
  std::function<double(const Vec&)> test_accuracy;
};

struct RunResult {
  std::vector<RunRow> rows;
  Vec final_x;
  bool diverged = false;
  long diverged_at = -1;
};

// Header block embedded as comment lines at the top of every CSV artifact.
struct csv_header_entry {
  std::string key;
  std::string value;
};
using CsvHeader = std::vector<csv_header_entry>;

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Writes rows in a long CSV format, prefixed with '# key=value' header
// lines. `extra_columns` prepends per-row constant columns (e.g. the sweep
// axis value), given as (name, per-row-index -> cell) pairs.
void write_runs_csv(const std::string& path, const CsvHeader& header,
                    const std::vector<RunRow>& rows);

struct SummaryRow {
  long t = 0;
  int n_seeds = 0;
  double erm_loss_mean = 0.0;
  double erm_loss_std = 0.0;
  double grad_sq_erm_mean = 0.0;
  std::optional<double> mast_loss_mean;
  std::optional<double> mast_loss_std;
  std::optional<double> val_acc_mean;
  std::optional<double> test_acc_mean;
};

// Per-t arithmetic mean and population std over seeds. Rows from diverged
// seeds keep their last value; t values missing for some seed are averaged
// over the seeds that have them.
std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows);

void write_summary_csv(const std::string& path, const CsvHeader& header,
                       const std::vector<SummaryRow>& rows);

// Minimal native SVG line plot: per-seed mean with a shaded +-1 std band.
void write_svg_mean_band(const std::string& path, const std::string& title,
                         const std::vector<SummaryRow>& rows, bool log_y);

}  // namespace mast

#endif  // MAST_RECORD_HPP
