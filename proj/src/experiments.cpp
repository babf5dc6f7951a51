#include "mast/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mast/oracle.hpp"

namespace mast {

namespace {

constexpr std::uint64_t kX0Tag = 0x0b57;
constexpr std::uint64_t kMcTag = 0x30c7;
constexpr std::uint64_t kRobustnessTag = 0x40b5;

Vec initial_point(const ExperimentConfig& cfg, int d) {
  if (cfg.x0_seed == 0) return Vec::Zero(d);
  RngStream rng = RngStream::derive(cfg.x0_seed, kX0Tag);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = rng.normal();
  return x;
}

CsvHeader base_header(const ExperimentConfig& cfg, const ResolvedExperiment& r) {
  return CsvHeader{
      {"library_version", kLibraryVersion},
      {"config_hash", std::to_string(cfg.config_hash)},
      {"dataset_hash", std::to_string(r.dataset.content_hash)},
      {"n", std::to_string(r.dataset.n())},
      {"d", std::to_string(r.dataset.d)},
      {"gamma", format_double(r.gamma)},
      {"l_d", format_double(r.constants.l_d)},
      {"mu_d", format_double(r.constants.mu_d)},
      {"l_s_max", format_double(r.constants.l_s_max)},
  };
}

struct SeedRun {
  RunResult result;
  Vec best_val_model;
  double best_val_acc = -1.0;
};

SeedRun run_one_seed(const ExperimentConfig& cfg, const ResolvedExperiment& r,
                     std::uint64_t seed) {
  const MastProblem problem(r.train_loss, r.dist, r.shift);

  SolverConfig sc;
  sc.gamma = r.gamma;
  sc.iterations = cfg.iterations;
  sc.seed = seed;
  sc.x0 = initial_point(cfg, r.dataset.d);
  sc.support_limit = cfg.support_limit;
  if (cfg.solver_kind == "dsgd") {
    sc.kind = SolverKind::dsgd;
    if (cfg.estimator_kind == "exact") {
      sc.estimator = AbcEstimator::exact();
    } else if (cfg.estimator_kind == "bounded-variance") {
      sc.estimator = AbcEstimator::bounded_variance(cfg.estimator_sigma2);
    } else if (cfg.estimator_kind == "subsample") {
      sc.estimator = AbcEstimator::uniform_subsample(cfg.estimator_batch);
    } else {
      throw ConfigError("unknown estimator kind '" + cfg.estimator_kind + "'",
                        "solver.estimator.kind");
    }
  } else if (cfg.solver_kind == "lsvrdsg") {
    sc.kind = SolverKind::lsvrdsg;
    sc.prob = cfg.solver_prob;
    sc.batch = cfg.solver_batch;
  } else if (cfg.solver_kind == "spage") {
    sc.kind = SolverKind::spage;
    sc.prob = cfg.solver_prob;
    sc.batch = cfg.solver_batch;
    sc.small_batch = cfg.solver_small_batch;
  } else {
    throw ConfigError("unknown solver kind '" + cfg.solver_kind + "'", "solver.kind");
  }

  MetricsOptions metrics;
  metrics.cadence = cfg.cadence;
  if (cfg.log_mast_loss) {
    const auto support_size = r.dist.support_size();
    const bool exact = support_size.has_value() && *support_size <= cfg.support_limit;
    metrics.mast_loss = [&problem, &cfg, exact, seed](const Vec& x, long t) -> McEstimate {
      if (exact) {
        return {problem.exact_tilde_value(x, cfg.support_limit, Exec::serial), 0.0};
      }
      RngStream rng = RngStream::derive(seed, kMcTag, static_cast<std::uint64_t>(t));
      return problem.monte_carlo_tilde_value(x, cfg.mc_samples, rng, Exec::serial);
    };
  }
  if (cfg.log_accuracy && !r.val_idx.empty()) {
    metrics.val_accuracy = [&](const Vec& x) { return accuracy(r.dataset, r.val_idx, x); };
  }
  if (cfg.log_accuracy && !r.test_idx.empty()) {
    metrics.test_accuracy = [&](const Vec& x) { return accuracy(r.dataset, r.test_idx, x); };
  }

  SeedRun out;
  StateObserver observer;
  if (!r.val_idx.empty()) {
    observer = [&out, &r, &cfg](const SolverState& st, long t) {
      if (t % std::max(1, cfg.checkpoint_cadence) != 0) return;
      const double acc = accuracy(r.dataset, r.val_idx, st.x);
      if (acc > out.best_val_acc) {
        out.best_val_acc = acc;
        out.best_val_model = st.x;
      }
    };
  }
  out.result = run_solver(problem, sc, metrics, observer);
  return out;
}

}  // namespace

RunOutputs cmd_run(const ExperimentConfig& cfg, bool write_files, Exec exec) {
  const ResolvedExperiment r = resolve_experiment(cfg);
  std::vector<SeedRun> seed_runs(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), exec,
               [&](std::size_t i) { seed_runs[i] = run_one_seed(cfg, r, cfg.seeds[i]); });

  RunOutputs out;
  out.gamma = r.gamma;
  for (const auto& sr : seed_runs) {
    out.rows.insert(out.rows.end(), sr.result.rows.begin(), sr.result.rows.end());
    out.any_diverged = out.any_diverged || sr.result.diverged;
  }
  out.final_model = seed_runs.front().result.final_x;
  out.best_val_model = seed_runs.front().best_val_model;
  out.best_val_acc = seed_runs.front().best_val_acc;

  if (write_files) {
    namespace fs = std::filesystem;
    const std::string dir = resolve_output_dir(cfg.output_dir);
    const CsvHeader header = base_header(cfg, r);
    const std::string runs_path = (fs::path(dir) / "runs.csv").string();
    const std::string summary_path = (fs::path(dir) / "summary.csv").string();
    write_runs_csv(runs_path, header, out.rows);
    write_summary_csv(summary_path, header, summarize(out.rows));
    out.files = {runs_path, summary_path};
    const std::string model_path = (fs::path(dir) / "model_final.txt").string();
    save_model(model_path, out.final_model);
    out.files.push_back(model_path);
    if (out.best_val_acc >= 0.0) {
      const std::string best_path = (fs::path(dir) / "model_best_val.txt").string();
      save_model(best_path, out.best_val_model);
      out.files.push_back(best_path);
    }
    if (cfg.write_svg) {
      const std::string svg_path = (fs::path(dir) / "plot.svg").string();
      write_svg_mean_band(svg_path, "mean loss with +-1 std band", summarize(out.rows),
                          true);
      out.files.push_back(svg_path);
    }
  }
  return out;
}

SweepOutputs cmd_sweep(const ExperimentConfig& cfg, const std::string& axis,
                       const std::vector<double>& values, bool write_files, Exec exec) {
  if (std::find(kSweepAxes.begin(), kSweepAxes.end(), axis) == kSweepAxes.end()) {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  if (values.empty()) throw ConfigError("sweep needs a non-empty value list");

  SweepOutputs out;
  for (double v : values) {
    ExperimentConfig cell_cfg = cfg;
    if (axis == "gamma_multiplier") {
      cell_cfg.gamma_multiplier = v;
    } else if (axis == "q") {
      cell_cfg.sketch_q = v;
      cell_cfg.sketch_k.reset();
    } else if (axis == "kappa") {
      cell_cfg.kappa = v;
      cell_cfg.lambda.reset();
    } else if (axis == "p") {
      cell_cfg.solver_prob = v;
    } else if (axis == "b") {
      cell_cfg.solver_batch = static_cast<int>(std::llround(v));
    }
    cell_cfg.config_hash = fnv1a64(cell_cfg.canonical_json());
    const RunOutputs cell = cmd_run(cell_cfg, false, exec);
    out.cells.push_back(SweepCell{v, cell.rows, cell.any_diverged});
  }

  if (write_files) {
    namespace fs = std::filesystem;
    const std::string dir = resolve_output_dir(cfg.output_dir);
    const ResolvedExperiment r = resolve_experiment(cfg);
    CsvHeader header = base_header(cfg, r);
    header.push_back({"sweep_axis", axis});
    const std::string path = (fs::path(dir) / "sweep_runs.csv").string();
    // Long format: the axis value is an extra leading column.
    {
      std::ofstream outf(path, std::ios::binary);
      if (!outf) throw IoError("cannot open output file: " + path);
      for (const auto& [key, value] : header) outf << "# " << key << "=" << value << "\n";
      outf << "axis_value,seed,t,erm_loss,grad_sq_erm,mast_loss,mast_loss_stderr,"
              "diverged\n";
      for (const auto& cell : out.cells) {
        for (const auto& row : cell.rows) {
          outf << format_double(cell.axis_value) << ',' << row.seed << ',' << row.t << ','
               << format_double(row.erm_loss) << ',' << format_double(row.grad_sq_erm)
               << ','
               << (row.mast_loss.has_value() ? format_double(*row.mast_loss) : std::string())
               << ','
               << (row.mast_loss_stderr.has_value() ? format_double(*row.mast_loss_stderr)
                                                    : std::string())
               << ',' << (row.diverged ? 1 : 0) << '\n';
        }
      }
      if (!outf) throw IoError("failed writing " + path);
    }
    out.files.push_back(path);
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

RobustnessQuantiles quantiles_of(const std::vector<double>& accs, double unsketched) {
  RobustnessQuantiles q;
  q.min = quantile(accs, 0.0);
  q.q25 = quantile(accs, 0.25);
  q.median = quantile(accs, 0.5);
  q.q75 = quantile(accs, 0.75);
  q.max = quantile(accs, 1.0);
  q.unsketched = unsketched;
  return q;
}

}  // namespace

RobustnessOutputs cmd_robustness(const ExperimentConfig& cfg, int n_sketches,
                                 const std::string& model_path, bool write_files,
                                 Exec exec) {
  if (n_sketches < 1) throw ConfigError("robustness needs n_sketches >= 1");
  const ResolvedExperiment r = resolve_experiment(cfg);
  if (r.test_idx.empty()) {
    throw ConfigError("robustness study needs a split with a test part", "split");
  }

  // The sketched-training model: either loaded from a file or trained here
  // (peak-validation checkpoint when a validation part exists).
  Vec mast_model;
  if (!model_path.empty()) {
    mast_model = load_model(model_path);
    if (static_cast<int>(mast_model.size()) != r.dataset.d) {
      throw ConfigError("model file has wrong dimension: " + model_path);
    }
  } else {
    ExperimentConfig train_cfg = cfg;
    train_cfg.log_accuracy = true;
    const RunOutputs run = cmd_run(train_cfg, false, exec);
    mast_model = run.best_val_acc >= 0.0 ? run.best_val_model : run.final_model;
  }

  // ERM comparison model: high-accuracy reference solution on the train loss.
  const Vec erm_model =
      solve_reference(*r.train_loss, Vec::Zero(r.dataset.d), 1e-20).x;

  std::vector<double> mast_accs(static_cast<std::size_t>(n_sketches));
  std::vector<double> erm_accs(static_cast<std::size_t>(n_sketches));
  const std::uint64_t master = cfg.seeds.front();
  parallel_for(static_cast<std::size_t>(n_sketches), exec, [&](std::size_t i) {
    RngStream rng = RngStream::derive(master, kRobustnessTag, i);
    const SketchSample sk = r.dist.sample(rng);
    const Vec mast_sketched = r.shift + sk.apply(mast_model - r.shift);
    const Vec erm_sketched = r.shift + sk.apply(erm_model - r.shift);
    mast_accs[i] = accuracy(r.dataset, r.test_idx, mast_sketched);
    erm_accs[i] = accuracy(r.dataset, r.test_idx, erm_sketched);
  });

  RobustnessOutputs out;
  out.mast = quantiles_of(mast_accs, accuracy(r.dataset, r.test_idx, mast_model));
  out.erm = quantiles_of(erm_accs, accuracy(r.dataset, r.test_idx, erm_model));
  out.mast_accs = std::move(mast_accs);
  out.erm_accs = std::move(erm_accs);

  if (write_files) {
    namespace fs = std::filesystem;
    const std::string dir = resolve_output_dir(cfg.output_dir);
    CsvHeader header = base_header(cfg, r);
    header.push_back({"n_sketches", std::to_string(n_sketches)});
    const std::string samples_path = (fs::path(dir) / "robustness.csv").string();
    {
      std::ofstream outf(samples_path, std::ios::binary);
      if (!outf) throw IoError("cannot open output file: " + samples_path);
      for (const auto& [key, value] : header) outf << "# " << key << "=" << value << "\n";
      outf << "model,sketch,test_acc\n";
      for (std::size_t i = 0; i < out.mast_accs.size(); ++i) {
        outf << "mast," << i << ',' << format_double(out.mast_accs[i]) << '\n';
      }
      for (std::size_t i = 0; i < out.erm_accs.size(); ++i) {
        outf << "erm," << i << ',' << format_double(out.erm_accs[i]) << '\n';
      }
      if (!outf) throw IoError("failed writing " + samples_path);
    }
    const std::string quant_path = (fs::path(dir) / "robustness_quantiles.csv").string();
    {
      std::ofstream outf(quant_path, std::ios::binary);
      if (!outf) throw IoError("cannot open output file: " + quant_path);
      for (const auto& [key, value] : header) outf << "# " << key << "=" << value << "\n";
      outf << "model,min,q25,median,q75,max,unsketched\n";
      for (const auto& [name, q] :
           {std::pair<const char*, const RobustnessQuantiles&>{"mast", out.mast},
            {"erm", out.erm}}) {
        outf << name << ',' << format_double(q.min) << ',' << format_double(q.q25) << ','
             << format_double(q.median) << ',' << format_double(q.q75) << ','
             << format_double(q.max) << ',' << format_double(q.unsketched) << '\n';
      }
      if (!outf) throw IoError("failed writing " + quant_path);
    }
    out.files = {samples_path, quant_path};
  }
  return out;
}

}  // namespace mast
