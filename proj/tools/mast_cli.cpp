// Experiment runner: trains sketched models, sweeps parameters, measures
// sparsification robustness and runs the verification battery.
//
// Exit codes: 0 ok, 1 check failure, 2 config error, 3 io error.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mast/experiments.hpp"
#include "mast/verify.hpp"

namespace {

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const mast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mast::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sketched-training benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string axis;
  std::vector<double> values;
  int n_sketches = 1000;
  std::string model_path;
  std::string filter;
  bool serial = false;
  bool inject_lf_fault = false;

  auto* run = app.add_subcommand("run", "run the configured experiment");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_flag("--serial", serial, "disable the parallel kernels");

  auto* sweep = app.add_subcommand("sweep", "run the experiment across a parameter axis");
  sweep->add_option("config", config_path, "JSON config file")->required();
  sweep->add_option("--axis", axis, "one of gamma_multiplier|q|kappa|p|b")->required();
  sweep->add_option("--values", values, "axis values")->required()->expected(-1);
  sweep->add_flag("--serial", serial, "disable the parallel kernels");

  auto* robustness =
      app.add_subcommand("robustness", "test accuracy of randomly sparsified models");
  robustness->add_option("config", config_path, "JSON config file")->required();
  robustness->add_option("--n", n_sketches, "number of sampled sketches");
  robustness->add_option("--model", model_path, "model file (defaults to training one)");
  robustness->add_flag("--serial", serial, "disable the parallel kernels");

  auto* verify = app.add_subcommand("verify", "run the verification battery");
  verify->add_option("--filter", filter, "run only checks whose id contains this string");
  verify->add_flag("--serial", serial, "disable the parallel kernels");
  verify->add_flag("--inject-lf-fault", inject_lf_fault,
                   "corrupt the smoothness constant; the lemma suite must fail");

  CLI11_PARSE(app, argc, argv);
  const mast::Exec exec = serial ? mast::Exec::serial : mast::Exec::parallel;

  if (run->parsed()) {
    return guarded([&] {
      const auto cfg = mast::ExperimentConfig::from_file(config_path);
      const auto out = mast::cmd_run(cfg, true, exec);
      for (const auto& f : out.files) std::cout << f << "\n";
      return 0;
    });
  }
  if (sweep->parsed()) {
    return guarded([&] {
      const auto cfg = mast::ExperimentConfig::from_file(config_path);
      const auto out = mast::cmd_sweep(cfg, axis, values, true, exec);
      for (const auto& f : out.files) std::cout << f << "\n";
      for (const auto& cell : out.cells) {
        if (cell.any_diverged) {
          std::cout << "note: divergence detected at " << axis << " = "
                    << mast::format_double(cell.axis_value) << "\n";
        }
      }
      return 0;
    });
  }
  if (robustness->parsed()) {
    return guarded([&] {
      const auto cfg = mast::ExperimentConfig::from_file(config_path);
      const auto out = mast::cmd_robustness(cfg, n_sketches, model_path, true, exec);
      for (const auto& f : out.files) std::cout << f << "\n";
      std::printf("mast median sparsified accuracy: %s\n",
                  mast::format_double(out.mast.median).c_str());
      std::printf("erm  median sparsified accuracy: %s\n",
                  mast::format_double(out.erm.median).c_str());
      return 0;
    });
  }
  // verify
  return guarded([&] {
    if (inject_lf_fault) {
      const auto failing = mast::run_lemma_suite_with_fault();
      for (const auto& id : failing) std::cout << "[FAIL] " << id << "\n";
      if (failing.empty()) {
        std::cout << "fault injection did not trip any inequality\n";
        return 1;
      }
      // The corrupted constant is supposed to fail: nonzero exit, naming the
      // violated inequalities above.
      return 1;
    }
    const auto results = mast::run_verification(filter, exec);
    bool all_pass = true;
    for (const auto& r : results) {
      std::printf("[%s] %-32s (%.2fs) %s\n", r.pass ? "PASS" : "FAIL", r.id.c_str(),
                  r.elapsed_s, r.detail.c_str());
      all_pass = all_pass && r.pass;
    }
    const std::string report_dir = mast::resolve_output_dir("verify");
    const std::string report = report_dir + "/verify_report.csv";
    mast::write_verify_csv(report, results);
    std::cout << report << "\n";
    return all_pass ? 0 : 1;
  });
}
