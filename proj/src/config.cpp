#include "mast/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mast/oracle.hpp"
#include "mast/record.hpp"

namespace mast {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError(what, path);
}

void expect_keys(const json& obj, const std::string& path,
                 const std::set<std::string>& allowed) {
  if (!obj.is_object()) bad(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) bad(path + "." + key, "unknown key");
  }
}

template <class T>
T get_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad(path + "." + key, "wrong type");
  }
}

template <class T>
T require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) bad(path + "." + key, "missing required key");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    bad(path + "." + key, "wrong type");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  expect_keys(root, "config",
              {"dataset", "intercept", "split", "loss", "shift", "sketch", "solver",
               "seeds", "x0_seed", "metrics", "output"});
  ExperimentConfig cfg;

  {
    const json& ds = root.contains("dataset") ? root.at("dataset") : json::object();
    expect_keys(ds, "dataset", {"path", "fixture", "n", "d", "seed"});
    cfg.dataset_path = get_or<std::string>(ds, "dataset", "path", "");
    cfg.dataset_fixture = get_or<std::string>(ds, "dataset", "fixture", "");
    if (cfg.dataset_path.empty() == cfg.dataset_fixture.empty()) {
      bad("dataset", "exactly one of 'path' or 'fixture' is required");
    }
    cfg.fixture_n = get_or<int>(ds, "dataset", "n", cfg.fixture_n);
    cfg.fixture_d = get_or<int>(ds, "dataset", "d", cfg.fixture_d);
    cfg.fixture_seed = get_or<std::uint64_t>(ds, "dataset", "seed", cfg.fixture_seed);
  }
  cfg.intercept = get_or<bool>(root, "config", "intercept", false);

  if (root.contains("split")) {
    const json& sp = root.at("split");
    expect_keys(sp, "split", {"fractions", "seed"});
    cfg.split_fractions = require<std::vector<double>>(sp, "split", "fractions");
    cfg.split_seed = get_or<std::uint64_t>(sp, "split", "seed", cfg.split_seed);
  }

  {
    const json& lo = root.contains("loss") ? root.at("loss") : json::object();
    expect_keys(lo, "loss", {"kind", "kappa", "lambda"});
    cfg.loss_kind = get_or<std::string>(lo, "loss", "kind", cfg.loss_kind);
    if (lo.contains("kappa")) cfg.kappa = require<double>(lo, "loss", "kappa");
    if (lo.contains("lambda")) cfg.lambda = require<double>(lo, "loss", "lambda");
    if (cfg.kappa.has_value() && cfg.lambda.has_value()) {
      bad("loss", "'kappa' and 'lambda' are mutually exclusive");
    }
  }

  if (root.contains("shift")) {
    const json& sh = root.at("shift");
    expect_keys(sh, "shift", {"kind", "path"});
    cfg.shift_kind = get_or<std::string>(sh, "shift", "kind", cfg.shift_kind);
    cfg.shift_path = get_or<std::string>(sh, "shift", "path", "");
    if (cfg.shift_kind == "file" && cfg.shift_path.empty()) {
      bad("shift.path", "required for shift kind 'file'");
    }
  }

  {
    const json& sk = root.contains("sketch") ? root.at("sketch") : json::object();
    expect_keys(sk, "sketch", {"kind", "k", "q", "p"});
    cfg.sketch_kind = get_or<std::string>(sk, "sketch", "kind", cfg.sketch_kind);
    if (sk.contains("k")) cfg.sketch_k = require<int>(sk, "sketch", "k");
    if (sk.contains("q")) cfg.sketch_q = require<double>(sk, "sketch", "q");
    if (cfg.sketch_k.has_value() && cfg.sketch_q.has_value()) {
      bad("sketch", "'k' and 'q' are mutually exclusive");
    }
    cfg.sketch_p = get_or<double>(sk, "sketch", "p", cfg.sketch_p);
  }

  {
    const json& so = root.contains("solver") ? root.at("solver") : json::object();
    expect_keys(so, "solver",
                {"kind", "iterations", "gamma", "estimator", "prob", "batch",
                 "small_batch"});
    cfg.solver_kind = get_or<std::string>(so, "solver", "kind", cfg.solver_kind);
    cfg.iterations = get_or<long>(so, "solver", "iterations", cfg.iterations);
    if (so.contains("gamma")) {
      const json& ga = so.at("gamma");
      expect_keys(ga, "solver.gamma", {"rule", "value", "multiplier"});
      cfg.gamma_rule = get_or<std::string>(ga, "solver.gamma", "rule", cfg.gamma_rule);
      cfg.gamma_value = get_or<double>(ga, "solver.gamma", "value", cfg.gamma_value);
      cfg.gamma_multiplier =
          get_or<double>(ga, "solver.gamma", "multiplier", cfg.gamma_multiplier);
    }
    if (so.contains("estimator")) {
      const json& es = so.at("estimator");
      expect_keys(es, "solver.estimator", {"kind", "sigma2", "batch"});
      cfg.estimator_kind = get_or<std::string>(es, "solver.estimator", "kind", "exact");
      cfg.estimator_sigma2 = get_or<double>(es, "solver.estimator", "sigma2", 0.0);
      cfg.estimator_batch = get_or<int>(es, "solver.estimator", "batch", 1);
    }
    cfg.solver_prob = get_or<double>(so, "solver", "prob", cfg.solver_prob);
    cfg.solver_batch = get_or<int>(so, "solver", "batch", cfg.solver_batch);
    cfg.solver_small_batch = get_or<int>(so, "solver", "small_batch", cfg.solver_small_batch);
  }

  if (root.contains("seeds")) {
    cfg.seeds = require<std::vector<std::uint64_t>>(root, "config", "seeds");
    if (cfg.seeds.empty()) bad("seeds", "must not be empty");
  }
  cfg.x0_seed = get_or<std::uint64_t>(root, "config", "x0_seed", cfg.x0_seed);

  {
    const json& me = root.contains("metrics") ? root.at("metrics") : json::object();
    expect_keys(me, "metrics",
                {"cadence", "mast_loss", "support_limit", "mc_samples", "accuracy",
                 "checkpoint_cadence"});
    cfg.cadence = get_or<int>(me, "metrics", "cadence", cfg.cadence);
    cfg.log_mast_loss = get_or<bool>(me, "metrics", "mast_loss", cfg.log_mast_loss);
    cfg.support_limit = get_or<std::uint64_t>(me, "metrics", "support_limit", cfg.support_limit);
    cfg.mc_samples = get_or<int>(me, "metrics", "mc_samples", cfg.mc_samples);
    cfg.log_accuracy = get_or<bool>(me, "metrics", "accuracy", cfg.log_accuracy);
    cfg.checkpoint_cadence =
        get_or<int>(me, "metrics", "checkpoint_cadence", cfg.checkpoint_cadence);
  }

  {
    const json& ou = root.contains("output") ? root.at("output") : json::object();
    expect_keys(ou, "output", {"dir", "svg"});
    cfg.output_dir = get_or<std::string>(ou, "output", "dir", cfg.output_dir);
    cfg.write_svg = get_or<bool>(ou, "output", "svg", cfg.write_svg);
  }

  cfg.config_hash = fnv1a64(cfg.canonical_json());
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["dataset"] = {{"path", dataset_path}, {"fixture", dataset_fixture},
                  {"n", fixture_n},       {"d", fixture_d},
                  {"seed", fixture_seed}};
  j["intercept"] = intercept;
  j["split"] = {{"fractions", split_fractions}, {"seed", split_seed}};
  j["loss"] = {{"kind", loss_kind},
               {"kappa", kappa.has_value() ? json(*kappa) : json()},
               {"lambda", lambda.has_value() ? json(*lambda) : json()}};
  j["shift"] = {{"kind", shift_kind}, {"path", shift_path}};
  j["sketch"] = {{"kind", sketch_kind},
                 {"k", sketch_k.has_value() ? json(*sketch_k) : json()},
                 {"q", sketch_q.has_value() ? json(*sketch_q) : json()},
                 {"p", sketch_p}};
  j["solver"] = {{"kind", solver_kind},
                 {"iterations", iterations},
                 {"gamma_rule", gamma_rule},
                 {"gamma_value", gamma_value},
                 {"gamma_multiplier", gamma_multiplier},
                 {"estimator_kind", estimator_kind},
                 {"estimator_sigma2", estimator_sigma2},
                 {"estimator_batch", estimator_batch},
                 {"prob", solver_prob},
                 {"batch", solver_batch},
                 {"small_batch", solver_small_batch}};
  j["seeds"] = seeds;
  j["x0_seed"] = x0_seed;
  j["metrics"] = {{"cadence", cadence},
                  {"mast_loss", log_mast_loss},
                  {"support_limit", support_limit},
                  {"mc_samples", mc_samples},
                  {"accuracy", log_accuracy},
                  {"checkpoint_cadence", checkpoint_cadence}};
  j["output"] = {{"dir", output_dir}, {"svg", write_svg}};
  return j.dump();
}

ResolvedExperiment resolve_experiment(const ExperimentConfig& cfg) {
  ResolvedExperiment r;
  if (!cfg.dataset_path.empty()) {
    r.dataset = load_libsvm_file(cfg.dataset_path);
  } else if (cfg.dataset_fixture == "synthetic") {
    r.dataset = make_synthetic_dataset(cfg.fixture_n, cfg.fixture_d, cfg.fixture_seed);
  } else if (cfg.dataset_fixture == "synthetic-grouped") {
    r.dataset = make_grouped_synthetic_dataset(cfg.fixture_n, cfg.fixture_d, cfg.fixture_seed);
  } else {
    throw ConfigError("unknown fixture '" + cfg.dataset_fixture + "'", "dataset.fixture");
  }
  if (cfg.intercept) r.dataset = append_intercept(r.dataset);

  if (cfg.split_fractions.empty()) {
    std::vector<int> all(static_cast<std::size_t>(r.dataset.n()));
    for (int i = 0; i < r.dataset.n(); ++i) all[static_cast<std::size_t>(i)] = i;
    r.split.parts = {all};
    r.train_idx = std::move(all);
  } else {
    r.split = split_dataset(r.dataset, cfg.split_fractions, cfg.split_seed);
    r.train_idx = r.split.parts.at(0);
    if (r.split.parts.size() >= 3) {
      r.val_idx = r.split.parts.at(1);
      r.test_idx = r.split.parts.at(2);
    } else if (r.split.parts.size() == 2) {
      r.test_idx = r.split.parts.at(1);
    }
  }

  const Dataset train = subset_dataset(r.dataset, r.train_idx);
  r.train_hash = train.content_hash;
  const int d = r.dataset.d;
  if (cfg.loss_kind == "logistic" || cfg.loss_kind == "logistic-nonconvex") {
    double lambda = cfg.lambda.value_or(0.0);
    if (cfg.kappa.has_value()) {
      const double l0 = power_iteration_ata(train.rows, d) /
                        (4.0 * static_cast<double>(train.n()));
      lambda = lambda_for_kappa(l0, *cfg.kappa);
    }
    if (cfg.loss_kind == "logistic") {
      r.train_loss = std::make_shared<LogisticLoss>(train.rows, train.labels, d, lambda);
    } else {
      r.train_loss =
          std::make_shared<NonconvexLogisticLoss>(train.rows, train.labels, d, lambda);
    }
  } else if (cfg.loss_kind == "quadratic") {
    r.train_loss = std::make_shared<QuadraticLoss>(Vec(Vec::Ones(d)), Vec(Vec::Zero(d)), 0.0);
  } else {
    throw ConfigError("unknown loss kind '" + cfg.loss_kind + "'", "loss.kind");
  }

  if (cfg.sketch_kind == "randk") {
    int k = cfg.sketch_k.value_or(0);
    if (cfg.sketch_q.has_value()) {
      k = std::max(1, static_cast<int>(std::llround(*cfg.sketch_q * d)));
    }
    if (k < 1) throw ConfigError("rand-k sketch needs 'k' or 'q'", "sketch");
    r.dist = SketchDistribution::rand_k(d, std::min(k, d));
  } else if (cfg.sketch_kind == "bernoulli") {
    r.dist = SketchDistribution::bernoulli_independent(Vec::Constant(d, cfg.sketch_p));
  } else if (cfg.sketch_kind == "identity") {
    r.dist = SketchDistribution::identity(d);
  } else {
    throw ConfigError("unknown sketch kind '" + cfg.sketch_kind + "'", "sketch.kind");
  }
  r.constants = r.dist.spectral_constants();

  if (cfg.shift_kind == "zero") {
    r.shift = Vec::Zero(d);
  } else if (cfg.shift_kind == "file") {
    r.shift = load_model(cfg.shift_path);
    if (static_cast<int>(r.shift.size()) != d) {
      throw ConfigError("shift model has wrong dimension", "shift.path");
    }
  } else if (cfg.shift_kind == "reference") {
    r.shift =
        solve_reference(*r.train_loss, Vec::Zero(d), 1e-20).x;
  } else {
    throw ConfigError("unknown shift kind '" + cfg.shift_kind + "'", "shift.kind");
  }

  const StepSizeRule rule = [&] {
    if (cfg.gamma_rule == "thm2") return StepSizeRule::thm2();
    if (cfg.gamma_rule == "thm3") return StepSizeRule::thm3(std::max<long>(1, cfg.iterations));
    if (cfg.gamma_rule == "thm5") return StepSizeRule::thm5();
    if (cfg.gamma_rule == "lsvrdsg-convex") return StepSizeRule::lsvrdsg_cvx();
    if (cfg.gamma_rule == "spage") {
      return StepSizeRule::spage_rule(cfg.solver_prob, cfg.solver_small_batch);
    }
    if (cfg.gamma_rule == "manual") return StepSizeRule::manual_gamma(cfg.gamma_value);
    throw ConfigError("unknown gamma rule '" + cfg.gamma_rule + "'", "solver.gamma.rule");
  }();
  r.gamma = cfg.gamma_multiplier * step_size(rule, r.constants, *r.train_loss);
  return r;
}

std::string resolve_output_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("MAST_OUT_ROOT")) p = fs::path(root) / p;
  }
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory " + p.string());
  return p.string();
}

void save_model(const std::string& path, const Vec& x) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open model file for writing: " + path);
  for (int i = 0; i < x.size(); ++i) out << format_double(x[i]) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

Vec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  std::vector<double> values;
  double v;
  while (in >> v) values.push_back(v);
  Vec x(static_cast<int>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) x[static_cast<int>(i)] = values[i];
  return x;
}

}  // namespace mast
