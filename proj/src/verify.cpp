#include "mast/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "mast/distributed.hpp"
#include "mast/experiments.hpp"
#include "mast/oracle.hpp"

namespace mast {

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string fmt(double v) { return format_double(v); }

Vec gaussian_vec(int d, std::uint64_t seed, double scale = 1.0) {
  RngStream rng = RngStream::derive(seed, 0x9a55);
  Vec x(d);
  for (int i = 0; i < d; ++i) x[i] = scale * rng.normal();
  return x;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

// Mean over seeds of a per-iteration metric; t values must match across
// seeds (they do: same cadence and horizon).
struct Series {
  std::vector<long> ts;
  std::vector<double> mean;
};

template <class Getter>
Series mean_series(const std::vector<RunRow>& rows, int n_seeds, Getter&& get) {
  std::map<long, std::pair<double, int>> acc;
  for (const auto& r : rows) {
    if (r.diverged) continue;
    const auto v = get(r);
    if (!v.has_value()) continue;
    auto& slot = acc[r.t];
    slot.first += *v;
    slot.second += 1;
  }
  Series s;
  for (const auto& [t, slot] : acc) {
    if (slot.second != n_seeds) continue;  // drop t values not present for all seeds
    s.ts.push_back(t);
    s.mean.push_back(slot.first / static_cast<double>(n_seeds));
  }
  return s;
}

template <class Getter>
Series mean_over_seeds(const std::vector<std::vector<RunRow>>& per_seed, Getter&& get) {
  std::vector<RunRow> all;
  for (const auto& rows : per_seed) all.insert(all.end(), rows.begin(), rows.end());
  return mean_series(all, static_cast<int>(per_seed.size()), get);
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read back " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------
// 1. Sketch unbiasedness and second moments.
// ---------------------------------------------------------------------------

bool moment_check_statistical(const SketchDistribution& dist, const Vec& var_c,
                              const Vec& var_c2, std::uint64_t seed, Exec exec,
                              double& worst_sigmas, bool& members_ok) {
  const int d = dist.dim();
  const int n_samples = 100000;
  const int n_chunks = 16;
  const int chunk = n_samples / n_chunks;
  std::vector<Vec> sum_c(n_chunks, Vec::Zero(d));
  std::vector<Vec> sum_c2(n_chunks, Vec::Zero(d));
  std::vector<char> chunk_members_ok(n_chunks, 1);
  parallel_for(static_cast<std::size_t>(n_chunks), exec, [&](std::size_t ci) {
    RngStream rng = RngStream::derive(seed, 0x5a3e, ci);
    for (int i = 0; i < chunk; ++i) {
      const SketchSample s = dist.sample(rng);
      if (dist.kind() == SketchDistribution::Kind::rand_k) {
        const double scale = static_cast<double>(d) / dist.rand_k_k();
        if (s.nnz() != dist.rand_k_k()) chunk_members_ok[ci] = 0;
        for (const auto& [j, c] : s.entries) {
          if (c != scale) chunk_members_ok[ci] = 0;
        }
      } else if (dist.kind() == SketchDistribution::Kind::bernoulli) {
        for (const auto& [j, c] : s.entries) {
          if (c != 1.0 / dist.bernoulli_probs()[j]) chunk_members_ok[ci] = 0;
        }
      }
      for (const auto& [j, c] : s.entries) {
        sum_c[ci][j] += c;
        sum_c2[ci][j] += c * c;
      }
    }
  });
  Vec mean_c = Vec::Zero(d), mean_c2 = Vec::Zero(d);
  members_ok = true;
  for (int ci = 0; ci < n_chunks; ++ci) {
    mean_c += sum_c[static_cast<std::size_t>(ci)];
    mean_c2 += sum_c2[static_cast<std::size_t>(ci)];
    members_ok = members_ok && chunk_members_ok[static_cast<std::size_t>(ci)];
  }
  mean_c /= static_cast<double>(n_samples);
  mean_c2 /= static_cast<double>(n_samples);
  const Vec m2 = dist.second_moment_diagonal();
  bool ok = true;
  for (int j = 0; j < d; ++j) {
    const double tol_c = 4.0 * std::sqrt(var_c[j] / n_samples);
    const double tol_c2 = 4.0 * std::sqrt(var_c2[j] / n_samples);
    const double dev_c = std::abs(mean_c[j] - 1.0);
    const double dev_c2 = std::abs(mean_c2[j] - m2[j]);
    worst_sigmas = std::max({worst_sigmas, 4.0 * dev_c / tol_c, 4.0 * dev_c2 / tol_c2});
    ok = ok && dev_c <= tol_c && dev_c2 <= tol_c2;
  }
  return ok;
}

bool moment_check_exact(const SketchDistribution& dist, double& worst) {
  const auto support = dist.enumerate_support();
  const int d = dist.dim();
  Vec first = Vec::Zero(d), second = Vec::Zero(d);
  double prob_sum = 0.0;
  for (const auto& [s, prob] : support) {
    prob_sum += prob;
    for (const auto& [j, c] : s.entries) {
      first[j] += prob * c;
      second[j] += prob * c * c;
    }
  }
  const Vec m2 = dist.second_moment_diagonal();
  double dev = std::abs(prob_sum - 1.0);
  for (int j = 0; j < d; ++j) {
    dev = std::max({dev, std::abs(first[j] - 1.0), std::abs(second[j] - m2[j])});
  }
  worst = std::max(worst, dev);
  return dev <= 1e-12;
}

CheckResult check_sketch_moments(Exec exec) {
  CheckResult res{"1.sketch-moments"};
  double worst_sigmas = 0.0, worst_exact = 0.0;
  bool ok = true, members_ok = true;

  const auto bern = SketchDistribution::bernoulli_independent(Vec::Constant(10, 0.5));
  // Var c = (1-p)/p, Var c^2 = (1-p)/p^3.
  ok = moment_check_statistical(bern, Vec::Constant(10, 1.0), Vec::Constant(10, 4.0), 11,
                                exec, worst_sigmas, members_ok) &&
       ok;
  const auto rk = SketchDistribution::rand_k(10, 3);
  // Var c = (d-K)/K; Var c^2 = (d/K)^3 - (d/K)^2.
  const double r = 10.0 / 3.0;
  bool rk_members = true;
  ok = moment_check_statistical(rk, Vec::Constant(10, r - 1.0),
                                Vec::Constant(10, r * r * (r - 1.0)), 12, exec,
                                worst_sigmas, rk_members) &&
       ok;
  members_ok = members_ok && rk_members;

  Vec probs(6);
  probs << 0.3, 0.45, 0.6, 0.75, 0.9, 1.0;
  ok = moment_check_exact(SketchDistribution::rand_k(8, 3), worst_exact) && ok;
  ok = moment_check_exact(SketchDistribution::bernoulli_independent(probs), worst_exact) && ok;

  // Finite set built from an enumerated support must reproduce the closed
  // form constants exactly.
  std::vector<SketchSample> members;
  for (auto& [s, prob] : SketchDistribution::rand_k(8, 3).enumerate_support()) {
    members.push_back(s);
  }
  const auto fs = SketchDistribution::finite_set(members);
  const SpectralConstants got = fs.spectral_constants();
  const SpectralConstants want = SketchDistribution::rand_k(8, 3).spectral_constants();
  const double const_dev = std::max({std::abs(got.l_d - want.l_d),
                                     std::abs(got.mu_d - want.mu_d),
                                     std::abs(got.l_s_max - want.l_s_max)});
  worst_exact = std::max(worst_exact, const_dev);
  ok = ok && const_dev <= 1e-12 && moment_check_exact(fs, worst_exact);

  res.pass = ok && members_ok;
  res.detail = "worst statistical deviation " + fmt(worst_sigmas) +
               " sigmas (limit 4); worst exact deviation " + fmt(worst_exact) +
               " (limit 1e-12); member structure " + (members_ok ? "exact" : "BROKEN");
  return res;
}

// ---------------------------------------------------------------------------
// 2. Gradient estimator is unbiased for the exact sketched objective.
// ---------------------------------------------------------------------------

CheckResult check_estimator_unbiasedness(Exec exec) {
  CheckResult res{"2.estimator-unbiasedness"};
  const Dataset ds = make_synthetic_dataset(20, 6, 21, 3, 0.15);
  const auto loss = std::make_shared<LogisticLoss>(ds.rows, ds.labels, 6, 0.1);
  const MastProblem p(loss, SketchDistribution::rand_k(6, 2), gaussian_vec(6, 22, 0.4));

  std::vector<double> errs(20);
  parallel_for(errs.size(), exec, [&](std::size_t k) {
    const Vec x = gaussian_vec(6, 230 + k);
    const Vec avg = p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial);
    const Vec fd = finite_diff_gradient(
        [&](const Vec& y) { return p.exact_tilde_value(y, kDefaultSupportLimit, Exec::serial); },
        x, 1e-6);
    errs[k] = (avg - fd).norm() / std::max(1.0, fd.norm());
  });
  const double worst = *std::max_element(errs.begin(), errs.end());
  res.pass = worst <= 1e-5;
  res.detail = "worst relative error " + fmt(worst) + " over 20 points (tol 1e-5)";
  return res;
}

// ---------------------------------------------------------------------------
// 3. Lemma suite with exact expectations, plus the negative control.
// ---------------------------------------------------------------------------

struct LemmaFixtures {
  std::vector<MastProblem> problems;
};

LemmaFixtures lemma_fixtures() {
  const int d = 5;
  Vec diag(d);
  diag << 2.0, 0.7, 1.0, 1.5, 1.2;
  Vec center(d);
  center << 0.4, -0.3, 0.2, 0.0, 0.6;
  const auto quad = std::make_shared<QuadraticLoss>(diag, center, 0.25);

  const Dataset ds = make_synthetic_dataset(24, d, 31, 3, 0.15);
  const double l0 = power_iteration_ata(ds.rows, d) / (4.0 * ds.n());
  const auto logi = std::make_shared<LogisticLoss>(ds.rows, ds.labels, d,
                                                   lambda_for_kappa(l0, 25.0));

  Vec probs(d);
  probs << 0.4, 0.6, 0.8, 0.5, 0.9;
  const Vec shift = gaussian_vec(d, 32, 0.5);

  LemmaFixtures fx;
  for (const LossPtr& loss : {LossPtr(quad), LossPtr(logi)}) {
    fx.problems.emplace_back(loss, SketchDistribution::identity(d), shift);
    fx.problems.emplace_back(loss, SketchDistribution::rand_k(d, 2), shift);
    fx.problems.emplace_back(loss, SketchDistribution::bernoulli_independent(probs), shift);
  }
  return fx;
}

CheckResult check_lemma_suite(Exec exec) {
  CheckResult res{"3.lemma-suite"};
  const LemmaFixtures fx = lemma_fixtures();
  double worst = 0.0;
  std::string worst_id;
  bool ok = true;
  for (std::size_t i = 0; i < fx.problems.size(); ++i) {
    RngStream rng = RngStream::derive(33, i);
    InequalitySuiteOptions opts;
    opts.exec = exec;
    const InequalityReport report = verify_inequality_suite(fx.problems[i], 100, rng, opts);
    ok = ok && report.all_within(1e-9);
    if (const auto* w = report.worst(); w != nullptr && w->max_violation > worst) {
      worst = w->max_violation;
      worst_id = w->id;
    }
  }

  // Negative control: a halved smoothness constant must break the suite,
  // with the tilde-smoothness descent inequality among the violations.
  RngStream rng = RngStream::derive(34);
  InequalitySuiteOptions corrupt;
  corrupt.exec = exec;
  corrupt.smoothness_factor = 0.5;
  const InequalityReport bad = verify_inequality_suite(fx.problems[1], 100, rng, corrupt);
  double bad_l1ii = 0.0;
  for (const auto& c : bad.checks) {
    if (c.id == "lemma1.ii.tilde_smoothness") bad_l1ii = c.max_violation;
  }
  const bool control_failed = !bad.all_within(1e-9) && bad_l1ii > 1e-9;

  res.pass = ok && control_failed;
  res.detail = "clean suite worst violation " + fmt(worst) + " (" + worst_id +
               ", tol 1e-9); corrupted-L_f control violates lemma1.ii by " + fmt(bad_l1ii);
  return res;
}

// ---------------------------------------------------------------------------
// 4. Strongly convex double sketched GD: interpolation rate and stationary
//    neighborhood.
// ---------------------------------------------------------------------------

CheckResult check_thm2(Exec exec) {
  CheckResult res{"4.thm2-strongly-convex-dsgd"};
  const int d = 4;
  Vec diag(d);
  diag << 2.0, 1.0, 1.5, 1.0;
  Vec shift(d);
  shift << 0.3, -0.2, 0.5, 0.1;
  const auto dist = SketchDistribution::rand_k(d, 2);
  const SpectralConstants c = dist.spectral_constants();
  const Vec x0 = gaussian_vec(d, 41);

  // Interpolation: loss centered at the shift, so f~^inf = f^inf = 0 and the
  // neighborhood vanishes.
  const auto interp_loss = std::make_shared<QuadraticLoss>(diag, shift, 0.0);
  const MastProblem interp(interp_loss, dist, shift);
  const double gamma = step_size(StepSizeRule::thm2(), c, *interp_loss);
  const double rate = gamma * c.mu_d * interp_loss->strong_convexity();
  const double r0_sq = (x0 - shift).squaredNorm();
  const long t_pred = static_cast<long>(std::ceil(std::log(r0_sq / 1e-10) / rate));

  bool interp_ok = true;
  double interp_worst = 0.0;
  for (std::uint64_t seed : kSeeds) {
    SolverConfig sc;
    sc.kind = SolverKind::dsgd;
    sc.gamma = gamma;
    sc.iterations = t_pred;
    sc.seed = seed;
    sc.x0 = x0;
    MetricsOptions metrics;
    metrics.cadence = static_cast<int>(t_pred);
    const RunResult run = run_solver(interp, sc, metrics);
    const double err = (run.final_x - shift).squaredNorm();
    interp_worst = std::max(interp_worst, err);
    interp_ok = interp_ok && err <= 1e-10;
  }

  // Off-interpolation: center away from the shift and a dense PSD matrix,
  // so the per-sketch gradients have no common zero and the iterates settle
  // into a noisy stationary regime. The 5-seed tail-averaged error must sit
  // inside the theorem envelope (20% slack).
  Vec center = shift;
  center[0] += 0.5;
  center[1] -= 0.4;
  center[2] += 0.3;
  center[3] += 0.2;
  Eigen::MatrixXd dense = diag.asDiagonal();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i != j) dense(i, j) = 0.15;
    }
  }
  const auto off_loss = std::make_shared<QuadraticLoss>(dense, center, 0.0);
  const MastProblem off(off_loss, dist, shift);
  const double gamma_off = step_size(StepSizeRule::thm2(), c, *off_loss);
  const ReferenceSolution tilde_star = solve_reference_tilde(off, Vec::Zero(d), 1e-24);
  const double f_inf = 0.0;
  const double tilde_gap = tilde_star.value - f_inf;
  const double neighborhood = 2.0 * gamma_off * off_loss->smoothness() * c.l_s_max *
                              tilde_gap / (off_loss->strong_convexity() * c.mu_d);
  const long t_run = 3000;
  const int cadence = 50;

  std::vector<double> tail_errors;
  for (std::uint64_t seed : kSeeds) {
    SolverConfig sc;
    sc.kind = SolverKind::dsgd;
    sc.gamma = gamma_off;
    sc.iterations = t_run;
    sc.seed = seed;
    sc.x0 = x0;
    MetricsOptions metrics;
    metrics.cadence = cadence;
    std::vector<std::pair<long, double>> errs;
    run_solver(off, sc, metrics, [&](const SolverState& st, long t) {
      errs.emplace_back(t, (st.x - tilde_star.x).squaredNorm());
    });
    const std::size_t from = errs.size() - errs.size() / 4;
    for (std::size_t i = from; i < errs.size(); ++i) tail_errors.push_back(errs[i].second);
  }
  double stationary = 0.0;
  for (double e : tail_errors) stationary += e;
  stationary /= static_cast<double>(tail_errors.size());
  const double transient =
      std::pow(1.0 - gamma_off * c.mu_d * off_loss->strong_convexity(),
               static_cast<double>(t_run) * 0.75) *
      (x0 - tilde_star.x).squaredNorm();
  const double bound = 1.2 * (transient + neighborhood);
  const bool off_ok = stationary <= bound;

  res.pass = interp_ok && off_ok;
  res.detail = "interpolation worst |x_T - x*|^2 = " + fmt(interp_worst) +
               " (<= 1e-10 within T = " + std::to_string(t_pred) +
               "); stationary error " + fmt(stationary) + " vs envelope " + fmt(bound);
  (void)exec;
  return res;
}

// ---------------------------------------------------------------------------
// 5. Loopless variance reduction: linear convergence with b = N and the
//    Lyapunov contraction.
// ---------------------------------------------------------------------------

CheckResult check_thm5(Exec exec) {
  CheckResult res{"5.thm5-lsvrdsg"};
  const int d = 20;
  Vec diag(d);
  for (int i = 0; i < d; ++i) diag[i] = 0.5 + 0.5 * i / (d - 1.0);
  const Vec center = gaussian_vec(d, 51);
  const Vec shift = Vec::Zero(d);
  const auto loss = std::make_shared<QuadraticLoss>(diag, center, 0.0);
  const auto dist = SketchDistribution::rand_k(d, 1);
  const MastProblem p(loss, dist, shift);
  const SpectralConstants c = p.constants();
  const SupportSet support = SupportSet::from(dist);
  const int n = support.size();

  const double gamma = step_size(StepSizeRule::thm5(), c, *loss);
  // Pick p so that p/2 equals gamma mu_D mu_f: the two candidate rates in
  // the theorem's contraction factor coincide.
  const double prob = 2.0 * gamma * c.mu_d * loss->strong_convexity();
  const double rho = std::max(gamma * c.mu_d * loss->strong_convexity(), prob / 2.0);

  const ReferenceSolution tilde_star = solve_reference_tilde(p, Vec::Zero(d), 1e-26);
  const Vec x0 = gaussian_vec(d, 53);
  const long t_run = 28000;
  const int cadence = 250;

  // Pre-computed per-sketch gradients at the optimum for the Lyapunov sum.
  std::vector<Vec> grad_at_star(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    grad_at_star[static_cast<std::size_t>(i)] =
        p.estimator_gradient(support.sketches[static_cast<std::size_t>(i)], tilde_star.x);
  }
  const double lyap_coeff = 16.0 * gamma * gamma / (prob * static_cast<double>(n));

  std::vector<double> final_errors(kSeeds.size());
  std::vector<double> factors(kSeeds.size());
  parallel_for(kSeeds.size(), exec, [&](std::size_t si) {
    SolverConfig sc;
    sc.kind = SolverKind::lsvrdsg;
    sc.gamma = gamma;
    sc.iterations = t_run;
    sc.seed = kSeeds[si];
    sc.x0 = x0;
    sc.prob = prob;
    sc.batch = n;
    MetricsOptions metrics;
    metrics.cadence = cadence;
    std::vector<std::pair<long, double>> psi;
    const RunResult run = run_solver(p, sc, metrics, [&](const SolverState& st, long t) {
      double anchor = 0.0;
      for (int i = 0; i < n; ++i) {
        anchor += (p.estimator_gradient(support.sketches[static_cast<std::size_t>(i)], st.w) -
                   grad_at_star[static_cast<std::size_t>(i)])
                      .squaredNorm();
      }
      psi.emplace_back(t, (st.x - tilde_star.x).squaredNorm() + lyap_coeff * anchor);
    });
    final_errors[si] = (run.final_x - tilde_star.x).squaredNorm();
    // Average per-step contraction over the logged span.
    const auto& first = psi.front();
    const auto& last = psi.back();
    factors[si] = std::pow(last.second / first.second,
                           1.0 / static_cast<double>(last.first - first.first));
  });

  double mean_err = 0.0, mean_factor = 0.0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    mean_err += final_errors[i];
    mean_factor += std::log(factors[i]);
  }
  mean_err /= static_cast<double>(kSeeds.size());
  mean_factor = std::exp(mean_factor / static_cast<double>(kSeeds.size()));

  const double factor_bound = (1.0 - rho) * 1.2;
  res.pass = mean_err < 1e-8 && mean_factor <= factor_bound;
  res.detail = "mean final |x_T - x_D*|^2 = " + fmt(mean_err) +
               " (< 1e-8); Lyapunov contraction " + fmt(mean_factor) + " vs (1-rho)*1.2 = " +
               fmt(factor_bound) + " with rho = " + fmt(rho);
  return res;
}

// ---------------------------------------------------------------------------
// 6. Stationarity envelopes: smooth nonconvex, inexact ABC estimator, and the
//    heterogeneous distributed setting.
// ---------------------------------------------------------------------------

struct EnvelopeOutcome {
  bool pass = false;
  double lhs = 0.0;
  double rhs = 0.0;
};

EnvelopeOutcome thm3_envelope(Exec exec) {
  const int d = 8;
  const Dataset ds = make_synthetic_dataset(30, d, 61, 4, 0.2);
  const auto loss = std::make_shared<NonconvexLogisticLoss>(ds.rows, ds.labels, d, 0.05);
  const auto dist = SketchDistribution::rand_k(d, 1);
  const MastProblem p(loss, dist, gaussian_vec(d, 62, 0.3));
  const SpectralConstants c = p.constants();
  const long horizon = 1000;
  const double gamma = step_size(StepSizeRule::thm3(horizon), c, *loss);
  const Vec x0 = gaussian_vec(d, 63);

  // Estimated infima: gradient descent to stationarity from several starts.
  double f_inf = solve_reference(*loss, Vec::Zero(d), 1e-18).value;
  for (std::uint64_t s : {641ull, 642ull}) {
    f_inf = std::min(f_inf, solve_reference(*loss, gaussian_vec(d, s), 1e-18).value);
  }
  const ReferenceSolution tilde_ref = solve_reference_tilde(p, Vec::Zero(d), 1e-18);
  const double tilde_inf = std::min(
      tilde_ref.value, solve_reference_tilde(p, gaussian_vec(d, 643), 1e-18).value);

  const double delta0 = p.exact_tilde_value(x0, kDefaultSupportLimit, Exec::serial) - tilde_inf;
  const double gap = std::max(0.0, tilde_inf - f_inf);

  std::vector<std::vector<RunRow>> per_seed(kSeeds.size());
  parallel_for(kSeeds.size(), exec, [&](std::size_t si) {
    SolverConfig sc;
    sc.kind = SolverKind::dsgd;
    sc.gamma = gamma;
    sc.iterations = horizon;
    sc.seed = kSeeds[si];
    sc.x0 = x0;
    MetricsOptions metrics;
    metrics.cadence = 1;
    metrics.grad_sq_mast = [&](const Vec& x) {
      return p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial).squaredNorm();
    };
    per_seed[si] = run_solver(p, sc, metrics).rows;
  });
  const Series series = mean_over_seeds(per_seed, [](const RunRow& r) { return r.grad_sq_mast; });

  EnvelopeOutcome out;
  out.lhs = *std::min_element(series.mean.begin(), series.mean.end());
  const double l_f = loss->smoothness();
  out.rhs = 3.0 * delta0 / (gamma * static_cast<double>(horizon)) +
            gamma * l_f * l_f * c.l_d * c.l_s_max * gap;
  out.pass = out.lhs <= 1.2 * out.rhs;
  return out;
}

EnvelopeOutcome thm4_envelope(Exec exec) {
  const int d = 6;
  const Dataset ds = make_synthetic_dataset(24, d, 64, 3, 0.15);
  const double l0 = power_iteration_ata(ds.rows, d) / (4.0 * ds.n());
  const auto loss =
      std::make_shared<LogisticLoss>(ds.rows, ds.labels, d, lambda_for_kappa(l0, 50.0));
  const auto dist = SketchDistribution::rand_k(d, 2);
  const MastProblem p(loss, dist, Vec::Zero(d));
  const SpectralConstants c = p.constants();

  const double f_inf = solve_reference(*loss, Vec::Zero(d), 1e-26).value;
  const AbcEstimator estimator = AbcEstimator::uniform_subsample(1);
  const AbcEstimator::Constants abc = estimator.abc_constants(*loss, f_inf);

  const long horizon = 1000;
  const double gamma =
      step_size(StepSizeRule::thm4(horizon, abc.a, abc.b, abc.c.value()), c, *loss);
  const Vec x0 = gaussian_vec(d, 65);

  const double tilde_inf = solve_reference_tilde(p, Vec::Zero(d), 1e-24).value;
  const double delta0 = p.exact_tilde_value(x0, kDefaultSupportLimit, Exec::serial) - tilde_inf;
  const double gap = std::max(0.0, tilde_inf - f_inf);

  std::vector<std::vector<RunRow>> per_seed(kSeeds.size());
  parallel_for(kSeeds.size(), exec, [&](std::size_t si) {
    SolverConfig sc;
    sc.kind = SolverKind::dsgd;
    sc.gamma = gamma;
    sc.iterations = horizon;
    sc.seed = kSeeds[si];
    sc.x0 = x0;
    sc.estimator = estimator;
    MetricsOptions metrics;
    metrics.cadence = 1;
    metrics.grad_sq_mast = [&](const Vec& x) {
      return p.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial).squaredNorm();
    };
    per_seed[si] = run_solver(p, sc, metrics).rows;
  });
  const Series series = mean_over_seeds(per_seed, [](const RunRow& r) { return r.grad_sq_mast; });

  EnvelopeOutcome out;
  out.lhs = *std::min_element(series.mean.begin(), series.mean.end());
  const double d_ab = abc.a + abc.b * loss->smoothness() * c.l_s_max;
  out.rhs = 3.0 * delta0 / (gamma * static_cast<double>(horizon)) +
            0.5 * gamma * loss->smoothness() * c.l_d *
                (abc.c.value() + 2.0 * d_ab * gap);
  out.pass = out.lhs <= 1.2 * out.rhs;
  return out;
}

EnvelopeOutcome thm6_envelope(Exec exec) {
  const int d = 6;
  auto quad = [&](double scale, std::uint64_t seed) {
    Vec diag(d);
    for (int i = 0; i < d; ++i) diag[i] = scale * (0.5 + 0.5 * i / (d - 1.0));
    return std::make_shared<QuadraticLoss>(diag, gaussian_vec(d, seed, 0.8), 0.0);
  };
  std::vector<Node> nodes;
  nodes.push_back({quad(1.0, 71), SketchDistribution::rand_k(d, 1), 0});
  nodes.push_back({quad(2.0, 72), SketchDistribution::rand_k(d, 2), 1});
  nodes.push_back({quad(0.5, 73), SketchDistribution::rand_k(d, 3), 2});
  nodes.push_back({quad(3.0, 74), SketchDistribution::bernoulli_independent(
                                      Vec::Constant(d, 0.5)), 3});
  const Cluster cluster(std::move(nodes), gaussian_vec(d, 66, 0.2));

  const long horizon = 1000;
  const double gamma = distributed_step_size(cluster, horizon);
  const Vec x0 = gaussian_vec(d, 67);

  const ReferenceSolution tilde_star = solve_reference_gd(
      [&](const Vec& x) { return cluster.tilde_value(x, kDefaultSupportLimit, Exec::serial); },
      [&](const Vec& x) { return cluster.tilde_gradient(x, kDefaultSupportLimit, Exec::serial); },
      cluster.tilde_smoothness(), Vec::Zero(d), 1e-24);
  const double delta0 =
      cluster.tilde_value(x0, kDefaultSupportLimit, Exec::serial) - tilde_star.value;
  // Per-node infima are exact (quadratics with zero offset).
  const double heterogeneity = tilde_star.value;

  std::vector<std::vector<RunRow>> per_seed(kSeeds.size());
  parallel_for(kSeeds.size(), exec, [&](std::size_t si) {
    DistributedConfig dc;
    dc.gamma = gamma;
    dc.iterations = horizon;
    dc.seed = kSeeds[si];
    dc.x0 = x0;
    MetricsOptions metrics;
    metrics.cadence = 1;
    metrics.grad_sq_mast = [&](const Vec& x) {
      return cluster.tilde_gradient(x, kDefaultSupportLimit, Exec::serial).squaredNorm();
    };
    per_seed[si] = run_distributed(cluster, dc, metrics, Exec::serial).rows;
  });
  const Series series = mean_over_seeds(per_seed, [](const RunRow& r) { return r.grad_sq_mast; });

  EnvelopeOutcome out;
  out.lhs = *std::min_element(series.mean.begin(), series.mean.end());
  out.rhs = 3.0 * delta0 / (gamma * static_cast<double>(horizon)) +
            gamma * cluster.d_max() * heterogeneity;
  out.pass = out.lhs <= 1.2 * out.rhs;
  return out;
}

CheckResult check_envelopes(Exec exec) {
  CheckResult res{"6.envelopes-thm3-thm4-thm6"};
  const EnvelopeOutcome t3 = thm3_envelope(exec);
  const EnvelopeOutcome t4 = thm4_envelope(exec);
  const EnvelopeOutcome t6 = thm6_envelope(exec);
  res.pass = t3.pass && t4.pass && t6.pass;
  res.detail = "min grad^2 vs 1.2*bound: nonconvex " + fmt(t3.lhs) + "/" + fmt(1.2 * t3.rhs) +
               ", abc " + fmt(t4.lhs) + "/" + fmt(1.2 * t4.rhs) + ", distributed " +
               fmt(t6.lhs) + "/" + fmt(1.2 * t6.rhs);
  return res;
}

// ---------------------------------------------------------------------------
// 7. S-PAGE: exact reduction to full gradient descent and the nonconvex
//    envelope.
// ---------------------------------------------------------------------------

CheckResult check_spage(Exec exec) {
  CheckResult res{"7.spage-reductions"};

  // p = 1, b = N: trajectory must be bitwise equal to gradient descent on
  // the exact sketched objective.
  const int d = 6;
  const Dataset ds = make_synthetic_dataset(24, d, 71, 3, 0.2);
  const auto loss = std::make_shared<NonconvexLogisticLoss>(ds.rows, ds.labels, d, 0.05);
  const auto dist = SketchDistribution::rand_k(d, 2);
  const MastProblem p(loss, dist, gaussian_vec(d, 72, 0.3));
  const SupportSet support = SupportSet::from(dist);
  const int n = support.size();
  const double gamma_gd = 1.0 / (p.tilde_smoothness());

  const Vec x0 = gaussian_vec(d, 73);
  std::vector<Vec> spage_traj;
  {
    SolverConfig sc;
    sc.kind = SolverKind::spage;
    sc.gamma = gamma_gd;
    sc.iterations = 50;
    sc.seed = 7;
    sc.x0 = x0;
    sc.prob = 1.0;
    sc.batch = n;
    sc.small_batch = 1;
    MetricsOptions metrics;
    metrics.cadence = 1;
    run_solver(p, sc, metrics,
               [&](const SolverState& st, long) { spage_traj.push_back(st.x); });
  }
  bool bitwise = true;
  Vec x_gd = x0;
  for (std::size_t t = 0; t < spage_traj.size(); ++t) {
    if (!(x_gd.array() == spage_traj[t].array()).all()) bitwise = false;
    x_gd -= gamma_gd * p.exact_tilde_gradient(x_gd, kDefaultSupportLimit, Exec::serial);
  }

  // Nonconvex envelope with measured sketch variance.
  const int d2 = 8;
  const Dataset ds2 = make_synthetic_dataset(30, d2, 61, 4, 0.2);
  const auto loss2 = std::make_shared<NonconvexLogisticLoss>(ds2.rows, ds2.labels, d2, 0.05);
  const auto dist2 = SketchDistribution::rand_k(d2, 1);
  const MastProblem p2(loss2, dist2, gaussian_vec(d2, 62, 0.3));
  const SupportSet support2 = SupportSet::from(dist2);
  const int n2 = support2.size();
  const double prob = 0.3;
  const int batch = 6, small_batch = 2;
  const double gamma = step_size(StepSizeRule::spage_rule(prob, small_batch),
                                 p2.constants(), *loss2);
  const long horizon = 1000;
  const Vec x02 = gaussian_vec(d2, 63);

  const double tilde_inf = std::min(
      solve_reference_tilde(p2, Vec::Zero(d2), 1e-18).value,
      solve_reference_tilde(p2, gaussian_vec(d2, 643), 1e-18).value);

  std::vector<std::vector<RunRow>> per_seed(kSeeds.size());
  std::vector<double> psi0(kSeeds.size());
  std::vector<double> sigma_sq(kSeeds.size(), 0.0);
  parallel_for(kSeeds.size(), exec, [&](std::size_t si) {
    SolverConfig sc;
    sc.kind = SolverKind::spage;
    sc.gamma = gamma;
    sc.iterations = horizon;
    sc.seed = kSeeds[si];
    sc.x0 = x02;
    sc.prob = prob;
    sc.batch = batch;
    sc.small_batch = small_batch;
    MetricsOptions metrics;
    metrics.cadence = 1;
    metrics.grad_sq_mast = [&](const Vec& x) {
      return p2.exact_tilde_gradient(x, kDefaultSupportLimit, Exec::serial).squaredNorm();
    };
    const auto observer = [&](const SolverState& st, long t) {
      if (t == 0) {
        const Vec tg = p2.exact_tilde_gradient(st.x, kDefaultSupportLimit, Exec::serial);
        psi0[si] = p2.exact_tilde_value(st.x, kDefaultSupportLimit, Exec::serial) - tilde_inf +
                   gamma / (2.0 * prob) * (st.h - tg).squaredNorm();
      }
      if (t % 10 != 0) return;
      // Empirical bounded-variance constant: exact variance of the sketched
      // gradient over the support at this iterate.
      const Vec tg = p2.exact_tilde_gradient(st.x, kDefaultSupportLimit, Exec::serial);
      double var = 0.0;
      for (int i = 0; i < n2; ++i) {
        var += (p2.estimator_gradient(support2.sketches[static_cast<std::size_t>(i)], st.x) - tg)
                   .squaredNorm();
      }
      sigma_sq[si] = std::max(sigma_sq[si], var / static_cast<double>(n2));
    };
    per_seed[si] = run_solver(p2, sc, metrics, observer).rows;
  });
  const Series series = mean_over_seeds(per_seed, [](const RunRow& r) { return r.grad_sq_mast; });
  const double lhs = *std::min_element(series.mean.begin(), series.mean.end());
  double mean_psi0 = 0.0, sigma_hat = 0.0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i) {
    mean_psi0 += psi0[i];
    sigma_hat = std::max(sigma_hat, sigma_sq[i]);
  }
  mean_psi0 /= static_cast<double>(kSeeds.size());
  const double rhs = 2.0 * mean_psi0 / (gamma * static_cast<double>(horizon)) +
                     static_cast<double>(n2 - batch) /
                         (static_cast<double>(n2 - 1) * batch) * sigma_hat;
  const bool envelope_ok = lhs <= 1.2 * rhs;

  res.pass = bitwise && envelope_ok;
  res.detail = std::string("p=1,b=N trajectory bitwise-equal to GD on the sketched loss: ") +
               (bitwise ? "yes" : "NO") + "; envelope min grad^2 " + fmt(lhs) + " vs " +
               fmt(1.2 * rhs);
  return res;
}

// ---------------------------------------------------------------------------
// 8. Step-size sweep: the theoretical step converges monotonically, 50x
//    derails or stagnates.
// ---------------------------------------------------------------------------

ExperimentConfig sweep_base_config() {
  ExperimentConfig cfg;
  cfg.dataset_fixture = "synthetic";
  cfg.fixture_n = 400;
  cfg.fixture_d = 100;
  cfg.fixture_seed = 8;
  cfg.loss_kind = "logistic";
  cfg.kappa = 1000.0;
  cfg.sketch_kind = "randk";
  cfg.sketch_k = 1;
  cfg.solver_kind = "dsgd";
  cfg.iterations = 1500;
  cfg.gamma_rule = "thm2";
  cfg.seeds = kSeeds;
  cfg.x0_seed = 0;  // x^0 = 0
  cfg.cadence = 25;
  cfg.log_mast_loss = true;
  cfg.log_accuracy = false;
  cfg.config_hash = fnv1a64(cfg.canonical_json());
  return cfg;
}

CheckResult check_gamma_sweep(Exec exec) {
  CheckResult res{"8.gamma-sweep"};
  const ExperimentConfig cfg = sweep_base_config();
  const SweepOutputs sweep =
      cmd_sweep(cfg, "gamma_multiplier", {1.0, 10.0, 20.0, 50.0}, false, exec);

  // Multiplier 1: the 5-seed mean exact sketched loss decreases at every
  // logged step.
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  const SweepCell& base = sweep.cells.front();
  const Series base_series =
      mean_series(base.rows, n_seeds, [](const RunRow& r) { return r.mast_loss; });
  bool monotone = !base.any_diverged && base_series.mean.size() >= 2;
  for (std::size_t i = 0; i + 1 < base_series.mean.size(); ++i) {
    if (base_series.mean[i + 1] > base_series.mean[i] * (1.0 + 1e-12) + 1e-15) {
      monotone = false;
    }
  }

  // Multiplier 50: divergence, or no net progress over the second half (the
  // final loss no lower than at the midpoint or above its starting value).
  const SweepCell& hot = sweep.cells.back();
  bool derailed = hot.any_diverged;
  if (!derailed) {
    const Series hs = mean_series(hot.rows, n_seeds, [](const RunRow& r) { return r.mast_loss; });
    if (hs.ts.size() >= 2) {
      const long t_half = cfg.iterations / 2;
      std::size_t half_idx = 0;
      for (std::size_t i = 0; i < hs.ts.size(); ++i) {
        if (hs.ts[i] <= t_half) half_idx = i;
      }
      derailed = hs.mean.back() >= hs.mean[half_idx] || hs.mean.back() >= hs.mean.front();
    }
  }

  res.pass = monotone && derailed;
  res.detail = std::string("gamma_0: mean sketched loss monotone decreasing = ") +
               (monotone ? "yes" : "NO") + "; 50*gamma_0: diverged or stagnated = " +
               (derailed ? "yes" : "NO");
  return res;
}

// ---------------------------------------------------------------------------
// 9. Sparsified-solution robustness study.
// ---------------------------------------------------------------------------

CheckResult check_robustness(Exec exec) {
  CheckResult res{"9.robustness-study"};
  ExperimentConfig cfg;
  cfg.dataset_fixture = "synthetic-grouped";
  cfg.fixture_n = 4000;
  cfg.fixture_d = 100;
  cfg.fixture_seed = 21;
  cfg.split_fractions = {0.7, 0.18, 0.12};
  cfg.split_seed = 7;
  cfg.loss_kind = "logistic";
  cfg.kappa = 100.0;
  cfg.sketch_kind = "randk";
  cfg.solver_kind = "dsgd";
  cfg.iterations = 2000;
  cfg.gamma_rule = "thm2";
  cfg.seeds = {1};
  cfg.x0_seed = 901;
  cfg.cadence = 50;
  cfg.checkpoint_cadence = 50;
  cfg.log_mast_loss = false;
  cfg.log_accuracy = true;

  bool ok = true;
  std::string detail;
  for (double q : {0.3, 0.5, 0.7}) {
    ExperimentConfig qcfg = cfg;
    qcfg.sketch_q = q;
    qcfg.config_hash = fnv1a64(qcfg.canonical_json());
    const RobustnessOutputs rob = cmd_robustness(qcfg, 1000, "", false, exec);
    const bool ordered = rob.mast.median > rob.erm.median;
    if (q > 0.4) ok = ok && ordered;  // no ordering asserted at q = 0.3
    detail += "q=" + fmt(q) + ": median mast " + fmt(rob.mast.median) + " vs erm " +
              fmt(rob.erm.median) + (q > 0.4 ? (ordered ? " (> ok)" : " (VIOLATED)") : "") +
              "; ";
  }
  res.pass = ok;
  res.detail = detail;
  return res;
}

// ---------------------------------------------------------------------------
// 10. Byte-identical outputs on re-runs, and parallel == serial.
// ---------------------------------------------------------------------------

CheckResult check_determinism(Exec exec) {
  CheckResult res{"10.determinism"};
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "mast_verify_determinism";
  fs::remove_all(root);

  ExperimentConfig cfg;
  cfg.dataset_fixture = "synthetic";
  cfg.fixture_n = 120;
  cfg.fixture_d = 20;
  cfg.fixture_seed = 10;
  cfg.split_fractions = {0.7, 0.18, 0.12};
  cfg.loss_kind = "logistic";
  cfg.kappa = 30.0;
  cfg.sketch_kind = "randk";
  cfg.sketch_k = 5;
  cfg.solver_kind = "dsgd";
  cfg.iterations = 60;
  cfg.gamma_rule = "thm2";
  cfg.seeds = {1, 2, 3};
  cfg.cadence = 10;
  cfg.log_mast_loss = true;
  cfg.mc_samples = 200;
  cfg.log_accuracy = true;
  cfg.write_svg = true;

  // Identical config, run twice into the same location (parallel kernels the
  // first time, the serial reference the second); every artifact must come
  // back byte-identical.
  cfg.output_dir = (root / "out").string();
  cfg.config_hash = fnv1a64(cfg.canonical_json());
  const std::vector<std::string> files = {
      "runs.csv",        "summary.csv",           "plot.svg",       "sweep_runs.csv",
      "robustness.csv",  "robustness_quantiles.csv", "model_final.txt"};
  std::map<std::string, std::string> first_bytes;
  bool ok = true;
  for (const Exec run_exec : {exec, Exec::serial}) {
    cmd_run(cfg, true, run_exec);
    cmd_sweep(cfg, "q", {0.25, 0.5}, true, run_exec);
    cmd_robustness(cfg, 25, "", true, run_exec);
    for (const auto& file : files) {
      const std::string bytes = read_file_bytes((root / "out" / file).string());
      if (auto it = first_bytes.find(file); it == first_bytes.end()) {
        first_bytes[file] = bytes;
      } else if (it->second != bytes) {
        ok = false;
        res.detail += file + " differs; ";
      }
    }
  }
  fs::remove_all(root);
  res.pass = ok;
  if (ok) {
    res.detail = "run/sweep/robustness outputs byte-identical across re-runs and across "
                 "parallel vs serial execution";
  }
  return res;
}

using CheckFn = CheckResult (*)(Exec);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
  static const std::vector<std::pair<std::string, CheckFn>> checks = {
      {"1.sketch-moments", &check_sketch_moments},
      {"2.estimator-unbiasedness", &check_estimator_unbiasedness},
      {"3.lemma-suite", &check_lemma_suite},
      {"4.thm2-strongly-convex-dsgd", &check_thm2},
      {"5.thm5-lsvrdsg", &check_thm5},
      {"6.envelopes-thm3-thm4-thm6", &check_envelopes},
      {"7.spage-reductions", &check_spage},
      {"8.gamma-sweep", &check_gamma_sweep},
      {"9.robustness-study", &check_robustness},
      {"10.determinism", &check_determinism},
  };
  return checks;
}

}  // namespace

std::vector<CheckResult> run_verification(const std::string& filter, Exec exec) {
  std::vector<CheckResult> results;
  for (const auto& [id, fn] : registry()) {
    if (!filter.empty() && id.find(filter) == std::string::npos) continue;
    const double start = now_s();
    CheckResult r = fn(exec);
    r.elapsed_s = now_s() - start;
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<std::string> run_lemma_suite_with_fault() {
  const LemmaFixtures fx = lemma_fixtures();
  RngStream rng = RngStream::derive(34);
  InequalitySuiteOptions corrupt;
  corrupt.smoothness_factor = 0.5;
  const InequalityReport report = verify_inequality_suite(fx.problems[1], 100, rng, corrupt);
  std::vector<std::string> failing;
  for (const auto& c : report.checks) {
    if (c.max_violation > 1e-9) failing.push_back(c.id);
  }
  return failing;
}

std::vector<std::string> registered_check_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, fn] : registry()) ids.push_back(id);
  return ids;
}

void write_verify_csv(const std::string& path, const std::vector<CheckResult>& results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out << "check,pass,elapsed_s,detail\n";
  for (const auto& r : results) {
    std::string detail = r.detail;
    std::replace(detail.begin(), detail.end(), ',', ';');
    out << r.id << ',' << (r.pass ? 1 : 0) << ',' << format_double(r.elapsed_s) << ','
        << detail << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace mast
