#include "mast/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mast {

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                         double h_scale) {
  if (!(h_scale > 0.0)) throw ConfigError("finite differences need h_scale > 0");
  Vec g(x.size());
  Vec probe = x;
  for (int i = 0; i < x.size(); ++i) {
    const double h = h_scale * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error("non-finite stencil value in finite differences");
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Vec finite_diff_gradient(const Loss& loss, const Vec& x, double h_scale) {
  return finite_diff_gradient([&](const Vec& y) { return loss.value(y); }, x, h_scale);
}

ReferenceSolution solve_reference_gd(const std::function<double(const Vec&)>& value,
                                     const std::function<Vec(const Vec&)>& gradient,
                                     double smoothness, const Vec& x0,
                                     double tol_grad_sq, long max_iterations) {
  if (!(smoothness > 0.0)) throw ConfigError("reference solver needs a positive smoothness");
  const double step = 1.0 / smoothness;
  Vec x = x0;
  for (long t = 0; t <= max_iterations; ++t) {
    Vec g = gradient(x);
    const double gsq = g.squaredNorm();
    if (gsq <= tol_grad_sq) {
      const double v = value(x);
      return ReferenceSolution{std::move(x), v, gsq, t};
    }
    x -= step * g;
  }
  throw Error("reference solver hit the iteration cap (" + std::to_string(max_iterations) +
              "), achieved |grad|^2 = " + std::to_string(gradient(x).squaredNorm()));
}

ReferenceSolution solve_reference(const Loss& loss, const Vec& x0, double tol_grad_sq) {
  return solve_reference_gd([&](const Vec& x) { return loss.value(x); },
                            [&](const Vec& x) { return loss.gradient(x); },
                            loss.smoothness(), x0, tol_grad_sq);
}

ReferenceSolution solve_reference_tilde(const MastProblem& p, const Vec& x0,
                                        double tol_grad_sq, std::uint64_t support_limit) {
  return solve_reference_gd(
      [&](const Vec& x) { return p.exact_tilde_value(x, support_limit, Exec::serial); },
      [&](const Vec& x) { return p.exact_tilde_gradient(x, support_limit, Exec::serial); },
      p.tilde_smoothness(), x0, tol_grad_sq);
}

const InequalityCheck* InequalityReport::worst() const {
  const InequalityCheck* w = nullptr;
  for (const auto& c : checks) {
    if (w == nullptr || c.max_violation > w->max_violation) w = &c;
  }
  return w;
}

namespace {

double rel_violation(double lhs, double rhs) {
  return (lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

struct MaxTracker {
  double value = -std::numeric_limits<double>::infinity();
  int at = -1;
  void update(double v, int point) {
    if (v > value) {
      value = v;
      at = point;
    }
  }
};

}  // namespace

InequalityReport verify_inequality_suite(const MastProblem& p, int n_points,
                                         RngStream& rng,
                                         const InequalitySuiteOptions& opts) {
  const Loss& loss = p.loss();
  const double mu_f = loss.strong_convexity();
  if (!(mu_f > 0.0)) {
    throw UnsupportedError("inequality suite requires a strongly convex loss");
  }
  const double l_f = loss.smoothness() * opts.smoothness_factor;
  const auto& c = p.constants();
  const int d = p.dim();
  const auto support = p.dist().enumerate_support(opts.support_limit);

  // Reference minimizers of f and of the sketched objective.
  const ReferenceSolution star = solve_reference(loss, Vec::Zero(d), opts.reference_tol_grad_sq);
  const ReferenceSolution d_star =
      solve_reference_tilde(p, Vec::Zero(d), opts.reference_tol_grad_sq, opts.support_limit);
  const double f_inf = star.value;

  // Probe points: standard normal draws plus the distinguished points.
  std::vector<Vec> points;
  std::vector<Vec> dirs;  // second point per probe, for (x, h) style checks
  points.reserve(static_cast<std::size_t>(n_points) + 4);
  for (int k = 0; k < n_points; ++k) {
    Vec x(d), h(d);
    for (int i = 0; i < d; ++i) x[i] = rng.normal();
    for (int i = 0; i < d; ++i) h[i] = rng.normal();
    points.push_back(std::move(x));
    dirs.push_back(std::move(h));
  }
  for (const Vec& extra : {Vec(Vec::Zero(d)), p.shift(), star.x, d_star.x}) {
    Vec h(d);
    for (int i = 0; i < d; ++i) h[i] = rng.normal();
    points.push_back(extra);
    dirs.push_back(std::move(h));
  }
  const std::size_t m = points.size();

  struct PointStats {
    double lemma1_i = 0, lemma1_ii = 0, lemma1_iii = 0;
    double lemma2_lower = 0, lemma2_midpoint = 0;
    double lemma3_i = 0, lemma3_ii = 0, lemma3_iii = 0;
    double lemma4 = 0;
  };
  std::vector<PointStats> stats(m);

  parallel_for(m, opts.exec, [&](std::size_t k) {
    const Vec& x = points[k];
    const Vec& h = dirs[k];
    const Vec xh = x + h;
    const Vec mid = 0.5 * (x + xh);
    PointStats st;

    double tilde_x = 0.0, tilde_xh = 0.0, tilde_mid = 0.0, second_moment = 0.0;
    Vec tilde_grad = Vec::Zero(d);
    st.lemma1_i = -std::numeric_limits<double>::infinity();
    st.lemma3_i = -std::numeric_limits<double>::infinity();
    for (const auto& [sk, prob] : support) {
      const double fs_x = p.sketched_value(sk, x);
      const double fs_xh = p.sketched_value(sk, xh);
      const Vec gs = p.estimator_gradient(sk, x);
      tilde_x += prob * fs_x;
      tilde_xh += prob * fs_xh;
      tilde_mid += prob * p.sketched_value(sk, mid);
      accumulate_scaled(tilde_grad, prob, gs);
      second_moment += prob * gs.squaredNorm();
      const double linear = fs_x + gs.dot(h);
      st.lemma1_i = std::max(
          st.lemma1_i,
          rel_violation(fs_xh, linear + 0.5 * sk.max_scale_sq() * l_f * h.squaredNorm()));
      st.lemma3_i = std::max(
          st.lemma3_i,
          rel_violation(linear + 0.5 * sk.min_scale_sq() * mu_f * h.squaredNorm(), fs_xh));
    }
    const double f_x = loss.value(x);
    const double dist_sq = (x - p.shift()).squaredNorm();
    const double tilde_linear = tilde_x + tilde_grad.dot(h);

    st.lemma1_ii = rel_violation(tilde_xh, tilde_linear + 0.5 * c.l_d * l_f * h.squaredNorm());
    st.lemma1_iii = rel_violation(tilde_x, f_x + 0.5 * (c.l_d - 1.0) * l_f * dist_sq);
    st.lemma2_lower = rel_violation(f_x, tilde_x);
    st.lemma2_midpoint = rel_violation(tilde_mid, 0.5 * (tilde_x + tilde_xh));
    st.lemma3_ii =
        rel_violation(tilde_linear + 0.5 * c.mu_d * mu_f * h.squaredNorm(), tilde_xh);
    st.lemma3_iii = rel_violation(f_x + 0.5 * (c.mu_d - 1.0) * mu_f * dist_sq, tilde_x);
    st.lemma4 = rel_violation(second_moment, 2.0 * l_f * c.l_s_max * (tilde_x - f_inf));
    stats[k] = st;
  });

  MaxTracker l1i, l1ii, l1iii, l2a, l2b, l3i, l3ii, l3iii, l4;
  for (std::size_t k = 0; k < m; ++k) {
    l1i.update(stats[k].lemma1_i, static_cast<int>(k));
    l1ii.update(stats[k].lemma1_ii, static_cast<int>(k));
    l1iii.update(stats[k].lemma1_iii, static_cast<int>(k));
    l2a.update(stats[k].lemma2_lower, static_cast<int>(k));
    l2b.update(stats[k].lemma2_midpoint, static_cast<int>(k));
    l3i.update(stats[k].lemma3_i, static_cast<int>(k));
    l3ii.update(stats[k].lemma3_ii, static_cast<int>(k));
    l3iii.update(stats[k].lemma3_iii, static_cast<int>(k));
    l4.update(stats[k].lemma4, static_cast<int>(k));
  }

  // Sandwich of the minima.
  const SandwichBounds sandwich = mast_sandwich_bounds(p, star.x, d_star.x);
  const double thm1 = std::max(rel_violation(sandwich.lower, sandwich.f_at_xd),
                               rel_violation(sandwich.f_at_xd, sandwich.upper));

  InequalityReport report;
  report.checks = {
      {"lemma1.i.per_sketch_smoothness", l1i.value, l1i.at},
      {"lemma1.ii.tilde_smoothness", l1ii.value, l1ii.at},
      {"lemma1.iii.gap_upper_bound", l1iii.value, l1iii.at},
      {"lemma2.tilde_above_f", l2a.value, l2a.at},
      {"lemma2.tilde_midpoint_convexity", l2b.value, l2b.at},
      {"lemma3.i.per_sketch_strong_convexity", l3i.value, l3i.at},
      {"lemma3.ii.tilde_strong_convexity", l3ii.value, l3ii.at},
      {"lemma3.iii.gap_lower_bound", l3iii.value, l3iii.at},
      {"lemma4.estimator_second_moment", l4.value, l4.at},
      {"theorem1.minima_sandwich", thm1, -1},
  };
  return report;
}

}  // namespace mast
