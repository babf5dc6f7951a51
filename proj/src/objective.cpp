#include "mast/objective.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace mast {

namespace {

// log(1 + exp(-m)), stable for large |m|.
double log1p_exp_neg(double m) {
  if (m > 0.0) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

// d/dm log(1 + exp(-m)) = -1/(1 + exp(m)).
double neg_sigmoid_neg(double m) { return -1.0 / (1.0 + std::exp(m)); }

}  // namespace

QuadraticLoss::QuadraticLoss(Vec diag_matrix, Vec center, double offset)
    : diagonal_(true),
      diag_(std::move(diag_matrix)),
      center_(std::move(center)),
      offset_(offset) {
  if (diag_.size() != center_.size()) throw DimensionError("quadratic: diag/center size mismatch");
  if (offset_ < 0.0) throw ConfigError("quadratic offset must be >= 0");
  if (diag_.minCoeff() < 0.0) throw ConfigError("quadratic matrix must be PSD");
  l_f_ = diag_.maxCoeff();
  mu_f_ = diag_.minCoeff();
}

QuadraticLoss::QuadraticLoss(Eigen::MatrixXd matrix, Vec center, double offset)
    : diagonal_(false),
      dense_(std::move(matrix)),
      center_(std::move(center)),
      offset_(offset) {
  if (dense_.rows() != dense_.cols() || dense_.rows() != center_.size()) {
    throw DimensionError("quadratic: matrix/center size mismatch");
  }
  if (offset_ < 0.0) throw ConfigError("quadratic offset must be >= 0");
  if (!dense_.isApprox(dense_.transpose(), 1e-12)) {
    throw ConfigError("quadratic matrix must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_);
  mu_f_ = es.eigenvalues().minCoeff();
  l_f_ = es.eigenvalues().maxCoeff();
  if (mu_f_ < -1e-12) throw ConfigError("quadratic matrix must be PSD");
  mu_f_ = std::max(mu_f_, 0.0);
}

double QuadraticLoss::value(const Vec& x) const {
  const Vec r = x - center_;
  if (diagonal_) return 0.5 * r.dot(diag_.cwiseProduct(r)) + offset_;
  return 0.5 * r.dot(dense_ * r) + offset_;
}

Vec QuadraticLoss::gradient(const Vec& x) const {
  const Vec r = x - center_;
  if (diagonal_) return diag_.cwiseProduct(r);
  return dense_ * r;
}

double power_iteration_ata(const std::vector<SparseRow>& rows, int dim) {
  if (dim <= 0) return 0.0;
  Vec v = Vec::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vec w = Vec::Zero(dim);
    for (const auto& row : rows) {
      const double av = sparse_dot(row, v);
      for (const auto& [j, a] : row) w[j] += a * av;
    }
    const double next = v.dot(w);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    if (it > 0 && std::abs(next - lambda) <= 1e-8 * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

double lambda_for_kappa(double l0, double kappa) {
  if (!(kappa > 1.0)) throw ConfigError("target condition number must be > 1");
  return l0 / (kappa - 1.0);
}

LogisticLoss::LogisticLoss(std::vector<SparseRow> rows, std::vector<double> labels,
                           int dim, double lambda)
    : rows_(std::move(rows)), labels_(std::move(labels)), dim_(dim), lambda_(lambda) {
  if (rows_.size() != labels_.size() || rows_.empty()) {
    throw DimensionError("logistic: rows/labels size mismatch or empty");
  }
  if (lambda_ < 0.0) throw ConfigError("lambda must be >= 0");
  const double n = static_cast<double>(rows_.size());
  l0_ = power_iteration_ata(rows_, dim_) / (4.0 * n);
  for (const auto& row : rows_) {
    max_term_l_ = std::max(max_term_l_, sparse_norm_sq(row) / 4.0 + lambda_);
  }
  // Per-term infimum: the minimizer of log(1+exp(-u)) + lambda u^2 / (2|A_i|^2)
  // lies along A_i, so each f_i^inf is a 1-D convex problem (bisection on the
  // derivative).
  double acc = 0.0;
  for (const auto& row : rows_) {
    const double norm_sq = sparse_norm_sq(row);
    if (norm_sq == 0.0) {
      acc += std::log(2.0);
      continue;
    }
    if (lambda_ == 0.0) continue;  // inf over u -> +inf is 0
    const double c = lambda_ / (2.0 * norm_sq);
    double lo = 0.0;
    double hi = 0.5 / c + 1.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double deriv = neg_sigmoid_neg(mid) + 2.0 * c * mid;
      (deriv < 0.0 ? lo : hi) = mid;
    }
    const double u = 0.5 * (lo + hi);
    acc += log1p_exp_neg(u) + c * u * u;
  }
  mean_term_inf_ = acc / n;
}

double LogisticLoss::value(const Vec& x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    acc += log1p_exp_neg(labels_[i] * sparse_dot(rows_[i], x));
  }
  return acc / static_cast<double>(rows_.size()) + 0.5 * lambda_ * x.squaredNorm();
}

Vec LogisticLoss::gradient(const Vec& x) const {
  Vec g = lambda_ * x;
  const double inv_n = 1.0 / static_cast<double>(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const double coeff = inv_n * labels_[i] * neg_sigmoid_neg(labels_[i] * sparse_dot(rows_[i], x));
    for (const auto& [j, a] : rows_[i]) g[j] += coeff * a;
  }
  return g;
}

Vec LogisticLoss::term_gradient(int term, const Vec& x) const {
  const auto& row = rows_[static_cast<std::size_t>(term)];
  Vec g = lambda_ * x;
  const double coeff = labels_[static_cast<std::size_t>(term)] *
                       neg_sigmoid_neg(labels_[static_cast<std::size_t>(term)] * sparse_dot(row, x));
  for (const auto& [j, a] : row) g[j] += coeff * a;
  return g;
}

std::optional<double> LogisticLoss::mean_term_lower_bound() const { return mean_term_inf_; }

NonconvexLogisticLoss::NonconvexLogisticLoss(std::vector<SparseRow> rows,
                                             std::vector<double> labels, int dim,
                                             double lambda)
    : rows_(std::move(rows)), labels_(std::move(labels)), dim_(dim), lambda_(lambda) {
  if (rows_.size() != labels_.size() || rows_.empty()) {
    throw DimensionError("logistic: rows/labels size mismatch or empty");
  }
  if (lambda_ < 0.0) throw ConfigError("lambda must be >= 0");
  const double n = static_cast<double>(rows_.size());
  l0_ = power_iteration_ata(rows_, dim_) / (4.0 * n);
  for (const auto& row : rows_) {
    max_term_l_ = std::max(max_term_l_, sparse_norm_sq(row) / 4.0 + 2.0 * lambda_);
  }
}

double NonconvexLogisticLoss::value(const Vec& x) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    acc += log1p_exp_neg(labels_[i] * sparse_dot(rows_[i], x));
  }
  double reg = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double sq = x[j] * x[j];
    reg += sq / (1.0 + sq);
  }
  return acc / static_cast<double>(rows_.size()) + lambda_ * reg;
}

Vec NonconvexLogisticLoss::gradient(const Vec& x) const {
  Vec g(dim_);
  for (int j = 0; j < dim_; ++j) {
    const double denom = 1.0 + x[j] * x[j];
    g[j] = lambda_ * 2.0 * x[j] / (denom * denom);
  }
  const double inv_n = 1.0 / static_cast<double>(rows_.size());
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const double coeff = inv_n * labels_[i] * neg_sigmoid_neg(labels_[i] * sparse_dot(rows_[i], x));
    for (const auto& [j, a] : rows_[i]) g[j] += coeff * a;
  }
  return g;
}

Vec NonconvexLogisticLoss::term_gradient(int term, const Vec& x) const {
  const auto& row = rows_[static_cast<std::size_t>(term)];
  Vec g(dim_);
  for (int j = 0; j < dim_; ++j) {
    const double denom = 1.0 + x[j] * x[j];
    g[j] = lambda_ * 2.0 * x[j] / (denom * denom);
  }
  const double coeff = labels_[static_cast<std::size_t>(term)] *
                       neg_sigmoid_neg(labels_[static_cast<std::size_t>(term)] * sparse_dot(row, x));
  for (const auto& [j, a] : row) g[j] += coeff * a;
  return g;
}

MastProblem::MastProblem(LossPtr loss, SketchDistribution dist, Vec shift)
    : loss_(std::move(loss)), dist_(std::move(dist)), shift_(std::move(shift)) {
  if (!loss_) throw ConfigError("mast problem requires a loss");
  if (loss_->dim() != dist_.dim() || loss_->dim() != static_cast<int>(shift_.size())) {
    throw DimensionError("mast problem: loss/dist/shift dims disagree");
  }
  constants_ = dist_.spectral_constants();
}

double MastProblem::sketched_value(const SketchSample& s, const Vec& x) const {
  if (static_cast<int>(x.size()) != dim()) {
    throw DimensionError("sketched_value: x has size " + std::to_string(x.size()) +
                         ", problem dim is " + std::to_string(dim()));
  }
  return loss_->value(shift_ + s.apply(x - shift_));
}

Vec MastProblem::estimator_gradient(const SketchSample& s, const Vec& x) const {
  if (static_cast<int>(x.size()) != dim()) {
    throw DimensionError("estimator_gradient: x has size " + std::to_string(x.size()) +
                         ", problem dim is " + std::to_string(dim()));
  }
  return s.apply_transpose(loss_->gradient(shift_ + s.apply(x - shift_)));
}

double MastProblem::exact_tilde_value(const Vec& x, std::uint64_t limit, Exec exec) const {
  const auto support = dist_.enumerate_support(limit);
  std::vector<double> values(support.size());
  parallel_for(support.size(), exec,
               [&](std::size_t i) { values[i] = sketched_value(support[i].first, x); });
  double acc = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) acc += support[i].second * values[i];
  return acc;
}

Vec MastProblem::exact_tilde_gradient(const Vec& x, std::uint64_t limit, Exec exec) const {
  const auto support = dist_.enumerate_support(limit);
  std::vector<Vec> grads(support.size());
  parallel_for(support.size(), exec,
               [&](std::size_t i) { grads[i] = estimator_gradient(support[i].first, x); });
  Vec acc = Vec::Zero(dim());
  for (std::size_t i = 0; i < support.size(); ++i) {
    accumulate_scaled(acc, support[i].second, grads[i]);
  }
  return acc;
}

McEstimate MastProblem::monte_carlo_tilde_value(const Vec& x, int n_samples,
                                                RngStream& rng, Exec exec) const {
  if (n_samples < 2) throw ConfigError("monte carlo needs at least 2 samples");
  const std::uint64_t sub_master = rng.next_u64();
  std::vector<double> values(static_cast<std::size_t>(n_samples));
  parallel_for(values.size(), exec, [&](std::size_t i) {
    RngStream stream = RngStream::derive(sub_master, i);
    values[i] = sketched_value(dist_.sample(stream), x);
  });
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n_samples);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples))};
}

SandwichBounds mast_sandwich_bounds(const MastProblem& p, const Vec& x_star,
                                    const Vec& x_d_star) {
  const double mu_f = p.loss().strong_convexity();
  if (mu_f <= 0.0) {
    throw UnsupportedError("sandwich bounds require a strongly convex loss");
  }
  const double l_f = p.loss().smoothness();
  const auto& c = p.constants();
  SandwichBounds b;
  b.lower = p.loss().value(x_star);
  b.upper = b.lower +
            0.5 * (c.l_d - 1.0) * l_f * (x_star - p.shift()).squaredNorm() -
            0.5 * (c.mu_d - 1.0) * mu_f * (x_d_star - p.shift()).squaredNorm();
  b.f_at_xd = p.loss().value(x_d_star);
  return b;
}

AbcEstimator AbcEstimator::bounded_variance(double sigma2) {
  if (sigma2 < 0.0) throw ConfigError("noise variance must be >= 0");
  return AbcEstimator(Mode::bounded_variance, sigma2, 0);
}

AbcEstimator AbcEstimator::uniform_subsample(int batch) {
  if (batch < 1) throw ConfigError("subsample batch must be >= 1");
  return AbcEstimator(Mode::uniform_subsample, 0.0, batch);
}

Vec AbcEstimator::estimate(const MastProblem& p, const SketchSample& s, const Vec& x,
                           RngStream& rng) const {
  switch (mode_) {
    case Mode::exact:
      return p.estimator_gradient(s, x);
    case Mode::bounded_variance: {
      Vec g = p.estimator_gradient(s, x);
      if (sigma2_ > 0.0) {
        // Total noise energy E|w|^2 = sigma2, split evenly per coordinate.
        const double scale = std::sqrt(sigma2_ / static_cast<double>(g.size()));
        for (int i = 0; i < g.size(); ++i) g[i] += scale * rng.normal();
      }
      return g;
    }
    case Mode::uniform_subsample: {
      const int n = p.loss().num_terms();
      if (n == 0) {
        throw UnsupportedError("subsampling estimator needs a finite-sum loss");
      }
      if (batch_ > n) {
        throw ConfigError("subsample batch " + std::to_string(batch_) +
                          " exceeds term count " + std::to_string(n));
      }
      const Vec y = p.shift() + s.apply(x - p.shift());
      Vec g = Vec::Zero(p.dim());
      const double w = 1.0 / static_cast<double>(batch_);
      for (int i : rng.subset_without_replacement(n, batch_)) {
        accumulate_scaled(g, w, p.loss().term_gradient(i, y));
      }
      return s.apply_transpose(g);
    }
  }
  throw Error("unreachable estimator mode");
}

AbcEstimator::Constants AbcEstimator::abc_constants(const Loss& loss,
                                                    std::optional<double> f_inf_hint) const {
  Constants c;
  switch (mode_) {
    case Mode::exact:
      return c;  // (0, 1, 0)
    case Mode::bounded_variance:
      c.c = sigma2_;
      return c;
    case Mode::uniform_subsample: {
      c.a = loss.max_term_smoothness();
      // B is not stated for pure subsampling; recorded as 0 by convention.
      c.b = 0.0;
      const auto f_inf = f_inf_hint.has_value() ? f_inf_hint : loss.lower_bound();
      const auto mean_term_inf = loss.mean_term_lower_bound();
      if (f_inf.has_value() && mean_term_inf.has_value()) {
        c.c = 2.0 * c.a * (*f_inf - *mean_term_inf);
      } else {
        c.c = std::nullopt;
      }
      return c;
    }
  }
  throw Error("unreachable estimator mode");
}

}  // namespace mast
