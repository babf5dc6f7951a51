#ifndef MAST_SKETCH_HPP
#define MAST_SKETCH_HPP

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mast/rng.hpp"

namespace mast {

using Vec = Eigen::VectorXd;

// One realized diagonal sketch operator: a sparse map coordinate -> scale.
// Coordinates outside the support act as zeros. Diagonal sketches are the
// only concrete class implemented; apply/apply_transpose are kept distinct
// so non-diagonal sketches can be added without an API change.
struct SketchSample {
  int dim = 0;
  // Sorted by coordinate, scales finite and strictly positive (explicit
  // zeros are omitted).
  std::vector<std::pair<int, double>> entries;

  Vec apply(const Vec& v) const;
  Vec apply_transpose(const Vec& v) const { return apply(v); }

  // Dense diagonal (c_1, ..., c_d) with zeros filled in.
  Vec diagonal() const;

  // lambda_max(S^T S) for this member: max squared scale.
  double max_scale_sq() const;
  // lambda_min(S^T S): zero whenever some coordinate is absent.
  double min_scale_sq() const;

  int nnz() const { return static_cast<int>(entries.size()); }

  static SketchSample identity(int d);
  static SketchSample from_diagonal(const Vec& c);

  bool operator==(const SketchSample& other) const {
    return dim == other.dim && entries == other.entries;
  }
};

// Extreme eigenvalues of E[S^T S] over the distribution (l_d, mu_d) and the
// worst-case eigenvalue over the support (l_s_max). Under unbiasedness
// l_s_max >= l_d >= mu_d >= 1.
struct SpectralConstants {
  double l_d = 1.0;
  double mu_d = 1.0;
  double l_s_max = 1.0;

  double kappa_d() const { return l_d / mu_d; }
};

inline constexpr std::uint64_t kDefaultSupportLimit = 10000;

// A samplable family of diagonal sketches with E[S] = I.
class SketchDistribution {
 public:
  enum class Kind { identity, bernoulli, rand_k, finite_set };

  // Empty distribution (dim 0); use the factories for a valid one.
  SketchDistribution() = default;

  static SketchDistribution identity(int d);
  // Independent scaled-Bernoulli coordinates: c_i = 1/p_i w.p. p_i, else 0.
  // Requires every p_i in (0, 1]; p_i = 1 makes the coordinate
  // deterministic, p_i = 0 is rejected.
  static SketchDistribution bernoulli_independent(Vec probs);
  // Uniform K-of-d coordinate selector scaled by d/K.
  static SketchDistribution rand_k(int d, int k);
  // Uniform over an explicit member list; all members must share dim.
  static SketchDistribution finite_set(std::vector<SketchSample> members);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  int rand_k_k() const { return k_; }
  const Vec& bernoulli_probs() const { return probs_; }
  const std::vector<SketchSample>& members() const { return members_; }

  SketchSample sample(RngStream& rng) const;

  // Closed forms where available; exact enumeration for finite sets.
  SpectralConstants spectral_constants() const;

  // Number of positive-probability support members, or nullopt on overflow.
  std::optional<std::uint64_t> support_size() const;

  // Full support with probabilities (sum 1 within 1e-12), ordered
  // lexicographically by support set. Throws SupportTooLargeError with the
  // exact count when the support exceeds `limit`.
  std::vector<std::pair<SketchSample, double>> enumerate_support(
      std::uint64_t limit = kDefaultSupportLimit) const;

  // Closed-form diagonal of E[S^T S] (the second moment of each scale).
  Vec second_moment_diagonal() const;

  // True when the support is finite and uniformly weighted, as required by
  // the variance-reduced solvers.
  bool has_uniform_finite_support(std::uint64_t limit = kDefaultSupportLimit) const;

 private:
  Kind kind_ = Kind::identity;
  int dim_ = 0;
  int k_ = 0;           // rand_k
  Vec probs_;           // bernoulli
  std::vector<SketchSample> members_;  // finite_set
};

// C(n, k) with overflow detection.
std::optional<std::uint64_t> binomial_coefficient(int n, int k);

}  // namespace mast

#endif  // MAST_SKETCH_HPP
