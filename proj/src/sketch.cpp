#include "mast/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mast/errors.hpp"

namespace mast {

Vec SketchSample::apply(const Vec& v) const {
  if (static_cast<int>(v.size()) != dim) {
    throw DimensionError("sketch apply: vector has size " + std::to_string(v.size()) +
                         ", sketch dim is " + std::to_string(dim));
  }
  Vec out = Vec::Zero(dim);
  for (const auto& [i, c] : entries) out[i] = c * v[i];
  return out;
}

Vec SketchSample::diagonal() const {
  Vec c = Vec::Zero(dim);
  for (const auto& [i, v] : entries) c[i] = v;
  return c;
}

double SketchSample::max_scale_sq() const {
  double m = 0.0;
  for (const auto& [i, c] : entries) m = std::max(m, c * c);
  return m;
}

double SketchSample::min_scale_sq() const {
  if (static_cast<int>(entries.size()) < dim) return 0.0;
  double m = std::numeric_limits<double>::infinity();
  for (const auto& [i, c] : entries) m = std::min(m, c * c);
  return m;
}

SketchSample SketchSample::identity(int d) {
  SketchSample s;
  s.dim = d;
  s.entries.reserve(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) s.entries.emplace_back(i, 1.0);
  return s;
}

SketchSample SketchSample::from_diagonal(const Vec& c) {
  SketchSample s;
  s.dim = static_cast<int>(c.size());
  for (int i = 0; i < s.dim; ++i) {
    const double v = c[i];
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError("sketch scale at coordinate " + std::to_string(i) +
                        " must be finite and non-negative");
    }
    if (v != 0.0) s.entries.emplace_back(i, v);
  }
  return s;
}

SketchDistribution SketchDistribution::identity(int d) {
  if (d <= 0) throw ConfigError("identity sketch requires positive dimension");
  SketchDistribution dist;
  dist.kind_ = Kind::identity;
  dist.dim_ = d;
  return dist;
}

SketchDistribution SketchDistribution::bernoulli_independent(Vec probs) {
  if (probs.size() == 0) throw ConfigError("bernoulli sketch requires at least one probability");
  for (int i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p > 0.0) || p > 1.0) {
      throw ConfigError("bernoulli probability p[" + std::to_string(i) + "] = " +
                        std::to_string(p) + " must lie in (0, 1]");
    }
  }
  SketchDistribution dist;
  dist.kind_ = Kind::bernoulli;
  dist.dim_ = static_cast<int>(probs.size());
  dist.probs_ = std::move(probs);
  return dist;
}

SketchDistribution SketchDistribution::rand_k(int d, int k) {
  if (d <= 0) throw ConfigError("rand-k sketch requires positive dimension");
  if (k < 1 || k > d) {
    throw ConfigError("rand-k requires 1 <= K <= d, got K = " + std::to_string(k) +
                      ", d = " + std::to_string(d));
  }
  SketchDistribution dist;
  dist.kind_ = Kind::rand_k;
  dist.dim_ = d;
  dist.k_ = k;
  return dist;
}

SketchDistribution SketchDistribution::finite_set(std::vector<SketchSample> members) {
  if (members.empty()) throw ConfigError("finite sketch set must not be empty");
  const int d = members.front().dim;
  for (const auto& m : members) {
    if (m.dim != d) throw ConfigError("finite sketch set members must share dim");
  }
  SketchDistribution dist;
  dist.kind_ = Kind::finite_set;
  dist.dim_ = d;
  dist.members_ = std::move(members);
  return dist;
}

SketchSample SketchDistribution::sample(RngStream& rng) const {
  switch (kind_) {
    case Kind::identity:
      return SketchSample::identity(dim_);
    case Kind::bernoulli: {
      SketchSample s;
      s.dim = dim_;
      for (int i = 0; i < dim_; ++i) {
        if (rng.bernoulli(probs_[i])) s.entries.emplace_back(i, 1.0 / probs_[i]);
      }
      return s;
    }
    case Kind::rand_k: {
      SketchSample s;
      s.dim = dim_;
      const double scale = static_cast<double>(dim_) / static_cast<double>(k_);
      for (int i : rng.subset_without_replacement(dim_, k_)) s.entries.emplace_back(i, scale);
      return s;
    }
    case Kind::finite_set:
      return members_[rng.uniform_below(members_.size())];
  }
  throw Error("unreachable sketch kind");
}

SpectralConstants SketchDistribution::spectral_constants() const {
  SpectralConstants c;
  switch (kind_) {
    case Kind::identity:
      return c;
    case Kind::bernoulli: {
      const double p_min = probs_.minCoeff();
      const double p_max = probs_.maxCoeff();
      c.l_d = 1.0 / p_min;
      c.mu_d = 1.0 / p_max;
      c.l_s_max = 1.0 / (p_min * p_min);
      return c;
    }
    case Kind::rand_k: {
      const double ratio = static_cast<double>(dim_) / static_cast<double>(k_);
      c.l_d = ratio;
      c.mu_d = ratio;
      c.l_s_max = ratio * ratio;
      return c;
    }
    case Kind::finite_set: {
      Vec second = Vec::Zero(dim_);
      const double w = 1.0 / static_cast<double>(members_.size());
      double worst = 0.0;
      for (const auto& m : members_) {
        for (const auto& [i, v] : m.entries) second[i] += w * v * v;
        worst = std::max(worst, m.max_scale_sq());
      }
      c.l_d = second.maxCoeff();
      c.mu_d = second.minCoeff();
      c.l_s_max = worst;
      return c;
    }
  }
  throw Error("unreachable sketch kind");
}

std::optional<std::uint64_t> binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    const std::uint64_t mul = static_cast<std::uint64_t>(n - k + i);
    if (r > std::numeric_limits<std::uint64_t>::max() / mul) return std::nullopt;
    r = r * mul / static_cast<std::uint64_t>(i);
  }
  return r;
}

std::optional<std::uint64_t> SketchDistribution::support_size() const {
  switch (kind_) {
    case Kind::identity:
      return 1;
    case Kind::bernoulli: {
      int free_coords = 0;
      for (int i = 0; i < dim_; ++i) {
        if (probs_[i] < 1.0) ++free_coords;
      }
      if (free_coords >= 64) return std::nullopt;
      return std::uint64_t{1} << free_coords;
    }
    case Kind::rand_k:
      return binomial_coefficient(dim_, k_);
    case Kind::finite_set:
      return members_.size();
  }
  throw Error("unreachable sketch kind");
}

namespace {

// Emits all K-subsets of {0..d-1} in lexicographic order.
template <class Emit>
void for_each_combination(int d, int k, Emit&& emit) {
  std::vector<int> idx(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (;;) {
    emit(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == d - k + i) --i;
    if (i < 0) break;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) {
      idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
}

}  // namespace

std::vector<std::pair<SketchSample, double>> SketchDistribution::enumerate_support(
    std::uint64_t limit) const {
  const auto size = support_size();
  if (!size.has_value() || *size > limit) {
    throw SupportTooLargeError(
        size.value_or(std::numeric_limits<std::uint64_t>::max()), limit);
  }
  std::vector<std::pair<SketchSample, double>> out;
  out.reserve(static_cast<std::size_t>(*size));
  switch (kind_) {
    case Kind::identity:
      out.emplace_back(SketchSample::identity(dim_), 1.0);
      return out;
    case Kind::bernoulli: {
      // Coordinates with p_i = 1 are always present; the remaining ones are
      // enumerated over all inclusion patterns, lexicographic by support set.
      std::vector<int> free_coords;
      for (int i = 0; i < dim_; ++i) {
        if (probs_[i] < 1.0) free_coords.push_back(i);
      }
      const int m = static_cast<int>(free_coords.size());
      std::vector<std::vector<int>> patterns;
      patterns.reserve(static_cast<std::size_t>(*size));
      std::vector<int> prefix;
      // Recursive lexicographic generation over the free coordinates.
      auto gen = [&](auto&& self, int start) -> void {
        patterns.push_back(prefix);
        for (int j = start; j < m; ++j) {
          prefix.push_back(j);
          self(self, j + 1);
          prefix.pop_back();
        }
      };
      gen(gen, 0);
      for (const auto& pattern : patterns) {
        SketchSample s;
        s.dim = dim_;
        double prob = 1.0;
        std::vector<bool> included(static_cast<std::size_t>(m), false);
        for (int j : pattern) included[static_cast<std::size_t>(j)] = true;
        int free_rank = 0;
        for (int i = 0; i < dim_; ++i) {
          if (probs_[i] >= 1.0) {
            s.entries.emplace_back(i, 1.0);
          } else {
            if (included[static_cast<std::size_t>(free_rank)]) {
              s.entries.emplace_back(i, 1.0 / probs_[i]);
              prob *= probs_[i];
            } else {
              prob *= 1.0 - probs_[i];
            }
            ++free_rank;
          }
        }
        out.emplace_back(std::move(s), prob);
      }
      return out;
    }
    case Kind::rand_k: {
      const double prob = 1.0 / static_cast<double>(*size);
      const double scale = static_cast<double>(dim_) / static_cast<double>(k_);
      for_each_combination(dim_, k_, [&](const std::vector<int>& idx) {
        SketchSample s;
        s.dim = dim_;
        for (int i : idx) s.entries.emplace_back(i, scale);
        out.emplace_back(std::move(s), prob);
      });
      return out;
    }
    case Kind::finite_set: {
      const double prob = 1.0 / static_cast<double>(members_.size());
      for (const auto& m : members_) out.emplace_back(m, prob);
      return out;
    }
  }
  throw Error("unreachable sketch kind");
}

Vec SketchDistribution::second_moment_diagonal() const {
  switch (kind_) {
    case Kind::identity:
      return Vec::Ones(dim_);
    case Kind::bernoulli:
      return probs_.cwiseInverse();
    case Kind::rand_k:
      return Vec::Constant(dim_, static_cast<double>(dim_) / static_cast<double>(k_));
    case Kind::finite_set: {
      Vec second = Vec::Zero(dim_);
      const double w = 1.0 / static_cast<double>(members_.size());
      for (const auto& m : members_) {
        for (const auto& [i, v] : m.entries) second[i] += w * v * v;
      }
      return second;
    }
  }
  throw Error("unreachable sketch kind");
}

bool SketchDistribution::has_uniform_finite_support(std::uint64_t limit) const {
  switch (kind_) {
    case Kind::identity:
    case Kind::rand_k:
    case Kind::finite_set: {
      const auto size = support_size();
      return size.has_value() && *size <= limit;
    }
    case Kind::bernoulli: {
      // Member probabilities p^k (1-p)^(d-k) are not uniform across support
      // sizes, so Bernoulli sketches are excluded even when enumerable.
      return false;
    }
  }
  return false;
}

}  // namespace mast
