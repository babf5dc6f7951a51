#ifndef MAST_DATA_HPP
#define MAST_DATA_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mast/objective.hpp"

namespace mast {

// FNV-1a 64-bit digest; documented so content hashes are portable.
std::uint64_t fnv1a64(std::string_view bytes);

// A parsed classification dataset. Feature indices are 1-based in the
// LibSVM source and 0-based internally; labels are normalized to {-1, +1}.
struct Dataset {
  std::vector<SparseRow> rows;
  std::vector<double> labels;  // each -1.0 or +1.0
  int d = 0;                   // max feature index seen
  std::uint64_t content_hash = 0;  // FNV-1a 64 over the canonical serialization

  int n() const { return static_cast<int>(rows.size()); }

  // Canonical text form: "<label> <idx>:<value> ...\n" with labels printed
  // as -1/+1, 1-based ascending indices and shortest round-trip doubles.
  std::string serialize() const;
};

// Parses LibSVM text: one sample per line, label then index:value pairs with
// strictly increasing 1-based indices. Labels may be {-1,+1} or {0,1} (0
// maps to -1); other label alphabets are rejected. Errors carry the 1-based
// line number.
Dataset parse_libsvm(std::string_view text);

Dataset load_libsvm_file(const std::string& path);

// Appends a constant-1 feature to every row (optional intercept column).
Dataset append_intercept(const Dataset& ds);

// Deterministic shuffle-and-slice split. Part sizes are within one row of
// n * fraction; the permutation stream is derived from (content_hash, seed).
struct Split {
  std::vector<std::vector<int>> parts;
  std::uint64_t seed = 0;
  std::vector<double> fractions;

  const std::vector<int>& train() const { return parts.at(0); }
  const std::vector<int>& validation() const { return parts.at(1); }
  const std::vector<int>& test() const { return parts.back(); }
};

Split split_dataset(const Dataset& ds, const std::vector<double>& fractions,
                    std::uint64_t seed);

// Fraction of rows in `idx` with sign(<A_i, x>) * b_i > 0. A zero margin
// counts as incorrect, so accuracy(x = 0) is 0.
double accuracy(const Dataset& ds, const std::vector<int>& idx, const Vec& x);

// Deterministic synthetic binary-classification fixtures in the style of
// the LibSVM adult subsets: sparse binary features, planted weights, a small
// label-noise rate.
Dataset make_synthetic_dataset(int n, int d, std::uint64_t seed, int row_nnz = 12,
                               double label_noise = 0.05);

// Variant with redundant feature groups (one reliable indicator plus backup
// copies per latent signal); used by the sparsification-robustness study.
Dataset make_grouped_synthetic_dataset(int n, int d, std::uint64_t seed,
                                       int active_groups = 5,
                                       double label_noise = 0.03);

// Restricts a dataset to the given row indices.
Dataset subset_dataset(const Dataset& ds, const std::vector<int>& idx);

}  // namespace mast

#endif  // MAST_DATA_HPP
