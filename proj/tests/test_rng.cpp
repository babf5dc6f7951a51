#include <doctest.h>

#include <set>
#include <vector>

#include "mast/rng.hpp"

using namespace mast;

TEST_CASE("derived streams are reproducible and tag-sensitive") {
  RngStream a = RngStream::derive(42, 7, 3);
  RngStream b = RngStream::derive(42, 7, 3);
  RngStream c = RngStream::derive(42, 7, 4);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff = any_diff || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform_below stays in range and covers small supports") {
  RngStream rng(1);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 200; ++i) seen.insert(rng.uniform_below(5));
  CHECK(seen.size() == 5);
  CHECK(*seen.rbegin() == 4);
}

TEST_CASE("subset_without_replacement is sorted, exact size, in range") {
  RngStream rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const auto idx = rng.subset_without_replacement(17, 6);
    CHECK(idx.size() == 6);
    for (std::size_t i = 0; i + 1 < idx.size(); ++i) CHECK(idx[i] < idx[i + 1]);
    CHECK(idx.front() >= 0);
    CHECK(idx.back() < 17);
  }
  // full subset is the identity permutation after sorting
  const auto all = rng.subset_without_replacement(9, 9);
  for (int i = 0; i < 9; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("subset sampling is close to uniform over elements") {
  RngStream rng(3);
  std::vector<int> counts(10, 0);
  const int reps = 20000;
  for (int rep = 0; rep < reps; ++rep) {
    for (int i : rng.subset_without_replacement(10, 3)) counts[static_cast<std::size_t>(i)]++;
  }
  // each element appears with probability 3/10
  for (int c : counts) {
    CHECK(c > reps * 0.3 - 4 * std::sqrt(reps * 0.3 * 0.7));
    CHECK(c < reps * 0.3 + 4 * std::sqrt(reps * 0.3 * 0.7));
  }
}

TEST_CASE("normal moments") {
  RngStream rng(4);
  const int n = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::abs(sum / n) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(sum_sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}
