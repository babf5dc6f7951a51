#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "mast/data.hpp"

using namespace mast;

namespace {
Dataset synth(int n, int d, std::uint64_t seed) {
  return make_synthetic_dataset(n, d, seed, std::min(4, d), 0.1);
}
}  // namespace

TEST_CASE("fnv1a64 reference vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("libsvm parsing maps labels and 1-based indices") {
  const Dataset ds = parse_libsvm("-1 3:1 11:1\n");
  REQUIRE(ds.n() == 1);
  CHECK(ds.labels[0] == -1.0);
  REQUIRE(ds.rows[0].size() == 2);
  CHECK(ds.rows[0][0] == std::pair<int, double>{2, 1.0});
  CHECK(ds.rows[0][1] == std::pair<int, double>{10, 1.0});
  CHECK(ds.d == 11);
}

TEST_CASE("libsvm parsing: empty feature lists and 0/1 labels") {
  const Dataset ds = parse_libsvm("+1\n-1 1:0.5\n");
  CHECK(ds.n() == 2);
  CHECK(ds.d == 1);
  CHECK(ds.rows[0].empty());

  const Dataset zo = parse_libsvm("0 1:2\n1 2:3\n");
  CHECK(zo.labels[0] == -1.0);
  CHECK(zo.labels[1] == 1.0);
}

TEST_CASE("libsvm parsing rejects malformed input with line numbers") {
  const auto fails_with = [](const char* text, const char* needle) {
    try {
      parse_libsvm(text);
      FAIL("expected IoError for: ", text);
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  fails_with("1 2:1 2:1\n", "line 1");          // duplicate index
  fails_with("1 1:1\n1 3:1 2:1\n", "line 2");   // non-increasing
  fails_with("2 1:1\n", "label");               // unknown label alphabet
  fails_with("1 0:1\n", "indices start at 1");  // zero index
  fails_with("1 x:1\n", "index");
  fails_with("1 1:z\n", "value");
  fails_with("abc\n", "label");
  CHECK_THROWS_AS(parse_libsvm(""), IoError);
  CHECK_THROWS_AS(parse_libsvm("\n  \n"), IoError);
}

TEST_CASE("serialize/parse round trip preserves the content hash") {
  const Dataset ds = synth(50, 12, 5);
  const Dataset again = parse_libsvm(ds.serialize());
  CHECK(again.content_hash == ds.content_hash);
  CHECK(again.d == ds.d);
  CHECK(again.rows == ds.rows);
  CHECK(again.labels == ds.labels);

  // fractional values survive the round trip exactly
  const Dataset fr = parse_libsvm("+1 1:0.30000000000000004 3:-2.5e-07\n");
  CHECK(parse_libsvm(fr.serialize()).content_hash == fr.content_hash);
  CHECK(fr.rows[0][0].second == 0.30000000000000004);
}

TEST_CASE("split sizes are within one row of the fractions") {
  const Dataset ds4 = synth(4, 8, 1);
  const Split s4 = split_dataset(ds4, {0.75, 0.25}, 3);
  CHECK(s4.parts[0].size() == 3);
  CHECK(s4.parts[1].size() == 1);

  const Dataset ds100 = synth(100, 8, 2);
  const Split s100 = split_dataset(ds100, {0.7, 0.18, 0.12}, 3);
  CHECK(s100.parts[0].size() == 70);
  CHECK(s100.parts[1].size() == 18);
  CHECK(s100.parts[2].size() == 12);
}

TEST_CASE("split is deterministic, disjoint and covering") {
  const Dataset ds = synth(37, 8, 4);
  const Split a = split_dataset(ds, {0.6, 0.4}, 9);
  const Split b = split_dataset(ds, {0.6, 0.4}, 9);
  CHECK(a.parts == b.parts);
  const Split c = split_dataset(ds, {0.6, 0.4}, 10);
  CHECK(a.parts != c.parts);

  std::set<int> seen;
  for (const auto& part : a.parts) {
    for (int i : part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 37);

  CHECK_THROWS_AS(split_dataset(ds, {0.6, 0.3}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(ds, {1.2, -0.2}, 1), ConfigError);
}

TEST_CASE("accuracy: tie rule, perfect separation, symmetry, scaling") {
  const Dataset ds = parse_libsvm("+1 1:1\n-1 2:1\n");
  const std::vector<int> idx = {0, 1};
  CHECK(accuracy(ds, idx, Vec::Zero(2)) == 0.0);  // zero margins count as errors

  Vec sep(2);
  sep << 1.0, -1.0;
  CHECK(accuracy(ds, idx, sep) == 1.0);
  CHECK(accuracy(ds, idx, 7.5 * sep) == 1.0);  // invariant under positive scaling
  CHECK(accuracy(ds, idx, -sep) == 0.0);       // sign flip maps a -> 1 - a

  const Dataset big = synth(60, 10, 6);
  std::vector<int> all(60);
  for (int i = 0; i < 60; ++i) all[static_cast<std::size_t>(i)] = i;
  RngStream rng(7);
  Vec x(10);
  for (int i = 0; i < 10; ++i) x[i] = rng.normal();
  // no zero margins for a generic x, so the sign symmetry is exact
  const double a = accuracy(big, all, x);
  CHECK(accuracy(big, all, -x) == doctest::Approx(1.0 - a).epsilon(1e-12));

  CHECK_THROWS_AS(accuracy(ds, {}, sep), ConfigError);
}

TEST_CASE("synthetic fixtures are deterministic in the seed") {
  CHECK(make_synthetic_dataset(40, 16, 3).content_hash ==
        make_synthetic_dataset(40, 16, 3).content_hash);
  CHECK(make_synthetic_dataset(40, 16, 3).content_hash !=
        make_synthetic_dataset(40, 16, 4).content_hash);
  CHECK(make_grouped_synthetic_dataset(40, 50, 3).content_hash ==
        make_grouped_synthetic_dataset(40, 50, 3).content_hash);
}

TEST_CASE("shipped fixture files match the generators") {
  const char* env = std::getenv("MAST_DATA_DIR");
  const std::string dir = env != nullptr ? env : "data";
  const Dataset toy = load_libsvm_file(dir + "/toy.libsvm");
  CHECK(toy.n() >= 4);

  const Dataset shipped =
      load_libsvm_file(dir + "/synthetic_grouped_4000x100.libsvm");
  const Dataset generated = make_grouped_synthetic_dataset(4000, 100, 21);
  CHECK(shipped.content_hash == generated.content_hash);

  const Dataset sweep_file =
      load_libsvm_file(dir + "/synthetic_400x100.libsvm");
  CHECK(sweep_file.content_hash == make_synthetic_dataset(400, 100, 8).content_hash);
}

TEST_CASE("append_intercept adds a trailing all-ones column") {
  const Dataset ds = parse_libsvm("+1 1:1\n-1 2:1\n");
  const Dataset with = append_intercept(ds);
  CHECK(with.d == 3);
  for (const auto& row : with.rows) {
    CHECK(row.back() == std::pair<int, double>{2, 1.0});
  }
}

TEST_CASE("subset_dataset keeps rows in index order") {
  const Dataset ds = synth(10, 8, 11);
  const Dataset sub = subset_dataset(ds, {7, 2});
  CHECK(sub.n() == 2);
  CHECK(sub.rows[0] == ds.rows[7]);
  CHECK(sub.rows[1] == ds.rows[2]);
  CHECK(sub.d == ds.d);
}
