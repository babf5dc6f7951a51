#include "mast/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mast/rng.hpp"

namespace mast {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw IoError("libsvm parse error at line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string Dataset::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += labels[i] > 0 ? "+1" : "-1";
    for (const auto& [j, v] : rows[i]) {
      out += ' ';
      out += std::to_string(j + 1);
      out += ':';
      append_double(out, v);
    }
    out += '\n';
  }
  return out;
}

Dataset parse_libsvm(std::string_view text) {
  Dataset ds;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_line = false;
  while (pos <= text.size()) {
    if (pos == text.size()) break;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    // trim trailing carriage return
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    // skip blank lines
    std::size_t first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    line.remove_prefix(first);
    saw_line = true;

    std::size_t sp = line.find_first_of(" \t");
    std::string_view label_tok = line.substr(0, sp);
    double label = 0.0;
    {
      const char* b = label_tok.data();
      const char* e = b + label_tok.size();
      if (!label_tok.empty() && label_tok.front() == '+') ++b;
      const auto res = std::from_chars(b, e, label);
      if (res.ec != std::errc() || res.ptr != e) parse_fail(line_no, "bad label token");
    }
    if (label == -1.0 || label == 0.0) {
      label = -1.0;
    } else if (label == 1.0) {
      label = 1.0;
    } else {
      parse_fail(line_no, "label must be one of {-1, 0, +1}");
    }

    SparseRow row;
    int prev_index = 0;
    std::string_view rest = sp == std::string_view::npos ? std::string_view() : line.substr(sp);
    std::size_t rp = 0;
    while (rp < rest.size()) {
      while (rp < rest.size() && (rest[rp] == ' ' || rest[rp] == '\t')) ++rp;
      if (rp >= rest.size()) break;
      std::size_t end = rest.find_first_of(" \t", rp);
      if (end == std::string_view::npos) end = rest.size();
      std::string_view tok = rest.substr(rp, end - rp);
      rp = end;
      std::size_t colon = tok.find(':');
      if (colon == std::string_view::npos) parse_fail(line_no, "feature token without ':'");
      int index = 0;
      {
        const auto res = std::from_chars(tok.data(), tok.data() + colon, index);
        if (res.ec != std::errc() || res.ptr != tok.data() + colon) {
          parse_fail(line_no, "bad feature index");
        }
      }
      if (index < 1) parse_fail(line_no, "feature indices start at 1");
      if (index <= prev_index) parse_fail(line_no, "feature indices must be strictly increasing");
      prev_index = index;
      double v = 0.0;
      {
        const char* b = tok.data() + colon + 1;
        const char* e = tok.data() + tok.size();
        const auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc() || res.ptr != e) parse_fail(line_no, "bad feature value");
      }
      if (!std::isfinite(v)) parse_fail(line_no, "non-finite feature value");
      if (v != 0.0) row.emplace_back(index - 1, v);
      ds.d = std::max(ds.d, index);
    }
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(label);
  }
  if (!saw_line) throw IoError("libsvm parse error: empty input");
  ds.content_hash = fnv1a64(ds.serialize());
  return ds;
}

Dataset load_libsvm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_libsvm(buf.str());
}

Dataset append_intercept(const Dataset& ds) {
  Dataset out = ds;
  out.d = ds.d + 1;
  for (auto& row : out.rows) row.emplace_back(out.d - 1, 1.0);
  out.content_hash = fnv1a64(out.serialize());
  return out;
}

Split split_dataset(const Dataset& ds, const std::vector<double>& fractions,
                    std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("split requires at least one fraction");
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ConfigError("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
  }
  const int n = ds.n();
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  RngStream rng = RngStream::derive(ds.content_hash, seed, 0x5971f);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  Split split;
  split.seed = seed;
  split.fractions = fractions;
  double cum = 0.0;
  int start = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    cum += fractions[k];
    const int end = k + 1 == fractions.size()
                        ? n
                        : static_cast<int>(std::llround(cum * static_cast<double>(n)));
    split.parts.emplace_back(perm.begin() + start, perm.begin() + end);
    start = end;
  }
  return split;
}

double accuracy(const Dataset& ds, const std::vector<int>& idx, const Vec& x) {
  if (idx.empty()) throw ConfigError("accuracy over an empty index set");
  int correct = 0;
  for (int i : idx) {
    const double margin = sparse_dot(ds.rows[static_cast<std::size_t>(i)], x) *
                          ds.labels[static_cast<std::size_t>(i)];
    if (margin > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

Dataset make_synthetic_dataset(int n, int d, std::uint64_t seed, int row_nnz,
                               double label_noise) {
  if (n < 1 || d < 1 || row_nnz < 1 || row_nnz > d) {
    throw ConfigError("synthetic dataset parameters out of range");
  }
  RngStream rng = RngStream::derive(seed, 0xda7a);
  // Sparse binary rows with a planted weight vector, heavier on the first
  // quarter of the features.
  Vec w(d);
  for (int j = 0; j < d; ++j) {
    w[j] = rng.normal() * (j < d / 4 ? 2.0 : 0.5);
  }
  Dataset ds;
  ds.d = d;
  ds.rows.reserve(static_cast<std::size_t>(n));
  ds.labels.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SparseRow row;
    for (int j : rng.subset_without_replacement(d, row_nnz)) row.emplace_back(j, 1.0);
    double margin = sparse_dot(row, w);
    if (rng.bernoulli(label_noise)) margin = -margin;
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(margin >= 0.0 ? 1.0 : -1.0);
  }
  ds.content_hash = fnv1a64(ds.serialize());
  return ds;
}

Dataset make_grouped_synthetic_dataset(int n, int d, std::uint64_t seed,
                                       int active_groups, double label_noise) {
  constexpr int kCopies = 5;
  if (n < 1 || d < kCopies) throw ConfigError("grouped dataset parameters out of range");
  const int groups = d / kCopies;
  if (active_groups < 1 || active_groups > groups) {
    throw ConfigError("active_groups out of range");
  }
  RngStream rng = RngStream::derive(seed, 0xda7a);
  // Binary features with planted redundancy: each latent signal has one
  // reliable indicator feature and four weaker backup copies. Models that
  // concentrate on the reliable copies are accurate but fragile under
  // random feature sparsification.
  Vec w(groups);
  for (int g = 0; g < groups; ++g) {
    const double mag = 0.6 + rng.uniform01();
    w[g] = rng.bernoulli(0.5) ? mag : -mag;
  }
  Dataset ds;
  ds.d = d;
  ds.rows.reserve(static_cast<std::size_t>(n));
  ds.labels.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto active = rng.subset_without_replacement(groups, active_groups);
    std::vector<bool> is_active(static_cast<std::size_t>(groups), false);
    double margin = 0.0;
    for (int g : active) {
      is_active[static_cast<std::size_t>(g)] = true;
      margin += w[g];
    }
    SparseRow row;
    for (int g = 0; g < groups; ++g) {
      const bool a = is_active[static_cast<std::size_t>(g)];
      for (int c = 0; c < kCopies; ++c) {
        const double p = a ? (c == 0 ? 0.95 : 0.5) : 0.02;
        if (rng.bernoulli(p)) row.emplace_back(kCopies * g + c, 1.0);
      }
    }
    margin += 0.2 * rng.normal();
    double label = margin >= 0.0 ? 1.0 : -1.0;
    if (rng.bernoulli(label_noise)) label = -label;
    ds.rows.push_back(std::move(row));
    ds.labels.push_back(label);
  }
  ds.content_hash = fnv1a64(ds.serialize());
  return ds;
}

Dataset subset_dataset(const Dataset& ds, const std::vector<int>& idx) {
  Dataset out;
  out.d = ds.d;
  out.rows.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (int i : idx) {
    out.rows.push_back(ds.rows[static_cast<std::size_t>(i)]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
  }
  out.content_hash = fnv1a64(out.serialize());
  return out;
}

}  // namespace mast
