#ifndef MAST_ERRORS_HPP
#define MAST_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mast {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Vector/matrix shape disagreement between arguments.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// Invalid construction parameters or configuration values. `path` points at
// the offending config field when the error comes from file parsing.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string path = "")
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// Requested an exact enumeration of a sketch support that exceeds the limit.
// Carries the exact member count so callers can report or fall back to
// Monte-Carlo estimation.
class SupportTooLargeError : public Error {
 public:
  SupportTooLargeError(std::uint64_t count, std::uint64_t limit)
      : Error("sketch support has " + std::to_string(count) +
              " members, exceeds limit " + std::to_string(limit)),
        count_(count),
        limit_(limit) {}
  std::uint64_t count() const { return count_; }
  std::uint64_t limit() const { return limit_; }

 private:
  std::uint64_t count_;
  std::uint64_t limit_;
};

// Iterate left the trusted region (non-finite value or norm above the
// divergence threshold). Solver drivers catch this and flag the run instead
// of aborting a sweep.
class DivergenceError : public Error {
 public:
  DivergenceError(long iteration, double norm)
      : Error("divergence detected at iteration " + std::to_string(iteration) +
              ", |x| = " + std::to_string(norm)),
        iteration_(iteration),
        norm_(norm) {}
  long iteration() const { return iteration_; }
  double norm() const { return norm_; }

 private:
  long iteration_;
  double norm_;
};

// Operation requested on an object that cannot support it (e.g. data
// subsampling on a loss without finite-sum structure).
class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what) : Error(what) {}
};

}  // namespace mast

#endif  // MAST_ERRORS_HPP
