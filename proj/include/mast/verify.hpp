#ifndef MAST_VERIFY_HPP
#define MAST_VERIFY_HPP

#include <string>
#include <vector>

#include "mast/parallel.hpp"

namespace mast {

// One verification check: a theorem envelope, an oracle-equivalence test or
// a qualitative experiment reproduction. The battery doubles as the
// acceptance suite; `detail` records the measured quantity against its bound.
struct CheckResult {
  std::string id;
  bool pass = false;
  double elapsed_s = 0.0;
  std::string detail;
};

// Runs every registered check whose id contains `filter` (all when empty).
// `inject_lf_fault` corrupts the smoothness constant fed to the lemma suite;
// with the fault active the suite is expected to fail, which the negative
// control check asserts.
std::vector<CheckResult> run_verification(const std::string& filter = "",
                                          Exec exec = Exec::parallel);

// The lemma suite alone with a corrupted smoothness constant; returns the
// failing inequality ids (used by the verify CLI's fault-injection mode).
std::vector<std::string> run_lemma_suite_with_fault();

std::vector<std::string> registered_check_ids();

void write_verify_csv(const std::string& path, const std::vector<CheckResult>& results);

}  // namespace mast

#endif  // MAST_VERIFY_HPP
