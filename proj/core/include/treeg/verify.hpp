#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace treeg {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = true;
  bool informational = false;  // reported, never gates the exit code
  std::string note;
};

// Exact-identity and oracle-equivalence checks across all modules, plus the
// informational endpoint-variance measurement of the two-stage sampler.
std::vector<CheckResult> run_verification_suite(std::uint64_t seed = 0);

// Prints one line per check; returns false if any non-informational check
// failed.
bool report_verification(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace treeg
