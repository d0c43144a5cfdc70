#pragma once

#include <string>
#include <vector>

namespace spde {

struct CheckResult {
  int id = 0;  // acceptance number, 0 for fast-suite items
  std::string name;
  bool pass = false;
  std::string detail;  // key numbers, and every failed sub-check
  double seconds = 0.0;
  double budget = 0.0;  // wall-clock limit in seconds, 0 for none
};

struct VerifyOptions {
  std::string spde_exe;     // used by the determinism criterion
  std::string scratch_dir;  // empty: a fresh directory under the system temp dir
};

constexpr int kCriterionCount = 10;

CheckResult run_criterion(int id, const VerifyOptions& opt);
std::vector<CheckResult> run_fast_suite(const VerifyOptions& opt);

// "AC5 PASS  pam correlation equality  (41.2 s)  ..." on one line.
std::string report_line(const CheckResult& r);

}  // namespace spde
