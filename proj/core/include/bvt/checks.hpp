// Invariant suite: every documented property of the pipeline as a named,
// glob-filterable check. A check throws std::runtime_error with a message
// to fail; the runner reports per-check pass/fail and keeps going.
#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace bvt {

struct Check {
  std::string name;
  std::function<void()> run;
};

std::vector<Check> default_checks();

struct CheckOutcome {
  std::string name;
  bool passed;
  std::string message;  // failure reason when !passed
};

struct CheckReport {
  std::vector<CheckOutcome> outcomes;
  std::size_t passed = 0;
  std::size_t failed = 0;
  bool all_passed() const { return failed == 0; }
};

// Supports '*' and '?'. Empty pattern matches everything.
bool glob_match(const std::string& pattern, const std::string& name);

CheckReport run_checks(const std::vector<Check>& checks, const std::string& filter,
                       std::ostream& log);

}  // namespace bvt
