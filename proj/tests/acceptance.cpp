// Acceptance suite: runs the named checks (default: all) and prints one
// pass/fail line per check.

#include "crl/checks.hpp"

#include <fmt/format.h>

#include <string>
#include <vector>

int main(int argc, char** argv) {
  std::vector<std::string> names;
  for (int i = 1; i < argc; ++i) names.emplace_back(argv[i]);
  if (names.empty()) names.emplace_back("all");
  try {
    bool all = true;
    for (const auto& result : crl::run_checks(names, CRL_GOLDEN_DIR)) {
      fmt::print("{}\n", crl::format_check(result));
      std::fflush(stdout);
      all = all && result.passed;
    }
    return all ? 0 : 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
}
