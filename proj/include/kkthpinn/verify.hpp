#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kkthpinn {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Self-check of the projection identities, the KKT-system equivalence and
/// finite-difference gradients of all three losses on random instances.
std::vector<CheckResult> run_verification(std::uint64_t seed);

}  // namespace kkthpinn
