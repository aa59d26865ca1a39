#pragma once

#include <string>
#include <vector>

#include "platoon/dmpc.hpp"

namespace platoon {

/// Comparison of one adjacent pair: the move-suppression weight of
/// vehicle `index` against the predecessor-error weight of `index + 1`.
struct StabilityPair {
  int index = 0;
  double margin = 0.0;  ///< smallest eigenvalue of F - G, or s - q
  bool satisfied = false;
};

struct StabilityReport {
  std::vector<StabilityPair> pairs;
  bool all_satisfied = true;
  /// For squared-2-norm costs the pairwise condition is a heuristic
  /// carried over from the plain 2-norm analysis, not a guarantee.
  bool sufficiency_caveat = false;
  std::string note;
};

/// Checks the pairwise weight dominance condition along the platoon.
/// Boundary equality counts as satisfied. All configs must share a cost
/// kind; mixed kinds throw std::invalid_argument.
StabilityReport check_stability_conditions(
    const std::vector<DmpcConfig>& cfgs);

}  // namespace platoon
