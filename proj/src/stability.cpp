#include "platoon/stability.hpp"

#include <Eigen/Eigenvalues>

#include <stdexcept>

namespace platoon {

StabilityReport check_stability_conditions(
    const std::vector<DmpcConfig>& cfgs) {
  StabilityReport report;
  if (cfgs.empty()) return report;

  const CostKind kind = cfgs.front().cost_kind();
  for (const auto& cfg : cfgs) {
    if (cfg.cost_kind() != kind) {
      throw std::invalid_argument(
          "check_stability_conditions: mixed cost kinds");
    }
  }

  if (kind == CostKind::SquaredTwoNorm) {
    report.sufficiency_caveat = true;
    report.note =
        "no sufficient conditions known for squared 2-norm costs; "
        "pairwise weight dominance reported as a heuristic";
  } else {
    report.note = "1-norm sufficient condition: s_i >= q_(i+1) per pair";
  }

  for (std::size_t i = 0; i + 1 < cfgs.size(); ++i) {
    StabilityPair pair;
    pair.index = static_cast<int>(i);
    if (kind == CostKind::SquaredTwoNorm) {
      const Eigen::Matrix2d diff = cfgs[i].two_norm().move_suppression -
                                   cfgs[i + 1].two_norm().predecessor_error;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(diff);
      pair.margin = es.eigenvalues().minCoeff();
    } else {
      pair.margin = cfgs[i].one_norm().move_suppression -
                    cfgs[i + 1].one_norm().predecessor_error;
    }
    pair.satisfied = pair.margin >= 0.0;
    report.all_satisfied = report.all_satisfied && pair.satisfied;
    report.pairs.push_back(pair);
  }
  return report;
}

}  // namespace platoon
