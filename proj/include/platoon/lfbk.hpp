#pragma once

#include "platoon/dynamics.hpp"

namespace platoon {

struct LfbkConfig {
  double k_p = 1.0;  ///< spacing gain, 1/s
  double k_v = 2.0;  ///< velocity gain, dimensionless
};

/// Desired-velocity feedback law: ego velocity as feedforward plus
/// proportional corrections on the spacing and velocity errors. Zero error
/// returns v_ego exactly; the output is intentionally unclamped.
inline double lfbk_control(const VehicleState& ego, double measured_gap,
                           double pred_velocity, const LfbkConfig& cfg,
                           double d_des) {
  return ego.v + cfg.k_p * (measured_gap - d_des) +
         cfg.k_v * (pred_velocity - ego.v);
}

}  // namespace platoon
