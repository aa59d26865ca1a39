#pragma once

#include <vector>

#include "platoon/dynamics.hpp"

namespace platoon {

/// A horizon-indexed plan: H+1 states and H desired-velocity inputs.
/// states[k] is the state at horizon step k, inputs[k] drives the transition
/// from states[k] to states[k+1].
struct Trajectory {
  std::vector<VehicleState> states;
  std::vector<double> inputs;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

/// Max dynamics defect over the horizon: how far each states[k+1] is from
/// step_dynamics(states[k], inputs[k]).
double dynamics_defect(const Trajectory& traj, const DynamicsParams& params);

bool is_dynamically_consistent(const Trajectory& traj,
                               const DynamicsParams& params,
                               double tol = 1e-9);

/// Constant-velocity hold: rollout from x0 with u = x0.v for H steps.
Trajectory init_assumed(const VehicleState& x0, int horizon,
                        const DynamicsParams& params);

/// Shifts a plan one step forward: states drop the first entry and gain a
/// constant-velocity extension at the tail; inputs shift with the final
/// input equal to the plan's terminal velocity.
Trajectory shift_assumed(const Trajectory& plan, const DynamicsParams& params);

}  // namespace platoon
