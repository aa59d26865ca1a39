#include "platoon/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace platoon {

double dynamics_defect(const Trajectory& traj, const DynamicsParams& params) {
  double worst = 0.0;
  for (int k = 0; k < traj.horizon(); ++k) {
    const VehicleState pred = step_dynamics(traj.states[k], traj.inputs[k], params);
    worst = std::max(worst, std::abs(pred.p - traj.states[k + 1].p));
    worst = std::max(worst, std::abs(pred.v - traj.states[k + 1].v));
  }
  return worst;
}

bool is_dynamically_consistent(const Trajectory& traj,
                               const DynamicsParams& params, double tol) {
  if (traj.states.size() != traj.inputs.size() + 1) return false;
  return dynamics_defect(traj, params) <= tol;
}

Trajectory init_assumed(const VehicleState& x0, int horizon,
                        const DynamicsParams& params) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  Trajectory traj;
  traj.states.reserve(horizon + 1);
  traj.inputs.assign(horizon, x0.v);
  traj.states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    traj.states.push_back(step_dynamics(traj.states.back(), x0.v, params));
  }
  return traj;
}

Trajectory shift_assumed(const Trajectory& plan, const DynamicsParams& params) {
  const int h = plan.horizon();
  if (h < 1 || plan.states.size() != static_cast<size_t>(h) + 1) {
    throw std::invalid_argument("shift_assumed: malformed trajectory");
  }
  Trajectory out;
  out.states.assign(plan.states.begin() + 1, plan.states.end());
  out.inputs.assign(plan.inputs.begin() + 1, plan.inputs.end());
  const VehicleState& tail = plan.states.back();
  out.inputs.push_back(tail.v);
  out.states.push_back(step_dynamics(tail, tail.v, params));
  return out;
}

}  // namespace platoon
