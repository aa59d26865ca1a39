#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "platoon/qp.hpp"
#include "platoon/scenario.hpp"
#include "platoon/trajectory.hpp"

namespace platoon {

/// msg_step value for records that consumed no message (leader, lfbk runs).
inline constexpr int kNoMessage = std::numeric_limits<int>::min();

/// One vehicle at one step: the state x(t), the input applied at t, and the
/// measurement/solver bookkeeping behind that input. solve_time_ms is wall
/// clock and is the one field exempt from determinism guarantees.
struct StepRecord {
  double t = 0.0;
  int vehicle = 0;
  double p = 0.0;
  double v = 0.0;
  double u = 0.0;
  double gap_measured = std::numeric_limits<double>::quiet_NaN();
  bool has_solver = false;
  qp::QpStatus solver_status = qp::QpStatus::Solved;
  int iterations = 0;
  double solve_time_ms = 0.0;
  bool fallback = false;
  /// Step index at which the consumed message was computed; -1 for the
  /// synthetic initial announcement, kNoMessage when none was read.
  int msg_step = kNoMessage;
};

struct Telemetry {
  std::string scenario_name;
  ControllerKind controller = ControllerKind::Lfbk;
  std::uint64_t seed = 0;
  int n_followers = 0;
  int steps = 0;
  double dt = 0.1;
  double d_des = 0.0;
  /// steps * (n_followers + 1) records, step-major, vehicle-minor.
  std::vector<StepRecord> records;

  int n_vehicles() const { return n_followers + 1; }
  const StepRecord& at(int step, int vehicle) const {
    return records[static_cast<std::size_t>(step) *
                       static_cast<std::size_t>(n_vehicles()) +
                   static_cast<std::size_t>(vehicle)];
  }
};

/// Reference input for the leader at time t: the profile value one step
/// ahead, so the first-order lag is compensated in steady ramps.
double leader_reference_input(double t, const std::vector<ProfileKnot>& profile,
                              const DynamicsParams& dyn);

/// The leader's announcement for the step at t_next: a noise-free rollout
/// from its predicted next state under the future reference inputs.
Trajectory leader_assumed_trajectory(const VehicleState& predicted_next,
                                     double t_next,
                                     const std::vector<ProfileKnot>& profile,
                                     const DynamicsParams& dyn, int horizon);

/// Runs one trial. Per step: the leader computes its reference input and
/// announcement, followers read their predecessor's previous-step
/// announcement plus fresh measurements, then all states advance
/// simultaneously. Deterministic for fixed (scenario, seed); per-vehicle
/// noise substreams make the result independent of follower iteration
/// order. The scenario must have a controller selected.
Telemetry run_trial(const Scenario& scenario, std::uint64_t seed);

/// Test hook: identical semantics with an explicit follower processing
/// order (a permutation of 1..n_followers).
Telemetry run_trial(const Scenario& scenario, std::uint64_t seed,
                    const std::vector<int>& follower_order);

/// Independent trials; trial k runs under substream(base_seed, k).
std::vector<Telemetry> run_batch(const Scenario& scenario, int trials,
                                 std::uint64_t base_seed);

}  // namespace platoon
