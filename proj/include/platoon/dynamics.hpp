#pragma once

#include <cmath>
#include <string>
#include <vector>

namespace platoon {

/// Longitudinal state of one vehicle: position [m] and velocity [m/s].
struct VehicleState {
  double p = 0.0;
  double v = 0.0;

  bool finite() const { return std::isfinite(p) && std::isfinite(v); }
};

/// Discrete-time model parameters. The velocity subsystem is a first-order
/// lag with time constant tau driven by a desired-velocity input.
struct DynamicsParams {
  double dt = 0.1;   ///< discretization time [s]
  double tau = 0.3;  ///< inertial delay [s]
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
};

/// Checks dt > 0, tau > 0 and dt/tau < 2 (errors); warns for dt/tau > 1,
/// where the discrete velocity map 1 - dt/tau becomes negative.
ValidationReport validate(const DynamicsParams& params);

/// One step of the vehicle model:
///   p+ = p + dt * v
///   v+ = v * (1 - dt/tau) + (dt/tau) * u
/// where u is the desired velocity [m/s].
inline VehicleState step_dynamics(const VehicleState& x, double u,
                                  const DynamicsParams& params) {
  const double r = params.dt / params.tau;
  return {x.p + params.dt * x.v, x.v * (1.0 - r) + r * u};
}

/// Per-platoon configuration: vehicle 0 is the leader, vehicles 1..N follow.
struct PlatoonConfig {
  int n_followers = 1;       ///< N >= 1
  double d_des = 1.0;        ///< desired inter-vehicle spacing [m]
  std::vector<DynamicsParams> dynamics;  ///< size N+1
  std::vector<double> v_min;             ///< size N+1
  std::vector<double> v_max;             ///< size N+1
  std::vector<double> a_max;             ///< size N+1

  int n_vehicles() const { return n_followers + 1; }

  /// Convenience constructor for a homogeneous platoon.
  static PlatoonConfig homogeneous(int n_followers, double d_des,
                                   const DynamicsParams& dyn, double v_min,
                                   double v_max, double a_max);
};

ValidationReport validate(const PlatoonConfig& cfg);

}  // namespace platoon
