#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "platoon/dmpc.hpp"
#include "platoon/dynamics.hpp"
#include "platoon/lfbk.hpp"
#include "platoon/noise.hpp"

namespace platoon {

enum class ControllerKind { Lfbk, DmpcQp, DmpcLp };

const char* to_string(ControllerKind kind);
std::optional<ControllerKind> controller_from_string(std::string_view name);

struct ProfileKnot {
  double t = 0.0;  ///< s
  double v = 0.0;  ///< m/s
};

/// Piecewise-linear interpolation; clamps to the first/last knot value
/// outside the knot range.
double profile_velocity(const std::vector<ProfileKnot>& profile, double t);

/// A complete experiment description minus the seed, which is supplied per
/// run. Carries the configuration of every controller; the `controller`
/// field is only a default selection that a runner may override.
struct Scenario {
  std::string name;
  DynamicsParams dynamics;
  double duration = 0.0;  ///< s
  int n_followers = 0;
  double d_des = 0.0;
  double v_min = 0.0;
  double v_max = 35.0;
  double a_max = 3.0;
  std::vector<ProfileKnot> profile;
  NoiseConfig noise;  ///< magnitudes only; seed comes from the run
  LfbkConfig lfbk;
  int dmpc_horizon = 100;
  TwoNormWeights two_norm;
  OneNormWeights one_norm;
  qp::Tolerances dmpc_solver_tol{1e-4, 1e-4};
  std::optional<ControllerKind> controller;
  std::optional<double> initial_velocity;  ///< default: profile value at 0
  std::optional<double> initial_spacing;   ///< default: d_des

  int num_steps() const;
  double initial_speed() const;
  double spacing0() const;
};

ValidationReport validate(const Scenario& s);

/// Assembles the per-vehicle DMPC configuration for one of the two DMPC
/// controllers. Throws std::invalid_argument for Lfbk.
DmpcConfig make_dmpc_config(const Scenario& s, ControllerKind kind);

/// Parses the schema v1 JSON document. Unknown keys are rejected; messages
/// carry the offending field path. Throws std::runtime_error.
Scenario parse_scenario(const std::string& json_text);

/// load_scenario reads the file at path and parses it.
Scenario load_scenario(const std::string& path);

/// Canonical JSON serialization of a scenario (schema v1).
std::string scenario_to_json(const Scenario& s);

}  // namespace platoon
