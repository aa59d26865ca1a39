#pragma once

#include <vector>

#include "platoon/engine.hpp"

namespace platoon {

// Per-follower error series extracted from one trial. Entry j holds the
// series for vehicle j+1; each series has one value per simulation step.
struct ErrorSeries {
  std::vector<std::vector<double>> spacing;
  std::vector<std::vector<double>> velocity;
};

// Spacing error is p_i - p_(i-1) + d_des, velocity error is v_i - v_(i-1),
// both from the true states in the telemetry.
ErrorSeries error_series(const Telemetry& telemetry);

// sqrt(mean of squares). Rejects empty input.
double rmse(const std::vector<double>& series);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
};

// Normal-approximation interval: mean +/- 1.96 * sample std / sqrt(n).
// Requires at least two samples.
ConfidenceInterval confidence_interval_95(const std::vector<double>& samples);

// RMSE of the spacing (velocity) error per follower; entry j is vehicle j+1.
std::vector<double> per_vehicle_spacing_rmse(const Telemetry& telemetry);
std::vector<double> per_vehicle_velocity_rmse(const Telemetry& telemetry);

struct VehicleStats {
  double mean_rmse = 0.0;
  double std_rmse = 0.0;
  double ci_half_width = 0.0;
};

// Cross-trial statistics, one entry per follower. A single trial yields
// zero std and zero half-width.
struct SummaryStats {
  std::vector<VehicleStats> spacing;
  std::vector<VehicleStats> velocity;
};

SummaryStats summarize(const std::vector<Telemetry>& trials);

// Least-squares fit of per-vehicle RMSE against vehicle index i to
// a + b*i + c*i^2. Entry j of the input is vehicle j+1. The quadratic term
// counts as significant when c exceeds twice its standard error.
struct ScalingTrend {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double se_a = 0.0;
  double se_b = 0.0;
  double se_c = 0.0;
  double residual_rms = 0.0;
  bool quadratic_significant = false;
  // RMSE at the last vehicle exceeds 10x the RMSE at vehicle 5.
  bool divergence = false;
  // Rank-deficient fit; coefficients are a minimum-norm solution.
  bool degenerate = false;
};

ScalingTrend scaling_trend(const std::vector<double>& per_vehicle_rmse);

}  // namespace platoon
