#include "platoon/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace platoon {

namespace {

double sample_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

ErrorSeries error_series(const Telemetry& telemetry) {
  const int nv = telemetry.n_vehicles();
  if (nv < 2) {
    throw std::invalid_argument("error_series: need at least one follower");
  }
  ErrorSeries es;
  es.spacing.resize(static_cast<std::size_t>(nv) - 1);
  es.velocity.resize(static_cast<std::size_t>(nv) - 1);
  for (int i = 1; i < nv; ++i) {
    auto& ep = es.spacing[static_cast<std::size_t>(i) - 1];
    auto& ev = es.velocity[static_cast<std::size_t>(i) - 1];
    ep.resize(static_cast<std::size_t>(telemetry.steps));
    ev.resize(static_cast<std::size_t>(telemetry.steps));
    for (int k = 0; k < telemetry.steps; ++k) {
      const StepRecord& ego = telemetry.at(k, i);
      const StepRecord& pred = telemetry.at(k, i - 1);
      ep[static_cast<std::size_t>(k)] = ego.p - pred.p + telemetry.d_des;
      ev[static_cast<std::size_t>(k)] = ego.v - pred.v;
    }
  }
  return es;
}

double rmse(const std::vector<double>& series) {
  if (series.empty()) {
    throw std::invalid_argument("rmse: empty series");
  }
  double s = 0.0;
  for (double x : series) s += x * x;
  return std::sqrt(s / static_cast<double>(series.size()));
}

ConfidenceInterval confidence_interval_95(const std::vector<double>& samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("confidence_interval_95: need >= 2 samples");
  }
  const double mean = sample_mean(samples);
  const double sd = sample_std(samples, mean);
  ConfidenceInterval ci;
  ci.mean = mean;
  ci.half_width = 1.96 * sd / std::sqrt(static_cast<double>(samples.size()));
  return ci;
}

std::vector<double> per_vehicle_spacing_rmse(const Telemetry& telemetry) {
  const ErrorSeries es = error_series(telemetry);
  std::vector<double> out;
  out.reserve(es.spacing.size());
  for (const auto& series : es.spacing) out.push_back(rmse(series));
  return out;
}

std::vector<double> per_vehicle_velocity_rmse(const Telemetry& telemetry) {
  const ErrorSeries es = error_series(telemetry);
  std::vector<double> out;
  out.reserve(es.velocity.size());
  for (const auto& series : es.velocity) out.push_back(rmse(series));
  return out;
}

SummaryStats summarize(const std::vector<Telemetry>& trials) {
  if (trials.empty()) {
    throw std::invalid_argument("summarize: no trials");
  }
  const std::size_t n_followers = static_cast<std::size_t>(trials.front().n_followers);
  for (const Telemetry& t : trials) {
    if (static_cast<std::size_t>(t.n_followers) != n_followers) {
      throw std::invalid_argument("summarize: trials differ in platoon size");
    }
  }

  // rmse_by_vehicle[j][k]: spacing RMSE of vehicle j+1 in trial k.
  std::vector<std::vector<double>> sp(n_followers);
  std::vector<std::vector<double>> ve(n_followers);
  for (const Telemetry& t : trials) {
    const auto sr = per_vehicle_spacing_rmse(t);
    const auto vr = per_vehicle_velocity_rmse(t);
    for (std::size_t j = 0; j < n_followers; ++j) {
      sp[j].push_back(sr[j]);
      ve[j].push_back(vr[j]);
    }
  }

  auto stats_of = [](const std::vector<double>& xs) {
    VehicleStats vs;
    vs.mean_rmse = sample_mean(xs);
    vs.std_rmse = sample_std(xs, vs.mean_rmse);
    vs.ci_half_width =
        xs.size() < 2 ? 0.0
                      : 1.96 * vs.std_rmse /
                            std::sqrt(static_cast<double>(xs.size()));
    return vs;
  };

  SummaryStats out;
  out.spacing.reserve(n_followers);
  out.velocity.reserve(n_followers);
  for (std::size_t j = 0; j < n_followers; ++j) {
    out.spacing.push_back(stats_of(sp[j]));
    out.velocity.push_back(stats_of(ve[j]));
  }
  return out;
}

ScalingTrend scaling_trend(const std::vector<double>& per_vehicle_rmse) {
  const auto n = per_vehicle_rmse.size();
  if (n < 5) {
    throw std::invalid_argument("scaling_trend: need >= 5 vehicles");
  }

  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 3);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const double i = static_cast<double>(j + 1);
    const auto r = static_cast<Eigen::Index>(j);
    X(r, 0) = 1.0;
    X(r, 1) = i;
    X(r, 2) = i * i;
    y(r) = per_vehicle_rmse[j];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  ScalingTrend trend;
  trend.degenerate = qr.rank() < 3;
  const Eigen::Vector3d beta = qr.solve(y);
  trend.a = beta(0);
  trend.b = beta(1);
  trend.c = beta(2);

  const Eigen::VectorXd resid = y - X * beta;
  const double ssr = resid.squaredNorm();
  trend.residual_rms = std::sqrt(ssr / static_cast<double>(n));
  if (!trend.degenerate && n > 3) {
    const double s2 = ssr / static_cast<double>(n - 3);
    const Eigen::Matrix3d cov =
        s2 * (X.transpose() * X).inverse();
    trend.se_a = std::sqrt(std::max(0.0, cov(0, 0)));
    trend.se_b = std::sqrt(std::max(0.0, cov(1, 1)));
    trend.se_c = std::sqrt(std::max(0.0, cov(2, 2)));
    trend.quadratic_significant = trend.c > 2.0 * trend.se_c;
  }

  trend.divergence = per_vehicle_rmse.back() > 10.0 * per_vehicle_rmse[4];
  return trend;
}

}  // namespace platoon
