#include "platoon/dynamics.hpp"

#include <cstdio>

namespace platoon {

namespace {
std::string fmt(const char* text, double a, double b) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), text, a, b);
  return buf;
}
}  // namespace

ValidationReport validate(const DynamicsParams& params) {
  ValidationReport report;
  if (!(params.dt > 0.0)) {
    report.errors.push_back(fmt("dt must be > 0 (got %g)", params.dt, 0));
  }
  if (!(params.tau > 0.0)) {
    report.errors.push_back(fmt("tau must be > 0 (got %g)", params.tau, 0));
  }
  if (!report.errors.empty()) return report;
  const double ratio = params.dt / params.tau;
  if (ratio >= 2.0) {
    report.errors.push_back(
        fmt("dt/tau = %g >= 2: velocity subsystem unstable (dt=%g)", ratio,
            params.dt));
  } else if (ratio > 1.0) {
    report.warnings.push_back(
        fmt("dt/tau = %g > 1: velocity map 1 - dt/tau is negative; "
            "expect oscillatory discretization (dt=%g)",
            ratio, params.dt));
  }
  return report;
}

PlatoonConfig PlatoonConfig::homogeneous(int n_followers, double d_des,
                                         const DynamicsParams& dyn,
                                         double v_min, double v_max,
                                         double a_max) {
  PlatoonConfig cfg;
  cfg.n_followers = n_followers;
  cfg.d_des = d_des;
  const int n = n_followers + 1;
  cfg.dynamics.assign(n, dyn);
  cfg.v_min.assign(n, v_min);
  cfg.v_max.assign(n, v_max);
  cfg.a_max.assign(n, a_max);
  return cfg;
}

ValidationReport validate(const PlatoonConfig& cfg) {
  ValidationReport report;
  if (cfg.n_followers < 1) {
    report.errors.push_back("n_followers must be >= 1");
  }
  if (!(cfg.d_des > 0.0)) {
    report.errors.push_back("d_des must be > 0");
  }
  const size_t n = static_cast<size_t>(cfg.n_followers) + 1;
  if (cfg.dynamics.size() != n || cfg.v_min.size() != n ||
      cfg.v_max.size() != n || cfg.a_max.size() != n) {
    report.errors.push_back("per-vehicle parameter lists must have size N+1");
    return report;
  }
  for (size_t i = 0; i < n; ++i) {
    ValidationReport dyn = validate(cfg.dynamics[i]);
    report.errors.insert(report.errors.end(), dyn.errors.begin(),
                         dyn.errors.end());
    report.warnings.insert(report.warnings.end(), dyn.warnings.begin(),
                           dyn.warnings.end());
    if (!(cfg.v_min[i] < cfg.v_max[i])) {
      report.errors.push_back("v_min must be < v_max");
    }
    if (!(cfg.a_max[i] > 0.0)) {
      report.errors.push_back("a_max must be > 0");
    }
  }
  return report;
}

}  // namespace platoon
