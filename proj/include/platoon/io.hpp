#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "platoon/engine.hpp"
#include "platoon/metrics.hpp"

namespace platoon {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kCsvHeader = "t,i,p,v,u,gap_measured,solver_status";

// Shortest-width %.17g rendering; round-trips doubles exactly.
std::string fmt_g17(double x);

std::uint64_t fnv1a64(std::string_view data);
// "fnv1a64:<16 hex digits>"
std::string fnv1a64_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

// One row per step per vehicle, step-major. The leader's gap field is
// empty; rows without a solver carry status "none".
std::string to_csv(const Telemetry& telemetry);

// Rebuilds records plus the shape metadata (steps, vehicle count, dt)
// from CSV text. Scenario-level fields (name, controller, seed, d_des)
// are not stored in the CSV and stay at their defaults.
Telemetry telemetry_from_csv(const std::string& content);

struct RunMeta {
  std::string scenario_name;
  ControllerKind controller = ControllerKind::Lfbk;
  std::uint64_t seed = 0;
  double d_des = 0.0;
};

// Everything in the summary is derivable from the trial CSVs plus the
// metadata echoed here, so a summary can be regenerated from disk.
nlohmann::json summary_json(const RunMeta& meta,
                            const std::vector<Telemetry>& trials);

// Iteration counts, fallback events, and wall-clock timing. Kept out of
// the summary because timing is not deterministic.
nlohmann::json solver_stats_json(const std::vector<Telemetry>& trials);

struct ManifestInfo {
  std::string scenario_path;
  std::string scenario_copy;
  std::string scenario_hash;
  std::string controller;
  std::uint64_t seed = 0;
  int trials = 0;
  int n_followers = 0;
  std::vector<std::string> csv_paths;
  std::string summary_path;
  std::string solver_stats_path;
};

nlohmann::json manifest_json(const ManifestInfo& info);

}  // namespace platoon
