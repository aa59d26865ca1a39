#include "platoon/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

namespace platoon {

namespace {

qp::QpStatus status_from_string(const std::string& s, int line_no) {
  if (s == "Solved") return qp::QpStatus::Solved;
  if (s == "MaxIter") return qp::QpStatus::MaxIter;
  if (s == "PrimalInfeasible") return qp::QpStatus::PrimalInfeasible;
  if (s == "DualInfeasible") return qp::QpStatus::DualInfeasible;
  throw std::runtime_error("csv: line " + std::to_string(line_no) +
                           ": unknown solver status '" + s + "'");
}

double parse_double(const std::string& field, int line_no) {
  char* end = nullptr;
  const double x = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0') {
    throw std::runtime_error("csv: line " + std::to_string(line_no) +
                             ": bad number '" + field + "'");
  }
  return x;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view data) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw std::runtime_error("read failed for " + path.string());
  }
  return content;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

std::string to_csv(const Telemetry& telemetry) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const StepRecord& r : telemetry.records) {
    out += fmt_g17(r.t);
    out += ',';
    out += std::to_string(r.vehicle);
    out += ',';
    out += fmt_g17(r.p);
    out += ',';
    out += fmt_g17(r.v);
    out += ',';
    out += fmt_g17(r.u);
    out += ',';
    if (std::isfinite(r.gap_measured)) out += fmt_g17(r.gap_measured);
    out += ',';
    out += r.has_solver ? to_string(r.solver_status) : "none";
    out += '\n';
  }
  return out;
}

Telemetry telemetry_from_csv(const std::string& content) {
  Telemetry tel;
  std::size_t start = 0;
  int line_no = 0;
  int max_vehicle = -1;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    const std::string line = content.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kCsvHeader) {
        throw std::runtime_error("csv: unexpected header '" + line + "'");
      }
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 7) {
      throw std::runtime_error("csv: line " + std::to_string(line_no) +
                               ": expected 7 fields, got " +
                               std::to_string(fields.size()));
    }
    StepRecord rec;
    rec.t = parse_double(fields[0], line_no);
    rec.vehicle = static_cast<int>(parse_double(fields[1], line_no));
    rec.p = parse_double(fields[2], line_no);
    rec.v = parse_double(fields[3], line_no);
    rec.u = parse_double(fields[4], line_no);
    rec.gap_measured = fields[5].empty()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : parse_double(fields[5], line_no);
    if (fields[6] != "none") {
      rec.has_solver = true;
      rec.solver_status = status_from_string(fields[6], line_no);
    }
    max_vehicle = std::max(max_vehicle, rec.vehicle);
    tel.records.push_back(rec);
  }
  if (tel.records.empty()) {
    throw std::runtime_error("csv: no data rows");
  }
  const int nv = max_vehicle + 1;
  if (nv < 1 || tel.records.size() % static_cast<std::size_t>(nv) != 0) {
    throw std::runtime_error("csv: ragged vehicle blocks");
  }
  tel.n_followers = nv - 1;
  tel.steps = static_cast<int>(tel.records.size() / static_cast<std::size_t>(nv));
  tel.dt = tel.steps > 1 ? tel.records[static_cast<std::size_t>(nv)].t
                         : 0.1;
  return tel;
}

nlohmann::json summary_json(const RunMeta& meta,
                            const std::vector<Telemetry>& trials) {
  if (trials.empty()) {
    throw std::invalid_argument("summary_json: no trials");
  }
  const Telemetry& first = trials.front();
  const SummaryStats stats = summarize(trials);

  nlohmann::json j;
  j["schema"] = "platoon-summary/v1";
  j["scenario"] = meta.scenario_name;
  j["controller"] = to_string(meta.controller);
  j["seed"] = meta.seed;
  j["trials"] = trials.size();
  j["n_followers"] = first.n_followers;
  j["steps"] = first.steps;
  j["dt"] = first.dt;
  j["d_des"] = meta.d_des;
  j["ci_note"] = "normal-quantile 1.96";

  auto stats_array = [](const std::vector<VehicleStats>& vs) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t jx = 0; jx < vs.size(); ++jx) {
      arr.push_back({{"vehicle", jx + 1},
                     {"mean", vs[jx].mean_rmse},
                     {"std", vs[jx].std_rmse},
                     {"ci_half_width", vs[jx].ci_half_width}});
    }
    return arr;
  };
  j["spacing_rmse"] = stats_array(stats.spacing);
  j["velocity_rmse"] = stats_array(stats.velocity);

  if (first.n_followers >= 5) {
    std::vector<double> mean_rmse;
    mean_rmse.reserve(stats.spacing.size());
    for (const auto& vs : stats.spacing) mean_rmse.push_back(vs.mean_rmse);
    const ScalingTrend trend = scaling_trend(mean_rmse);
    j["scaling"] = {{"a", trend.a},
                    {"b", trend.b},
                    {"c", trend.c},
                    {"se_a", trend.se_a},
                    {"se_b", trend.se_b},
                    {"se_c", trend.se_c},
                    {"residual_rms", trend.residual_rms},
                    {"quadratic_significant", trend.quadratic_significant},
                    {"divergence", trend.divergence},
                    {"degenerate", trend.degenerate}};
  } else {
    j["scaling"] = nullptr;
  }

  nlohmann::json peaks = nlohmann::json::array();
  double peak_sum = 0.0;
  const int last = first.n_followers;
  for (const Telemetry& t : trials) {
    double peak = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < t.steps; ++k) {
      peak = std::max(peak, t.at(k, last).v);
    }
    peaks.push_back(peak);
    peak_sum += peak;
  }
  j["peak_velocity_last_vehicle"] = {
      {"per_trial", peaks},
      {"mean", peak_sum / static_cast<double>(trials.size())}};
  return j;
}

nlohmann::json solver_stats_json(const std::vector<Telemetry>& trials) {
  nlohmann::json per_trial = nlohmann::json::array();
  std::uint64_t total_solves = 0;
  std::uint64_t total_fallbacks = 0;
  for (const Telemetry& t : trials) {
    std::uint64_t solves = 0;
    std::uint64_t iter_sum = 0;
    int iter_max = 0;
    double time_sum = 0.0;
    double time_max = 0.0;
    nlohmann::json statuses = nlohmann::json::object();
    nlohmann::json events = nlohmann::json::array();
    for (const StepRecord& r : t.records) {
      if (!r.has_solver) continue;
      ++solves;
      iter_sum += static_cast<std::uint64_t>(r.iterations);
      iter_max = std::max(iter_max, r.iterations);
      time_sum += r.solve_time_ms;
      time_max = std::max(time_max, r.solve_time_ms);
      const char* name = to_string(r.solver_status);
      statuses[name] = statuses.value(name, 0) + 1;
      if (r.fallback) {
        events.push_back({{"t", r.t}, {"vehicle", r.vehicle}});
      }
    }
    per_trial.push_back(
        {{"seed", t.seed},
         {"solves", solves},
         {"iterations",
          {{"mean", solves ? static_cast<double>(iter_sum) /
                                 static_cast<double>(solves)
                           : 0.0},
           {"max", iter_max}}},
         {"statuses", statuses},
         {"fallbacks", events.size()},
         {"fallback_events", events},
         {"solve_time_ms",
          {{"mean", solves ? time_sum / static_cast<double>(solves) : 0.0},
           {"max", time_max},
           {"total", time_sum}}}});
    total_solves += solves;
    total_fallbacks += events.size();
  }
  return {{"schema", "platoon-solver-stats/v1"},
          {"note", "solve_time_ms is wall clock and varies between runs"},
          {"total_solves", total_solves},
          {"total_fallbacks", total_fallbacks},
          {"fallback_rate", total_solves ? static_cast<double>(total_fallbacks) /
                                               static_cast<double>(total_solves)
                                         : 0.0},
          {"per_trial", per_trial}};
}

nlohmann::json manifest_json(const ManifestInfo& info) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return {{"schema", "platoon-manifest/v1"},
          {"tool_version", kToolVersion},
          {"created_unix_ms",
           std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
          {"scenario_path", info.scenario_path},
          {"scenario_copy", info.scenario_copy},
          {"scenario_hash", info.scenario_hash},
          {"controller", info.controller},
          {"seed", info.seed},
          {"trials", info.trials},
          {"n_followers", info.n_followers},
          {"outputs",
           {{"csv", info.csv_paths},
            {"summary", info.summary_path},
            {"solver_stats", info.solver_stats_path}}}};
}

}  // namespace platoon
