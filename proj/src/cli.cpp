#include "platoon/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "platoon/engine.hpp"
#include "platoon/io.hpp"
#include "platoon/metrics.hpp"
#include "platoon/scenario.hpp"
#include "platoon/stability.hpp"
#include "platoon/svg.hpp"

namespace platoon {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

std::string num4(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

fs::path resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("PLATOON_OUT_DIR"); env && *env) {
    return env;
  }
  return "out";
}

// Accepts a path, a path missing its .json suffix, or a bundled
// scenario name.
fs::path resolve_scenario_path(const std::string& arg) {
  const fs::path candidates[] = {fs::path(arg), fs::path(arg + ".json"),
                                 fs::path("scenarios") / (arg + ".json")};
  for (const fs::path& p : candidates) {
    if (fs::exists(p) && fs::is_regular_file(p)) return p;
  }
  throw std::runtime_error("scenario file not found: " + arg);
}

void print_stability_report(const StabilityReport& rep, std::ostream& os) {
  if (!rep.note.empty()) os << "  note: " << rep.note << "\n";
  if (rep.pairs.empty()) {
    os << "  no adjacent pairs; trivially satisfied\n";
    return;
  }
  for (const StabilityPair& pair : rep.pairs) {
    os << "  pair " << pair.index << "->" << pair.index + 1
       << ": margin=" << num4(pair.margin) << " "
       << (pair.satisfied ? "Satisfied" : "Violated") << "\n";
  }
}

// Returns false when the run must stop (violation without the override).
bool stability_gate(const Scenario& sc, ControllerKind kind,
                    bool allow_unstable) {
  if (kind == ControllerKind::Lfbk) return true;
  std::vector<DmpcConfig> cfgs(static_cast<std::size_t>(sc.n_followers),
                               make_dmpc_config(sc, kind));
  const StabilityReport rep = check_stability_conditions(cfgs);
  if (rep.all_satisfied) {
    if (rep.sufficiency_caveat) std::cerr << "note: " << rep.note << "\n";
    return true;
  }
  std::cerr << (allow_unstable ? "warning" : "error")
            << ": stability condition violated for " << to_string(kind)
            << "\n";
  print_stability_report(rep, std::cerr);
  if (!allow_unstable) {
    std::cerr << "error: pass --allow-unstable to run anyway\n";
    return false;
  }
  return true;
}

struct RunArgs {
  Scenario scenario;
  std::string scenario_path;
  std::string scenario_text;
  ControllerKind controller = ControllerKind::Lfbk;
  int trials = 1;
  std::uint64_t seed = 0;
  fs::path out_dir;
  bool allow_unstable = false;
};

struct RunResult {
  std::vector<Telemetry> telemetry;
  nlohmann::json summary;
};

int execute_run(RunArgs args, RunResult* result = nullptr) {
  args.scenario.controller = args.controller;
  try {
    const ValidationReport rep = validate(args.scenario);
    if (!rep.ok()) {
      for (const auto& e : rep.errors) std::cerr << "error: " << e << "\n";
      return kExitConfig;
    }
    if (!stability_gate(args.scenario, args.controller, args.allow_unstable)) {
      return kExitConfig;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }

  try {
    const fs::path copy_path = args.out_dir / "scenario.json";
    ManifestInfo info;
    info.scenario_path = args.scenario_path;
    info.scenario_copy = copy_path.string();
    info.scenario_hash = fnv1a64_hex(args.scenario_text);
    info.controller = to_string(args.controller);
    info.seed = args.seed;
    info.trials = args.trials;
    info.n_followers = args.scenario.n_followers;
    for (int k = 0; k < args.trials; ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "trial_%03d.csv", k);
      info.csv_paths.push_back((args.out_dir / name).string());
    }
    info.summary_path = (args.out_dir / "summary.json").string();
    info.solver_stats_path = (args.out_dir / "solver_stats.json").string();

    write_text_file(copy_path, args.scenario_text);
    write_text_file(args.out_dir / "manifest.json",
                    manifest_json(info).dump(2) + "\n");

    std::vector<Telemetry> trials;
    trials.reserve(static_cast<std::size_t>(args.trials));
    for (int k = 0; k < args.trials; ++k) {
      Telemetry tel =
          run_trial(args.scenario,
                    substream(args.seed, static_cast<std::uint64_t>(k)));
      for (const StepRecord& r : tel.records) {
        if (r.fallback) {
          std::cerr << "fallback: trial=" << k << " t=" << num4(r.t)
                    << " vehicle=" << r.vehicle << "\n";
        }
      }
      write_text_file(info.csv_paths[static_cast<std::size_t>(k)],
                      to_csv(tel));
      trials.push_back(std::move(tel));
    }

    RunMeta meta;
    meta.scenario_name = args.scenario.name;
    meta.controller = args.controller;
    meta.seed = args.seed;
    meta.d_des = args.scenario.d_des;
    nlohmann::json summary = summary_json(meta, trials);
    write_text_file(info.summary_path, summary.dump(2) + "\n");
    write_text_file(info.solver_stats_path,
                    solver_stats_json(trials).dump(2) + "\n");

    double sp_mean = 0.0;
    double ve_mean = 0.0;
    for (const auto& e : summary["spacing_rmse"]) {
      sp_mean += e["mean"].get<double>();
    }
    for (const auto& e : summary["velocity_rmse"]) {
      ve_mean += e["mean"].get<double>();
    }
    const auto nf = static_cast<double>(args.scenario.n_followers);
    std::cout << "run complete: controller=" << to_string(args.controller)
              << " trials=" << args.trials << " out=" << args.out_dir.string()
              << "\n  mean spacing RMSE " << num4(sp_mean / nf)
              << " m, mean velocity RMSE " << num4(ve_mean / nf) << " m/s\n";
    if (result) {
      result->telemetry = std::move(trials);
      result->summary = std::move(summary);
    }
    return kExitOk;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
}

struct RunFlags {
  std::string scenario;
  std::string controller;
  std::string from_manifest;
  int n = 0;
  int trials = 1;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool allow_unstable = false;
};

int do_run(const RunFlags& flags) {
  try {
    RunArgs args;
    args.trials = flags.trials;
    args.seed = flags.seed;
    args.allow_unstable = flags.allow_unstable;

    if (!flags.from_manifest.empty()) {
      if (!flags.scenario.empty()) {
        std::cerr << "error: --scenario and --from-manifest are mutually "
                     "exclusive\n";
        return kExitConfig;
      }
      const nlohmann::json m =
          nlohmann::json::parse(read_text_file(flags.from_manifest));
      if (m.value("schema", "") != "platoon-manifest/v1") {
        std::cerr << "error: not a manifest: " << flags.from_manifest << "\n";
        return kExitConfig;
      }
      const std::string recorded_hash = m.at("scenario_hash").get<std::string>();
      fs::path src = m.at("scenario_copy").get<std::string>();
      if (!fs::exists(src)) src = m.at("scenario_path").get<std::string>();
      args.scenario_text = read_text_file(src);
      if (fnv1a64_hex(args.scenario_text) != recorded_hash) {
        std::cerr << "error: scenario file changed since manifest was "
                     "written: "
                  << src.string() << "\n";
        return kExitConfig;
      }
      args.scenario_path = src.string();
      args.scenario = parse_scenario(args.scenario_text);
      args.scenario.n_followers = m.at("n_followers").get<int>();
      const auto kind =
          controller_from_string(m.at("controller").get<std::string>());
      if (!kind) {
        std::cerr << "error: manifest has unknown controller\n";
        return kExitConfig;
      }
      args.controller = *kind;
      args.seed = m.at("seed").get<std::uint64_t>();
      args.trials = m.at("trials").get<int>();
    } else {
      if (flags.scenario.empty()) {
        std::cerr << "error: --scenario is required\n";
        return kExitConfig;
      }
      const fs::path path = resolve_scenario_path(flags.scenario);
      args.scenario_path = path.string();
      args.scenario_text = read_text_file(path);
      args.scenario = parse_scenario(args.scenario_text);
      if (flags.n > 0) args.scenario.n_followers = flags.n;

      std::optional<ControllerKind> kind = args.scenario.controller;
      if (!flags.controller.empty()) {
        kind = controller_from_string(flags.controller);
        if (!kind) {
          std::cerr << "error: unknown controller '" << flags.controller
                    << "' (expected lfbk, dmpc-qp, or dmpc-lp)\n";
          return kExitConfig;
        }
      }
      if (!kind) {
        std::cerr << "error: no controller given (flag or scenario field)\n";
        return kExitConfig;
      }
      args.controller = *kind;
    }

    args.out_dir = resolve_out_dir(flags.out_dir) / to_string(args.controller);
    return execute_run(std::move(args));
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
}

struct SweepFlags {
  std::string scenario;
  std::vector<std::string> controllers{"lfbk", "dmpc-qp", "dmpc-lp"};
  std::vector<int> n_list;
  int trials = 1;
  std::uint64_t seed = 0;
  std::string out_dir;
  bool allow_unstable = false;
};

int do_sweep(const SweepFlags& flags) {
  std::vector<ControllerKind> kinds;
  std::string scenario_text;
  Scenario base;
  try {
    for (const std::string& name : flags.controllers) {
      const auto kind = controller_from_string(name);
      if (!kind) {
        std::cerr << "error: unknown controller '" << name << "'\n";
        return kExitConfig;
      }
      kinds.push_back(*kind);
    }
    if (flags.n_list.empty()) {
      std::cerr << "error: --n-list must not be empty\n";
      return kExitConfig;
    }
    for (int n : flags.n_list) {
      if (n < 1) {
        std::cerr << "error: platoon sizes must be >= 1\n";
        return kExitConfig;
      }
    }
    const fs::path path = resolve_scenario_path(flags.scenario);
    scenario_text = read_text_file(path);
    base = parse_scenario(scenario_text);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }

  const fs::path sweep_dir = resolve_out_dir(flags.out_dir) / "sweep";
  nlohmann::json rows = nlohmann::json::array();
  int worst = kExitOk;

  std::cout << "controller  N    spacing RMSE  velocity RMSE  peak v     "
               "divergent  status\n";
  for (const ControllerKind kind : kinds) {
    for (const int n : flags.n_list) {
      RunArgs args;
      args.scenario = base;
      args.scenario.n_followers = n;
      args.scenario_path = flags.scenario;
      args.scenario_text = scenario_text;
      args.controller = kind;
      args.trials = flags.trials;
      args.seed = flags.seed;
      args.allow_unstable = flags.allow_unstable;
      args.out_dir = sweep_dir / (std::string(to_string(kind)) + "_n" +
                                  std::to_string(n));

      RunResult res;
      const int rc = execute_run(std::move(args), &res);
      worst = std::max(worst, rc);

      nlohmann::json row{{"controller", to_string(kind)},
                         {"n", n},
                         {"trials", flags.trials},
                         {"seed", flags.seed},
                         {"status", rc == kExitOk ? "ok" : "failed"},
                         {"out_dir",
                          (sweep_dir / (std::string(to_string(kind)) + "_n" +
                                        std::to_string(n)))
                              .string()}};
      char line[160];
      if (rc == kExitOk) {
        const nlohmann::json& s = res.summary;
        double sp = 0.0;
        double ve = 0.0;
        for (const auto& e : s["spacing_rmse"]) sp += e["mean"].get<double>();
        for (const auto& e : s["velocity_rmse"]) ve += e["mean"].get<double>();
        sp /= n;
        ve /= n;
        const double peak = s["peak_velocity_last_vehicle"]["mean"].get<double>();
        const bool div = !s["scaling"].is_null() &&
                         s["scaling"]["divergence"].get<bool>();
        row["mean_spacing_rmse"] = sp;
        row["mean_velocity_rmse"] = ve;
        row["peak_velocity_last_vehicle"] = peak;
        row["divergence"] = div;
        row["scaling"] = s["scaling"];
        std::snprintf(line, sizeof(line),
                      "%-10s  %-3d  %-12s  %-13s  %-9s  %-9s  ok\n",
                      to_string(kind), n, num4(sp).c_str(), num4(ve).c_str(),
                      num4(peak).c_str(), div ? "yes" : "no");
      } else {
        std::snprintf(line, sizeof(line),
                      "%-10s  %-3d  %-12s  %-13s  %-9s  %-9s  failed\n",
                      to_string(kind), n, "-", "-", "-", "-");
      }
      std::cout << line;
      rows.push_back(std::move(row));
    }
  }

  try {
    const nlohmann::json doc{{"schema", "platoon-sweep/v1"}, {"rows", rows}};
    write_text_file(sweep_dir / "sweep_summary.json", doc.dump(2) + "\n");
    std::cout << "sweep summary: " << (sweep_dir / "sweep_summary.json").string()
              << "\n";
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
  return worst;
}

struct PlotFlags {
  std::string results_dir;
  std::string kind;
  std::string out;
};

std::vector<fs::path> discover_run_dirs(const fs::path& root) {
  std::vector<fs::path> dirs;
  auto probe = [&dirs](const fs::path& dir) {
    if (fs::exists(dir / "summary.json")) dirs.push_back(dir);
  };
  probe(root);
  if (fs::is_directory(root)) {
    for (const auto& child : fs::directory_iterator(root)) {
      if (!child.is_directory()) continue;
      probe(child.path());
      for (const auto& grand : fs::directory_iterator(child.path())) {
        if (grand.is_directory()) probe(grand.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

int do_plot(const PlotFlags& flags) {
  const fs::path root =
      flags.results_dir.empty() ? resolve_out_dir("") : fs::path(flags.results_dir);
  try {
    if (!fs::exists(root)) {
      std::cerr << "error: results directory not found: " << root.string()
                << "\n";
      return kExitConfig;
    }
    const std::vector<fs::path> dirs = discover_run_dirs(root);
    if (dirs.empty()) {
      std::cerr << "error: no summary.json found under " << root.string()
                << "\n";
      return kExitConfig;
    }

    struct Loaded {
      nlohmann::json summary;
      std::string label;
      std::string color;
      fs::path dir;
    };
    std::vector<Loaded> runs;
    for (const fs::path& dir : dirs) {
      Loaded l;
      l.summary = nlohmann::json::parse(read_text_file(dir / "summary.json"));
      const std::string name = l.summary.value("controller", "?");
      const auto kind = controller_from_string(name);
      l.color = kind ? controller_color(*kind) : "#7f7f7f";
      l.label = name;
      if (dirs.size() > static_cast<std::size_t>(3)) {
        l.label += " N=" + std::to_string(
                              l.summary.value("n_followers", 0));
      }
      l.dir = dir;
      runs.push_back(std::move(l));
    }

    std::string svg;
    if (flags.kind == "trajectories") {
      std::vector<Telemetry> tels;
      tels.reserve(runs.size());
      std::vector<ControllerTrace> panels;
      for (const Loaded& l : runs) {
        const fs::path csv = l.dir / "trial_000.csv";
        if (!fs::exists(csv)) {
          std::cerr << "error: missing " << csv.string() << "\n";
          return kExitConfig;
        }
        tels.push_back(telemetry_from_csv(read_text_file(csv)));
      }
      for (std::size_t i = 0; i < runs.size(); ++i) {
        panels.push_back({runs[i].label, runs[i].color, &tels[i]});
      }
      svg = render_trajectories(panels);
    } else if (flags.kind == "rmse-bars") {
      std::vector<RmseBarGroup> groups;
      for (const Loaded& l : runs) {
        RmseBarGroup g;
        g.label = l.label;
        g.color = l.color;
        for (const auto& e : l.summary.at("spacing_rmse")) {
          g.spacing.push_back({e.at("mean").get<double>(),
                               e.at("std").get<double>(),
                               e.at("ci_half_width").get<double>()});
        }
        for (const auto& e : l.summary.at("velocity_rmse")) {
          g.velocity.push_back({e.at("mean").get<double>(),
                                e.at("std").get<double>(),
                                e.at("ci_half_width").get<double>()});
        }
        groups.push_back(std::move(g));
      }
      svg = render_rmse_bars(groups);
    } else {
      std::vector<ScalingSeries> series;
      for (const Loaded& l : runs) {
        ScalingSeries s;
        s.label = l.label;
        s.color = l.color;
        for (const auto& e : l.summary.at("spacing_rmse")) {
          s.per_vehicle_rmse.push_back(e.at("mean").get<double>());
        }
        series.push_back(std::move(s));
      }
      svg = render_scaling(series);
    }

    const fs::path out = flags.out.empty()
                             ? root / (flags.kind + ".svg")
                             : fs::path(flags.out);
    write_text_file(out, svg);
    std::cout << "wrote " << out.string() << "\n";
    return kExitOk;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitRuntime;
  }
}

int do_validate(const std::string& scenario_arg) {
  Scenario sc;
  try {
    const fs::path path = resolve_scenario_path(scenario_arg);
    sc = load_scenario(path.string());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }

  std::vector<ControllerKind> kinds;
  if (sc.controller && *sc.controller == ControllerKind::Lfbk) {
    std::cout << "lfbk: no pairwise weight condition applies\n";
    return kExitOk;
  }
  if (sc.controller) {
    kinds.push_back(*sc.controller);
  } else {
    kinds = {ControllerKind::DmpcQp, ControllerKind::DmpcLp};
  }

  bool all_ok = true;
  for (const ControllerKind kind : kinds) {
    try {
      std::vector<DmpcConfig> cfgs(static_cast<std::size_t>(sc.n_followers),
                                   make_dmpc_config(sc, kind));
      const StabilityReport rep = check_stability_conditions(cfgs);
      std::cout << to_string(kind) << ":"
                << (rep.all_satisfied ? " Satisfied" : " Violated") << "\n";
      print_stability_report(rep, std::cout);
      all_ok = all_ok && rep.all_satisfied;
    } catch (const std::exception& ex) {
      std::cerr << "error: " << ex.what() << "\n";
      return kExitConfig;
    }
  }
  return all_ok ? kExitOk : kExitConfig;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"longitudinal vehicle platoon simulation and benchmarking"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "simulate and write CSV/JSON results");
  run->add_option("--scenario", run_flags.scenario, "scenario file or name");
  run->add_option("--controller", run_flags.controller,
                  "lfbk, dmpc-qp, or dmpc-lp");
  run->add_option("--n", run_flags.n, "override follower count");
  run->add_option("--trials", run_flags.trials, "number of trials")
      ->check(CLI::PositiveNumber);
  run->add_option("--seed", run_flags.seed, "base RNG seed");
  run->add_option("--out-dir", run_flags.out_dir,
                  "output root (default $PLATOON_OUT_DIR or ./out)");
  run->add_flag("--allow-unstable", run_flags.allow_unstable,
                "downgrade stability violations to warnings");
  run->add_option("--from-manifest", run_flags.from_manifest,
                  "reproduce a previous run from its manifest");

  SweepFlags sweep_flags;
  CLI::App* sweep =
      app.add_subcommand("sweep", "cross product of controllers and sizes");
  sweep->add_option("--scenario", sweep_flags.scenario, "scenario file or name")
      ->required();
  sweep->add_option("--controllers", sweep_flags.controllers,
                    "subset of lfbk,dmpc-qp,dmpc-lp")
      ->delimiter(',');
  sweep->add_option("--n-list", sweep_flags.n_list, "platoon sizes")
      ->required()
      ->delimiter(',');
  sweep->add_option("--trials", sweep_flags.trials, "trials per cell")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sweep_flags.seed, "base RNG seed");
  sweep->add_option("--out-dir", sweep_flags.out_dir, "output root");
  sweep->add_flag("--allow-unstable", sweep_flags.allow_unstable,
                  "downgrade stability violations to warnings");

  PlotFlags plot_flags;
  CLI::App* plot = app.add_subcommand("plot", "render SVG views of results");
  plot->add_option("--results-dir", plot_flags.results_dir,
                   "directory holding run outputs");
  plot->add_option("--kind", plot_flags.kind,
                   "trajectories, rmse-bars, or scaling")
      ->required()
      ->check(CLI::IsMember({"trajectories", "rmse-bars", "scaling"}));
  plot->add_option("--out", plot_flags.out, "output SVG path");

  std::string validate_scenario;
  CLI::App* validate_cmd =
      app.add_subcommand("validate", "check stability conditions");
  validate_cmd->add_option("--scenario", validate_scenario,
                           "scenario file or name")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (run->parsed()) return do_run(run_flags);
  if (sweep->parsed()) return do_sweep(sweep_flags);
  if (plot->parsed()) return do_plot(plot_flags);
  if (validate_cmd->parsed()) return do_validate(validate_scenario);
  return kExitConfig;
}

}  // namespace platoon
