#include "platoon/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace platoon {

namespace {

using nlohmann::json;

constexpr const char* kSchemaId = "platoon-scenario/v1";

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw std::runtime_error("scenario: " + where + ": " + what);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) fail(where, "unknown key \"" + it.key() + "\"");
  }
}

const json& require(const json& obj, const char* key,
                    const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing key \"") + key + "\"");
  return *it;
}

double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<int>();
}

Eigen::Matrix2d as_matrix2(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_array() ||
      !v[1].is_array() || v[0].size() != 2 || v[1].size() != 2) {
    fail(where, "expected a 2x2 matrix as [[a,b],[c,d]]");
  }
  Eigen::Matrix2d m;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      m(r, c) = as_number(v[static_cast<std::size_t>(r)]
                           [static_cast<std::size_t>(c)],
                          where);
    }
  }
  return m;
}

json matrix2_to_json(const Eigen::Matrix2d& m) {
  return json::array({json::array({m(0, 0), m(0, 1)}),
                      json::array({m(1, 0), m(1, 1)})});
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Lfbk:
      return "lfbk";
    case ControllerKind::DmpcQp:
      return "dmpc-qp";
    case ControllerKind::DmpcLp:
      return "dmpc-lp";
  }
  return "unknown";
}

std::optional<ControllerKind> controller_from_string(std::string_view name) {
  if (name == "lfbk") return ControllerKind::Lfbk;
  if (name == "dmpc-qp") return ControllerKind::DmpcQp;
  if (name == "dmpc-lp") return ControllerKind::DmpcLp;
  return std::nullopt;
}

double profile_velocity(const std::vector<ProfileKnot>& profile, double t) {
  if (profile.empty()) {
    throw std::invalid_argument("profile_velocity: empty profile");
  }
  if (t <= profile.front().t) return profile.front().v;
  if (t >= profile.back().t) return profile.back().v;
  for (std::size_t i = 1; i < profile.size(); ++i) {
    if (t <= profile[i].t) {
      const auto& a = profile[i - 1];
      const auto& b = profile[i];
      const double f = (t - a.t) / (b.t - a.t);
      return a.v + f * (b.v - a.v);
    }
  }
  return profile.back().v;
}

int Scenario::num_steps() const {
  return static_cast<int>(std::llround(duration / dynamics.dt));
}

double Scenario::initial_speed() const {
  if (initial_velocity) return *initial_velocity;
  return profile.empty() ? 0.0 : profile.front().v;
}

double Scenario::spacing0() const {
  return initial_spacing ? *initial_spacing : d_des;
}

ValidationReport validate(const Scenario& s) {
  ValidationReport rep = validate(s.dynamics);
  if (s.name.empty()) rep.errors.push_back("name must be nonempty");
  if (!(s.duration > 0.0)) rep.errors.push_back("duration must be positive");
  if (s.num_steps() < 1) rep.errors.push_back("duration must cover >= 1 step");
  if (s.n_followers < 1) rep.errors.push_back("n_followers must be >= 1");
  if (!(s.d_des > 0.0)) rep.errors.push_back("d_des must be positive");
  if (!(s.v_min < s.v_max)) rep.errors.push_back("v_min must be < v_max");
  if (!(s.a_max > 0.0)) rep.errors.push_back("a_max must be positive");

  if (s.profile.empty()) {
    rep.errors.push_back("profile must have at least one knot");
  } else {
    if (s.profile.front().t != 0.0) {
      rep.errors.push_back("profile must start at t = 0");
    }
    for (std::size_t i = 0; i < s.profile.size(); ++i) {
      const auto& k = s.profile[i];
      if (!std::isfinite(k.t) || !std::isfinite(k.v)) {
        rep.errors.push_back("profile knots must be finite");
        break;
      }
      if (k.v < s.v_min || k.v > s.v_max) {
        rep.errors.push_back("profile velocities must lie within "
                             "[v_min, v_max]");
        break;
      }
      if (i > 0) {
        const auto& prev = s.profile[i - 1];
        if (k.t <= prev.t) {
          rep.errors.push_back("profile knot times must be strictly "
                               "increasing");
          break;
        }
        const double slope = (k.v - prev.v) / (k.t - prev.t);
        if (std::abs(slope) > s.a_max + 1e-12) {
          rep.errors.push_back("profile ramp slope exceeds a_max");
          break;
        }
      }
    }
  }

  if (!(s.noise.dynamics_std_p >= 0.0) || !(s.noise.dynamics_std_v >= 0.0) ||
      !(s.noise.sensing_std >= 0.0)) {
    rep.errors.push_back("noise stds must be >= 0");
  }
  if (!(s.lfbk.k_p > 0.0) || !(s.lfbk.k_v > 0.0)) {
    rep.errors.push_back("lfbk gains must be positive");
  }
  for (auto kind : {ControllerKind::DmpcQp, ControllerKind::DmpcLp}) {
    DmpcConfig cfg = make_dmpc_config(s, kind);
    auto sub = validate(cfg);
    for (auto& e : sub.errors) {
      rep.errors.push_back(std::string("dmpc (") +
                           to_string(cfg.cost_kind()) + "): " + e);
    }
  }
  if (s.initial_velocity &&
      (*s.initial_velocity < s.v_min || *s.initial_velocity > s.v_max)) {
    rep.errors.push_back("initial velocity must lie within [v_min, v_max]");
  }
  if (s.initial_spacing && !(*s.initial_spacing > 0.0)) {
    rep.errors.push_back("initial spacing must be positive");
  }
  return rep;
}

DmpcConfig make_dmpc_config(const Scenario& s, ControllerKind kind) {
  if (kind == ControllerKind::Lfbk) {
    throw std::invalid_argument("make_dmpc_config: lfbk has no DMPC config");
  }
  DmpcConfig cfg;
  cfg.horizon = s.dmpc_horizon;
  cfg.d_des = s.d_des;
  cfg.v_min = s.v_min;
  cfg.v_max = s.v_max;
  cfg.a_max = s.a_max;
  if (kind == ControllerKind::DmpcQp) {
    cfg.weights = s.two_norm;
  } else {
    cfg.weights = s.one_norm;
  }
  cfg.solver_tol = s.dmpc_solver_tol;
  return cfg;
}

Scenario parse_scenario(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("document", e.what());
  }
  if (!doc.is_object()) fail("document", "top level must be an object");
  check_keys(doc,
             {"schema", "name", "dt", "tau", "duration", "n_followers",
              "d_des", "bounds", "profile", "noise", "initial", "lfbk",
              "dmpc", "controller"},
             "document");
  const std::string schema =
      require(doc, "schema", "schema").get<std::string>();
  if (schema != kSchemaId) {
    fail("schema", "expected \"" + std::string(kSchemaId) + "\", got \"" +
                       schema + "\"");
  }

  Scenario s;
  s.name = require(doc, "name", "name").get<std::string>();
  s.dynamics.dt = as_number(require(doc, "dt", "dt"), "dt");
  s.dynamics.tau = as_number(require(doc, "tau", "tau"), "tau");
  s.duration = as_number(require(doc, "duration", "duration"), "duration");
  s.n_followers =
      as_int(require(doc, "n_followers", "n_followers"), "n_followers");
  s.d_des = as_number(require(doc, "d_des", "d_des"), "d_des");

  const json& bounds = require(doc, "bounds", "bounds");
  check_keys(bounds, {"v_min", "v_max", "a_max"}, "bounds");
  s.v_min = as_number(require(bounds, "v_min", "bounds.v_min"),
                      "bounds.v_min");
  s.v_max = as_number(require(bounds, "v_max", "bounds.v_max"),
                      "bounds.v_max");
  s.a_max = as_number(require(bounds, "a_max", "bounds.a_max"),
                      "bounds.a_max");

  const json& profile = require(doc, "profile", "profile");
  if (!profile.is_array() || profile.empty()) {
    fail("profile", "expected a nonempty array of [t, v] pairs");
  }
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const json& knot = profile[i];
    const std::string where = "profile[" + std::to_string(i) + "]";
    if (!knot.is_array() || knot.size() != 2) {
      fail(where, "expected a [t, v] pair");
    }
    s.profile.push_back(
        {as_number(knot[0], where + ".t"), as_number(knot[1], where + ".v")});
  }

  const json& noise = require(doc, "noise", "noise");
  check_keys(noise, {"dynamics_std_p", "dynamics_std_v", "sensing_std"},
             "noise");
  s.noise.dynamics_std_p = as_number(
      require(noise, "dynamics_std_p", "noise.dynamics_std_p"),
      "noise.dynamics_std_p");
  s.noise.dynamics_std_v = as_number(
      require(noise, "dynamics_std_v", "noise.dynamics_std_v"),
      "noise.dynamics_std_v");
  s.noise.sensing_std = as_number(
      require(noise, "sensing_std", "noise.sensing_std"), "noise.sensing_std");

  if (auto it = doc.find("initial"); it != doc.end()) {
    check_keys(*it, {"velocity", "spacing"}, "initial");
    if (auto v = it->find("velocity"); v != it->end()) {
      s.initial_velocity = as_number(*v, "initial.velocity");
    }
    if (auto v = it->find("spacing"); v != it->end()) {
      s.initial_spacing = as_number(*v, "initial.spacing");
    }
  }

  const json& lfbk = require(doc, "lfbk", "lfbk");
  check_keys(lfbk, {"k_p", "k_v"}, "lfbk");
  s.lfbk.k_p = as_number(require(lfbk, "k_p", "lfbk.k_p"), "lfbk.k_p");
  s.lfbk.k_v = as_number(require(lfbk, "k_v", "lfbk.k_v"), "lfbk.k_v");

  const json& dmpc = require(doc, "dmpc", "dmpc");
  check_keys(dmpc, {"horizon", "two_norm", "one_norm", "solver_tol"}, "dmpc");
  s.dmpc_horizon = as_int(require(dmpc, "horizon", "dmpc.horizon"),
                          "dmpc.horizon");
  if (auto it = dmpc.find("solver_tol"); it != dmpc.end()) {
    if (!it->is_array() || it->size() != 2) {
      fail("dmpc.solver_tol", "expected [eps_abs, eps_rel]");
    }
    s.dmpc_solver_tol.eps_abs =
        as_number((*it)[0], "dmpc.solver_tol.eps_abs");
    s.dmpc_solver_tol.eps_rel =
        as_number((*it)[1], "dmpc.solver_tol.eps_rel");
  }
  const json& two = require(dmpc, "two_norm", "dmpc.two_norm");
  check_keys(two, {"move_suppression", "predecessor_error", "input_deviation"},
             "dmpc.two_norm");
  s.two_norm.move_suppression = as_matrix2(
      require(two, "move_suppression", "dmpc.two_norm.move_suppression"),
      "dmpc.two_norm.move_suppression");
  s.two_norm.predecessor_error = as_matrix2(
      require(two, "predecessor_error", "dmpc.two_norm.predecessor_error"),
      "dmpc.two_norm.predecessor_error");
  s.two_norm.input_deviation = as_number(
      require(two, "input_deviation", "dmpc.two_norm.input_deviation"),
      "dmpc.two_norm.input_deviation");
  const json& one = require(dmpc, "one_norm", "dmpc.one_norm");
  check_keys(one, {"move_suppression", "predecessor_error", "input_deviation"},
             "dmpc.one_norm");
  s.one_norm.move_suppression = as_number(
      require(one, "move_suppression", "dmpc.one_norm.move_suppression"),
      "dmpc.one_norm.move_suppression");
  s.one_norm.predecessor_error = as_number(
      require(one, "predecessor_error", "dmpc.one_norm.predecessor_error"),
      "dmpc.one_norm.predecessor_error");
  s.one_norm.input_deviation = as_number(
      require(one, "input_deviation", "dmpc.one_norm.input_deviation"),
      "dmpc.one_norm.input_deviation");

  if (auto it = doc.find("controller"); it != doc.end()) {
    const std::string name = it->get<std::string>();
    auto kind = controller_from_string(name);
    if (!kind) fail("controller", "unknown controller \"" + name + "\"");
    s.controller = *kind;
  }

  auto rep = validate(s);
  if (!rep.ok()) {
    std::ostringstream oss;
    oss << "scenario: validation failed:";
    for (const auto& e : rep.errors) oss << " " << e << ";";
    throw std::runtime_error(oss.str());
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("scenario: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string scenario_to_json(const Scenario& s) {
  json doc;
  doc["schema"] = kSchemaId;
  doc["name"] = s.name;
  doc["dt"] = s.dynamics.dt;
  doc["tau"] = s.dynamics.tau;
  doc["duration"] = s.duration;
  doc["n_followers"] = s.n_followers;
  doc["d_des"] = s.d_des;
  doc["bounds"] =
      json{{"v_min", s.v_min}, {"v_max", s.v_max}, {"a_max", s.a_max}};
  json profile = json::array();
  for (const auto& k : s.profile) {
    profile.push_back(json::array({k.t, k.v}));
  }
  doc["profile"] = profile;
  doc["noise"] = json{{"dynamics_std_p", s.noise.dynamics_std_p},
                      {"dynamics_std_v", s.noise.dynamics_std_v},
                      {"sensing_std", s.noise.sensing_std}};
  if (s.initial_velocity || s.initial_spacing) {
    json initial = json::object();
    if (s.initial_velocity) initial["velocity"] = *s.initial_velocity;
    if (s.initial_spacing) initial["spacing"] = *s.initial_spacing;
    doc["initial"] = initial;
  }
  doc["lfbk"] = json{{"k_p", s.lfbk.k_p}, {"k_v", s.lfbk.k_v}};
  doc["dmpc"] = json{
      {"horizon", s.dmpc_horizon},
      {"two_norm",
       json{{"move_suppression", matrix2_to_json(s.two_norm.move_suppression)},
            {"predecessor_error",
             matrix2_to_json(s.two_norm.predecessor_error)},
            {"input_deviation", s.two_norm.input_deviation}}},
      {"one_norm", json{{"move_suppression", s.one_norm.move_suppression},
                        {"predecessor_error", s.one_norm.predecessor_error},
                        {"input_deviation", s.one_norm.input_deviation}}}};
  if (s.controller) doc["controller"] = to_string(*s.controller);
  return doc.dump(2) + "\n";
}

}  // namespace platoon
