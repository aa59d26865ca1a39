#include "platoon/engine.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "platoon/dmpc.hpp"

namespace platoon {

namespace {

void throw_if_invalid(const ValidationReport& rep, const char* what) {
  if (rep.ok()) return;
  std::ostringstream oss;
  oss << what << ":";
  for (const auto& e : rep.errors) oss << " " << e << ";";
  throw std::invalid_argument(oss.str());
}

Telemetry run_trial_impl(const Scenario& sc, std::uint64_t seed,
                         const std::vector<int>* follower_order) {
  throw_if_invalid(validate(sc), "run_trial: invalid scenario");
  if (!sc.controller) {
    throw std::invalid_argument("run_trial: scenario has no controller");
  }
  const ControllerKind kind = *sc.controller;
  const bool dmpc = kind != ControllerKind::Lfbk;
  const int nv = sc.n_followers + 1;
  const int steps = sc.num_steps();
  const DynamicsParams dyn = sc.dynamics;
  const double dt = dyn.dt;

  std::vector<int> order(static_cast<std::size_t>(sc.n_followers));
  std::iota(order.begin(), order.end(), 1);
  if (follower_order) {
    auto sorted = *follower_order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != order) {
      throw std::invalid_argument(
          "run_trial: follower_order must be a permutation of 1..N");
    }
    order = *follower_order;
  }

  std::vector<VehicleState> x(static_cast<std::size_t>(nv));
  const double v0 = sc.initial_speed();
  const double gap0 = sc.spacing0();
  for (int i = 0; i < nv; ++i) {
    x[static_cast<std::size_t>(i)] = {-static_cast<double>(i) * gap0, v0};
  }

  // One dynamics and one sensing substream per vehicle, so draws do not
  // depend on the order followers are stepped in.
  std::vector<GaussianStream> dyn_noise;
  std::vector<GaussianStream> sense_noise;
  dyn_noise.reserve(static_cast<std::size_t>(nv));
  sense_noise.reserve(static_cast<std::size_t>(nv));
  for (int i = 0; i < nv; ++i) {
    const auto id = static_cast<std::uint64_t>(i);
    dyn_noise.emplace_back(substream(seed, 2 * id));
    sense_noise.emplace_back(substream(seed, 2 * id + 1));
  }

  std::vector<DmpcController> controllers;
  int horizon = 0;
  if (dmpc) {
    const DmpcConfig cfg = make_dmpc_config(sc, kind);
    horizon = cfg.horizon;
    controllers.reserve(static_cast<std::size_t>(sc.n_followers));
    for (int i = 1; i < nv; ++i) {
      controllers.emplace_back(cfg, dyn);
      controllers.back().reset(x[static_cast<std::size_t>(i)]);
    }
  }

  // inbox[i]: announcement from vehicle i, consumed by vehicle i+1 this
  // step; tags carry the step it was computed at (-1 for the synthetic
  // initial announcements).
  std::vector<Trajectory> inbox;
  std::vector<Trajectory> outbox;
  std::vector<int> inbox_tag(static_cast<std::size_t>(nv), -1);
  if (dmpc) {
    inbox.resize(static_cast<std::size_t>(nv));
    outbox.resize(static_cast<std::size_t>(nv));
    for (int i = 0; i < nv; ++i) {
      inbox[static_cast<std::size_t>(i)] =
          init_assumed(x[static_cast<std::size_t>(i)], horizon, dyn);
    }
  }

  Telemetry tel;
  tel.scenario_name = sc.name;
  tel.controller = kind;
  tel.seed = seed;
  tel.n_followers = sc.n_followers;
  tel.steps = steps;
  tel.dt = dt;
  tel.d_des = sc.d_des;
  tel.records.resize(static_cast<std::size_t>(steps) *
                     static_cast<std::size_t>(nv));

  std::vector<double> u(static_cast<std::size_t>(nv), 0.0);
  using clock = std::chrono::steady_clock;

  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    auto* row = &tel.records[static_cast<std::size_t>(k) *
                             static_cast<std::size_t>(nv)];

    u[0] = leader_reference_input(t, sc.profile, dyn);
    if (dmpc) {
      const VehicleState predicted = step_dynamics(x[0], u[0], dyn);
      outbox[0] =
          leader_assumed_trajectory(predicted, t + dt, sc.profile, dyn,
                                    horizon);
    }
    row[0].t = t;
    row[0].vehicle = 0;
    row[0].p = x[0].p;
    row[0].v = x[0].v;
    row[0].u = u[0];

    for (int i : order) {
      const auto is = static_cast<std::size_t>(i);
      const double gap =
          measure_spacing(x[is - 1].p, x[is].p, sc.noise, sense_noise[is]);
      StepRecord& rec = row[i];
      rec.t = t;
      rec.vehicle = i;
      rec.p = x[is].p;
      rec.v = x[is].v;
      rec.gap_measured = gap;
      if (dmpc) {
        DmpcController& ctrl = controllers[is - 1];
        const auto start = clock::now();
        const DmpcStepResult res = ctrl.step(x[is], gap, inbox[is - 1]);
        const auto stop = clock::now();
        outbox[is] = ctrl.outgoing_message();
        u[is] = res.u_apply;
        rec.u = res.u_apply;
        rec.has_solver = true;
        rec.solver_status = res.status;
        rec.iterations = res.iterations;
        rec.fallback = res.fallback;
        rec.msg_step = inbox_tag[is - 1];
        rec.solve_time_ms =
            std::chrono::duration<double, std::milli>(stop - start).count();
      } else {
        u[is] = lfbk_control(x[is], gap, x[is - 1].v, sc.lfbk, sc.d_des);
        rec.u = u[is];
      }
    }

    for (int i = 0; i < nv; ++i) {
      const auto is = static_cast<std::size_t>(i);
      x[is] = step_dynamics_noisy(x[is], u[is], dyn, sc.noise, dyn_noise[is]);
    }
    if (dmpc) {
      inbox.swap(outbox);
      std::fill(inbox_tag.begin(), inbox_tag.end(), k);
    }
  }
  return tel;
}

}  // namespace

double leader_reference_input(double t,
                              const std::vector<ProfileKnot>& profile,
                              const DynamicsParams& dyn) {
  return profile_velocity(profile, t + dyn.dt);
}

Trajectory leader_assumed_trajectory(const VehicleState& predicted_next,
                                     double t_next,
                                     const std::vector<ProfileKnot>& profile,
                                     const DynamicsParams& dyn, int horizon) {
  if (horizon < 1) {
    throw std::invalid_argument("leader_assumed_trajectory: horizon < 1");
  }
  Trajectory traj;
  traj.states.resize(static_cast<std::size_t>(horizon) + 1);
  traj.inputs.resize(static_cast<std::size_t>(horizon));
  traj.states[0] = predicted_next;
  for (int j = 0; j < horizon; ++j) {
    const auto js = static_cast<std::size_t>(j);
    const double uj = leader_reference_input(t_next + j * dyn.dt, profile, dyn);
    traj.inputs[js] = uj;
    traj.states[js + 1] = step_dynamics(traj.states[js], uj, dyn);
  }
  return traj;
}

Telemetry run_trial(const Scenario& scenario, std::uint64_t seed) {
  return run_trial_impl(scenario, seed, nullptr);
}

Telemetry run_trial(const Scenario& scenario, std::uint64_t seed,
                    const std::vector<int>& follower_order) {
  return run_trial_impl(scenario, seed, &follower_order);
}

std::vector<Telemetry> run_batch(const Scenario& scenario, int trials,
                                 std::uint64_t base_seed) {
  if (trials < 1) {
    throw std::invalid_argument("run_batch: trials must be >= 1");
  }
  std::vector<Telemetry> out;
  out.reserve(static_cast<std::size_t>(trials));
  for (int k = 0; k < trials; ++k) {
    out.push_back(
        run_trial(scenario, substream(base_seed, static_cast<std::uint64_t>(k))));
  }
  return out;
}

}  // namespace platoon
