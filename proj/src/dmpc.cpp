#include "platoon/dmpc.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace platoon {

namespace {

/// Variable and row indexing of the transcription. Variables stack
/// x(0..H) interleaved (p, v), then u(0..H-1), then (1-norm only) five
/// epigraph auxiliaries per stage. Rows stack the equalities (initial
/// state, dynamics, terminal state, terminal input), then the per-step
/// velocity-change rows, the velocity box rows, and the epigraph rows.
struct Layout {
  int h;
  int n_base;
  int n;
  int m;
  bool one_norm;

  explicit Layout(const DmpcConfig& cfg)
      : h(cfg.horizon),
        n_base(3 * cfg.horizon + 2),
        one_norm(cfg.cost_kind() == CostKind::OneNorm) {
    n = n_base + (one_norm ? 5 * h : 0);
    m = 4 * h + 5 + (one_norm ? 10 * h : 0);
  }

  int vp(int k) const { return 2 * k; }
  int vv(int k) const { return 2 * k + 1; }
  int vu(int k) const { return 2 * (h + 1) + k; }
  // j: 0 |p - a_p|, 1 |v - a_v|, 2 |p - b_p|, 3 |v - b_v|, 4 |u - u~|
  int aux(int k, int j) const { return n_base + 5 * k + j; }

  int row_init_p() const { return 0; }
  int row_init_v() const { return 1; }
  int row_dyn_p(int k) const { return 2 + 2 * k; }
  int row_dyn_v(int k) const { return 3 + 2 * k; }
  int row_term_p() const { return 2 + 2 * h; }
  int row_term_v() const { return 3 + 2 * h; }
  int row_term_u() const { return 4 + 2 * h; }
  int row_accel(int k) const { return 2 * h + 5 + k; }      // k = 0..H-1
  int row_vel(int k) const { return 3 * h + 5 + (k - 1); }  // k = 1..H
  int row_epi(int k, int j) const { return 4 * h + 5 + 10 * k + j; }
};

qp::QpProblem build_structure(const DmpcConfig& cfg,
                              const DynamicsParams& dyn) {
  const Layout lay(cfg);
  const int h = lay.h;
  const double r = dyn.dt / dyn.tau;

  qp::QpProblem prob;
  prob.q = qp::Vector::Zero(lay.n);
  prob.l = qp::Vector::Zero(lay.m);
  prob.u = qp::Vector::Zero(lay.m);

  std::vector<Eigen::Triplet<double>> at;
  at.reserve(static_cast<std::size_t>(13 * h + 3));
  at.emplace_back(lay.row_init_p(), lay.vp(0), 1.0);
  at.emplace_back(lay.row_init_v(), lay.vv(0), 1.0);
  for (int k = 0; k < h; ++k) {
    at.emplace_back(lay.row_dyn_p(k), lay.vp(k + 1), 1.0);
    at.emplace_back(lay.row_dyn_p(k), lay.vp(k), -1.0);
    at.emplace_back(lay.row_dyn_p(k), lay.vv(k), -dyn.dt);
    at.emplace_back(lay.row_dyn_v(k), lay.vv(k + 1), 1.0);
    at.emplace_back(lay.row_dyn_v(k), lay.vv(k), -(1.0 - r));
    at.emplace_back(lay.row_dyn_v(k), lay.vu(k), -r);
  }
  at.emplace_back(lay.row_term_p(), lay.vp(h), 1.0);
  at.emplace_back(lay.row_term_v(), lay.vv(h), 1.0);
  at.emplace_back(lay.row_term_u(), lay.vu(h - 1), 1.0);
  for (int k = 0; k < h; ++k) {
    at.emplace_back(lay.row_accel(k), lay.vv(k + 1), 1.0);
    at.emplace_back(lay.row_accel(k), lay.vv(k), -1.0);
  }
  for (int k = 1; k <= h; ++k) {
    at.emplace_back(lay.row_vel(k), lay.vv(k), 1.0);
  }

  std::vector<Eigen::Triplet<double>> pt;
  if (lay.one_norm) {
    for (int k = 0; k < h; ++k) {
      const int vars[5] = {lay.vp(k), lay.vv(k), lay.vp(k), lay.vv(k),
                           lay.vu(k)};
      for (int j = 0; j < 5; ++j) {
        const int up_row = lay.row_epi(k, 2 * j);      // expr - t <= ref
        const int low_row = lay.row_epi(k, 2 * j + 1); // expr + t >= ref
        at.emplace_back(up_row, vars[j], 1.0);
        at.emplace_back(up_row, lay.aux(k, j), -1.0);
        at.emplace_back(low_row, vars[j], 1.0);
        at.emplace_back(low_row, lay.aux(k, j), 1.0);
      }
    }
  } else {
    const auto& w = cfg.two_norm();
    const Eigen::Matrix2d fg =
        2.0 * (w.move_suppression + w.predecessor_error);
    pt.reserve(static_cast<std::size_t>(5 * h));
    for (int k = 0; k < h; ++k) {
      pt.emplace_back(lay.vp(k), lay.vp(k), fg(0, 0));
      pt.emplace_back(lay.vp(k), lay.vv(k), fg(0, 1));
      pt.emplace_back(lay.vv(k), lay.vp(k), fg(1, 0));
      pt.emplace_back(lay.vv(k), lay.vv(k), fg(1, 1));
      pt.emplace_back(lay.vu(k), lay.vu(k), 2.0 * w.input_deviation);
    }
  }
  prob.P.resize(lay.n, lay.n);
  prob.P.setFromTriplets(pt.begin(), pt.end());
  prob.P.makeCompressed();
  prob.A.resize(lay.m, lay.n);
  prob.A.setFromTriplets(at.begin(), at.end());
  prob.A.makeCompressed();
  return prob;
}

void fill_vectors(qp::QpProblem& prob, const Layout& lay,
                  const VehicleState& ego, const DmpcControllerState& ctrl,
                  const DmpcConfig& cfg, const DynamicsParams& dyn) {
  const int h = lay.h;
  const auto& self = ctrl.assumed_self;
  const auto& pred = ctrl.assumed_pred;
  const double u_tilde = ego.v;
  const double dv = dyn.dt * cfg.a_max;

  prob.l[lay.row_init_p()] = prob.u[lay.row_init_p()] = ego.p;
  prob.l[lay.row_init_v()] = prob.u[lay.row_init_v()] = ego.v;
  for (int k = 0; k < h; ++k) {
    prob.l[lay.row_dyn_p(k)] = prob.u[lay.row_dyn_p(k)] = 0.0;
    prob.l[lay.row_dyn_v(k)] = prob.u[lay.row_dyn_v(k)] = 0.0;
  }
  const double term_p = pred.states[static_cast<std::size_t>(h)].p - cfg.d_des;
  const double term_v = pred.states[static_cast<std::size_t>(h)].v;
  prob.l[lay.row_term_p()] = prob.u[lay.row_term_p()] = term_p;
  prob.l[lay.row_term_v()] = prob.u[lay.row_term_v()] = term_v;
  prob.l[lay.row_term_u()] = prob.u[lay.row_term_u()] = term_v;
  for (int k = 0; k < h; ++k) {
    prob.l[lay.row_accel(k)] = -dv;
    prob.u[lay.row_accel(k)] = dv;
  }
  for (int k = 1; k <= h; ++k) {
    prob.l[lay.row_vel(k)] = cfg.v_min;
    prob.u[lay.row_vel(k)] = cfg.v_max;
  }

  prob.q.setZero();
  if (lay.one_norm) {
    const auto& w = cfg.one_norm();
    for (int k = 0; k < h; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      prob.q[lay.aux(k, 0)] = w.move_suppression;
      prob.q[lay.aux(k, 1)] = w.move_suppression;
      prob.q[lay.aux(k, 2)] = w.predecessor_error;
      prob.q[lay.aux(k, 3)] = w.predecessor_error;
      prob.q[lay.aux(k, 4)] = w.input_deviation;
      const double refs[5] = {self.states[ks].p, self.states[ks].v,
                              pred.states[ks].p - cfg.d_des,
                              pred.states[ks].v, u_tilde};
      for (int j = 0; j < 5; ++j) {
        prob.l[lay.row_epi(k, 2 * j)] = -qp::kInf;
        prob.u[lay.row_epi(k, 2 * j)] = refs[j];
        prob.l[lay.row_epi(k, 2 * j + 1)] = refs[j];
        prob.u[lay.row_epi(k, 2 * j + 1)] = qp::kInf;
      }
    }
  } else {
    const auto& w = cfg.two_norm();
    for (int k = 0; k < h; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      const Eigen::Vector2d a(self.states[ks].p, self.states[ks].v);
      const Eigen::Vector2d b(pred.states[ks].p - cfg.d_des,
                              pred.states[ks].v);
      const Eigen::Vector2d lin =
          -2.0 * (w.move_suppression * a + w.predecessor_error * b);
      prob.q[lay.vp(k)] = lin[0];
      prob.q[lay.vv(k)] = lin[1];
      prob.q[lay.vu(k)] = -2.0 * w.input_deviation * u_tilde;
    }
  }
}

qp::Vector pack_primal(const Layout& lay, const Trajectory& traj,
                       const DmpcControllerState& ctrl, const DmpcConfig& cfg,
                       double u_tilde) {
  qp::Vector z = qp::Vector::Zero(lay.n);
  for (int k = 0; k <= lay.h; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    z[lay.vp(k)] = traj.states[ks].p;
    z[lay.vv(k)] = traj.states[ks].v;
  }
  for (int k = 0; k < lay.h; ++k) {
    z[lay.vu(k)] = traj.inputs[static_cast<std::size_t>(k)];
  }
  if (lay.one_norm) {
    for (int k = 0; k < lay.h; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      z[lay.aux(k, 0)] =
          std::abs(traj.states[ks].p - ctrl.assumed_self.states[ks].p);
      z[lay.aux(k, 1)] =
          std::abs(traj.states[ks].v - ctrl.assumed_self.states[ks].v);
      z[lay.aux(k, 2)] = std::abs(
          traj.states[ks].p - (ctrl.assumed_pred.states[ks].p - cfg.d_des));
      z[lay.aux(k, 3)] =
          std::abs(traj.states[ks].v - ctrl.assumed_pred.states[ks].v);
      z[lay.aux(k, 4)] = std::abs(traj.inputs[ks] - u_tilde);
    }
  }
  return z;
}

Trajectory unpack_plan(const Layout& lay, const qp::Vector& z) {
  Trajectory t;
  t.states.resize(static_cast<std::size_t>(lay.h) + 1);
  t.inputs.resize(static_cast<std::size_t>(lay.h));
  for (int k = 0; k <= lay.h; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    t.states[ks].p = z[lay.vp(k)];
    t.states[ks].v = z[lay.vv(k)];
  }
  for (int k = 0; k < lay.h; ++k) {
    t.inputs[static_cast<std::size_t>(k)] = z[lay.vu(k)];
  }
  return t;
}

/// Solve step shared by the free function and the controller class; the
/// solver must already hold the current problem and any warm start.
DmpcStepResult solve_and_advance(const VehicleState& ego,
                                 DmpcControllerState& ctrl,
                                 const DmpcConfig& cfg,
                                 const DynamicsParams& dyn,
                                 qp::QpSolver& solver, const Layout& lay) {
  qp::QpSolution qsol = solver.solve();

  DmpcStepResult res;
  res.status = qsol.status;
  res.iterations = qsol.iterations;
  res.polished = qsol.polished;
  if (qsol.status == qp::QpStatus::Solved) {
    res.plan = unpack_plan(lay, qsol.z_star);
    res.u_apply = res.plan.inputs[0];
    ctrl.last_solution = res.plan;
    ctrl.assumed_self = shift_assumed(res.plan, dyn);
  } else {
    // keep following the announced trajectory so the announcement stays
    // truthful; without any plan, hold the current velocity
    res.fallback = true;
    res.u_apply = ctrl.last_solution ? ctrl.assumed_self.inputs[0] : ego.v;
    res.plan = ctrl.assumed_self;
    ctrl.assumed_self = shift_assumed(ctrl.assumed_self, dyn);
  }
  return res;
}

void throw_if_invalid(const ValidationReport& rep, const char* what) {
  if (rep.ok()) return;
  std::ostringstream oss;
  oss << what << ":";
  for (const auto& e : rep.errors) oss << " " << e << ";";
  throw std::invalid_argument(oss.str());
}

}  // namespace

const char* to_string(CostKind kind) {
  return kind == CostKind::SquaredTwoNorm ? "squared-2-norm" : "1-norm";
}

ValidationReport validate(const DmpcConfig& cfg) {
  ValidationReport rep;
  if (cfg.horizon < 2) rep.errors.push_back("horizon must be >= 2");
  if (!(cfg.d_des > 0.0)) rep.errors.push_back("d_des must be positive");
  if (!(cfg.v_min < cfg.v_max)) rep.errors.push_back("v_min must be < v_max");
  if (!(cfg.a_max > 0.0)) rep.errors.push_back("a_max must be positive");
  if (!(cfg.solver_tol.eps_abs > 0.0) || !(cfg.solver_tol.eps_rel >= 0.0)) {
    rep.errors.push_back("solver_tol must be positive");
  }
  if (cfg.cost_kind() == CostKind::SquaredTwoNorm) {
    const auto& w = cfg.two_norm();
    auto check_pd = [&rep](const Eigen::Matrix2d& m, const char* name) {
      if (m(0, 1) != m(1, 0)) {
        rep.errors.push_back(std::string(name) + " must be symmetric");
        return;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
      if (es.eigenvalues().minCoeff() <= 0.0) {
        rep.errors.push_back(std::string(name) +
                             " must be positive definite");
      }
    };
    check_pd(w.move_suppression, "move_suppression weight");
    check_pd(w.predecessor_error, "predecessor_error weight");
    if (!(w.input_deviation > 0.0)) {
      rep.errors.push_back("input_deviation weight must be positive");
    }
  } else {
    const auto& w = cfg.one_norm();
    if (!(w.move_suppression > 0.0) || !(w.predecessor_error > 0.0) ||
        !(w.input_deviation > 0.0)) {
      rep.errors.push_back("1-norm weights must be positive");
    }
  }
  return rep;
}

Trajectory anchor_predecessor(const Trajectory& msg, const VehicleState& ego,
                              double measured_gap) {
  if (msg.states.empty()) {
    throw std::invalid_argument("anchor_predecessor: empty message");
  }
  Trajectory out = msg;
  const double base = ego.p + measured_gap - msg.states[0].p;
  for (auto& s : out.states) s.p += base;
  return out;
}

qp::QpProblem transcribe_dmpc(const VehicleState& ego,
                              const DmpcControllerState& ctrl,
                              const DmpcConfig& cfg,
                              const DynamicsParams& dyn) {
  throw_if_invalid(validate(cfg), "transcribe_dmpc: invalid config");
  throw_if_invalid(validate(dyn), "transcribe_dmpc: invalid dynamics");
  if (ctrl.assumed_self.horizon() != cfg.horizon ||
      ctrl.assumed_pred.horizon() != cfg.horizon) {
    throw std::invalid_argument(
        "transcribe_dmpc: trajectory horizon does not match config");
  }
  const Layout lay(cfg);
  qp::QpProblem prob = build_structure(cfg, dyn);
  fill_vectors(prob, lay, ego, ctrl, cfg, dyn);
  return prob;
}

double dmpc_stage_cost(const Trajectory& plan, const Trajectory& assumed_self,
                       const Trajectory& assumed_pred, const DmpcConfig& cfg,
                       double u_tilde) {
  const int h = cfg.horizon;
  if (plan.horizon() != h || assumed_self.horizon() != h ||
      assumed_pred.horizon() != h) {
    throw std::invalid_argument("dmpc_stage_cost: horizon mismatch");
  }
  double total = 0.0;
  for (int k = 0; k < h; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    const Eigen::Vector2d e1(plan.states[ks].p - assumed_self.states[ks].p,
                             plan.states[ks].v - assumed_self.states[ks].v);
    const Eigen::Vector2d e2(
        plan.states[ks].p - (assumed_pred.states[ks].p - cfg.d_des),
        plan.states[ks].v - assumed_pred.states[ks].v);
    const double e3 = plan.inputs[ks] - u_tilde;
    if (cfg.cost_kind() == CostKind::SquaredTwoNorm) {
      const auto& w = cfg.two_norm();
      total += e1.dot(w.move_suppression * e1) +
               e2.dot(w.predecessor_error * e2) +
               w.input_deviation * e3 * e3;
    } else {
      const auto& w = cfg.one_norm();
      total += w.move_suppression * e1.lpNorm<1>() +
               w.predecessor_error * e2.lpNorm<1>() +
               w.input_deviation * std::abs(e3);
    }
  }
  return total;
}

DmpcStepResult dmpc_control(const VehicleState& ego, DmpcControllerState& ctrl,
                            const DmpcConfig& cfg, const DynamicsParams& dyn,
                            qp::QpSolver& solver) {
  const Layout lay(cfg);
  qp::QpProblem prob = transcribe_dmpc(ego, ctrl, cfg, dyn);
  if (solver.is_setup() && solver.same_matrices(prob)) {
    solver.update_vectors(prob.q, prob.l, prob.u);
  } else {
    solver.setup(prob);
  }
  if (ctrl.last_solution) {
    solver.warm_start_primal(
        pack_primal(lay, ctrl.assumed_self, ctrl, cfg, ego.v));
  }
  return solve_and_advance(ego, ctrl, cfg, dyn, solver, lay);
}

/// Shifting last step's plan keeps it consistent with the old anchor,
/// not the new one: the measured state moves the initial rows and the
/// refreshed announcements move the terminal pins. The minimum-norm
/// correction restoring every equality row spreads those jumps across
/// the whole horizon, so the warm point re-enters the solver's
/// feasibility tolerance on quiet steps instead of paying a full
/// re-solve. The equality block never changes between steps, so its
/// Gram factorization is built once.
struct WarmRepair {
  Eigen::SparseMatrix<double> rows;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> gram;
  bool ok = false;
};

namespace {

std::unique_ptr<WarmRepair> make_warm_repair(const qp::QpProblem& prob,
                                             const Layout& lay) {
  auto rep = std::make_unique<WarmRepair>();
  const int me = 2 * lay.h + 5;
  std::vector<Eigen::Triplet<double>> ts;
  for (int c = 0; c < lay.n_base; ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(prob.A, c); it; ++it) {
      if (it.row() < me) ts.emplace_back(static_cast<int>(it.row()), c,
                                         it.value());
    }
  }
  rep->rows.resize(me, lay.n_base);
  rep->rows.setFromTriplets(ts.begin(), ts.end());
  const Eigen::SparseMatrix<double> gram_mat =
      rep->rows * Eigen::SparseMatrix<double>(rep->rows.transpose());
  rep->gram.compute(gram_mat);
  rep->ok = rep->gram.info() == Eigen::Success;
  return rep;
}

void apply_warm_repair(const WarmRepair& rep, const qp::QpProblem& prob,
                       const Layout& lay, const DmpcControllerState& ctrl,
                       const DmpcConfig& cfg, double u_tilde, qp::Vector& z) {
  const int me = 2 * lay.h + 5;
  const qp::Vector resid = prob.l.head(me) - rep.rows * z.head(lay.n_base);
  z.head(lay.n_base) += rep.rows.transpose() * rep.gram.solve(resid);
  if (!lay.one_norm) return;
  for (int k = 0; k < lay.h; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    z[lay.aux(k, 0)] =
        std::abs(z[lay.vp(k)] - ctrl.assumed_self.states[ks].p);
    z[lay.aux(k, 1)] =
        std::abs(z[lay.vv(k)] - ctrl.assumed_self.states[ks].v);
    z[lay.aux(k, 2)] = std::abs(
        z[lay.vp(k)] - (ctrl.assumed_pred.states[ks].p - cfg.d_des));
    z[lay.aux(k, 3)] =
        std::abs(z[lay.vv(k)] - ctrl.assumed_pred.states[ks].v);
    z[lay.aux(k, 4)] = std::abs(z[lay.vu(k)] - u_tilde);
  }
}

}  // namespace

DmpcController::DmpcController(DmpcConfig cfg, DynamicsParams dyn)
    : cfg_(std::move(cfg)), dyn_(dyn) {
  throw_if_invalid(validate(cfg_), "DmpcController: invalid config");
  throw_if_invalid(validate(dyn_), "DmpcController: invalid dynamics");
  solver_.settings().tol = cfg_.solver_tol;
}

DmpcController::DmpcController(DmpcController&&) noexcept = default;
DmpcController& DmpcController::operator=(DmpcController&&) noexcept = default;
DmpcController::~DmpcController() = default;

void DmpcController::reset(const VehicleState& x0) {
  state_.assumed_self = init_assumed(x0, cfg_.horizon, dyn_);
  state_.assumed_pred = state_.assumed_self;
  state_.last_solution.reset();
  structure_ready_ = false;
}

DmpcStepResult DmpcController::step(const VehicleState& ego,
                                    double measured_gap,
                                    const Trajectory& msg) {
  if (state_.assumed_self.horizon() != cfg_.horizon) {
    throw std::logic_error("DmpcController: step called before reset");
  }
  if (msg.horizon() != cfg_.horizon) {
    throw std::invalid_argument(
        "DmpcController: message horizon does not match config");
  }
  state_.assumed_pred = anchor_predecessor(msg, ego, measured_gap);

  const Layout lay(cfg_);
  if (!structure_ready_) {
    prob_ = build_structure(cfg_, dyn_);
    repair_ = make_warm_repair(prob_, lay);
  }
  fill_vectors(prob_, lay, ego, state_, cfg_, dyn_);
  if (!structure_ready_) {
    solver_.setup(prob_);
    structure_ready_ = true;
  } else {
    solver_.update_vectors(prob_.q, prob_.l, prob_.u);
  }
  if (state_.last_solution) {
    qp::Vector warm = pack_primal(lay, state_.assumed_self, state_, cfg_, ego.v);
    if (repair_ && repair_->ok) {
      apply_warm_repair(*repair_, prob_, lay, state_, cfg_, ego.v, warm);
    }
    solver_.warm_start_primal(warm);
  }
  return solve_and_advance(ego, state_, cfg_, dyn_, solver_, lay);
}

}  // namespace platoon
