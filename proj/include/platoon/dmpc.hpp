#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <variant>

#include "platoon/dynamics.hpp"
#include "platoon/qp.hpp"
#include "platoon/trajectory.hpp"

namespace platoon {

enum class CostKind { SquaredTwoNorm, OneNorm };

const char* to_string(CostKind kind);

/// Stage-cost weights for the squared-2-norm objective. All three must be
/// positive definite (the input weight is scalar because the input is).
struct TwoNormWeights {
  Eigen::Matrix2d move_suppression = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d predecessor_error = Eigen::Matrix2d::Identity();
  double input_deviation = 1.0;
};

/// Stage-cost weights for the 1-norm objective; all strictly positive.
struct OneNormWeights {
  double move_suppression = 1.0;
  double predecessor_error = 1.0;
  double input_deviation = 1.0;
};

struct DmpcConfig {
  int horizon = 100;  ///< H >= 2
  double d_des = 5.0;
  double v_min = 0.0;
  double v_max = 35.0;
  double a_max = 3.0;
  std::variant<TwoNormWeights, OneNormWeights> weights = TwoNormWeights{};

  /// Tolerances for the receding-horizon solves, looser than the
  /// solver's oracle-grade defaults: plan noise at this level is
  /// millimeters over the horizon, far below the spacing the protocol
  /// cares about, and the sub-10ms solve rate depends on it.
  qp::Tolerances solver_tol{1e-4, 1e-4};

  CostKind cost_kind() const {
    return weights.index() == 0 ? CostKind::SquaredTwoNorm : CostKind::OneNorm;
  }
  const TwoNormWeights& two_norm() const {
    return std::get<TwoNormWeights>(weights);
  }
  const OneNormWeights& one_norm() const {
    return std::get<OneNormWeights>(weights);
  }
};

ValidationReport validate(const DmpcConfig& cfg);

/// Receding-horizon bookkeeping. assumed_self is this vehicle's own
/// announced trajectory for the current step (the shift of its previous
/// plan); assumed_pred is the predecessor's, re-anchored to the ego frame.
struct DmpcControllerState {
  Trajectory assumed_self;
  Trajectory assumed_pred;
  std::optional<Trajectory> last_solution;
};

/// Rewrites the predecessor's announced trajectory into the ego position
/// frame: relative shape from the message, absolute offset from the
/// measured gap. Velocities pass through unchanged.
Trajectory anchor_predecessor(const Trajectory& msg, const VehicleState& ego,
                              double measured_gap);

/// Stacks x(0..H) interleaved (p, v) then u(0..H-1); 1-norm costs append
/// five epigraph auxiliaries per stage. Equality rows pin the initial
/// state, the dynamics, the terminal state, and the terminal input;
/// inequality rows bound per-step velocity change and the velocity box.
qp::QpProblem transcribe_dmpc(const VehicleState& ego,
                              const DmpcControllerState& ctrl,
                              const DmpcConfig& cfg,
                              const DynamicsParams& dyn);

/// Sum of stage costs of a candidate plan under the given references,
/// including the constant terms the transcription drops. Test oracle and
/// reporting helper, not a hot path.
double dmpc_stage_cost(const Trajectory& plan, const Trajectory& assumed_self,
                       const Trajectory& assumed_pred, const DmpcConfig& cfg,
                       double u_tilde);

struct DmpcStepResult {
  double u_apply = 0.0;
  Trajectory plan;  ///< plan the vehicle follows after this step
  qp::QpStatus status = qp::QpStatus::MaxIter;
  int iterations = 0;
  bool fallback = false;
  bool polished = false;
};

/// One receding-horizon step: transcribe, solve (warm-started from the
/// shifted previous plan), fall back to the announced trajectory when the
/// solver fails, and advance the protocol state. ctrl.assumed_pred must
/// already be anchored; on return ctrl.assumed_self holds the trajectory
/// to announce for the next step.
DmpcStepResult dmpc_control(const VehicleState& ego, DmpcControllerState& ctrl,
                            const DmpcConfig& cfg, const DynamicsParams& dyn,
                            qp::QpSolver& solver);

/// Owns the per-vehicle solver and protocol state. The transcription
/// structure (P, A) is built once; per step only q, l, u are rewritten.
struct WarmRepair;

class DmpcController {
 public:
  DmpcController(DmpcConfig cfg, DynamicsParams dyn);
  DmpcController(DmpcController&&) noexcept;
  DmpcController& operator=(DmpcController&&) noexcept;
  ~DmpcController();

  /// Starts a fresh episode from x0 with a constant-velocity announcement.
  void reset(const VehicleState& x0);

  /// msg is the predecessor's announced trajectory for this timestep.
  DmpcStepResult step(const VehicleState& ego, double measured_gap,
                      const Trajectory& msg);

  /// Trajectory to hand to the follower for the next timestep.
  const Trajectory& outgoing_message() const { return state_.assumed_self; }

  const DmpcControllerState& state() const { return state_; }
  const DmpcConfig& config() const { return cfg_; }

 private:
  DmpcConfig cfg_;
  DynamicsParams dyn_;
  DmpcControllerState state_;
  qp::QpSolver solver_;
  qp::QpProblem prob_;
  /// Cached equality-row factorization for warm-start repair.
  std::unique_ptr<WarmRepair> repair_;
  bool structure_ready_ = false;
};

}  // namespace platoon
