#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace platoon::qp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

using SparseMat = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

/// Convex program in the standard form
///
///   minimize    0.5 * z' P z + q' z
///   subject to  l <= A z <= u
///
/// with P symmetric positive semidefinite. Equality rows are encoded as
/// l_i == u_i; one-sided rows use +/- infinity. An LP is the P = 0 case.
struct QpProblem {
  SparseMat P;  ///< n x n, both triangles stored
  Vector q;     ///< n
  SparseMat A;  ///< m x n
  Vector l;     ///< m
  Vector u;     ///< m

  Eigen::Index num_vars() const { return q.size(); }
  Eigen::Index num_constraints() const { return l.size(); }

  /// Dimension consistency, exact symmetry of P, l <= u elementwise.
  /// Positive semidefiniteness is not checked here (tests verify it on
  /// small instances by eigenvalue).
  std::vector<std::string> validate() const;

  double objective(const Vector& z) const {
    return 0.5 * z.dot(P * z) + q.dot(z);
  }
};

enum class QpStatus { Solved, MaxIter, PrimalInfeasible, DualInfeasible };

const char* to_string(QpStatus status);

struct QpSolution {
  Vector z_star;
  Vector y_star;
  QpStatus status = QpStatus::MaxIter;
  int iterations = 0;
  double primal_residual = kInf;  ///< ||min(Az-l,0) + max(Az-u,0)||_inf
  double dual_residual = kInf;    ///< ||Pz + q + A'y||_inf
  bool polished = false;
  /// Infeasibility certificate: a direction in y-space (primal infeasible)
  /// or z-space (dual infeasible). Empty otherwise.
  Vector certificate;
};

struct Tolerances {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
};

struct QpSettings {
  Tolerances tol;
  int max_iter = 4000;
  double rho = 0.1;            ///< base ADMM penalty
  double rho_eq_scale = 1e3;   ///< extra penalty weight on equality rows
  double sigma = 1e-6;         ///< primal regularization
  double alpha = 1.6;          ///< relaxation
  int check_interval = 10;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 100;
  double eps_infeasible = 1e-5;
  bool scaling = true;         ///< Ruiz equilibration
  int scaling_iters = 10;
  bool polish = true;
  /// Attempt an active-set solve seeded by the warm start before running
  /// ADMM iterations; the result is only accepted after a full KKT check.
  bool warm_polish = true;
  /// Attempt a polish at residual checks once the active-set estimate is
  /// stable across consecutive checks. Cuts the long tail on problems
  /// where the set settles far earlier than the iterates converge (LPs).
  bool in_loop_polish = true;
};

/// Exact primal/dual residuals of a candidate point, as used by the
/// Solved contract.
double primal_residual(const QpProblem& prob, const Vector& z);
double dual_residual(const QpProblem& prob, const Vector& z, const Vector& y);

struct QpWorkspace;

/// Operator-splitting solver with a direct KKT backend. The factorization
/// depends only on (P, A, rho); a solver instance can be reused across a
/// sequence of problems that share those matrices, which is the receding-
/// horizon hot path. Warm starts carry (z, y) between solves.
class QpSolver {
 public:
  QpSolver() = default;
  explicit QpSolver(QpSettings settings) : settings_(std::move(settings)) {}

  QpSettings& settings() { return settings_; }
  const QpSettings& settings() const { return settings_; }

  /// Builds scaling and the KKT factorization for the given structure.
  /// Throws std::invalid_argument if the problem fails validate().
  void setup(const QpProblem& problem);

  /// Replaces q, l, u without refactorizing. Dimensions must match.
  void update_vectors(const Vector& q, const Vector& l, const Vector& u);

  /// Sets the warm-start point used by the next solve() call.
  void warm_start(const Vector& z, const Vector& y);

  /// Replaces only the primal warm point, keeping whatever dual iterate
  /// the previous solve left behind (zeros on a fresh setup).
  void warm_start_primal(const Vector& z);

  QpSolution solve();

  bool is_setup() const { return workspace_ != nullptr; }

  /// True if the given problem has the same dimensions and sparsity
  /// pattern as the one this solver was set up with.
  bool same_pattern(const QpProblem& problem) const;
  /// True if additionally the P and A values match bit-for-bit.
  bool same_matrices(const QpProblem& problem) const;

 private:
  QpSettings settings_;
  std::shared_ptr<QpWorkspace> workspace_;
};

/// One-shot solve.
QpSolution solve(const QpProblem& problem,
                 std::optional<std::pair<Vector, Vector>> warm_start = {},
                 Tolerances tol = {});

/// Solves a stream of problems with identical dimensions and sparsity,
/// reusing factorizations and warm starts where the matrices permit.
/// Throws std::invalid_argument if the patterns differ. Failures are
/// reported per problem and do not affect neighbors.
std::vector<QpSolution> solve_sequence(const std::vector<QpProblem>& problems,
                                       Tolerances tol = {});

}  // namespace platoon::qp
