#include "platoon/qp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace platoon::qp {

namespace {

double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

/// Magnitude of the worst bound violation of a precomputed Az.
double violation_inf(const Vector& az, const Vector& l, const Vector& u) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < az.size(); ++i) {
    if (az[i] < l[i]) worst = std::max(worst, l[i] - az[i]);
    if (az[i] > u[i]) worst = std::max(worst, az[i] - u[i]);
  }
  return worst;
}

struct ResidualReport {
  double prim = kInf;
  double dual = kInf;
  double tol_prim = 0.0;
  double tol_dual = 0.0;
  double scale_prim = 0.0;
  double scale_dual = 0.0;

  bool pass() const { return prim <= tol_prim && dual <= tol_dual; }
};

double ruiz_delta(double nrm) {
  if (nrm < 1e-12) return 1.0;
  return std::clamp(1.0 / std::sqrt(nrm), 1e-4, 1e4);
}

double cost_gamma(double nrm) {
  if (nrm < 1e-12) return 1.0;
  return std::clamp(1.0 / nrm, 1e-6, 1e6);
}

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kPolishDelta = 1e-7;
constexpr int kPolishRefineRounds = 3;
constexpr int kPolishRepairPasses = 10;
constexpr int kMaxInLoopPolish = 12;

}  // namespace

/// Mutable solver state. Matrices are stored both raw and Ruiz-scaled;
/// iterates live in the scaled space, warm points in the raw one.
struct QpWorkspace {
  // raw problem
  SparseMat P, A, At;
  Vector q, l, u;
  Eigen::Index n = 0, m = 0;

  // scaling: P_s = c D P D, A_s = E A D, q_s = c D q, l_s = E l, u_s = E u
  Vector d, e, d_inv, e_inv;
  double c = 1.0;
  SparseMat Ps, As;
  Vector qs, ls, us;

  // per-row penalty; equality rows carry an extra factor
  std::vector<char> eq_row;
  double rho_bar = 0.1;
  Vector rho_vec, rho_inv_vec;

  // KKT system [[P_s + sigma I, A_s'], [A_s, -diag(1/rho)]], lower triangle
  SparseMat kkt;
  Eigen::SimplicialLDLT<SparseMat, Eigen::Lower> ldlt;
  bool analyzed = false;

  // iterates (scaled) and the raw warm point they mirror
  Vector xs, zs, ys;
  Vector warm_x, warm_y;
  bool have_warm = false;

  // iteration buffers
  Vector kkt_rhs, kkt_sol, xs_prev, ys_prev, zt, w;
  Vector x_uns, y_uns, z_uns, ax, px, aty, dres;

  // polish cache, keyed by the active set; valid while P and A are fixed
  std::vector<std::int8_t> cached_act;
  std::vector<int> cached_rows;
  Eigen::SimplicialLDLT<SparseMat, Eigen::Lower> polish_ldlt;
  bool polish_cache_ok = false;
  // last active set whose polish failed verification for the current
  // (q, l, u); avoids repeated factorizations inside one solve
  std::vector<std::int8_t> failed_act;
  // active set of the last successful polish; the binding structure is
  // usually stable across vector updates, so trying it first turns a
  // receding-horizon re-solve into two back-substitutions
  std::vector<std::int8_t> last_polish_act;

  void build_kkt_values(double sigma);
  void factorize();
  void apply_scaling(bool enabled, int iters);
  void set_rho(double rho_bar_new, double eq_scale);
  void refresh_eq_rows();
  void unscale_point();
  ResidualReport evaluate(const Vector& x, const Vector& y, const Vector* z,
                          const Tolerances& tol);
  void refresh_warm(const Vector& x, const Vector& y);
};

void QpWorkspace::refresh_eq_rows() {
  eq_row.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (l[i] == u[i]) eq_row[static_cast<std::size_t>(i)] = 1;
  }
}

void QpWorkspace::set_rho(double rho_bar_new, double eq_scale) {
  rho_bar = std::clamp(rho_bar_new, kRhoMin, kRhoMax);
  rho_vec.resize(m);
  rho_inv_vec.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double r = eq_row[static_cast<std::size_t>(i)]
                         ? std::clamp(rho_bar * eq_scale, kRhoMin, kRhoMax)
                         : rho_bar;
    rho_vec[i] = r;
    rho_inv_vec[i] = 1.0 / r;
  }
}

void QpWorkspace::build_kkt_values(double sigma) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(Ps.nonZeros() + n + As.nonZeros() + m));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (SparseMat::InnerIterator it(Ps, j); it; ++it) {
      if (it.row() >= j) trips.emplace_back(it.row(), j, it.value());
    }
    trips.emplace_back(j, j, sigma);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (SparseMat::InnerIterator it(As, j); it; ++it) {
      trips.emplace_back(n + it.row(), j, it.value());
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    trips.emplace_back(n + i, n + i, -rho_inv_vec[i]);
  }
  kkt.resize(n + m, n + m);
  kkt.setFromTriplets(trips.begin(), trips.end());
  kkt.makeCompressed();
}

void QpWorkspace::factorize() {
  if (!analyzed) {
    ldlt.analyzePattern(kkt);
    analyzed = true;
  }
  ldlt.factorize(kkt);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("qp: KKT factorization failed");
  }
}

void QpWorkspace::apply_scaling(bool enabled, int iters) {
  Ps = P;
  As = A;
  qs = q;
  d = Vector::Ones(n);
  e = Vector::Ones(m);
  c = 1.0;
  if (enabled) {
    Vector col_p(n), col_a(n), row_a(m), dd(n), de(m);
    for (int pass = 0; pass < iters; ++pass) {
      col_p.setZero();
      col_a.setZero();
      row_a.setZero();
      for (Eigen::Index j = 0; j < n; ++j) {
        for (SparseMat::InnerIterator it(Ps, j); it; ++it) {
          col_p[j] = std::max(col_p[j], std::abs(it.value()));
        }
        for (SparseMat::InnerIterator it(As, j); it; ++it) {
          const double a = std::abs(it.value());
          col_a[j] = std::max(col_a[j], a);
          row_a[it.row()] = std::max(row_a[it.row()], a);
        }
      }
      for (Eigen::Index j = 0; j < n; ++j) {
        dd[j] = ruiz_delta(std::max(col_p[j], col_a[j]));
      }
      for (Eigen::Index i = 0; i < m; ++i) de[i] = ruiz_delta(row_a[i]);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (SparseMat::InnerIterator it(Ps, j); it; ++it) {
          it.valueRef() *= dd[j] * dd[it.row()];
        }
        for (SparseMat::InnerIterator it(As, j); it; ++it) {
          it.valueRef() *= de[it.row()] * dd[j];
        }
      }
      qs = qs.cwiseProduct(dd);
      d = d.cwiseProduct(dd);
      e = e.cwiseProduct(de);

      double mean_col_p = 0.0;
      if (n > 0) {
        col_p.setZero();
        for (Eigen::Index j = 0; j < n; ++j) {
          for (SparseMat::InnerIterator it(Ps, j); it; ++it) {
            col_p[j] = std::max(col_p[j], std::abs(it.value()));
          }
        }
        mean_col_p = col_p.sum() / static_cast<double>(n);
      }
      const double gamma = cost_gamma(std::max(mean_col_p, inf_norm(qs)));
      Ps *= gamma;
      qs *= gamma;
      c *= gamma;
    }
  }
  d_inv = d.cwiseInverse();
  e_inv = e.cwiseInverse();
  ls = e.cwiseProduct(l);
  us = e.cwiseProduct(u);
}

void QpWorkspace::unscale_point() {
  x_uns = d.cwiseProduct(xs);
  y_uns = e.cwiseProduct(ys) / c;
  z_uns = e_inv.cwiseProduct(zs);
}

ResidualReport QpWorkspace::evaluate(const Vector& x, const Vector& y,
                                     const Vector* z, const Tolerances& tol) {
  ax.noalias() = A * x;
  px.noalias() = P * x;
  aty.noalias() = At * y;
  ResidualReport rep;
  rep.prim = violation_inf(ax, l, u);
  dres = px + q + aty;
  rep.dual = inf_norm(dres);
  const double z_norm =
      z ? inf_norm(*z) : inf_norm(ax.cwiseMax(l).cwiseMin(u));
  rep.scale_prim = std::max(inf_norm(ax), z_norm);
  rep.scale_dual = std::max({inf_norm(px), inf_norm(aty), inf_norm(q)});
  rep.tol_prim = tol.eps_abs + tol.eps_rel * rep.scale_prim;
  rep.tol_dual = tol.eps_abs + tol.eps_rel * rep.scale_dual;
  return rep;
}

void QpWorkspace::refresh_warm(const Vector& x, const Vector& y) {
  warm_x = x;
  warm_y = y;
  xs = d_inv.cwiseProduct(x);
  ys = c * e_inv.cwiseProduct(y);
  zs = (As * xs).cwiseMax(ls).cwiseMin(us);
  have_warm = true;
}

namespace {

/// Marks equality rows, rows with a nonzero multiplier (when y is
/// given), and rows whose primal slack at A*x is within theta (when ax
/// is given). The slack augmentation matters for degenerate vertices,
/// where binding rows can carry a zero multiplier; without them the
/// reduced KKT system is rank-deficient and the polish step cannot pin
/// the point. Pure slack derivation (y null) is used for objectives
/// without curvature, where multipliers far from convergence routinely
/// carry junk entries on rows that are not binding at all.
void derive_active_set(const QpWorkspace& ws, const Vector* y,
                       const Vector* ax, double theta,
                       std::vector<std::int8_t>& act) {
  act.assign(static_cast<std::size_t>(ws.m), 0);
  for (Eigen::Index i = 0; i < ws.m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (ws.eq_row[k]) {
      act[k] = 3;
    } else if (y != nullptr && (*y)[i] < 0.0 && std::isfinite(ws.l[i])) {
      act[k] = 1;  // lower bound active
    } else if (y != nullptr && (*y)[i] > 0.0 && std::isfinite(ws.u[i])) {
      act[k] = 2;  // upper bound active
    } else if (ax != nullptr && theta > 0.0) {
      const double sl = std::isfinite(ws.l[i]) ? (*ax)[i] - ws.l[i]
                                               : std::numeric_limits<double>::infinity();
      const double su = std::isfinite(ws.u[i]) ? ws.u[i] - (*ax)[i]
                                               : std::numeric_limits<double>::infinity();
      if (std::min(sl, su) <= theta) act[k] = sl <= su ? 1 : 2;
    }
  }
}

struct PolishCandidate {
  Vector x, y;
  ResidualReport rep;
  std::vector<std::int8_t> act;  // the set that produced x, after repair
};

/// Checks that every significant multiplier sits on a row whose slack
/// at A*x (expected in ws.ax from a preceding evaluate) is within
/// theta. Without curvature the stationarity residual is independent
/// of x, so feasibility plus stationarity alone would happily certify
/// a stale pair whose constraints have since moved; this is the
/// missing complementarity leg of that contract.
bool complementarity_ok(const QpWorkspace& ws, const Vector& y, double eps,
                        double theta) {
  for (Eigen::Index i = 0; i < ws.m; ++i) {
    if (ws.eq_row[static_cast<std::size_t>(i)]) continue;
    if (y[i] > eps) {
      if (!std::isfinite(ws.u[i]) || ws.u[i] - ws.ax[i] > theta) return false;
    } else if (y[i] < -eps) {
      if (!std::isfinite(ws.l[i]) || ws.ax[i] - ws.l[i] > theta) return false;
    }
  }
  return true;
}

/// Factorizes the +/- delta regularized KKT system restricted to the
/// given active rows, reusing the cached factorization when the set is
/// unchanged. Returns false if the factorization fails.
bool factor_active_kkt(QpWorkspace& ws, const std::vector<std::int8_t>& act,
                       std::vector<int>& rows) {
  const Eigen::Index n = ws.n;
  rows.clear();
  rows.reserve(act.size());
  for (std::size_t i = 0; i < act.size(); ++i) {
    if (act[i] != 0) rows.push_back(static_cast<int>(i));
  }
  if (ws.polish_cache_ok && act == ws.cached_act) return true;
  const auto na = static_cast<Eigen::Index>(rows.size());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(ws.P.nonZeros()) + rows.size() +
                static_cast<std::size_t>(n + na));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (SparseMat::InnerIterator it(ws.P, j); it; ++it) {
      if (it.row() >= j) trips.emplace_back(it.row(), j, it.value());
    }
    trips.emplace_back(j, j, kPolishDelta);
  }
  for (Eigen::Index k = 0; k < na; ++k) {
    // row rows[k] of A = column rows[k] of At
    for (SparseMat::InnerIterator it(ws.At, rows[static_cast<std::size_t>(k)]);
         it; ++it) {
      trips.emplace_back(n + k, it.row(), it.value());
    }
    trips.emplace_back(n + k, n + k, -kPolishDelta);
  }
  SparseMat kkt(n + na, n + na);
  kkt.setFromTriplets(trips.begin(), trips.end());
  kkt.makeCompressed();
  ws.polish_ldlt.compute(kkt);
  if (ws.polish_ldlt.info() != Eigen::Success) {
    ws.polish_cache_ok = false;
    return false;
  }
  ws.cached_act = act;
  ws.cached_rows = rows;
  ws.polish_cache_ok = true;
  return true;
}

/// Solves the regularized KKT system for the given right-hand side with
/// iterative refinement against the same system. x0/ya0 receive the
/// primal and active-row blocks.
void solve_active_kkt(QpWorkspace& ws, const std::vector<int>& rows,
                      const Vector& rhs_x, const Vector& rhs_a, Vector& x0,
                      Vector& ya0) {
  const Eigen::Index n = ws.n;
  const auto na = static_cast<Eigen::Index>(rows.size());
  Vector rhs(n + na);
  rhs.head(n) = rhs_x;
  rhs.tail(na) = rhs_a;
  Vector t = ws.polish_ldlt.solve(rhs);
  x0 = t.head(n);
  ya0 = t.tail(na);
  Vector y_full = Vector::Zero(ws.m);
  Vector r(n + na), corr(n + na);
  for (int round = 0; round < kPolishRefineRounds; ++round) {
    y_full.setZero();
    for (Eigen::Index k = 0; k < na; ++k) {
      y_full[rows[static_cast<std::size_t>(k)]] = ya0[k];
    }
    r.head(n) = rhs_x - ws.P * x0 - kPolishDelta * x0 - ws.At * y_full;
    ws.ax.noalias() = ws.A * x0;
    for (Eigen::Index k = 0; k < na; ++k) {
      r[n + k] = rhs_a[k] - ws.ax[rows[static_cast<std::size_t>(k)]] +
                 kPolishDelta * ya0[k];
    }
    corr = ws.polish_ldlt.solve(r);
    x0 += corr.head(n);
    ya0 += corr.tail(na);
  }
}

/// Recovers an exact solution from a near-optimal iterate and an active
/// set estimate, and verifies the full KKT contract on the result.
///
/// With curvature (P != 0) the reduced equality-constrained QP is solved
/// directly; active rows whose multiplier comes back with the wrong sign
/// are dropped and the system is re-solved, since with a redundant
/// active set the multipliers are non-unique and the first solve may
/// land outside the sign cone even though the primal is optimal.
///
/// Without curvature the reduced problem is typically rank-deficient
/// in the primal: 1-norm objectives routinely have a non-unique
/// optimal face, a reduced KKT solve would fly off along its free
/// directions, and even snapping the near-binding rows onto their
/// bounds amplifies iterate noise through the constraint couplings.
/// The iterate is therefore kept as the primal answer, and the polish
/// only supplies exact multipliers: y_src is reused verbatim when its
/// support lies in the pin set with agreeing signs and it is already
/// stationary (q and A are fixed, so a previous dual's stationarity
/// never degrades); otherwise a least-squares dual is solved on the
/// pinned rows, dropping wrong-signed rows until the sign convention
/// holds. Feasibility and stationarity of the pair are then checked by
/// evaluate(), and complementarity holds up to the pin tolerance
/// because the dual is supported on near-binding rows only.
///
/// Returns nothing if the factorization fails or the result violates
/// the KKT contract; the caller then falls back to ADMM iterations.
std::optional<PolishCandidate> attempt_polish(
    QpWorkspace& ws, const std::vector<std::int8_t>& act_in,
    const Vector& x_ref, const Vector& y_src, const Tolerances& tol,
    bool lsq_fallback = true, const char* tag = "?") {
  std::vector<std::int8_t> act = act_in;
  const Eigen::Index n = ws.n;
  std::vector<int> rows;
  Vector x, ya, y_full;

  if (ws.P.nonZeros() == 0) {
    bool reuse_ok = false;
    for (Eigen::Index i = 0; i < ws.m; ++i) {
      const auto k = static_cast<std::size_t>(i);
      if (y_src[i] < -tol.eps_abs) {
        if (act[k] != 1 && act[k] != 3) {
          if (getenv("QP_TRACE"))
            fprintf(stderr, "%s lp reuse breach row=%ld y=%.3e act=%d\n", tag,
                    (long)i, y_src[i], (int)act[k]);
          reuse_ok = false;
          break;
        }
        reuse_ok = true;
      } else if (y_src[i] > tol.eps_abs) {
        if (act[k] != 2 && act[k] != 3) {
          if (getenv("QP_TRACE"))
            fprintf(stderr, "%s lp reuse breach row=%ld y=%.3e act=%d\n", tag,
                    (long)i, y_src[i], (int)act[k]);
          reuse_ok = false;
          break;
        }
        reuse_ok = true;
      }
    }

    // least-squares dual on a candidate support, shedding wrong-signed
    // rows between passes; true once the signs settle. A healthy repair
    // sheds fewer rows each pass and settles within two or three; a
    // stalled cascade is stripping support the dual needs and will never
    // produce a stationary point, so it is cut off early.
    Vector yd;
    std::vector<int> dual_rows;
    auto lsq_duals = [&](std::vector<std::int8_t>& dual_act) -> bool {
      Vector xd;
      int prev_dropped = std::numeric_limits<int>::max();
      for (int pass = 0; pass < kPolishRepairPasses; ++pass) {
        if (!factor_active_kkt(ws, dual_act, dual_rows)) return false;
        const auto nd = static_cast<Eigen::Index>(dual_rows.size());
        solve_active_kkt(ws, dual_rows, -ws.q, Vector::Zero(nd), xd, yd);
        int dropped = 0;
        for (Eigen::Index k = 0; k < nd; ++k) {
          const auto ri =
              static_cast<std::size_t>(dual_rows[static_cast<std::size_t>(k)]);
          const auto side = dual_act[ri];
          if ((side == 1 && yd[k] > tol.eps_abs) ||
              (side == 2 && yd[k] < -tol.eps_abs)) {
            dual_act[ri] = 0;
            ++dropped;
          }
        }
        if (getenv("QP_TRACE"))
          fprintf(stderr, "%s lp dual pass=%d nd=%ld dropped=%d\n", tag, pass,
                  (long)dual_rows.size(), dropped);
        if (dropped == 0) return true;
        if (pass >= 1 && dropped >= prev_dropped) return false;
        prev_dropped = dropped;
      }
      return false;
    };

    Vector y_use;
    if (reuse_ok) {
      y_use = y_src;
    } else if (!lsq_fallback) {
      return std::nullopt;
    } else {
      // seed from the surviving support first: rows the source dual
      // leaned on that are still tight on the same side. That is the old
      // basis minus whatever the bound update released, and it stays far
      // better conditioned than a slack-derived set, which over-spans
      // the fat optimal face.
      bool got = false;
      std::vector<std::int8_t> dual_act(act.size(), 0);
      int survivors = 0;
      for (Eigen::Index i = 0; i < ws.m; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (act[k] == 3) {
          dual_act[k] = 3;
          continue;
        }
        if (act[k] == 1 && y_src[i] < -tol.eps_abs) {
          dual_act[k] = 1;
          ++survivors;
          continue;
        }
        if (act[k] == 2 && y_src[i] > tol.eps_abs) {
          dual_act[k] = 2;
          ++survivors;
          continue;
        }
        // rows the reference point holds exactly tight also join the
        // seed: when a bound update flips which side of a row pair a
        // solution touches, the dual mass must be free to land on the
        // new side, or the objective columns it covers go unserved
        if (std::isfinite(ws.u[i]) &&
            ws.u[i] - ws.ax[i] <= 1e-7 * (1.0 + std::abs(ws.u[i]))) {
          dual_act[k] = 2;
          ++survivors;
          continue;
        }
        if (std::isfinite(ws.l[i]) &&
            ws.ax[i] - ws.l[i] <= 1e-7 * (1.0 + std::abs(ws.l[i]))) {
          dual_act[k] = 1;
          ++survivors;
        }
      }
      if (survivors > 0) got = lsq_duals(dual_act);
      if (!got) {
        dual_act = act;
        got = lsq_duals(dual_act);
      }
      if (!got) return std::nullopt;
      y_use = Vector::Zero(ws.m);
      for (std::size_t k = 0; k < dual_rows.size(); ++k) {
        y_use[dual_rows[k]] = yd[static_cast<Eigen::Index>(k)];
      }
    }

    PolishCandidate cand;
    cand.rep = ws.evaluate(x_ref, y_use, nullptr, tol);
    const double theta = 10.0 * (cand.rep.prim + cand.rep.tol_prim);
    if (!cand.rep.pass() ||
        !complementarity_ok(ws, y_use, tol.eps_abs, theta)) {
      if (getenv("QP_TRACE"))
        fprintf(stderr, "%s lp reject reuse=%d prim=%.3e/%.3e dual=%.3e/%.3e\n", tag,
                (int)reuse_ok, cand.rep.prim, cand.rep.tol_prim, cand.rep.dual,
                cand.rep.tol_dual);
      return std::nullopt;
    }
    cand.x = x_ref;
    cand.y = std::move(y_use);
    cand.act = std::move(act);
    return cand;
  }

  for (int pass = 0; pass < kPolishRepairPasses; ++pass) {
    if (!factor_active_kkt(ws, act, rows)) return std::nullopt;
    const auto na = static_cast<Eigen::Index>(rows.size());
    Vector b(na);
    for (Eigen::Index k = 0; k < na; ++k) {
      const int r = rows[static_cast<std::size_t>(k)];
      b[k] = act[static_cast<std::size_t>(r)] == 2 ? ws.u[r] : ws.l[r];
    }
    solve_active_kkt(ws, rows, -ws.q + kPolishDelta * x_ref, b, x, ya);
    y_full = Vector::Zero(ws.m);
    for (Eigen::Index k = 0; k < na; ++k) {
      y_full[rows[static_cast<std::size_t>(k)]] = ya[k];
    }

    // drop active rows with wrong-signed multipliers; equality rows are
    // sign-free and never leave the set
    int dropped = 0;
    for (Eigen::Index k = 0; k < na; ++k) {
      const auto ri =
          static_cast<std::size_t>(rows[static_cast<std::size_t>(k)]);
      const auto side = act[ri];
      if ((side == 1 && ya[k] > tol.eps_abs) ||
          (side == 2 && ya[k] < -tol.eps_abs)) {
        act[ri] = 0;
        ++dropped;
      }
    }
    if (dropped > 0) continue;

    PolishCandidate cand;
    cand.rep = ws.evaluate(x, y_full, nullptr, tol);
    if (!cand.rep.pass()) return std::nullopt;
    cand.x = std::move(x);
    cand.y = std::move(y_full);
    cand.act = std::move(act);
    return cand;
  }
  return std::nullopt;
}

/// delta_y is a primal infeasibility certificate when A' delta_y ~ 0 and
/// the support function of [l, u] along it is negative. Rows with an
/// infinite bound must have a vanishing component on that side.
bool primal_infeasibility(const QpWorkspace& ws, const Vector& dy,
                          double eps, Vector& atdy) {
  const double nrm = inf_norm(dy);
  if (nrm < 1e-12) return false;
  const double thresh = eps * nrm;
  double support = 0.0;
  for (Eigen::Index i = 0; i < ws.m; ++i) {
    const double plus = std::max(dy[i], 0.0);
    const double minus = std::min(dy[i], 0.0);
    if (ws.u[i] == kInf) {
      if (plus > thresh) return false;
    } else {
      support += ws.u[i] * plus;
    }
    if (ws.l[i] == -kInf) {
      if (minus < -thresh) return false;
    } else {
      support += ws.l[i] * minus;
    }
  }
  if (support > -thresh) return false;
  atdy.noalias() = ws.At * dy;
  return inf_norm(atdy) <= thresh;
}

/// delta_x is a dual infeasibility (unboundedness) certificate when it is
/// a descent direction lying in the recession cone of the constraints.
bool dual_infeasibility(const QpWorkspace& ws, const Vector& dx, double eps,
                        Vector& pdx, Vector& adx) {
  const double nrm = inf_norm(dx);
  if (nrm < 1e-12) return false;
  const double thresh = eps * nrm;
  if (ws.q.dot(dx) > -thresh) return false;
  pdx.noalias() = ws.P * dx;
  if (inf_norm(pdx) > thresh) return false;
  adx.noalias() = ws.A * dx;
  for (Eigen::Index i = 0; i < ws.m; ++i) {
    const bool lo = ws.l[i] != -kInf;
    const bool hi = ws.u[i] != kInf;
    if (lo && hi) {
      if (std::abs(adx[i]) > thresh) return false;
    } else if (hi) {
      if (adx[i] > thresh) return false;
    } else if (lo) {
      if (adx[i] < -thresh) return false;
    }
  }
  return true;
}

bool same_sparse_pattern(const SparseMat& a, const SparseMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  if (a.nonZeros() != b.nonZeros()) return false;
  return std::equal(a.outerIndexPtr(), a.outerIndexPtr() + a.outerSize() + 1,
                    b.outerIndexPtr()) &&
         std::equal(a.innerIndexPtr(), a.innerIndexPtr() + a.nonZeros(),
                    b.innerIndexPtr());
}

bool same_sparse_values(const SparseMat& a, const SparseMat& b) {
  return same_sparse_pattern(a, b) &&
         std::equal(a.valuePtr(), a.valuePtr() + a.nonZeros(), b.valuePtr());
}

SparseMat compressed_copy(const SparseMat& a) {
  SparseMat out = a;
  out.makeCompressed();
  return out;
}

}  // namespace

std::vector<std::string> QpProblem::validate() const {
  std::vector<std::string> errors;
  const Eigen::Index n = q.size();
  const Eigen::Index m = l.size();
  if (P.rows() != n || P.cols() != n) {
    errors.push_back("P must be n x n matching q");
  }
  if (A.rows() != m || A.cols() != n) {
    errors.push_back("A dimensions must match l/u rows and q columns");
  }
  if (u.size() != m) errors.push_back("l and u must have equal length");
  if (!errors.empty()) return errors;

  SparseMat diff = P - SparseMat(P.transpose());
  for (Eigen::Index j = 0; j < diff.outerSize(); ++j) {
    for (SparseMat::InnerIterator it(diff, j); it; ++it) {
      if (it.value() != 0.0) {
        errors.push_back("P must be exactly symmetric");
        j = diff.outerSize();
        break;
      }
    }
  }
  for (Eigen::Index j = 0; j < P.outerSize(); ++j) {
    for (SparseMat::InnerIterator it(P, j); it; ++it) {
      if (!std::isfinite(it.value())) {
        errors.push_back("P contains non-finite entries");
        j = P.outerSize();
        break;
      }
    }
  }
  for (Eigen::Index j = 0; j < A.outerSize(); ++j) {
    for (SparseMat::InnerIterator it(A, j); it; ++it) {
      if (!std::isfinite(it.value())) {
        errors.push_back("A contains non-finite entries");
        j = A.outerSize();
        break;
      }
    }
  }
  if (!q.allFinite()) errors.push_back("q contains non-finite entries");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::isnan(l[i]) || std::isnan(u[i]) || l[i] == kInf ||
        u[i] == -kInf) {
      errors.push_back("bounds contain NaN or wrong-signed infinities");
      break;
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (l[i] > u[i]) {
      errors.push_back("l must be <= u elementwise");
      break;
    }
  }
  return errors;
}

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Solved:
      return "Solved";
    case QpStatus::MaxIter:
      return "MaxIter";
    case QpStatus::PrimalInfeasible:
      return "PrimalInfeasible";
    case QpStatus::DualInfeasible:
      return "DualInfeasible";
  }
  return "Unknown";
}

double primal_residual(const QpProblem& prob, const Vector& z) {
  Vector az = prob.A * z;
  return violation_inf(az, prob.l, prob.u);
}

double dual_residual(const QpProblem& prob, const Vector& z, const Vector& y) {
  Vector r = prob.P * z + prob.q + prob.A.transpose() * y;
  return inf_norm(r);
}

void QpSolver::setup(const QpProblem& problem) {
  auto errors = problem.validate();
  if (!errors.empty()) {
    std::ostringstream oss;
    oss << "qp: invalid problem:";
    for (const auto& e : errors) oss << " " << e << ";";
    throw std::invalid_argument(oss.str());
  }
  auto ws = std::make_shared<QpWorkspace>();
  ws->P = compressed_copy(problem.P);
  ws->A = compressed_copy(problem.A);
  ws->At = compressed_copy(SparseMat(ws->A.transpose()));
  ws->q = problem.q;
  ws->l = problem.l;
  ws->u = problem.u;
  ws->n = problem.num_vars();
  ws->m = problem.num_constraints();
  // TEMP experiment knobs
  if (const char* e = getenv("QP_RHO")) settings_.rho = atof(e);
  if (const char* e = getenv("QP_CHECK")) settings_.check_interval = atoi(e);
  if (const char* e = getenv("QP_ADAPT")) settings_.adaptive_rho_interval = atoi(e);
  ws->refresh_eq_rows();
  ws->apply_scaling(settings_.scaling, settings_.scaling_iters);
  ws->set_rho(settings_.rho, settings_.rho_eq_scale);
  ws->build_kkt_values(settings_.sigma);
  ws->factorize();

  ws->xs = Vector::Zero(ws->n);
  ws->zs = Vector::Zero(ws->m);
  ws->ys = Vector::Zero(ws->m);
  ws->warm_x = Vector::Zero(ws->n);
  ws->warm_y = Vector::Zero(ws->m);
  ws->kkt_rhs.resize(ws->n + ws->m);
  ws->kkt_sol.resize(ws->n + ws->m);
  workspace_ = std::move(ws);
}

void QpSolver::update_vectors(const Vector& q, const Vector& l,
                              const Vector& u) {
  if (!workspace_) throw std::logic_error("qp: update before setup");
  auto& ws = *workspace_;
  if (q.size() != ws.n || l.size() != ws.m || u.size() != ws.m) {
    throw std::invalid_argument("qp: update_vectors dimension mismatch");
  }
  ws.q = q;
  ws.l = l;
  ws.u = u;
  ws.qs = ws.c * ws.d.cwiseProduct(q);
  ws.ls = ws.e.cwiseProduct(l);
  ws.us = ws.e.cwiseProduct(u);
  ws.failed_act.clear();
  auto old_eq = ws.eq_row;
  ws.refresh_eq_rows();
  if (ws.eq_row != old_eq) {
    ws.set_rho(ws.rho_bar, settings_.rho_eq_scale);
    ws.build_kkt_values(settings_.sigma);
    ws.factorize();
  }
}

void QpSolver::warm_start(const Vector& z, const Vector& y) {
  if (!workspace_) throw std::logic_error("qp: warm_start before setup");
  auto& ws = *workspace_;
  if (z.size() != ws.n || y.size() != ws.m) {
    throw std::invalid_argument("qp: warm_start dimension mismatch");
  }
  ws.refresh_warm(z, y);
}

void QpSolver::warm_start_primal(const Vector& z) {
  if (!workspace_) throw std::logic_error("qp: warm_start before setup");
  auto& ws = *workspace_;
  if (z.size() != ws.n) {
    throw std::invalid_argument("qp: warm_start dimension mismatch");
  }
  if (ws.warm_y.size() != ws.m) ws.warm_y = Vector::Zero(ws.m);
  ws.refresh_warm(z, ws.warm_y);
}

bool QpSolver::same_pattern(const QpProblem& problem) const {
  if (!workspace_) return false;
  const auto& ws = *workspace_;
  if (problem.num_vars() != ws.n || problem.num_constraints() != ws.m) {
    return false;
  }
  return same_sparse_pattern(compressed_copy(problem.P), ws.P) &&
         same_sparse_pattern(compressed_copy(problem.A), ws.A);
}

bool QpSolver::same_matrices(const QpProblem& problem) const {
  if (!workspace_) return false;
  const auto& ws = *workspace_;
  if (problem.num_vars() != ws.n || problem.num_constraints() != ws.m) {
    return false;
  }
  return same_sparse_values(compressed_copy(problem.P), ws.P) &&
         same_sparse_values(compressed_copy(problem.A), ws.A);
}

QpSolution QpSolver::solve() {
  if (!workspace_) throw std::logic_error("qp: solve before setup");
  auto& ws = *workspace_;
  const auto& st = settings_;
  const Eigen::Index n = ws.n;
  const Eigen::Index m = ws.m;

  QpSolution sol;

  // A warm point that already satisfies the contract is returned as-is;
  // at receding-horizon equilibrium this is the whole solve. Without
  // curvature the stationarity residual cannot see moved bounds, so
  // the stale-pair guard is the complementarity check.
  const bool curvature_free = ws.P.nonZeros() == 0;
  if (ws.have_warm) {
    ResidualReport rep = ws.evaluate(ws.warm_x, ws.warm_y, nullptr, st.tol);
    const double warm_theta = 10.0 * (rep.prim + rep.tol_prim);
    if (getenv("QP_TRACE"))
      fprintf(stderr,
              "warm: prim=%.3e/%.3e dual=%.3e/%.3e comp=%d\n", rep.prim,
              rep.tol_prim, rep.dual, rep.tol_dual,
              (int)complementarity_ok(ws, ws.warm_y, st.tol.eps_abs,
                                      warm_theta));
    if (rep.pass() &&
        (!curvature_free ||
         complementarity_ok(ws, ws.warm_y, st.tol.eps_abs, warm_theta))) {
      sol.z_star = ws.warm_x;
      sol.y_star = ws.warm_y;
      sol.status = QpStatus::Solved;
      sol.iterations = 0;
      sol.primal_residual = rep.prim;
      sol.dual_residual = rep.dual;
      return sol;
    }
    if (st.polish && st.warm_polish) {
      std::vector<std::int8_t> act;
      bool try_warm = true;
      if (curvature_free) {
        // the attempt keeps x as-is, so it only makes sense once the
        // warm point is feasible; pins must come from current slacks,
        // never from remembered structure, or a stale dual would keep
        // certifying itself after the bounds moved
        if (rep.prim <= rep.tol_prim) {
          derive_active_set(ws, nullptr, &ws.ax, warm_theta, act);
        } else {
          try_warm = false;
        }
      } else if (!ws.last_polish_act.empty()) {
        // prefer the binding structure of the last polished solution; a
        // multiplier-derived set misses zero-multiplier binding rows
        act = ws.last_polish_act;
      } else {
        derive_active_set(ws, &ws.warm_y, nullptr, 0.0, act);
      }
      if (try_warm) {
        if (auto cand =
                attempt_polish(ws, act, ws.warm_x, ws.warm_y, st.tol, true, "W")) {
          sol.z_star = cand->x;
          sol.y_star = cand->y;
          sol.status = QpStatus::Solved;
          sol.iterations = 0;
          sol.primal_residual = cand->rep.prim;
          sol.dual_residual = cand->rep.dual;
          sol.polished = true;
          ws.refresh_warm(cand->x, cand->y);
          ws.last_polish_act = cand->act;
          return sol;
        }
        ws.failed_act = act;
      }
    }
  }

  ResidualReport rep;
  bool solved = false;
  bool have_report = false;
  int iter = 0;
  int last_adapt = 0;
  int polish_attempts = 0;
  std::vector<std::int8_t> act_now, act_prev;
  // without curvature a stale dual iterate keeps pulling toward the old
  // active set and re-converges slower than a cold dual; the warm pair
  // kept above is unaffected and still serves the reuse paths
  if (curvature_free) ws.ys.setZero();
  for (iter = 1; iter <= st.max_iter; ++iter) {
    ws.xs_prev = ws.xs;
    ws.ys_prev = ws.ys;

    ws.kkt_rhs.head(n) = st.sigma * ws.xs_prev - ws.qs;
    ws.kkt_rhs.tail(m) = ws.zs - ws.rho_inv_vec.cwiseProduct(ws.ys);
    ws.kkt_sol = ws.ldlt.solve(ws.kkt_rhs);

    ws.zt = ws.zs + ws.rho_inv_vec.cwiseProduct(ws.kkt_sol.tail(m) - ws.ys);
    ws.xs = st.alpha * ws.kkt_sol.head(n) + (1.0 - st.alpha) * ws.xs_prev;
    ws.w = st.alpha * ws.zt + (1.0 - st.alpha) * ws.zs +
           ws.rho_inv_vec.cwiseProduct(ws.ys);
    ws.zs = ws.w.cwiseMax(ws.ls).cwiseMin(ws.us);
    ws.ys = ws.rho_vec.cwiseProduct(ws.w - ws.zs);

    if (iter % st.check_interval == 0 || iter == st.max_iter) {
      if (!ws.xs.allFinite() || !ws.ys.allFinite()) break;
      ws.unscale_point();
      rep = ws.evaluate(ws.x_uns, ws.y_uns, &ws.z_uns, st.tol);
      have_report = true;
      if (rep.pass()) {
        solved = true;
        break;
      }

      // without curvature the attempt keeps x as-is, so wait for the
      // primal residual itself to pass; with curvature the reduced KKT
      // solve can still rescue a merely nearby iterate
      const bool prim_ready = curvature_free
                                  ? rep.prim <= rep.tol_prim
                                  : rep.prim <= 1e2 * rep.tol_prim;
      if (st.polish && st.in_loop_polish && polish_attempts < kMaxInLoopPolish &&
          prim_ready) {
        // evaluate() above left A*x at the current iterate in ws.ax
        const double theta = 10.0 * (rep.prim + rep.tol_prim);
        derive_active_set(ws, ws.P.nonZeros() == 0 ? nullptr : &ws.y_uns,
                          &ws.ax, theta, act_now);
        if (getenv("QP_TRACE")) {
          int na = 0, diff = 0;
          for (std::size_t k = 0; k < act_now.size(); ++k) {
            na += act_now[k] != 0;
            diff += act_prev.size() == act_now.size() && act_now[k] != act_prev[k];
          }
          fprintf(stderr, "it=%d theta=%.2e na=%d diff=%d memo=%d\n", iter,
                  theta, na, diff, (int)(act_now == ws.failed_act));
        }
        if (act_now == act_prev && act_now != ws.failed_act) {
          ++polish_attempts;
          // a stored dual from an earlier solve of the same objective
          // beats the mid-run iterate dual, which converges much later
          // than the primal
          const Vector& y_from = curvature_free && ws.have_warm ? ws.warm_y
                                                                : ws.y_uns;
          // mid-run, only the cheap reuse check is worth paying for on an
          // LP: the least-squares repair needs a fresh factorization per
          // pass and rarely settles from an iterate-derived set
          const bool in_loop_lsq =
              !curvature_free || getenv("QP_INLOOP_LSQ");  // TEMP experiment
          if (auto cand = attempt_polish(ws, act_now, ws.x_uns, y_from,
                                         st.tol, in_loop_lsq, "I")) {
            sol.z_star = cand->x;
            sol.y_star = cand->y;
            sol.status = QpStatus::Solved;
            sol.iterations = iter;
            sol.primal_residual = cand->rep.prim;
            sol.dual_residual = cand->rep.dual;
            sol.polished = true;
            ws.refresh_warm(cand->x, cand->y);
            ws.last_polish_act = cand->act;
            return sol;
          }
          ws.failed_act = act_now;
        }
        act_prev.swap(act_now);
      }

      // certificates from the last iterate step, in raw units
      Vector dy = ws.e.cwiseProduct(ws.ys - ws.ys_prev) / ws.c;
      if (primal_infeasibility(ws, dy, st.eps_infeasible, ws.aty)) {
        sol.status = QpStatus::PrimalInfeasible;
        sol.certificate = dy / inf_norm(dy);
        break;
      }
      Vector dx = ws.d.cwiseProduct(ws.xs - ws.xs_prev);
      if (dual_infeasibility(ws, dx, st.eps_infeasible, ws.px, ws.ax)) {
        sol.status = QpStatus::DualInfeasible;
        sol.certificate = dx / inf_norm(dx);
        break;
      }

      if (st.adaptive_rho && iter - last_adapt >= st.adaptive_rho_interval) {
        const double rp_rel = rep.prim / std::max(rep.scale_prim, 1e-10);
        const double rd_rel = rep.dual / std::max(rep.scale_dual, 1e-10);
        const double est =
            ws.rho_bar * std::sqrt(rp_rel / std::max(rd_rel, 1e-16));
        if (est > 5.0 * ws.rho_bar || est < 0.2 * ws.rho_bar) {
          ws.set_rho(est, st.rho_eq_scale);
          ws.build_kkt_values(st.sigma);
          ws.factorize();
        }
        last_adapt = iter;
      }
    }
  }
  iter = std::min(iter, st.max_iter);

  if (sol.status == QpStatus::PrimalInfeasible ||
      sol.status == QpStatus::DualInfeasible) {
    ws.unscale_point();
    sol.z_star = ws.x_uns;
    sol.y_star = ws.y_uns;
    sol.iterations = iter;
    sol.primal_residual = rep.prim;
    sol.dual_residual = rep.dual;
    ws.have_warm = false;
    return sol;
  }

  if (!solved) {
    ws.have_warm = false;
    if (ws.xs.allFinite() && ws.ys.allFinite()) {
      ws.unscale_point();
      if (!have_report) {
        rep = ws.evaluate(ws.x_uns, ws.y_uns, &ws.z_uns, st.tol);
      }
      sol.z_star = ws.x_uns;
      sol.y_star = ws.y_uns;
      sol.primal_residual = rep.prim;
      sol.dual_residual = rep.dual;
      // a near-feasible iterate is still a useful warm point for the
      // next solve; a diverging one is not
      if (rep.prim <= 1e2 * rep.tol_prim) {
        ws.refresh_warm(ws.x_uns, ws.y_uns);
      }
    } else {
      sol.z_star = Vector::Zero(n);
      sol.y_star = Vector::Zero(m);
    }
    sol.status = QpStatus::MaxIter;
    sol.iterations = iter;
    return sol;
  }

  sol.z_star = ws.x_uns;
  sol.y_star = ws.y_uns;
  sol.status = QpStatus::Solved;
  sol.iterations = iter;
  sol.primal_residual = rep.prim;
  sol.dual_residual = rep.dual;

  if (st.polish) {
    std::vector<std::int8_t> act;
    // rep's evaluate() left A*x for the accepted iterate in ws.ax
    const double theta = 10.0 * (rep.prim + rep.tol_prim);
    derive_active_set(ws, ws.P.nonZeros() == 0 ? nullptr : &ws.y_uns, &ws.ax,
                      theta, act);
    if (auto cand = attempt_polish(ws, act, ws.x_uns, ws.y_uns, st.tol, true, "F")) {
      const double before = std::max(rep.prim / std::max(rep.tol_prim, 1e-300),
                                     rep.dual / std::max(rep.tol_dual, 1e-300));
      const double after =
          std::max(cand->rep.prim / std::max(cand->rep.tol_prim, 1e-300),
                   cand->rep.dual / std::max(cand->rep.tol_dual, 1e-300));
      if (after <= before) {
        sol.z_star = cand->x;
        sol.y_star = cand->y;
        sol.primal_residual = cand->rep.prim;
        sol.dual_residual = cand->rep.dual;
        sol.polished = true;
        ws.last_polish_act = cand->act;
      }
    }
  }
  ws.refresh_warm(sol.z_star, sol.y_star);
  return sol;
}

QpSolution solve(const QpProblem& problem,
                 std::optional<std::pair<Vector, Vector>> warm_start,
                 Tolerances tol) {
  QpSolver solver;
  solver.settings().tol = tol;
  solver.setup(problem);
  if (warm_start) solver.warm_start(warm_start->first, warm_start->second);
  return solver.solve();
}

std::vector<QpSolution> solve_sequence(const std::vector<QpProblem>& problems,
                                       Tolerances tol) {
  std::vector<QpSolution> out;
  out.reserve(problems.size());
  QpSolver solver;
  solver.settings().tol = tol;
  std::optional<QpSolution> prev;
  for (const auto& prob : problems) {
    if (!solver.is_setup()) {
      solver.setup(prob);
    } else if (!solver.same_pattern(prob)) {
      throw std::invalid_argument("qp: solve_sequence sparsity mismatch");
    } else if (solver.same_matrices(prob)) {
      solver.update_vectors(prob.q, prob.l, prob.u);
    } else {
      solver.setup(prob);
      if (prev && prev->status == QpStatus::Solved) {
        solver.warm_start(prev->z_star, prev->y_star);
      }
    }
    out.push_back(solver.solve());
    prev = out.back();
  }
  return out;
}

}  // namespace platoon::qp
