#include "mwmp/slq.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include "mwmp/errors.hpp"
#include "mwmp/geometry.hpp"

namespace mwmp {

namespace {

Eigen::VectorXd state_difference(const SlqProblem& problem,
                                 const Eigen::VectorXd& a,
                                 const Eigen::VectorXd& b) {
  if (problem.layout) return problem.layout->difference(a, b);
  return a - b;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, const std::vector<int>& rows,
                          int cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), cols);
  if (M.size() == 0) {
    out.setZero();
    return out;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = M.row(rows[i]);
  return out;
}

// Indices of a maximal well-conditioned subset of a PSD Gram matrix,
// chosen by column-pivoted QR (largest pivots first), returned sorted.
std::vector<int> independent_subset(const Eigen::MatrixXd& gram,
                                    double rel_threshold) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  qr.setThreshold(rel_threshold);
  const int rank = static_cast<int>(qr.rank());
  const auto& perm = qr.colsPermutation().indices();
  std::vector<int> keep(perm.data(), perm.data() + rank);
  std::sort(keep.begin(), keep.end());
  return keep;
}

bool goal_met(const SolverConfig& config, const Eigen::VectorXd& xN) {
  if (!config.goal) return true;
  const GoalSpec& g = *config.goal;
  Eigen::Vector3d p;
  for (int i = 0; i < 3; ++i) p(i) = xN(g.position_rows[i]);
  if ((p - g.position).norm() > config.goal_position_tol) return false;
  for (int i = 0; i < 3; ++i) {
    const double err =
        std::abs(angle_difference(xN(g.orientation_rows[i]), g.orientation(i)));
    if (err > config.goal_orientation_tol) return false;
  }
  return true;
}

bool plan_safe(const SolverConfig& config, const CostMap* costmap,
               const std::vector<Eigen::VectorXd>& xs) {
  if (!costmap || config.base_x_row < 0 || config.base_y_row < 0) return true;
  for (const auto& x : xs) {
    const Eigen::Vector2d p(x(config.base_x_row), x(config.base_y_row));
    if (!costmap->contains(p)) return false;
    const Eigen::Vector2i c = costmap->cell_of(p);
    const int ix = std::clamp(c.x(), 0, costmap->width() - 1);
    const int iy = std::clamp(c.y(), 0, costmap->height() - 1);
    if (costmap->is_blocked(ix, iy)) return false;
  }
  return true;
}

std::vector<Eigen::VectorXd> repulsive_terms(const SolverConfig& config,
                                             const CostMap* costmap, int nx,
                                             const std::vector<Eigen::VectorXd>& xs) {
  std::vector<Eigen::VectorXd> omega;
  if (!costmap || config.repulsive_weight == 0.0 || config.base_x_row < 0 ||
      config.base_y_row < 0)
    return omega;
  omega.resize(xs.size(), Eigen::VectorXd::Zero(nx));
  const Eigen::Vector2d lo = costmap->origin();
  const Eigen::Vector2d hi =
      costmap->origin() + costmap->resolution() * Eigen::Vector2d(
                                                      costmap->width(),
                                                      costmap->height());
  for (std::size_t n = 0; n < xs.size(); ++n) {
    Eigen::Vector2d p(xs[n](config.base_x_row), xs[n](config.base_y_row));
    p.x() = std::clamp(p.x(), lo.x() + 1e-9, hi.x() - 1e-9);
    p.y() = std::clamp(p.y(), lo.y() + 1e-9, hi.y() - 1e-9);
    const Eigen::Vector2d g = costmap->repulsive_gradient(p);
    omega[n](config.base_x_row) = config.repulsive_weight * g.x();
    omega[n](config.base_y_row) = config.repulsive_weight * g.y();
  }
  return omega;
}

double stacked_norm(const std::vector<Eigen::VectorXd>& vs) {
  double acc = 0.0;
  for (const auto& v : vs) acc += v.squaredNorm();
  return std::sqrt(acc);
}

}  // namespace

SlqProblem make_problem(const LinearizedSystem& sys,
                        const StateLayout* layout) {
  if (sys.steps() == 0) throw ParameterError("make_problem: empty system");
  SlqProblem p;
  p.state_dim = static_cast<int>(sys.A[0].rows());
  p.input_dim = static_cast<int>(sys.B[0].cols());
  p.dt = sys.dt;
  p.layout = layout;
  p.rollout = [&sys, layout](const Eigen::VectorXd& x0,
                             const std::vector<Eigen::VectorXd>& us) {
    return forward_simulate(sys, x0, us, layout);
  };
  p.linearize = [&sys](const std::vector<Eigen::VectorXd>&) { return sys; };
  return p;
}

SlqProblem make_problem(const PlatformModel& model) {
  SlqProblem p;
  p.state_dim = model.state_dim();
  p.input_dim = model.input_dim();
  p.dt = model.dt();
  p.layout = &model.layout();
  p.rollout = [&model](const Eigen::VectorXd& x0,
                       const std::vector<Eigen::VectorXd>& us) {
    return forward_simulate(model, x0, us);
  };
  p.linearize = [&model](const std::vector<Eigen::VectorXd>& xs) {
    return assemble_linearization(model, xs, model.dt());
  };
  return p;
}

Predefinitions compute_predefinitions(
    const LinearizedSystem& sys, const SolverConfig& config,
    const SlqProblem& problem, const std::vector<Eigen::VectorXd>& xs,
    const std::vector<Eigen::VectorXd>& us, const ConstraintSet* constraints,
    const std::vector<std::vector<int>>& active_si) {
  const int N = sys.steps();
  const int nx = problem.state_dim;
  const int nu = problem.input_dim;

  Predefinitions pre;
  pre.active_si.assign(N, {});
  pre.Cc.resize(N);
  pre.Dc.resize(N);
  pre.Dhat.resize(N);
  pre.rhat.resize(N);
  pre.Ahat.resize(N);
  pre.Rhat.resize(N);
  pre.Qhat.resize(N);
  pre.xbar0.resize(N + 1);
  pre.ubar0.resize(N);
  pre.xhat0.resize(N);
  pre.uhat0.resize(N);
  pre.Rinv.resize(N);
  pre.BRinv.resize(N);

  for (int n = 0; n <= N; ++n)
    pre.xbar0[n] =
        config.Q[n] * state_difference(problem, xs[n], config.x_ref[n]);

  const Eigen::MatrixXd Iu = Eigen::MatrixXd::Identity(nu, nu);
  for (int n = 0; n < N; ++n) {
    pre.ubar0[n] = config.R[n] * (us[n] - config.u_ref[n]);

    Eigen::LLT<Eigen::MatrixXd> llt(config.R[n]);
    if (llt.info() != Eigen::Success)
      throw ParameterError("slq: R(n) must be symmetric positive definite");
    pre.Rinv[n] = llt.solve(Iu);
    pre.BRinv[n] = sys.B[n] * pre.Rinv[n];

    std::vector<int> rows =
        n < static_cast<int>(active_si.size()) ? active_si[n] : std::vector<int>{};
    if (rows.empty() || !constraints) {
      pre.Ahat[n] = sys.A[n];
      pre.Rhat[n] = pre.BRinv[n] * sys.B[n].transpose();
      pre.Rhat[n] = 0.5 * (pre.Rhat[n] + pre.Rhat[n].transpose()).eval();
      pre.Qhat[n] = config.Q[n];
      pre.xhat0[n] = pre.xbar0[n];
      pre.uhat0[n] = -pre.BRinv[n] * pre.ubar0[n];
      continue;
    }

    Eigen::MatrixXd Cc = take_rows(constraints->C[n], rows, nx);
    Eigen::MatrixXd Dc = take_rows(constraints->D[n], rows, nu);
    Eigen::VectorXd resid(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      resid(i) = constraints->r[n](rows[i]);
    resid += Cc * xs[n] + Dc * us[n];

    // Drop rows whose input directions are dependent before inverting the
    // Gram matrix.
    Eigen::MatrixXd gram = Dc * pre.Rinv[n] * Dc.transpose();
    gram = 0.5 * (gram + gram.transpose()).eval();
    const std::vector<int> keep = independent_subset(gram, 1e-12);
    if (keep.size() < rows.size()) {
      std::vector<int> kept_rows;
      for (int k : keep) kept_rows.push_back(rows[k]);
      Cc = take_rows(constraints->C[n], kept_rows, nx);
      Dc = take_rows(constraints->D[n], kept_rows, nu);
      Eigen::VectorXd r2(kept_rows.size());
      for (std::size_t i = 0; i < kept_rows.size(); ++i)
        r2(i) = constraints->r[n](kept_rows[i]);
      resid = r2 + Cc * xs[n] + Dc * us[n];
      rows = kept_rows;
      gram = (Dc * pre.Rinv[n] * Dc.transpose()).eval();
      gram = 0.5 * (gram + gram.transpose()).eval();
    }
    pre.active_si[n] = rows;
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    pre.Dhat[n] = gram.ldlt().solve(Eigen::MatrixXd::Identity(m, m));
    pre.Cc[n] = Cc;
    pre.Dc[n] = Dc;
    // Level of the linearized equality in step coordinates: the reference
    // pull plus the current residual, so an active row lands on its boundary.
    pre.rhat[n] = -Dc * pre.Rinv[n] * pre.ubar0[n] + resid;

    const Eigen::MatrixXd DhD = pre.Dhat[n] * Dc;
    pre.Ahat[n] =
        sys.A[n] - pre.BRinv[n] * Dc.transpose() * pre.Dhat[n] * Cc;
    pre.Rhat[n] = pre.BRinv[n] *
                  (Iu - Dc.transpose() * DhD * pre.Rinv[n]) *
                  sys.B[n].transpose();
    pre.Rhat[n] = 0.5 * (pre.Rhat[n] + pre.Rhat[n].transpose()).eval();
    pre.Qhat[n] = config.Q[n] + Cc.transpose() * pre.Dhat[n] * Cc;
    pre.Qhat[n] = 0.5 * (pre.Qhat[n] + pre.Qhat[n].transpose()).eval();
    pre.xhat0[n] = pre.xbar0[n] + Cc.transpose() * pre.Dhat[n] * pre.rhat[n];
    pre.uhat0[n] = -pre.BRinv[n] *
                   (pre.ubar0[n] + Dc.transpose() * pre.Dhat[n] * pre.rhat[n]);
  }
  return pre;
}

BackwardPassState backward_pass(const LinearizedSystem& sys,
                                const SolverConfig& config, Predefinitions pre,
                                const std::vector<Eigen::VectorXd>& repulsive) {
  const int N = sys.steps();
  const int nx = static_cast<int>(sys.A[0].rows());
  const bool rep = !repulsive.empty();

  BackwardPassState bps;
  bps.M.resize(N);
  bps.P.resize(N + 1);
  bps.s.resize(N + 1);
  bps.P[N] = 0.5 * (config.Q[N] + config.Q[N].transpose());
  bps.s[N] = pre.xbar0[N];
  if (rep) bps.s[N] += repulsive[N];

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(nx, nx);
  Eigen::MatrixXd IRP(nx, nx), T(nx, nx);
  for (int n = N - 1; n >= 0; --n) {
    IRP.noalias() = pre.Rhat[n] * bps.P[n + 1];
    IRP += I;
    double eps = 1e-8;
    Eigen::MatrixXd Mn;
    bool ok = false;
    for (int attempt = 0; attempt < 4; ++attempt) {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(IRP);
      Mn = lu.solve(I);
      if (Mn.allFinite()) {
        const Eigen::VectorXd probe = Eigen::VectorXd::Ones(nx);
        const double resid = (IRP * (Mn * probe) - probe).norm();
        if (resid < 1e-6 * std::sqrt(static_cast<double>(nx))) {
          ok = true;
          break;
        }
      }
      IRP += eps * I;
      eps *= 10.0;
    }
    if (!ok)
      throw SolverError("backward pass: singular (I + Rhat * P)", n);
    bps.M[n] = Mn;

    T.noalias() = bps.P[n + 1] * Mn;
    bps.P[n].noalias() = pre.Ahat[n].transpose() * (T * pre.Ahat[n]);
    bps.P[n] += pre.Qhat[n];
    bps.P[n] = 0.5 * (bps.P[n] + bps.P[n].transpose()).eval();

    bps.s[n].noalias() = pre.Ahat[n].transpose() * (Mn.transpose() * bps.s[n + 1]);
    bps.s[n].noalias() += pre.Ahat[n].transpose() * (T * pre.uhat0[n]);
    bps.s[n] += pre.xhat0[n];
    if (rep) bps.s[n] += repulsive[n];

    if (!bps.P[n].allFinite() || !bps.s[n].allFinite())
      throw SolverError("backward pass: non-finite Riccati state", n);
  }
  bps.pre = std::move(pre);
  return bps;
}

ConstraintCorrection state_constraint_correction(
    const std::vector<StateConstraintInstance>& instances,
    const ConstraintSet& constraints, const LinearizedSystem& sys,
    BackwardPassState& bps) {
  ConstraintCorrection corr;
  const int q = static_cast<int>(instances.size());
  if (q == 0) return corr;
  const int nx = static_cast<int>(sys.A[0].rows());

  int t_max = 0;
  for (const auto& inst : instances) t_max = std::max(t_max, inst.step);

  // Psi rows per instance for every step n <= t_c; psi[c].row(n) = Psi_c(n).
  std::vector<Eigen::MatrixXd> psi(q);
  for (int c = 0; c < q; ++c)
    psi[c] = Eigen::MatrixXd::Zero(instances[c].step + 1, nx);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd H(q);
  for (int c = 0; c < q; ++c) H(c) = instances[c].level;

  std::vector<int> alive;
  Eigen::MatrixXd stack;  // rows follow `alive`, holding Psi_c(n+1)
  for (int n = t_max - 1; n >= 0; --n) {
    bool activated = false;
    for (int c = 0; c < q; ++c) {
      if (instances[c].step == n + 1) {
        psi[c].row(n + 1) = constraints.G[n + 1].row(instances[c].row);
        alive.push_back(c);
        activated = true;
      }
    }
    if (activated || stack.rows() != static_cast<Eigen::Index>(alive.size())) {
      stack.resize(alive.size(), nx);
      for (std::size_t i = 0; i < alive.size(); ++i)
        stack.row(i) = psi[alive[i]].row(n + 1);
    }

    const Eigen::MatrixXd W = stack * bps.M[n];
    const Eigen::VectorXd drive =
        bps.pre.uhat0[n] - bps.pre.Rhat[n] * bps.s[n + 1];
    const Eigen::VectorXd dy = W * drive;
    const Eigen::MatrixXd WR = W * bps.pre.Rhat[n];
    const Eigen::MatrixXd dF = WR * stack.transpose();
    for (std::size_t i = 0; i < alive.size(); ++i) {
      y(alive[i]) += dy(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j < alive.size(); ++j)
        F(alive[i], alive[j]) -= dF(static_cast<Eigen::Index>(i),
                                    static_cast<Eigen::Index>(j));
    }

    stack = (W * bps.pre.Ahat[n]).eval();
    for (std::size_t i = 0; i < alive.size(); ++i)
      psi[alive[i]].row(n) = stack.row(i);
  }

  // Multipliers solve F nu = -(y + H); F = -sum Psi M Rhat Psi' is symmetric
  // negative semidefinite, so work with the positive form.
  Eigen::MatrixXd Fp = -0.5 * (F + F.transpose());
  Eigen::VectorXd rhs = y + H;

  std::vector<int> keep = independent_subset(Fp, 1e-12);
  corr.nu = Eigen::VectorXd::Zero(q);
  if (static_cast<int>(keep.size()) < q) {
    std::vector<std::uint8_t> kept(q, 0);
    for (int k : keep) kept[k] = 1;
    for (int c = 0; c < q; ++c)
      if (!kept[c]) corr.dropped.push_back(c);
  }
  if (!keep.empty()) {
    Eigen::MatrixXd Fk(keep.size(), keep.size());
    Eigen::VectorXd rk(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      rk(i) = rhs(keep[i]);
      for (std::size_t j = 0; j < keep.size(); ++j)
        Fk(i, j) = Fp(keep[i], keep[j]);
    }
    const Eigen::VectorXd nuk = Fk.ldlt().solve(rk);
    if (!nuk.allFinite())
      throw SolverError("state constraint correction: singular Gram matrix");
    for (std::size_t i = 0; i < keep.size(); ++i) corr.nu(keep[i]) = nuk(i);
  }

  for (int c = 0; c < q; ++c) {
    if (corr.nu(c) == 0.0) continue;
    for (int n = 0; n <= instances[c].step; ++n)
      bps.s[n] += psi[c].row(n).transpose() * corr.nu(c);
  }
  return corr;
}

StepPlan forward_pass(const LinearizedSystem& sys,
                      const BackwardPassState& bps) {
  const int N = sys.steps();
  const int nx = static_cast<int>(sys.A[0].rows());
  const Predefinitions& pre = bps.pre;

  StepPlan plan;
  plan.xbar.resize(N + 1);
  plan.ubar.resize(N);
  plan.lambda.resize(N + 1);
  plan.mu.resize(N);
  plan.xbar[0] = Eigen::VectorXd::Zero(nx);
  plan.lambda[0] = Eigen::VectorXd::Zero(nx);

  for (int n = 0; n < N; ++n) {
    const Eigen::VectorXd vhat =
        bps.M[n] * (pre.uhat0[n] - pre.Rhat[n] * bps.s[n + 1]);
    plan.xbar[n + 1] = vhat + bps.M[n] * (pre.Ahat[n] * plan.xbar[n]);
    plan.lambda[n + 1] = bps.s[n + 1] + bps.P[n + 1] * plan.xbar[n + 1];

    const Eigen::VectorXd Blam = sys.B[n].transpose() * plan.lambda[n + 1];
    if (!pre.active_si[n].empty()) {
      plan.mu[n] = pre.Dhat[n] *
                   (pre.Cc[n] * plan.xbar[n] -
                    pre.Dc[n] * (pre.Rinv[n] * Blam) + pre.rhat[n]);
      plan.ubar[n] =
          -pre.Rinv[n] *
          (Blam + pre.Dc[n].transpose() * plan.mu[n] + pre.ubar0[n]);
    } else {
      plan.mu[n] = Eigen::VectorXd();
      plan.ubar[n] = -pre.Rinv[n] * (Blam + pre.ubar0[n]);
    }
  }
  return plan;
}

double total_cost(const SolverConfig& config, const SlqProblem& problem,
                  const std::vector<Eigen::VectorXd>& xs,
                  const std::vector<Eigen::VectorXd>& us) {
  const int N = static_cast<int>(us.size());
  double J = 0.0;
  for (int n = 0; n < N; ++n) {
    const Eigen::VectorXd dx = state_difference(problem, xs[n], config.x_ref[n]);
    const Eigen::VectorXd du = us[n] - config.u_ref[n];
    J += 0.5 * dx.dot(config.Q[n] * dx) + 0.5 * du.dot(config.R[n] * du);
  }
  const Eigen::VectorXd dxN =
      state_difference(problem, xs[N], config.x_ref[N]);
  J += 0.5 * dxN.dot(config.Q[N] * dxN);
  return J;
}

namespace {

// Residuals of all rows at the current iterate and their slopes along the
// step, exploiting linearity of the constraint rows in alpha.
struct ResidualLine {
  std::vector<double> value;
  std::vector<double> slope;
};

ResidualLine constraint_residual_line(const ConstraintSet& cs,
                                      const std::vector<Eigen::VectorXd>& xs,
                                      const std::vector<Eigen::VectorXd>& us,
                                      const StepPlan& step) {
  ResidualLine line;
  const int N = static_cast<int>(us.size());
  for (int n = 0; n < N && n < cs.horizon(); ++n) {
    const int rows = cs.state_input_rows(n);
    if (rows == 0) continue;
    Eigen::VectorXd v = cs.r[n];
    Eigen::VectorXd d = Eigen::VectorXd::Zero(rows);
    if (cs.C[n].size() > 0) {
      v += cs.C[n] * xs[n];
      d += cs.C[n] * step.xbar[n];
    }
    if (cs.D[n].size() > 0) {
      v += cs.D[n] * us[n];
      d += cs.D[n] * step.ubar[n];
    }
    for (int i = 0; i < rows; ++i) {
      line.value.push_back(v(i));
      line.slope.push_back(d(i));
    }
  }
  for (int n = 0; n < static_cast<int>(xs.size()) &&
                  n < static_cast<int>(cs.h.size());
       ++n) {
    const int rows = cs.pure_state_rows(n);
    if (rows == 0) continue;
    const Eigen::VectorXd v = cs.G[n] * xs[n] + cs.h[n];
    const Eigen::VectorXd d = cs.G[n] * step.xbar[n];
    for (int i = 0; i < rows; ++i) {
      line.value.push_back(v(i));
      line.slope.push_back(d(i));
    }
  }
  return line;
}

}  // namespace

AlphaResult select_alpha(const SolverConfig& config, const SlqProblem& problem,
                         const std::vector<Eigen::VectorXd>& xs,
                         const std::vector<Eigen::VectorXd>& us,
                         const StepPlan& step, const ConstraintSet* constraints,
                         AlphaMode mode) {
  const int N = static_cast<int>(us.size());
  std::vector<double> candidates;
  for (int k = 0; k <= config.line_search_depth; ++k)
    candidates.push_back(std::pow(2.0, -k));

  auto cost_at = [&](double a) {
    std::vector<Eigen::VectorXd> xt(xs.size()), ut(us.size());
    for (std::size_t n = 0; n < xs.size(); ++n)
      xt[n] = xs[n] + a * step.xbar[n];
    for (int n = 0; n < N; ++n) ut[n] = us[n] + a * step.ubar[n];
    return total_cost(config, problem, xt, ut);
  };

  const bool constrained = mode == AlphaMode::constrained && constraints &&
                           !constraints->empty();
  bool new_violation = false;
  ResidualLine line;
  if (constrained) {
    line = constraint_residual_line(*constraints, xs, us, step);
    const double tol = config.constraint_tol;
    for (std::size_t i = 0; i < line.value.size(); ++i) {
      if (line.value[i] <= tol && line.value[i] + line.slope[i] > tol) {
        new_violation = true;
        break;
      }
    }
  }

  AlphaResult result;
  if (!constrained || !new_violation) {
    const double J0 = total_cost(config, problem, xs, us);
    double best = candidates[0];
    double bestJ = cost_at(candidates[0]);
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      const double J = cost_at(candidates[k]);
      if (J < bestJ) {
        bestJ = J;
        best = candidates[k];
      }
    }
    result.alpha = best;
    result.cost_branch = true;
    result.stalled = bestJ > J0 + 1e-12 * (1.0 + std::abs(J0));
    return result;
  }

  // A candidate is acceptable when no row gets deeper into violation than it
  // already is.
  const double tol = config.constraint_tol;
  for (double a : candidates) {
    bool ok = true;
    for (std::size_t i = 0; i < line.value.size(); ++i) {
      const double allowed = std::max(line.value[i], 0.0) + tol;
      if (line.value[i] + a * line.slope[i] > allowed) {
        ok = false;
        break;
      }
    }
    if (ok) {
      result.alpha = a;
      result.cost_branch = false;
      return result;
    }
  }
  result.alpha = candidates.back();
  result.cost_branch = false;
  result.stalled = true;
  return result;
}

bool check_termination(const SolverConfig& config, const SlqProblem& problem,
                       const std::vector<Eigen::VectorXd>& xs,
                       const std::vector<Eigen::VectorXd>& us,
                       const std::vector<Eigen::VectorXd>& ubar, double alpha,
                       const ConstraintSet* constraints,
                       const CostMap* costmap) {
  const double step_norm = alpha * stacked_norm(ubar);
  const double u_norm = stacked_norm(us);
  if (step_norm > config.convergence_ratio * u_norm + 1e-12) return false;
  if (!goal_met(config, xs.back())) return false;
  if (!plan_safe(config, costmap, xs)) return false;
  if (constraints && !constraints->empty()) {
    const ViolationReport report =
        evaluate_constraints(*constraints, xs, us, config.constraint_tol);
    if (!report.feasible()) return false;
  }
  return true;
}

namespace {

struct WorkingSet {
  std::vector<std::vector<int>> state_input;       // per step row ids
  std::vector<StateConstraintInstance> pure_state;

  bool has_si(int n, int row) const {
    const auto& v = state_input[n];
    return std::find(v.begin(), v.end(), row) != v.end();
  }
  bool has_ps(int step, int row) const {
    for (const auto& inst : pure_state)
      if (inst.step == step && inst.row == row) return true;
    return false;
  }
};

WorkingSet seed_working_set(const ConstraintSet& cs,
                            const std::vector<Eigen::VectorXd>& xs,
                            const std::vector<Eigen::VectorXd>& us,
                            const SolverConfig& config) {
  WorkingSet ws;
  const int N = static_cast<int>(us.size());
  ws.state_input.assign(N, {});
  const double tol = config.constraint_tol;
  for (int n = 0; n < N && n < cs.horizon(); ++n) {
    const int rows = cs.state_input_rows(n);
    if (rows == 0) continue;
    Eigen::VectorXd resid = cs.r[n];
    if (cs.C[n].size() > 0) resid += cs.C[n] * xs[n];
    if (cs.D[n].size() > 0) resid += cs.D[n] * us[n];
    for (int i = 0; i < rows; ++i)
      if (resid(i) >= -tol) ws.state_input[n].push_back(i);
  }
  for (int n = 1; n < static_cast<int>(xs.size()) &&
                  n < static_cast<int>(cs.h.size());
       ++n) {
    const int rows = cs.pure_state_rows(n);
    if (rows == 0) continue;
    const Eigen::VectorXd resid = cs.G[n] * xs[n] + cs.h[n];
    for (int i = 0; i < rows; ++i)
      if (resid(i) >= -tol) ws.pure_state.push_back({n, i, resid(i)});
  }
  if (static_cast<int>(ws.pure_state.size()) > config.max_constraint_instances) {
    std::stable_sort(ws.pure_state.begin(), ws.pure_state.end(),
                     [](const StateConstraintInstance& a,
                        const StateConstraintInstance& b) {
                       return a.level > b.level;
                     });
    ws.pure_state.resize(config.max_constraint_instances);
    std::stable_sort(ws.pure_state.begin(), ws.pure_state.end(),
                     [](const StateConstraintInstance& a,
                        const StateConstraintInstance& b) {
                       return a.step != b.step ? a.step < b.step
                                               : a.row < b.row;
                     });
  }
  return ws;
}

}  // namespace

SolveResult solve(const SlqProblem& problem, const Eigen::VectorXd& x0,
                  const std::vector<Eigen::VectorXd>& u_init,
                  const SolverConfig& config, const ConstraintSet* constraints,
                  const CostMap* costmap) {
  const int N = static_cast<int>(u_init.size());
  if (N < 1) throw ParameterError("solve: empty control plan");
  if (static_cast<int>(config.Q.size()) != N + 1 ||
      static_cast<int>(config.R.size()) != N ||
      static_cast<int>(config.x_ref.size()) != N + 1 ||
      static_cast<int>(config.u_ref.size()) != N)
    throw ParameterError("solve: config horizon mismatch");

  const bool constrained_mode = constraints && !constraints->empty();

  std::vector<Eigen::VectorXd> us = u_init;
  std::vector<Eigen::VectorXd> xs = problem.rollout(x0, us);

  SolveResult result;
  int applied = 0;
  bool converged = false;

  if (config.diagnostics)
    (*config.diagnostics) << "iteration,J,step_norm,alpha,active_si,active_ps,"
                             "dropped\n";

  while (true) {
    const LinearizedSystem sys = problem.linearize(xs);
    const std::vector<Eigen::VectorXd> repulsive =
        repulsive_terms(config, costmap, problem.state_dim, xs);

    WorkingSet ws;
    if (constrained_mode) ws = seed_working_set(*constraints, xs, us, config);

    BackwardPassState bps;
    StepPlan step;
    ConstraintCorrection corr;
    int active_si_count = 0;
    std::set<std::pair<int, int>> just_added_si, just_added_ps;

    for (int round = 0;; ++round) {
      Predefinitions pre = compute_predefinitions(
          sys, config, problem, xs, us, constrained_mode ? constraints : nullptr,
          constrained_mode ? ws.state_input
                           : std::vector<std::vector<int>>{});
      bps = backward_pass(sys, config, std::move(pre), repulsive);
      if (constrained_mode && !ws.pure_state.empty())
        corr = state_constraint_correction(ws.pure_state, *constraints, sys,
                                           bps);
      else
        corr = ConstraintCorrection{};
      step = forward_pass(sys, bps);

      if (!constrained_mode || round >= config.max_inner_refinements) break;

      bool changed = false;
      // Add rows the full step would newly violate.
      const ResidualLine line =
          constraint_residual_line(*constraints, xs, us, step);
      std::size_t cursor = 0;
      const double tol = config.constraint_tol;
      for (int n = 0; n < N && n < constraints->horizon(); ++n) {
        const int rows = constraints->state_input_rows(n);
        for (int i = 0; i < rows; ++i, ++cursor) {
          const double trial = line.value[cursor] + line.slope[cursor];
          if (trial > tol && !ws.has_si(n, i)) {
            ws.state_input[n].push_back(i);
            just_added_si.insert({n, i});
            changed = true;
          }
        }
      }
      for (int n = 0; n < static_cast<int>(xs.size()) &&
                      n < static_cast<int>(constraints->h.size());
           ++n) {
        const int rows = constraints->pure_state_rows(n);
        for (int i = 0; i < rows; ++i, ++cursor) {
          const double trial = line.value[cursor] + line.slope[cursor];
          if (n >= 1 && trial > tol && !ws.has_ps(n, i) &&
              static_cast<int>(ws.pure_state.size()) <
                  config.max_constraint_instances) {
            ws.pure_state.push_back({n, i, line.value[cursor]});
            just_added_ps.insert({n, i});
            changed = true;
          }
        }
      }
      if (changed) {
        std::stable_sort(ws.pure_state.begin(), ws.pure_state.end(),
                         [](const StateConstraintInstance& a,
                            const StateConstraintInstance& b) {
                           return a.step != b.step ? a.step < b.step
                                                   : a.row < b.row;
                         });
        continue;
      }

      // Release rows whose multipliers pull away from the boundary.
      double mu_scale = 0.0;
      for (const auto& mu : step.mu)
        if (mu.size() > 0) mu_scale = std::max(mu_scale, mu.lpNorm<Eigen::Infinity>());
      if (corr.nu.size() > 0)
        mu_scale = std::max(mu_scale, corr.nu.lpNorm<Eigen::Infinity>());
      const double release_tol = 1e-9 * (1.0 + mu_scale);

      for (int n = 0; n < N; ++n) {
        const auto& rows = bps.pre.active_si[n];
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (step.mu[n].size() == 0) break;
          if (step.mu[n](static_cast<Eigen::Index>(i)) < -release_tol &&
              just_added_si.find({n, rows[i]}) == just_added_si.end()) {
            auto& v = ws.state_input[n];
            v.erase(std::remove(v.begin(), v.end(), rows[i]), v.end());
            changed = true;
          }
        }
      }
      for (int c = static_cast<int>(ws.pure_state.size()) - 1; c >= 0; --c) {
        if (c < corr.nu.size() && corr.nu(c) < -release_tol &&
            just_added_ps.find({ws.pure_state[c].step, ws.pure_state[c].row}) ==
                just_added_ps.end()) {
          ws.pure_state.erase(ws.pure_state.begin() + c);
          changed = true;
        }
      }
      if (!changed) break;
    }

    for (const auto& rows : bps.pre.active_si)
      active_si_count += static_cast<int>(rows.size());

    // A negligible step at a compliant, goal-satisfying iterate means the
    // solver is already converged; the pass is not counted as an iteration.
    const double u_norm = stacked_norm(us);
    const double raw_step = stacked_norm(step.ubar);
    const bool small_step =
        raw_step <= config.convergence_ratio * u_norm + 1e-12;
    if (small_step && goal_met(config, xs.back()) &&
        plan_safe(config, costmap, xs) &&
        (!constrained_mode ||
         evaluate_constraints(*constraints, xs, us, config.constraint_tol)
             .feasible())) {
      converged = true;
      break;
    }
    if (applied >= config.max_iterations) break;

    const AlphaResult ar =
        select_alpha(config, problem, xs, us, step, constraints,
                     constrained_mode ? AlphaMode::constrained
                                      : AlphaMode::unconstrained);
    result.stalled = result.stalled || ar.stalled;
    for (int n = 0; n < N; ++n) us[n] += ar.alpha * step.ubar[n];
    xs = problem.rollout(x0, us);
    ++applied;

    if (config.diagnostics) {
      (*config.diagnostics)
          << applied << ',' << total_cost(config, problem, xs, us) << ','
          << raw_step << ',' << ar.alpha << ',' << active_si_count << ','
          << ws.pure_state.size() << ',' << corr.dropped.size() << '\n';
    }
    result.diagnostics.push_back({applied, total_cost(config, problem, xs, us),
                                  raw_step, ar.alpha, active_si_count,
                                  static_cast<int>(ws.pure_state.size()),
                                  static_cast<int>(corr.dropped.size())});

    if (check_termination(config, problem, xs, us, step.ubar, ar.alpha,
                          constraints, costmap)) {
      converged = true;
      break;
    }
  }

  result.plan.x = std::move(xs);
  result.plan.u = std::move(us);
  result.plan.dt = problem.dt;
  result.iterations = std::max(1, applied);
  result.converged = converged;
  result.cost = total_cost(config, problem, result.plan.x, result.plan.u);
  if (constrained_mode)
    result.violations = evaluate_constraints(*constraints, result.plan.x,
                                             result.plan.u,
                                             config.constraint_tol);
  return result;
}

std::vector<Eigen::MatrixXd> constant_sequence(const Eigen::MatrixXd& M,
                                               int count) {
  return std::vector<Eigen::MatrixXd>(count, M);
}

std::vector<Eigen::VectorXd> constant_references(const Eigen::VectorXd& v,
                                                 int count) {
  return std::vector<Eigen::VectorXd>(count, v);
}

}  // namespace mwmp
