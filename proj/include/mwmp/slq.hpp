#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mwmp/costmap.hpp"
#include "mwmp/model.hpp"

namespace mwmp {

// Time-indexed plan over a fixed horizon: states x(0..N), inputs u(0..N-1).
struct MotionPlan {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> u;
  double dt = 0.0;
  int steps() const { return static_cast<int>(u.size()); }
};

// Terminal pose goal checked against selected state rows.
struct GoalSpec {
  std::array<int, 3> position_rows{{-1, -1, -1}};
  std::array<int, 3> orientation_rows{{-1, -1, -1}};
  Eigen::Vector3d position{0, 0, 0};
  Eigen::Vector3d orientation{0, 0, 0};  // roll, pitch, yaw
};

struct SolverConfig {
  std::vector<Eigen::MatrixXd> Q;  // N+1 entries, Q[N] terminal
  std::vector<Eigen::MatrixXd> R;  // N entries, SPD
  std::vector<Eigen::VectorXd> x_ref;  // N+1 entries
  std::vector<Eigen::VectorXd> u_ref;  // N entries

  double repulsive_weight = 0.0;
  int base_x_row = -1;  // rows carrying the platform position, used both for
  int base_y_row = -1;  // the repulsive term and the safety check

  int max_iterations = 100;
  double convergence_ratio = 0.01;  // |alpha*ubar| <= ratio * |u|
  double goal_position_tol = 0.01;
  double goal_orientation_tol = 10.0 * kPi / 180.0;
  int line_search_depth = 10;  // candidates 2^0 .. 2^-depth
  double constraint_tol = 1e-6;

  std::optional<GoalSpec> goal;

  // Working-set management.
  int max_constraint_instances = 160;
  int max_inner_refinements = 25;

  std::ostream* diagnostics = nullptr;  // per-iteration CSV when set
};

// Model hooks consumed by the solver: a rollout of the (possibly nonlinear)
// system and relinearization about a trajectory.
struct SlqProblem {
  int state_dim = 0;
  int input_dim = 0;
  double dt = 0.0;
  std::function<std::vector<Eigen::VectorXd>(
      const Eigen::VectorXd&, const std::vector<Eigen::VectorXd>&)>
      rollout;
  std::function<LinearizedSystem(const std::vector<Eigen::VectorXd>&)>
      linearize;
  const StateLayout* layout = nullptr;  // enables shortest-arc differences
};

SlqProblem make_problem(const LinearizedSystem& sys,
                        const StateLayout* layout = nullptr);
SlqProblem make_problem(const PlatformModel& model);

// Per-step quantities of the constrained LQ subproblem. Active state-input
// rows are folded into the hatted matrices; active pure-state rows are the
// Lagrangian instances handled after the backward pass.
struct Predefinitions {
  std::vector<std::vector<int>> active_si;  // active state-input row ids
  std::vector<Eigen::MatrixXd> Cc, Dc, Dhat;
  std::vector<Eigen::VectorXd> rhat;
  std::vector<Eigen::MatrixXd> Ahat, Rhat, Qhat;
  std::vector<Eigen::VectorXd> xbar0, ubar0, xhat0, uhat0;
  std::vector<Eigen::MatrixXd> Rinv, BRinv;
};

struct BackwardPassState {
  std::vector<Eigen::MatrixXd> M;  // N entries
  std::vector<Eigen::MatrixXd> P;  // N+1 entries, symmetric
  std::vector<Eigen::VectorXd> s;  // N+1 entries
  Predefinitions pre;
};

// One pure-state constraint handled at its activation step; level is the
// constraint residual G x + h at the current iterate (driven to zero).
struct StateConstraintInstance {
  int step = 0;
  int row = 0;
  double level = 0.0;
};

struct ConstraintCorrection {
  Eigen::VectorXd nu;            // multipliers, one per instance
  std::vector<int> dropped;      // instances removed on a singular Gram matrix
};

struct StepPlan {
  std::vector<Eigen::VectorXd> xbar;  // N+1
  std::vector<Eigen::VectorXd> ubar;  // N
  std::vector<Eigen::VectorXd> lambda;  // N+1 (lambda[0] unused)
  std::vector<Eigen::VectorXd> mu;    // N entries, active-row multipliers
  double alpha = 1.0;
};

// Reference-tracking terms and hatted predefinitions for the current iterate.
Predefinitions compute_predefinitions(
    const LinearizedSystem& sys, const SolverConfig& config,
    const SlqProblem& problem, const std::vector<Eigen::VectorXd>& xs,
    const std::vector<Eigen::VectorXd>& us, const ConstraintSet* constraints,
    const std::vector<std::vector<int>>& active_si);

// Riccati sweep: M(n) = (I + Rhat(n) P(n+1))^-1,
// P(n) = Qhat(n) + Ahat' P(n+1) M(n) Ahat,
// s(n) = Ahat' M' s(n+1) + Ahat' P(n+1) M uhat0(n) + xhat0(n) + repulsive(n).
BackwardPassState backward_pass(
    const LinearizedSystem& sys, const SolverConfig& config,
    Predefinitions pre, const std::vector<Eigen::VectorXd>& repulsive);

// Propagates the constraint rows backwards through the closed loop,
// accumulates the Gram matrix, solves for the multipliers, and folds them
// into s so the forward pass meets each instance with equality. Dependent
// rows are dropped on a singular Gram matrix.
ConstraintCorrection state_constraint_correction(
    const std::vector<StateConstraintInstance>& instances,
    const ConstraintSet& constraints, const LinearizedSystem& sys,
    BackwardPassState& bps);

StepPlan forward_pass(const LinearizedSystem& sys,
                      const BackwardPassState& bps);

// Total cost to go: 0.5 * sum of quadratic tracking terms plus the terminal
// term, with shortest-arc differences on angular rows.
double total_cost(const SolverConfig& config, const SlqProblem& problem,
                  const std::vector<Eigen::VectorXd>& xs,
                  const std::vector<Eigen::VectorXd>& us);

enum class AlphaMode { unconstrained, constrained };

struct AlphaResult {
  double alpha = 1.0;
  bool stalled = false;
  bool cost_branch = true;
};

// Cost branch: argmin of J over {1, 0.5, ..., 2^-depth} on the linear
// prediction. When the full step introduces a new violation, the largest
// candidate that does not worsen any violation is taken instead.
AlphaResult select_alpha(const SolverConfig& config, const SlqProblem& problem,
                         const std::vector<Eigen::VectorXd>& xs,
                         const std::vector<Eigen::VectorXd>& us,
                         const StepPlan& step, const ConstraintSet* constraints,
                         AlphaMode mode);

// Converged when the applied step is small relative to the actuation, the
// terminal goal (when set) is met, the plan keeps off sentinel-cost cells
// (when a map is given), and in constrained mode the iterate is compliant.
bool check_termination(const SolverConfig& config, const SlqProblem& problem,
                       const std::vector<Eigen::VectorXd>& xs,
                       const std::vector<Eigen::VectorXd>& us,
                       const std::vector<Eigen::VectorXd>& ubar, double alpha,
                       const ConstraintSet* constraints,
                       const CostMap* costmap);

struct IterationDiagnostics {
  int iteration = 0;
  double cost = 0.0;
  double step_norm = 0.0;
  double alpha = 1.0;
  int active_state_input = 0;
  int active_pure_state = 0;
  int dropped_rows = 0;
};

struct SolveResult {
  MotionPlan plan;
  int iterations = 0;
  bool converged = false;
  double cost = 0.0;
  ViolationReport violations;  // empty when no constraints were given
  bool stalled = false;
  std::vector<IterationDiagnostics> diagnostics;
};

// Sequential LQ solve. Unconstrained mode when constraints is null or empty;
// otherwise tight-or-violated rows seed a working set that is refined within
// the iteration (trial-violated rows added, negative-multiplier rows
// released). Throws SolverError on numerical failure.
SolveResult solve(const SlqProblem& problem, const Eigen::VectorXd& x0,
                  const std::vector<Eigen::VectorXd>& u_init,
                  const SolverConfig& config,
                  const ConstraintSet* constraints = nullptr,
                  const CostMap* costmap = nullptr);

// Convenience builders for the cost schedule.
std::vector<Eigen::MatrixXd> constant_sequence(const Eigen::MatrixXd& M,
                                               int count);
std::vector<Eigen::VectorXd> constant_references(const Eigen::VectorXd& v,
                                                 int count);

}  // namespace mwmp
