#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mwmp/geometry.hpp"

namespace mwmp {

struct StateSlice {
  int offset = -1;
  int size = 0;
  bool present() const { return offset >= 0; }
};

// Which state groups a kinematic chain contributes. Pose slices are 6 wide
// (position + roll/pitch/yaw); joint slices are q_dim wide.
struct ChainSpec {
  std::string name;
  int q_dim = 0;
  bool world_pose = false;
  bool world_velocity = false;
  bool relative_pose = false;      // pose w.r.t. the previous chain (k >= 2)
  bool relative_velocity = false;
};

struct ChainSlices {
  StateSlice world_pose, world_velocity, relative_pose, relative_velocity;
  StateSlice q, dq, ddq;
};

// Named index ranges of the packed state vector, in declaration order:
// world pose/velocity and relative pose/velocity per chain, then q, dq, ddq
// per chain. Disjoint and exhaustive by construction.
class StateLayout {
 public:
  StateLayout() = default;
  explicit StateLayout(const std::vector<ChainSpec>& chains);

  int dimension() const { return dim_; }
  int chain_count() const { return static_cast<int>(slices_.size()); }
  const ChainSlices& chain(int k) const { return slices_[k]; }
  const std::string& name(int index) const { return names_[index]; }
  const std::vector<std::string>& names() const { return names_; }
  // True for orientation components of pose slices; those are wrapped to
  // (-pi, pi] when stored and differenced on the shortest arc.
  bool angular(int index) const { return angular_[index] != 0; }
  const std::vector<std::uint8_t>& angular_mask() const { return angular_; }

  // Wrapped difference a - b, shortest arc on angular rows.
  Eigen::VectorXd difference(const Eigen::VectorXd& a,
                             const Eigen::VectorXd& b) const;
  void wrap_in_place(Eigen::VectorXd& x) const;

  // Lists indices not covered by any named slice (empty by construction;
  // exercised by the layout audit).
  std::vector<int> unmapped_indices() const;

 private:
  int dim_ = 0;
  std::vector<ChainSlices> slices_;
  std::vector<std::string> names_;
  std::vector<std::uint8_t> angular_;
};

// Actuation vector layout: one effort slice per chain (width q_dim), then the
// disturbance slice with fixed reference values.
class ActuationLayout {
 public:
  ActuationLayout() = default;
  ActuationLayout(const std::vector<ChainSpec>& chains,
                  const Eigen::VectorXd& disturbance_reference,
                  std::vector<std::string> disturbance_names = {});

  int dimension() const { return dim_; }
  const StateSlice& effort(int k) const { return effort_[k]; }
  const StateSlice& disturbance() const { return disturbance_; }
  const Eigen::VectorXd& disturbance_reference() const {
    return disturbance_ref_;
  }
  const std::string& name(int index) const { return names_[index]; }
  // Disturbance channels are not controllable; they stay pinned to their
  // reference by a large input cost.
  bool is_disturbance(int index) const {
    return index >= disturbance_.offset &&
           index < disturbance_.offset + disturbance_.size;
  }

 private:
  int dim_ = 0;
  std::vector<StateSlice> effort_;
  StateSlice disturbance_;
  Eigen::VectorXd disturbance_ref_;
  std::vector<std::string> names_;
};

// Per-chain callbacks, pure functions of the full state vector. The matrices
// follow the block-structured transition model: joint efforts integrate
// through inertia, joint rates map to pose rates through Jacobians.
struct ChainCallbacks {
  using MatrixFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
  using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  MatrixFn inertia;           // q_dim x q_dim, SPD
  MatrixFn coriolis;          // q_dim x q_dim (may be null -> zero)
  MatrixFn world_jacobian;    // 6 x q_dim: dq -> world pose rate (own chain)
  MatrixFn relative_jacobian; // 6 x q_dim: dq -> relative pose rate (k >= 2)
  // 6 x q_dim: dq_k -> world pose rate of chain k through the parent
  // rotation (k >= 2). Defaults to relative_jacobian with position rows
  // rotated by the base yaw when null and world_pose is present.
  MatrixFn world_from_relative;
  // 6 x q1_dim: base joint rates -> world pose rate of this chain (k >= 2);
  // null means no base coupling.
  MatrixFn world_from_base;
  std::vector<VectorFn> disturbance;  // f^k_z per disturbance channel
};

struct LinearizedSystem {
  std::vector<Eigen::MatrixXd> A;  // N entries, state_dim x state_dim
  std::vector<Eigen::MatrixXd> B;  // N entries, state_dim x input_dim
  double dt = 0.0;
  int steps() const { return static_cast<int>(A.size()); }
};

// K-kinematic-chain platform with block-structured state transition. The
// nonlinear step evaluates the blocks at the current state (Taylor-series
// relinearization) and propagates one step, wrapping stored angles.
class PlatformModel {
 public:
  PlatformModel(std::vector<ChainSpec> specs,
                std::vector<ChainCallbacks> callbacks,
                Eigen::VectorXd disturbance_reference, double dt,
                std::vector<std::string> disturbance_names = {});

  const StateLayout& layout() const { return layout_; }
  const ActuationLayout& actuation() const { return actuation_; }
  int state_dim() const { return layout_.dimension(); }
  int input_dim() const { return actuation_.dimension(); }
  double dt() const { return dt_; }
  int chain_count() const { return static_cast<int>(specs_.size()); }
  const ChainSpec& spec(int k) const { return specs_[k]; }

  // Assembles A and B at the given state. Throws ModelError on a singular
  // inertia matrix.
  void linearize_at(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                    Eigen::MatrixXd& B) const;

  Eigen::VectorXd step(const Eigen::VectorXd& x,
                       const Eigen::VectorXd& u) const;

 private:
  std::vector<ChainSpec> specs_;
  std::vector<ChainCallbacks> callbacks_;
  StateLayout layout_;
  ActuationLayout actuation_;
  double dt_;
};

// Relinearizes along a trajectory: A(n), B(n) evaluated at x_traj[n].
LinearizedSystem assemble_linearization(
    const PlatformModel& model, const std::vector<Eigen::VectorXd>& x_traj,
    double dt);

// Linear rollout under x(n+1) = A(n) x(n) + B(n) u(n); angles wrapped when a
// layout is supplied. Throws DivergenceError on non-finite states.
std::vector<Eigen::VectorXd> forward_simulate(
    const LinearizedSystem& sys, const Eigen::VectorXd& x0,
    const std::vector<Eigen::VectorXd>& u, const StateLayout* layout = nullptr);

// Nonlinear rollout with per-step relinearization.
std::vector<Eigen::VectorXd> forward_simulate(
    const PlatformModel& model, const Eigen::VectorXd& x0,
    const std::vector<Eigen::VectorXd>& u);

// Inequality constraints: state-input rows C x + D u + r <= 0 applied at
// n = 0..N-1, pure-state rows G x + h <= 0 applied at n = 0..N. Empty
// matrices mean no rows at that step.
struct ConstraintSet {
  std::vector<Eigen::MatrixXd> C, D;
  std::vector<Eigen::VectorXd> r;
  std::vector<Eigen::MatrixXd> G;
  std::vector<Eigen::VectorXd> h;

  int horizon() const { return static_cast<int>(C.size()); }
  bool empty() const;
  static ConstraintSet none(int steps);

  int state_input_rows(int n) const {
    return n < static_cast<int>(r.size()) ? static_cast<int>(r[n].size()) : 0;
  }
  int pure_state_rows(int n) const {
    return n < static_cast<int>(h.size()) ? static_cast<int>(h[n].size()) : 0;
  }

  // Adds lo <= u(idx) <= hi on every step.
  void add_input_bounds(int state_dim, int input_dim, int idx, double lo,
                        double hi);
  // Adds lo <= x(idx) <= hi on steps n = 1..N (x(0) is given).
  void add_state_bounds(int state_dim, int idx, double lo, double hi);
  // Pins x(idx) at step n via the row pair g . x + h <= 0, -g . x - h <= 0.
  void add_state_equality(int state_dim, int step,
                          const Eigen::RowVectorXd& g, double level);
};

struct Violation {
  int step = 0;
  int row = 0;
  bool pure_state = false;
  double margin = 0.0;  // amount above the tolerance
};

struct ViolationReport {
  std::vector<Violation> entries;
  double worst = 0.0;
  bool feasible() const { return entries.empty(); }
};

ViolationReport evaluate_constraints(const ConstraintSet& cs,
                                     const std::vector<Eigen::VectorXd>& x,
                                     const std::vector<Eigen::VectorXd>& u,
                                     double tol = 1e-6);

}  // namespace mwmp
