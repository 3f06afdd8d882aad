#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <vector>

#include "mwmp/model.hpp"
#include "mwmp/slq.hpp"

namespace mwmp {

// Double-Ackermann rover base. The base is driven through the reduced pair
// (forward speed, yaw rate); wheel_commands expands it to per-wheel driving
// rates and steering angles. Values without a published source are config
// defaults.
struct RoverParams {
  double wheel_diameter = 0.14;      // m
  double mass = 30.0;                // kg
  int wheel_count = 6;
  std::vector<Eigen::Vector2d> wheel_positions = {
      {0.30, 0.27},  {0.30, -0.27},   // front (steerable)
      {0.0, 0.30},   {0.0, -0.30},    // middle
      {-0.30, 0.27}, {-0.30, -0.27},  // rear (steerable)
  };
  std::vector<int> steerable = {0, 1, 4, 5};
  double min_turn_radius = 0.6;      // m
  double nominal_speed = 0.05;       // m/s
  double max_driving_torque = 2.85;  // N m, per wheel
  double max_steering_torque = 2.0;  // N m
  double steering_range = deg2rad(50.0);
  double rolling_resistance = 0.1;
  double body_height = 0.25;         // m, platform frame above ground
  double characteristic_radius = 0.3;  // m, lumps the yaw inertia
  double max_forward_accel = 0.05;   // m/s^2
  double max_yaw_accel = 0.05;       // rad/s^2
};

// 5-DoF manipulator, rotational joints on a Z-Y-Y-Y-Z axis pattern. Link
// offsets run along each local x axis and sum to the extended reach.
struct ArmParams {
  std::array<double, 5> link_lengths = {0.10, 0.20, 0.15, 0.077, 0.0};
  double gripper_offset = 0.14;  // m, appended along the last local x
  std::array<double, 5> joint_range = {deg2rad(45), deg2rad(170), deg2rad(170),
                                       deg2rad(170), deg2rad(170)};
  double joint_speed_limit = deg2rad(0.57);   // rad/s
  double joint_accel_limit = deg2rad(0.30);   // rad/s^2
  double gear_ratio = 83200.0;
  double efficiency = 0.5;
  double rotor_inertia = 7e-11;  // kg m^2; reflected = rotor * gear^2
  double max_joint_torque = 30.0;  // N m at the output
  Eigen::Vector3d mount{0.175, 0.0, 0.12};  // platform frame
  double reflected_inertia() const {
    return rotor_inertia * gear_ratio * gear_ratio;
  }
  double extended_reach() const {
    double r = gripper_offset;
    for (double l : link_lengths) r += l;
    return r;
  }
};

// Maps reduced base rates (v_f, omega) to world pose rates at the given base
// pose: dx = v_f cos(yaw), dy = v_f sin(yaw), dyaw = omega, other rows zero.
Eigen::MatrixXd base_jacobian(const Vector6d& pose, const RoverParams& params);

struct WheelCommands {
  Eigen::VectorXd driving_rate;   // rad/s, one per wheel
  Eigen::VectorXd steering_angle; // rad, one per steerable wheel
};

// Double-Ackermann expansion from the shared turn center. Spot turns are
// allowed at v_f = 0; otherwise the commanded radius must respect the
// minimum turn radius. Throws InfeasibleCommandError below it.
WheelCommands wheel_commands(double v_f, double omega,
                             const RoverParams& params);

// End-effector pose in the platform frame (position + ZYX Euler angles).
Vector6d arm_fk(const Eigen::VectorXd& q, const ArmParams& params);

// Euler-rate Jacobian of arm_fk (6 x 5).
Eigen::MatrixXd arm_jacobian(const Eigen::VectorXd& q,
                             const ArmParams& params);

// Per-wheel rolling-resistance coupling of gravity into the drive train:
// rho * (d_w / 2) * (m / wheel_count).
double rolling_resistance(const RoverParams& params);

// Quadratic cost configuration for the rover problem.
struct ExoterCosts {
  double ee_goal_pose = 1e11;
  double platform_goal_speed = 1e6;
  double ee_goal_speed = 1e6;
  double platform_pose = 20.0;
  double driving_speed = 100.0;
  double driving_accel = 1e4;
  double arm_speed = 3e5;
  double arm_accel = 3e5;
  double input_driving = 1e5;
  double input_steering = 8e4;
  double input_arm = 1e11;
  double input_gravity = 1e15;
};

// Two-chain mobile manipulator model with its constraint rows and cost
// tables. State: [wP1 wdP1 wP2 rP2 rdP2 q1 dq1 ddq1 q2 dq2 ddq2], input:
// [tau_d tau_s tau_m(5) g].
class ExoterModel {
 public:
  ExoterModel(const RoverParams& rover, const ArmParams& arm, double dt,
              const ExoterCosts& costs = {});

  const PlatformModel& model() const { return *model_; }
  const StateLayout& layout() const { return model_->layout(); }
  const RoverParams& rover() const { return rover_; }
  const ArmParams& arm() const { return arm_; }
  const ExoterCosts& costs() const { return costs_; }
  double dt() const { return dt_; }

  // Slice shortcuts into the packed state.
  const ChainSlices& base() const { return layout().chain(0); }
  const ChainSlices& manipulator() const { return layout().chain(1); }
  int gravity_input() const;

  // Torque bounds as state-input rows, joint envelopes as pure-state rows.
  ConstraintSet make_constraints(int steps) const;

  Eigen::VectorXd q_diagonal(bool track_platform_pose) const;
  Eigen::VectorXd q_terminal_diagonal() const;
  Eigen::VectorXd r_diagonal() const;
  Eigen::VectorXd input_reference() const;  // zeros, gravity at 9.81

  // Packed state from a planar base pose (x, y, yaw) and arm configuration;
  // derived entries (relative and world end-effector pose) are filled
  // consistently, velocities start at zero.
  Eigen::VectorXd initial_state(const Eigen::Vector3d& base_pose,
                                const Eigen::VectorXd& arm_config) const;

  Vector6d base_pose(const Eigen::VectorXd& x) const;
  Vector6d ee_world_pose(const Eigen::VectorXd& x) const;
  GoalSpec ee_goal(const Vector6d& target) const;

  Eigen::VectorXd default_arm_config() const;

 private:
  RoverParams rover_;
  ArmParams arm_;
  ExoterCosts costs_;
  double dt_;
  std::shared_ptr<PlatformModel> model_;
};

}  // namespace mwmp
