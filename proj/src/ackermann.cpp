#include "mwmp/ackermann.hpp"

#include <algorithm>
#include <cmath>

#include "mwmp/errors.hpp"
#include "mwmp/geometry.hpp"

namespace mwmp {

Eigen::MatrixXd base_jacobian(const Vector6d& pose,
                              const RoverParams& params) {
  (void)params;
  const double psi = pose(5);
  if (!std::isfinite(psi))
    throw ParameterError("base_jacobian: non-finite yaw");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, 2);
  J(0, 0) = std::cos(psi);
  J(1, 0) = std::sin(psi);
  J(5, 1) = 1.0;
  return J;
}

WheelCommands wheel_commands(double v_f, double omega,
                             const RoverParams& params) {
  const double r_wheel = 0.5 * params.wheel_diameter;
  const int n_wheels = static_cast<int>(params.wheel_positions.size());
  WheelCommands cmd;
  cmd.driving_rate.resize(n_wheels);
  cmd.steering_angle =
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.steerable.size()));

  const bool turning = std::abs(omega) > 1e-12;
  const bool moving = std::abs(v_f) > 1e-12;
  if (!turning) {
    cmd.driving_rate.setConstant(v_f / r_wheel);
    return cmd;
  }
  const double radius = moving ? v_f / omega : 0.0;
  if (moving && std::abs(radius) < params.min_turn_radius - 1e-9)
    throw InfeasibleCommandError(
        "wheel_commands: commanded turn radius below the minimum");

  // Common turn center at (0, radius) in the body frame; steering angles are
  // tangent to the circles around it, folded into (-pi/2, pi/2] so the wheel
  // may roll backwards instead of steering past a quarter turn.
  auto steering_of = [&](const Eigen::Vector2d& p) {
    double delta = std::atan2(p.x(), radius - p.y());
    if (delta > 0.5 * kPi) delta -= kPi;
    if (delta <= -0.5 * kPi) delta += kPi;
    return delta;
  };

  for (int i = 0; i < n_wheels; ++i) {
    const Eigen::Vector2d& p = params.wheel_positions[i];
    double delta = 0.0;
    const auto it =
        std::find(params.steerable.begin(), params.steerable.end(), i);
    if (it != params.steerable.end()) {
      delta = steering_of(p);
      cmd.steering_angle(it - params.steerable.begin()) = delta;
    }
    const Eigen::Vector2d v(v_f - omega * p.y(), omega * p.x());
    const Eigen::Vector2d dir(std::cos(delta), std::sin(delta));
    cmd.driving_rate(i) = v.dot(dir) / r_wheel;
  }
  return cmd;
}

namespace {

Eigen::Matrix4d joint_transform(int axis_code, double angle, double link_x) {
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  Eigen::Matrix3d R;
  if (axis_code == 2)
    R = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  else
    R = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitY()).toRotationMatrix();
  T.topLeftCorner<3, 3>() = R;
  T.topRightCorner<3, 1>() = R * Eigen::Vector3d(link_x, 0.0, 0.0);
  return T;
}

constexpr int kArmAxes[5] = {2, 1, 1, 1, 2};  // Z-Y-Y-Y-Z

}  // namespace

Vector6d arm_fk(const Eigen::VectorXd& q, const ArmParams& params) {
  if (q.size() != 5) throw ParameterError("arm_fk: expected 5 joint angles");
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topRightCorner<3, 1>() = params.mount;
  for (int i = 0; i < 5; ++i)
    T = T * joint_transform(kArmAxes[i], q(i), params.link_lengths[i]);
  Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
  G(0, 3) = params.gripper_offset;
  T = T * G;
  Vector6d pose;
  pose.head<3>() = T.topRightCorner<3, 1>();
  pose.tail<3>() = euler_zyx(T.topLeftCorner<3, 3>());
  return pose;
}

Eigen::MatrixXd arm_jacobian(const Eigen::VectorXd& q,
                             const ArmParams& params) {
  if (q.size() != 5)
    throw ParameterError("arm_jacobian: expected 5 joint angles");
  // Joint axes and origins in the platform frame.
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topRightCorner<3, 1>() = params.mount;
  std::array<Eigen::Vector3d, 5> axis, origin;
  for (int i = 0; i < 5; ++i) {
    origin[i] = T.topRightCorner<3, 1>();
    axis[i] = T.topLeftCorner<3, 3>() *
              (kArmAxes[i] == 2 ? Eigen::Vector3d::UnitZ()
                                : Eigen::Vector3d::UnitY());
    T = T * joint_transform(kArmAxes[i], q(i), params.link_lengths[i]);
  }
  Eigen::Matrix4d G = Eigen::Matrix4d::Identity();
  G(0, 3) = params.gripper_offset;
  T = T * G;
  const Eigen::Vector3d p_ee = T.topRightCorner<3, 1>();
  const Eigen::Vector3d rpy = euler_zyx(T.topLeftCorner<3, 3>());

  Eigen::MatrixXd J(6, 5);
  for (int i = 0; i < 5; ++i) {
    J.block<3, 1>(0, i) = axis[i].cross(p_ee - origin[i]);
    J.block<3, 1>(3, i) = axis[i];
  }
  // Angular-velocity rows to ZYX Euler rates.
  const Eigen::Matrix3d E = euler_rate_to_omega(rpy(0), rpy(1), rpy(2));
  J.bottomRows<3>() = (E.inverse() * J.bottomRows<3>()).eval();
  return J;
}

double rolling_resistance(const RoverParams& params) {
  if (params.rolling_resistance < 0.0)
    throw ParameterError("rolling_resistance: negative coefficient");
  if (params.wheel_diameter <= 0.0 || params.mass <= 0.0 ||
      params.wheel_count <= 0)
    throw ParameterError("rolling_resistance: non-positive parameter");
  return params.rolling_resistance * 0.5 * params.wheel_diameter *
         params.mass / params.wheel_count;
}

namespace {

double steering_moment_arm(const RoverParams& p) {
  double acc = 0.0;
  for (int i : p.steerable) acc += p.wheel_positions[i].norm();
  return acc / static_cast<double>(p.steerable.size());
}

}  // namespace

ExoterModel::ExoterModel(const RoverParams& rover, const ArmParams& arm,
                         double dt, const ExoterCosts& costs)
    : rover_(rover), arm_(arm), costs_(costs), dt_(dt) {
  if (rover_.wheel_positions.size() !=
      static_cast<std::size_t>(rover_.wheel_count))
    throw ParameterError("exoter: wheel position list does not match count");
  if (rover_.nominal_speed <= 0.0 || rover_.min_turn_radius <= 0.0)
    throw ParameterError("exoter: non-positive speed or turn radius");

  std::vector<ChainSpec> specs(2);
  specs[0] = {"base", 2, true, true, false, false};
  specs[1] = {"manipulator", 5, true, false, true, true};
  const StateLayout layout(specs);

  const int yaw_row = layout.chain(0).world_pose.offset + 5;
  const int rel_pos = layout.chain(1).relative_pose.offset;
  const int arm_q = layout.chain(1).q.offset;

  // Lumped inertias in per-motor torque units, so tau / I integrates the
  // reduced rates (v_f, omega) directly.
  const double r_wheel = 0.5 * rover_.wheel_diameter;
  const double i_fwd = rover_.mass * r_wheel / rover_.wheel_count;
  const double yaw_inertia = rover_.mass * rover_.characteristic_radius *
                             rover_.characteristic_radius;
  const double i_yaw = yaw_inertia * r_wheel /
                       (static_cast<double>(rover_.steerable.size()) *
                        steering_moment_arm(rover_));

  ChainCallbacks base_cb;
  base_cb.inertia = [i_fwd, i_yaw](const Eigen::VectorXd&) {
    return Eigen::Vector2d(i_fwd, i_yaw).asDiagonal().toDenseMatrix();
  };
  const RoverParams rp = rover_;
  base_cb.world_jacobian = [rp, yaw_row](const Eigen::VectorXd& x) {
    Vector6d pose = Vector6d::Zero();
    pose(5) = x(yaw_row);
    return base_jacobian(pose, rp);
  };
  const double f_roll = rolling_resistance(rover_);
  base_cb.disturbance.push_back([f_roll](const Eigen::VectorXd&) {
    return Eigen::Vector2d(f_roll, 0.0);
  });

  ChainCallbacks arm_cb;
  const double i_arm = arm_.reflected_inertia();
  arm_cb.inertia = [i_arm](const Eigen::VectorXd&) {
    return (i_arm * Eigen::Matrix<double, 5, 5>::Identity()).eval();
  };
  const ArmParams ap = arm_;
  arm_cb.relative_jacobian = [ap, arm_q](const Eigen::VectorXd& x) {
    return arm_jacobian(x.segment<5>(arm_q), ap);
  };
  arm_cb.world_from_relative = [ap, arm_q, yaw_row](const Eigen::VectorXd& x) {
    Eigen::MatrixXd J = arm_jacobian(x.segment<5>(arm_q), ap);
    const Eigen::Matrix3d Rz =
        Eigen::AngleAxisd(x(yaw_row), Eigen::Vector3d::UnitZ())
            .toRotationMatrix();
    // World position rows rotate with the base; with a planar base the ZYX
    // yaw of the end effector is base yaw plus relative yaw, so the Euler
    // rows carry over unchanged.
    J.topRows<3>() = (Rz * J.topRows<3>()).eval();
    return J;
  };
  arm_cb.world_from_base = [yaw_row, rel_pos](const Eigen::VectorXd& x) {
    const double psi = x(yaw_row);
    const Eigen::Matrix3d Rz =
        Eigen::AngleAxisd(psi, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Vector3d lever = Rz * x.segment<3>(rel_pos);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, 2);
    J(0, 0) = std::cos(psi);
    J(1, 0) = std::sin(psi);
    J(0, 1) = -lever.y();
    J(1, 1) = lever.x();
    J(5, 1) = 1.0;
    return J;
  };
  // Gravity does not reach the arm joints through the huge gear reduction.

  Eigen::VectorXd gravity_ref(1);
  gravity_ref << 9.81;
  model_ = std::make_shared<PlatformModel>(
      specs, std::vector<ChainCallbacks>{base_cb, arm_cb}, gravity_ref, dt_,
      std::vector<std::string>{"g"});
}

int ExoterModel::gravity_input() const {
  return model_->actuation().disturbance().offset;
}

ConstraintSet ExoterModel::make_constraints(int steps) const {
  const int nx = model_->state_dim();
  const int nu = model_->input_dim();
  ConstraintSet cs = ConstraintSet::none(steps);

  const int tau_d = model_->actuation().effort(0).offset;
  const int tau_s = tau_d + 1;
  const int tau_m = model_->actuation().effort(1).offset;
  cs.add_input_bounds(nx, nu, tau_d, -rover_.max_driving_torque,
                      rover_.max_driving_torque);
  cs.add_input_bounds(nx, nu, tau_s, -rover_.max_steering_torque,
                      rover_.max_steering_torque);
  for (int j = 0; j < 5; ++j)
    cs.add_input_bounds(nx, nu, tau_m + j, -arm_.max_joint_torque,
                        arm_.max_joint_torque);

  const ChainSlices& b = base();
  const ChainSlices& m = manipulator();
  const double omega_max = rover_.nominal_speed / rover_.min_turn_radius;
  cs.add_state_bounds(nx, b.dq.offset, -rover_.nominal_speed,
                      rover_.nominal_speed);
  cs.add_state_bounds(nx, b.dq.offset + 1, -omega_max, omega_max);
  cs.add_state_bounds(nx, b.ddq.offset, -rover_.max_forward_accel,
                      rover_.max_forward_accel);
  cs.add_state_bounds(nx, b.ddq.offset + 1, -rover_.max_yaw_accel,
                      rover_.max_yaw_accel);
  for (int j = 0; j < 5; ++j) {
    cs.add_state_bounds(nx, m.q.offset + j, -arm_.joint_range[j],
                        arm_.joint_range[j]);
    cs.add_state_bounds(nx, m.dq.offset + j, -arm_.joint_speed_limit,
                        arm_.joint_speed_limit);
    cs.add_state_bounds(nx, m.ddq.offset + j, -arm_.joint_accel_limit,
                        arm_.joint_accel_limit);
  }
  return cs;
}

Eigen::VectorXd ExoterModel::q_diagonal(bool track_platform_pose) const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(model_->state_dim());
  const ChainSlices& b = base();
  const ChainSlices& m = manipulator();
  if (track_platform_pose)
    q.segment(b.world_pose.offset, 6).setConstant(costs_.platform_pose);
  q(b.dq.offset) = costs_.driving_speed;
  q(b.ddq.offset) = costs_.driving_accel;
  q.segment(m.dq.offset, 5).setConstant(costs_.arm_speed);
  q.segment(m.ddq.offset, 5).setConstant(costs_.arm_accel);
  return q;
}

Eigen::VectorXd ExoterModel::q_terminal_diagonal() const {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(model_->state_dim());
  const ChainSlices& b = base();
  const ChainSlices& m = manipulator();
  q.segment(m.world_pose.offset, 6).setConstant(costs_.ee_goal_pose);
  q.segment(b.world_velocity.offset, 6)
      .setConstant(costs_.platform_goal_speed);
  q.segment(m.relative_velocity.offset, 6).setConstant(costs_.ee_goal_speed);
  return q;
}

Eigen::VectorXd ExoterModel::r_diagonal() const {
  Eigen::VectorXd r(model_->input_dim());
  const int tau_d = model_->actuation().effort(0).offset;
  const int tau_m = model_->actuation().effort(1).offset;
  r(tau_d) = costs_.input_driving;
  r(tau_d + 1) = costs_.input_steering;
  r.segment(tau_m, 5).setConstant(costs_.input_arm);
  r(gravity_input()) = costs_.input_gravity;
  return r;
}

Eigen::VectorXd ExoterModel::input_reference() const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(model_->input_dim());
  u(gravity_input()) = 9.81;
  return u;
}

Eigen::VectorXd ExoterModel::initial_state(
    const Eigen::Vector3d& base_pose,
    const Eigen::VectorXd& arm_config) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model_->state_dim());
  const ChainSlices& b = base();
  const ChainSlices& m = manipulator();
  Vector6d wp1 = Vector6d::Zero();
  wp1(0) = base_pose(0);
  wp1(1) = base_pose(1);
  wp1(2) = rover_.body_height;
  wp1(5) = wrap_angle(base_pose(2));
  x.segment(b.world_pose.offset, 6) = wp1;
  const Vector6d rel = arm_fk(arm_config, arm_);
  x.segment(m.relative_pose.offset, 6) = rel;
  x.segment(m.world_pose.offset, 6) = compose_planar(wp1, rel);
  x.segment(m.q.offset, 5) = arm_config;
  return x;
}

Vector6d ExoterModel::base_pose(const Eigen::VectorXd& x) const {
  return x.segment(base().world_pose.offset, 6);
}

Vector6d ExoterModel::ee_world_pose(const Eigen::VectorXd& x) const {
  return x.segment(manipulator().world_pose.offset, 6);
}

GoalSpec ExoterModel::ee_goal(const Vector6d& target) const {
  GoalSpec g;
  const int off = manipulator().world_pose.offset;
  g.position_rows = {off, off + 1, off + 2};
  g.orientation_rows = {off + 3, off + 4, off + 5};
  g.position = target.head<3>();
  g.orientation = target.tail<3>();
  return g;
}

Eigen::VectorXd ExoterModel::default_arm_config() const {
  Eigen::VectorXd q(5);
  q << 0.0, -0.6, 1.4, 0.8, 0.0;
  return q;
}

}  // namespace mwmp
