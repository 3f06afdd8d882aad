#include "mwmp/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

#include "mwmp/errors.hpp"

namespace mwmp {

namespace {

std::string pose_component(int i) {
  static const char* comp[6] = {"x", "y", "z", "roll", "pitch", "yaw"};
  return comp[i];
}

Eigen::MatrixXd inertia_inverse(const ChainCallbacks& cb,
                                const Eigen::VectorXd& x, int chain) {
  const Eigen::MatrixXd I = cb.inertia(x);
  Eigen::LLT<Eigen::MatrixXd> llt(I);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "model: inertia of chain " << chain + 1
       << " is not symmetric positive definite";
    throw ModelError(os.str());
  }
  return llt.solve(Eigen::MatrixXd::Identity(I.rows(), I.cols()));
}

}  // namespace

StateLayout::StateLayout(const std::vector<ChainSpec>& chains) {
  auto add = [&](StateSlice& s, int size, const std::string& prefix,
                 bool pose) {
    s.offset = dim_;
    s.size = size;
    for (int i = 0; i < size; ++i) {
      if (pose) {
        names_.push_back(prefix + "_" + pose_component(i));
        angular_.push_back(i >= 3 ? 1 : 0);
      } else {
        names_.push_back(prefix + "_" + std::to_string(i));
        angular_.push_back(0);
      }
    }
    dim_ += size;
  };

  slices_.resize(chains.size());
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string id = std::to_string(k + 1);
    if (chains[k].world_pose)
      add(slices_[k].world_pose, 6, "wP" + id, true);
    if (chains[k].world_velocity)
      add(slices_[k].world_velocity, 6, "wdP" + id, false);
  }
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string id = std::to_string(k + 1);
    if (chains[k].relative_pose)
      add(slices_[k].relative_pose, 6, "rP" + id, true);
    if (chains[k].relative_velocity)
      add(slices_[k].relative_velocity, 6, "rdP" + id, false);
  }
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const std::string id = std::to_string(k + 1);
    add(slices_[k].q, chains[k].q_dim, "q" + id, false);
    add(slices_[k].dq, chains[k].q_dim, "dq" + id, false);
    add(slices_[k].ddq, chains[k].q_dim, "ddq" + id, false);
  }
}

Eigen::VectorXd StateLayout::difference(const Eigen::VectorXd& a,
                                        const Eigen::VectorXd& b) const {
  Eigen::VectorXd d = a - b;
  for (int i = 0; i < dim_; ++i)
    if (angular_[i]) d(i) = angle_difference(a(i), b(i));
  return d;
}

void StateLayout::wrap_in_place(Eigen::VectorXd& x) const {
  for (int i = 0; i < dim_; ++i)
    if (angular_[i]) x(i) = wrap_angle(x(i));
}

std::vector<int> StateLayout::unmapped_indices() const {
  std::vector<int> covered(dim_, 0);
  auto mark = [&](const StateSlice& s) {
    for (int i = 0; i < s.size; ++i) ++covered[s.offset + i];
  };
  for (const auto& c : slices_) {
    if (c.world_pose.present()) mark(c.world_pose);
    if (c.world_velocity.present()) mark(c.world_velocity);
    if (c.relative_pose.present()) mark(c.relative_pose);
    if (c.relative_velocity.present()) mark(c.relative_velocity);
    mark(c.q);
    mark(c.dq);
    mark(c.ddq);
  }
  std::vector<int> unmapped;
  for (int i = 0; i < dim_; ++i)
    if (covered[i] != 1) unmapped.push_back(i);
  return unmapped;
}

ActuationLayout::ActuationLayout(const std::vector<ChainSpec>& chains,
                                 const Eigen::VectorXd& disturbance_reference,
                                 std::vector<std::string> disturbance_names)
    : disturbance_ref_(disturbance_reference) {
  effort_.resize(chains.size());
  for (std::size_t k = 0; k < chains.size(); ++k) {
    effort_[k].offset = dim_;
    effort_[k].size = chains[k].q_dim;
    for (int i = 0; i < chains[k].q_dim; ++i)
      names_.push_back("e" + std::to_string(k + 1) + "_" + std::to_string(i));
    dim_ += chains[k].q_dim;
  }
  disturbance_.offset = dim_;
  disturbance_.size = static_cast<int>(disturbance_reference.size());
  for (int z = 0; z < disturbance_.size; ++z)
    names_.push_back(z < static_cast<int>(disturbance_names.size())
                         ? disturbance_names[z]
                         : "delta_" + std::to_string(z + 1));
  dim_ += disturbance_.size;
}

PlatformModel::PlatformModel(std::vector<ChainSpec> specs,
                             std::vector<ChainCallbacks> callbacks,
                             Eigen::VectorXd disturbance_reference, double dt,
                             std::vector<std::string> disturbance_names)
    : specs_(std::move(specs)),
      callbacks_(std::move(callbacks)),
      layout_(specs_),
      actuation_(specs_, disturbance_reference, std::move(disturbance_names)),
      dt_(dt) {
  if (specs_.empty()) throw ParameterError("model: no kinematic chains");
  if (specs_.size() != callbacks_.size())
    throw ParameterError("model: one callback set per chain required");
  if (dt_ <= 0.0) throw ParameterError("model: dt must be positive");
  for (const auto& s : specs_)
    if (s.q_dim <= 0) throw ParameterError("model: chain without joints");
}

void PlatformModel::linearize_at(const Eigen::VectorXd& x, Eigen::MatrixXd& A,
                                 Eigen::MatrixXd& B) const {
  const int nx = layout_.dimension();
  const int nu = actuation_.dimension();
  A.setZero(nx, nx);
  B.setZero(nx, nu);

  const int base_dq = layout_.chain(0).dq.offset;
  const int base_qdim = specs_[0].q_dim;

  for (int k = 0; k < chain_count(); ++k) {
    const ChainSlices& sl = layout_.chain(k);
    const ChainCallbacks& cb = callbacks_[k];
    const int qd = specs_[k].q_dim;

    if (sl.world_pose.present()) {
      A.block(sl.world_pose.offset, sl.world_pose.offset, 6, 6)
          .setIdentity();
      if (k == 0) {
        const Eigen::MatrixXd J = cb.world_jacobian(x);
        A.block(sl.world_pose.offset, sl.dq.offset, 6, qd) = J * dt_;
        if (sl.world_velocity.present())
          A.block(sl.world_velocity.offset, sl.dq.offset, 6, qd) = J;
      } else {
        const Eigen::MatrixXd Jw = cb.world_from_relative(x);
        A.block(sl.world_pose.offset, sl.dq.offset, 6, qd) = Jw * dt_;
        if (sl.world_velocity.present())
          A.block(sl.world_velocity.offset, sl.dq.offset, 6, qd) = Jw;
        if (cb.world_from_base) {
          const Eigen::MatrixXd Jb = cb.world_from_base(x);
          A.block(sl.world_pose.offset, base_dq, 6, base_qdim) = Jb * dt_;
          if (sl.world_velocity.present())
            A.block(sl.world_velocity.offset, base_dq, 6, base_qdim) = Jb;
        }
      }
    }

    if (sl.relative_pose.present()) {
      const Eigen::MatrixXd J = cb.relative_jacobian(x);
      A.block(sl.relative_pose.offset, sl.relative_pose.offset, 6, 6)
          .setIdentity();
      A.block(sl.relative_pose.offset, sl.dq.offset, 6, qd) = J * dt_;
      if (sl.relative_velocity.present())
        A.block(sl.relative_velocity.offset, sl.dq.offset, 6, qd) = J;
    }

    A.block(sl.q.offset, sl.q.offset, qd, qd).setIdentity();
    A.block(sl.q.offset, sl.dq.offset, qd, qd) =
        Eigen::MatrixXd::Identity(qd, qd) * dt_;

    const Eigen::MatrixXd Iinv = inertia_inverse(cb, x, k);
    Eigen::MatrixXd IinvV = Eigen::MatrixXd::Zero(qd, qd);
    if (cb.coriolis) IinvV = Iinv * cb.coriolis(x);
    A.block(sl.dq.offset, sl.dq.offset, qd, qd) =
        Eigen::MatrixXd::Identity(qd, qd) - IinvV * dt_;
    A.block(sl.ddq.offset, sl.dq.offset, qd, qd) = -IinvV;

    const StateSlice& e = actuation_.effort(k);
    B.block(sl.dq.offset, e.offset, qd, qd) = Iinv * dt_;
    B.block(sl.ddq.offset, e.offset, qd, qd) = Iinv;
    const StateSlice& dist = actuation_.disturbance();
    for (int z = 0; z < dist.size; ++z) {
      if (z >= static_cast<int>(cb.disturbance.size()) || !cb.disturbance[z])
        continue;
      const Eigen::VectorXd beta = -(Iinv * cb.disturbance[z](x));
      B.block(sl.dq.offset, dist.offset + z, qd, 1) = beta * dt_;
      B.block(sl.ddq.offset, dist.offset + z, qd, 1) = beta;
    }
  }
}

Eigen::VectorXd PlatformModel::step(const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u) const {
  Eigen::MatrixXd A, B;
  linearize_at(x, A, B);
  Eigen::VectorXd next = A * x + B * u;
  layout_.wrap_in_place(next);
  return next;
}

LinearizedSystem assemble_linearization(
    const PlatformModel& model, const std::vector<Eigen::VectorXd>& x_traj,
    double dt) {
  if (x_traj.size() < 2)
    throw ParameterError("assemble_linearization: trajectory too short");
  LinearizedSystem sys;
  sys.dt = dt;
  const int N = static_cast<int>(x_traj.size()) - 1;
  sys.A.resize(N);
  sys.B.resize(N);
  for (int n = 0; n < N; ++n) {
    try {
      model.linearize_at(x_traj[n], sys.A[n], sys.B[n]);
    } catch (const ModelError& e) {
      std::ostringstream os;
      os << e.what() << " (at step " << n << ")";
      throw ModelError(os.str());
    }
    if (!sys.A[n].allFinite() || !sys.B[n].allFinite()) {
      std::ostringstream os;
      os << "assemble_linearization: non-finite entries at step " << n;
      throw ModelError(os.str());
    }
  }
  return sys;
}

std::vector<Eigen::VectorXd> forward_simulate(
    const LinearizedSystem& sys, const Eigen::VectorXd& x0,
    const std::vector<Eigen::VectorXd>& u, const StateLayout* layout) {
  if (static_cast<int>(u.size()) != sys.steps())
    throw ParameterError("forward_simulate: input length != horizon");
  std::vector<Eigen::VectorXd> xs(u.size() + 1);
  xs[0] = x0;
  for (int n = 0; n < sys.steps(); ++n) {
    xs[n + 1] = sys.A[n] * xs[n] + sys.B[n] * u[n];
    if (layout) layout->wrap_in_place(xs[n + 1]);
    if (!xs[n + 1].allFinite()) {
      std::ostringstream os;
      os << "forward_simulate: state diverged at step " << n + 1;
      throw DivergenceError(os.str(), n + 1);
    }
  }
  return xs;
}

std::vector<Eigen::VectorXd> forward_simulate(
    const PlatformModel& model, const Eigen::VectorXd& x0,
    const std::vector<Eigen::VectorXd>& u) {
  std::vector<Eigen::VectorXd> xs(u.size() + 1);
  xs[0] = x0;
  for (std::size_t n = 0; n < u.size(); ++n) {
    xs[n + 1] = model.step(xs[n], u[n]);
    if (!xs[n + 1].allFinite()) {
      std::ostringstream os;
      os << "forward_simulate: state diverged at step " << n + 1;
      throw DivergenceError(os.str(), static_cast<int>(n) + 1);
    }
  }
  return xs;
}

bool ConstraintSet::empty() const {
  for (const auto& v : r)
    if (v.size() > 0) return false;
  for (const auto& v : h)
    if (v.size() > 0) return false;
  return true;
}

ConstraintSet ConstraintSet::none(int steps) {
  ConstraintSet cs;
  cs.C.resize(steps);
  cs.D.resize(steps);
  cs.r.resize(steps);
  cs.G.resize(steps + 1);
  cs.h.resize(steps + 1);
  return cs;
}

namespace {

void append_row(Eigen::MatrixXd& M, const Eigen::RowVectorXd& row) {
  const Eigen::Index r = M.rows();
  if (M.cols() == 0) M.resize(0, row.cols());
  M.conservativeResize(r + 1, Eigen::NoChange);
  M.row(r) = row;
}

void append_value(Eigen::VectorXd& v, double value) {
  const Eigen::Index r = v.size();
  v.conservativeResize(r + 1);
  v(r) = value;
}

}  // namespace

void ConstraintSet::add_input_bounds(int state_dim, int input_dim, int idx,
                                     double lo, double hi) {
  const Eigen::RowVectorXd czero = Eigen::RowVectorXd::Zero(state_dim);
  for (int n = 0; n < horizon(); ++n) {
    Eigen::RowVectorXd dpos = Eigen::RowVectorXd::Zero(input_dim);
    dpos(idx) = 1.0;
    append_row(C[n], czero);
    append_row(D[n], dpos);
    append_value(r[n], -hi);
    append_row(C[n], czero);
    append_row(D[n], -dpos);
    append_value(r[n], lo);
  }
}

void ConstraintSet::add_state_bounds(int state_dim, int idx, double lo,
                                     double hi) {
  for (std::size_t n = 1; n < G.size(); ++n) {
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(state_dim);
    g(idx) = 1.0;
    append_row(G[n], g);
    append_value(h[n], -hi);
    append_row(G[n], -g);
    append_value(h[n], lo);
  }
}

void ConstraintSet::add_state_equality(int state_dim, int step,
                                       const Eigen::RowVectorXd& g,
                                       double level) {
  if (g.cols() != state_dim)
    throw ParameterError("add_state_equality: row dimension mismatch");
  append_row(G[step], g);
  append_value(h[step], level);
  append_row(G[step], -g);
  append_value(h[step], -level);
}

ViolationReport evaluate_constraints(const ConstraintSet& cs,
                                     const std::vector<Eigen::VectorXd>& x,
                                     const std::vector<Eigen::VectorXd>& u,
                                     double tol) {
  ViolationReport report;
  const int N = static_cast<int>(u.size());
  for (int n = 0; n < N && n < cs.horizon(); ++n) {
    const int rows = cs.state_input_rows(n);
    if (rows == 0) continue;
    Eigen::VectorXd resid = cs.r[n];
    if (cs.C[n].size() > 0) resid += cs.C[n] * x[n];
    if (cs.D[n].size() > 0) resid += cs.D[n] * u[n];
    for (int i = 0; i < rows; ++i) {
      report.worst = std::max(report.worst, resid(i));
      if (resid(i) > tol) report.entries.push_back({n, i, false, resid(i)});
    }
  }
  for (int n = 0; n < static_cast<int>(x.size()) &&
                  n < static_cast<int>(cs.h.size());
       ++n) {
    const int rows = cs.pure_state_rows(n);
    if (rows == 0) continue;
    const Eigen::VectorXd resid = cs.G[n] * x[n] + cs.h[n];
    for (int i = 0; i < rows; ++i) {
      report.worst = std::max(report.worst, resid(i));
      if (resid(i) > tol) report.entries.push_back({n, i, true, resid(i)});
    }
  }
  return report;
}

}  // namespace mwmp
