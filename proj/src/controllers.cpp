#include "wbfc/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace wbfc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd stack_jacobians(const KinematicTree& model, const GeneralizedState& state,
                                const ContactSet& contacts, const std::vector<int>& which) {
  Eigen::MatrixXd J(3 * which.size(), model.nv());
  for (size_t k = 0; k < which.size(); ++k) {
    const FrameKinematics fk = frame_kinematics(model, state, contacts.contacts[which[k]].frame);
    J.middleRows(3 * k, 3) = fk.jacobian.topRows(3);
  }
  return J;
}

std::vector<int> all_indices(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

AffineForceMap affine_force_map(const ProjectionData& proj, const Eigen::VectorXd& h,
                                const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_m_applied,
                                const Eigen::MatrixXd& B_decision, const Eigen::MatrixXd& Jx,
                                const Eigen::VectorXd& Fx, const Eigen::MatrixXd& Jc_subset) {
  const int n = static_cast<int>(proj.P.rows());
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd IP = I - proj.P;
  const Eigen::MatrixXd JcT_pinv = pinv(Jc_subset.transpose(), proj.pinv_tolerance);

  AffineForceMap map;
  map.S = -JcT_pinv * IP * B_decision;
  map.c = JcT_pinv * (IP * (proj.Mbar * (tau_m_applied - proj.P * h + proj.Pdot * qd) + h) +
                      IP * (proj.Mbar * proj.P - I) * Jx.transpose() * Fx);
  return map;
}

double max_cone_violation(const ConePyramid& cones, const Eigen::VectorXd& lambda) {
  if (cones.C.rows() == 0) return 0.0;
  double worst = 0.0;
  const Eigen::VectorXd v = cones.C * lambda;
  for (int i = 0; i < v.size(); ++i) {
    if (cones.lower(i) > -kInfinityBound) worst = std::max(worst, cones.lower(i) - v(i));
    if (cones.upper(i) < kInfinityBound) worst = std::max(worst, v(i) - cones.upper(i));
  }
  return worst;
}

}  // namespace

int ContactSet::n_motion() const {
  int n = 0;
  for (const auto& c : contacts) n += c.role == ContactRole::Motion;
  return n;
}

int ContactSet::n_force() const { return size() - n_motion(); }

std::vector<int> ContactSet::motion_indices() const {
  std::vector<int> v;
  for (int i = 0; i < size(); ++i)
    if (contacts[i].role == ContactRole::Motion) v.push_back(i);
  return v;
}

std::vector<int> ContactSet::force_indices() const {
  std::vector<int> v;
  for (int i = 0; i < size(); ++i)
    if (contacts[i].role == ContactRole::Force) v.push_back(i);
  return v;
}

void ContactSet::validate() const {
  for (const auto& c : contacts) {
    Eigen::Matrix3d T;
    T.col(0) = c.n_x;
    T.col(1) = c.n_y;
    T.col(2) = c.n_z;
    if ((T.transpose() * T - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw std::invalid_argument("ContactSet: surface triad of '" + c.frame + "' not orthonormal");
    if (c.mu < 0.0) throw std::invalid_argument("ContactSet: negative friction coefficient at '" + c.frame + "'");
  }
}

SelectionMatrices make_selection_matrices(const KinematicTree& model, const ContactSet& contacts) {
  const int nj = model.n_joints();
  const int nv = model.nv();
  SelectionMatrices sel;
  sel.B = Eigen::MatrixXd::Zero(nv, nj);
  sel.B.bottomRows(nj).setIdentity();

  std::vector<char> is_force(nj, 0);
  for (const auto& c : contacts.contacts) {
    if (c.role != ContactRole::Force) continue;
    for (int j : model.joints_on_path(c.frame)) is_force[j] = 1;
  }
  sel.Bm = sel.B;
  sel.Bf = sel.B;
  for (int j = 0; j < nj; ++j) {
    if (is_force[j]) {
      sel.Bm.col(j).setZero();
      sel.force_joints.push_back(j);
    } else {
      sel.Bf.col(j).setZero();
    }
  }
  return sel;
}

void friction_pyramid_rows(const Contact& contact, Eigen::Matrix<double, 5, 3>& C,
                           Eigen::Matrix<double, 5, 1>& lower, Eigen::Matrix<double, 5, 1>& upper) {
  ContactSet single;
  single.contacts.push_back(contact);
  single.validate();
  C.row(0) = (contact.n_x - contact.mu * contact.n_z).transpose();
  C.row(1) = (contact.n_y - contact.mu * contact.n_z).transpose();
  C.row(2) = (contact.n_x + contact.mu * contact.n_z).transpose();
  C.row(3) = (contact.n_y + contact.mu * contact.n_z).transpose();
  C.row(4) = contact.n_z.transpose();
  lower << -kInf, -kInf, 0.0, 0.0, 0.0;
  upper << 0.0, 0.0, kInf, kInf, kInf;
}

ConePyramid stack_cones(const ContactSet& contacts, ConeVariant variant) {
  ConePyramid out;
  switch (variant) {
    case ConeVariant::Full: out.contact_indices = all_indices(contacts.size()); break;
    case ConeVariant::Motion: out.contact_indices = contacts.motion_indices(); break;
    case ConeVariant::Force: out.contact_indices = contacts.force_indices(); break;
  }
  const int k = static_cast<int>(out.contact_indices.size());
  if (k == 0) throw std::invalid_argument("stack_cones: empty contact selection");
  out.C = Eigen::MatrixXd::Zero(5 * k, 3 * k);
  out.lower.resize(5 * k);
  out.upper.resize(5 * k);
  for (int i = 0; i < k; ++i) {
    Eigen::Matrix<double, 5, 3> C;
    Eigen::Matrix<double, 5, 1> lo, hi;
    friction_pyramid_rows(contacts.contacts[out.contact_indices[i]], C, lo, hi);
    out.C.block<5, 3>(5 * i, 3 * i) = C;
    out.lower.segment<5>(5 * i) = lo;
    out.upper.segment<5>(5 * i) = hi;
  }
  return out;
}

AffineForceMap lambda_m_affine(const ProjectionData& proj, const Eigen::VectorXd& h,
                               const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_m_applied,
                               const Eigen::MatrixXd& B_decision, const Eigen::MatrixXd& Jx,
                               const Eigen::VectorXd& Fx, const Eigen::MatrixXd& Jcm) {
  return affine_force_map(proj, h, qd, tau_m_applied, B_decision, Jx, Fx, Jcm);
}

AffineForceMap lambda_f_affine(const ProjectionData& proj, const Eigen::VectorXd& h,
                               const Eigen::VectorXd& qd, const Eigen::MatrixXd& B_decision,
                               const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx,
                               const Eigen::MatrixXd& Jcf) {
  return affine_force_map(proj, h, qd, Eigen::VectorXd::Zero(proj.P.rows()), B_decision, Jx, Fx, Jcf);
}

QPProblem assemble_qp1(const Eigen::VectorXd& tau_d, const Eigen::MatrixXd& P,
                       const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& B,
                       const Eigen::VectorXd& tau_min, const Eigen::VectorXd& tau_max, double epsilon) {
  QPProblem qp;
  qp.A = Bm;
  qp.b = tau_d;
  qp.W = P;
  qp.G = B.transpose() * P * Bm;
  qp.lower = tau_min;
  qp.upper = tau_max;
  qp.epsilon = epsilon;
  return qp;
}

QPProblem assemble_qp2(const Eigen::VectorXd& tau_d, const Eigen::VectorXd& tau_I,
                       const Eigen::MatrixXd& P, const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& Bf,
                       const Eigen::MatrixXd& B, const AffineForceMap& map_m, const AffineForceMap& map_f,
                       const ConePyramid& cones_m, const ConePyramid& cones_f,
                       const Eigen::VectorXd& tau_min, const Eigen::VectorXd& tau_max, double epsilon) {
  const int n = static_cast<int>(P.rows());
  const int nj = static_cast<int>(Bf.cols());
  const Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(n, n) - P;

  QPProblem qp;
  qp.A = Bf;
  qp.b = tau_d - P * Bm * tau_I;
  qp.W = IP;
  qp.epsilon = epsilon;

  const int rows_m = static_cast<int>(cones_m.C.rows());
  const int rows_f = static_cast<int>(cones_f.C.rows());
  qp.G.resize(rows_m + rows_f + nj, nj);
  qp.lower.resize(rows_m + rows_f + nj);
  qp.upper.resize(rows_m + rows_f + nj);

  if (rows_m > 0) {
    qp.G.topRows(rows_m) = cones_m.C * map_m.S;
    qp.lower.head(rows_m) = cones_m.lower - cones_m.C * map_m.c;
    qp.upper.head(rows_m) = cones_m.upper - cones_m.C * map_m.c;
  }
  if (rows_f > 0) {
    qp.G.middleRows(rows_m, rows_f) = cones_f.C * map_f.S;
    qp.lower.segment(rows_m, rows_f) = cones_f.lower - cones_f.C * map_f.c;
    qp.upper.segment(rows_m, rows_f) = cones_f.upper - cones_f.C * map_f.c;
  }
  const Eigen::VectorXd tau_I_share = B.transpose() * P * Bm * tau_I;
  qp.G.bottomRows(nj) = B.transpose() * IP * Bf;
  qp.lower.tail(nj) = tau_min - tau_I_share;
  qp.upper.tail(nj) = tau_max - tau_I_share;
  return qp;
}

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "proposed") return ControllerKind::Proposed;
  if (name == "howsm") return ControllerKind::Howsm;
  if (name == "pidcwcu") return ControllerKind::Pidcwcu;
  throw std::invalid_argument("unknown controller '" + name + "' (expected proposed | howsm | pidcwcu)");
}

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Proposed: return "proposed";
    case ControllerKind::Howsm: return "howsm";
    case ControllerKind::Pidcwcu: return "pidcwcu";
  }
  return "unknown";
}

WholeBodyController::WholeBodyController(const KinematicTree* model, ControllerKind kind,
                                         ControllerConfig config, ContactSet contacts,
                                         std::vector<ImpedanceTask> tasks)
    : model_(model), kind_(kind), config_(config), contacts_(std::move(contacts)), tasks_(std::move(tasks)) {
  contacts_.validate();
  if (tasks_.empty()) throw std::invalid_argument("WholeBodyController: at least the torso task is required");
  for (const auto& t : tasks_) t.validate();
  if (tasks_[0].dim() != 6) throw std::invalid_argument("WholeBodyController: first task must be the 6-dof torso");
  selection_ = make_selection_matrices(*model_, contacts_);
  const int nj = model_->n_joints();
  tau_min_ = Eigen::VectorXd::Constant(nj, -config_.torque_limit);
  tau_max_ = Eigen::VectorXd::Constant(nj, config_.torque_limit);
  prev_tau_ = Eigen::VectorXd::Zero(nj);
}

void WholeBodyController::set_contacts(const ContactSet& contacts) {
  contacts_ = contacts;
  contacts_.validate();
  selection_ = make_selection_matrices(*model_, contacts_);
  have_prev_jc_ = false;  // zero Pdot for one tick after a contact-set change
}

TorqueCommand WholeBodyController::tick(const GeneralizedState& state, const Eigen::VectorXd& lambda_desired) {
  const int nv = model_->nv();
  const int nc = contacts_.size();
  const auto force_idx = contacts_.force_indices();
  if (!config_.use_implicit_desired_force) {
    if (lambda_desired.size() != 3 * static_cast<int>(force_idx.size()))
      throw std::invalid_argument("tick: lambda_desired size mismatch");
    if (!lambda_desired.allFinite()) throw std::invalid_argument("tick: lambda_desired not finite");
    for (size_t k = 0; k < force_idx.size(); ++k) {
      if (contacts_.contacts[force_idx[k]].n_z.dot(lambda_desired.segment<3>(3 * k)) < -1e-9)
        throw std::invalid_argument("tick: desired normal force must be non-negative");
    }
  }

  const Eigen::MatrixXd M = mass_matrix(*model_, state);
  const Eigen::VectorXd h = bias_forces(*model_, state);
  const Eigen::VectorXd u = state.generalized_velocity(*model_);

  const Eigen::MatrixXd Jc = stack_jacobians(*model_, state, contacts_, all_indices(nc));
  const ProjectionData proj = make_projection(Jc, prev_Jc_, config_.control_dt, M, !have_prev_jc_,
                                              config_.pinv_tol);
  prev_Jc_ = Jc;
  have_prev_jc_ = true;

  const Eigen::MatrixXd& P = proj.P;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(nv, nv);

  // Torso impedance plus optional swing-foot tasks; the torso task also feeds
  // the external-force estimate consumed by the constraint-space law.
  const ImpedanceTask& torso = tasks_[0];
  const FrameKinematics torso_fk = frame_kinematics(*model_, state, torso.frame);
  const Eigen::MatrixXd& Jx = torso_fk.jacobian;
  const Eigen::VectorXd e = pose_error(torso_fk.pose, torso.desired_pose);
  const Eigen::VectorXd edot = Jx * u - torso.desired_velocity;
  Eigen::VectorXd Fx = Eigen::VectorXd::Zero(6);
  if (config_.estimate_external_force) Fx = external_force_estimate(e, edot, torso.Kp, torso.Kd);

  const OperationalInertia torso_inertia =
      operational_inertia(Jx, proj.McInv, P, config_.lambda_trunc_tol);
  const Eigen::VectorXd h_c =
      operational_bias(torso_inertia.Lambda, Jx, proj.McInv, P, h, proj.Pdot, u, torso_fk.drift);
  const Eigen::VectorXd F_dx = impedance_wrench(torso, torso_inertia.Lambda, h_c, e, edot);
  Eigen::VectorXd tau_md = motion_torque_desired(P, Jx, F_dx);

  for (size_t i = 1; i < tasks_.size(); ++i) {
    const ImpedanceTask& task = tasks_[i];
    const FrameKinematics fk = frame_kinematics(*model_, state, task.frame);
    const Eigen::MatrixXd J = fk.jacobian.topRows(task.dim());
    Eigen::VectorXd ei(task.dim());
    if (task.dim() == 6) {
      ei = pose_error(fk.pose, task.desired_pose);
    } else {
      ei = fk.pose.translation() - task.desired_pose.translation();
    }
    const Eigen::VectorXd edoti = J * u - task.desired_velocity;
    const OperationalInertia Li = operational_inertia(J, proj.McInv, P, config_.lambda_trunc_tol);
    const Eigen::VectorXd h_ci =
        operational_bias(Li.Lambda, J, proj.McInv, P, h, proj.Pdot, u, fk.drift.head(task.dim()));
    const Eigen::VectorXd Fi = impedance_wrench(task, Li.Lambda, h_ci, ei, edoti);
    tau_md += motion_torque_desired(P, J, Fi);
  }

  // Desired-force embedding: zeros at motion contacts.
  Eigen::VectorXd lambda_full = Eigen::VectorXd::Zero(3 * nc);
  if (config_.use_implicit_desired_force) {
    lambda_full = implicit_contact_force(proj, h, u, tau_md, Jx, Fx);
  } else {
    for (size_t k = 0; k < force_idx.size(); ++k)
      lambda_full.segment<3>(3 * force_idx[k]) = lambda_desired.segment<3>(3 * k);
  }

  const Eigen::VectorXd tau_cd = constraint_torque_desired(proj, h, u, tau_md, Jx, Fx, lambda_full);
  const Eigen::VectorXd tau_d = tau_md + tau_cd;

  TorqueCommand cmd;
  cmd.lambda_desired_used = lambda_full;
  cmd.motion_component = Eigen::VectorXd::Zero(nv);
  cmd.force_component = Eigen::VectorXd::Zero(nv);

  if (kind_ == ControllerKind::Pidcwcu) {
    const Eigen::MatrixXd Bsq = selection_.B * selection_.B.transpose();
    const Eigen::MatrixXd X = (I - Bsq) * (I - P);
    const Eigen::VectorXd gen =
        (I - pinv(X, config_.pinv_tol)) * ((I - P) * tau_cd);
    cmd.tau = pinv(P * selection_.B, config_.pinv_tol) * tau_md + selection_.B.transpose() * gen;
    cmd.tau = cmd.tau.cwiseMax(tau_min_).cwiseMin(tau_max_);
    const Eigen::VectorXd applied = selection_.B * cmd.tau;
    cmd.motion_component = P * applied;
    cmd.force_component = (I - P) * applied;
    prev_tau_ = cmd.tau;
    return cmd;
  }

  const bool with_selection = kind_ == ControllerKind::Proposed;
  const Eigen::MatrixXd& Bm = with_selection ? selection_.Bm : selection_.B;
  const Eigen::MatrixXd& Bf = with_selection ? selection_.Bf : selection_.B;

  cmd.has_qp = true;
  QPProblem qp1 = assemble_qp1(tau_d, P, Bm, selection_.B, tau_min_, tau_max_, config_.qp_epsilon);
  const QPSolution sol1 = solve(qp1, config_.qp_max_iterations);
  cmd.qp1_status = sol1.status;
  cmd.qp1_residual = sol1.kkt_residual;
  cmd.qp1_iterations = sol1.iterations;

  const Eigen::VectorXd tau_m_applied = P * Bm * sol1.tau;
  const auto motion_idx = contacts_.motion_indices();
  const Eigen::MatrixXd Jcm = stack_jacobians(*model_, state, contacts_, motion_idx);
  const Eigen::MatrixXd Jcf = stack_jacobians(*model_, state, contacts_, force_idx);

  const AffineForceMap map_m = lambda_m_affine(proj, h, u, tau_m_applied, Bm, Jx, Fx, Jcm);
  const AffineForceMap map_f = lambda_f_affine(proj, h, u, Bf, Jx, Fx, Jcf);

  ConePyramid cones_m, cones_f;
  cones_m.C.resize(0, 3 * motion_idx.size());
  cones_f.C.resize(0, 3 * force_idx.size());
  if (!motion_idx.empty()) cones_m = stack_cones(contacts_, ConeVariant::Motion);
  if (!force_idx.empty()) cones_f = stack_cones(contacts_, ConeVariant::Force);

  QPProblem qp2 = assemble_qp2(tau_d, sol1.tau, P, Bm, Bf, selection_.B, map_m, map_f, cones_m,
                               cones_f, tau_min_, tau_max_, config_.qp_epsilon);
  const QPSolution sol2 = solve(qp2, config_.qp_max_iterations);
  cmd.qp2_status = sol2.status;
  cmd.qp2_residual = sol2.kkt_residual;
  cmd.qp2_iterations = sol2.iterations;

  if (config_.record_qp_problems) {
    last_qp1_ = qp1;
    last_qp2_ = qp2;
  }

  if (sol1.status == QPStatus::Infeasible || sol2.status == QPStatus::Infeasible) {
    cmd.fallback = true;
    cmd.tau = prev_tau_;
    return cmd;
  }

  cmd.motion_component = tau_m_applied;
  cmd.force_component = (I - P) * Bf * sol2.tau;
  cmd.tau = selection_.B.transpose() * (cmd.motion_component + cmd.force_component);
  // Bounds hold at QP optima; the clamp covers iteration-capped solutions.
  cmd.tau = cmd.tau.cwiseMax(tau_min_).cwiseMin(tau_max_);

  cmd.lambda_m = map_m.S * sol2.tau + map_m.c;
  cmd.lambda_f = map_f.S * sol2.tau + map_f.c;
  cmd.qp_cone_violation =
      std::max(max_cone_violation(cones_m, cmd.lambda_m), max_cone_violation(cones_f, cmd.lambda_f));

  prev_tau_ = cmd.tau;
  return cmd;
}

}  // namespace wbfc
