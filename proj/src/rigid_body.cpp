#include "wbfc/rigid_body.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace wbfc {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("model validation: " + msg); }

Eigen::Vector3d read_vec3(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) fail("missing or malformed 3-vector '" + key + "'");
  return Eigen::Vector3d(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

Eigen::Matrix3d read_mat3(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) fail("missing or malformed 3x3 matrix '" + key + "'");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    if (!j[key][r].is_array() || j[key][r].size() != 3) fail("malformed row in '" + key + "'");
    for (int c = 0; c < 3; ++c) m(r, c) = j[key][r][c].get<double>();
  }
  return m;
}

Eigen::Matrix3d rpy_to_rotation(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

// Spatial motion vectors are [linear at world origin; angular], world frame.
Vector6d motion_cross(const Vector6d& a, const Vector6d& b) {
  Vector6d out;
  out.head<3>() = a.tail<3>().cross(b.head<3>()) + a.head<3>().cross(b.tail<3>());
  out.tail<3>() = a.tail<3>().cross(b.tail<3>());
  return out;
}

Vector6d force_cross(const Vector6d& v, const Vector6d& f) {
  Vector6d out;
  out.head<3>() = v.tail<3>().cross(f.head<3>());
  out.tail<3>() = v.tail<3>().cross(f.tail<3>()) + v.head<3>().cross(f.head<3>());
  return out;
}

// Spatial inertia of one body about the world origin.
Matrix6d spatial_inertia_at_origin(double mass, const Eigen::Vector3d& com_world,
                                   const Eigen::Matrix3d& inertia_world) {
  const Eigen::Matrix3d cx = skew(com_world);
  Matrix6d I;
  I.topLeftCorner<3, 3>() = mass * Eigen::Matrix3d::Identity();
  I.topRightCorner<3, 3>() = -mass * cx;
  I.bottomLeftCorner<3, 3>() = mass * cx;
  I.bottomRightCorner<3, 3>() = inertia_world - mass * cx * cx;
  return I;
}

// Columns of the floating-base joint map: body-frame twist -> spatial velocity.
Matrix6d base_motion_map(const Eigen::Isometry3d& pose) {
  const Eigen::Matrix3d R = pose.linear();
  Matrix6d X;
  X.topLeftCorner<3, 3>() = R;
  X.topRightCorner<3, 3>() = skew(pose.translation()) * R;
  X.bottomLeftCorner<3, 3>().setZero();
  X.bottomRightCorner<3, 3>() = R;
  return X;
}

struct LinkKin {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  Vector6d v = Vector6d::Zero();       // spatial velocity
  Vector6d a_bias = Vector6d::Zero();  // spatial acceleration at zero generalized acceleration
  Vector6d s = Vector6d::Zero();       // revolute joint axis column (unused for root)
  Matrix6d S_base = Matrix6d::Zero();  // floating-base columns (root only)
  Matrix6d I_origin = Matrix6d::Zero();
  Eigen::Vector3d com_world = Eigen::Vector3d::Zero();
};

// Forward kinematics + velocity + velocity-product acceleration for all links.
std::vector<LinkKin> forward_pass(const KinematicTree& model, const GeneralizedState& state) {
  const auto& links = model.links();
  const auto& joints = model.joints();
  std::vector<LinkKin> kin(links.size());

  for (size_t i = 0; i < joints.size(); ++i) {
    const Joint& jnt = joints[i];
    LinkKin& lk = kin[jnt.child_link];
    Eigen::Isometry3d parent_pose = Eigen::Isometry3d::Identity();
    Vector6d v_parent = Vector6d::Zero();
    Vector6d a_parent = Vector6d::Zero();
    if (jnt.parent_link >= 0) {
      parent_pose = kin[jnt.parent_link].pose;
      v_parent = kin[jnt.parent_link].v;
      a_parent = kin[jnt.parent_link].a_bias;
    }

    if (jnt.type == JointType::FloatingBase) {
      lk.pose.translation() = state.base_position;
      lk.pose.linear() = state.base_orientation.toRotationMatrix();
      lk.S_base = base_motion_map(lk.pose);
      lk.v = lk.S_base * state.base_twist;
      lk.a_bias.setZero();  // body-fixed axes: velocity-product term vanishes for the 6-dof joint
    } else {
      const double q = state.joint_positions[jnt.dof_index];
      const double qd = state.joint_velocities[jnt.dof_index];
      const Eigen::Isometry3d joint_pose =
          parent_pose * jnt.parent_to_joint * Eigen::Isometry3d(Eigen::AngleAxisd(q, jnt.axis));
      lk.pose = joint_pose;
      const Eigen::Vector3d axis_w = joint_pose.linear() * jnt.axis;
      const Eigen::Vector3d p_w = joint_pose.translation();
      lk.s.head<3>() = p_w.cross(axis_w);
      lk.s.tail<3>() = axis_w;
      lk.v = v_parent + lk.s * qd;
      lk.a_bias = a_parent + motion_cross(v_parent, lk.s) * qd;
    }

    const Link& lnk = links[jnt.child_link];
    lk.com_world = lk.pose * lnk.com;
    const Eigen::Matrix3d R = lk.pose.linear();
    lk.I_origin = spatial_inertia_at_origin(lnk.mass, lk.com_world, R * lnk.inertia * R.transpose());
  }
  return kin;
}

}  // namespace

int KinematicTree::frame_index(const std::string& name) const {
  for (size_t i = 0; i < frames_.size(); ++i)
    if (frames_[i].name == name) return static_cast<int>(i);
  throw std::runtime_error("unknown frame '" + name + "'");
}

int KinematicTree::link_index(const std::string& name) const {
  for (size_t i = 0; i < links_.size(); ++i)
    if (links_[i].name == name) return static_cast<int>(i);
  throw std::runtime_error("unknown link '" + name + "'");
}

double KinematicTree::total_mass() const {
  return std::accumulate(links_.begin(), links_.end(), 0.0,
                         [](double acc, const Link& l) { return acc + l.mass; });
}

std::vector<int> KinematicTree::joints_on_path(const std::string& frame_name) const {
  const FrameDef& frame = frames_[frame_index(frame_name)];
  std::vector<int> out;
  int link = frame.parent_link;
  while (link >= 0) {
    const Joint& jnt = joints_[link];
    if (jnt.type == JointType::Revolute) out.push_back(jnt.dof_index);
    link = jnt.parent_link;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Eigen::VectorXd GeneralizedState::generalized_velocity(const KinematicTree& model) const {
  Eigen::VectorXd v(model.nv());
  if (model.floating()) {
    v.head<6>() = base_twist;
    v.tail(model.n_joints()) = joint_velocities;
  } else {
    v = joint_velocities;
  }
  return v;
}

GeneralizedState GeneralizedState::from_generalized_velocity(const KinematicTree& model,
                                                             const GeneralizedState& positions,
                                                             const Eigen::VectorXd& v) {
  GeneralizedState s = positions;
  if (model.floating()) {
    s.base_twist = v.head<6>();
    s.joint_velocities = v.tail(model.n_joints());
  } else {
    s.base_twist.setZero();
    s.joint_velocities = v;
  }
  return s;
}

void GeneralizedState::validate(const KinematicTree& model) const {
  if (joint_positions.size() != model.n_joints()) throw std::runtime_error("state: joint_positions size mismatch");
  if (joint_velocities.size() != model.n_joints()) throw std::runtime_error("state: joint_velocities size mismatch");
  if (std::abs(base_orientation.norm() - 1.0) > 1e-9) throw std::runtime_error("state: quaternion not unit norm");
}

KinematicTree build_model(const json& doc, bool allow_fixed_base) {
  if (!doc.is_object()) fail("document is not an object");
  for (const char* key : {"links", "joints", "frames"})
    if (!doc.contains(key) || !doc[key].is_array()) fail(std::string("missing array '") + key + "'");

  KinematicTree model;
  model.gravity_ = read_vec3(doc, "gravity");

  std::unordered_map<std::string, int> link_ids;
  std::vector<Link> raw_links;
  for (const auto& jl : doc["links"]) {
    Link l;
    l.name = jl.value("name", "");
    if (l.name.empty()) fail("link without a name");
    if (link_ids.count(l.name)) fail("duplicate link '" + l.name + "'");
    if (!jl.contains("mass_kg")) fail("link '" + l.name + "' missing mass_kg");
    l.mass = jl["mass_kg"].get<double>();
    if (!(l.mass > 0.0)) fail("link '" + l.name + "' has non-positive mass");
    l.com = read_vec3(jl, "com_m");
    l.inertia = read_mat3(jl, "inertia_kgm2");
    if ((l.inertia - l.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-9)
      fail("link '" + l.name + "' inertia not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(l.inertia);
    if (es.eigenvalues().minCoeff() <= 0.0) fail("link '" + l.name + "' inertia not positive definite");
    link_ids[l.name] = static_cast<int>(raw_links.size());
    raw_links.push_back(l);
  }
  if (raw_links.empty()) fail("no links");

  std::vector<Joint> raw_joints;
  std::vector<int> inbound(raw_links.size(), -1);  // joint index attaching each link
  int n_floating = 0;
  for (const auto& jj : doc["joints"]) {
    Joint j;
    j.name = jj.value("name", "");
    const std::string type = jj.value("type", "");
    if (type == "floating_base") {
      j.type = JointType::FloatingBase;
      ++n_floating;
    } else if (type == "revolute") {
      j.type = JointType::Revolute;
    } else {
      fail("joint '" + j.name + "' has unknown type '" + type + "'");
    }
    const std::string parent = jj.value("parent", "");
    if (parent == "world") {
      j.parent_link = -1;
    } else {
      auto it = link_ids.find(parent);
      if (it == link_ids.end()) fail("joint '" + j.name + "' references unknown parent '" + parent + "'");
      j.parent_link = it->second;
    }
    const std::string child = jj.value("child", "");
    auto it = link_ids.find(child);
    if (it == link_ids.end()) fail("joint '" + j.name + "' references unknown child '" + child + "'");
    j.child_link = it->second;
    j.parent_to_joint.translation() = read_vec3(jj, "origin_xyz_m");
    j.parent_to_joint.linear() =
        jj.contains("origin_rpy_rad") ? rpy_to_rotation(read_vec3(jj, "origin_rpy_rad")) : Eigen::Matrix3d::Identity();
    if (j.type == JointType::Revolute) {
      j.axis = read_vec3(jj, "axis");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) fail("joint '" + j.name + "' axis not unit norm");
      j.axis.normalize();
    } else {
      if (j.parent_link != -1) fail("floating-base joint must attach to world");
      if (!j.parent_to_joint.isApprox(Eigen::Isometry3d::Identity(), 1e-12))
        fail("floating-base joint must have identity origin (base pose comes from the state)");
    }
    if (inbound[j.child_link] != -1) fail("link '" + child + "' has two inbound joints");
    inbound[j.child_link] = static_cast<int>(raw_joints.size());
    raw_joints.push_back(j);
  }

  if (n_floating > 1) fail("more than one floating-base joint");
  if (n_floating == 0 && !allow_fixed_base) fail("missing floating-base joint");
  model.floating_ = n_floating == 1;

  for (size_t i = 0; i < raw_links.size(); ++i)
    if (inbound[i] < 0) fail("link '" + raw_links[i].name + "' is not attached by any joint");

  // Reorder links parent-first; a link never reached from the world indicates a cycle.
  std::vector<int> order;
  std::vector<int> new_id(raw_links.size(), -1);
  for (size_t pass = 0; pass <= raw_links.size(); ++pass) {
    for (size_t i = 0; i < raw_links.size(); ++i) {
      if (new_id[i] >= 0) continue;
      const int parent = raw_joints[inbound[i]].parent_link;
      if (parent == -1 || new_id[parent] >= 0) {
        new_id[i] = static_cast<int>(order.size());
        order.push_back(static_cast<int>(i));
      }
    }
  }
  if (order.size() != raw_links.size()) fail("cycle in tree");

  model.links_.resize(raw_links.size());
  model.joints_.resize(raw_links.size());
  int dof = 0;
  for (size_t k = 0; k < order.size(); ++k) {
    const int old_link = order[k];
    model.links_[k] = raw_links[old_link];
    Joint j = raw_joints[inbound[old_link]];
    j.child_link = static_cast<int>(k);
    if (j.parent_link >= 0) j.parent_link = new_id[j.parent_link];
    model.joints_[k] = j;
  }
  for (auto& j : model.joints_)
    if (j.type == JointType::Revolute) j.dof_index = dof++;
  model.n_revolute_ = dof;

  for (const auto& jf : doc["frames"]) {
    FrameDef f;
    f.name = jf.value("name", "");
    if (f.name.empty()) fail("frame without a name");
    const std::string parent = jf.value("parent", "");
    auto it = link_ids.find(parent);
    if (it == link_ids.end()) fail("frame '" + f.name + "' references unknown link '" + parent + "'");
    f.parent_link = new_id[it->second];
    f.offset = read_vec3(jf, "offset_m");
    const std::string kind = jf.value("kind", "point");
    if (kind == "spatial") {
      f.spatial = true;
    } else if (kind != "point") {
      fail("frame '" + f.name + "' has unknown kind '" + kind + "'");
    }
    model.frames_.push_back(f);
  }
  return model;
}

KinematicTree build_model_from_file(const std::string& path, bool allow_fixed_base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error("model file '" + path + "': " + e.what());
  }
  return build_model(doc, allow_fixed_base);
}

Eigen::MatrixXd mass_matrix(const KinematicTree& model, const GeneralizedState& state) {
  state.validate(model);
  const auto kin = forward_pass(model, state);
  const auto& joints = model.joints();
  const int nv = model.nv();
  const int base = model.base_dof_offset();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nv, nv);

  // Composite inertia of each subtree, assembled leaf-to-root.
  std::vector<Matrix6d> IC(kin.size());
  for (size_t i = 0; i < kin.size(); ++i) IC[i] = kin[i].I_origin;
  for (int i = static_cast<int>(kin.size()) - 1; i >= 0; --i) {
    const int parent = joints[i].parent_link;
    if (parent >= 0) IC[parent] += IC[i];
  }

  for (size_t b = 0; b < kin.size(); ++b) {
    if (joints[b].type == JointType::FloatingBase) {
      M.topLeftCorner(6, 6) = kin[b].S_base.transpose() * IC[b] * kin[b].S_base;
      continue;
    }
    const int col = base + joints[b].dof_index;
    const Vector6d F = IC[b] * kin[b].s;
    M(col, col) = kin[b].s.dot(F);
    int a = joints[b].parent_link;
    while (a >= 0) {
      if (joints[a].type == JointType::FloatingBase) {
        M.block<6, 1>(0, col) = kin[a].S_base.transpose() * F;
        M.block<1, 6>(col, 0) = M.block<6, 1>(0, col).transpose();
      } else {
        const int row = base + joints[a].dof_index;
        M(row, col) = kin[a].s.dot(F);
        M(col, row) = M(row, col);
      }
      a = joints[a].parent_link;
    }
  }
  return M;
}

Eigen::VectorXd inverse_dynamics(const KinematicTree& model, const GeneralizedState& state,
                                 const Eigen::VectorXd& accel, bool with_gravity) {
  state.validate(model);
  if (accel.size() != model.nv()) throw std::runtime_error("inverse_dynamics: accel size mismatch");
  const auto kin = forward_pass(model, state);
  const auto& joints = model.joints();
  const int base = model.base_dof_offset();

  const Vector6d a_offset = with_gravity ? (Vector6d() << -model.gravity(), Eigen::Vector3d::Zero()).finished()
                                         : Vector6d::Zero();

  std::vector<Vector6d> a(kin.size());
  std::vector<Vector6d> f(kin.size());
  for (size_t i = 0; i < kin.size(); ++i) {
    const Joint& jnt = joints[i];
    Vector6d a_parent = a_offset;
    if (jnt.parent_link >= 0) a_parent = a[jnt.parent_link];
    if (jnt.type == JointType::FloatingBase) {
      a[i] = a_parent + kin[i].S_base * accel.head<6>();
    } else {
      a[i] = a_parent + kin[i].s * accel[base + jnt.dof_index] + kin[i].a_bias -
             (jnt.parent_link >= 0 ? kin[jnt.parent_link].a_bias : Vector6d::Zero());
    }
    f[i] = kin[i].I_origin * a[i] + force_cross(kin[i].v, kin[i].I_origin * kin[i].v);
  }

  Eigen::VectorXd tau = Eigen::VectorXd::Zero(model.nv());
  for (int i = static_cast<int>(kin.size()) - 1; i >= 0; --i) {
    const Joint& jnt = joints[i];
    if (jnt.type == JointType::FloatingBase) {
      tau.head<6>() = kin[i].S_base.transpose() * f[i];
    } else {
      tau[base + jnt.dof_index] = kin[i].s.dot(f[i]);
    }
    if (jnt.parent_link >= 0) f[jnt.parent_link] += f[i];
  }
  return tau;
}

Eigen::VectorXd bias_forces(const KinematicTree& model, const GeneralizedState& state) {
  return inverse_dynamics(model, state, Eigen::VectorXd::Zero(model.nv()), true);
}

FrameKinematics frame_kinematics(const KinematicTree& model, const GeneralizedState& state,
                                 const std::string& frame_name) {
  state.validate(model);
  const FrameDef& frame = model.frames()[model.frame_index(frame_name)];
  const auto kin = forward_pass(model, state);
  const auto& joints = model.joints();
  const int base = model.base_dof_offset();
  const int rows = frame.spatial ? 6 : 3;

  const LinkKin& lk = kin[frame.parent_link];
  const Eigen::Vector3d p_f = lk.pose * frame.offset;

  FrameKinematics out;
  out.pose = lk.pose;
  out.pose.translation() = p_f;

  Eigen::MatrixXd J6 = Eigen::MatrixXd::Zero(6, model.nv());
  int link = frame.parent_link;
  while (link >= 0) {
    const Joint& jnt = joints[link];
    if (jnt.type == JointType::FloatingBase) {
      J6.leftCols<6>() = kin[link].S_base;
    } else {
      J6.col(base + jnt.dof_index) = kin[link].s;
    }
    link = jnt.parent_link;
  }
  // Spatial columns to world-aligned velocity at the frame origin.
  Eigen::MatrixXd J(rows, model.nv());
  J.topRows(3) = J6.topRows(3) - skew(p_f) * J6.bottomRows(3);
  if (frame.spatial) J.bottomRows(3) = J6.bottomRows(3);

  const Eigen::Vector3d v_origin = lk.v.head<3>();
  const Eigen::Vector3d omega = lk.v.tail<3>();
  const Eigen::Vector3d a_origin = lk.a_bias.head<3>();
  const Eigen::Vector3d alpha = lk.a_bias.tail<3>();

  Eigen::VectorXd drift(rows);
  drift.head<3>() = a_origin + alpha.cross(p_f) + omega.cross(v_origin + omega.cross(p_f));
  if (frame.spatial) drift.tail<3>() = alpha;

  out.jacobian = std::move(J);
  out.drift = std::move(drift);
  return out;
}

GeneralizedState integrate_positions(const KinematicTree& model, const GeneralizedState& state,
                                     const Eigen::VectorXd& v, double dt) {
  GeneralizedState next = GeneralizedState::from_generalized_velocity(model, state, v);
  if (model.floating()) {
    const Eigen::Vector3d v_body = v.head<3>();
    const Eigen::Vector3d w_body = v.segment<3>(3);
    next.base_position += state.base_orientation * v_body * dt;
    const double angle = w_body.norm() * dt;
    if (angle > 0.0) {
      next.base_orientation =
          state.base_orientation * Eigen::Quaterniond(Eigen::AngleAxisd(angle, w_body.normalized()));
    }
    next.base_orientation.normalize();
    next.joint_positions += v.tail(model.n_joints()) * dt;
  } else {
    next.joint_positions += v * dt;
  }
  return next;
}

}  // namespace wbfc
