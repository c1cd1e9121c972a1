#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <nlohmann/json_fwd.hpp>

namespace wbfc {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

enum class JointType { FloatingBase, Revolute };

struct Link {
  std::string name;
  double mass = 0.0;
  Eigen::Matrix3d inertia = Eigen::Matrix3d::Zero();  // about COM, link frame
  Eigen::Vector3d com = Eigen::Vector3d::Zero();      // link frame
};

struct Joint {
  std::string name;
  JointType type = JointType::Revolute;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // joint frame, unit norm
  int parent_link = -1;                             // -1 = world
  int child_link = -1;
  Eigen::Isometry3d parent_to_joint = Eigen::Isometry3d::Identity();
  int dof_index = -1;  // revolute: index into joint_positions; floating: start of base dofs
};

struct FrameDef {
  std::string name;
  int parent_link = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // link frame
  bool spatial = false;                              // 6-row Jacobian (torso) vs 3-row point frame
};

// Floating-base kinematic tree. Immutable after build_model; all operations on it
// are pure functions of (model, state).
class KinematicTree {
 public:
  const std::vector<Link>& links() const { return links_; }
  const std::vector<Joint>& joints() const { return joints_; }
  const std::vector<FrameDef>& frames() const { return frames_; }
  const Eigen::Vector3d& gravity() const { return gravity_; }

  bool floating() const { return floating_; }
  int n_joints() const { return n_revolute_; }           // actuated (revolute) joints
  int nv() const { return (floating_ ? 6 : 0) + n_revolute_; }
  int base_dof_offset() const { return floating_ ? 6 : 0; }

  int frame_index(const std::string& name) const;  // throws on unknown name
  int link_index(const std::string& name) const;
  double total_mass() const;

  // Actuated joint indices (dof order, base dofs excluded) moving the given frame.
  std::vector<int> joints_on_path(const std::string& frame_name) const;

  friend KinematicTree build_model(const nlohmann::json& doc, bool allow_fixed_base);

 private:
  std::vector<Link> links_;
  std::vector<Joint> joints_;   // topologically ordered, joints_[i].child_link == i
  std::vector<FrameDef> frames_;
  Eigen::Vector3d gravity_ = Eigen::Vector3d(0, 0, -9.81);
  bool floating_ = true;
  int n_revolute_ = 0;
};

// Base pose + joint configuration and generalized velocity. Base twist is
// body-frame [linear; angular]; generalized velocity is [base twist; joint rates].
struct GeneralizedState {
  Eigen::Vector3d base_position = Eigen::Vector3d::Zero();
  Eigen::Quaterniond base_orientation = Eigen::Quaterniond::Identity();  // body -> world
  Eigen::VectorXd joint_positions;
  Vector6d base_twist = Vector6d::Zero();  // [v_body; omega_body]
  Eigen::VectorXd joint_velocities;

  Eigen::VectorXd generalized_velocity(const KinematicTree& model) const;
  static GeneralizedState from_generalized_velocity(const KinematicTree& model,
                                                    const GeneralizedState& positions,
                                                    const Eigen::VectorXd& v);
  void validate(const KinematicTree& model) const;  // throws on bad dimensions / quat norm
};

struct FrameKinematics {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  Eigen::MatrixXd jacobian;      // (3 or 6) x nv, world-aligned [linear; angular]
  Eigen::VectorXd drift;         // Jdot * qdot, same rows
};

// --- Operations ------------------------------------------------------------

// Parses and validates a robot model document. `allow_fixed_base` permits trees
// without a floating-base joint (test rigs such as a bench-mounted pendulum).
KinematicTree build_model(const nlohmann::json& doc, bool allow_fixed_base = false);
KinematicTree build_model_from_file(const std::string& path, bool allow_fixed_base = false);

Eigen::MatrixXd mass_matrix(const KinematicTree& model, const GeneralizedState& state);
Eigen::VectorXd bias_forces(const KinematicTree& model, const GeneralizedState& state);

// Generalized forces tau with M*a + h = tau for the given acceleration; the
// column-wise oracle for the mass matrix uses this with gravity disabled.
Eigen::VectorXd inverse_dynamics(const KinematicTree& model, const GeneralizedState& state,
                                 const Eigen::VectorXd& accel, bool with_gravity = true);

FrameKinematics frame_kinematics(const KinematicTree& model, const GeneralizedState& state,
                                 const std::string& frame_name);

// Semi-implicit position update: q <- q (+) v*dt with exponential-map base update.
GeneralizedState integrate_positions(const KinematicTree& model, const GeneralizedState& state,
                                     const Eigen::VectorXd& v, double dt);

}  // namespace wbfc
