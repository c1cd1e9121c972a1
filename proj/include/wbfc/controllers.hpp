#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wbfc/projection.hpp"
#include "wbfc/qp_solver.hpp"
#include "wbfc/rigid_body.hpp"
#include "wbfc/task_control.hpp"

namespace wbfc {

enum class ContactRole { Motion, Force };

struct Contact {
  std::string frame;
  Eigen::Vector3d n_x = Eigen::Vector3d::UnitX();  // heading
  Eigen::Vector3d n_y = Eigen::Vector3d::UnitY();  // lateral
  Eigen::Vector3d n_z = Eigen::Vector3d::UnitZ();  // surface normal
  double mu = 0.7;
  ContactRole role = ContactRole::Motion;
};

struct ContactSet {
  std::vector<Contact> contacts;

  int size() const { return static_cast<int>(contacts.size()); }
  int n_motion() const;
  int n_force() const;
  std::vector<int> motion_indices() const;
  std::vector<int> force_indices() const;
  void validate() const;  // orthonormal triads, mu >= 0
};

struct SelectionMatrices {
  Eigen::MatrixXd B;   // (6+nj) x nj, [0; I]
  Eigen::MatrixXd Bm;  // B with force-leg columns zeroed
  Eigen::MatrixXd Bf;  // B with motion-leg columns zeroed
  std::vector<int> force_joints;  // actuated indices assigned to force control
};

SelectionMatrices make_selection_matrices(const KinematicTree& model, const ContactSet& contacts);

enum class ConeVariant { Full, Motion, Force };

struct ConePyramid {
  Eigen::MatrixXd C;      // 5k x 3k block diagonal
  Eigen::VectorXd lower;  // 5k
  Eigen::VectorXd upper;
  std::vector<int> contact_indices;  // rows correspond to these contacts, in order
};

// Five pyramid rows for one contact: four cone facets plus the unilateral row.
void friction_pyramid_rows(const Contact& contact, Eigen::Matrix<double, 5, 3>& C,
                           Eigen::Matrix<double, 5, 1>& lower, Eigen::Matrix<double, 5, 1>& upper);

ConePyramid stack_cones(const ContactSet& contacts, ConeVariant variant);

// lambda = S tau + c in the joint-torque decision variable.
struct AffineForceMap {
  Eigen::MatrixXd S;
  Eigen::VectorXd c;
};

AffineForceMap lambda_m_affine(const ProjectionData& proj, const Eigen::VectorXd& h,
                               const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_m_applied,
                               const Eigen::MatrixXd& B_decision, const Eigen::MatrixXd& Jx,
                               const Eigen::VectorXd& Fx, const Eigen::MatrixXd& Jcm);

// Motion-torque slot held at zero; only the designated actuators shape lambda_f.
AffineForceMap lambda_f_affine(const ProjectionData& proj, const Eigen::VectorXd& h,
                               const Eigen::VectorXd& qd, const Eigen::MatrixXd& B_decision,
                               const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx,
                               const Eigen::MatrixXd& Jcf);

QPProblem assemble_qp1(const Eigen::VectorXd& tau_d, const Eigen::MatrixXd& P,
                       const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& B,
                       const Eigen::VectorXd& tau_min, const Eigen::VectorXd& tau_max, double epsilon);

QPProblem assemble_qp2(const Eigen::VectorXd& tau_d, const Eigen::VectorXd& tau_I,
                       const Eigen::MatrixXd& P, const Eigen::MatrixXd& Bm, const Eigen::MatrixXd& Bf,
                       const Eigen::MatrixXd& B, const AffineForceMap& map_m, const AffineForceMap& map_f,
                       const ConePyramid& cones_m, const ConePyramid& cones_f,
                       const Eigen::VectorXd& tau_min, const Eigen::VectorXd& tau_max, double epsilon);

enum class ControllerKind { Proposed, Howsm, Pidcwcu };

ControllerKind controller_kind_from_string(const std::string& name);
const char* to_string(ControllerKind kind);

struct ControllerConfig {
  double torque_limit = 80.0;  // N*m, symmetric per joint
  double control_dt = 1e-3;
  double pinv_tol = 1e-8;
  double lambda_trunc_tol = 1e-6;
  double qp_epsilon = 1e-10;
  int qp_max_iterations = 200;
  bool estimate_external_force = true;
  bool record_qp_problems = false;
  // Track the implicit contact force (pure motion control) instead of the
  // lambda_desired argument.
  bool use_implicit_desired_force = false;
};

struct TorqueCommand {
  Eigen::VectorXd tau;               // nj joint torques
  Eigen::VectorXd motion_component;  // P Bm tauI, generalized
  Eigen::VectorXd force_component;   // (I-P) Bf tauII, generalized
  bool has_qp = false;
  QPStatus qp1_status = QPStatus::Optimal;
  QPStatus qp2_status = QPStatus::Optimal;
  double qp1_residual = 0.0;
  double qp2_residual = 0.0;
  int qp1_iterations = 0;
  int qp2_iterations = 0;
  bool fallback = false;             // infeasible tick, previous command held
  Eigen::VectorXd lambda_m;          // affine-map forces at the optimum
  Eigen::VectorXd lambda_f;
  double qp_cone_violation = 0.0;    // worst violation of the cone rows at the optimum
  Eigen::VectorXd lambda_desired_used;  // full contact-set target consumed by the tick
};

// Runs one of the three whole-body controllers per control tick. Owns the
// Jacobian history for the projector derivative and the fallback command.
class WholeBodyController {
 public:
  WholeBodyController(const KinematicTree* model, ControllerKind kind, ControllerConfig config,
                      ContactSet contacts, std::vector<ImpedanceTask> tasks);

  // lambda_desired has 3 entries per force contact, world frame.
  TorqueCommand tick(const GeneralizedState& state, const Eigen::VectorXd& lambda_desired);

  // Replaces the contact set; the projector derivative is zeroed for one tick.
  void set_contacts(const ContactSet& contacts);

  const ContactSet& contacts() const { return contacts_; }
  const SelectionMatrices& selection() const { return selection_; }
  ControllerKind kind() const { return kind_; }

  // Populated when config.record_qp_problems is set.
  const std::optional<QPProblem>& last_qp1() const { return last_qp1_; }
  const std::optional<QPProblem>& last_qp2() const { return last_qp2_; }

 private:
  const KinematicTree* model_;
  ControllerKind kind_;
  ControllerConfig config_;
  ContactSet contacts_;
  std::vector<ImpedanceTask> tasks_;  // tasks_[0] is the spatial torso task
  SelectionMatrices selection_;
  Eigen::VectorXd tau_min_, tau_max_;

  Eigen::MatrixXd prev_Jc_;
  bool have_prev_jc_ = false;
  Eigen::VectorXd prev_tau_;

  std::optional<QPProblem> last_qp1_;
  std::optional<QPProblem> last_qp2_;
};

}  // namespace wbfc
