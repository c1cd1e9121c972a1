#pragma once

#include <string>

#include <Eigen/Dense>

#include "wbfc/projection.hpp"

namespace wbfc {

// Cartesian impedance task for the torso (6-dof) or a swing foot (3-dof).
struct ImpedanceTask {
  std::string frame;
  Eigen::Isometry3d desired_pose = Eigen::Isometry3d::Identity();
  Eigen::VectorXd desired_velocity;      // task dim
  Eigen::VectorXd desired_acceleration;  // task dim
  Eigen::MatrixXd Kp;                    // task dim^2, SPD
  Eigen::MatrixXd Kd;

  int dim() const { return static_cast<int>(Kp.rows()); }
  void validate() const;  // throws unless Kp, Kd symmetric positive definite
};

// Translation error stacked with the world-aligned rotation-vector of Rd^-1 R.
Eigen::Matrix<double, 6, 1> pose_error(const Eigen::Isometry3d& current, const Eigen::Isometry3d& desired);

// h_c = Lambda Jx McInv (P h - Pdot qd) - Lambda Jdot qd
Eigen::VectorXd operational_bias(const Eigen::MatrixXd& Lambda, const Eigen::MatrixXd& Jx,
                                 const Eigen::MatrixXd& McInv, const Eigen::MatrixXd& P,
                                 const Eigen::VectorXd& h, const Eigen::MatrixXd& Pdot,
                                 const Eigen::VectorXd& qd, const Eigen::VectorXd& Jdot_qd);

// F_dx = h_c + Lambda xdd_d - Kd edot - Kp e
Eigen::VectorXd impedance_wrench(const ImpedanceTask& task, const Eigen::MatrixXd& Lambda,
                                 const Eigen::VectorXd& h_c, const Eigen::VectorXd& e,
                                 const Eigen::VectorXd& edot);

// tau_md = P Jx^T F_dx
Eigen::VectorXd motion_torque_desired(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Jx,
                                      const Eigen::VectorXd& F_dx);

// Constraint-space torque realizing lambda_d (full contact-set vector, zeros at
// motion contacts); (I-P) tau_cd == tau_cd by construction.
Eigen::VectorXd constraint_torque_desired(const ProjectionData& proj, const Eigen::VectorXd& h,
                                          const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_md,
                                          const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx,
                                          const Eigen::VectorXd& lambda_d);

// Quasi-static estimate Kd edot + Kp e of the external task wrench; the
// acceleration term is dropped since it would require differentiating
// measurements twice.
Eigen::VectorXd external_force_estimate(const Eigen::VectorXd& e, const Eigen::VectorXd& edot,
                                        const Eigen::MatrixXd& Kp, const Eigen::MatrixXd& Kd);

// Contact force that arises with zero constraint-space torque: the force needed
// merely to maintain the contact constraint.
Eigen::VectorXd implicit_contact_force(const ProjectionData& proj, const Eigen::VectorXd& h,
                                       const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_md,
                                       const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx);

}  // namespace wbfc
