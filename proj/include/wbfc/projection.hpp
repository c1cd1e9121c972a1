#pragma once

#include <Eigen/Dense>

namespace wbfc {

// Orthogonal decomposition of the dynamics for one contact set. Immutable once built.
struct ProjectionData {
  Eigen::MatrixXd P;     // null-space projector of Jc
  Eigen::MatrixXd Pdot;  // finite-difference time derivative (zero on the first tick)
  Eigen::MatrixXd Mc;    // P*M + I - P, always invertible
  Eigen::MatrixXd McInv;
  Eigen::MatrixXd Mbar;  // M * McInv
  Eigen::MatrixXd Jc;
  double pinv_tolerance = 1e-8;
  double condition_number = 0.0;  // of Mc
};

struct OperationalInertia {
  Eigen::MatrixXd Lambda;  // task-space apparent inertia, truncated pseudo-inverse
  int truncated_count = 0;
  double truncation_tolerance = 0.0;
};

// Moore-Penrose pseudoinverse by SVD; singular values below rel_tol * sigma_max
// are treated as zero.
Eigen::MatrixXd pinv(const Eigen::MatrixXd& A, double rel_tol = 1e-8);

// P = I - Jc^+ Jc, built from the SVD null-space basis so that P is symmetric
// and idempotent to machine precision.
Eigen::MatrixXd constraint_projector(const Eigen::MatrixXd& Jc, double rel_tol = 1e-8);

// Backward finite difference over one control tick; callers pass a zero matrix
// for Pdot on the first tick or after a contact-set change.
Eigen::MatrixXd projector_derivative(const Eigen::MatrixXd& Jc_now, const Eigen::MatrixXd& Jc_prev,
                                     double dt, double rel_tol = 1e-8);

// Mc = P*M + I - P along with its inverse and Mbar = M*McInv. Throws if Mc is
// numerically singular (reports the condition number).
void constraint_inertia(const Eigen::MatrixXd& M, const Eigen::MatrixXd& P, Eigen::MatrixXd& Mc,
                        Eigen::MatrixXd& McInv, Eigen::MatrixXd& Mbar, double* condition = nullptr);

// Convenience assembly of the full ProjectionData for one tick.
ProjectionData make_projection(const Eigen::MatrixXd& Jc, const Eigen::MatrixXd& Jc_prev, double dt,
                               const Eigen::MatrixXd& M, bool first_tick, double rel_tol = 1e-8);

// Lambda = (Jx McInv P Jx^T)^+ with eigenvalues below trunc_tol * max dropped.
OperationalInertia operational_inertia(const Eigen::MatrixXd& Jx, const Eigen::MatrixXd& McInv,
                                       const Eigen::MatrixXd& P, double trunc_tol = 1e-6);

// qdd = McInv (tau_m - P h + Pdot qd + P Jx^T Fx); tau_m must already lie in motion space.
Eigen::VectorXd constrained_accel(const Eigen::MatrixXd& McInv, const Eigen::VectorXd& tau_m,
                                  const Eigen::MatrixXd& P, const Eigen::VectorXd& h,
                                  const Eigen::MatrixXd& Pdot, const Eigen::VectorXd& qd,
                                  const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx);

// Constraint forces for given motion/constraint torques and external task wrench.
Eigen::VectorXd constraint_force_map(const ProjectionData& proj, const Eigen::VectorXd& h,
                                     const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_m,
                                     const Eigen::VectorXd& tau_c, const Eigen::MatrixXd& Jx,
                                     const Eigen::VectorXd& Fx);

// ||x||^2 split into motion and constraint parts; both non-negative, summing to ||x||^2.
void seminorm_split(const Eigen::VectorXd& x, const Eigen::MatrixXd& P, double& motion_part,
                    double& constraint_part);

}  // namespace wbfc
