#include "wbfc/task_control.hpp"

#include <stdexcept>

namespace wbfc {
namespace {

void check_spd(const Eigen::MatrixXd& K, const char* name) {
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument(std::string("ImpedanceTask: ") + name + " not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw std::invalid_argument(std::string("ImpedanceTask: ") + name + " not positive definite");
}

}  // namespace

void ImpedanceTask::validate() const {
  if (Kp.rows() != Kp.cols() || Kd.rows() != Kd.cols() || Kp.rows() != Kd.rows())
    throw std::invalid_argument("ImpedanceTask: gain shape mismatch");
  check_spd(Kp, "Kp");
  check_spd(Kd, "Kd");
  if (desired_velocity.size() != dim() || desired_acceleration.size() != dim())
    throw std::invalid_argument("ImpedanceTask: reference dimension mismatch");
}

Eigen::Matrix<double, 6, 1> pose_error(const Eigen::Isometry3d& current, const Eigen::Isometry3d& desired) {
  Eigen::Matrix<double, 6, 1> e;
  e.head<3>() = current.translation() - desired.translation();
  const Eigen::AngleAxisd aa(desired.linear().transpose() * current.linear());
  e.tail<3>() = desired.linear() * (aa.angle() * aa.axis());
  return e;
}

Eigen::VectorXd operational_bias(const Eigen::MatrixXd& Lambda, const Eigen::MatrixXd& Jx,
                                 const Eigen::MatrixXd& McInv, const Eigen::MatrixXd& P,
                                 const Eigen::VectorXd& h, const Eigen::MatrixXd& Pdot,
                                 const Eigen::VectorXd& qd, const Eigen::VectorXd& Jdot_qd) {
  return Lambda * (Jx * (McInv * (P * h - Pdot * qd))) - Lambda * Jdot_qd;
}

Eigen::VectorXd impedance_wrench(const ImpedanceTask& task, const Eigen::MatrixXd& Lambda,
                                 const Eigen::VectorXd& h_c, const Eigen::VectorXd& e,
                                 const Eigen::VectorXd& edot) {
  return h_c + Lambda * task.desired_acceleration - task.Kd * edot - task.Kp * e;
}

Eigen::VectorXd motion_torque_desired(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Jx,
                                      const Eigen::VectorXd& F_dx) {
  return P * (Jx.transpose() * F_dx);
}

Eigen::VectorXd constraint_torque_desired(const ProjectionData& proj, const Eigen::VectorXd& h,
                                          const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_md,
                                          const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx,
                                          const Eigen::VectorXd& lambda_d) {
  const int n = static_cast<int>(proj.P.rows());
  const Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(n, n) - proj.P;
  const Eigen::VectorXd inner =
      proj.Mbar * (tau_md - proj.P * h + proj.Pdot * qd + proj.P * Jx.transpose() * Fx) + h;
  return IP * inner - IP * Jx.transpose() * Fx - proj.Jc.transpose() * lambda_d;
}

Eigen::VectorXd external_force_estimate(const Eigen::VectorXd& e, const Eigen::VectorXd& edot,
                                        const Eigen::MatrixXd& Kp, const Eigen::MatrixXd& Kd) {
  return Kd * edot + Kp * e;
}

Eigen::VectorXd implicit_contact_force(const ProjectionData& proj, const Eigen::VectorXd& h,
                                       const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_md,
                                       const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx) {
  const int n = static_cast<int>(proj.P.rows());
  const Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(n, n) - proj.P;
  const Eigen::VectorXd inner =
      proj.Mbar * (tau_md - proj.P * h + proj.Pdot * qd + proj.P * Jx.transpose() * Fx) + h;
  return pinv(proj.Jc.transpose(), proj.pinv_tolerance) * (IP * (inner - Jx.transpose() * Fx));
}

}  // namespace wbfc
