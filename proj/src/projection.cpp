#include "wbfc/projection.hpp"

#include <limits>
#include <stdexcept>

namespace wbfc {

Eigen::MatrixXd pinv(const Eigen::MatrixXd& A, double rel_tol) {
  if (A.size() == 0) return Eigen::MatrixXd::Zero(A.cols(), A.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = rel_tol * (sv.size() > 0 ? sv(0) : 0.0);
  Eigen::VectorXd inv_sv = Eigen::VectorXd::Zero(sv.size());
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff && sv(i) > 0.0) inv_sv(i) = 1.0 / sv(i);
  return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd constraint_projector(const Eigen::MatrixXd& Jc, double rel_tol) {
  const int n = static_cast<int>(Jc.cols());
  if (Jc.rows() == 0 || Jc.isZero(0.0)) return Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Jc, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = rel_tol * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > cutoff) ++rank;
  const Eigen::MatrixXd Vr = svd.matrixV().leftCols(rank);  // row space of Jc
  return Eigen::MatrixXd::Identity(n, n) - Vr * Vr.transpose();
}

Eigen::MatrixXd projector_derivative(const Eigen::MatrixXd& Jc_now, const Eigen::MatrixXd& Jc_prev,
                                     double dt, double rel_tol) {
  if (Jc_now.rows() != Jc_prev.rows() || Jc_now.cols() != Jc_prev.cols())
    throw std::runtime_error("projector_derivative: Jacobian shape mismatch");
  if (!(dt > 0.0)) throw std::runtime_error("projector_derivative: dt must be positive");
  return (constraint_projector(Jc_now, rel_tol) - constraint_projector(Jc_prev, rel_tol)) / dt;
}

void constraint_inertia(const Eigen::MatrixXd& M, const Eigen::MatrixXd& P, Eigen::MatrixXd& Mc,
                        Eigen::MatrixXd& McInv, Eigen::MatrixXd& Mbar, double* condition) {
  const int n = static_cast<int>(M.rows());
  Mc = P * M + Eigen::MatrixXd::Identity(n, n) - P;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Mc);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (condition) *condition = cond;
  if (!(smin > smax * 1e-14)) {
    throw std::runtime_error("constraint_inertia: Mc numerically singular, condition number " +
                             std::to_string(cond));
  }
  McInv = Eigen::PartialPivLU<Eigen::MatrixXd>(Mc).inverse();
  Mbar = M * McInv;
}

ProjectionData make_projection(const Eigen::MatrixXd& Jc, const Eigen::MatrixXd& Jc_prev, double dt,
                               const Eigen::MatrixXd& M, bool first_tick, double rel_tol) {
  ProjectionData data;
  data.Jc = Jc;
  data.pinv_tolerance = rel_tol;
  data.P = constraint_projector(Jc, rel_tol);
  data.Pdot = first_tick ? Eigen::MatrixXd::Zero(data.P.rows(), data.P.cols())
                         : projector_derivative(Jc, Jc_prev, dt, rel_tol);
  constraint_inertia(M, data.P, data.Mc, data.McInv, data.Mbar, &data.condition_number);
  return data;
}

OperationalInertia operational_inertia(const Eigen::MatrixXd& Jx, const Eigen::MatrixXd& McInv,
                                       const Eigen::MatrixXd& P, double trunc_tol) {
  Eigen::MatrixXd A = Jx * McInv * P * Jx.transpose();
  A = 0.5 * (A + A.transpose());  // McInv*P is symmetric; clean up roundoff
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const Eigen::VectorXd& ev = es.eigenvalues();
  // The unprojected operator sets the scale so that a fully-projected-out task
  // (A = roundoff) truncates entirely.
  const double ref = (Jx * McInv * Jx.transpose()).cwiseAbs().maxCoeff();
  const double cutoff = trunc_tol * std::max(ev.cwiseAbs().maxCoeff(), 1e-6 * ref);

  OperationalInertia out;
  out.truncation_tolerance = trunc_tol;
  Eigen::VectorXd inv_ev = Eigen::VectorXd::Zero(ev.size());
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > cutoff) {
      inv_ev(i) = 1.0 / ev(i);
    } else {
      ++out.truncated_count;
    }
  }
  out.Lambda = es.eigenvectors() * inv_ev.asDiagonal() * es.eigenvectors().transpose();
  return out;
}

Eigen::VectorXd constrained_accel(const Eigen::MatrixXd& McInv, const Eigen::VectorXd& tau_m,
                                  const Eigen::MatrixXd& P, const Eigen::VectorXd& h,
                                  const Eigen::MatrixXd& Pdot, const Eigen::VectorXd& qd,
                                  const Eigen::MatrixXd& Jx, const Eigen::VectorXd& Fx) {
  return McInv * (tau_m - P * h + Pdot * qd + P * Jx.transpose() * Fx);
}

Eigen::VectorXd constraint_force_map(const ProjectionData& proj, const Eigen::VectorXd& h,
                                     const Eigen::VectorXd& qd, const Eigen::VectorXd& tau_m,
                                     const Eigen::VectorXd& tau_c, const Eigen::MatrixXd& Jx,
                                     const Eigen::VectorXd& Fx) {
  const int n = static_cast<int>(proj.P.rows());
  const Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(n, n) - proj.P;
  const Eigen::VectorXd inner = proj.Mbar * (tau_m - proj.P * h + proj.Pdot * qd) + h;
  const Eigen::VectorXd rhs =
      IP * inner - tau_c + IP * (proj.Mbar * proj.P - Eigen::MatrixXd::Identity(n, n)) * Jx.transpose() * Fx;
  return pinv(proj.Jc.transpose(), proj.pinv_tolerance) * rhs;
}

void seminorm_split(const Eigen::VectorXd& x, const Eigen::MatrixXd& P, double& motion_part,
                    double& constraint_part) {
  const Eigen::VectorXd px = P * x;
  motion_part = px.squaredNorm();
  constraint_part = (x - px).squaredNorm();
}

}  // namespace wbfc
