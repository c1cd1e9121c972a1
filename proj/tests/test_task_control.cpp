#include <doctest.h>

#include <random>

#include "test_util.hpp"
#include "wbfc/task_control.hpp"

using namespace wbfc;

namespace {

KinematicTree floating_box(double mass = 4.0, const Eigen::Vector3d& com = Eigen::Vector3d::Zero()) {
  nlohmann::json doc;
  doc["gravity"] = {0.0, 0.0, -9.81};
  doc["links"] = nlohmann::json::array({{{"name", "body"},
                                         {"mass_kg", mass},
                                         {"com_m", {com.x(), com.y(), com.z()}},
                                         {"inertia_kgm2",
                                          {{0.3, 0.0, 0.0}, {0.0, 0.35, 0.0}, {0.0, 0.0, 0.4}}}}});
  doc["joints"] = nlohmann::json::array({{{"name", "base"},
                                          {"type", "floating_base"},
                                          {"parent", "world"},
                                          {"child", "body"},
                                          {"origin_xyz_m", {0.0, 0.0, 0.0}}}});
  doc["frames"] = nlohmann::json::array(
      {{{"name", "body"}, {"parent", "body"}, {"offset_m", {0.0, 0.0, 0.0}}, {"kind", "spatial"}}});
  return build_model(doc);
}

GeneralizedState box_state() {
  GeneralizedState s;
  s.joint_positions.resize(0);
  s.joint_velocities.resize(0);
  return s;
}

ImpedanceTask torso_task_6d(double kp = 2000.0, double kd = 100.0) {
  ImpedanceTask task;
  task.frame = "torso";
  task.desired_velocity = Eigen::VectorXd::Zero(6);
  task.desired_acceleration = Eigen::VectorXd::Zero(6);
  task.Kp = kp * Eigen::MatrixXd::Identity(6, 6);
  task.Kd = kd * Eigen::MatrixXd::Identity(6, 6);
  return task;
}

struct StandingSetup {
  GeneralizedState state;
  ProjectionData proj;
  Eigen::VectorXd h;
  Eigen::VectorXd u;
  Eigen::MatrixXd Jx;
  Eigen::MatrixXd B;
};

StandingSetup standing_setup(const KinematicTree& model) {
  StandingSetup out;
  out.state.base_position = Eigen::Vector3d(0, 0, 0.57);
  out.state.joint_positions = Eigen::VectorXd::Zero(12);
  out.state.joint_velocities = Eigen::VectorXd::Zero(12);
  for (int leg = 0; leg < 4; ++leg) {
    out.state.joint_positions[3 * leg + 1] = 0.45;
    out.state.joint_positions[3 * leg + 2] = -0.9;
  }
  const Eigen::MatrixXd Jc = wbfc_test::contact_jacobian(model, out.state, wbfc_test::standing_contacts());
  const Eigen::MatrixXd M = mass_matrix(model, out.state);
  out.proj = make_projection(Jc, Jc, 1e-3, M, false);
  out.h = bias_forces(model, out.state);
  out.u = out.state.generalized_velocity(model);
  out.Jx = frame_kinematics(model, out.state, "torso").jacobian;
  out.B = Eigen::MatrixXd::Zero(model.nv(), 12);
  out.B.bottomRows(12).setIdentity();
  return out;
}

}  // namespace

TEST_CASE("pose error: identity, translation, yaw") {
  const Eigen::Isometry3d identity = Eigen::Isometry3d::Identity();
  CHECK(pose_error(identity, identity).cwiseAbs().maxCoeff() == 0.0);

  Eigen::Isometry3d lifted = identity;
  lifted.translation() = Eigen::Vector3d(0, 0, 0.1);
  const auto e = pose_error(lifted, identity);
  CHECK((e - (Eigen::Matrix<double, 6, 1>() << 0, 0, 0.1, 0, 0, 0).finished()).cwiseAbs().maxCoeff() <
        1e-12);

  Eigen::Isometry3d yawed = identity;
  yawed.linear() = Eigen::AngleAxisd(M_PI / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const auto e_yaw = pose_error(yawed, identity);
  CHECK(e_yaw.head<3>().cwiseAbs().maxCoeff() < 1e-12);
  CHECK((e_yaw.tail<3>() - Eigen::Vector3d(0, 0, M_PI / 2)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("operational bias reduces to the gravity wrench at rest") {
  const KinematicTree model = floating_box(4.0, Eigen::Vector3d(0.05, -0.02, 0.1));
  const GeneralizedState s = box_state();
  const Eigen::MatrixXd M = mass_matrix(model, s);
  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(6, 6);
  Eigen::MatrixXd Mc, McInv, Mbar;
  constraint_inertia(M, P, Mc, McInv, Mbar);
  const FrameKinematics fk = frame_kinematics(model, s, "body");
  const OperationalInertia oi = operational_inertia(fk.jacobian, McInv, P, 1e-8);
  const Eigen::VectorXd h = bias_forces(model, s);
  const Eigen::VectorXd h_c = operational_bias(oi.Lambda, fk.jacobian, McInv, P, h,
                                               Eigen::MatrixXd::Zero(6, 6),
                                               s.generalized_velocity(model), fk.drift);
  CHECK((h_c - h).cwiseAbs().maxCoeff() < 1e-8);

  // No gravity, no velocity: no nonlinear effects at all.
  nlohmann::json doc = wbfc_test::quadruped_doc();
  doc["gravity"] = {0.0, 0.0, 0.0};
  const KinematicTree weightless = build_model(doc);
  GeneralizedState qs;
  qs.joint_positions = Eigen::VectorXd::Zero(12);
  qs.joint_velocities = Eigen::VectorXd::Zero(12);
  const Eigen::MatrixXd Mq = mass_matrix(weightless, qs);
  const Eigen::MatrixXd Jc = wbfc_test::contact_jacobian(weightless, qs, wbfc_test::standing_contacts());
  const ProjectionData proj = make_projection(Jc, Jc, 1e-3, Mq, false);
  const FrameKinematics fkq = frame_kinematics(weightless, qs, "torso");
  const OperationalInertia oiq = operational_inertia(fkq.jacobian, proj.McInv, proj.P, 1e-6);
  const Eigen::VectorXd h_cq =
      operational_bias(oiq.Lambda, fkq.jacobian, proj.McInv, proj.P, bias_forces(weightless, qs),
                       proj.Pdot, qs.generalized_velocity(weightless), fkq.drift);
  CHECK(h_cq.cwiseAbs().maxCoeff() < 1e-10);

  // Random state: finite output even with truncation in play.
  std::mt19937_64 rng(5);
  const KinematicTree& quad = wbfc_test::quadruped();
  const GeneralizedState rs = wbfc_test::random_state(quad, rng);
  const Eigen::MatrixXd Jcr = wbfc_test::contact_jacobian(quad, rs, wbfc_test::standing_contacts());
  const ProjectionData pr = make_projection(Jcr, Jcr, 1e-3, mass_matrix(quad, rs), false);
  const FrameKinematics fkr = frame_kinematics(quad, rs, "torso");
  const OperationalInertia oir = operational_inertia(fkr.jacobian, pr.McInv, pr.P, 1e-6);
  const Eigen::VectorXd h_cr =
      operational_bias(oir.Lambda, fkr.jacobian, pr.McInv, pr.P, bias_forces(quad, rs), pr.Pdot,
                       rs.generalized_velocity(quad), fkr.drift);
  CHECK(h_cr.allFinite());
}

TEST_CASE("impedance wrench: equilibrium, stiffness arithmetic, affinity") {
  ImpedanceTask task = torso_task_6d();
  const Eigen::MatrixXd Lambda = 3.0 * Eigen::MatrixXd::Identity(6, 6);
  Eigen::VectorXd h_c(6);
  h_c << 1, 2, 3, 4, 5, 6;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
  CHECK((impedance_wrench(task, Lambda, h_c, zero, zero) - h_c).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd e = zero;
  e(2) = 0.01;
  const Eigen::VectorXd F = impedance_wrench(task, Lambda, zero, e, zero);
  CHECK(F(2) == doctest::Approx(-20.0).epsilon(1e-12));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd e1(6), e2(6), d1(6), d2(6);
  for (int i = 0; i < 6; ++i) {
    e1(i) = gauss(rng);
    e2(i) = gauss(rng);
    d1(i) = gauss(rng);
    d2(i) = gauss(rng);
  }
  const Eigen::VectorXd sum = impedance_wrench(task, Lambda, h_c, e1 + e2, d1 + d2);
  const Eigen::VectorXd parts = impedance_wrench(task, Lambda, h_c, e1, d1) +
                                impedance_wrench(task, Lambda, h_c, e2, d2) - h_c;
  CHECK((sum - parts).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("closed-loop impedance on a free body follows the target dynamics") {
  const KinematicTree model = floating_box(4.0);
  GeneralizedState s = box_state();
  s.base_position = Eigen::Vector3d(0.01, 0, 0);  // 1 cm step in x

  ImpedanceTask task = torso_task_6d(400.0, 30.0);
  task.desired_pose = Eigen::Isometry3d::Identity();

  const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(6, 6);
  const double dt = 1e-3;

  // Reference: Lambda e_dd + Kd e_d + Kp e = 0 integrated the same way.
  const Eigen::MatrixXd M0 = mass_matrix(model, s);
  double e_ref = 0.01, ed_ref = 0.0;
  const double lam = M0(0, 0);

  double max_diff = 0.0;
  for (int k = 0; k < 800; ++k) {
    const Eigen::MatrixXd M = mass_matrix(model, s);
    Eigen::MatrixXd Mc, McInv, Mbar;
    constraint_inertia(M, P, Mc, McInv, Mbar);
    const FrameKinematics fk = frame_kinematics(model, s, "body");
    const OperationalInertia oi = operational_inertia(fk.jacobian, McInv, P, 1e-8);
    const Eigen::VectorXd u = s.generalized_velocity(model);
    const Eigen::VectorXd h = bias_forces(model, s);
    const Eigen::VectorXd h_c =
        operational_bias(oi.Lambda, fk.jacobian, McInv, P, h, Eigen::MatrixXd::Zero(6, 6), u, fk.drift);
    const Eigen::VectorXd e = pose_error(fk.pose, task.desired_pose);
    const Eigen::VectorXd edot = fk.jacobian * u;
    const Eigen::VectorXd F = impedance_wrench(task, oi.Lambda, h_c, e, edot);

    // Fully actuated body: apply the task wrench directly.
    const Eigen::VectorXd qdd = M.ldlt().solve(fk.jacobian.transpose() * F - h);
    const Eigen::VectorXd u_next = u + qdd * dt;
    s = integrate_positions(model, s, u_next, dt);

    const double edd = (-30.0 * ed_ref - 400.0 * e_ref) / lam;
    ed_ref += edd * dt;
    e_ref += ed_ref * dt;
    max_diff = std::max(max_diff, std::abs(s.base_position.x() - e_ref));
  }
  CHECK(max_diff < 0.02 * 0.01);  // 2% of the initial step
}

TEST_CASE("desired motion torque lies in motion space") {
  const KinematicTree& model = wbfc_test::quadruped();
  const StandingSetup su = standing_setup(model);

  CHECK(motion_torque_desired(su.proj.P, su.Jx, Eigen::VectorXd::Zero(6)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(model.nv(), model.nv());
  Eigen::VectorXd F(6);
  F << 1, -2, 3, 0.5, -0.5, 2;
  CHECK((motion_torque_desired(I, su.Jx, F) - su.Jx.transpose() * F).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::VectorXd tau_md = motion_torque_desired(su.proj.P, su.Jx, F);
  CHECK((su.proj.P * tau_md - tau_md).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("constraint torque law: implicit-force consistency and formula reduction") {
  const KinematicTree& model = wbfc_test::quadruped();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int trial = 0; trial < 20; ++trial) {
    const GeneralizedState s = wbfc_test::random_state(model, rng, 0.4, 0.5);
    const Eigen::MatrixXd Jc = wbfc_test::contact_jacobian(model, s, wbfc_test::standing_contacts());
    const Eigen::MatrixXd M = mass_matrix(model, s);
    const ProjectionData proj = make_projection(Jc, Jc, 1e-3, M, false);
    const Eigen::VectorXd h = bias_forces(model, s);
    const Eigen::VectorXd u = s.generalized_velocity(model);
    const Eigen::MatrixXd Jx = frame_kinematics(model, s, "torso").jacobian;
    Eigen::VectorXd tau_md(model.nv()), Fx(6);
    for (int i = 0; i < model.nv(); ++i) tau_md(i) = gauss(rng);
    for (int i = 0; i < 6; ++i) Fx(i) = gauss(rng);
    tau_md = proj.P * tau_md;

    const Eigen::VectorXd lambda_implicit = implicit_contact_force(proj, h, u, tau_md, Jx, Fx);
    const Eigen::VectorXd tau_cd =
        constraint_torque_desired(proj, h, u, tau_md, Jx, Fx, lambda_implicit);
    CHECK(tau_cd.cwiseAbs().maxCoeff() < 1e-8);

    Eigen::VectorXd lambda_rand(12);
    for (int i = 0; i < 12; ++i) lambda_rand(i) = gauss(rng);
    const Eigen::VectorXd tau_rand = constraint_torque_desired(proj, h, u, tau_md, Jx, Fx, lambda_rand);
    CHECK((proj.P * tau_rand).cwiseAbs().maxCoeff() < 1e-8);
  }

  // All dynamic terms zero: the law reduces to -Jc^T lambda_d.
  GeneralizedState s;
  s.base_position = Eigen::Vector3d(0, 0, 0.57);
  s.joint_positions = Eigen::VectorXd::Zero(12);
  s.joint_velocities = Eigen::VectorXd::Zero(12);
  for (int leg = 0; leg < 4; ++leg) {
    s.joint_positions[3 * leg + 1] = 0.45;
    s.joint_positions[3 * leg + 2] = -0.9;
  }
  const Eigen::MatrixXd Jc = wbfc_test::contact_jacobian(model, s, wbfc_test::standing_contacts());
  const Eigen::MatrixXd M = mass_matrix(model, s);
  ProjectionData proj = make_projection(Jc, Jc, 1e-3, M, false);
  Eigen::VectorXd lambda_d = Eigen::VectorXd::Zero(12);
  lambda_d(2) = 100.0;
  const int nv = model.nv();
  const Eigen::VectorXd tau_cd = constraint_torque_desired(
      proj, Eigen::VectorXd::Zero(nv), Eigen::VectorXd::Zero(nv), Eigen::VectorXd::Zero(nv),
      Eigen::MatrixXd::Zero(6, nv), Eigen::VectorXd::Zero(6), lambda_d);
  CHECK((tau_cd + Jc.transpose() * lambda_d).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("external force estimate: zero and spring balance") {
  const Eigen::MatrixXd Kp = 2000.0 * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::MatrixXd Kd = 100.0 * Eigen::MatrixXd::Identity(6, 6);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(6);
  CHECK(external_force_estimate(zero, zero, Kp, Kd).cwiseAbs().maxCoeff() == 0.0);

  Eigen::VectorXd e = zero;
  e(0) = 0.005;
  const Eigen::VectorXd F = external_force_estimate(e, zero, Kp, Kd);
  CHECK(F(0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(F.tail<5>().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("implicit contact force balances the weight when holding the pose") {
  const KinematicTree& model = wbfc_test::quadruped();
  const StandingSetup su = standing_setup(model);
  const Eigen::MatrixXd& Jc = su.proj.Jc;

  // Holding torque at zero tracking error: tau_md = P h.
  const Eigen::VectorXd tau_md = su.proj.P * su.h;
  const Eigen::VectorXd lambda =
      implicit_contact_force(su.proj, su.h, su.u, tau_md, su.Jx, Eigen::VectorXd::Zero(6));
  double sum_z = 0.0;
  for (int i = 0; i < 4; ++i) sum_z += lambda(3 * i + 2);
  // Exact: Jc^T lambda = (I - P) h, so the vertical sum is the weight minus the
  // base-vertical part of the motion-space torque.
  const double weight = model.total_mass() * 9.81;
  CHECK(sum_z == doctest::Approx(weight - (su.proj.P * su.h)(2)).epsilon(1e-10));
  CHECK(std::abs(sum_z - weight) < 0.01 * weight);

  // Literal evaluation with zero motion torque.
  const int nv = model.nv();
  const Eigen::MatrixXd IP = Eigen::MatrixXd::Identity(nv, nv) - su.proj.P;
  const Eigen::VectorXd literal =
      pinv(Jc.transpose(), 1e-8) * (IP * (su.proj.Mbar * (-su.proj.P * su.h) + su.h));
  const Eigen::VectorXd via_op = implicit_contact_force(
      su.proj, su.h, su.u, Eigen::VectorXd::Zero(nv), su.Jx, Eigen::VectorXd::Zero(6));
  CHECK((literal - via_op).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("impedance task validation rejects non-SPD gains") {
  ImpedanceTask task = torso_task_6d();
  task.desired_pose = Eigen::Isometry3d::Identity();
  task.Kp(0, 0) = -1.0;
  CHECK_THROWS_AS(task.validate(), std::invalid_argument);
}
