#include "wbfc/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace wbfc {
namespace {

Eigen::Matrix3d rpy_to_rotation(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

std::vector<std::string> point_frames(const KinematicTree& model) {
  std::vector<std::string> out;
  for (const auto& f : model.frames())
    if (!f.spatial) out.push_back(f.name);
  return out;
}

std::string spatial_frame(const KinematicTree& model) {
  std::string found;
  for (const auto& f : model.frames()) {
    if (f.spatial) {
      if (!found.empty()) throw std::runtime_error("model must define exactly one spatial frame");
      found = f.name;
    }
  }
  if (found.empty()) throw std::runtime_error("model defines no spatial (torso) frame");
  return found;
}

void format_field(char* buf, size_t size, double v) { std::snprintf(buf, size, "%.17g", v); }

}  // namespace

Eigen::Vector3d profile_eval(const ForceProfile& profile, double t) {
  switch (profile.kind) {
    case ForceProfile::Kind::Sinewave:
      return profile.offset + (profile.amplitude.array() * (profile.omega.array() * t).sin()).matrix();
    case ForceProfile::Kind::Constant:
      return profile.constant;
    case ForceProfile::Kind::Implicit:
      return Eigen::Vector3d::Zero();
    case ForceProfile::Kind::Step: {
      Eigen::Vector3d v = Eigen::Vector3d::Zero();
      for (int a = 0; a < 3; ++a) {
        const auto& knots = profile.schedule[a];
        double value = knots.front().second;
        for (const auto& [time, knot_value] : knots) {
          if (time <= t) value = knot_value;
        }
        v(a) = value;
      }
      return v;
    }
  }
  return Eigen::Vector3d::Zero();
}

SimStepResult sim_step(const KinematicTree& model, const GeneralizedState& state,
                       const Eigen::VectorXd& tau, std::vector<SimContact>& contacts,
                       const SimConfig& config, const Eigen::VectorXd& tau_limit,
                       const Eigen::VectorXd* external_force) {
  state.validate(model);
  const int nv = model.nv();
  const int nj = model.n_joints();
  if (tau.size() != nj) throw std::runtime_error("sim_step: torque size mismatch");

  SimStepResult result;
  Eigen::VectorXd tau_applied = tau;
  if (nj > 0 && tau_limit.size() == nj) {
    const Eigen::VectorXd clamped = tau.cwiseMax(-tau_limit).cwiseMin(tau_limit);
    result.torque_clamped = (clamped - tau).cwiseAbs().maxCoeff() > 0.0;
    tau_applied = clamped;
  }

  const Eigen::MatrixXd M = mass_matrix(model, state);
  const Eigen::VectorXd h = bias_forces(model, state);
  const Eigen::VectorXd u = state.generalized_velocity(model);
  Eigen::VectorXd gen_force = Eigen::VectorXd::Zero(nv);
  gen_force.tail(nj) = tau_applied;
  if (external_force) {
    if (external_force->size() != nv) throw std::runtime_error("sim_step: external force size mismatch");
    gen_force += *external_force;
  }

  result.lambda = Eigen::VectorXd::Zero(3 * contacts.size());

  // A released foot that comes back to the ground while descending regains its
  // contact, anchored where it lands.
  for (size_t i = 0; i < contacts.size(); ++i) {
    if (contacts[i].active) continue;
    const FrameKinematics fk = frame_kinematics(model, state, contacts[i].frame);
    const double height = fk.pose.translation().z() - config.ground_height;
    const double vz = (fk.jacobian.topRows(3) * u)(2);
    if (height <= 0.0 && vz < 0.0) {
      contacts[i].active = true;
      contacts[i].anchor = fk.pose.translation();
      contacts[i].anchor.z() = config.ground_height;
      result.touched_down.push_back(static_cast<int>(i));
    }
  }

  Eigen::VectorXd qdd(nv);
  while (true) {
    std::vector<int> active;
    for (size_t i = 0; i < contacts.size(); ++i)
      if (contacts[i].active) active.push_back(static_cast<int>(i));
    const int k = static_cast<int>(active.size());

    Eigen::VectorXd lambda_active;
    if (k == 0) {
      qdd = Eigen::PartialPivLU<Eigen::MatrixXd>(M).solve(gen_force - h);
    } else {
      Eigen::MatrixXd J(3 * k, nv);
      Eigen::VectorXd drift(3 * k), phi(3 * k);
      for (int a = 0; a < k; ++a) {
        const FrameKinematics fk = frame_kinematics(model, state, contacts[active[a]].frame);
        J.middleRows(3 * a, 3) = fk.jacobian.topRows(3);
        drift.segment<3>(3 * a) = fk.drift.head(3);
        phi.segment<3>(3 * a) = fk.pose.translation() - contacts[active[a]].anchor;
      }
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + 3 * k, nv + 3 * k);
      kkt.topLeftCorner(nv, nv) = M;
      kkt.topRightCorner(nv, 3 * k) = -J.transpose();
      kkt.bottomLeftCorner(3 * k, nv) = J;
      Eigen::VectorXd rhs(nv + 3 * k);
      rhs.head(nv) = gen_force - h;
      rhs.tail(3 * k) = -drift - 2.0 * config.baumgarte_alpha * (J * u) -
                        config.baumgarte_beta * config.baumgarte_beta * phi;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
      if (lu.rcond() < 1e-14)
        throw std::runtime_error("sim_step: singular contact KKT system, reciprocal condition " +
                                 std::to_string(lu.rcond()));
      const Eigen::VectorXd sol = lu.solve(rhs);
      qdd = sol.head(nv);
      lambda_active = sol.tail(3 * k);
    }

    // Unilateral handling: contacts pulled beyond the release threshold drop out
    // and the step is re-solved without them.
    bool released_any = false;
    for (int a = 0; a < k; ++a) {
      if (lambda_active(3 * a + 2) < -config.release_threshold) {
        contacts[active[a]].active = false;
        result.released.push_back(active[a]);
        released_any = true;
      }
    }
    if (released_any) continue;

    for (int a = 0; a < k; ++a) result.lambda.segment<3>(3 * active[a]) = lambda_active.segment<3>(3 * a);
    break;
  }

  const Eigen::VectorXd u_next = u + qdd * config.timestep;
  result.next = integrate_positions(model, state, u_next, config.timestep);
  return result;
}

ContactSet scenario_contacts(const KinematicTree& model, const Scenario& scenario) {
  ContactSet set;
  bool found_force = false;
  for (const auto& frame : point_frames(model)) {
    Contact c;
    c.frame = frame;
    c.mu = scenario.friction_coefficient;
    c.role = frame == scenario.force_foot ? ContactRole::Force : ContactRole::Motion;
    found_force |= c.role == ContactRole::Force;
    set.contacts.push_back(c);
  }
  if (!found_force)
    throw std::runtime_error("scenario: field 'force_foot' does not name a foot frame of the model");
  set.validate();
  return set;
}

ImpedanceTask torso_task(const KinematicTree& model, const Scenario& scenario) {
  ImpedanceTask task;
  task.frame = spatial_frame(model);
  task.desired_pose = scenario.desired_pose();
  task.desired_velocity = Eigen::VectorXd::Zero(6);
  task.desired_acceleration = Eigen::VectorXd::Zero(6);
  task.Kp = Eigen::MatrixXd::Zero(6, 6);
  task.Kp.topLeftCorner(3, 3) = scenario.kp_linear * Eigen::Matrix3d::Identity();
  task.Kp.bottomRightCorner(3, 3) = scenario.kp_angular * Eigen::Matrix3d::Identity();
  task.Kd = Eigen::MatrixXd::Zero(6, 6);
  task.Kd.topLeftCorner(3, 3) = scenario.kd_linear * Eigen::Matrix3d::Identity();
  task.Kd.bottomRightCorner(3, 3) = scenario.kd_angular * Eigen::Matrix3d::Identity();
  return task;
}

GeneralizedState standing_state(const KinematicTree& model, const Scenario& scenario) {
  GeneralizedState state;
  state.base_position = scenario.desired_base_position;
  state.base_orientation = Eigen::Quaterniond(rpy_to_rotation(scenario.desired_base_rpy));
  state.joint_positions = Eigen::VectorXd::Zero(model.n_joints());
  state.joint_velocities = Eigen::VectorXd::Zero(model.n_joints());

  for (const auto& frame : point_frames(model)) {
    const std::vector<int> chain = model.joints_on_path(frame);
    if (chain.size() != 3) throw std::runtime_error("standing_state: expected 3-joint legs");

    Eigen::Vector3d target = frame_kinematics(model, state, frame).pose.translation();
    target.z() = scenario.sim.ground_height;

    // X-configuration seed: hind knees bend the opposite way, keeping the
    // stance fore-aft symmetric (gravity then projects onto the motion space
    // without lateral content).
    const bool hind = frame_kinematics(model, state, frame).pose.translation().x() <
                      state.base_position.x();
    state.joint_positions[chain[1]] = hind ? -0.4 : 0.4;
    state.joint_positions[chain[2]] = hind ? 0.8 : -0.8;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
      const FrameKinematics fk = frame_kinematics(model, state, frame);
      const Eigen::Vector3d err = fk.pose.translation() - target;
      if (err.norm() < 1e-12) {
        converged = true;
        break;
      }
      Eigen::Matrix3d J;
      for (int c = 0; c < 3; ++c) J.col(c) = fk.jacobian.col(model.base_dof_offset() + chain[c]).head<3>();
      const Eigen::Vector3d dq = J.fullPivLu().solve(err);
      for (int c = 0; c < 3; ++c) state.joint_positions[chain[c]] -= dq(c);
    }
    if (!converged)
      throw std::runtime_error("standing_state: leg placement did not converge for '" + frame + "'");
  }
  return state;
}

SimulationLog run_experiment(const KinematicTree& model, const Scenario& scenario, ControllerKind kind) {
  scenario.validate();
  const GeneralizedState initial = standing_state(model, scenario);

  ContactSet contact_set = scenario_contacts(model, scenario);
  ControllerConfig config;
  config.torque_limit = scenario.torque_limit;
  config.control_dt = scenario.sim.timestep;
  config.estimate_external_force = scenario.external_force_estimation;
  config.use_implicit_desired_force = scenario.profile.kind == ForceProfile::Kind::Implicit;
  WholeBodyController controller(&model, kind, config, contact_set, {torso_task(model, scenario)});

  SimulationLog log;
  log.timestep = scenario.sim.timestep;
  log.weight = model.total_mass() * model.gravity().norm();
  std::vector<SimContact> sim_contacts;
  for (int i = 0; i < contact_set.size(); ++i) {
    const auto& frame = contact_set.contacts[i].frame;
    log.contact_frames.push_back(frame);
    if (contact_set.contacts[i].role == ContactRole::Force) log.force_contact = i;
    SimContact sc;
    sc.frame = frame;
    sc.anchor = frame_kinematics(model, initial, frame).pose.translation();
    sim_contacts.push_back(sc);
  }

  const int n_ticks = static_cast<int>(std::llround(scenario.sim.duration / scenario.sim.timestep));
  const Eigen::VectorXd tau_limit = Eigen::VectorXd::Constant(model.n_joints(), scenario.torque_limit);

  GeneralizedState state = initial;
  log.ticks.reserve(n_ticks);
  for (int tick = 0; tick < n_ticks; ++tick) {
    const double t = tick * scenario.sim.timestep;
    const Eigen::Vector3d lambda_d = profile_eval(scenario.profile, t);

    Eigen::VectorXd lambda_desired(3 * controller.contacts().n_force());
    for (int seg = 0; seg < controller.contacts().n_force(); ++seg)
      lambda_desired.segment<3>(3 * seg) = lambda_d;

    // A controller that drops or launches the torso has lost the experiment;
    // stop instead of integrating a tumbling robot.
    if (state.base_position.z() < 0.5 * scenario.desired_base_position.z() ||
        (state.base_position - scenario.desired_base_position).norm() > 1.0) {
      log.failure = "robot fell at t=" + std::to_string(t);
      break;
    }

    TorqueCommand cmd;
    SimStepResult step;
    try {
      cmd = controller.tick(state, lambda_desired);
      step = sim_step(model, state, cmd.tau, sim_contacts, scenario.sim, tau_limit);
    } catch (const std::exception& e) {
      log.failure = e.what();
      break;
    }

    TickRecord rec;
    rec.t = t;
    rec.lambda_measured = step.lambda;
    rec.lambda_desired = lambda_d;
    if (log.force_contact >= 0 && cmd.lambda_desired_used.size() == 3 * contact_set.size())
      rec.lambda_desired = cmd.lambda_desired_used.segment<3>(3 * log.force_contact);
    rec.base_position = state.base_position;
    rec.base_rpy = quaternion_to_rpy(state.base_orientation);
    rec.base_twist = state.base_twist;
    rec.tau = cmd.tau;
    rec.fallback = cmd.fallback;
    if (cmd.has_qp) {
      rec.qp1_status = to_string(cmd.qp1_status);
      rec.qp2_status = to_string(cmd.qp2_status);
    }
    rec.qp_cone_violation = cmd.qp_cone_violation;
    rec.torque_limit_violated = (cmd.tau.cwiseAbs().array() > scenario.torque_limit + 1e-6).any();
    for (int i = 0; i < contact_set.size(); ++i) {
      if (!sim_contacts[i].active) continue;
      Eigen::Matrix<double, 5, 3> C;
      Eigen::Matrix<double, 5, 1> lo, hi;
      friction_pyramid_rows(contact_set.contacts[i], C, lo, hi);
      const Eigen::Matrix<double, 5, 1> v = C * step.lambda.segment<3>(3 * i);
      for (int r = 0; r < 5; ++r) {
        if (lo(r) > -kInfinityBound)
          rec.measured_cone_violation = std::max(rec.measured_cone_violation, lo(r) - v(r));
        if (hi(r) < kInfinityBound)
          rec.measured_cone_violation = std::max(rec.measured_cone_violation, v(r) - hi(r));
      }
    }
    log.ticks.push_back(std::move(rec));

    if (!step.released.empty() || !step.touched_down.empty()) {
      for (int i : step.released) log.releases.emplace_back(tick, contact_set.contacts[i].frame);
      for (int i : step.touched_down)
        log.touchdowns.emplace_back(tick, contact_set.contacts[i].frame);
      ContactSet active_set;
      for (int i = 0; i < contact_set.size(); ++i)
        if (sim_contacts[i].active) active_set.contacts.push_back(contact_set.contacts[i]);
      controller.set_contacts(active_set);
    }
    state = step.next;
  }
  return log;
}

std::pair<QPProblem, QPProblem> capture_qp_problems(const KinematicTree& model,
                                                    const Scenario& scenario, ControllerKind kind,
                                                    int tick) {
  if (kind == ControllerKind::Pidcwcu)
    throw std::runtime_error("dump-qp: the pidcwcu controller solves no QPs");
  const int n_ticks = static_cast<int>(std::llround(scenario.sim.duration / scenario.sim.timestep));
  if (tick < 0 || tick >= n_ticks)
    throw std::runtime_error("dump-qp: tick " + std::to_string(tick) + " out of range [0, " +
                             std::to_string(n_ticks - 1) + "]");

  const GeneralizedState initial = standing_state(model, scenario);
  ContactSet contact_set = scenario_contacts(model, scenario);
  ControllerConfig config;
  config.torque_limit = scenario.torque_limit;
  config.control_dt = scenario.sim.timestep;
  config.estimate_external_force = scenario.external_force_estimation;
  config.use_implicit_desired_force = scenario.profile.kind == ForceProfile::Kind::Implicit;
  config.record_qp_problems = true;
  WholeBodyController controller(&model, kind, config, contact_set, {torso_task(model, scenario)});

  std::vector<SimContact> sim_contacts;
  for (const auto& c : contact_set.contacts) {
    SimContact sc;
    sc.frame = c.frame;
    sc.anchor = frame_kinematics(model, initial, c.frame).pose.translation();
    sim_contacts.push_back(sc);
  }
  const Eigen::VectorXd tau_limit = Eigen::VectorXd::Constant(model.n_joints(), scenario.torque_limit);

  GeneralizedState state = initial;
  for (int i = 0; i <= tick; ++i) {
    const double t = i * scenario.sim.timestep;
    Eigen::VectorXd lambda_desired(3 * controller.contacts().n_force());
    for (int seg = 0; seg < controller.contacts().n_force(); ++seg)
      lambda_desired.segment<3>(3 * seg) = profile_eval(scenario.profile, t);
    const TorqueCommand cmd = controller.tick(state, lambda_desired);
    if (i == tick) break;
    const SimStepResult step = sim_step(model, state, cmd.tau, sim_contacts, scenario.sim, tau_limit);
    if (!step.released.empty() || !step.touched_down.empty()) {
      ContactSet active_set;
      for (size_t k = 0; k < sim_contacts.size(); ++k)
        if (sim_contacts[k].active) active_set.contacts.push_back(contact_set.contacts[k]);
      controller.set_contacts(active_set);
    }
    state = step.next;
  }
  if (!controller.last_qp1() || !controller.last_qp2())
    throw std::runtime_error("dump-qp: no QP recorded at the requested tick");
  return {*controller.last_qp1(), *controller.last_qp2()};
}

Metrics compute_metrics(const SimulationLog& log, const ForceProfile& profile,
                        const Eigen::Isometry3d& desired_pose, double transient_skip_s) {
  if (log.ticks.empty()) throw std::runtime_error("compute_metrics: empty log");
  Metrics m;
  Eigen::Vector3d sq_sum = Eigen::Vector3d::Zero();
  int count = 0;
  for (const auto& rec : log.ticks) {
    if (rec.t < transient_skip_s) continue;
    const Eigen::Vector3d measured = log.force_contact >= 0
                                         ? Eigen::Vector3d(rec.lambda_measured.segment<3>(3 * log.force_contact))
                                         : Eigen::Vector3d::Zero();
    const Eigen::Vector3d err = measured - profile_eval(profile, rec.t);
    sq_sum += err.cwiseProduct(err);
    m.max_force_error = std::max(m.max_force_error, err.cwiseAbs().maxCoeff());
    m.max_base_position_deviation =
        std::max(m.max_base_position_deviation, (rec.base_position - desired_pose.translation()).norm());
    const Eigen::Matrix3d R = rpy_to_rotation(rec.base_rpy);
    const Eigen::AngleAxisd aa(desired_pose.linear().transpose() * R);
    m.max_base_orientation_deviation = std::max(m.max_base_orientation_deviation, std::abs(aa.angle()));
    m.torque_limit_violations += rec.torque_limit_violated ? 1 : 0;
    m.cone_violations += rec.measured_cone_violation > 1e-6 ? 1 : 0;
    ++count;
  }
  if (count == 0) throw std::runtime_error("compute_metrics: no samples after the transient window");
  m.rms_force_error = (sq_sum / count).cwiseSqrt();
  return m;
}

Eigen::Vector3d quaternion_to_rpy(const Eigen::Quaterniond& q) {
  const Eigen::Matrix3d R = q.toRotationMatrix();
  Eigen::Vector3d rpy;
  rpy.x() = std::atan2(R(2, 1), R(2, 2));
  rpy.y() = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  rpy.z() = std::atan2(R(1, 0), R(0, 0));
  return rpy;
}

void write_csv(const SimulationLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
  const int nj = log.ticks.empty() ? 0 : static_cast<int>(log.ticks.front().tau.size());
  out << "t,lam_fx,lam_fy,lam_fz,lam_d_x,lam_d_y,lam_d_z,base_x,base_y,base_z,base_roll,base_pitch,base_yaw";
  for (int j = 1; j <= nj; ++j) out << ",tau_" << j;
  out << ",qp1_status,qp2_status\n";

  char buf[32];
  auto put = [&](double v, bool lead_comma = true) {
    if (lead_comma) out << ',';
    format_field(buf, sizeof(buf), v);
    out << buf;
  };
  for (const auto& rec : log.ticks) {
    put(rec.t, false);
    const Eigen::Vector3d lam_f = log.force_contact >= 0
                                      ? Eigen::Vector3d(rec.lambda_measured.segment<3>(3 * log.force_contact))
                                      : Eigen::Vector3d::Zero();
    for (int a = 0; a < 3; ++a) put(lam_f(a));
    for (int a = 0; a < 3; ++a) put(rec.lambda_desired(a));
    for (int a = 0; a < 3; ++a) put(rec.base_position(a));
    for (int a = 0; a < 3; ++a) put(rec.base_rpy(a));
    for (int j = 0; j < nj; ++j) put(rec.tau(j));
    out << ',' << rec.qp1_status << ',' << rec.qp2_status << '\n';
  }
}

Metrics metrics_from_csv(const std::string& path, const ForceProfile& profile,
                         const Eigen::Isometry3d& desired_pose, double transient_skip_s) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("metrics_from_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metrics_from_csv: empty file");

  SimulationLog log;
  log.contact_frames = {"foot"};
  log.force_contact = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 13) throw std::runtime_error("metrics_from_csv: malformed row");
    TickRecord rec;
    rec.t = std::stod(fields[0]);
    rec.lambda_measured = Eigen::Vector3d(std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3]));
    rec.lambda_desired = Eigen::Vector3d(std::stod(fields[4]), std::stod(fields[5]), std::stod(fields[6]));
    rec.base_position = Eigen::Vector3d(std::stod(fields[7]), std::stod(fields[8]), std::stod(fields[9]));
    rec.base_rpy = Eigen::Vector3d(std::stod(fields[10]), std::stod(fields[11]), std::stod(fields[12]));
    rec.tau = Eigen::VectorXd::Zero(0);
    log.ticks.push_back(std::move(rec));
  }
  return compute_metrics(log, profile, desired_pose, transient_skip_s);
}

std::string metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["rms_force_error_n"] = {m.rms_force_error.x(), m.rms_force_error.y(), m.rms_force_error.z()};
  j["max_force_error_n"] = m.max_force_error;
  j["max_base_position_deviation_m"] = m.max_base_position_deviation;
  j["max_base_orientation_deviation_rad"] = m.max_base_orientation_deviation;
  j["torque_limit_violations"] = m.torque_limit_violations;
  j["cone_violations"] = m.cone_violations;
  return j.dump(2);
}

}  // namespace wbfc
