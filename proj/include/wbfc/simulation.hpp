#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "wbfc/controllers.hpp"
#include "wbfc/rigid_body.hpp"
#include "wbfc/scenario.hpp"

namespace wbfc {

Eigen::Vector3d profile_eval(const ForceProfile& profile, double t);

struct SimContact {
  std::string frame;
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  bool active = true;
};

struct SimStepResult {
  GeneralizedState next;
  Eigen::VectorXd lambda;        // 3 per contact (inactive rows zero)
  std::vector<int> released;     // contacts released during this step
  std::vector<int> touched_down; // contacts re-established during this step
  bool torque_clamped = false;
};

// One 1 ms physics step: bilateral KKT contact solve with Baumgarte
// stabilization, semi-implicit Euler integration, unilateral release below
// -release_threshold. Throws on a singular KKT system. `external_force`, when
// given, is an additional generalized disturbance wrench (nv entries).
SimStepResult sim_step(const KinematicTree& model, const GeneralizedState& state,
                       const Eigen::VectorXd& tau, std::vector<SimContact>& contacts,
                       const SimConfig& config, const Eigen::VectorXd& tau_limit,
                       const Eigen::VectorXd* external_force = nullptr);

struct TickRecord {
  double t = 0.0;
  Eigen::VectorXd lambda_measured;  // 3 per contact frame, fixed layout for the run
  Eigen::Vector3d lambda_desired = Eigen::Vector3d::Zero();
  Eigen::Vector3d base_position = Eigen::Vector3d::Zero();
  Eigen::Vector3d base_rpy = Eigen::Vector3d::Zero();
  Vector6d base_twist = Vector6d::Zero();
  Eigen::VectorXd tau;
  std::string qp1_status = "na";
  std::string qp2_status = "na";
  bool fallback = false;
  bool torque_limit_violated = false;
  double measured_cone_violation = 0.0;  // of measured forces against the contact cones
  double qp_cone_violation = 0.0;        // of the QP-optimal affine-map forces
};

struct SimulationLog {
  std::vector<std::string> contact_frames;
  int force_contact = -1;  // index into contact_frames
  double timestep = 1e-3;
  double weight = 0.0;  // total weight, N
  std::vector<TickRecord> ticks;
  std::vector<std::pair<int, std::string>> releases;    // (tick, frame)
  std::vector<std::pair<int, std::string>> touchdowns;  // (tick, frame)
  std::string failure;                                  // nonempty if the run aborted
};

struct Metrics {
  Eigen::Vector3d rms_force_error = Eigen::Vector3d::Zero();  // force foot, per world axis, N
  double max_force_error = 0.0;                               // N
  double max_base_position_deviation = 0.0;                   // m
  double max_base_orientation_deviation = 0.0;                // rad
  int torque_limit_violations = 0;
  int cone_violations = 0;  // ticks with measured-force cone violations
};

// Closed-loop run of one controller against the scenario configuration.
SimulationLog run_experiment(const KinematicTree& model, const Scenario& scenario, ControllerKind kind);

// Initial configuration: base at the desired pose, feet placed on the ground by
// per-leg Newton iterations, zero velocity.
GeneralizedState standing_state(const KinematicTree& model, const Scenario& scenario);

ContactSet scenario_contacts(const KinematicTree& model, const Scenario& scenario);
ImpedanceTask torso_task(const KinematicTree& model, const Scenario& scenario);

Metrics compute_metrics(const SimulationLog& log, const ForceProfile& profile,
                        const Eigen::Isometry3d& desired_pose, double transient_skip_s = 1.0);

// Replays the closed loop up to and including `tick` and returns the two QP
// problems assembled there. Throws for out-of-range ticks or controllers
// without QPs.
std::pair<QPProblem, QPProblem> capture_qp_problems(const KinematicTree& model,
                                                    const Scenario& scenario, ControllerKind kind,
                                                    int tick);

void write_csv(const SimulationLog& log, const std::string& path);

// Recomputes the CSV-derivable metric fields (force errors and base deviations).
Metrics metrics_from_csv(const std::string& path, const ForceProfile& profile,
                         const Eigen::Isometry3d& desired_pose, double transient_skip_s = 1.0);

std::string metrics_to_json(const Metrics& metrics);

Eigen::Vector3d quaternion_to_rpy(const Eigen::Quaterniond& q);

}  // namespace wbfc
