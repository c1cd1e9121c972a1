#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace wbfc {

struct ForceProfile {
  // Implicit: the controller tracks the contact force that maintains the
  // constraint (pure motion control); the profile evaluates to zero.
  enum class Kind { Sinewave, Step, Constant, Implicit };
  Kind kind = Kind::Constant;

  // sinewave: value = offset + amplitude * sin(omega * t), per axis
  Eigen::Vector3d amplitude = Eigen::Vector3d::Zero();
  Eigen::Vector3d omega = Eigen::Vector3d::Zero();
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();

  // step: zero-order hold over (time, value) knots, per axis
  std::array<std::vector<std::pair<double, double>>, 3> schedule;

  Eigen::Vector3d constant = Eigen::Vector3d::Zero();

  std::string name() const;
  void validate() const;  // step knots strictly increasing, values finite
};

struct SimConfig {
  double timestep = 1e-3;  // s
  double duration = 30.0;  // s
  double baumgarte_alpha = 20.0;  // 1/s
  double baumgarte_beta = 20.0;   // 1/s
  double ground_height = 0.0;     // m
  double release_threshold = 1.0;  // N, contacts release below -threshold normal force
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scenario {
  std::string name;
  std::string model_path;
  std::string controller = "proposed";
  std::string force_foot = "LF_foot";
  Eigen::Vector3d desired_base_position = Eigen::Vector3d(0, 0, 0.57);
  Eigen::Vector3d desired_base_rpy = Eigen::Vector3d::Zero();
  double kp_linear = 2000.0;   // N/m
  double kp_angular = 2000.0;  // N*m/rad
  double kd_linear = 100.0;    // N*s/m
  double kd_angular = 100.0;   // N*m*s/rad
  double torque_limit = 80.0;  // N*m
  double friction_coefficient = 0.7;
  bool external_force_estimation = true;
  ForceProfile profile;
  SimConfig sim;
  std::string output_dir = "out";

  Eigen::Isometry3d desired_pose() const;
  void validate() const;
};

// Loads and validates a scenario file; errors name the offending field.
Scenario load_scenario(const std::string& path);

}  // namespace wbfc
