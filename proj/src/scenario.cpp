#include "wbfc/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace wbfc {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw std::runtime_error("scenario: field '" + field + "' " + why);
}

double require_number(const json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_number()) fail(field, "missing or not a number");
  return j[field].get<double>();
}

Eigen::Vector3d require_vec3(const json& j, const std::string& field) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) fail(field, "missing or not a 3-vector");
  return Eigen::Vector3d(j[field][0].get<double>(), j[field][1].get<double>(), j[field][2].get<double>());
}

ForceProfile parse_profile(const json& j) {
  ForceProfile p;
  const std::string kind = j.value("kind", "");
  const char* axes[3] = {"x", "y", "z"};
  if (kind == "sinewave") {
    p.kind = ForceProfile::Kind::Sinewave;
    for (int a = 0; a < 3; ++a) {
      if (!j.contains(axes[a])) fail(std::string("force_profile.") + axes[a], "missing");
      const json& ja = j[axes[a]];
      p.amplitude(a) = require_number(ja, "amplitude_n");
      p.omega(a) = require_number(ja, "omega_rad_per_s");
      p.offset(a) = require_number(ja, "offset_n");
    }
  } else if (kind == "step") {
    p.kind = ForceProfile::Kind::Step;
    for (int a = 0; a < 3; ++a) {
      if (!j.contains(axes[a])) fail(std::string("force_profile.") + axes[a], "missing");
      const json& ja = j[axes[a]];
      if (!ja.contains("schedule") || !ja["schedule"].is_array())
        fail(std::string("force_profile.") + axes[a] + ".schedule", "missing or not an array");
      for (const auto& knot : ja["schedule"]) {
        if (!knot.is_array() || knot.size() != 2)
          fail(std::string("force_profile.") + axes[a] + ".schedule", "knots must be [time_s, value_n]");
        p.schedule[a].emplace_back(knot[0].get<double>(), knot[1].get<double>());
      }
    }
  } else if (kind == "constant") {
    p.kind = ForceProfile::Kind::Constant;
    p.constant = require_vec3(j, "value_n");
  } else if (kind == "implicit") {
    p.kind = ForceProfile::Kind::Implicit;
  } else {
    fail("force_profile.kind", "must be sinewave | step | constant | implicit");
  }
  p.validate();
  return p;
}

}  // namespace

std::string ForceProfile::name() const {
  switch (kind) {
    case Kind::Sinewave: return "sinewave";
    case Kind::Step: return "step";
    case Kind::Constant: return "constant";
    case Kind::Implicit: return "implicit";
  }
  return "unknown";
}

void ForceProfile::validate() const {
  if (!amplitude.allFinite() || !omega.allFinite() || !offset.allFinite() || !constant.allFinite())
    throw std::runtime_error("scenario: force profile has non-finite parameters");
  if (kind == Kind::Step) {
    for (int a = 0; a < 3; ++a) {
      if (schedule[a].empty()) throw std::runtime_error("scenario: step profile axis without knots");
      for (size_t i = 0; i < schedule[a].size(); ++i) {
        if (!std::isfinite(schedule[a][i].second))
          throw std::runtime_error("scenario: step profile has non-finite value");
        if (i > 0 && schedule[a][i].first <= schedule[a][i - 1].first)
          throw std::runtime_error("scenario: step schedule times must be strictly increasing");
      }
    }
  }
}

void SimConfig::validate() const {
  if (!(timestep > 0.0)) throw std::runtime_error("scenario: field 'sim.timestep_s' must be positive");
  if (duration < timestep) throw std::runtime_error("scenario: field 'sim.duration_s' must cover one step");
}

Eigen::Isometry3d Scenario::desired_pose() const {
  Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
  pose.translation() = desired_base_position;
  pose.linear() = (Eigen::AngleAxisd(desired_base_rpy.z(), Eigen::Vector3d::UnitZ()) *
                   Eigen::AngleAxisd(desired_base_rpy.y(), Eigen::Vector3d::UnitY()) *
                   Eigen::AngleAxisd(desired_base_rpy.x(), Eigen::Vector3d::UnitX()))
                      .toRotationMatrix();
  return pose;
}

void Scenario::validate() const {
  if (model_path.empty()) throw std::runtime_error("scenario: field 'robot_model' missing");
  std::ifstream model_file(model_path);
  if (!model_file) throw std::runtime_error("scenario: field 'robot_model' references missing file '" + model_path + "'");
  if (controller != "proposed" && controller != "howsm" && controller != "pidcwcu")
    throw std::runtime_error("scenario: field 'controller' must be proposed | howsm | pidcwcu");
  if (!(kp_linear > 0.0) || !(kp_angular > 0.0)) throw std::runtime_error("scenario: field 'kp_*' must be positive");
  if (!(kd_linear > 0.0) || !(kd_angular > 0.0)) throw std::runtime_error("scenario: field 'kd_*' must be positive");
  if (!(torque_limit > 0.0)) throw std::runtime_error("scenario: field 'torque_limit_nm' must be positive");
  if (friction_coefficient < 0.0) throw std::runtime_error("scenario: field 'friction_coefficient' must be >= 0");
  profile.validate();
  sim.validate();
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scenario: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("scenario: '" + path + "' is not valid JSON: " + e.what());
  }

  Scenario s;
  s.name = j.value("name", "scenario");
  if (!j.contains("robot_model") || !j["robot_model"].is_string()) fail("robot_model", "missing or not a string");
  s.model_path = j["robot_model"].get<std::string>();
  // Relative model paths resolve against the scenario file's directory.
  if (std::filesystem::path(s.model_path).is_relative())
    s.model_path = (std::filesystem::path(path).parent_path() / s.model_path).string();
  s.controller = j.value("controller", "proposed");
  if (!j.contains("force_foot") || !j["force_foot"].is_string()) fail("force_foot", "missing or not a string");
  s.force_foot = j["force_foot"].get<std::string>();

  if (!j.contains("desired_base_pose")) fail("desired_base_pose", "missing");
  s.desired_base_position = require_vec3(j["desired_base_pose"], "position_m");
  s.desired_base_rpy = require_vec3(j["desired_base_pose"], "rpy_rad");

  s.kp_linear = require_number(j, "kp_linear_n_per_m");
  s.kp_angular = require_number(j, "kp_angular_nm_per_rad");
  s.kd_linear = require_number(j, "kd_linear_ns_per_m");
  s.kd_angular = require_number(j, "kd_angular_nms_per_rad");
  s.torque_limit = require_number(j, "torque_limit_nm");
  s.friction_coefficient = require_number(j, "friction_coefficient");
  s.external_force_estimation = j.value("external_force_estimation", true);

  if (!j.contains("force_profile") || !j["force_profile"].is_object()) fail("force_profile", "missing");
  s.profile = parse_profile(j["force_profile"]);

  if (!j.contains("sim") || !j["sim"].is_object()) fail("sim", "missing");
  const json& js = j["sim"];
  s.sim.timestep = require_number(js, "timestep_s");
  s.sim.duration = require_number(js, "duration_s");
  s.sim.baumgarte_alpha = require_number(js, "baumgarte_alpha_per_s");
  s.sim.baumgarte_beta = require_number(js, "baumgarte_beta_per_s");
  s.sim.ground_height = require_number(js, "ground_height_m");
  s.sim.release_threshold = require_number(js, "contact_release_threshold_n");
  s.sim.seed = js.value("seed", 0ULL);

  s.output_dir = j.value("output_dir", "out");
  s.validate();
  return s;
}

}  // namespace wbfc
