#ifndef NAV_SCENARIO_HPP
#define NAV_SCENARIO_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "nav/occupancy_grid.hpp"
#include "nav/optimizer.hpp"
#include "nav/perception.hpp"
#include "nav/search.hpp"
#include "nav/tracking.hpp"
#include "nav/world.hpp"

namespace nav {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pedestrian walking back and forth between two endpoints at constant
// speed; phase is the initial distance already traveled along the cycle.
struct PedestrianPath {
  Eigen::Vector3d p0 = Eigen::Vector3d::Zero();
  Eigen::Vector3d p1 = Eigen::Vector3d::Zero();
  double speed = 1.0;
  double phase = 0.0;
  double radius = 0.3;
  double height = 1.7;

  Eigen::Vector3d positionAt(double t) const;
  Eigen::Vector3d velocityAt(double t) const;
  Cylinder shapeAt(double t) const {
    return Cylinder{positionAt(t), radius, height};
  }
};

struct AgentConfig {
  Eigen::Vector3d start = Eigen::Vector3d(0, 0, 1);
  Eigen::Vector3d goal = Eigen::Vector3d(10, 0, 1);
  double radius = 0.3;
  double v_max = 1.5;
  double a_max = 3.0;
  double sensing_range = 6.0;
  int sensor_width = 80;
  int sensor_height = 60;
};

struct Scenario {
  std::string name = "scenario";
  std::vector<Box3D> static_boxes;
  std::vector<PedestrianPath> pedestrians;
  AgentConfig agent;
  double planning_period = 0.1;
  double physics_dt = 0.02;
  double time_limit = 60.0;
  uint64_t seed = 1;
  bool prediction_enabled = true;
  DetectorNoiseModel noise;
  SearchConfig search;
  OptConfig opt;
  OccupancyGrid::Config map;
  TrackerConfig tracker;

  void validate() const;  // throws ScenarioError naming the field
};

Scenario loadScenario(const std::string& path);
Scenario parseScenario(const std::string& json_text);
std::string scenarioToJson(const Scenario& sc);
void saveScenario(const Scenario& sc, const std::string& path);

// Dotted-path override, e.g. "agent.v_max=2.0" or "noise.miss_rate=0.1".
void applyOverride(Scenario& sc, const std::string& key_equals_value);

}  // namespace nav

#endif
