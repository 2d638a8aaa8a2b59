#include "nav/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nav {

using nlohmann::json;

Eigen::Vector3d PedestrianPath::positionAt(double t) const {
  Eigen::Vector3d dir = p1 - p0;
  double len = dir.norm();
  if (len < 1e-9 || speed <= 0.0) return p0;
  double x = std::fmod(phase + speed * t, 2 * len);
  if (x < 0) x += 2 * len;
  double d = x <= len ? x : 2 * len - x;  // triangle wave: ping-pong
  return p0 + dir / len * d;
}

Eigen::Vector3d PedestrianPath::velocityAt(double t) const {
  Eigen::Vector3d dir = p1 - p0;
  double len = dir.norm();
  if (len < 1e-9 || speed <= 0.0) return Eigen::Vector3d::Zero();
  double x = std::fmod(phase + speed * t, 2 * len);
  if (x < 0) x += 2 * len;
  double sign = x <= len ? 1.0 : -1.0;
  return sign * speed * dir / len;
}

void Scenario::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ScenarioError("scenario field '" + field + "': " + why);
  };
  for (size_t i = 0; i < pedestrians.size(); ++i) {
    const auto& p = pedestrians[i];
    std::string prefix = "pedestrians[" + std::to_string(i) + "]";
    if (p.speed < 0) fail(prefix + ".speed", "must be >= 0");
    if (p.radius <= 0) fail(prefix + ".radius", "must be > 0");
    if (p.height <= 0) fail(prefix + ".height", "must be > 0");
  }
  if (!(planning_period > 0)) fail("planning_period", "must be > 0");
  if (!(physics_dt > 0)) fail("physics_dt", "must be > 0");
  if (!(time_limit > 0)) fail("time_limit", "must be > 0");
  if (!(agent.radius > 0)) fail("agent.radius", "must be > 0");
  if (!(agent.v_max > 0)) fail("agent.v_max", "must be > 0");
  if (!(agent.a_max > 0)) fail("agent.a_max", "must be > 0");
  if (!(agent.sensing_range > 0)) fail("agent.sensing_range", "must be > 0");
  if (!(map.resolution > 0)) fail("map.resolution", "must be > 0");
  if (noise.miss_rate < 0 || noise.miss_rate > 1) fail("noise.miss_rate", "must be in [0,1]");
  if (noise.false_positive_rate < 0) fail("noise.false_positive_rate", "must be >= 0");
  if (noise.bbox_jitter_px < 0) fail("noise.bbox_jitter_px", "must be >= 0");
  for (size_t i = 0; i < static_boxes.size(); ++i) {
    if ((static_boxes[i].half_extents.array() <= 0).any()) {
      fail("static_boxes[" + std::to_string(i) + "].half_extents", "must be > 0");
    }
    if (static_boxes[i].expanded(agent.radius).contains(agent.start)) {
      fail("agent.start", "inside static geometry");
    }
  }
}

namespace {

Eigen::Vector3d vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) {
    throw ScenarioError("scenario field '" + field + "': expected [x, y, z]");
  }
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

json vec3ToJson(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybeVec(const json& j, const char* key, Eigen::Vector3d& out,
              const std::string& path) {
  if (j.contains(key)) out = vec3(j.at(key), path);
}

}  // namespace

Scenario parseScenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario parse error: ") + e.what());
  }

  Scenario sc;
  maybe(j, "name", sc.name);
  maybe(j, "planning_period", sc.planning_period);
  maybe(j, "physics_dt", sc.physics_dt);
  maybe(j, "time_limit", sc.time_limit);
  maybe(j, "seed", sc.seed);
  maybe(j, "prediction_enabled", sc.prediction_enabled);

  if (j.contains("static_boxes")) {
    for (size_t i = 0; i < j["static_boxes"].size(); ++i) {
      const auto& bj = j["static_boxes"][i];
      Box3D b;
      std::string prefix = "static_boxes[" + std::to_string(i) + "]";
      maybeVec(bj, "center", b.center, prefix + ".center");
      maybeVec(bj, "half_extents", b.half_extents, prefix + ".half_extents");
      if (bj.contains("yaw")) b.yaw = bj["yaw"].get<double>();
      sc.static_boxes.push_back(b);
    }
  }
  if (j.contains("pedestrians")) {
    for (size_t i = 0; i < j["pedestrians"].size(); ++i) {
      const auto& pj = j["pedestrians"][i];
      PedestrianPath p;
      std::string prefix = "pedestrians[" + std::to_string(i) + "]";
      maybeVec(pj, "p0", p.p0, prefix + ".p0");
      maybeVec(pj, "p1", p.p1, prefix + ".p1");
      maybe(pj, "speed", p.speed);
      maybe(pj, "phase", p.phase);
      maybe(pj, "radius", p.radius);
      maybe(pj, "height", p.height);
      sc.pedestrians.push_back(p);
    }
  }
  if (j.contains("agent")) {
    const auto& aj = j["agent"];
    maybeVec(aj, "start", sc.agent.start, "agent.start");
    maybeVec(aj, "goal", sc.agent.goal, "agent.goal");
    maybe(aj, "radius", sc.agent.radius);
    maybe(aj, "v_max", sc.agent.v_max);
    maybe(aj, "a_max", sc.agent.a_max);
    maybe(aj, "sensing_range", sc.agent.sensing_range);
    maybe(aj, "sensor_width", sc.agent.sensor_width);
    maybe(aj, "sensor_height", sc.agent.sensor_height);
  }
  if (j.contains("noise")) {
    const auto& nj = j["noise"];
    maybe(nj, "miss_rate", sc.noise.miss_rate);
    maybe(nj, "false_positive_rate", sc.noise.false_positive_rate);
    maybe(nj, "bbox_jitter_px", sc.noise.bbox_jitter_px);
  }
  if (j.contains("search")) {
    const auto& sj = j["search"];
    maybe(sj, "lambda", sc.search.lambda);
    maybe(sj, "lattice_step", sc.search.lattice_step);
    maybe(sj, "knot_dt", sc.search.knot_dt);
    maybe(sj, "max_expansions", sc.search.max_expansions);
    maybe(sj, "unknown_cost_weight", sc.search.unknown_cost_weight);
    maybe(sj, "time_weight", sc.search.time_weight);
  }
  if (j.contains("opt")) {
    const auto& oj = j["opt"];
    maybe(oj, "d_min", sc.opt.d_min);
    maybe(oj, "interaction_radius", sc.opt.interaction_radius);
    maybe(oj, "max_outer", sc.opt.max_outer);
    maybe(oj, "w_collision", sc.opt.weights.w_collision);
    maybe(oj, "w_accel", sc.opt.weights.w_accel);
    maybe(oj, "w_jerk", sc.opt.weights.w_jerk);
    maybe(oj, "w_snap", sc.opt.weights.w_snap);
  }
  if (j.contains("map")) {
    const auto& mj = j["map"];
    maybe(mj, "resolution", sc.map.resolution);
    maybeVec(mj, "size", sc.map.size, "map.size");
    maybe(mj, "truncation_distance", sc.map.truncation_distance);
  }
  if (j.contains("tracker")) {
    const auto& tj = j["tracker"];
    maybe(tj, "v_d", sc.tracker.v_d);
    maybe(tj, "k_classify", sc.tracker.k_classify);
    maybe(tj, "gate", sc.tracker.gate);
    maybe(tj, "mahalanobis_gate", sc.tracker.mahalanobis_gate);
    maybe(tj, "max_misses", sc.tracker.max_misses);
    maybe(tj, "merge_distance", sc.tracker.merge_distance);
    maybe(tj, "horizon", sc.tracker.horizon);
    maybe(tj, "step", sc.tracker.step);
    maybe(tj, "kappa", sc.tracker.kappa);
  }

  sc.validate();
  return sc;
}

Scenario loadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parseScenario(ss.str());
}

std::string scenarioToJson(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["planning_period"] = sc.planning_period;
  j["physics_dt"] = sc.physics_dt;
  j["time_limit"] = sc.time_limit;
  j["seed"] = sc.seed;
  j["prediction_enabled"] = sc.prediction_enabled;
  j["static_boxes"] = json::array();
  for (const auto& b : sc.static_boxes) {
    j["static_boxes"].push_back({{"center", vec3ToJson(b.center)},
                                 {"half_extents", vec3ToJson(b.half_extents)},
                                 {"yaw", b.yaw}});
  }
  j["pedestrians"] = json::array();
  for (const auto& p : sc.pedestrians) {
    j["pedestrians"].push_back({{"p0", vec3ToJson(p.p0)},
                                {"p1", vec3ToJson(p.p1)},
                                {"speed", p.speed},
                                {"phase", p.phase},
                                {"radius", p.radius},
                                {"height", p.height}});
  }
  j["agent"] = {{"start", vec3ToJson(sc.agent.start)},
                {"goal", vec3ToJson(sc.agent.goal)},
                {"radius", sc.agent.radius},
                {"v_max", sc.agent.v_max},
                {"a_max", sc.agent.a_max},
                {"sensing_range", sc.agent.sensing_range},
                {"sensor_width", sc.agent.sensor_width},
                {"sensor_height", sc.agent.sensor_height}};
  j["noise"] = {{"miss_rate", sc.noise.miss_rate},
                {"false_positive_rate", sc.noise.false_positive_rate},
                {"bbox_jitter_px", sc.noise.bbox_jitter_px}};
  j["search"] = {{"lambda", sc.search.lambda},
                 {"lattice_step", sc.search.lattice_step},
                 {"knot_dt", sc.search.knot_dt},
                 {"max_expansions", sc.search.max_expansions},
                 {"unknown_cost_weight", sc.search.unknown_cost_weight},
                 {"time_weight", sc.search.time_weight}};
  j["opt"] = {{"d_min", sc.opt.d_min},
              {"interaction_radius", sc.opt.interaction_radius},
              {"max_outer", sc.opt.max_outer},
              {"w_collision", sc.opt.weights.w_collision},
              {"w_accel", sc.opt.weights.w_accel},
              {"w_jerk", sc.opt.weights.w_jerk},
              {"w_snap", sc.opt.weights.w_snap}};
  j["map"] = {{"resolution", sc.map.resolution},
              {"size", vec3ToJson(sc.map.size)},
              {"truncation_distance", sc.map.truncation_distance}};
  j["tracker"] = {{"v_d", sc.tracker.v_d},
                  {"k_classify", sc.tracker.k_classify},
                  {"gate", sc.tracker.gate},
                  {"mahalanobis_gate", sc.tracker.mahalanobis_gate},
                  {"max_misses", sc.tracker.max_misses},
                  {"merge_distance", sc.tracker.merge_distance},
                  {"horizon", sc.tracker.horizon},
                  {"step", sc.tracker.step},
                  {"kappa", sc.tracker.kappa}};
  return j.dump(2);
}

void saveScenario(const Scenario& sc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ScenarioError("cannot write scenario file: " + path);
  out << scenarioToJson(sc) << "\n";
}

void applyOverride(Scenario& sc, const std::string& key_equals_value) {
  auto eq = key_equals_value.find('=');
  if (eq == std::string::npos) {
    throw ScenarioError("override must be key=value: " + key_equals_value);
  }
  std::string key = key_equals_value.substr(0, eq);
  std::string value = key_equals_value.substr(eq + 1);
  std::string pointer = "/" + key;
  for (auto& c : pointer) {
    if (c == '.') c = '/';
  }

  json j = json::parse(scenarioToJson(sc));
  json parsed_value;
  try {
    parsed_value = json::parse(value);  // numbers, booleans, arrays
  } catch (const json::parse_error&) {
    parsed_value = value;  // plain string
  }
  try {
    j.at(json::json_pointer(pointer)) = parsed_value;
  } catch (const json::exception&) {
    throw ScenarioError("unknown override key: " + key);
  }
  sc = parseScenario(j.dump());
}

}  // namespace nav
